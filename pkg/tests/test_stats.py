from fractions import Fraction
from math import comb

import mpmath
import numpy as np
import pytest

from concept_transfer.stats import binomial_test, paired_t_test, t_test_one_sample


def _exact_binomial(k, n, p):
    probs = [comb(n, j) * p ** j * (1 - p) ** (n - j) for j in range(n + 1)]
    return sum(q for q in probs if q <= probs[k])


@pytest.mark.parametrize("p0", [Fraction(1, 2), Fraction(3, 10), Fraction(1, 10),
                                Fraction(77, 100), Fraction(1, 3), Fraction(9, 10)])
def test_binomial_matches_exhaustive_summation(p0):
    for n in range(0, 21):
        for k in range(n + 1):
            want = float(_exact_binomial(k, n, p0))
            got = binomial_test(k, n, float(p0))
            assert abs(got - min(want, 1.0)) <= 1e-12 * max(want, 1e-300), (k, n)


def test_binomial_hand_values():
    assert binomial_test(5, 10, 0.5) == 1.0
    assert abs(binomial_test(10, 10, 0.5) - 2 * 2 ** -10) < 1e-15
    assert binomial_test(0, 10, 0.5) == binomial_test(10, 10, 0.5)


def test_binomial_mirror_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 400))
        k = int(rng.integers(0, n + 1))
        p = float(rng.uniform(0.01, 0.99))
        a, b = binomial_test(k, n, p), binomial_test(n - k, n, 1 - p)
        assert abs(a - b) <= 1e-12 * max(a, b)


def test_binomial_large_n_tail():
    # 1735 changes of 2500 under p0 = 0.5 sits far in the tail
    p = binomial_test(1735, 2500, 0.5)
    assert 0 < p < 1e-80


@pytest.mark.parametrize("args", [(-1, 5, 0.5), (6, 5, 0.5), (1, 5, 0.0), (1, 5, 1.0)])
def test_binomial_rejects_bad_input(args):
    with pytest.raises(ValueError):
        binomial_test(*args)


def _oracle_two_sided(t, df):
    mpmath.mp.dps = 50
    x = mpmath.mpf(df) / (df + mpmath.mpf(t) ** 2)
    return float(mpmath.betainc(mpmath.mpf(df) / 2, mpmath.mpf(1) / 2, 0, x, regularized=True))


def test_t_test_matches_incomplete_beta_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 30))
        x = rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 2), size=n)
        mu0 = float(rng.uniform(-1, 1))
        res = t_test_one_sample(x, mu0)
        want = _oracle_two_sided(res.t, res.df)
        assert abs(res.p - want) <= 1e-9 * max(want, 1e-300)
        assert 0 < res.p <= 1


def test_t_test_hand_values():
    res = t_test_one_sample([0.6, 0.7, 0.8], 0.5)
    assert abs(res.t - 0.2 / (0.1 / np.sqrt(3))) < 1e-12
    assert abs(res.p - _oracle_two_sided(res.t, 2)) < 1e-12
    sym = t_test_one_sample([0.4, 0.6, 0.3, 0.7], 0.5)
    assert sym.t == 0 and sym.p == 1.0
    flipped = t_test_one_sample([0.4, 0.3, 0.2], 0.5)
    assert abs(flipped.t + res.t) < 1e-12 and abs(flipped.p - res.p) < 1e-15


def test_t_p_monotone_in_abs_t():
    ps = [t_test_one_sample([0.0, 1.0, shift], 0.0).p for shift in np.linspace(1, 20, 40)]
    ts = [t_test_one_sample([0.0, 1.0, shift], 0.0).t for shift in np.linspace(1, 20, 40)]
    order = np.argsort(np.abs(ts))
    assert all(ps[order[i]] >= ps[order[i + 1]] for i in range(len(order) - 1))


def test_t_test_errors_and_one_sided():
    with pytest.raises(ValueError):
        t_test_one_sample([1.0], 0)
    with pytest.raises(ValueError):
        t_test_one_sample([2.0, 2.0, 2.0], 0)
    res = paired_t_test([0.9, 0.8, 0.85], [0.1, 0.2, 0.3])
    two = t_test_one_sample(np.array([0.8, 0.6, 0.55]), 0.0)
    assert abs(res.p - two.p / 2) < 1e-12
    assert paired_t_test([0.1, 0.2, 0.3], [0.9, 0.8, 0.85]).p > 0.9
