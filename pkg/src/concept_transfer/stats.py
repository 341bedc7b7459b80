"""Exact binomial test and one-sample Student t-test."""
from __future__ import annotations

from math import exp, fsum, lgamma, log, log1p, sqrt
from typing import NamedTuple

import numpy as np
from scipy.special import betainc

# relative slack when comparing outcome probabilities against the observed one
_REL_TOL = 1e-7


def binom_logpmf(k: int, n: int, p: float) -> float:
    return (lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)
            + k * log(p) + (n - k) * log1p(-p))


def binomial_test(successes: int, n: int, p0: float) -> float:
    """Exact two-sided p-value.

    Sums the probabilities of every outcome no more likely than the
    observed count, working in log space.
    """
    if n < 0 or not 0 <= successes <= n:
        raise ValueError("need 0 <= successes <= n")
    if not 0.0 < p0 < 1.0:
        raise ValueError("need 0 < p0 < 1")
    logps = [binom_logpmf(k, n, p0) for k in range(n + 1)]
    cutoff = logps[successes] + log1p(_REL_TOL)
    inside = fsum(exp(lp) for lp in logps if lp <= cutoff)
    if inside < 0.5:
        return inside
    # large p-values: one minus the (small) mass of strictly likelier outcomes
    return max(0.0, 1.0 - fsum(exp(lp) for lp in logps if lp > cutoff))


class TTest(NamedTuple):
    t: float
    p: float
    df: int


def student_t_sf(t: float, df: int) -> float:
    """Upper tail P(T > t) of Student's t via the regularised incomplete beta."""
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return float(tail if t >= 0 else 1.0 - tail)


def t_test_one_sample(samples, mu0: float, alternative: str = "two-sided") -> TTest:
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    sd = float(np.std(x, ddof=1))
    if sd == 0.0:
        raise ValueError("zero variance")
    t = (float(x.mean()) - mu0) / (sd / sqrt(n))
    df = n - 1
    if alternative == "two-sided":
        p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    elif alternative == "greater":
        p = student_t_sf(t, df)
    elif alternative == "less":
        p = student_t_sf(-t, df)
    else:
        raise ValueError(f"unknown alternative: {alternative}")
    return TTest(t, min(p, 1.0), df)


def paired_t_test(a, b, alternative: str = "greater") -> TTest:
    """One-sample t-test on the differences ``a - b`` against zero."""
    return t_test_one_sample(np.asarray(a, float) - np.asarray(b, float), 0.0, alternative)
