"""Acceptance suite: one test (or small group) per numbered criterion.

Each criterion prints a PASS/FAIL line in the terminal summary.  Trained
agents are built once per session with the default configuration.
"""
import itertools
import time
from fractions import Fraction

import numpy as np
import pytest

from concept_transfer import alignment as A
from concept_transfer import analysis as An
from concept_transfer import bottleneck as B
from concept_transfer import concepts as C
from concept_transfer import go_env as g
from concept_transfer.config import RunConfig
from concept_transfer.pipeline import build_agent
from concept_transfer.stats import binomial_test, paired_t_test, t_test_one_sample

from cli_pipeline import run_pipeline, tree_bytes
from go_fixtures import FIXTURES
from test_stats import _exact_binomial, _oracle_two_sided

CFG = RunConfig()
EVAL_SEEDS, EVAL_GAMES, EVAL_BASE = 5, 100, 1000

# fine-tune head start protocol, fixed before any run was inspected
FT_GENERATIONS = 60
FT_THRESHOLD = 0.30
FT_WINDOW = 3


def detail(record_property, text):
    record_property("detail", text)
    print(text)


# ------------------------------------------------------------ trained agents

@pytest.fixture(scope="session")
def agent_a():
    """Strong source: full budget, behaviour cloning then REINFORCE."""
    return build_agent(CFG, seed=0).agent


@pytest.fixture(scope="session")
def agent_b():
    """Independent target: different seed and data, no REINFORCE stage."""
    return build_agent(CFG, seed=1, reinforce=False).agent


@pytest.fixture(scope="session")
def agent_weak():
    """Weak source: 10% of every training budget."""
    return build_agent(CFG, seed=2, budget=0.1).agent


@pytest.fixture(scope="session")
def agent_k16():
    return build_agent(CFG, seed=3, k=16).agent


def _paired_eval(ag_hi, ag_lo):
    hi = B.evaluate(ag_hi, "heuristic", EVAL_SEEDS, EVAL_GAMES, EVAL_BASE)
    lo = B.evaluate(ag_lo, "heuristic", EVAL_SEEDS, EVAL_GAMES, EVAL_BASE)
    return hi, lo, paired_t_test(hi.win_rates, lo.win_rates, "greater")


# ------------------------------------------------------------------ criteria

def _brute_min(cost, perms):
    n = cost.shape[0]
    return cost[np.arange(n), perms].sum(axis=1).min()


@pytest.mark.criterion(1)
def test_c01_hungarian_oracle(record_property):
    rng = np.random.default_rng(2024)
    perms = {n: np.array(list(itertools.permutations(range(n)))) for n in range(2, 8)}
    mismatches, elapsed = 0, 0.0
    for trial in range(1000):
        n = int(rng.integers(2, 8))
        cost = (rng.integers(0, 5, size=(n, n)).astype(float) if trial % 2
                else rng.normal(size=(n, n)))
        t0 = time.perf_counter()
        assign = A.hungarian(cost)
        elapsed += time.perf_counter() - t0
        got = cost[np.arange(n), assign].sum()
        mismatches += got != _brute_min(cost, perms[n])
    detail(record_property, f"1000 matrices, {mismatches} mismatches, hungarian {elapsed:.2f}s")
    assert mismatches == 0 and elapsed < 10


@pytest.mark.criterion(2)
def test_c02_self_transfer_identity(agent_a, record_property):
    t0 = time.perf_counter()
    cents = agent_a.concept_model.centroids
    d = ((cents[:, None, :] - cents[None, :, :]) ** 2).sum(-1)
    assert (d + np.eye(len(cents)) > 0).all(), "centroids must be pairwise distinct"
    amap = A.align(agent_a.concept_model, agent_a.concept_model, "hungarian")
    assert amap.as_permutation().tolist() == list(range(agent_a.k))
    moved = A.transfer(agent_a, agent_a, "hungarian")
    states = []
    for i in range(100):
        player = B.AgentPlayer(agent_a)
        black, white = (player, g.heuristic_opponent) if i % 2 == 0 else (g.heuristic_opponent, player)
        g.play_game(black, white, g.game_rng(77, i), on_move=lambda s, a: states.append(s))
    differ = sum(B.act(agent_a, s) != B.act(moved, s) for s in states)
    elapsed = time.perf_counter() - t0
    detail(record_property, f"identity map, {differ} differing actions over {len(states)} states, "
           f"{elapsed:.1f}s")
    assert differ == 0 and elapsed < 60


@pytest.mark.criterion(3)
def test_c03_procrustes_recovery(agent_a, record_property):
    t0 = time.perf_counter()
    src = agent_a.concept_model
    q, _ = np.linalg.qr(np.random.default_rng(3).normal(size=(src.dim, src.dim)))
    rotated = C.ConceptModel((src.centroids.astype(np.float64) @ q).astype(np.float32),
                             src.k, 0, 0.0, src.feature_count)
    amap = A.align(src, rotated, "procrustes")
    elapsed = time.perf_counter() - t0
    identity = amap.as_permutation().tolist() == list(range(src.k))
    detail(record_property, f"identity={identity}, mean similarity "
           f"{amap.mean_matched_similarity:.6f}, {elapsed:.2f}s")
    assert identity and amap.mean_matched_similarity >= 0.999 and elapsed < 5


@pytest.mark.criterion(4)
def test_c04_hungarian_beats_identity(agent_a, agent_b, record_property):
    hung, ident, res = _paired_eval(A.transfer(agent_a, agent_b, "hungarian"),
                                    A.transfer(agent_a, agent_b, "identity"))
    detail(record_property, f"hungarian {hung.mean:.3f} vs identity {ident.mean:.3f}, "
           f"paired t={res.t:.2f} p={res.p:.2g}")
    assert res.p < 0.05


@pytest.mark.criterion(5)
def test_c05_strong_source_beats_weak(agent_a, agent_weak, agent_b, record_property):
    strong, weak, res = _paired_eval(A.transfer(agent_a, agent_b, "hungarian"),
                                     A.transfer(agent_weak, agent_b, "hungarian"))
    detail(record_property, f"strong {strong.mean:.3f} vs weak {weak.mean:.3f}, "
           f"paired t={res.t:.2f} p={res.p:.2g}")
    assert res.p < 0.05


@pytest.mark.criterion(6)
def test_c06_intervention(agent_a, record_property):
    t0 = time.perf_counter()
    rep = An.intervene(agent_a, 500, 5, seed=6)
    control = An.intervene(agent_a, 500, 5, seed=6, null_draws=100,
                           alternatives_fn=lambda c, k, n, rng: [c] * n)
    elapsed = time.perf_counter() - t0
    detail(record_property, f"change rate {rep.change_rate:.3f} vs p0 {rep.p0:.3f}, "
           f"p={rep.p_value:.2g}, self-override changes {control.change_count}, {elapsed:.0f}s")
    assert rep.change_rate > rep.p0 and rep.p_value < 1e-6
    assert control.change_count == 0 and elapsed < 600


@pytest.mark.criterion(7)
def test_c07_ablation_concentration(agent_k16, record_property):
    t0 = time.perf_counter()
    rep = An.ablate(agent_k16, "all", games_per_concept=200, seed=7)
    drops = rep.drops()
    order = np.argsort(drops, kind="stable")
    top = rep.rows[int(order[-1])]
    # the upper of the two middle rows, the conservative reading of the median
    mid = rep.rows[int(order[len(order) // 2])]
    gap, se = rep.paired_difference(top, mid)
    elapsed = time.perf_counter() - t0
    detail(record_property, f"baseline {rep.baseline_win_rate:.3f}, max drop {rep.drop(top):.3f} "
           f"(concept {top.concepts[0]}, freq {top.frequency:.2f}), median drop "
           f"{rep.drop(mid):.3f}, gap {gap:.3f} = {gap / se if se else float('inf'):.1f} SE, "
           f"{elapsed:.0f}s")
    assert se > 0 and gap >= 3 * se and elapsed < 1800


def _first_crossing(curve, threshold, window):
    trailing = np.convolve(curve, np.ones(window) / window, mode="valid")
    hits = np.nonzero(trailing >= threshold)[0]
    return int(hits[0]) + window if len(hits) else None


@pytest.mark.criterion(8)
def test_c08_finetune_head_start(agent_a, agent_b, record_property):
    t0 = time.perf_counter()
    moved = A.transfer(agent_a, agent_b, "hungarian")
    scratch = B.with_policy(agent_b, B.random_policy(agent_b.k, 8))
    _, curve_t = B.finetune_reinforce(moved, FT_GENERATIONS, CFG.rl_games, CFG.rl_lr, 8)
    _, curve_s = B.finetune_reinforce(scratch, FT_GENERATIONS, CFG.rl_games, CFG.rl_lr, 8)
    gen_t = _first_crossing(curve_t, FT_THRESHOLD, FT_WINDOW)
    gen_s = _first_crossing(curve_s, FT_THRESHOLD, FT_WINDOW)
    elapsed = time.perf_counter() - t0
    detail(record_property, f"threshold {FT_THRESHOLD} ({FT_WINDOW}-generation mean): "
           f"transferred at {gen_t}, scratch at {gen_s} of {FT_GENERATIONS}; first-generation "
           f"win rates {curve_t[0]:.2f} vs {curve_s[0]:.2f}, {elapsed:.0f}s")
    assert gen_t is not None
    assert gen_s is None or gen_t <= gen_s
    assert elapsed < 1800


@pytest.mark.criterion(9)
def test_c09_binomial_exhaustive(record_property):
    worst = 0.0
    for p0 in (Fraction(1, 2), Fraction(1, 5), Fraction(2, 3), Fraction(19, 20)):
        for n in range(21):
            for k in range(n + 1):
                want = min(float(_exact_binomial(k, n, p0)), 1.0)
                worst = max(worst, abs(binomial_test(k, n, float(p0)) - want) / want)
    detail(record_property, f"binomial worst relative error {worst:.1e}")
    assert worst <= 1e-12


@pytest.mark.criterion(9)
def test_c09_t_test_oracle(record_property):
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(rng.uniform(-1, 1), rng.uniform(0.1, 3), size=int(rng.integers(2, 40)))
        res = t_test_one_sample(x, float(rng.uniform(-1, 1)))
        want = _oracle_two_sided(res.t, res.df)
        worst = max(worst, abs(res.p - want))
    detail(record_property, f"t-test worst abs error {worst:.1e}")
    assert worst <= 1e-9


@pytest.mark.criterion(9)
def test_c09_ari_nmi_fixtures(record_property):
    from math import comb, log
    # labels with contingency [[2, 1], [0, 3]]
    a, b = [0, 0, 0, 1, 1, 1], [0, 0, 1, 1, 1, 1]
    index = comb(2, 2) + comb(3, 2)
    rows = 2 * comb(3, 2)
    cols = comb(2, 2) + comb(4, 2)
    expected = rows * cols / comb(6, 2)
    ari = (index - expected) / ((rows + cols) / 2 - expected)
    mi = (2 / 6) * log((2 / 6) / (3 / 6 * 2 / 6)) + (1 / 6) * log((1 / 6) / (3 / 6 * 4 / 6)) \
        + (3 / 6) * log((3 / 6) / (3 / 6 * 4 / 6))
    h_a = log(2)
    h_b = -(2 / 6 * log(2 / 6) + 4 / 6 * log(4 / 6))
    nmi = mi / ((h_a + h_b) / 2)
    err = max(abs(C.ari(a, b) - ari), abs(C.nmi(a, b) - nmi),
              abs(C.ari([0, 0, 1, 1], [0, 1, 0, 1]) + 0.5))
    detail(record_property, f"ARI/NMI fixture error {err:.1e}")
    assert err <= 1e-12


@pytest.mark.criterion(10)
def test_c10_clustering_properties(agent_a, record_property):
    rng = np.random.default_rng(10)
    x = rng.normal(size=(500, 6))
    one = C.fit_kmeans(x, 1, 0)
    mean_err = float(np.abs(one.centroids[0] - x.mean(0)).max())
    fits = [C.fit_kmeans(rng.normal(size=(300, 4)) * rng.uniform(0.5, 3), k, s)
            for k, s in itertools.product((2, 5, 9), (0, 1, 2))]
    fits += [agent_a.concept_model]
    monotone = all(np.all(np.diff(f.lloyd_inertia) <= 0) for f in fits)
    m = C.fit_kmeans(x, 7, 3)
    queries = rng.normal(size=(1000, 6)) * 2
    brute = [int(np.argmin([float(((q - c) ** 2).sum()) for c in m.centroids.astype(np.float64)]))
             for q in queries]
    assign_ok = [C.assign(m, q) for q in queries] == brute
    robust = C.perturbation_robustness(m, x, 0.0, 3, 0)
    detail(record_property, f"k=1 mean error {mean_err:.1e}, monotone={monotone} over "
           f"{len(fits)} fits, assign==brute {assign_ok}, sigma=0 robustness {robust}")
    assert mean_err <= 1e-5 and monotone and assign_ok and robust == 1.0


@pytest.mark.criterion(11)
def test_c11_rules_fixtures(record_property):
    for fn in FIXTURES.values():
        fn()
    detail(record_property, f"{len(FIXTURES)} fixtures pass")
    assert len(FIXTURES) >= 25


def _check_state(s):
    for grp in s.groups():
        assert grp.liberties, "group without liberties on the board"
    if s.ko_point is not None:
        assert s.stones[s.ko_point] == g.EMPTY
    assert s.move_count <= g.MAX_MOVES


@pytest.mark.criterion(11)
def test_c11_random_fuzz(record_property):
    t0 = time.perf_counter()
    for i in range(10_000):
        s = g.new_game()
        rng = g.game_rng(1111, i)
        seen = {s.board_hash}
        while not s.terminal:
            a = g.random_opponent(s, rng)
            assert g.legal_mask(s)[a]
            s = g.apply(s, a)
            _check_state(s)
            if a != g.PASS:
                assert s.board_hash not in seen, "positional superko violated"
            seen.add(s.board_hash)
        black, white, winner = g.score(s)
        assert black + white - g.KOMI <= g.NUM_POINTS and winner in (g.BLACK, g.WHITE)
    detail(record_property, f"10000 random games, no violations, {time.perf_counter() - t0:.0f}s")


@pytest.mark.criterion(12)
def test_c12_pipeline_determinism(tmp_path, capsys, record_property):
    r1, r2 = tmp_path / "first", tmp_path / "second"
    r1.mkdir()
    r2.mkdir()
    run_pipeline(r1, capsys)
    run_pipeline(r2, capsys)
    t1, t2 = tree_bytes(r1), tree_bytes(r2)
    differing = sorted(k for k in t1.keys() | t2.keys() if t1.get(k) != t2.get(k))
    detail(record_property, f"{len(t1)} files across every CLI stage, {len(differing)} differ")
    assert not differing
