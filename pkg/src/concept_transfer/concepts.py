"""Concept discovery: mini-batch k-means over encoder features.

Also the partition-agreement metrics (ARI, NMI) and the stability probes
built on them.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb, log

import numpy as np

from . import go_env
from .encoder import Encoder, encode, head_logits
from .nn import masked_softmax

DEFAULT_K = 64
BATCH_SIZE = 256
MINIBATCH_PASSES = 10
MAX_LLOYD_ITERS = 100


@dataclass(frozen=True)
class ConceptModel:
    centroids: np.ndarray  # (k, d) float32
    k: int
    fit_seed: int
    inertia: float
    feature_count: int
    lloyd_inertia: tuple[float, ...] = ()

    def __post_init__(self):
        if self.centroids.ndim != 2 or self.centroids.shape[0] != self.k:
            raise ValueError("centroids must be a (k, d) matrix")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("non-finite centroid")

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


class _HeadSampler:
    def __init__(self, e: Encoder):
        self.e = e

    def __call__(self, s: go_env.BoardState, rng: np.random.Generator) -> int:
        logits = head_logits(self.e, go_env.observe(s)).astype(np.float64)
        probs = masked_softmax(logits, go_env.legal_mask(s))
        return int(rng.choice(go_env.NUM_ACTIONS, p=probs / probs.sum()))


def collect_states(e: Encoder | None, n_games: int, seed: int) -> list[go_env.BoardState]:
    if n_games < 1:
        raise ValueError("n_games must be >= 1")
    if e is not None and e.has_head:
        player = _HeadSampler(e)
    else:
        player = go_env.heuristic_opponent
    states: list[go_env.BoardState] = []
    for i in range(n_games):
        go_env.play_game(player, player, go_env.game_rng(seed, i),
                         on_move=lambda s, a: states.append(s))
    return states


def collect_features(e: Encoder, n_games: int, seed: int) -> np.ndarray:
    """Features of every state visited in ``n_games`` self-play games.

    The encoder's action head plays both sides, sampling from its masked
    softmax (greedy self-play would repeat one game); an encoder without a
    head falls back to heuristic-vs-heuristic games.
    """
    states = collect_states(e, n_games, seed)
    return encode(e, np.stack([go_env.observe(s) for s in states]))


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * (x @ c.T) + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[int(rng.integers(n))]]
    d2 = ((x - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(n, p=d2 / total)) if total > 0 else int(rng.integers(n))
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(1))
    return np.array(centers)


def _inertia(x: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    return float(((x - centers[labels]) ** 2).sum())


def fit_kmeans(
    features,
    k: int = DEFAULT_K,
    seed: int = 42,
    batch_size: int = BATCH_SIZE,
    passes: int = MINIBATCH_PASSES,
    max_iter: int = MAX_LLOYD_ITERS,
) -> ConceptModel:
    """k-means++ seeding, mini-batch passes, then full-batch Lloyd polish.

    The Lloyd loop stops at an assignment fixpoint or after ``max_iter``
    iterations; an empty cluster is re-seeded at the point farthest from
    its nearest centroid.
    """
    x = np.asarray(features, dtype=np.float64)
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError("insufficient data")
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = _kmeans_pp(x, k, rng)

    counts = np.zeros(k)
    for _ in range(passes):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            batch = x[order[start:start + batch_size]]
            labels = np.argmin(_sq_dists(batch, centers), axis=1)
            n_c = np.bincount(labels, minlength=k)
            sums = np.zeros_like(centers)
            np.add.at(sums, labels, batch)
            counts += n_c
            hit = n_c > 0
            centers[hit] += (sums[hit] - n_c[hit, None] * centers[hit]) / counts[hit, None]

    history = []
    prev = None
    converged = False
    for _ in range(max_iter):
        labels = np.argmin(_sq_dists(x, centers), axis=1)
        history.append(_inertia(x, centers, labels))
        if prev is not None and np.array_equal(labels, prev):
            converged = True
            break
        prev = labels
        n_c = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        hit = n_c > 0
        centers[hit] = sums[hit] / n_c[hit, None]
        if not hit.all():
            nearest = ((x - centers[labels]) ** 2).sum(1)
            far = np.argsort(-nearest, kind="stable")
            for j, c in enumerate(np.flatnonzero(~hit)):
                centers[c] = x[far[j]]
    if not converged:
        labels = np.argmin(_sq_dists(x, centers), axis=1)
        history.append(_inertia(x, centers, labels))

    return ConceptModel(
        centroids=centers.astype(np.float32),
        k=k,
        fit_seed=seed,
        inertia=history[-1],
        feature_count=n,
        lloyd_inertia=tuple(history),
    )


def assign(m: ConceptModel, f) -> int:
    """Index of the nearest centroid; lowest index wins ties."""
    d = ((m.centroids.astype(np.float64) - np.asarray(f, dtype=np.float64)) ** 2).sum(1)
    return int(np.argmin(d))


def assign_batch(m: ConceptModel, features, chunk: int = 2048) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    c = m.centroids.astype(np.float64)
    out = np.empty(len(x), dtype=np.int64)
    for start in range(0, len(x), chunk):
        part = x[start:start + chunk]
        d = ((part[:, None, :] - c[None, :, :]) ** 2).sum(2)
        out[start:start + chunk] = np.argmin(d, axis=1)
    return out


# ------------------------------------------------------------------ metrics

def _contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("label lists must have equal length")
    if len(a) < 2:
        raise ValueError("need at least two labels")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def ari(a, b) -> float:
    """Adjusted Rand index from the contingency table."""
    table = _contingency(a, b)
    n = int(table.sum())
    index = sum(comb(int(v), 2) for v in table.ravel())
    sum_a = sum(comb(int(v), 2) for v in table.sum(1))
    sum_b = sum(comb(int(v), 2) for v in table.sum(0))
    expected = sum_a * sum_b / comb(n, 2)
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


def _entropy(counts: np.ndarray, n: int) -> float:
    return -sum(c / n * log(c / n) for c in counts if c > 0)


def nmi(a, b) -> float:
    """Mutual information over the arithmetic mean of the two entropies.

    Zero whenever either partition has zero entropy.
    """
    table = _contingency(a, b)
    n = int(table.sum())
    row = table.sum(1)
    col = table.sum(0)
    h_a = _entropy(row, n)
    h_b = _entropy(col, n)
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    mi = 0.0
    for i, j in zip(*np.nonzero(table)):
        nij = int(table[i, j])
        mi += nij / n * log(n * nij / (int(row[i]) * int(col[j])))
    return min(max(mi / ((h_a + h_b) / 2), 0.0), 1.0)


def perturbation_robustness(m: ConceptModel, features, sigma: float, trials: int,
                            seed: int) -> float:
    """Fraction of (feature, trial) pairs whose concept survives Gaussian noise."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    x = np.asarray(features, dtype=np.float64)
    base = assign_batch(m, x)
    rng = np.random.Generator(np.random.PCG64(seed))
    agree = 0
    for _ in range(trials):
        noisy = x + rng.normal(0.0, sigma, size=x.shape)
        agree += int((assign_batch(m, noisy) == base).sum())
    return agree / (trials * len(x))


@dataclass(frozen=True)
class Stability:
    mean_ari: float
    std_ari: float
    mean_nmi: float
    std_nmi: float


def cross_seed_stability(features, k: int, seeds) -> Stability:
    """Pairwise ARI/NMI between fits that differ only in their seed."""
    seeds = list(seeds)
    if len(seeds) < 2:
        raise ValueError("need at least two seeds")
    x = np.asarray(features)
    labels = [assign_batch(fit_kmeans(x, k, s), x) for s in seeds]
    aris, nmis = [], []
    for i, j in combinations(range(len(seeds)), 2):
        aris.append(ari(labels[i], labels[j]))
        nmis.append(nmi(labels[i], labels[j]))
    return Stability(float(np.mean(aris)), float(np.std(aris)),
                     float(np.mean(nmis)), float(np.std(nmis)))
