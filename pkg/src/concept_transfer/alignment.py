"""Concept-space alignment between two agents and zero-shot policy remapping."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bottleneck import Agent, BottleneckPolicy
from .concepts import ConceptModel

METHODS = ("hungarian", "greedy_nn", "procrustes", "random", "identity")
_BIJECTIVE = {"hungarian", "procrustes", "random", "identity"}


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity matrix; rows with zero norm score 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("feature dimensions differ")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    an = np.divide(a, na[:, None], out=np.zeros_like(a), where=na[:, None] > 0)
    bn = np.divide(b, nb[:, None], out=np.zeros_like(b), where=nb[:, None] > 0)
    return np.clip(an @ bn.T, -1.0, 1.0)


def similarity(a: ConceptModel, b: ConceptModel) -> np.ndarray:
    if a.k != b.k:
        raise ValueError("concept models have different k")
    if a.dim != b.dim:
        raise ValueError("concept models have different feature dimensions")
    return cosine_similarity(a.centroids, b.centroids)


# ---------------------------------------------------------------- hungarian

def _solve(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest augmenting path assignment with dual potentials.

    Returns (row -> column assignment, row potentials, column potentials)
    such that cost[i, j] - u[i] - v[j] >= 0 everywhere and == 0 on the
    assignment.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # column j (1-based) -> row (1-based)
    way = np.zeros(n + 1, dtype=np.int64)
    c = np.zeros((n + 1, n + 1))
    c[1:, 1:] = cost
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[match[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    assignment = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        assignment[match[j] - 1] = j - 1
    return assignment, u[1:], v[1:]


def _lexicographic_min(assignment: np.ndarray, tight: np.ndarray) -> np.ndarray:
    """Smallest assignment vector (row by row) among perfect matchings of
    the ``tight`` edge set, starting from the perfect matching ``assignment``."""
    n = len(assignment)
    row_of = np.empty(n, dtype=np.int64)
    row_of[assignment] = np.arange(n)
    assignment = assignment.copy()
    edges = [np.flatnonzero(tight[i]) for i in range(n)]

    def augment(row: int, target: int, first_free: int, seen: set) -> bool:
        # move `row` off its column onto another tight column, ending at `target`
        for col in edges[row]:
            if col in seen:
                continue
            seen.add(col)
            owner = row_of[col]
            if col == target or (owner >= first_free and augment(owner, target, first_free, seen)):
                assignment[row] = col
                row_of[col] = row
                return True
        return False

    for i in range(n):
        for j in edges[i]:
            if j == assignment[i]:
                break
            owner = row_of[j]
            if owner < i:
                continue
            saved = assignment.copy(), row_of.copy()
            target = assignment[i]
            # give column j to row i, then re-home its former owner among later rows
            assignment[i] = j
            row_of[j] = i
            if augment(owner, target, i + 1, {j}):
                break
            assignment[:], row_of[:] = saved
    return assignment


def hungarian(cost) -> np.ndarray:
    """Minimum-cost permutation; ``result[i]`` is the column given to row i.

    Among equal-cost optima the lexicographically smallest assignment
    vector is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost matrix must be square")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has non-finite entries")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    assignment, u, v = _solve(cost)
    scale = max(1.0, float(np.abs(cost).max()))
    tight = (cost - u[:, None] - v[None, :]) <= 1e-10 * scale
    tight[np.arange(n), assignment] = True
    result = _lexicographic_min(assignment, tight)
    if sorted(result.tolist()) != list(range(n)):
        raise AssertionError("assignment is not a bijection")
    return result


def assignment_cost(cost, assignment) -> float:
    cost = np.asarray(cost, dtype=np.float64)
    return float(sum(cost[i, j] for i, j in enumerate(assignment)))


# ---------------------------------------------------------------- alignment

@dataclass(frozen=True)
class AlignmentMap:
    """(source concept, target concept) pairs."""
    pairs: tuple[tuple[int, int], ...]
    method: str
    mean_matched_similarity: float
    k: int
    seed: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown alignment method {self.method!r}")
        if self.method in _BIJECTIVE:
            src = sorted(i for i, _ in self.pairs)
            tgt = sorted(j for _, j in self.pairs)
            if src != list(range(self.k)) or tgt != list(range(self.k)):
                raise ValueError(f"{self.method} map must be a bijection")

    def as_permutation(self) -> np.ndarray:
        perm = np.empty(self.k, dtype=np.int64)
        for i, j in self.pairs:
            perm[i] = j
        return perm

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "k": self.k,
            "pairs": [list(p) for p in self.pairs],
            "mean_matched_similarity": self.mean_matched_similarity,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AlignmentMap":
        return cls(tuple((int(i), int(j)) for i, j in d["pairs"]), d["method"],
                   float(d["mean_matched_similarity"]), int(d["k"]), d.get("seed"))


def procrustes_rotation(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Orthogonal R minimising ||source @ R - target||_F (no centring)."""
    u, _, vt = np.linalg.svd(np.asarray(source, float).T @ np.asarray(target, float))
    return u @ vt


def _map_from_permutation(perm, sim, method, seed=None) -> AlignmentMap:
    pairs = tuple((int(i), int(j)) for i, j in enumerate(perm))
    score = float(np.mean([sim[i, j] for i, j in pairs]))
    return AlignmentMap(pairs, method, score, len(perm), seed)


def align(a: ConceptModel, b: ConceptModel, method: str = "hungarian",
          seed: int | None = None) -> AlignmentMap:
    """Pair source concepts (``a``) with target concepts (``b``)."""
    if method not in METHODS:
        raise ValueError(f"unknown alignment method {method!r}")
    sim = similarity(a, b)
    k = a.k
    if method == "hungarian":
        return _map_from_permutation(hungarian(-sim), sim, method)
    if method == "procrustes":
        r = procrustes_rotation(a.centroids, b.centroids)
        rotated = cosine_similarity(a.centroids.astype(np.float64) @ r, b.centroids)
        return _map_from_permutation(hungarian(-rotated), rotated, method)
    if method == "random":
        if seed is None:
            raise ValueError("random alignment requires a seed")
        perm = np.random.Generator(np.random.PCG64(seed)).permutation(k)
        return _map_from_permutation(perm, sim, method, seed)
    if method == "identity":
        return _map_from_permutation(np.arange(k), sim, method)
    # greedy_nn: every target slot takes its most similar source concept
    pairs = tuple((int(np.argmax(sim[:, j])), j) for j in range(k))
    score = float(np.mean([sim[i, j] for i, j in pairs]))
    return AlignmentMap(pairs, method, score, k, seed)


def remap_policy(src: BottleneckPolicy, amap: AlignmentMap) -> BottleneckPolicy:
    """Target row j = mean of the source rows mapped onto j; MLP copied as is.

    Target rows nobody maps to get the mean of all source rows.
    """
    if src.k != amap.k:
        raise ValueError("policy and alignment map disagree on k")
    emb = np.asarray(src.embedding, dtype=np.float64)
    sums = np.zeros_like(emb)
    counts = np.zeros(amap.k)
    for i, j in amap.pairs:
        sums[j] += emb[i]
        counts[j] += 1
    out = np.empty_like(emb)
    hit = counts > 0
    out[hit] = sums[hit] / counts[hit, None]
    out[~hit] = emb.mean(axis=0)
    out = out.astype(np.float32)
    out.flags.writeable = False
    return replace(src, embedding=out, provenance="transferred", loss_history=())


def transfer(src: Agent, tgt: Agent, method: str = "hungarian",
             seed: int | None = None, amap: AlignmentMap | None = None) -> Agent:
    """Target encoder and concepts driving the remapped source policy."""
    if src.concept_model.k != tgt.concept_model.k:
        raise ValueError("source and target k differ")
    if src.concept_model.dim != tgt.concept_model.dim:
        raise ValueError("source and target feature dimensions differ")
    if amap is None:
        amap = align(src.concept_model, tgt.concept_model, method, seed)
    return Agent(tgt.encoder, tgt.concept_model, remap_policy(src.policy, amap))
