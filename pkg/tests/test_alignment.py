from itertools import permutations

import numpy as np
import pytest

from concept_transfer import alignment as A
from concept_transfer import bottleneck as B
from concept_transfer.concepts import ConceptModel


def _cm(rows):
    rows = np.asarray(rows, dtype=np.float32)
    return ConceptModel(rows, len(rows), 0, 0.0, len(rows))


def _brute(cost):
    n = len(cost)
    best = min(sum(cost[i][p[i]] for i in range(n)) for p in permutations(range(n)))
    lex = min(p for p in permutations(range(n))
              if sum(cost[i][p[i]] for i in range(n)) == best)
    return best, list(lex)


def test_similarity_hand_example():
    s = A.similarity(_cm([[1, 0], [0, 1]]), _cm([[1 / np.sqrt(2), 1 / np.sqrt(2)], [1, 0]]))
    want = np.array([[1 / np.sqrt(2), 1.0], [1 / np.sqrt(2), 0.0]])
    assert np.abs(s - want).max() < 1e-7


def test_similarity_special_cases():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 4))
    s = A.similarity(_cm(a), _cm(a))
    assert np.allclose(np.diag(s), 1.0, atol=1e-6) and np.abs(s).max() <= 1.0
    z = A.cosine_similarity(np.zeros((1, 3)), np.ones((2, 3)))
    assert np.array_equal(z, np.zeros((1, 2)))
    assert A.cosine_similarity([[1.0, 0.0]], [[0.0, 3.0]])[0, 0] == 0.0
    with pytest.raises(ValueError):
        A.similarity(_cm(a), _cm(a[:4]))
    with pytest.raises(ValueError):
        A.cosine_similarity(np.ones((2, 3)), np.ones((2, 4)))


def test_hungarian_small_examples():
    assert A.hungarian([[1, 2], [3, 0]]).tolist() == [0, 1]
    assert A.hungarian(1 - np.eye(5)).tolist() == list(range(5))
    assert A.hungarian(np.zeros((4, 4))).tolist() == [0, 1, 2, 3]
    assert A.hungarian(np.zeros((0, 0))).tolist() == []
    with pytest.raises(ValueError):
        A.hungarian([[np.inf, 0], [0, 1]])
    with pytest.raises(ValueError):
        A.hungarian(np.zeros((2, 3)))


def test_hungarian_matches_brute_force_and_lexicographic_tie_break():
    rng = np.random.default_rng(1)
    for trial in range(400):
        n = int(rng.integers(2, 7))
        if trial % 2:
            cost = rng.integers(0, 3, size=(n, n)).astype(float)
        else:
            cost = rng.normal(size=(n, n))
        best, lex = _brute(cost.tolist())
        got = A.hungarian(cost)
        assert abs(A.assignment_cost(cost, got) - best) < 1e-9
        if trial % 2:
            assert got.tolist() == lex


def test_hungarian_beats_baselines():
    rng = np.random.default_rng(2)
    for _ in range(50):
        cost = rng.normal(size=(8, 8))
        h = A.assignment_cost(cost, A.hungarian(cost))
        assert h <= A.assignment_cost(cost, range(8)) + 1e-12
        for _ in range(100):
            assert h <= A.assignment_cost(cost, rng.permutation(8)) + 1e-12


def test_align_self_is_identity():
    rng = np.random.default_rng(3)
    cm = _cm(rng.normal(size=(12, 6)))
    amap = A.align(cm, cm, "hungarian")
    assert amap.as_permutation().tolist() == list(range(12))
    assert abs(amap.mean_matched_similarity - 1.0) < 1e-6


def test_procrustes_recovers_rotation():
    rng = np.random.default_rng(4)
    src = rng.normal(size=(16, 10))
    q, _ = np.linalg.qr(rng.normal(size=(10, 10)))
    r = A.procrustes_rotation(src, src @ q)
    assert np.linalg.norm(r.T @ r - np.eye(10)) < 1e-8
    amap = A.align(_cm(src), _cm(src @ q), "procrustes")
    assert amap.as_permutation().tolist() == list(range(16))
    assert amap.mean_matched_similarity >= 0.999


def test_greedy_degenerate_case_and_direction():
    src = _cm([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    tgt = _cm([[1, 0.1, 0], [1, 0, 0.1], [1, 0.05, 0.05]])
    amap = A.align(src, tgt, "greedy_nn")
    assert [i for i, _ in amap.pairs] == [0, 0, 0]
    assert [j for _, j in amap.pairs] == [0, 1, 2]


def test_random_and_identity_methods():
    cm = _cm(np.random.default_rng(5).normal(size=(6, 3)))
    with pytest.raises(ValueError):
        A.align(cm, cm, "random")
    r1, r2 = A.align(cm, cm, "random", 3), A.align(cm, cm, "random", 3)
    assert r1 == r2 and sorted(r1.as_permutation().tolist()) == list(range(6))
    assert A.align(cm, cm, "identity").as_permutation().tolist() == list(range(6))
    with pytest.raises(ValueError):
        A.align(cm, cm, "nearest")


def test_bijection_enforced():
    with pytest.raises(ValueError):
        A.AlignmentMap(((0, 0), (1, 0)), "hungarian", 0.0, 2)
    A.AlignmentMap(((0, 0), (0, 1)), "greedy_nn", 0.0, 2)


def test_alignment_dict_roundtrip():
    amap = A.AlignmentMap(((0, 1), (1, 0)), "random", 0.25, 2, 9)
    assert A.AlignmentMap.from_dict(amap.to_dict()) == amap


def test_hungarian_symmetric_under_role_swap():
    rng = np.random.default_rng(6)
    a, b = _cm(rng.normal(size=(10, 5))), _cm(rng.normal(size=(10, 5)))
    ab, ba = A.align(a, b), A.align(b, a)
    assert sorted(ab.pairs) == sorted((j, i) for i, j in ba.pairs)
    assert abs(ab.mean_matched_similarity - ba.mean_matched_similarity) < 1e-12


def test_remap_policy_examples():
    pol = B.random_policy(6, 0)
    ident = A.AlignmentMap(tuple((i, i) for i in range(6)), "identity", 1.0, 6)
    same = A.remap_policy(pol, ident)
    for k, v in pol.tensors().items():
        assert np.array_equal(v, same.tensors()[k])
    assert same.provenance == "transferred"
    perm = [3, 0, 5, 1, 4, 2]
    moved = A.remap_policy(pol, A.AlignmentMap(tuple(enumerate(perm)), "random", 0.0, 6, 1))
    for i, j in enumerate(perm):
        assert np.array_equal(moved.embedding[j], pol.embedding[i])
    pairs = ((2, 0), (5, 0), (0, 1), (1, 2), (3, 3), (4, 4))
    many = A.remap_policy(pol, A.AlignmentMap(pairs, "greedy_nn", 0.0, 6))
    emb = pol.embedding.astype(np.float64)
    assert np.array_equal(many.embedding[0], ((emb[2] + emb[5]) / 2).astype(np.float32))
    assert np.array_equal(many.embedding[5], emb.mean(0).astype(np.float32))
    assert np.array_equal(many.w1, pol.w1) and np.array_equal(many.b2, pol.b2)


def test_transfer_requires_matching_k():
    a = B.Agent(None, _cm(np.random.default_rng(0).normal(size=(4, 128))), B.random_policy(4, 0))
    b = B.Agent(None, _cm(np.random.default_rng(1).normal(size=(5, 128))), B.random_policy(5, 0))
    with pytest.raises(ValueError):
        A.transfer(a, b)
    t = A.transfer(a, a)
    assert t.concept_model is a.concept_model
    assert np.array_equal(t.policy.embedding, a.policy.embedding)
