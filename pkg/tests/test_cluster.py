import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaincluster.cluster import (ALG1, ALG2, PAPER_LITERAL, SMALLEST_EIG, elbow_point,
                                  elbow_select, kmeans, lowrank_cluster, spectral_cluster,
                                  token_cluster)
from chaincluster.errors import ValidationError
from chaincluster.metrics import recovery_rate


def block(*sizes, bridge=0.0):
    n = sum(sizes)
    W = np.zeros((n, n))
    start = 0
    for s in sizes:
        W[start:start + s, start:start + s] = 1.0
        start += s
    np.fill_diagonal(W, 0.0)
    if bridge:
        W[sizes[0] - 1, sizes[0]] = W[sizes[0], sizes[0] - 1] = bridge
    return W


def best_ncut(W):
    """Exhaustive 2-partition minimizing the normalized cut."""
    n = W.shape[0]
    d = W.sum(axis=1)
    best = None
    for bits in itertools.product([0, 1], repeat=n - 1):
        lab = np.array((0,) + bits)
        if lab.all() or not lab.any():
            continue
        cut = W[lab == 0][:, lab == 1].sum()
        score = cut / d[lab == 0].sum() + cut / d[lab == 1].sum()
        if best is None or score < best[0] - 1e-15:
            best = (score, lab)
    return best[1]


# --- kmeans -----------------------------------------------------------------

def test_kmeans_four_points():
    res = kmeans([0.0, 1.0, 10.0, 11.0], 2, seed=0)
    assert res.labels.tolist() == [0, 0, 1, 1]
    assert res.distortion == pytest.approx(1.0)


def test_kmeans_k1_and_kn():
    X = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]])
    one = kmeans(X, 1)
    assert one.distortion == pytest.approx(((X - X.mean(0)) ** 2).sum())
    assert one.distortion == pytest.approx(X.var(axis=0).sum() * 3)
    full = kmeans(X, 3)
    assert full.distortion == 0.0 and sorted(full.labels) == [0, 1, 2]


def test_kmeans_k_bounds():
    with pytest.raises(ValidationError):
        kmeans(np.zeros((3, 1)), 4)
    with pytest.raises(ValidationError):
        kmeans(np.zeros((3, 1)), 0)


def test_kmeans_no_empty_clusters_with_duplicates():
    X = np.array([[0.0], [0.0], [0.0], [5.0]])
    res = kmeans(X, 3)
    assert sorted(res.sizes()) == [1, 1, 2]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_kmeans_distortion_monotone(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(int(rng.integers(5, 30)), 2))
    k = int(rng.integers(1, 5))
    trace = []

    def cb(it, dist):
        if it == 0:
            trace.append([])
        trace[-1].append(dist)

    kmeans(X, k, seed=seed, callback=cb)
    for run in trace:
        assert all(b <= a + 1e-9 for a, b in zip(run, run[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100))
def test_kmeans_scaling(seed, c):
    X = np.random.default_rng(seed).normal(size=(20, 3))
    a, b = kmeans(X, 3, seed=1), kmeans(X * c, 3, seed=1)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert b.distortion == pytest.approx(a.distortion * c * c, rel=1e-9)


def test_kmeans_deterministic():
    X = np.random.default_rng(0).normal(size=(40, 2))
    a, b = kmeans(X, 4, seed=9), kmeans(X, 4, seed=9)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert a.distortion == b.distortion


# --- Algorithm 1 --------------------------------------------------------------

def test_two_disjoint_two_cliques():
    res, emb = spectral_cluster(block(2, 2), 2)
    assert res.labels.tolist() == [0, 0, 1, 1]
    np.testing.assert_allclose(np.linalg.norm(emb.points, axis=1), 1.0, atol=1e-9)
    assert res.mode == SMALLEST_EIG


def test_weak_bridge_matches_ncut_oracle():
    W = block(5, 5, bridge=0.01)
    res, _ = spectral_cluster(W, 2, seed=3)
    oracle = best_ncut(W)
    assert recovery_rate(res.labels, oracle) == 1.0
    assert recovery_rate(res.labels, [0] * 5 + [1] * 5) == 1.0


def test_paper_literal_fails_disconnected_cliques():
    # two 3-cliques: largest eigenvectors of Lnorm carry within-clique contrast
    res, _ = spectral_cluster(block(3, 3), 2, mode=PAPER_LITERAL)
    assert recovery_rate(res.labels, [0, 0, 0, 1, 1, 1]) < 1.0
    assert res.mode == PAPER_LITERAL


def test_spectral_needs_k2():
    with pytest.raises(ValidationError):
        spectral_cluster(block(3), 1)


def test_isolated_node_flag():
    W = block(3, 3)
    W = np.pad(W, ((0, 1), (0, 1)))
    res, emb = spectral_cluster(W, 3, pseudo_degree=True)
    assert "isolated-nodes" in res.flags
    assert np.all(np.isfinite(emb.points))


def test_spectral_deterministic():
    W = block(4, 4, 4, bridge=0.1)
    a, _ = spectral_cluster(W, 3, seed=5)
    b, _ = spectral_cluster(W, 3, seed=5)
    np.testing.assert_array_equal(a.labels, b.labels)


# --- Algorithm 2 --------------------------------------------------------------

def test_lowrank_hand_case():
    Y = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], float)
    res, emb = lowrank_cluster(Y, 2)
    assert res.labels.tolist() == [0, 0, 1, 1]
    # covariance is block-diagonal 0.5 * ones(2); each block has eigenvalue 1
    np.testing.assert_allclose(emb.eigenvalues, [1.0, 1.0])
    np.testing.assert_allclose(np.abs(emb.points), np.sqrt(0.5) * np.array([[1, 0], [1, 0], [0, 1], [0, 1]]),
                               atol=1e-12)


def test_lowrank_no_row_normalization():
    Y = np.array([[2, 0], [1, 0], [0, 1], [0, 1]], float)
    _, emb = lowrank_cluster(Y, 2)
    norms = np.linalg.norm(emb.points, axis=1)
    assert not np.allclose(norms, norms[0])


def test_lowrank_trivial_cases():
    res, _ = lowrank_cluster(np.ones((5, 3)), 1)
    assert set(res.labels) == {0}
    Y = np.random.default_rng(1).normal(size=(4, 10))
    res, _ = lowrank_cluster(Y, 4)
    assert res.distortion == pytest.approx(0.0, abs=1e-20) and sorted(res.labels) == [0, 1, 2, 3]
    with pytest.raises(ValidationError):
        lowrank_cluster(Y, 5)


def test_token_cluster_cases():
    res, _ = token_cluster(np.array([[1, 0], [1, 0], [0, 1]], float), 2)
    assert sorted(res.labels.tolist()) == [0, 1] and res.mode == "lowrank-tokens"
    A = np.array([[1, 1, 0], [2, 2, 0], [0, 0, 3], [1, 1, 1]], float)
    res, _ = token_cluster(A, 2)
    assert res.labels[0] == res.labels[1] != res.labels[2]
    res, _ = token_cluster(np.ones((3, 1)), 1)
    assert res.labels.tolist() == [0]


# --- elbow --------------------------------------------------------------------

def test_elbow_examples():
    assert elbow_point(range(1, 7), [100, 60, 25, 22, 20, 19]) == (3, False)
    assert elbow_point([2, 3, 4, 5], [8, 6, 4, 2]) == (3, True)
    ks = list(range(2, 10))
    curve = [100 - 20 * (k - 2) if k <= 5 else 40 - (k - 5) for k in ks]
    assert elbow_point(ks, curve)[0] == 5


def test_elbow_validation():
    W = block(3, 3)
    with pytest.raises(ValidationError):
        elbow_select(W, [2, 3], method=ALG1)
    with pytest.raises(ValidationError):
        elbow_select(W, [2, 3, 4, 5, 6], method=ALG1)


def test_elbow_select_planted_three_blocks():
    W = block(5, 5, 5, bridge=0.05)
    res = elbow_select(W, range(2, 7), seed=0, method=ALG1)
    assert [k for k, _ in res.curve] == [2, 3, 4, 5, 6]
    assert 3 <= res.k_star <= 5 and all(d >= 0 for _, d in res.curve)
    rng = np.random.default_rng(0)
    Y = np.repeat(rng.normal(size=(3, 50)), 4, axis=0)
    res = elbow_select(Y, range(2, 7), method=ALG2)
    assert res.k_star == 3
