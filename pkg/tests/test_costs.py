import heapq

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.distance import cdist

from lowrank_gw import InputError, NumericalError
from lowrank_gw.costs import (
    FactoredCost,
    cost_apply,
    cost_max,
    cost_rapply,
    dense_cost,
    hadamard_square_apply,
    hadamard_square_factors,
    knn_shortest_path_cost,
    lr_distance_approx,
    normalize_costs,
    squared_euclidean_factors,
)

coords = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
clouds = st.integers(1, 12).flatmap(
    lambda n: st.integers(1, 4).flatmap(lambda d: arrays(float, (n, d), elements=coords))
)


@settings(max_examples=50, deadline=None)
@given(clouds, st.sampled_from([0.5, 1.0, 2.0, 3.0]))
def test_dense_cost_matches_cdist(X, q):
    D = dense_cost(X, q)
    ref = cdist(X, X) ** q
    assert np.allclose(D, ref, rtol=1e-9, atol=1e-6 * max(1.0, ref.max()))
    assert np.array_equal(D, D.T)
    assert np.all(np.diag(D) == 0)
    assert np.all(D >= 0)


def test_dense_cost_large_branch_matches_cdist():
    X = np.random.default_rng(0).uniform(size=(300, 3))
    assert np.allclose(dense_cost(X, 1.0), cdist(X, X), atol=1e-7)


@settings(max_examples=50, deadline=None)
@given(clouds)
def test_squared_euclidean_factors_are_exact(X):
    F = squared_euclidean_factors(X)
    ref = cdist(X, X, "sqeuclidean")
    assert F.left.shape == (X.shape[0], X.shape[1] + 2)
    assert np.allclose(F.dense(), ref, atol=1e-9 * max(1.0, np.sum(X**2, 1).max()))


def test_factored_apply_and_hadamard_square():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((15, 3))
    F = squared_euclidean_factors(X)
    D = F.dense()
    M = rng.standard_normal((15, 4))
    assert np.allclose(cost_apply(F, M), D @ M)
    assert np.allclose(cost_rapply(F, M), D.T @ M)
    H = hadamard_square_factors(F)
    assert H.left.shape[1] == 25
    assert np.allclose(H.dense(), D**2)
    v = rng.uniform(size=15)
    assert np.allclose(hadamard_square_apply(F, v), (D**2) @ v)
    assert np.allclose(hadamard_square_apply(D, v), (D**2) @ v)


def test_normalize_costs_scales_both_by_largest_max():
    rng = np.random.default_rng(2)
    A = dense_cost(rng.uniform(size=(20, 2)), 2)
    FB = squared_euclidean_factors(3 * rng.uniform(size=(30, 2)))
    A2, B2, scale = normalize_costs(A, FB)
    assert scale == pytest.approx(max(A.max(), FB.dense().max()))
    assert max(A2.max(), cost_max(B2)) == pytest.approx(1.0)
    assert np.allclose(B2.dense(), FB.dense() / scale)
    Z = np.zeros((3, 3))
    assert normalize_costs(Z, Z)[2] == 1.0


def test_cost_max_blocked_matches_dense():
    F = squared_euclidean_factors(np.random.default_rng(3).uniform(size=(700, 2)))
    assert cost_max(F, block=64) == pytest.approx(F.dense().max())


def floyd_warshall(W):
    D = W.copy()
    for k in range(D.shape[0]):
        D = np.minimum(D, D[:, k : k + 1] + D[k : k + 1, :])
    return D


def test_knn_shortest_paths_match_floyd_warshall():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(40, 2))
    k = 5
    D = cdist(X, X)
    W = np.full_like(D, np.inf)
    np.fill_diagonal(W, 0.0)
    for i in range(40):
        nbrs = np.argsort(np.where(np.arange(40) == i, np.inf, D[i]), kind="stable")[:k]
        W[i, nbrs] = D[i, nbrs]
        W[nbrs, i] = D[i, nbrs]
    assert np.allclose(knn_shortest_path_cost(X, k), floyd_warshall(W))


def test_knn_disconnected_graph_is_reported():
    X = np.vstack([np.zeros((5, 2)) + np.arange(5)[:, None] * 0.01, 100 + np.arange(5)[:, None] * 0.01 + np.zeros((5, 2))])
    with pytest.raises(InputError, match="2 connected components"):
        knn_shortest_path_cost(X, 2)


def test_lr_distance_is_exact_on_low_rank_input_and_reproducible():
    rng = np.random.default_rng(5)
    X, Y = rng.uniform(size=(80, 3)), rng.uniform(size=(70, 3))
    F = lr_distance_approx(X, Y, target_rank=5, t=50, seed=7, q=2)
    ref = cdist(X, Y, "sqeuclidean")
    assert np.linalg.norm(F.dense() - ref) / np.linalg.norm(ref) < 1e-8
    G = lr_distance_approx(X, Y, target_rank=5, t=50, seed=7, q=2)
    assert np.array_equal(F.left, G.left) and np.array_equal(F.right, G.right)


def test_lr_distance_euclidean_is_a_reasonable_sketch():
    rng = np.random.default_rng(6)
    X, Y = rng.uniform(size=(200, 2)), rng.uniform(size=(150, 2))
    ref = cdist(X, Y)
    errs = [np.linalg.norm(lr_distance_approx(X, Y, 10, seed=s).dense() - ref) / np.linalg.norm(ref) for s in range(5)]
    assert np.median(errs) < 0.1


def test_lr_distance_input_errors():
    X = np.zeros((5, 2))
    with pytest.raises(InputError):
        lr_distance_approx(X, np.zeros((5, 3)), 2)
    with pytest.raises(InputError):
        lr_distance_approx(X, X, 0)
    with pytest.raises(InputError):
        lr_distance_approx(X, X, 4, t=2)
    rng = np.random.default_rng(0)
    with pytest.raises(NumericalError):
        lr_distance_approx(rng.uniform(size=(30, 1)), rng.uniform(size=(30, 1)), 6, t=30, q=2)


def test_cost_input_errors():
    with pytest.raises(InputError):
        dense_cost(np.zeros((3, 2)), 0.0)
    with pytest.raises(InputError):
        dense_cost([[np.nan, 1.0]])
    with pytest.raises(InputError):
        FactoredCost(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(InputError):
        cost_apply(np.zeros((3, 3)), np.zeros(4))
    with pytest.raises(InputError):
        hadamard_square_factors(np.zeros((3, 3)))


def dijkstra(W, source):
    dist = np.full(W.shape[0], np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, i = heapq.heappop(heap)
        if d > dist[i]:
            continue
        for j in np.flatnonzero(np.isfinite(W[i])):
            if d + W[i, j] < dist[j]:
                dist[j] = d + W[i, j]
                heapq.heappush(heap, (dist[j], j))
    return dist


def test_knn_on_a_circle_matches_dijkstra():
    theta = np.linspace(0, 2 * np.pi, 10, endpoint=False)
    X = np.column_stack([np.cos(theta), np.sin(theta)])
    D = cdist(X, X)
    W = np.full_like(D, np.inf)
    for i in range(10):
        # on a regular polygon the two nearest points are the neighbours
        for j in ((i - 1) % 10, (i + 1) % 10):
            W[i, j] = W[j, i] = D[i, j]
    ref = np.array([dijkstra(W, s) for s in range(10)])
    assert np.allclose(knn_shortest_path_cost(X, 2), ref, atol=1e-12)


def test_small_knn_graphs():
    line = np.array([[0.0], [1.0], [2.0]])
    assert knn_shortest_path_cost(line, 2)[0, 2] == pytest.approx(2.0)
    pair = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert np.allclose(knn_shortest_path_cost(pair, 1), [[0.0, 5.0], [5.0, 0.0]])


def test_small_factored_examples():
    F = FactoredCost(np.array([[1.0], [2.0]]), np.array([[1.0], [2.0]]))
    H = hadamard_square_factors(F)
    assert np.allclose(H.left, [[1.0], [4.0]]) and np.allclose(H.right, [[1.0], [4.0]])
    assert np.allclose(H.dense(), [[1.0, 4.0], [4.0, 16.0]])
    assert np.array_equal(cost_apply(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[1.0], [0.0]])), [[0.0], [1.0]])
    Z = FactoredCost(np.zeros((4, 2)), np.zeros((4, 2)))
    assert not np.any(cost_apply(Z, np.random.default_rng(0).uniform(size=(4, 3))))
    assert not np.any(hadamard_square_factors(Z).dense())
    assert np.array_equal(dense_cost(np.array([[2.5, -1.0]]), 2), [[0.0]])


def test_lr_distance_single_point_and_seed_dependence():
    P = np.array([[0.3, 0.4]])
    assert np.allclose(lr_distance_approx(P, P, 1, t=1).dense(), [[0.0]])
    rng = np.random.default_rng(7)
    X, Y = rng.standard_normal((40, 3)), rng.standard_normal((40, 3))
    ref = cdist(X, Y)
    errs = [np.linalg.norm(lr_distance_approx(X, Y, 5, seed=s).dense() - ref) / np.linalg.norm(ref) for s in (1, 2)]
    assert all(np.isfinite(errs)) and errs[0] != errs[1]
