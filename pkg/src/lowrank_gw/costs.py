"""Intra-space cost matrices: dense, exactly factored, and sketched.

A cost is either a dense ``(n, n)`` array or a :class:`FactoredCost`
holding two thin factors with ``cost = left @ right.T``.  Every solver
touches costs only through :func:`cost_apply` and :func:`cost_rapply`, so the
factored form is never expanded.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components, csgraph_from_dense, shortest_path

from . import _alloc
from ._errors import InputError, NumericalError

SAMPLING_SMOOTHING = 1e-12


def as_points(points, name="points"):
    """Validate a point cloud and return it as a float ``(n, d)`` array."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise InputError(f"{name} must be a non-empty (n, d) array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite coordinates")
    return X


def _pairwise(X, Y, q):
    sq = (
        np.sum(X**2, axis=1)[:, None]
        + np.sum(Y**2, axis=1)[None, :]
        - 2.0 * X @ Y.T
    )
    np.maximum(sq, 0.0, out=sq)
    if q == 2:
        return sq
    return sq ** (q / 2.0)


def dense_cost(points, q=1.0):
    """Pairwise Euclidean distances raised to the power ``q``.

    Parameters
    ----------
    points : array-like, shape (n, d)
    q : float, default 1.0
        Positive exponent.

    Returns
    -------
    ndarray, shape (n, n)
        Symmetric, zero diagonal, nonnegative.
    """
    X = as_points(points)
    if not q > 0:
        raise InputError(f"exponent q must be positive, got {q}")
    _alloc.note(X.shape[0] ** 2, "dense_cost")
    diff = X[:, None, :] - X[None, :, :] if X.shape[0] <= 256 else None
    if diff is not None:
        D2 = np.einsum("ijk,ijk->ij", diff, diff)
    else:
        D2 = _pairwise(X, X, 2)
    D2 = 0.5 * (D2 + D2.T)
    np.fill_diagonal(D2, 0.0)
    return D2 if q == 2 else D2 ** (q / 2.0)


@dataclass(frozen=True)
class FactoredCost:
    """Cost matrix held as ``left @ right.T``.

    ``left`` is ``(n, k)`` and ``right`` is ``(m, k)``; for an intra-space
    cost ``n == m``.
    """

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        left = np.asarray(self.left, dtype=float)
        right = np.asarray(self.right, dtype=float)
        if left.ndim != 2 or right.ndim != 2 or left.shape[1] != right.shape[1]:
            raise InputError(
                f"factor shapes {left.shape} and {right.shape} are not (n, k) and (m, k)"
            )
        if left.shape[1] < 1:
            raise InputError("factor width must be at least 1")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def shape(self):
        return (self.left.shape[0], self.right.shape[0])

    @property
    def rank_hint(self):
        return self.left.shape[1]

    @property
    def T(self):
        return FactoredCost(self.right, self.left)

    def dense(self):
        _alloc.note(self.shape[0] * self.shape[1], "FactoredCost.dense")
        return self.left @ self.right.T


def cost_shape(cost):
    if isinstance(cost, FactoredCost):
        return cost.shape
    return np.shape(cost)


def as_cost(cost):
    """Pass factored costs through; coerce anything else to a dense 2-D array."""
    if isinstance(cost, FactoredCost):
        return cost
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2:
        raise InputError(f"cost must be a 2-D array, got shape {C.shape}")
    return C


def densify_cost(cost):
    return cost.dense() if isinstance(cost, FactoredCost) else np.asarray(cost, dtype=float)


def cost_max(cost, block=256):
    """Largest entry; factored costs are expanded ``block`` rows at a time."""
    if not isinstance(cost, FactoredCost):
        return float(np.max(cost))
    n = cost.shape[0]
    top = -np.inf
    for start in range(0, n, block):
        top = max(top, float(np.max(cost.left[start:start + block] @ cost.right.T)))
    return top


def scale_cost(cost, factor):
    """``factor * cost`` in the same representation."""
    if isinstance(cost, FactoredCost):
        return FactoredCost(cost.left * factor, cost.right)
    return np.asarray(cost, dtype=float) * factor


def normalize_costs(A, B):
    """Divide both costs by the larger of their maxima.

    Mirror-descent kernels exponentiate ``gamma`` times products of the
    two costs, so a common unit scale keeps the default ``gamma`` usable.
    Returns ``(A, B, scale)``; zero costs are returned unchanged.
    """
    scale = max(cost_max(A), cost_max(B))
    if not scale > 0:
        return A, B, 1.0
    return scale_cost(A, 1.0 / scale), scale_cost(B, 1.0 / scale), scale


def cost_apply(cost, M):
    """Return ``cost @ M``; factored costs are applied as ``left @ (right.T @ M)``."""
    M = np.asarray(M, dtype=float)
    rows, cols = cost_shape(cost)
    if M.shape[0] != cols:
        raise InputError(f"cannot apply a {rows}x{cols} cost to an operand of shape {M.shape}")
    width = 1 if M.ndim == 1 else M.shape[1]
    _alloc.note(rows * width, "cost_apply")
    if isinstance(cost, FactoredCost):
        return cost.left @ (cost.right.T @ M)
    return cost @ M


def cost_rapply(cost, M):
    """Return ``cost.T @ M`` without transposing a dense buffer twice."""
    M = np.asarray(M, dtype=float)
    rows, cols = cost_shape(cost)
    if M.shape[0] != rows:
        raise InputError(f"cannot apply the transpose of a {rows}x{cols} cost to shape {M.shape}")
    width = 1 if M.ndim == 1 else M.shape[1]
    _alloc.note(cols * width, "cost_rapply")
    if isinstance(cost, FactoredCost):
        return cost.right @ (cost.left.T @ M)
    return cost.T @ M


def squared_euclidean_factors(points):
    """Exact rank ``d + 2`` factorisation of the squared-distance matrix.

    With ``z[i] = |x_i|^2`` the factors are ``[z, 1, -sqrt(2) X]`` and
    ``[1, z, sqrt(2) X]``.
    """
    X = as_points(points)
    n = X.shape[0]
    z = np.sum(X**2, axis=1)
    ones = np.ones(n)
    left = np.column_stack([z, ones, -np.sqrt(2.0) * X])
    right = np.column_stack([ones, z, np.sqrt(2.0) * X])
    return FactoredCost(left, right)


def _flat_outer(U):
    n, k = U.shape
    return np.einsum("ni,nj->nij", U, U).reshape(n, k * k)


def hadamard_square_factors(cost):
    """Factors of the elementwise square of a factored cost.

    Row-wise ``psi(u) = vec(u u^T)`` turns ``<u, v>**2`` into
    ``<psi(u), psi(v)>``, so the result has width ``k**2``.  Only worth it
    when ``k**2`` is well below ``n``.
    """
    if not isinstance(cost, FactoredCost):
        raise InputError("hadamard_square_factors expects a FactoredCost")
    return FactoredCost(_flat_outer(cost.left), _flat_outer(cost.right))


def hadamard_square_apply(cost, v):
    """``(cost ** 2) @ v`` for either representation."""
    if isinstance(cost, FactoredCost):
        return cost_apply(hadamard_square_factors(cost), v)
    C = np.asarray(cost, dtype=float)
    return (C * C) @ v


def _smoothed_distribution(w):
    w = np.asarray(w, dtype=float) + SAMPLING_SMOOTHING
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise InputError("sampling weights are degenerate even after smoothing")
    return w / total


def lr_distance_approx(X, Y, target_rank, t=None, seed=0, q=1.0):
    """Sublinear sketch ``M @ N.T`` of the ``(n, m)`` matrix ``|x_i - y_j|^q``.

    Row sampling, then column sampling, an SVD of the small core to fix the
    right factor, and finally a least-squares fit of the left factor on
    uniformly sampled columns.  Only ``O((n + m) t)`` entries are evaluated.

    Parameters
    ----------
    X, Y : array-like, shapes (n, d) and (m, d)
    target_rank : int
    t : int, optional
        Number of sampled rows/columns; defaults to ``10 * target_rank``.
    seed : int
        Seed of the counter-based generator; identical seeds reproduce the
        sampling sequence exactly.
    q : float
        Exponent applied to the Euclidean distance.

    Returns
    -------
    FactoredCost
        ``left`` is ``(n, target_rank)`` and ``right`` is ``(m, target_rank)``.
    """
    X = as_points(X, "X")
    Y = as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise InputError("X and Y must share their ambient dimension")
    r = int(target_rank)
    if r < 1:
        raise InputError("target_rank must be positive")
    t = 10 * r if t is None else int(t)
    if t < r:
        raise InputError(f"sample count t={t} must be at least target_rank={r}")
    n, m = X.shape[0], Y.shape[0]
    rng = np.random.Generator(np.random.Philox(seed))

    i_star = rng.integers(n)
    j_star = rng.integers(m)
    p = (
        _pairwise(X, Y[j_star : j_star + 1], q)[:, 0] ** 2
        + _pairwise(X[i_star : i_star + 1], Y[j_star : j_star + 1], q)[0, 0] ** 2
        + np.mean(_pairwise(X[i_star : i_star + 1], Y, q) ** 2)
    )
    p = _smoothed_distribution(p)
    rows = rng.choice(n, size=t, p=p)
    S = _pairwise(X[rows], Y, q) / np.sqrt(t * p[rows])[:, None]
    if not np.any(S):
        # every sampled row is identically zero; the sketch cannot see anything else
        return FactoredCost(np.zeros((n, r)), np.zeros((m, r)))

    col_p = _smoothed_distribution(np.sum(S**2, axis=0))
    cols = rng.choice(m, size=t, p=col_p)
    W = S[:, cols] / np.sqrt(t * col_p[cols])[None, :]

    U1 = np.linalg.svd(W, full_matrices=False)[0][:, :r]
    N = S.T @ U1
    N = N / np.linalg.norm(W.T @ U1)

    reg_cols = rng.choice(m, size=t)
    Dt = _pairwise(X, Y[reg_cols], q) / np.sqrt(t)

    U2, D2, _ = np.linalg.svd(N.T @ N)
    if D2[-1] <= D2[0] * 1e-14 or D2[0] == 0:
        raise NumericalError(
            "right factor is rank deficient; lower target_rank",
            {"singular_values": D2.tolist()},
        )
    U2 = U2 / D2
    Bm = U2.T @ N[reg_cols].T / np.sqrt(t)
    gram = Bm @ Bm.T
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalError(
            "regression Gram matrix is singular; increase t or lower target_rank",
            {"condition_number": float(cond), "singular_values": np.linalg.svd(gram, compute_uv=False).tolist()},
        )
    Z = np.linalg.solve(gram, Bm @ Dt.T)
    M = Z.T @ U2.T
    return FactoredCost(M, N)


def knn_shortest_path_cost(points, k):
    """All-pairs shortest-path distances on the symmetrised k-NN graph.

    Edges carry Euclidean lengths.  Neighbour ties go to the lower index and
    the graph keeps an edge if either endpoint selected it.
    """
    X = as_points(points)
    n = X.shape[0]
    k = int(k)
    if not 0 < k < n:
        raise InputError(f"k must satisfy 0 < k < n={n}, got {k}")
    D = dense_cost(X, 1.0)
    masked = D.copy()
    np.fill_diagonal(masked, np.inf)
    nbrs = np.argsort(masked, axis=1, kind="stable")[:, :k]
    W = np.full((n, n), np.inf)
    rows = np.repeat(np.arange(n), k)
    W[rows, nbrs.ravel()] = D[rows, nbrs.ravel()]
    W = np.minimum(W, W.T)
    graph = csgraph_from_dense(W, null_value=np.inf)
    n_comp, labels = connected_components(graph, directed=False)
    if n_comp > 1:
        groups = [np.flatnonzero(labels == c).tolist() for c in range(n_comp)]
        shown = "; ".join(str(g[:10]) + ("..." if len(g) > 10 else "") for g in groups[:5])
        raise InputError(f"k-NN graph has {n_comp} connected components: {shown}")
    return shortest_path(graph, method="D", directed=False)
