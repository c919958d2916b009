"""Brute-force oracles, divergences, alignment metrics and allocation tracking.

Nothing here calls into the solvers; the functions are meant to check them.
"""

import tracemalloc
from dataclasses import dataclass, field

import numpy as np

from . import _alloc
from ._errors import InputError, NumericalError, RefusalError

ORACLE_CAP = 10_000
ITEMSIZE = 8


def gw_quadruple_sum(A, B, P):
    """Direct evaluation of ``sum_{i,j,k,l} (A_ik - B_jl)^2 P_ij P_kl``.

    Refuses instances with ``n * m > 10_000``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    P = getattr(P, "plan", P)
    P = np.asarray(P, dtype=float)
    n, m = P.shape
    if A.shape != (n, n) or B.shape != (m, m):
        raise InputError(f"shapes A{A.shape}, B{B.shape}, P{P.shape} are inconsistent")
    if n * m > ORACLE_CAP:
        raise RefusalError(f"oracle refuses n*m={n * m} > {ORACLE_CAP}")
    total = 0.0
    for i in range(n):
        for j in range(m):
            if P[i, j] == 0.0:
                continue
            diff = A[i][:, None] - B[j][None, :]
            total += P[i, j] * float(np.sum(diff * diff * P))
    return total


def _blocks(x):
    if isinstance(x, (tuple, list)):
        return [np.asarray(b, dtype=float) for b in x]
    if hasattr(x, "blocks"):
        return [np.asarray(b, dtype=float) for b in x.blocks()]
    return [np.asarray(x, dtype=float)]


def generalized_kl(x, y):
    """``sum x (log(x / y) - 1)`` with ``0 log 0 = 0``.

    The value is ``inf`` if ``y`` vanishes where ``x`` does not.

    ``x`` and ``y`` may be arrays or matching tuples of blocks (e.g. low-rank
    triples), in which case the blocks are summed.
    """
    total = 0.0
    xs, ys = _blocks(x), _blocks(y)
    if len(xs) != len(ys):
        raise InputError("x and y have different numbers of blocks")
    for xb, yb in zip(xs, ys):
        if xb.shape != yb.shape:
            raise InputError(f"shape mismatch {xb.shape} vs {yb.shape}")
        if np.any(xb < 0):
            raise InputError("x must be nonnegative")
        if np.any(yb < 0):
            raise InputError("y must be nonnegative")
        pos = xb > 0
        if np.any(yb[pos] == 0):
            return float("inf")
        total += float(np.sum(xb[pos] * (np.log(xb[pos] / yb[pos]) - 1.0)))
    return total


def bregman_kl(x, y):
    """Bregman divergence of the negative entropy: ``KL(x, y) + sum y``."""
    return generalized_kl(x, y) + sum(float(b.sum()) for b in _blocks(y))


def finite_difference_gradient(f, point, h=1e-6):
    """Central differences of a scalar function of a ``(Q, R, g)`` triple.

    Parameters
    ----------
    f : callable
        Takes ``(Q, R, g)`` and returns a float.
    point : LowRankCoupling or tuple of three arrays
    h : float
        Step, within ``[1e-7, 1e-4]``.

    Returns
    -------
    GradientTriple
    """
    from .gw_lr import GradientTriple

    if not 1e-7 <= h <= 1e-4:
        raise InputError(f"step h={h} outside [1e-7, 1e-4]")
    blocks = [b.copy() for b in _blocks(point)]
    grads = []
    for k, block in enumerate(blocks):
        grad = np.zeros_like(block)
        flat = block.reshape(-1)
        gflat = grad.reshape(-1)
        for idx in range(flat.size):
            old = flat[idx]
            flat[idx] = old + h
            fp = f(*blocks)
            flat[idx] = old - h
            fm = f(*blocks)
            flat[idx] = old
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericalError("objective is not finite near the evaluation point", {"block": k, "index": idx})
            gflat[idx] = (fp - fm) / (2.0 * h)
        grads.append(grad)
    return GradientTriple(*grads)


def foscttm(X_aligned, Y, true_match=None):
    """Fraction of samples closer than the true match, averaged over rows.

    Parameters
    ----------
    X_aligned, Y : array-like, shape (n, d)
    true_match : array-like of int, optional
        ``true_match[i]`` is the index in ``Y`` matching ``X_aligned[i]``;
        identity when omitted.
    """
    X = np.asarray(X_aligned, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if Y.shape != X.shape:
        raise InputError(f"aligned clouds must have equal shapes, got {X.shape} and {Y.shape}")
    if n < 2:
        raise InputError("foscttm needs at least two samples")
    match = np.arange(n) if true_match is None else np.asarray(true_match, dtype=int)
    D = np.sqrt(np.maximum(
        np.sum(X**2, 1)[:, None] + np.sum(Y**2, 1)[None, :] - 2 * X @ Y.T, 0.0))
    ref = D[np.arange(n), match]
    closer = np.sum(D < ref[:, None], axis=1)
    return float(np.mean(closer / (n - 1)))


@dataclass
class AllocationStats:
    """What an :func:`allocation_scope` observed.

    ``peak_buffer_elements`` is the larger of the biggest buffer reported by
    the library and the traced peak of live numpy memory (in float64
    elements).  The traced figure bounds every single buffer from above.
    """

    threshold: int
    peak_buffer_elements: int = 0
    noted_peak_elements: int = 0
    traced_peak_elements: int = 0
    large_buffer_events: list = field(default_factory=list)

    def _record(self, size, tag):
        self.noted_peak_elements = max(self.noted_peak_elements, size)
        self.peak_buffer_elements = max(self.peak_buffer_elements, size)
        if size >= self.threshold:
            self.large_buffer_events.append((size, tag))


class allocation_scope:
    """Context manager recording buffer requests made inside it.

    >>> with allocation_scope(threshold=10**6) as stats:
    ...     run()
    >>> stats.large_buffer_events
    []
    """

    def __init__(self, threshold=10**6):
        self.stats = AllocationStats(threshold=int(threshold))
        self._owns_trace = False

    def __enter__(self):
        if not tracemalloc.is_tracing():
            tracemalloc.start()
            self._owns_trace = True
        self._base = tracemalloc.get_traced_memory()[0]
        if self._owns_trace:
            tracemalloc.reset_peak()
        _alloc.push(self.stats)
        return self.stats

    def __exit__(self, *exc):
        _alloc.pop(self.stats)
        if self._owns_trace:
            peak = tracemalloc.get_traced_memory()[1]
            tracemalloc.stop()
            elements = max(0, peak - self._base) // ITEMSIZE
            self.stats.traced_peak_elements = int(elements)
            self.stats.peak_buffer_elements = max(self.stats.peak_buffer_elements, int(elements))
            if elements >= self.stats.threshold:
                self.stats.large_buffer_events.append((int(elements), "traced peak"))
        return False


def measure_allocations(run, threshold=10**6):
    """Run ``run()`` inside an :class:`allocation_scope`; return ``(result, stats)``."""
    with allocation_scope(threshold) as stats:
        result = run()
    return result, stats
