"""KL projection onto the transport polytope (Sinkhorn scaling)."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import _alloc
from ._errors import ConvergenceError, InputError, NumericalError

DEFAULT_DELTA = 1e-6
DEFAULT_MAX_ITER = 10000


@dataclass
class Coupling:
    """Dense transport plan together with the marginals it should match."""

    plan: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def marginal_errors(self):
        """l1 errors of the row and column sums."""
        return (
            float(np.abs(self.plan.sum(axis=1) - self.a).sum()),
            float(np.abs(self.plan.sum(axis=0) - self.b).sum()),
        )

    def is_feasible(self, tol):
        rows, cols = self.marginal_errors()
        return bool(np.all(self.plan >= 0) and rows <= tol and cols <= tol)


@dataclass
class ScalingState:
    """Sinkhorn scalings; ``u``/``v`` are log-scalings when ``log`` is set."""

    u: np.ndarray
    v: np.ndarray
    iterations: int
    log: bool = False


def check_marginal(w, name, size=None):
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise InputError(f"{name} must be a vector")
    if size is not None and w.shape[0] != size:
        raise InputError(f"{name} has length {w.shape[0]}, expected {size}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InputError(f"{name} must be nonnegative and finite")
    if abs(w.sum() - 1.0) > 1e-12 * max(1, w.shape[0]):
        raise InputError(f"{name} must sum to 1 (sums to {w.sum()!r})")
    return w


def uniform(n):
    return np.full(n, 1.0 / n)


def kl_project(K, a, b, delta=DEFAULT_DELTA, max_iter=DEFAULT_MAX_ITER, callback=None):
    """Project a positive kernel onto ``{P >= 0 : P 1 = a, P^T 1 = b}`` in KL.

    Parameters
    ----------
    K : ndarray, shape (n, m)
        Strictly positive kernel.
    a, b : ndarray
        Probability vectors.
    delta : float
        Tolerance on the l1 row-marginal error measured after a full sweep.
    max_iter : int
    callback : callable, optional
        Called with the current plan after every sweep.

    Returns
    -------
    Coupling, ScalingState
    """
    K = np.asarray(K, dtype=float)
    n, m = K.shape
    a = check_marginal(a, "a", n)
    b = check_marginal(b, "b", m)
    if not np.all(K > 0) or not np.all(np.isfinite(K)):
        raise InputError("kernel must be strictly positive and finite")
    v = np.ones(m)
    err = np.inf
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for it in range(1, max_iter + 1):
            u = a / (K @ v)
            v = b / (K.T @ u)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(u > 0) and np.all(v > 0)):
                raise NumericalError(
                    "Sinkhorn scalings over/underflowed; use kl_project_log",
                    {"iteration": it},
                )
            err = float(np.abs(u * (K @ v) - a).sum())
            if callback is not None:
                callback(u[:, None] * K * v[None, :])
            if err <= delta:
                break
        else:
            raise ConvergenceError(
                f"Sinkhorn stopped after {max_iter} sweeps with marginal error {err:.3e}",
                residual=err,
                iterations=max_iter,
            )
    _alloc.note(n * m, "sinkhorn.plan")
    plan = u[:, None] * K * v[None, :]
    return Coupling(plan, a, b), ScalingState(u, v, it)


ABSORB_EVERY = 200
_ANNEAL_START = 20.0
_ANNEAL_DELTA = 1e-3
_SCALING_LIMIT = 1e100


def _in_range(x):
    lo, hi = x.min(), x.max()
    return bool(lo > 1.0 / _SCALING_LIMIT and hi < _SCALING_LIMIT)


def _log_sweep(L, log_a, log_b, g):
    f = log_a - logsumexp(L + g[None, :], axis=1)
    g = log_b - logsumexp(L + f[:, None], axis=0)
    return f, g


def kl_project_log(
    log_kernel, a, b, delta=DEFAULT_DELTA, max_iter=DEFAULT_MAX_ITER, callback=None, init=None, annealing=False
):
    """Log-domain variant of :func:`kl_project`; takes ``log K`` directly.

    Potentials ``f, g`` are kept in log space and the scalings of the
    current block are absorbed into them every ``ABSORB_EVERY`` sweeps or
    as soon as they leave ``[1e-100, 1e100]``.  Inside a block the sweeps
    run on the rescaled kernel ``exp(L + f + g)``, whose entries stay in
    range, so a sweep costs two matrix-vector products.

    ``init`` is an optional :class:`ScalingState` with ``log=True`` used as
    a warm start.  With ``annealing`` the problem is first solved for the
    flattened kernels ``t * log K``, ``t = 2^-k``, each solution warm-starting
    the next; the returned plan is still the projection of ``K`` itself.
    The sweep count reported includes every stage.
    """
    L = np.asarray(log_kernel, dtype=float)
    n, m = L.shape
    a = check_marginal(a, "a", n)
    b = check_marginal(b, "b", m)
    if np.any(np.isnan(L)) or np.any(L == np.inf):
        raise InputError("log kernel must not contain NaN or +inf")
    with np.errstate(divide="ignore"):
        log_a, log_b = np.log(a), np.log(b)
    g = np.zeros(m) if init is None else np.asarray(init.v, dtype=float).copy()
    used = 0
    if annealing:
        spread = float(np.ptp(L[np.isfinite(L)])) if np.any(np.isfinite(L)) else 0.0
        t = 1.0
        stages = []
        while spread * t > _ANNEAL_START:
            t /= 2.0
            stages.append(t)
        # dual potentials scale roughly linearly with t
        g = g * (stages[-1] if stages else 1.0)
        for t in reversed(stages):
            try:
                _, g, sweeps, _ = _scaled_sweeps(L * t, a, b, log_a, log_b, g, _ANNEAL_DELTA, max_iter - used, None)
            except ConvergenceError:
                break
            used += sweeps
            g = g * 2.0
    f, g, it, err = _scaled_sweeps(L, a, b, log_a, log_b, g, delta, max_iter - used, callback, strict=False)
    it += used
    if err > delta:
        raise ConvergenceError(
            f"log-domain Sinkhorn stopped after {it} sweeps with marginal error {err:.3e}",
            residual=err,
            iterations=it,
        )
    _alloc.note(n * m, "sinkhorn.plan")
    plan = np.exp(f[:, None] + L + g[None, :])
    return Coupling(plan, a, b), ScalingState(f, g, it, log=True)


def _scaled_sweeps(L, a, b, log_a, log_b, g, delta, max_iter, callback, strict=True):
    n, m = L.shape
    # zero marginals give -inf potentials; plain log sweeps handle them
    plain = not (np.all(a > 0) and np.all(b > 0))
    err = np.inf
    it = 0
    while it < max_iter:
        f, g = _log_sweep(L, log_a, log_b, g)
        it += 1
        if plain:
            rows = np.exp(f + logsumexp(L + g[None, :], axis=1))
            err = float(np.abs(rows - a).sum())
            if callback is not None:
                callback(np.exp(f[:, None] + L + g[None, :]))
            if err <= delta:
                break
            continue
        Kt = np.exp(L + f[:, None] + g[None, :])
        KtT = np.ascontiguousarray(Kt.T)
        u = np.ones(n)
        v = np.ones(m)
        Kv = Kt.sum(axis=1)
        err = float(np.abs(Kv - a).sum())
        if callback is not None:
            callback(Kt)
        block = 0
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            while err > delta and it < max_iter and block < ABSORB_EVERY:
                u_new = a / Kv
                v_new = b / (KtT @ u_new)
                if not (_in_range(u_new) and _in_range(v_new)):
                    break
                u, v = u_new, v_new
                it += 1
                block += 1
                Kv = Kt @ v
                err = float(np.abs(u * Kv - a).sum())
                if callback is not None:
                    callback(u[:, None] * Kt * v[None, :])
        f = f + np.log(u)
        g = g + np.log(v)
        if err <= delta:
            break
    if strict and err > delta:
        raise ConvergenceError("annealing stage did not converge", residual=err, iterations=it)
    return f, g, it, err
