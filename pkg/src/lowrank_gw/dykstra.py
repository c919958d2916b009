"""Dykstra projection onto the truncated low-rank coupling set.

The set holds triples ``(Q, R, g)`` with ``Q 1 = a``, ``R 1 = b``,
``Q^T 1 = R^T 1 = g`` and ``g >= alpha``; ``P = Q diag(1/g) R^T`` is the
coupling they represent.
"""

from dataclasses import dataclass

import numpy as np

from ._errors import ConvergenceError, InputError, NumericalError, ValidationError

DEFAULT_DELTA = 1e-3
DEFAULT_MAX_ITER = 5000


@dataclass
class LowRankCoupling:
    """Factored coupling ``P = Q diag(1/g) R^T``."""

    Q: np.ndarray
    R: np.ndarray
    g: np.ndarray

    @property
    def rank(self):
        return self.g.shape[0]

    @property
    def shape(self):
        return (self.Q.shape[0], self.R.shape[0])

    def residuals(self, a=None, b=None):
        """Constraint residuals, l1 for every marginal identity."""
        a = self.Q.sum(axis=1) if a is None else a
        b = self.R.sum(axis=1) if b is None else b
        return {
            "Q1-a": float(np.abs(self.Q.sum(axis=1) - a).sum()),
            "R1-b": float(np.abs(self.R.sum(axis=1) - b).sum()),
            "QT1-g": float(np.abs(self.Q.sum(axis=0) - self.g).sum()),
            "RT1-g": float(np.abs(self.R.sum(axis=0) - self.g).sum()),
            "sum(g)-1": float(abs(self.g.sum() - 1.0)),
        }

    def validate(self, a=None, b=None, alpha=0.0, tol=1e-6):
        """Raise :class:`ValidationError` listing residuals when infeasible."""
        res = self.residuals(a, b)
        res["min(g)-alpha"] = float(self.g.min() - alpha)
        bad = {k: v for k, v in res.items() if (v < 0 if k == "min(g)-alpha" else v > tol)}
        if np.any(self.Q < 0) or np.any(self.R < 0):
            bad["negative entries"] = float(min(self.Q.min(), self.R.min()))
        if bad:
            raise ValidationError(f"low-rank coupling violates its invariants: {bad}", bad)
        return res

    def blocks(self):
        return (self.Q, self.R, self.g)


@dataclass
class KernelTriple:
    """Positive kernels ``(K1, K2, k3)`` defining one KL projection."""

    K1: np.ndarray
    K2: np.ndarray
    k3: np.ndarray

    def blocks(self):
        return (self.K1, self.K2, self.k3)


def _div(num, den):
    # 0/0 := 0; x/0 with x > 0 means an upstream NaN or underflow
    if den.all():
        return num / den
    out = np.zeros(np.broadcast(num, den).shape)
    zero = den == 0
    if np.any(zero & (np.broadcast_to(num, out.shape) != 0)):
        raise NumericalError("division of a positive quantity by zero in Dykstra scalings")
    np.divide(num, den, out=out, where=~zero)
    return out


@dataclass
class DykstraState:
    """Scalings and correction vectors; reusable as a warm start."""

    v1: np.ndarray
    v2: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    q3_1: np.ndarray
    q3_2: np.ndarray
    u1: np.ndarray = None
    u2: np.ndarray = None


def project(kernels, a, b, alpha, delta=DEFAULT_DELTA, max_iter=DEFAULT_MAX_ITER, state=None, return_state=False):
    """KL projection of ``kernels`` onto the truncated low-rank coupling set.

    Each sweep first enforces the outer marginals together with the lower
    bound on ``g`` (clamp), then the shared inner marginal (geometric mean).
    The two updates of ``g`` are applied in that order; swapping them gives
    different iterates.

    Parameters
    ----------
    kernels : KernelTriple
    a, b : ndarray
        Outer marginals.
    alpha : float
        Lower bound on ``g``; must not exceed ``1 / r``.
    delta : float
        Stop once ``|Q 1 - a|_1 + |R 1 - b|_1 < delta`` for the returned
        triple, whose ``g`` is clamped to ``alpha`` after the last sweep
        (with the columns of ``Q`` and ``R`` rescaled so that
        ``Q^T 1 = R^T 1 = g`` stays exact).
    max_iter : int
    state : DykstraState, optional
        Warm start; cold start when omitted.
    return_state : bool

    Returns
    -------
    (LowRankCoupling, int) or (LowRankCoupling, int, DykstraState)
        The triple and the number of sweeps.
    """
    K1, K2, k3 = (np.asarray(x, dtype=float) for x in kernels.blocks())
    r = k3.shape[0]
    if K1.shape[1] != r or K2.shape[1] != r:
        raise InputError("kernel widths disagree with the length of k3")
    if alpha > 1.0 / r + 1e-15:
        raise InputError(f"alpha={alpha} exceeds 1/r={1.0 / r}")
    for name, K in (("K1", K1), ("K2", K2), ("k3", k3)):
        if not np.all(np.isfinite(K)) or not np.all(K > 0):
            raise InputError(f"{name} must be strictly positive and finite")
    ps = (np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    Ks = (np.ascontiguousarray(K1), np.ascontiguousarray(K2))
    KTs = (np.ascontiguousarray(K1.T), np.ascontiguousarray(K2.T))

    if state is None:
        state = DykstraState(np.ones(r), np.ones(r), np.ones(r), np.ones(r), np.ones(r), np.ones(r))
    v_t = [state.v1.copy(), state.v2.copy()]
    q = [state.q1.copy(), state.q2.copy()]
    q3_1, q3_2 = state.q3_1.copy(), state.q3_2.copy()
    # g * q3_1 * q3_2 = k3 holds throughout; a warm start must restore it
    g_t = k3 / (q3_1 * q3_2)
    v = list(v_t)
    u = [None, None]
    err = np.inf
    Kv = [Ks[i] @ v_t[i] for i in range(2)]

    for it in range(1, max_iter + 1):
        for i in range(2):
            u[i] = _div(ps[i], Kv[i])
        g = np.maximum(alpha, g_t * q3_1)
        q3_1 = _div(g_t * q3_1, g)
        g_t = g

        KTu = [KTs[i] @ u[i] for i in range(2)]
        g = np.cbrt(g_t * q3_2) * np.cbrt(v_t[0] * q[0] * KTu[0]) * np.cbrt(v_t[1] * q[1] * KTu[1])
        for i in range(2):
            v[i] = _div(g, KTu[i])
            q[i] = _div(v_t[i] * q[i], v[i])
        q3_2 = _div(g_t * q3_2, g)
        v_t = [v[0].copy(), v[1].copy()]
        g_t = g

        if not (np.all(np.isfinite(u[0])) and np.all(np.isfinite(u[1])) and np.all(np.isfinite(g))):
            raise NumericalError("non-finite Dykstra scalings", {"iteration": it})
        # reused as the denominators of the next sweep
        Kv = [Ks[i] @ v[i] for i in range(2)]
        # the returned triple has g clamped to alpha, its columns rescaled to match
        g_out = np.maximum(g, alpha)
        if np.array_equal(g_out, g):
            v_out, Kv_out = v, Kv
        else:
            scale = g_out / g
            v_out = [v[i] * scale for i in range(2)]
            Kv_out = [Ks[i] @ v_out[i] for i in range(2)]
        err = float(np.abs(u[0] * Kv_out[0] - ps[0]).sum() + np.abs(u[1] * Kv_out[1] - ps[1]).sum())
        if err < delta:
            break
    else:
        raise ConvergenceError(
            f"Dykstra stopped after {max_iter} sweeps with residual {err:.3e}",
            residual=err,
            iterations=max_iter,
        )

    Q = u[0][:, None] * K1 * v_out[0][None, :]
    R = u[1][:, None] * K2 * v_out[1][None, :]
    out = LowRankCoupling(Q, R, g_out)
    if return_state:
        return out, it, DykstraState(v[0], v[1], q[0], q[1], q3_1, q3_2, u[0], u[1])
    return out, it


def uniform_triple(a, b, r):
    """Feasible interior triple ``Q = a gbar^T``, ``R = b gbar^T`` with uniform ``gbar``."""
    gbar = np.full(r, 1.0 / r)
    return LowRankCoupling(np.outer(a, gbar), np.outer(b, gbar), gbar)


def _ramp(n):
    w = np.arange(1.0, n + 1.0)
    return w / w.sum()


def rank2_triple(a, b, r):
    """Feasible interior triple with distinct columns.

    ``Q = lam a1 g1^T + (1 - lam) a2 g2^T`` where ``a1``, ``g1`` are linear
    ramps, ``a2``, ``g2`` restore the marginals and ``lam`` is half the
    smallest marginal entry (same for ``R``).  The uniform triple has
    identical columns, and mirror descent started there keeps them
    identical forever, so this is the default starting point.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    g = np.full(r, 1.0 / r)
    lam = 0.5 * min(a.min(), b.min(), g.min())
    if lam <= 0:
        raise InputError("rank2_triple needs strictly positive marginals")
    g1 = _ramp(r)
    g2 = (g - lam * g1) / (1.0 - lam)

    def side(w):
        w1 = _ramp(w.shape[0])
        w2 = (w - lam * w1) / (1.0 - lam)
        return lam * np.outer(w1, g1) + (1.0 - lam) * np.outer(w2, g2)

    return LowRankCoupling(side(a), side(b), g)


def random_triple(a, b, r, alpha, seed=0, delta=1e-3, max_iter=5000):
    """Projection of a Philox-seeded kernel triple with entries in ``[0.5, 1.5)``."""
    rng = np.random.Generator(np.random.Philox(seed))
    kernels = KernelTriple(
        rng.uniform(0.5, 1.5, (len(a), r)),
        rng.uniform(0.5, 1.5, (len(b), r)),
        rng.uniform(0.5, 1.5, r),
    )
    return project(kernels, a, b, alpha, delta, max_iter)[0]
