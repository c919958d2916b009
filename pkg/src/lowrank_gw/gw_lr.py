"""Low-rank GW by mirror descent over ``(Q, R, g)``.

The coupling ``P = Q diag(1/g) R^T`` is never formed.  All products with the
costs go through ``A @ Q`` and ``B @ R``, so with factored costs every
buffer has ``O((n + m) r)`` entries.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ._errors import ConvergenceError, InputError, NumericalError, RefusalError
from .costs import FactoredCost, as_cost, cost_apply, cost_shape, hadamard_square_apply
from .dykstra import KernelTriple, LowRankCoupling, project, random_triple, rank2_triple, uniform_triple
from .lot import EXP_GUARD, KERNEL_FLOOR, first_lower_bound
from .oracles import bregman_kl
from .report import SolveReport, _Clock, relative_change
from .sinkhorn import Coupling, check_marginal

DENSIFY_CAP = 10**7


@dataclass
class GwLrConfig:
    """Solver parameters.

    ``epsilon = 0`` gives the plain rank-constrained problem; ``epsilon > 0``
    adds an entropic term on all three blocks.  ``init`` is one of
    ``"lower_bound"``, ``"rank2"``, ``"uniform"`` or ``"random"`` (the
    latter uses ``seed``).  ``"uniform"`` is a fixed point of the iteration
    and only useful as a baseline.
    """

    rank: int
    alpha: float = 1e-10
    gamma: float = 100.0
    epsilon: float = 0.0
    outer_iter: int = 50
    dykstra_delta: float = 1e-3
    dykstra_max_iter: int = 5000
    stop_tol: float = 1e-6
    seed: int = 0
    init: str = "lower_bound"
    literal_init: bool = False
    lot_outer: int = 50
    warm_start: bool = False

    def __post_init__(self):
        if self.rank < 1:
            raise InputError("rank must be at least 1")
        if not 0 < self.alpha <= 1.0 / self.rank:
            raise InputError(f"alpha must lie in (0, 1/rank], got {self.alpha}")
        if not self.gamma > 0:
            raise InputError("gamma must be positive")
        if self.epsilon < 0:
            raise InputError("epsilon must be nonnegative")
        if self.init not in ("lower_bound", "rank2", "uniform", "random"):
            raise InputError(f"unknown init {self.init!r}")


@dataclass
class GradientTriple:
    dQ: np.ndarray
    dR: np.ndarray
    dg: np.ndarray

    def blocks(self):
        return (self.dQ, self.dR, self.dg)


class _Products:
    """The small products every quantity of an iterate is built from."""

    def __init__(self, A, B, triple):
        Q, R, g = triple.blocks()
        self.triple = triple
        self.AQ = cost_apply(A, Q)
        self.BR = cost_apply(B, R)
        self.QtAQ = Q.T @ self.AQ
        self.RtBR = R.T @ self.BR
        gg = np.outer(g, g)
        self.APBRD = self.AQ @ (self.RtBR / gg)
        self.BPtAQD = self.BR @ (self.QtAQ / gg)
        # omega_k = [Q^T A P B R]_kk
        self.omega = np.einsum("kj,jk->k", self.QtAQ, self.RtBR / g[:, None])

    def cross(self):
        """``<A P B, P>``."""
        return float(np.sum(self.omega / self.triple.g))

    def gradient(self, epsilon):
        Q, R, g = self.triple.blocks()
        dQ = -4.0 * self.APBRD
        dR = -4.0 * self.BPtAQD
        dg = 4.0 * self.omega / g**2
        if epsilon:
            dQ = dQ + epsilon * np.log(Q)
            dR = dR + epsilon * np.log(R)
            dg = dg + epsilon * np.log(g)
        return GradientTriple(dQ, dR, dg)


def _check_interior(triple):
    for name, block in zip(("Q", "R", "g"), triple.blocks()):
        if not np.all(block > 0):
            raise InputError(f"{name} has non-positive entries; the point must be interior")


def gradient(A, B, triple, epsilon=0.0):
    """Gradient of ``-2 <A P B, P> + epsilon * sum x (log x - 1)`` over the blocks.

    Returns
    -------
    GradientTriple
        ``dQ = -4 A P B R diag(1/g) + eps log Q``,
        ``dR = -4 B P^T A Q diag(1/g) + eps log R``,
        ``dg = 4 omega / g^2 + eps log g`` with ``omega = diag(Q^T A P B R)``.
    """
    _check_interior(triple)
    return _Products(as_cost(A), as_cost(B), triple).gradient(epsilon)


def objective_with_entropy(A, B, Q, R, g, epsilon=0.0):
    """The function whose gradient :func:`gradient` returns (no constant term)."""
    triple = LowRankCoupling(Q, R, g)
    val = -2.0 * _Products(as_cost(A), as_cost(B), triple).cross()
    if epsilon:
        val += epsilon * sum(float(np.sum(x * (np.log(x) - 1.0))) for x in (Q, R, g))
    return val


def _kernels_from_gradient(triple, grad, gamma, stabilize=True):
    """``exp(log xi - gamma * grad)`` per block, failing fast above the guard.

    With ``stabilize`` each row of ``K1``/``K2`` and the vector ``k3`` are
    divided by their maximum, which the projection absorbs into its
    scalings, and entries below ``exp(-KERNEL_FLOOR)`` of that maximum are
    raised to it so that no kernel entry underflows to zero.
    """
    out = []
    for name, block, d in zip(("K1", "K2", "k3"), triple.blocks(), grad.blocks()):
        with np.errstate(divide="ignore"):
            expo = np.log(block) - gamma * d
        top = float(np.max(expo))
        if not np.isfinite(top) or top > EXP_GUARD:
            raise NumericalError(
                f"kernel exponent {top:.3g} in {name} exceeds {EXP_GUARD}; lower gamma or rescale the costs",
                {"block": name, "max_exponent": top},
            )
        if stabilize:
            expo = expo - np.max(expo, axis=-1, keepdims=True)
            expo = np.maximum(expo, -KERNEL_FLOOR)
        out.append(np.exp(expo))
    return KernelTriple(*out)


def step_kernels(A, B, triple, cfg):
    """Mirror-descent kernels ``exp(log xi - gamma * grad)`` for each block.

    For ``epsilon = 0`` this is ``K1 = Q * exp(4 gamma A P B R diag(1/g))``
    and so on; for ``epsilon > 0`` the log terms pick up the factor
    ``1 - gamma * epsilon``.
    """
    _check_interior(triple)
    grad = _Products(as_cost(A), as_cost(B), triple).gradient(cfg.epsilon)
    return _kernels_from_gradient(triple, grad, cfg.gamma, stabilize=False)


def symmetric_kl(x, y):
    return bregman_kl(x, y) + bregman_kl(y, x)


def delta_criterion(A, B, triple, gamma, alpha, epsilon=0.0, dykstra_delta=1e-3, dykstra_max_iter=5000):
    """Stationarity measure ``(KL(xi, G) + KL(G, xi)) / gamma^2``.

    ``G`` is one mirror-descent step from ``xi``.  KL here is the Bregman
    divergence of the negative entropy, so the value is nonnegative.

    Returns
    -------
    float, LowRankCoupling
    """
    _check_interior(triple)
    grad = _Products(as_cost(A), as_cost(B), triple).gradient(epsilon)
    kernels = _kernels_from_gradient(triple, grad, gamma)
    a = triple.Q.sum(axis=1)
    b = triple.R.sum(axis=1)
    G, _ = project(kernels, a, b, alpha, dykstra_delta, dykstra_max_iter)
    return symmetric_kl(triple, G) / gamma**2, G


def spectral_norm(cost, rtol=1e-6, max_iter=10000, seed=0):
    """Largest singular value by power iteration on ``C^T C``."""
    from .costs import cost_rapply

    cost = as_cost(cost)
    n = cost_shape(cost)[1]
    x = np.random.Generator(np.random.Philox(seed)).standard_normal(n)
    x /= np.linalg.norm(x)
    prev = 0.0
    for _ in range(max_iter):
        y = cost_rapply(cost, cost_apply(cost, x))
        lam = float(np.sqrt(max(x @ y, 0.0)))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        if abs(lam - prev) <= rtol * lam * 1e-3:
            return lam
        prev = lam
    return prev


def smoothness_constants(A, B, alpha, epsilon=0.0):
    """Relative-smoothness constant ``L = 27 (|A|_2 |B|_2 / alpha^4 + eps)``.

    Returns ``(L, 1 / (2 L))``; the step is ``inf`` (with a warning) when
    ``L = 0``.
    """
    if not alpha > 0:
        raise InputError("alpha must be positive")
    L = 27.0 * (spectral_norm(A) * spectral_norm(B) / alpha**4 + epsilon)
    if L == 0.0:
        warnings.warn("smoothness constant is zero; any step size is admissible", RuntimeWarning)
        return 0.0, float("inf")
    return L, 1.0 / (2.0 * L)


def densify(triple, cap=DENSIFY_CAP):
    """Materialise ``Q diag(1/g) R^T``; refuses beyond ``cap`` entries."""
    n, m = triple.shape
    if n * m > cap:
        raise RefusalError(f"refusing to densify a {n}x{m} coupling (cap {cap})")
    from . import _alloc

    _alloc.note(n * m, "densify")
    plan = (triple.Q / triple.g) @ triple.R.T
    return Coupling(plan, triple.Q.sum(axis=1), triple.R.sum(axis=1))


def _initial_triple(A, B, a, b, cfg, report):
    r = cfg.rank
    if cfg.init == "uniform":
        return uniform_triple(a, b, r)
    if cfg.init == "rank2":
        return rank2_triple(a, b, r)
    if cfg.init == "random":
        return random_triple(a, b, r, cfg.alpha, cfg.seed, cfg.dykstra_delta, cfg.dykstra_max_iter)
    try:
        triple, _ = first_lower_bound(
            A, B, a, b, r, cfg.alpha, cfg.gamma, cfg.dykstra_delta,
            literal=cfg.literal_init, max_outer=cfg.lot_outer, seed=cfg.seed,
        )
    except (ConvergenceError, NumericalError):
        report.init_fallback = True
        return rank2_triple(a, b, r)
    if not all(np.all(x > 0) for x in triple.blocks()):
        report.init_fallback = True
        return rank2_triple(a, b, r)
    return triple


def _solve(A, B, a, b, cfg):
    n, m = cost_shape(A)[0], cost_shape(B)[0]
    if cost_shape(A) != (n, n) or cost_shape(B) != (m, m):
        raise InputError("costs must be square")
    a = check_marginal(a, "a", n)
    b = check_marginal(b, "b", m)
    clock = _Clock()
    report = SolveReport()

    def energy(triple, prods):
        # marginals of the iterate itself, so the value is the exact GW energy of its plan
        p, q = triple.Q.sum(axis=1), triple.R.sum(axis=1)
        const = float(hadamard_square_apply(A, p) @ p + hadamard_square_apply(B, q) @ q)
        return const - 2.0 * prods.cross()

    triple = _initial_triple(A, B, a, b, cfg, report)
    prods = _Products(A, B, triple)
    prev = report.initial_loss = energy(triple, prods)
    state = None
    for k in range(cfg.outer_iter):
        try:
            kernels = _kernels_from_gradient(triple, prods.gradient(cfg.epsilon), cfg.gamma)
            if cfg.warm_start:
                new, inner, state = project(
                    kernels, a, b, cfg.alpha, cfg.dykstra_delta, cfg.dykstra_max_iter,
                    state=state, return_state=True,
                )
            else:
                new, inner = project(kernels, a, b, cfg.alpha, cfg.dykstra_delta, cfg.dykstra_max_iter)
        except ConvergenceError as exc:
            raise ConvergenceError(f"outer iteration {k + 1}: {exc}", exc.residual, exc.iterations) from exc
        except NumericalError as exc:
            raise NumericalError(f"outer iteration {k + 1}: {exc}", exc.diagnostics) from exc
        delta = symmetric_kl(triple, new) / cfg.gamma**2
        triple = new
        prods = _Products(A, B, triple)
        loss = energy(triple, prods)
        if not np.isfinite(loss):
            raise NumericalError(f"outer iteration {k + 1}: loss became non-finite")
        report.losses.append(loss)
        report.deltas.append(delta)
        report.inner_iterations.append(inner)
        report.elapsed_ms.append(clock.ms())
        if relative_change(prev, loss) < cfg.stop_tol:
            report.stop_reason = "stop_tol"
            break
        prev = loss
    return triple, report


def solve_gw_lr(A, B, a, b, cfg):
    """Rank-constrained GW with dense costs, ``O((n^2 + m^2) r)`` per step.

    Parameters
    ----------
    A, B : ndarray, shapes (n, n) and (m, m)
    a, b : ndarray
    cfg : GwLrConfig

    Returns
    -------
    LowRankCoupling, SolveReport
    """
    return _solve(np.asarray(A, dtype=float), np.asarray(B, dtype=float), a, b, cfg)


def solve_gw_lr_linear(A, B, a, b, cfg):
    """Rank-constrained GW with factored costs; time and memory linear in ``n + m``."""
    if not (isinstance(A, FactoredCost) and isinstance(B, FactoredCost)):
        raise InputError("solve_gw_lr_linear requires factored costs for both spaces")
    return _solve(A, B, a, b, cfg)
