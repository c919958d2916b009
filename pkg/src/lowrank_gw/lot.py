"""Low-rank linear OT and the first-lower-bound initialisation of GW-LR."""

from dataclasses import dataclass

import numpy as np

from ._errors import InputError, NumericalError
from .costs import FactoredCost, as_cost, cost_apply, cost_rapply, cost_shape, hadamard_square_apply
from .dykstra import KernelTriple, project, random_triple
from .report import SolveReport, _Clock, relative_change
from .sinkhorn import check_marginal

EXP_GUARD = 700.0
# kernel entries are kept within exp(-KERNEL_FLOOR) of their row maximum;
# anything smaller carries no mass and would only produce denormals
KERNEL_FLOOR = 300.0


@dataclass
class InitCostFactors:
    """Rank-3 factors ``C1 (n, 3)`` and ``C2 (3, m)`` of the 1-D init cost."""

    C1: np.ndarray
    C2: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def as_cost(self):
        return FactoredCost(self.C1, self.C2.T)

    def dense(self):
        return self.C1 @ self.C2


def build_init_cost(A, a, B, b, literal=False):
    """Factors of ``Ct[i, j] = (sqrt(x_i) - sqrt(y_j))^2`` with ``x = A^2 a``, ``y = B^2 b``.

    Squares are elementwise.  For factored costs ``x`` and ``y`` come from the
    flattened outer-product factors, in ``O(n d^2)``.

    With ``literal=True`` the square roots are dropped and the cost becomes
    ``(x_i - y_j)^2``; this variant does not carry the lower-bound guarantee
    and is only kept for comparison.
    """
    A, B = as_cost(A), as_cost(B)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = hadamard_square_apply(A, a)
    y = hadamard_square_apply(B, b)
    if np.any(x < -1e-12 * max(1.0, np.abs(x).max())) or np.any(y < -1e-12 * max(1.0, np.abs(y).max())):
        raise NumericalError("A^2 a or B^2 b has negative entries; costs are not valid")
    x = np.maximum(x, 0.0)
    y = np.maximum(y, 0.0)
    if literal:
        s, t = x, y
    else:
        s, t = np.sqrt(x), np.sqrt(y)
    C1 = np.column_stack([s**2, np.ones_like(s), -np.sqrt(2.0) * s])
    C2 = np.vstack([np.ones_like(t), t**2, np.sqrt(2.0) * t])
    return InitCostFactors(C1, C2, x, y)


def _guarded_exp(expo, name):
    """Row-normalised ``exp`` with the same guard and floor as the GW kernels."""
    top = float(np.max(expo))
    if not np.isfinite(top) or top > EXP_GUARD:
        raise NumericalError(
            f"kernel exponent {top:.3g} in {name} exceeds {EXP_GUARD}; lower gamma or rescale the costs",
            {"block": name, "max_exponent": top},
        )
    expo = expo - np.max(expo, axis=-1, keepdims=True)
    return np.exp(np.maximum(expo, -KERNEL_FLOOR))


def linear_objective(cost, triple):
    """``<C, Q diag(1/g) R^T>`` without forming the plan."""
    CR = cost_apply(cost, triple.R)
    omega = np.sum(triple.Q * CR, axis=0)
    return float(np.sum(omega / triple.g))


def linear_gradient(cost, triple):
    """Gradient of :func:`linear_objective` in ``(Q, R, g)``."""
    Q, R, g = triple.blocks()
    CR = cost_apply(cost, R)
    CtQ = cost_rapply(cost, Q)
    omega = np.sum(Q * CR, axis=0)
    return CR / g, CtQ / g, -omega / g**2


def lot_solve(
    cost, a, b, r, alpha, gamma, delta=1e-3, max_outer=50, stop_tol=1e-7, dykstra_max_iter=5000, seed=0, init=None
):
    """Mirror descent for rank-``r`` linear OT, each step projected by Dykstra.

    Starts from ``init`` or else from a seeded random feasible triple.  The
    uniform triple ``(a gbar^T, b gbar^T, gbar)`` is not used: its columns
    are identical and every step keeps them identical.

    Returns
    -------
    LowRankCoupling, SolveReport
    """
    cost = as_cost(cost)
    n, m = cost_shape(cost)
    a = check_marginal(a, "a", n)
    b = check_marginal(b, "b", m)
    r = int(r)
    if not 0 < alpha <= 1.0 / r:
        raise InputError(f"alpha must lie in (0, 1/r], got {alpha}")
    if not gamma > 0:
        raise InputError("gamma must be positive")
    clock = _Clock()
    report = SolveReport()
    triple = random_triple(a, b, r, alpha, seed, delta, dykstra_max_iter) if init is None else init
    prev = report.initial_loss = linear_objective(cost, triple)
    for _ in range(max_outer):
        gQ, gR, gg = linear_gradient(cost, triple)
        with np.errstate(divide="ignore"):
            logs = [np.log(x) for x in triple.blocks()]
        kernels = KernelTriple(
            _guarded_exp(logs[0] - gamma * gQ, "K1"),
            _guarded_exp(logs[1] - gamma * gR, "K2"),
            _guarded_exp(logs[2] - gamma * gg, "k3"),
        )
        triple, inner = project(kernels, a, b, alpha, delta, dykstra_max_iter)
        loss = linear_objective(cost, triple)
        if not np.isfinite(loss):
            raise NumericalError("linear OT objective became non-finite")
        report.losses.append(loss)
        report.deltas.append(None)
        report.inner_iterations.append(inner)
        report.elapsed_ms.append(clock.ms())
        if relative_change(prev, loss) < stop_tol:
            report.stop_reason = "stop_tol"
            break
        prev = loss
    return triple, report


def first_lower_bound(A, B, a, b, r, alpha, gamma, delta=1e-3, literal=False, max_outer=50, seed=0):
    """Low-rank OT on the 1-D init cost; returns ``(triple, bound_value)``.

    ``bound_value`` is the linear objective at the returned triple and
    bounds the rank-constrained GW energy from below (up to how well the
    inner problem is solved).
    """
    factors = build_init_cost(A, a, B, b, literal=literal)
    cost = factors.as_cost()
    triple, _ = lot_solve(cost, a, b, r, alpha, gamma, delta, max_outer, seed=seed)
    return triple, linear_objective(cost, triple)
