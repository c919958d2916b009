"""Entropic GW solvers: cubic dense updates and quadratic factored updates.

Both iterate ``C <- -4 A P B``, ``K <- exp(-C / eps)`` and a Sinkhorn
projection of ``K``; they differ only in how ``C`` and the objective are
computed.
"""

from dataclasses import dataclass

import numpy as np

from ._errors import ConvergenceError, InputError, NumericalError
from .costs import FactoredCost, as_cost, cost_apply, cost_rapply, cost_shape, hadamard_square_apply
from .report import SolveReport, _Clock, relative_change
from .sinkhorn import Coupling, check_marginal, kl_project_log


@dataclass
class EntropicConfig:
    """Parameters of the entropic solvers.

    ``epsilon`` is absolute (not relative to the cost scale).  ``init`` is
    ``"lower_bound"`` or ``"product"``.
    """

    epsilon: float
    outer_iter: int = 100
    inner_delta: float = 1e-6
    inner_max_iter: int = 10000
    init: str = "lower_bound"
    stop_tol: float = 1e-6

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InputError(f"epsilon must be positive, got {self.epsilon}")
        if self.init not in ("lower_bound", "product"):
            raise InputError(f"unknown init {self.init!r}")


def _plan_of(P):
    return P.plan if isinstance(P, Coupling) else np.asarray(P, dtype=float)


def cross_term(A, B, P):
    """``<A P B, P>``; for two factored costs only ``d x d'`` blocks are formed."""
    P = _plan_of(P)
    if isinstance(A, FactoredCost) and isinstance(B, FactoredCost):
        G1 = A.left.T @ P @ B.right
        G2 = A.right.T @ P @ B.left
        return float(np.sum(G1 * G2))
    AP = cost_apply(A, P)
    APB = cost_rapply(B, AP.T).T
    return float(np.sum(APB * P))


def eval_gw_objective(A, B, P):
    """GW energy ``<A^2 a, a> + <B^2 b, b> - 2 <A P B, P>``.

    ``a`` and ``b`` are the actual marginals of ``P``, which keeps the
    identity exact for slightly infeasible plans.
    """
    A, B = as_cost(A), as_cost(B)
    plan = _plan_of(P)
    n, m = plan.shape
    if cost_shape(A) != (n, n) or cost_shape(B) != (m, m):
        raise InputError(f"cost shapes {cost_shape(A)}, {cost_shape(B)} do not match plan {plan.shape}")
    a = plan.sum(axis=1)
    b = plan.sum(axis=0)
    const = float(hadamard_square_apply(A, a) @ a + hadamard_square_apply(B, b) @ b)
    return const - 2.0 * cross_term(A, B, plan)


def _entropic_projection(C, a, b, epsilon, delta, max_iter, init=None):
    # log-domain scaling never overflows and accepts the previous potentials
    # as a warm start, which is what makes small epsilon affordable
    if not np.all(np.isfinite(C)):
        raise NumericalError("non-finite linearised cost")
    return kl_project_log(-C / epsilon, a, b, delta, max_iter, init=init)


def init_lower_bound_entropic(A, B, a, b, epsilon, delta=1e-6, max_iter=10000):
    """Entropic plan for the 1-D cost ``(sqrt(x_i) - sqrt(y_j))^2``.

    ``x = A^2 a`` and ``y = B^2 b`` (elementwise squares); the plan starts the
    entropic solvers from the first lower bound instead of ``a b^T``.
    """
    A, B = as_cost(A), as_cost(B)
    n, m = cost_shape(A)[0], cost_shape(B)[0]
    a = check_marginal(a, "a", n)
    b = check_marginal(b, "b", m)
    x = hadamard_square_apply(A, a)
    y = hadamard_square_apply(B, b)
    s = np.sqrt(np.maximum(x, 0.0))
    t = np.sqrt(np.maximum(y, 0.0))
    C = (s[:, None] - t[None, :]) ** 2
    coupling, _ = _entropic_projection(C, a, b, epsilon, delta, max_iter)
    return coupling


def _solve(A, B, a, b, cfg, linearised_cost):
    n, m = cost_shape(A)[0], cost_shape(B)[0]
    a = check_marginal(a, "a", n)
    b = check_marginal(b, "b", m)
    clock = _Clock()
    report = SolveReport()
    if cfg.init == "lower_bound":
        P = init_lower_bound_entropic(A, B, a, b, cfg.epsilon, cfg.inner_delta, cfg.inner_max_iter).plan
    else:
        P = np.outer(a, b)
    report.initial_loss = eval_gw_objective(A, B, P)
    prev = report.initial_loss
    scal = None
    for k in range(cfg.outer_iter):
        C = linearised_cost(P)
        try:
            coupling, scal = _entropic_projection(
                C, a, b, cfg.epsilon, cfg.inner_delta, cfg.inner_max_iter, init=scal
            )
        except ConvergenceError as exc:
            raise ConvergenceError(f"outer iteration {k + 1}: {exc}", exc.residual, exc.iterations) from exc
        except NumericalError as exc:
            raise NumericalError(f"outer iteration {k + 1}: {exc}", exc.diagnostics) from exc
        P = coupling.plan
        loss = eval_gw_objective(A, B, P)
        report.losses.append(loss)
        report.deltas.append(None)
        report.inner_iterations.append(scal.iterations)
        report.elapsed_ms.append(clock.ms())
        if relative_change(prev, loss) < cfg.stop_tol:
            report.stop_reason = "stop_tol"
            break
        prev = loss
    return Coupling(P, a, b), report


def solve_entropic_gw(A, B, a, b, cfg):
    """Entropic GW with dense costs; each outer step costs ``O(n^2 m + n m^2)``.

    Parameters
    ----------
    A, B : ndarray, shapes (n, n) and (m, m)
    a, b : ndarray
        Probability vectors.
    cfg : EntropicConfig

    Returns
    -------
    Coupling, SolveReport
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return _solve(A, B, a, b, cfg, lambda P: -4.0 * (A @ P @ B))


def solve_quad_entropic_gw(A, B, a, b, cfg):
    """Entropic GW with factored costs ``A = A1 A2^T``, ``B = B1 B2^T``.

    The linearised cost is ``-4 A1 (A2^T P B1) B2^T``, quadratic overall.
    """
    if not (isinstance(A, FactoredCost) and isinstance(B, FactoredCost)):
        raise InputError("solve_quad_entropic_gw requires factored costs for both spaces")

    def linearised(P):
        G2 = A.right.T @ P @ B.left
        return -4.0 * (A.left @ G2 @ B.right.T)

    return _solve(A, B, a, b, cfg, linearised)
