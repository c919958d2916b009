"""Self-check suites run by ``lowrank-gw validate``.

Each suite returns a list of :class:`Check` results comparing library
output with an independent oracle from :mod:`lowrank_gw.oracles`.
"""

from dataclasses import dataclass

import numpy as np

from .costs import dense_cost, normalize_costs, squared_euclidean_factors
from .dykstra import KernelTriple, LowRankCoupling, project
from .entropic import eval_gw_objective
from .gw_lr import GwLrConfig, gradient, objective_with_entropy, solve_gw_lr_linear
from .lot import build_init_cost
from .oracles import allocation_scope, finite_difference_gradient, gw_quadruple_sum
from .sinkhorn import kl_project, uniform

SUITES = ("feasibility", "objective", "gradient", "bound", "alloc")


@dataclass
class Check:
    name: str
    passed: bool
    residual: float
    limit: float

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: residual={self.residual:.3e} limit={self.limit:.1e}"


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _simplex(rng, n):
    w = rng.uniform(0.5, 1.5, n)
    return w / w.sum()


def _random_plan(rng, a, b):
    coupling, _ = kl_project(rng.uniform(0.1, 1.0, (a.size, b.size)), a, b, delta=1e-13)
    return coupling.plan


def suite_feasibility(seed=0, trials=50, delta=1e-3):
    rng = _rng(seed)
    worst_marg, worst_inner, worst_alpha = 0.0, 0.0, 0.0
    for _ in range(trials):
        n, m, r = rng.integers(2, 12), rng.integers(2, 12), rng.integers(1, 5)
        a, b = _simplex(rng, n), _simplex(rng, m)
        # near 1/r the lower bound on g is active
        alpha = float(rng.choice([1e-4, 0.5 / r, 0.95 / r]))
        kernels = KernelTriple(rng.uniform(0.01, 2.0, (n, r)), rng.uniform(0.01, 2.0, (m, r)), rng.uniform(0.01, 2.0, r))
        t, _ = project(kernels, a, b, alpha, delta)
        res = t.residuals(a, b)
        worst_marg = max(worst_marg, res["Q1-a"], res["R1-b"])
        worst_inner = max(worst_inner, res["QT1-g"], res["RT1-g"])
        worst_alpha = max(worst_alpha, float(np.max(alpha - t.g)))
    return [
        Check("outer marginals", worst_marg < delta, worst_marg, delta),
        Check("inner marginal", worst_inner < delta, worst_inner, delta),
        Check("g >= alpha", worst_alpha <= 0.0, max(worst_alpha, 0.0), 0.0),
    ]


def suite_objective(seed=0, trials=50):
    rng = _rng(seed)
    worst = 0.0
    for _ in range(trials):
        n, m = rng.integers(1, 9), rng.integers(1, 9)
        A = dense_cost(rng.standard_normal((n, 2)), 2)
        B = dense_cost(rng.standard_normal((m, 3)), 2)
        P = _random_plan(rng, _simplex(rng, n), _simplex(rng, m))
        ref = gw_quadruple_sum(A, B, P)
        worst = max(worst, abs(ref - eval_gw_objective(A, B, P)) / (1.0 + abs(ref)))
    return [Check("quadruple sum vs reformulation", worst <= 1e-9, worst, 1e-9)]


def suite_gradient(seed=0, trials=10):
    rng = _rng(seed)
    worst = 0.0
    for k in range(trials):
        eps = 0.0 if k % 2 == 0 else 0.1
        n, m, r = 6, 5, 3
        A = dense_cost(rng.standard_normal((n, 2)), 2)
        B = dense_cost(rng.standard_normal((m, 2)), 2)
        t = LowRankCoupling(rng.uniform(0.1, 1.0, (n, r)), rng.uniform(0.1, 1.0, (m, r)), rng.uniform(0.2, 1.0, r))
        exact = gradient(A, B, t, eps)
        approx = finite_difference_gradient(lambda Q, R, g: objective_with_entropy(A, B, Q, R, g, eps), t)
        for x, y in zip(exact.blocks(), approx.blocks()):
            worst = max(worst, float(np.max(np.abs(x - y)) / max(np.max(np.abs(x)), 1e-12)))
    return [Check("analytic vs finite-difference gradient", worst <= 1e-5, worst, 1e-5)]


def suite_bound(seed=0, trials=100):
    rng = _rng(seed)
    worst = -np.inf
    for _ in range(trials):
        n, m = rng.integers(1, 9), rng.integers(1, 9)
        A = dense_cost(rng.standard_normal((n, 2)), 1)
        B = dense_cost(rng.standard_normal((m, 2)), 1)
        a, b = _simplex(rng, n), _simplex(rng, m)
        P = _random_plan(rng, a, b)
        lower = float(np.sum(build_init_cost(A, a, B, b).dense() * P))
        worst = max(worst, lower - gw_quadruple_sum(A, B, P))
    return [Check("GW(P) >= <C_init, P>", worst <= 1e-10, max(worst, 0.0), 1e-10)]


def suite_alloc(seed=0, n=2000, rank=10, outer_iter=5):
    rng = _rng(seed)
    X, Y = rng.uniform(size=(n, 2)), rng.uniform(size=(n, 2))
    A, B, _ = normalize_costs(squared_euclidean_factors(X), squared_euclidean_factors(Y))
    a = uniform(n)
    cfg = GwLrConfig(rank=rank, outer_iter=outer_iter, seed=seed)
    with allocation_scope(threshold=n * n) as stats:
        solve_gw_lr_linear(A, B, a, a, cfg)
    events = len(stats.large_buffer_events)
    return [Check(f"large buffers during lin-lr (n={n})", events == 0, float(events), 0.0)]


def run_suite(name, seed=0):
    return {
        "feasibility": suite_feasibility,
        "objective": suite_objective,
        "gradient": suite_gradient,
        "bound": suite_bound,
        "alloc": suite_alloc,
    }[name](seed=seed)
