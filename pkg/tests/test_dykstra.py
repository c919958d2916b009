import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from lowrank_gw import ConvergenceError, InputError, ValidationError
from lowrank_gw.dykstra import (
    KernelTriple,
    LowRankCoupling,
    project,
    random_triple,
    rank2_triple,
    uniform_triple,
)
from lowrank_gw.oracles import generalized_kl
from lowrank_gw.sinkhorn import uniform


def simplex(rng, n):
    w = rng.uniform(0.5, 1.5, n)
    return w / w.sum()


def kernels(rng, n, m, r, spread=2.0):
    return KernelTriple(
        np.exp(rng.uniform(-spread, spread, (n, r))),
        np.exp(rng.uniform(-spread, spread, (m, r))),
        np.exp(rng.uniform(-spread, spread, r)),
    )


def slsqp_projection(K, a, b, alpha):
    # KL projection written as a generic constrained program
    n, r = K.K1.shape
    m = K.K2.shape[0]
    sizes = [n * r, m * r, r]

    def split(x):
        return x[: sizes[0]].reshape(n, r), x[sizes[0] : sizes[0] + sizes[1]].reshape(m, r), x[-r:]

    def kl(x):
        return sum(float(np.sum(u * np.log(u / k) - u + k)) for u, k in zip(split(x), K.blocks()))

    cons = [
        {"type": "eq", "fun": lambda x: split(x)[0].sum(1) - a},
        # one row sum of R is implied by the other constraints
        {"type": "eq", "fun": lambda x: split(x)[1].sum(1)[:-1] - b[:-1]},
        {"type": "eq", "fun": lambda x: split(x)[0].sum(0) - split(x)[2]},
        {"type": "eq", "fun": lambda x: split(x)[1].sum(0) - split(x)[2]},
        {"type": "ineq", "fun": lambda x: split(x)[2] - alpha},
    ]
    x0 = np.concatenate([b.ravel() for b in uniform_triple(a, b, r).blocks()])
    res = minimize(kl, x0, constraints=cons, bounds=[(1e-12, None)] * x0.size, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 2000})
    assert res.success
    return LowRankCoupling(*split(res.x)), res.fun


@pytest.mark.filterwarnings("ignore:Values in x were outside bounds")
@pytest.mark.parametrize("seed", range(6))
def test_projection_matches_generic_solver(seed):
    rng = np.random.default_rng(seed)
    n, m, r = 4, 3, 2
    a, b = simplex(rng, n), simplex(rng, m)
    alpha = (1e-6, 0.45)[seed % 2]
    K = kernels(rng, n, m, r)
    t, _ = project(K, a, b, alpha, delta=1e-12, max_iter=100000)
    ref, ref_val = slsqp_projection(K, a, b, alpha)
    val = generalized_kl(t, K.blocks()) + sum(float(k.sum()) for k in K.blocks())
    assert val == pytest.approx(ref_val, rel=1e-6, abs=1e-9)
    for x, y in zip(t.blocks(), ref.blocks()):
        assert np.allclose(x, y, atol=1e-5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 20), st.integers(1, 20), st.integers(1, 6), st.floats(0.0, 1.0))
def test_feasibility_property(seed, n, m, r, frac):
    rng = np.random.default_rng(seed)
    a, b = simplex(rng, n), simplex(rng, m)
    alpha = max(frac, 1e-9) / r
    t, it = project(kernels(rng, n, m, r), a, b, alpha, delta=1e-3)
    res = t.residuals(a, b)
    assert res["Q1-a"] + res["R1-b"] < 1e-3
    assert res["QT1-g"] <= 1e-12 and res["RT1-g"] <= 1e-12
    assert np.all(t.g >= alpha)
    assert np.all(t.Q >= 0) and np.all(t.R >= 0)
    assert it >= 1


def test_projection_of_a_feasible_point_is_itself():
    rng = np.random.default_rng(9)
    a, b = simplex(rng, 6), simplex(rng, 5)
    t = random_triple(a, b, 3, 1e-6, seed=3, delta=1e-13, max_iter=100000)
    again, _ = project(KernelTriple(*t.blocks()), a, b, 1e-6, delta=1e-12)
    for x, y in zip(t.blocks(), again.blocks()):
        assert np.allclose(x, y, atol=1e-10)


def test_warm_start_state_round_trip():
    rng = np.random.default_rng(10)
    a, b = simplex(rng, 30), simplex(rng, 25)
    K = kernels(rng, 30, 25, 4)
    cold, it_cold, state = project(K, a, b, 1e-4, delta=1e-8, return_state=True)
    warm, it_warm = project(K, a, b, 1e-4, delta=1e-8, state=state)
    assert it_warm <= it_cold
    for x, y in zip(cold.blocks(), warm.blocks()):
        assert np.allclose(x, y, atol=1e-6)


@pytest.mark.parametrize("maker", [uniform_triple, rank2_triple])
def test_starting_triples_are_feasible(maker):
    a, b = simplex(np.random.default_rng(11), 7), uniform(9)
    t = maker(a, b, 4)
    t.validate(a, b, alpha=0.0, tol=1e-12)


def test_rank2_triple_has_distinct_columns():
    t = rank2_triple(uniform(5), uniform(6), 3)
    assert np.linalg.matrix_rank(t.Q) == 2
    with pytest.raises(InputError):
        rank2_triple(np.array([1.0, 0.0]), uniform(3), 2)


def test_random_triple_is_reproducible():
    a, b = uniform(8), uniform(7)
    t1, t2 = random_triple(a, b, 3, 1e-4, seed=5), random_triple(a, b, 3, 1e-4, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(t1.blocks(), t2.blocks()))
    t3 = random_triple(a, b, 3, 1e-4, seed=6)
    assert not np.array_equal(t1.Q, t3.Q)


def test_validate_reports_residuals():
    t = uniform_triple(uniform(3), uniform(3), 2)
    bad = LowRankCoupling(t.Q * 1.1, t.R, t.g)
    with pytest.raises(ValidationError) as info:
        bad.validate(uniform(3), uniform(3))
    assert "Q1-a" in info.value.residuals
    with pytest.raises(ValidationError):
        t.validate(alpha=0.6)


def test_errors():
    rng = np.random.default_rng(12)
    a = uniform(4)
    K = kernels(rng, 4, 4, 2)
    with pytest.raises(InputError):
        project(K, a, a, alpha=0.6)
    with pytest.raises(InputError):
        project(KernelTriple(K.K1, K.K2, np.ones(3)), a, a, 1e-3)
    with pytest.raises(InputError):
        project(KernelTriple(-K.K1, K.K2, K.k3), a, a, 1e-3)
    with pytest.raises(ConvergenceError) as info:
        project(kernels(rng, 40, 40, 5, spread=8.0), uniform(40), uniform(40), 1e-3, delta=1e-14, max_iter=2)
    assert info.value.iterations == 2


def test_warm_start_from_another_kernel_reaches_the_same_projection():
    rng = np.random.default_rng(13)
    a, b = simplex(rng, 20), simplex(rng, 15)
    alpha = 0.2
    _, _, state = project(kernels(rng, 20, 15, 4), a, b, alpha, delta=1e-10, return_state=True)
    K = kernels(rng, 20, 15, 4)
    cold, _ = project(K, a, b, alpha, delta=1e-11, max_iter=100000)
    warm, _ = project(K, a, b, alpha, delta=1e-11, max_iter=100000, state=state)
    for x, y in zip(cold.blocks(), warm.blocks()):
        assert np.allclose(x, y, atol=1e-8)


def test_rank_one_polytope_is_a_point():
    rng = np.random.default_rng(11)
    a, b = simplex(rng, 5), simplex(rng, 4)
    t, _ = project(KernelTriple(a[:, None], b[:, None], np.ones(1)), a, b, alpha=0.5, delta=1e-12)
    assert np.allclose(t.Q[:, 0], a, atol=1e-14) and np.allclose(t.R[:, 0], b, atol=1e-14)
    assert np.allclose(t.g, 1.0, atol=1e-14)


def test_projection_beats_a_thousand_random_feasible_triples():
    rng = np.random.default_rng(12)
    n, m, r, alpha = 6, 5, 3, 1e-4
    a, b = simplex(rng, n), simplex(rng, m)
    K = kernels(rng, n, m, r)
    t, _ = project(K, a, b, alpha, delta=1e-10, max_iter=100000)
    res = t.residuals(a, b)
    assert max(res.values()) < 1e-10
    best = generalized_kl(t.blocks(), K.blocks())
    for seed in range(1000):
        x = random_triple(a, b, r, alpha, seed=seed, delta=1e-10, max_iter=100000)
        assert best <= generalized_kl(x.blocks(), K.blocks()) + 1e-9
