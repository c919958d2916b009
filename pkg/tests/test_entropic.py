import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lowrank_gw import ConvergenceError, InputError
from lowrank_gw.costs import FactoredCost, dense_cost, normalize_costs, squared_euclidean_factors
from lowrank_gw.datasets import DatasetSpec, generate, isometric_pair
from lowrank_gw.entropic import (
    EntropicConfig,
    cross_term,
    eval_gw_objective,
    init_lower_bound_entropic,
    solve_entropic_gw,
    solve_quad_entropic_gw,
)
from lowrank_gw.oracles import foscttm, gw_quadruple_sum
from lowrank_gw.sinkhorn import kl_project, uniform


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 7).flatmap(lambda n: st.integers(1, 7).map(lambda m: (n, m))).flatmap(
        lambda s: st.tuples(
            arrays(float, (s[0], 2), elements=st.floats(-5, 5)),
            arrays(float, (s[1], 2), elements=st.floats(-5, 5)),
            arrays(float, s, elements=st.floats(0, 1)),
        )
    )
)
def test_reformulated_objective_holds_for_any_nonnegative_matrix(data):
    X, Y, P = data
    A, B = dense_cost(X, 1), dense_cost(Y, 1)
    ref = gw_quadruple_sum(A, B, P)
    assert eval_gw_objective(A, B, P) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_factored_cross_term_matches_dense():
    rng = np.random.default_rng(0)
    X, Y = rng.standard_normal((12, 2)), rng.standard_normal((9, 3))
    FA, FB = squared_euclidean_factors(X), squared_euclidean_factors(Y)
    P = rng.uniform(size=(12, 9))
    assert cross_term(FA, FB, P) == pytest.approx(cross_term(FA.dense(), FB.dense(), P), rel=1e-10)
    assert eval_gw_objective(FA, FB, P) == pytest.approx(gw_quadruple_sum(FA.dense(), FB.dense(), P), rel=1e-9)


def small_pair(seed=0, n=12, m=10):
    rng = np.random.default_rng(seed)
    A, B, _ = normalize_costs(dense_cost(rng.uniform(size=(n, 2)), 2), dense_cost(rng.uniform(size=(m, 2)), 2))
    return A, B, uniform(n), uniform(m)


def test_one_outer_step_is_the_sinkhorn_projection_of_the_linearised_kernel():
    A, B, a, b = small_pair()
    eps = 0.05
    P, rep = solve_entropic_gw(A, B, a, b, EntropicConfig(epsilon=eps, outer_iter=1, init="product", inner_delta=1e-12))
    C = -4.0 * A @ np.outer(a, b) @ B
    ref, _ = kl_project(np.exp(-(C - C.min()) / eps), a, b, delta=1e-12)
    assert np.allclose(P.plan, ref.plan, atol=1e-12)
    assert rep.n_iter == 1


def test_lower_bound_init_is_feasible_and_sorted_for_identical_spaces():
    A, _, a, _ = small_pair()
    P = init_lower_bound_entropic(A, A, a, a, epsilon=1e-3, delta=1e-10, max_iter=100000)
    assert P.is_feasible(1e-9)


def test_quadratic_and_cubic_solvers_agree_on_factored_costs():
    rng = np.random.default_rng(1)
    X, Y = rng.uniform(size=(15, 2)), rng.uniform(size=(13, 2))
    FA, FB, _ = normalize_costs(squared_euclidean_factors(X), squared_euclidean_factors(Y))
    a, b = uniform(15), uniform(13)
    cfg = EntropicConfig(epsilon=0.02, outer_iter=5, stop_tol=0.0, inner_delta=1e-12)
    P1, r1 = solve_entropic_gw(FA.dense(), FB.dense(), a, b, cfg)
    P2, r2 = solve_quad_entropic_gw(FA, FB, a, b, cfg)
    assert np.allclose(P1.plan, P2.plan, atol=1e-10)
    assert np.allclose(r1.losses, r2.losses, rtol=1e-9)


def test_isometric_pair_is_recovered():
    X = generate(DatasetSpec("curve2d", 60, seed=3))
    _, Y, perm = isometric_pair(X, theta=1.1, translation=(3.0, -1.0))
    A, B, _ = normalize_costs(dense_cost(X, 2), dense_cost(Y, 2))
    a = uniform(60)
    P, rep = solve_entropic_gw(A, B, a, a, EntropicConfig(epsilon=1e-3, inner_delta=1e-4, inner_max_iter=100000))
    trivial = eval_gw_objective(A, B, np.outer(a, a))
    assert rep.final_loss < 1e-2 * trivial
    # barycentric projection of each source point onto the target
    Y_hat = (P.plan / P.plan.sum(1, keepdims=True)) @ Y
    assert foscttm(Y_hat, Y[perm]) < 0.05


def test_report_is_consistent():
    A, B, a, b = small_pair(2)
    P, rep = solve_entropic_gw(A, B, a, b, EntropicConfig(epsilon=0.05))
    assert rep.n_iter == len(rep.inner_iterations) == len(rep.elapsed_ms)
    assert all(d is None for d in rep.deltas)
    assert rep.final_loss == pytest.approx(eval_gw_objective(A, B, P))
    assert rep.converged and rep.stop_reason == "stop_tol"
    assert rep.elapsed_ms == sorted(rep.elapsed_ms)


def test_errors():
    A, B, a, b = small_pair()
    with pytest.raises(InputError):
        EntropicConfig(epsilon=0.0)
    with pytest.raises(InputError):
        EntropicConfig(epsilon=0.1, init="nope")
    with pytest.raises(InputError):
        solve_quad_entropic_gw(A, B, a, b, EntropicConfig(epsilon=0.1))
    with pytest.raises(InputError):
        solve_entropic_gw(A, B, a, uniform(3), EntropicConfig(epsilon=0.1))
    with pytest.raises(ConvergenceError) as info:
        solve_entropic_gw(A, B, a, b, EntropicConfig(epsilon=1e-4, inner_delta=1e-14, inner_max_iter=3))
    assert info.value.iterations == 3
    cfg = EntropicConfig(epsilon=1e-4, inner_delta=1e-14, inner_max_iter=3, init="product")
    with pytest.raises(ConvergenceError, match="outer iteration 1"):
        solve_entropic_gw(A, B, a, b, cfg)


def test_two_point_versus_one_point_energy():
    # quadruples (i, i') with i != i' each carry gap 1 and weight 1/4
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    P = np.array([[0.5], [0.5]])
    assert eval_gw_objective(A, np.zeros((1, 1)), P) == pytest.approx(0.5, abs=1e-15)
    assert gw_quadruple_sum(A, np.zeros((1, 1)), P) == pytest.approx(0.5, abs=1e-15)


def test_single_point_spaces():
    one = np.zeros((1, 1))
    P, rep = solve_entropic_gw(one, one, np.ones(1), np.ones(1), EntropicConfig(epsilon=0.1, outer_iter=3))
    assert np.array_equal(P.plan, np.ones((1, 1)))
    assert rep.final_loss == 0.0
    assert np.array_equal(init_lower_bound_entropic(one, one, np.ones(1), np.ones(1), 0.1).plan, np.ones((1, 1)))


def test_identical_clouds_reach_a_tiny_fraction_of_the_trivial_energy():
    X = np.random.default_rng(20).standard_normal((20, 2))
    A = dense_cost(X, 2)
    a = uniform(20)
    cfg = EntropicConfig(epsilon=1e-3 * float(np.median(A)), inner_delta=1e-3, inner_max_iter=100000)
    _, rep = solve_entropic_gw(A, A, a, a, cfg)
    assert rep.final_loss <= 1e-3 * eval_gw_objective(A, A, np.outer(a, a))


def test_short_trajectory_is_non_increasing():
    rng = np.random.default_rng(4)
    A = dense_cost(rng.uniform(size=(4, 2)), 2)
    B = dense_cost(rng.uniform(size=(4, 2)), 2)
    a = uniform(4)
    _, rep = solve_entropic_gw(A, B, a, a, EntropicConfig(epsilon=0.01, outer_iter=3, inner_delta=1e-12, stop_tol=0.0))
    assert len(rep.losses) == 3
    assert np.all(np.diff(rep.losses) <= 1e-12)


def test_zero_and_rank_one_factored_costs():
    rng = np.random.default_rng(6)
    a, b = uniform(7), uniform(5)
    Z7 = FactoredCost(np.zeros((7, 2)), np.zeros((7, 2)))
    Z5 = FactoredCost(np.zeros((5, 2)), np.zeros((5, 2)))
    _, rep = solve_quad_entropic_gw(Z7, Z5, a, b, EntropicConfig(epsilon=0.1, outer_iter=3, stop_tol=0.0))
    assert rep.losses == [0.0] * len(rep.losses)
    u, w = rng.uniform(size=(7, 1)), rng.uniform(size=(5, 1))
    U, W = FactoredCost(u, u), FactoredCost(w, w)
    P, rep = solve_quad_entropic_gw(U, W, a, b, EntropicConfig(epsilon=0.1, outer_iter=3, stop_tol=0.0))
    assert rep.final_loss == pytest.approx(gw_quadruple_sum(u @ u.T, w @ w.T, P.plan), rel=1e-10)


def test_lower_bound_init_on_a_random_instance_is_feasible():
    rng = np.random.default_rng(7)
    A = dense_cost(rng.uniform(size=(5, 2)), 1)
    B = dense_cost(rng.uniform(size=(5, 2)), 1)
    a = uniform(5)
    P = init_lower_bound_entropic(A, B, a, a, epsilon=0.05, delta=1e-8)
    assert P.is_feasible(1e-8)
