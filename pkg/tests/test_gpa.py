import math

import numpy as np
import pytest
from scipy.optimize import linprog

from pgo_bailout.errors import DimensionMismatch, InfeasibleStart, RankDeficient, ValidationError
from pgo_bailout.gpa import (BEST_OF_GRID, FIRST_IMPROVEMENT, GpaConfig, LinearConstraints,
                             bailout_constraints, gpa_maximize, independent_rows, max_step,
                             projection_matrix)

from qp_cases import constructed_qp, objective, two_bank_example


def _check_run(res, cons, f):
    values = [f(x) for x in res.iterates]
    assert all(cons.is_feasible(x, 1e-9) for x in res.iterates)
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_two_bank_example():
    Q, c, cons, x0, xs = two_bank_example()
    f, g = objective(Q, c)
    res = gpa_maximize(f, g, cons, x0, GpaConfig(step_rule=BEST_OF_GRID))
    assert res.value == pytest.approx(f(xs), abs=1e-6)
    assert np.allclose(res.x, xs, atol=1e-6)
    _check_run(res, cons, f)


def test_two_bank_first_improvement_creeps_towards_facet():
    # each accepted step covers 1/N of the remaining distance to the budget row
    Q, c, cons, x0, xs = two_bank_example()
    f, g = objective(Q, c)
    res = gpa_maximize(f, g, cons, x0, GpaConfig(step_rule=FIRST_IMPROVEMENT))
    _check_run(res, cons, f)
    assert 0 < f(xs) - res.value < 1e-3


@pytest.mark.parametrize("seed", range(10))
def test_constructed_qps_best_of_grid(seed):
    Q, c, cons, x0, xs = constructed_qp(seed)
    f, g = objective(Q, c)
    res = gpa_maximize(f, g, cons, x0, GpaConfig(step_rule=BEST_OF_GRID))
    assert abs(res.value - f(xs)) <= 1e-6
    _check_run(res, cons, f)


@pytest.mark.parametrize("seed", range(10))
def test_constructed_qps_first_improvement_is_monotone_and_feasible(seed):
    # the greedy rule can take ever-shorter steps, so only safety is asserted
    Q, c, cons, x0, xs = constructed_qp(seed)
    f, g = objective(Q, c)
    res = gpa_maximize(f, g, cons, x0, GpaConfig(step_rule=FIRST_IMPROVEMENT))
    _check_run(res, cons, f)
    assert f(xs) - res.value >= -1e-9


def test_start_at_kkt_point_stops_immediately():
    Q, c, cons, _, xs = two_bank_example()
    f, g = objective(Q, c)
    res = gpa_maximize(f, g, cons, xs)
    assert res.converged and res.iterations == 1
    assert np.array_equal(res.x, xs)


def test_linear_objective_reaches_budget_facet():
    rng = np.random.default_rng(4)
    n, tau = 5, 2.0
    c = rng.uniform(0.1, 1.0, n)
    cons = bailout_constraints(n, tau)
    res = gpa_maximize(lambda x: float(c @ x), lambda x: c, cons, np.zeros(n),
                       GpaConfig(step_rule=BEST_OF_GRID))
    lp = linprog(-c, A_ub=np.ones((1, n)), b_ub=[tau], bounds=[(0, None)] * n, method="highs")
    assert res.value == pytest.approx(-lp.fun, abs=1e-8)
    assert res.x.sum() == pytest.approx(tau, abs=1e-9)


def test_caps_respected():
    n, tau, cap = 4, 1.0, 0.3
    c = np.array([4.0, 3.0, 2.0, 1.0])
    cons = bailout_constraints(n, tau, np.full(n, cap))
    res = gpa_maximize(lambda x: float(c @ x), lambda x: c, cons, np.zeros(n),
                       GpaConfig(step_rule=BEST_OF_GRID))
    assert (res.x <= cap + 1e-12).all()
    assert res.value == pytest.approx(4 * cap + 3 * cap + 2 * 0.3 + 1 * 0.1, abs=1e-8)


def test_max_step_examples():
    cons = bailout_constraints(2, 1.0)
    assert max_step(cons.A, cons.b, np.zeros(2), np.ones(2)) == pytest.approx(0.5)
    A = np.array([[1.0, 0.0]])
    assert math.isinf(max_step(A, [0.0], np.array([1.0, 0.0]), np.array([1.0, -1.0])))
    assert math.isinf(max_step(np.zeros((0, 2)), [], np.zeros(2), np.ones(2)))


def test_projection_and_dependent_rows():
    M = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 1.0]])
    keep = independent_rows(M)
    assert list(keep) == [0, 2]
    P = projection_matrix(M[keep])
    assert np.allclose(P @ P, P) and np.allclose(P, P.T)
    assert np.allclose(M @ P, 0, atol=1e-12)
    assert np.array_equal(projection_matrix(np.zeros((0, 3))), np.eye(3))
    with pytest.raises(RankDeficient):
        projection_matrix(M)


def test_errors():
    cons = bailout_constraints(2, 1.0)
    f = lambda x: 0.0
    g = lambda x: np.zeros(2)
    with pytest.raises(InfeasibleStart):
        gpa_maximize(f, g, cons, np.array([1.0, 1.0]))
    with pytest.raises(DimensionMismatch):
        gpa_maximize(f, g, cons, np.zeros(3))
    with pytest.raises(DimensionMismatch):
        LinearConstraints(np.eye(2), np.zeros(3))
    with pytest.raises(ValidationError):
        GpaConfig(step_rule="nope")


def test_equality_constraints():
    # maximise -(x-2)^2-(y-2)^2 subject to x + y = 1, x, y >= 0
    cons = LinearConstraints(np.eye(2), np.zeros(2), E=[[1.0, 1.0]], e=[1.0], diameter=2.0)
    f = lambda x: -float(((x - 2) ** 2).sum())
    g = lambda x: -2 * (x - 2)
    res = gpa_maximize(f, g, cons, np.array([1.0, 0.0]), GpaConfig(step_rule=BEST_OF_GRID))
    assert np.allclose(res.x, [0.5, 0.5], atol=1e-6)


def test_truncation_and_trajectory():
    Q, c, cons, x0, _ = constructed_qp(1)
    f, g = objective(Q, c)
    res = gpa_maximize(f, g, cons, x0, GpaConfig(max_iter=1, step_rule=BEST_OF_GRID))
    assert res.truncated or res.converged
    lines = res.trajectory_csv().splitlines()
    assert lines[0] == "iter,objective_surrogate,step,active_set_size"
    assert len(lines) == len(res.trajectory) + 1
