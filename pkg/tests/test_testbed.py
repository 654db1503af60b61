import numpy as np
import pytest
from numpy.testing import assert_allclose

from app.models import SolverConfig
from app.services.grassmann import Subspace, orthonormality_error, subspace_angle
from app.services.solver import fit_gauss_newton
from app.services.testbed import (
    TestFunction,
    active_subspace_closed_form,
    active_subspace_monte_carlo,
    builtin_functions,
    finite_difference_gradients,
    function_evaluations,
    loglog_slope,
    oscillating_ridge,
    quadratic_sum,
    ridge_cubic,
    timing_family,
    toy_shadow,
)
from app.services.varpro import ProjectedProblem


def test_builtin_functions():
    functions = builtin_functions()
    names = [fn.name for fn in functions]
    assert "ridge_cubic" in names and "toy_shadow" in names and "oscillating_ridge" in names
    for fn in functions:
        X, f = fn.sample(5, 0)
        assert X.shape == (5, fn.m) and f.shape == (5,)
        assert np.all(X >= -1) and np.all(X <= 1)
        if fn.true_subspace is not None:
            assert orthonormality_error(fn.true_subspace.basis) <= 1e-12


def test_ridge_cubic_values():
    fn = ridge_cubic()
    assert fn(np.zeros(10))[0] == pytest.approx(1.0)
    assert fn(np.ones(10))[0] == pytest.approx(3.0)


def test_timing_family_values():
    x = np.full((1, 10), 0.1)
    assert timing_family(1, 3)(x)[0] == pytest.approx(1.0)
    assert timing_family(2, 3)(x)[0] == pytest.approx(1.0 + 0.01)


def test_quadratic_sum_all_ones():
    assert quadratic_sum(10)(np.ones(10))[0] == pytest.approx(10.0)


def test_oscillating_ridge_without_oscillation(rng):
    fn = oscillating_ridge(m=6, alpha=0.0, beta=3)
    X = rng.uniform(-1, 1, size=(4, 6))
    assert_allclose(fn(X), 0.5 * X.sum(axis=1) ** 2)


def test_toy_direction_is_unit():
    fn = toy_shadow()
    assert np.linalg.norm(fn.parameters["direction"]) == pytest.approx(1.0)
    assert fn.m == 100


def test_input_dimension_checked():
    with pytest.raises(ValueError):
        ridge_cubic()(np.zeros((2, 3)))


def test_closed_form_active_subspace():
    C, v = active_subspace_closed_form(10, 0.02, 1)
    eigvals = np.linalg.eigvalsh(C)
    shift = (0.02 * np.pi) ** 2
    assert eigvals[-1] == pytest.approx(10 + shift)
    assert eigvals[-1] - eigvals[-2] == pytest.approx(10)
    assert_allclose(C @ v, (10 + shift) * v)
    assert_allclose(v, np.ones(10) / np.sqrt(10))

    C1, _ = active_subspace_closed_form(1, 0.5, 2)
    assert C1.shape == (1, 1)
    assert C1[0, 0] == pytest.approx(1 + (np.pi) ** 2)


def test_monte_carlo_linear_function_exact():
    linear = TestFunction(name="linear", m=5, evaluator=lambda X: X.sum(axis=1),
                          true_subspace=Subspace(np.ones((5, 1)) / np.sqrt(5)))
    for L in (1, 3):
        U = active_subspace_monte_carlo(linear, L, rng_seed=L)
        assert subspace_angle(U, linear.true_subspace) <= 1e-6


def test_finite_difference_budget():
    calls = []
    fn = TestFunction(name="count", m=4, evaluator=lambda X: calls.append(len(X)) or X.sum(axis=1))
    finite_difference_gradients(fn, np.zeros((3, 4)))
    assert sum(calls) == function_evaluations("active_subspace", 3, 4) == 3 * 5
    assert function_evaluations("ridge", 3, 4) == 3


def test_monte_carlo_step_sensitivity():
    fn = oscillating_ridge(m=20)
    a = subspace_angle(active_subspace_monte_carlo(fn, 50, 1e-6, rng_seed=1), fn.true_subspace)
    b = subspace_angle(active_subspace_monte_carlo(fn, 50, 5e-7, rng_seed=1), fn.true_subspace)
    assert abs(a - b) <= 0.01 * a


def test_monte_carlo_rejects_bad_arguments():
    fn = oscillating_ridge(m=3)
    with pytest.raises(ValueError):
        active_subspace_monte_carlo(fn, 0)
    with pytest.raises(ValueError):
        active_subspace_monte_carlo(fn, 5, h=0.0)


def test_loglog_slope():
    x = np.array([100, 200, 400, 800])
    assert loglog_slope(x, 3.0 * x ** -0.5) == pytest.approx(-0.5)
    assert np.isnan(loglog_slope([1.0], [1.0]))


def test_exact_ridge_oscillation_free_recovery():
    fn = oscillating_ridge(m=8, alpha=0.0)
    X, f = fn.sample(60, 3)
    model, _ = fit_gauss_newton(ProjectedProblem(X, f, 2), 1, SolverConfig(seed=0, restarts=2))
    assert subspace_angle(model.U, fn.true_subspace) <= 1e-6


@pytest.mark.slow
def test_toy_recovery_within_five_degrees():
    fn = toy_shadow()
    X, f = fn.sample(1000, 0)
    model, _ = fit_gauss_newton(ProjectedProblem(X, f, 7), 1, SolverConfig(seed=0, restarts=3))
    assert np.degrees(subspace_angle(model.U, fn.true_subspace)) <= 5.0
