import numpy as np
import pytest

from src.models.coefficients import Coefficients
from src.models.kernel import FragmentKernel
from src.numerics.eigen import (ConstantMitosis, PhiExtension, SelfSimilar, crossover_A, direct_eigen, discrete_residual,
                                dual_eigen, dual_residual, explicit_eigen, malthus_exponent, observed_order,
                                phi_positive_at_zero, richardson, stationary_residual)
from src.numerics.grid import DyadicLog, GridMeasure, make_grid, refine_grid, weighted_tv_norm
from src.utils.errors import ConfigError, DomainError

SAMPLE_XS = np.linspace(0.05, 5.0, 12)


def one_plus_x(x):
    return 1.0 + x


def relative_error(measure, exact):
    return weighted_tv_norm(measure - exact, one_plus_x) / weighted_tv_norm(exact, one_plus_x)


@pytest.mark.parametrize("case", [ConstantMitosis(), SelfSimilar(gamma=1.0), SelfSimilar(gamma=2.0)])
def test_closed_forms_solve_both_problems(case):
    assert stationary_residual(case, SAMPLE_XS) < 1e-8
    assert dual_residual(case, SAMPLE_XS) < 1e-8


def test_explicit_eigen_is_normalized_on_the_grid(dyadic_grid):
    triple = explicit_eigen(ConstantMitosis(), dyadic_grid)
    n_err, phi_err = triple.normalization_errors()
    assert n_err < 1e-12 and phi_err < 1e-12
    assert triple.source == "closed-form"
    assert triple.lam == 1.0
    with pytest.raises(ConfigError):
        explicit_eigen("mitosis", dyadic_grid)


def test_self_similar_phi_is_linear():
    case = SelfSimilar(g0=1.0, b0=1.0, gamma=1.0)
    assert case.phi(2.0) == pytest.approx(2.0)
    assert case.lam == 1.0


def test_crossover(constant_rates, mitosis):
    assert crossover_A(constant_rates, mitosis, 2.0) == pytest.approx(2.0 + np.sqrt(6.0), rel=1e-2)
    with pytest.raises(DomainError):
        crossover_A(constant_rates, mitosis, 1.0)


def test_phi_at_zero(constant_rates, linear_growth):
    assert phi_positive_at_zero(constant_rates)
    assert not phi_positive_at_zero(linear_growth)


def test_phi_extension():
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    linear = PhiExtension(xs, xs.copy(), top=8.0, lower_constant=False)
    assert linear(0.5) == pytest.approx(0.5)
    assert linear(3.0) == pytest.approx(3.0)
    assert linear(16.0) == pytest.approx(16.0)
    flat = PhiExtension(xs, xs.copy(), top=8.0, lower_constant=True)
    assert flat(0.5) == pytest.approx(1.0)


def test_direct_eigen_recovers_constant_mitosis(constant_rates, mitosis):
    grid = make_grid(2.0 ** -6, 32.0, DyadicLog(16))
    triple = direct_eigen(constant_rates, mitosis, 1.0, lambda x: np.ones_like(x), grid, dt=0.02, t_max=60.0)
    n_err, phi_err = triple.normalization_errors()
    assert n_err < 1e-12 and phi_err < 1e-12
    assert triple.lam_h == pytest.approx(1.0, abs=0.05)
    exact = explicit_eigen(ConstantMitosis(), grid)
    assert np.abs(triple.N.mass - exact.N.mass).sum() < 0.2
    assert np.all(triple.phi > 0)


@pytest.mark.slow
def test_dual_eigen_constant_mitosis(constant_rates, mitosis):
    result = dual_eigen(constant_rates, mitosis, tol=1e-3, q=16)
    assert result.lam == pytest.approx(1.0, abs=0.02)
    assert result.solution.bound_excess <= 1e-9
    assert result.telemetry and result.to_dict()["converged"]


def test_direct_eigen_self_similar_to_three_digits():
    case = SelfSimilar(gamma=1.0)
    grid = make_grid(2.0 ** -8, 32.0, DyadicLog(32))
    triple = direct_eigen(case.coefficients(), case.kernel(), case.lam, case.phi, grid, extrapolate=True)
    exact = explicit_eigen(case, grid)
    assert triple.converged
    assert triple.residual <= 1e-6
    assert triple.lam_h == pytest.approx(1.0, abs=1e-3)
    assert triple.N_extrapolated is not None
    assert 1.0 <= triple.extrapolation_order <= 2.0
    assert relative_error(triple.best_N, exact.N) <= 1e-3
    assert triple.to_dict()["extrapolated"]


@pytest.mark.slow
def test_direct_eigen_constant_mitosis_to_three_digits(constant_rates, mitosis):
    grid = make_grid(2.0 ** -6, 16.0, DyadicLog(28))
    triple = direct_eigen(constant_rates, mitosis, 1.0, lambda x: np.ones_like(x), grid, dt=0.004,
                          extrapolate=True)
    exact = explicit_eigen(ConstantMitosis(), grid)
    assert triple.converged
    assert relative_error(triple.best_N, exact.N) <= 1e-3
    assert triple.lam_h == pytest.approx(1.0, abs=5e-3)


def test_direct_eigen_keeps_a_cesaro_mean_for_linear_growth_mitosis(dyadic_grid, linear_growth, mitosis):
    # g = x with halving keeps the phase log2(x) - t / ln 2 of every cell
    triple = direct_eigen(linear_growth, mitosis, 1.0, lambda x: np.asarray(x, dtype=float), dyadic_grid,
                          t_max=20.0, extrapolate=True)
    assert not triple.converged
    assert triple.N_extrapolated is None
    assert triple.N.total() == pytest.approx(1.0)
    assert np.all(triple.N.mass >= 0.0)


def test_discrete_residual_of_a_simulated_triple(constant_rates, mitosis):
    grid = make_grid(2.0 ** -6, 32.0, DyadicLog(16))
    triple = direct_eigen(constant_rates, mitosis, 1.0, lambda x: np.ones_like(x), grid, dt=0.02)
    assert triple.converged
    assert triple.residual == pytest.approx(discrete_residual(triple, constant_rates, mitosis))
    assert triple.residual <= 1e-6
    # the closed form is only a fixed point of the continuum problem
    exact = explicit_eigen(ConstantMitosis(), grid)
    exact.lam_h, exact.dt_h = triple.lam_h, triple.dt_h
    assert discrete_residual(exact, constant_rates, mitosis) > triple.residual


@pytest.mark.parametrize("case,grid", [
    (SelfSimilar(gamma=1.0), make_grid(2.0 ** -8, 32.0, DyadicLog(16))),
    (ConstantMitosis(), make_grid(2.0 ** -6, 32.0, DyadicLog(16))),
])
def test_malthus_exponent_matches_lambda(case, grid):
    lam = malthus_exponent(case.coefficients(), case.kernel(), grid, case.phi, 20.0)
    assert lam == pytest.approx(case.lam, rel=1e-3)


def test_refined_grid_splits_every_cell(dyadic_grid):
    fine = refine_grid(dyadic_grid)
    assert fine.size == 2 * dyadic_grid.size
    assert fine.q == 2 * dyadic_grid.q
    assert np.allclose(fine.edges[0::2], dyadic_grid.edges)
    assert np.allclose(fine.edges[1::2], dyadic_grid.nodes)


def test_richardson(dyadic_grid):
    exact = GridMeasure.from_density(dyadic_grid, lambda x: np.exp(-x)).normalized()
    fine_grid = refine_grid(dyadic_grid)
    fine_exact = GridMeasure.from_density(fine_grid, lambda x: np.exp(-x)).normalized()
    bias = np.sin(dyadic_grid.nodes)
    coarse = GridMeasure(dyadic_grid, exact.mass * (1.0 + 0.02 * bias))
    fine = GridMeasure(fine_grid, fine_exact.mass * (1.0 + 0.01 * np.repeat(bias, 2)))
    extrapolated = richardson(coarse, fine)
    assert extrapolated.total() == pytest.approx(1.0)
    assert np.abs(extrapolated.mass - exact.mass).sum() < np.abs(coarse.mass - exact.mass).sum()
    with pytest.raises(DomainError):
        richardson(coarse, coarse)


def test_observed_order():
    assert observed_order(1.0, 1.004, 1.001) == pytest.approx(2.0)
    assert observed_order(1.0, 1.004, 1.002) == pytest.approx(1.0)
    assert observed_order(1.0, 1.001, 1.002) == 1.0
    assert observed_order(1.0, 1.0 + 1e-1, 1.0 + 1e-4) == 2.0
