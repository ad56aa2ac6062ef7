import numpy as np
import pytest

from src.numerics.eigen import SelfSimilar, direct_eigen
from src.numerics.grid import DyadicLog, make_grid
from src.services.ratemeter import (RateFit, band_cells, compare_fits, fit_rate, gaussian_bump, measure_rates,
                                   rate_vs_certificate)
from src.utils.errors import DomainError
from src.utils.logreal import LogReal


def test_clean_exponential_is_accepted():
    times = np.linspace(0.0, 10.0, 101)
    fit = fit_rate(times, np.exp(-0.7 * times), 1.0, "synthetic")
    assert fit.accepted
    assert fit.rho_emp == pytest.approx(0.7)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.fit_window[0] >= 10.0 / 3.0


def test_stationary_start_is_rejected():
    times = np.linspace(0.0, 10.0, 101)
    fit = fit_rate(times, np.full(101, 1e-9), 1.0)
    assert fit.rejection == "already stationary"


def test_short_run_is_rejected():
    times = np.linspace(0.0, 10.0, 12)
    fit = fit_rate(times, np.exp(-times), 1.0)
    assert fit.rejection == "too few snapshots in the fit window"


def test_oscillation_is_rejected():
    times = np.linspace(0.0, 30.0, 301)
    distances = np.exp(-0.01 * times) * (1.0 + 0.5 * np.sin(np.pi * times))
    fit = fit_rate(times, distances, 1.0)
    assert fit.rejection == "oscillation"
    assert fit.diagnostics["period"] == pytest.approx(2.0, rel=0.1)


def test_bump_in_the_window_is_rejected():
    times = np.linspace(0.0, 30.0, 301)
    distances = np.exp(-0.5 * times)
    distances[150] *= 1.5
    assert fit_rate(times, distances, 1.0).rejection == "non-monotone decay"


def test_flat_curve_is_rejected():
    times = np.linspace(0.0, 10.0, 101)
    assert fit_rate(times, np.ones(101), 1.0).rejection == "poor log-linear fit"


def test_comparison_verdicts():
    times = np.linspace(0.0, 10.0, 101)
    fit = fit_rate(times, np.exp(-0.7 * times), 1.0)
    assert rate_vs_certificate(None, None)["verdict"] == "consistently no gap"
    assert rate_vs_certificate(fit, None)["verdict"] == "no certificate"
    rejected = RateFit(initial="", times=times, distances=times, rejection="oscillation")
    assert rate_vs_certificate(rejected, LogReal.from_float(0.1))["holds"] is None
    holds = rate_vs_certificate(fit, LogReal.from_float(0.1))
    assert holds["holds"] and holds["log_gap"] == pytest.approx(np.log(7.0))
    assert rate_vs_certificate(fit, LogReal.from_float(1.0))["verdict"] == "lower bound violated"
    assert fit.certificate_rho is not None


def test_gaussian_bump(dyadic_grid):
    assert gaussian_bump(dyadic_grid, 3.0).total() == pytest.approx(1.0)
    with pytest.raises(DomainError):
        gaussian_bump(dyadic_grid, 0.0)


def test_horizon_stops_at_the_floor():
    times = np.linspace(0.0, 30.0, 301)
    distances = np.exp(-times) + 1e-8
    assert not fit_rate(times, distances, 1.0).accepted
    fit = fit_rate(times, distances, 1.0, floor=1e-6)
    assert fit.accepted
    assert fit.rho_emp == pytest.approx(1.0, rel=0.02)
    assert fit.diagnostics["horizon"] == pytest.approx(-np.log(1e-6 - 1e-8), abs=0.2)
    assert fit.fit_window[1] <= fit.diagnostics["horizon"]


def test_floor_reached_at_once_leaves_no_window():
    times = np.linspace(0.0, 10.0, 101)
    fit = fit_rate(times, np.exp(-times), 1.0, floor=0.5)
    assert fit.rejection == "too few snapshots in the fit window"
    assert fit.diagnostics["floor"] == 0.5


def test_stalled_distance_with_an_oscillating_band():
    times = np.linspace(0.0, 30.0, 301)
    distances = np.ones(301)
    band = 0.1 * (1.0 + 0.5 * np.sin(np.pi * times))
    assert fit_rate(times, distances, 1.0).rejection == "poor log-linear fit"
    fit = fit_rate(times, distances, 1.0, band=band)
    assert fit.rejection == "oscillation"
    assert fit.diagnostics["observable"] == "quarter-octave band"
    assert fit.diagnostics["period"] == pytest.approx(2.0, rel=0.1)


def test_small_band_swings_are_ignored():
    times = np.linspace(0.0, 30.0, 301)
    band = 0.1 * (1.0 + 0.02 * np.sin(np.pi * times))
    assert fit_rate(times, np.ones(301), 1.0, band=band).rejection == "poor log-linear fit"


def test_band_cells(dyadic_grid):
    weighted = np.zeros(dyadic_grid.size)
    weighted[20] = 1.0
    assert np.flatnonzero(band_cells(dyadic_grid, weighted, octaves=0.1)).tolist() == [20]
    assert np.flatnonzero(band_cells(dyadic_grid, weighted, octaves=0.3)).tolist() == [19, 20, 21]


def test_every_fit_is_compared():
    times = np.linspace(0.0, 10.0, 101)
    fast = fit_rate(times, np.exp(-0.7 * times), 1.0, "fast")
    slow = fit_rate(times, np.exp(-0.3 * times), 1.0, "slow")
    rejected = RateFit(initial="flat", times=times, distances=times, rejection="oscillation")

    violated = compare_fits([fast, slow, rejected], LogReal.from_float(0.5))
    assert violated["verdict"] == "lower bound violated"
    assert violated["holds"] is False
    assert violated["accepted"] == 2
    assert [c["initial"] for c in violated["fits"]] == ["fast", "slow", "flat"]
    assert [c["holds"] for c in violated["fits"]] == [True, False, None]

    assert compare_fits([fast, slow, rejected], LogReal.from_float(0.1))["verdict"] == "lower bound holds"
    unchecked = compare_fits([fast, rejected], None)
    assert (unchecked["verdict"], unchecked["holds"], unchecked["accepted"]) == ("no certificate", None, 1)
    assert compare_fits([rejected], None)["holds"] is True
    assert compare_fits([rejected], LogReal.from_float(0.1))["verdict"] == "no empirical rate"
    assert compare_fits([], LogReal.from_float(0.1))["holds"] is None


@pytest.mark.slow
def test_rates_agree_across_initial_data(uniform):
    case = SelfSimilar(gamma=2.0)
    coeffs = case.coefficients()
    grid = make_grid(2.0 ** -6, 8.0, DyadicLog(16))
    triple = direct_eigen(coeffs, uniform, case.lam, case.phi, grid)
    assert triple.converged
    fits = measure_rates(grid, [0.5, 1.0, 2.0], 15.0, lambda x: 1.0 + x, triple, coeffs, uniform)
    assert all(f.accepted for f in fits), [f.rejection for f in fits]
    rates = [f.rho_emp for f in fits]
    assert max(rates) <= 1.05 * min(rates)
    assert all(f.fit_window[1] <= f.diagnostics["horizon"] for f in fits)
