import math
from types import SimpleNamespace

import numpy as np
import pytest
from scipy import integrate

from src.certificates.minorisation import (DiracEvolver, NuShape, SelfSimilarSmallSet, fragmentation_threshold,
                                           mitosis_interval_time, proof_interval, reference_measure,
                                           replay_certificate, small_set_cells, small_set_constants,
                                           time_integrated_dirac, time_to_threshold)
from src.models.coefficients import Coefficients
from src.numerics.eigen import SelfSimilar
from src.numerics.grid import DyadicLog, make_grid
from src.numerics.flow import FlowMap
from src.utils.errors import CertificateError, DomainError, EmptyIntervalError


@pytest.fixture
def sqrt_flow():
    return FlowMap(Coefficients.power_law(a=0.5, g0=1.0, b=1.0, b0=1.0))


def test_fragmentation_threshold(linear_growth, constant_rates):
    assert fragmentation_threshold(linear_growth) == pytest.approx(1.0, rel=0.03)
    assert fragmentation_threshold(constant_rates) == pytest.approx(1.0, rel=0.03)
    with pytest.raises(CertificateError):
        fragmentation_threshold(Coefficients.power_law(a=1.0, g0=1.0, b=1.0, b0=0.0))


def test_time_to_threshold(linear_growth):
    flow = FlowMap(linear_growth)
    assert time_to_threshold(flow, 0.25, 1.0) == pytest.approx(math.log(4.0))
    assert time_to_threshold(flow, 2.0, 1.0) == 0.0


def test_uniform_proof_interval(linear_growth, uniform):
    lo, hi = proof_interval(FlowMap(linear_growth), uniform, 0.5, 4.0, 2.0, math.log(2.0))
    assert lo == pytest.approx(math.exp(2.0) / 4.0)
    assert hi == pytest.approx(math.exp(2.0) / 2.0)
    with pytest.raises(EmptyIntervalError):
        proof_interval(FlowMap(linear_growth), uniform, 0.5, 4.0, 0.5, 1.0)


def test_mitosis_interval_is_empty_for_linear_growth(linear_growth, mitosis):
    flow = FlowMap(linear_growth)
    with pytest.raises(EmptyIntervalError):
        proof_interval(flow, mitosis, 0.1, 2.0, 3.0, 1.0)
    with pytest.raises(EmptyIntervalError):
        mitosis_interval_time(flow, 0.1, 2.0, 1.0, 2.0)


def test_mitosis_interval_opens_for_sqrt_growth(sqrt_flow, mitosis):
    t = mitosis_interval_time(sqrt_flow, 0.05, 2.0, 0.5, 1.0)
    assert t == pytest.approx(8.5)
    lo, hi = proof_interval(sqrt_flow, mitosis, 0.05, 2.0, t, 0.5)
    assert 0 < lo < hi


def test_time_integrated_dirac(dyadic_grid):
    mu = time_integrated_dirac(dyadic_grid, lambda tau: 1.0, 2.0, steps=100)
    assert mu.total() == pytest.approx(2.0)
    assert mu.mass[dyadic_grid.cell_index(1.0)] == pytest.approx(2.0)
    with pytest.raises(DomainError):
        time_integrated_dirac(dyadic_grid, lambda tau: 1.0, 0.0)


@pytest.mark.parametrize("shape", [NuShape.UNIFORM, NuShape.LINEAR])
def test_reference_measure(dyadic_grid, shape):
    nu = reference_measure(dyadic_grid, (0.5, 4.0), shape)
    assert nu.total() == pytest.approx(1.0)
    outside = (dyadic_grid.nodes < 0.5) | (dyadic_grid.nodes > 4.0)
    assert np.all(nu.mass[outside] == 0.0)
    with pytest.raises(EmptyIntervalError):
        reference_measure(dyadic_grid, (100.0, 200.0), shape)


def test_small_set_cells(dyadic_grid):
    cells = small_set_cells(dyadic_grid, lambda x: 1.0 + x ** 2, 10.0)
    assert np.all(1.0 + dyadic_grid.nodes[cells] ** 2 <= 10.0)
    with pytest.raises(CertificateError):
        small_set_cells(dyadic_grid, lambda x: 1.0 + x ** 2, 0.5)


def test_selfsim_small_set_readings():
    small = SelfSimilarSmallSet(b=2.0, t0=2.0 * math.log(2.0), R=10.0)
    assert small.log_alpha_general() == pytest.approx(small.log_alpha_displayed(), rel=1e-12)
    assert small.log_alpha_literal() != pytest.approx(small.log_alpha_general())
    assert small.alpha.log == pytest.approx(small.log_alpha_general())
    total, _ = integrate.quad(small.nu_density, 0.0, small.nu_support[1])
    assert total == pytest.approx(1.0)
    assert small.C_set == (0.1, 10.0)
    with pytest.raises(DomainError):
        SelfSimilarSmallSet(b=2.0, t0=1.0, R=1.0)


@pytest.mark.slow
def test_simulated_small_set(dyadic_grid, constant_rates, mitosis):
    evolver = DiracEvolver(dyadic_grid, constant_rates, mitosis, np.ones(dyadic_grid.size), 1.0, dt=0.05)
    cert = small_set_constants(evolver, 2.0, lambda x: 1.0 + x ** 2, 10.0, probes=5)
    assert 0.0 < cert.alpha.to_float() < 1.0
    assert cert.nu.total() == pytest.approx(1.0)
    assert cert.interval[0] < cert.interval[1]
    assert cert.t_B == pytest.approx(1.0, abs=0.05)
    assert replay_certificate(cert, evolver) == 0


def test_time_integrated_dirac_follows_the_flow(dyadic_grid):
    # X_tau = e^tau / 4 spends log(b / a) in [a, b]
    mu = time_integrated_dirac(dyadic_grid, lambda tau: 0.25 * math.exp(tau), math.log(16.0))
    edges = dyadic_grid.edges
    crossed = (edges[:-1] >= 0.25 * (1.0 - 1e-9)) & (edges[1:] <= 4.0 * (1.0 + 1e-9))
    assert crossed.sum() == 4 * dyadic_grid.q
    assert np.allclose(mu.mass[crossed], math.log(2.0) / dyadic_grid.q, rtol=0.05)
    assert np.all(mu.mass[~crossed] == 0.0)
    assert mu.total() == pytest.approx(math.log(16.0))


def test_mitosis_with_linear_growth_fails_on_the_interval(dyadic_grid, linear_growth, mitosis):
    evolver = SimpleNamespace(grid=dyadic_grid, coeffs=linear_growth, kernel=mitosis,
                              operator=SimpleNamespace(flow_map=FlowMap(linear_growth)))
    with pytest.raises(EmptyIntervalError):
        small_set_constants(evolver, 2.0, lambda x: 1.0 + x ** 2, 10.0, probes=5)


@pytest.mark.slow
def test_alpha_is_stable_under_refinement(uniform):
    case = SelfSimilar(gamma=2.0)
    coeffs = case.coefficients()
    alphas = []
    for q in (16, 32):
        grid = make_grid(2.0 ** -6, 8.0, DyadicLog(q))
        evolver = DiracEvolver(grid, coeffs, uniform, case.phi(grid.nodes), case.lam, dt=math.log(2.0) / 8)
        cert = small_set_constants(evolver, 2.0 * math.log(2.0), lambda x: 1.0 + x ** 2, 10.0, probes=5)
        alphas.append(cert.alpha.to_float())
    assert alphas[1] == pytest.approx(alphas[0], rel=0.1)
