import numpy as np
import pytest

import config
from src.models.coefficients import Coefficients
from src.numerics.eigen import consistent_dual
from src.numerics.grid import DyadicLog, GridMeasure, make_grid, weighted_tv_norm
from src.numerics.semigroup import (EvolutionConfig, EvolutionMode, LowerInflow, SplitStepOperator, commensurate_dt,
                                    distribute_fragments, distribute_fragments_adjoint, evolve,
                                    observed_splitting_order, stable_dt, step_count, whole_shift)
from src.utils.errors import ConfigError, DomainError, GridKernelMismatch, PositivityError, StabilityError


def bump(grid, center=1.0, width=0.25):
    return GridMeasure.from_density(grid, lambda x: np.exp(-0.5 * ((x - center) / width) ** 2)).normalized()


@pytest.fixture
def self_similar():
    """g = x, B = x: N = e^{-x}, lambda = 1."""
    return Coefficients.power_law(a=1.0, g0=1.0, b=1.0, b0=1.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        EvolutionConfig(dt=0.0)
    with pytest.raises(ConfigError):
        EvolutionConfig(dt=0.1, mode=EvolutionMode.CONSERVATIVE)
    with pytest.raises(ConfigError):
        EvolutionConfig(dt=0.1, snapshot_every=0)
    with pytest.raises(ConfigError):
        EvolutionConfig(dt=0.1, substeps=0)
    assert EvolutionConfig(dt=0.1, lam=2.0).inflow == 2.0
    assert EvolutionConfig(dt=0.1, lam=2.0, inflow_lam=1.0).inflow == 1.0


def test_stability_bound(dyadic_grid, linear_growth, uniform):
    with pytest.raises(StabilityError):
        SplitStepOperator(dyadic_grid, linear_growth, uniform, EvolutionConfig(dt=1.0, substeps=1))


def test_substeps_meet_the_bound(dyadic_grid, linear_growth, uniform):
    op = SplitStepOperator(dyadic_grid, linear_growth, uniform, EvolutionConfig(dt=0.1))
    delta = 0.1 / op.substeps
    assert delta * float(np.max(linear_growth.B(dyadic_grid.nodes))) <= config.STABILITY_CFL
    assert delta <= config.REACTION_MAX_SUBSTEP
    assert len(op.survival) == op.substeps


def test_mitosis_needs_dyadic_grid(log_grid, constant_rates, mitosis):
    with pytest.raises(GridKernelMismatch):
        SplitStepOperator(log_grid, constant_rates, mitosis, EvolutionConfig(dt=0.1))


def test_mitosis_halves_by_whole_octaves(dyadic_grid, mitosis):
    fragmented = np.zeros(dyadic_grid.size)
    fragmented[dyadic_grid.q + 3] = 1.0
    fragmented[1] = 0.5
    gain, lost = distribute_fragments(dyadic_grid, mitosis, fragmented)
    assert gain[3] == 2.0
    assert gain.sum() == 2.0
    assert lost == 1.0


@pytest.mark.parametrize("kernel_name", ["uniform", "mitosis"])
def test_children_are_counted_once(dyadic_grid, self_similar, rng, kernel_name, request):
    kernel = request.getfixturevalue(kernel_name)
    inflow = LowerInflow(dyadic_grid, self_similar, lam=1.0)
    f = rng.random(dyadic_grid.size)
    gain, escaped = distribute_fragments(dyadic_grid, kernel, f, inflow)
    assert escaped > 0
    assert gain.sum() + escaped == pytest.approx(2.0 * f.sum(), rel=1e-12)


def test_uniform_children_keep_their_size_above_the_window(dyadic_grid, uniform):
    f = np.zeros(dyadic_grid.size)
    f[40] = 1.0
    gain, _ = distribute_fragments(dyadic_grid, uniform, f)
    x0, xj = dyadic_grid.nodes[0], dyadic_grid.nodes[40]
    assert np.dot(gain, dyadic_grid.nodes) == pytest.approx(xj - x0 ** 2 / xj, rel=1e-12)


@pytest.mark.parametrize("kernel_name", ["uniform", "mitosis"])
@pytest.mark.parametrize("with_inflow", [False, True])
def test_fragment_adjoint(dyadic_grid, self_similar, rng, kernel_name, with_inflow, request):
    kernel = request.getfixturevalue(kernel_name)
    inflow = LowerInflow(dyadic_grid, self_similar, lam=0.5) if with_inflow else None
    f, v = rng.random(dyadic_grid.size), rng.random(dyadic_grid.size)
    gain, _ = distribute_fragments(dyadic_grid, kernel, f, inflow)
    adjoint = distribute_fragments_adjoint(dyadic_grid, kernel, v, inflow)
    assert np.dot(gain, v) == pytest.approx(np.dot(f, adjoint), rel=1e-12)


@pytest.mark.parametrize("mode", [EvolutionMode.SCALED, EvolutionMode.CONSERVATIVE])
@pytest.mark.parametrize("coeffs_name,kernel_name", [("constant_rates", "mitosis"), ("linear_growth", "uniform")])
def test_step_adjoint(dyadic_grid, rng, mode, coeffs_name, kernel_name, request):
    coeffs, kernel = request.getfixturevalue(coeffs_name), request.getfixturevalue(kernel_name)
    phi = 1.0 + dyadic_grid.nodes
    cfg = EvolutionConfig(dt=0.1, lam=0.5, mode=mode, phi=phi if mode is EvolutionMode.CONSERVATIVE else None)
    op = SplitStepOperator(dyadic_grid, coeffs, kernel, cfg)
    m, v = rng.random(dyadic_grid.size), rng.random(dyadic_grid.size)
    stepped, _ = op.apply(m)
    assert np.dot(stepped, v) == pytest.approx(np.dot(m, op.apply_adjoint(v)), rel=1e-12)


def test_lower_inflow_weights(dyadic_grid, self_similar):
    inflow = LowerInflow(dyadic_grid, self_similar, lam=1.0)
    x0 = dyadic_grid.nodes[0]
    assert inflow.weight(x0) == pytest.approx(1.0)
    # w(y) = (y / x0)^lambda e^{-(x0 - y)}: mean 1 / (1 + lambda) less O(x0)
    assert inflow.uniform == pytest.approx(0.5 - x0 / 6.0, rel=1e-3)
    ys = x0 * np.array([0.9, 0.5, 0.1])
    assert np.all(np.diff(inflow.weight(ys)) < 0)
    assert inflow.halves.shape == (dyadic_grid.q,)

    none = LowerInflow(dyadic_grid, Coefficients.power_law(a=0.0, g0=0.0, b=0.0, b0=1.0))
    assert none.uniform == 0.0
    assert np.all(none.halves == 0.0)


def test_pure_transport_shifts_one_octave(dyadic_grid, uniform):
    coeffs = Coefficients.power_law(a=1.0, g0=1.0, b=1.0, b0=0.0)
    dt = commensurate_dt(dyadic_grid, coeffs, 0.1)
    assert dt == pytest.approx(np.log(2.0) / 8)
    n0 = GridMeasure.dirac(dyadic_grid, dyadic_grid.x_min)
    trajectory = evolve(n0, 8 * dt, EvolutionConfig(dt=dt), coeffs, uniform)
    assert trajectory.final.mass[8] == pytest.approx(1.0, abs=1e-12)
    assert trajectory.final.total() == pytest.approx(1.0, abs=1e-12)


def test_fragmentation_keeps_size_up_to_the_lower_edge(log_grid, uniform):
    coeffs = Coefficients.power_law(a=0.0, g0=0.0, b=0.0, b0=1.0)
    n0 = bump(log_grid, center=5.0, width=1.0)
    trajectory = evolve(n0, 2.0, EvolutionConfig(dt=0.1, snapshot_every=5), coeffs, uniform)
    assert trajectory.final.moment(1.0) <= n0.moment(1.0)
    assert trajectory.final.moment(1.0) == pytest.approx(n0.moment(1.0), rel=1e-5)
    assert trajectory.final.total() > n0.total()
    # no growth: children born below x_min never come back
    assert trajectory.escaped_mass > 0


def test_exponential_profile_is_stationary(self_similar, uniform):
    grid = make_grid(1e-3, 50.0, DyadicLog(64))
    n0 = GridMeasure.from_density(grid, lambda x: np.exp(-x))
    trajectory = evolve(n0, 10.0, EvolutionConfig(dt=np.log(2.0) / 64, lam=1.0, snapshot_every=10 ** 6),
                        self_similar, uniform)
    V = lambda x: 1.0 + x
    assert weighted_tv_norm(trajectory.final - n0, V) <= 1e-3 * weighted_tv_norm(n0, V)


def test_steps_keep_measures_nonnegative(dyadic_grid, linear_growth, uniform, rng):
    dt = commensurate_dt(dyadic_grid, linear_growth, 0.1)
    for _ in range(5):
        n0 = GridMeasure(dyadic_grid, rng.random(dyadic_grid.size) * (rng.random(dyadic_grid.size) < 0.3))
        trajectory = evolve(n0, 2.0, EvolutionConfig(dt=dt, lam=1.0), linear_growth, uniform)
        assert all(np.all(s.mass >= 0.0) for s in trajectory.snapshots)


def test_negative_output_is_an_error(dyadic_grid, constant_rates, mitosis, monkeypatch):
    op = SplitStepOperator(dyadic_grid, constant_rates, mitosis, EvolutionConfig(dt=0.05))
    monkeypatch.setattr(op, "apply", lambda mass: (mass - 1.0, 0.0))
    with pytest.raises(PositivityError):
        op.step(bump(dyadic_grid))


def test_conservative_mode_keeps_the_sum(dyadic_grid, constant_rates, mitosis):
    dual = consistent_dual(dyadic_grid, constant_rates, mitosis, 0.05, np.ones(dyadic_grid.size), lam=1.0)
    assert dual.lam_h == pytest.approx(1.0, abs=0.1)
    assert dual.inflow_lam == 1.0
    f0 = GridMeasure(dyadic_grid, dual.phi_h * bump(dyadic_grid).mass)
    trajectory = evolve(f0, 2.0, dual.conservative(10), constant_rates, mitosis)
    assert trajectory.conserved_drift() < 1e-6


def test_conservative_step_contracts_differences(dyadic_grid, constant_rates, mitosis):
    dual = consistent_dual(dyadic_grid, constant_rates, mitosis, 0.05, np.ones(dyadic_grid.size), lam=1.0)
    op = SplitStepOperator(dyadic_grid, constant_rates, mitosis, dual.conservative())
    difference = bump(dyadic_grid, center=0.5).mass - bump(dyadic_grid, center=4.0, width=1.0).mass
    norms = [np.abs(difference).sum()]
    for _ in range(100):
        difference, _ = op.apply(difference)
        norms.append(np.abs(difference).sum())
    assert np.all(np.diff(norms) <= 1e-12)
    assert norms[-1] < 0.5 * norms[0]


def test_conservation_error_halves_with_dt(dyadic_grid, constant_rates, mitosis):
    # phi = 1 is the continuum dual; its drift is the time-stepping error
    phi = np.ones(dyadic_grid.size)
    drifts = []
    for dt in (0.04, 0.02):
        cfg = EvolutionConfig(dt=dt, lam=1.0, phi=phi, snapshot_every=5, substeps=1)
        n0 = bump(dyadic_grid, center=2.0, width=0.5)
        drifts.append(evolve(n0, 2.0, cfg, constant_rates, mitosis).conserved_drift())
    assert 0 < drifts[1] <= 0.5 * drifts[0]


def test_splitting_order(self_similar, uniform):
    grid = make_grid(2.0 ** -6, 4.0, DyadicLog(32))
    shift = whole_shift(grid, self_similar)
    n0 = bump(grid)
    order = observed_splitting_order(n0, 32 * shift, 4 * shift, self_similar, uniform, lambda x: 1.0 + x)
    assert order >= 0.9
    with pytest.raises(DomainError):
        observed_splitting_order(n0, 1.0, 0.1, self_similar, uniform, lambda x: 1.0 + x)


def test_time_step_helpers(dyadic_grid, linear_growth, constant_rates):
    assert step_count(1.0, 0.3) == 4
    assert step_count(0.0, 0.3) == 0
    with pytest.raises(DomainError):
        step_count(-1.0, 0.1)
    assert whole_shift(dyadic_grid, linear_growth) == pytest.approx(np.log(2.0) / 8)
    assert whole_shift(dyadic_grid, constant_rates) is None
    assert commensurate_dt(dyadic_grid, constant_rates, 0.13) == 0.13
    assert commensurate_dt(dyadic_grid, linear_growth, 0.2) == pytest.approx(2.0 * np.log(2.0) / 8)
    assert commensurate_dt(dyadic_grid, linear_growth, 0.01) == pytest.approx(np.log(2.0) / 8)
    assert stable_dt(dyadic_grid, constant_rates, lam=1.0) == pytest.approx(0.225)
