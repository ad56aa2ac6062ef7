import numpy as np
import pytest

from src.numerics.grid import (DyadicLog, GridMeasure, LogUniform, WeightSpec, make_grid, push_forward,
                               transport_matrix, weighted_tv_norm)
from src.utils.errors import ConfigError, DomainError


@pytest.fixture
def octaves():
    """[1/8, 8] with 4 cells per octave."""
    return make_grid(0.125, 8.0, DyadicLog(4))


def test_dyadic_edges_are_exact_powers_of_two(octaves):
    assert octaves.size == 24
    assert octaves.levels == 6
    assert octaves.edges[4] == 0.25
    assert octaves.edges[12] == 1.0
    assert octaves.x_max == 8.0
    assert np.all(np.diff(octaves.edges) > 0)


def test_log_uniform_grid():
    grid = make_grid(1e-3, 10.0, LogUniform(40))
    assert grid.size == 40
    assert grid.edges[0] == 1e-3 and grid.edges[-1] == 10.0
    assert grid.widths.sum() == pytest.approx(10.0 - 1e-3)
    assert np.allclose(grid.nodes, np.sqrt(grid.edges[:-1] * grid.edges[1:]))


def test_grid_validation():
    with pytest.raises(ConfigError):
        make_grid(1.0, 0.5, LogUniform(4))
    with pytest.raises(ConfigError):
        make_grid(0.1, 1.0, LogUniform(0))
    with pytest.raises(ConfigError):
        make_grid(0.1, 1.0, DyadicLog(0))


def test_doubling_is_an_exact_shift(octaves):
    matrix = transport_matrix(octaves, 2.0 * octaves.edges)
    mass = np.zeros(octaves.size)
    mass[0] = 1.0
    moved = matrix @ mass
    assert moved[4] == pytest.approx(1.0, abs=1e-15)
    assert moved.sum() == pytest.approx(1.0, abs=1e-15)
    column_sums = np.asarray(matrix.sum(axis=0)).ravel()
    assert np.allclose(column_sums[:20], 1.0)
    assert np.allclose(column_sums[20:], 0.0)


def test_push_forward_keeps_escaped_mass(octaves):
    mu = GridMeasure.dirac(octaves, 7.9)
    pushed = push_forward(mu, lambda x: 2.0 * x)
    assert pushed.total() == pytest.approx(0.0, abs=1e-15)
    assert pushed.escaped_mass == pytest.approx(1.0)


def test_measures(octaves):
    flat = GridMeasure.from_density(octaves, lambda x: np.ones_like(x))
    assert flat.total() == pytest.approx(8.0 - 0.125)
    dirac = GridMeasure.dirac(octaves, 1.0)
    assert dirac.mass[12] == 1.0
    assert weighted_tv_norm(dirac, lambda x: 1.0 + x ** 2) == pytest.approx(1.0 + octaves.nodes[12] ** 2)
    assert (dirac.scaled(3.0) - dirac).total() == pytest.approx(2.0)
    with pytest.raises(DomainError):
        GridMeasure.zeros(octaves).normalized()
    with pytest.raises(DomainError):
        octaves.cell_index(100.0)
    with pytest.raises(DomainError):
        dirac - GridMeasure.dirac(make_grid(0.125, 8.0, DyadicLog(8)), 1.0)


def test_weight_constraints():
    with pytest.raises(ConfigError):
        WeightSpec.one_plus_xK(1.5, xi=0.5).validate()
    WeightSpec.xk_plus_xK(-0.5, 2.0).validate()
    with pytest.raises(ConfigError):
        WeightSpec.xk_plus_xK(0.5, 2.0).validate()
    WeightSpec.xk_plus_xK(0.5, 2.0).validate(linear_growth=True)
    with pytest.raises(ConfigError):
        WeightSpec.xk_plus_xK(0.5, 0.9).validate(linear_growth=True)


def test_weight_values():
    assert WeightSpec.one_plus_xK(2.0)(3.0) == pytest.approx(10.0)
    assert WeightSpec.xk_plus_xK(-0.5, 2.0)(4.0) == pytest.approx(16.5)
    assert WeightSpec.self_similar_quadratic().describe()["K"] == 2.0
