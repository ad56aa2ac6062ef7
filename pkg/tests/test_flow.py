import math

import numpy as np
import pytest

from src.models.coefficients import Coefficients
from src.numerics.flow import FlowMap, flow_sublinearity_holds
from src.utils.errors import DomainError


@pytest.fixture
def sqrt_growth():
    """g = sqrt(x): H(x) = 2(sqrt(x) - 1), X_t(x) = (sqrt(x) + t/2)^2."""
    return FlowMap(Coefficients.power_law(a=0.5, g0=1.0, b=1.0))


def test_linear_flow(linear_growth):
    flow_map = FlowMap(linear_growth)
    assert flow_map.H0 == -math.inf
    assert flow_map.flow(1.5, 2.0) == pytest.approx(2.0 * math.exp(1.5))
    assert flow_map.flow(-1.5, 2.0) == pytest.approx(2.0 * math.exp(-1.5))
    assert flow_map.flow(3.0, 0.0) == 0.0


def test_sublinear_flow_leaves_zero(sqrt_growth):
    assert sqrt_growth.H0 == pytest.approx(-2.0)
    assert sqrt_growth.flow(2.0, 0.0) == pytest.approx(1.0)
    assert sqrt_growth.flow(1.0, 4.0) == pytest.approx(6.25)
    with pytest.raises(DomainError):
        sqrt_growth.flow(-1.0, 0.0)
    with pytest.raises(DomainError):
        sqrt_growth.flow(-5.0, 1.0)


def test_clamped_backward_flow(sqrt_growth):
    out = sqrt_growth.flow_clamped(-1.0, np.array([0.1, 4.0]))
    assert out[0] == 0.0
    assert out[1] == pytest.approx(2.25)


def test_flow_rejects_blow_up_and_pure_fragmentation():
    with pytest.raises(DomainError):
        FlowMap(Coefficients.power_law(a=1.5))
    with pytest.raises(DomainError):
        FlowMap(Coefficients.power_law(a=1.0, g0=0.0))


def test_jacobian_analytic_matches_quadrature(sqrt_growth):
    analytic = sqrt_growth.jacobian_weight(0.5, 2.0, method="analytic")
    quadrature = sqrt_growth.jacobian_weight(0.5, 2.0, method="quadrature")
    assert quadrature == pytest.approx(analytic, rel=1e-8)
    assert 0.0 < analytic < 1.0


def test_tabulated_flow_matches_closed_form(sqrt_growth):
    xs = np.array([0.01, 0.1, 1.0, 10.0, 100.0])
    table = FlowMap(Coefficients.tabulated(xs, xs ** 0.5, xs, xi=0.0))
    assert not table.closed_form
    assert table.H(4.0) == pytest.approx(2.0, rel=1e-9)
    assert table.H_inv(2.0) == pytest.approx(4.0, rel=1e-9)
    assert table.flow(1.0, 1.0) == pytest.approx(sqrt_growth.flow(1.0, 1.0), rel=1e-6)


def test_flow_sublinearity(sqrt_growth):
    xs = np.logspace(-2, 1, 7)
    assert flow_sublinearity_holds(sqrt_growth, [0.5], xs, [0.5, 2.0])
