import math

import pytest

from src.utils.errors import DomainError
from src.utils.logreal import LogReal


def test_float_round_trip_and_arithmetic():
    half = LogReal.from_float(0.25) + 0.25
    assert half.to_float() == pytest.approx(0.5)
    assert (half * 4).to_float() == pytest.approx(2.0)
    assert (1 / half).to_float() == pytest.approx(2.0)
    assert (LogReal.from_float(2.0) - 3).to_float() == pytest.approx(-1.0)


def test_products_survive_underflow():
    tiny = LogReal.from_log(-4e7)
    assert tiny.to_float() == 0.0
    assert (tiny * tiny).log == -8e7
    assert (tiny / 2).log == pytest.approx(-4e7 - math.log(2.0))
    assert (tiny ** 0.5).log == -2e7


def test_one_minus_and_neg_log1m():
    tiny = LogReal.from_log(-4e7)
    assert tiny.one_minus() == LogReal.one()
    assert tiny.neg_log1m().log == -4e7
    assert LogReal.from_float(0.5).neg_log1m().to_float() == pytest.approx(math.log(2.0))
    assert LogReal.zero().neg_log1m() == LogReal.zero()
    with pytest.raises(DomainError):
        LogReal.one().neg_log1m()


def test_subtracting_equal_values_gives_zero():
    x = LogReal.from_log(-123.0)
    assert (x - x) == LogReal.zero()


def test_ordering():
    assert LogReal.from_log(-1e7) < LogReal.from_log(-1e6)
    assert -LogReal.one() < LogReal.zero() < LogReal.from_log(-1e9)
    assert LogReal.from_float(3.0) > 2.0


def test_invalid_values():
    with pytest.raises(DomainError):
        LogReal.zero().log
    with pytest.raises(DomainError):
        LogReal.one() / LogReal.zero()
    with pytest.raises(DomainError):
        LogReal.from_float(float("nan"))
    with pytest.raises(DomainError):
        LogReal(2, 0.0)


def test_json_view():
    assert LogReal.from_log(-5.0).to_json() == {"sign": 1, "log": -5.0}
    assert LogReal.zero().to_json() == {"sign": 0, "log": None}
