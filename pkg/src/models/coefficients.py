"""
Growth and fragmentation coefficients.

Power-law coefficients g(x) = g0 x^a, B(x) = b0 x^b and tabulated
coefficients interpolated piecewise-linearly in log-log coordinates.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)


class CoefficientFamily(str, Enum):
    POWER_LAW = "power"
    TABULATED = "table"


@dataclass(frozen=True)
class PowerLaw:
    """Parameters of g(x) = g0 x^a and B(x) = b0 x^b."""

    a: float
    g0: float
    b: float
    b0: float

    def __post_init__(self):
        if self.g0 < 0 or self.b0 < 0:
            raise ConfigError(f"power-law prefactors must be nonnegative (g0={self.g0}, b0={self.b0})")
        if self.b < 0 and self.b0 > 0:
            raise ConfigError(f"B(x) = b0 x^b must be continuous on [0, inf): b={self.b} < 0")


class LogLogTable:
    """Piecewise-linear interpolant of log y against log x with power-law tails."""

    def __init__(self, xs, values, name: str):
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        if xs.ndim != 1 or xs.shape != values.shape or xs.size < 2:
            raise ConfigError(f"table for {name} needs two equally long 1-d arrays of length >= 2")
        if np.any(xs <= 0) or np.any(np.diff(xs) <= 0):
            raise ConfigError(f"table abscissae for {name} must be positive and strictly increasing")
        if np.any(values < 0):
            raise ConfigError(f"table values for {name} must be nonnegative")
        self.name = name
        self.xs = xs
        self.values = values
        self.log_xs = np.log(xs)
        # zero entries stay exactly zero: interpolate in log-log only where positive
        self.positive = bool(np.all(values > 0))
        if self.positive:
            self.log_values = np.log(values)
            self.slope_lo = (self.log_values[1] - self.log_values[0]) / (self.log_xs[1] - self.log_xs[0])
            self.slope_hi = (self.log_values[-1] - self.log_values[-2]) / (self.log_xs[-1] - self.log_xs[-2])
        else:
            self.log_values = None
            self.slope_lo = 0.0
            self.slope_hi = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not self.positive:
            return np.interp(np.log(np.maximum(x, 1e-300)), self.log_xs, self.values)
        lx = np.log(np.maximum(x, 1e-300))
        inner = np.interp(lx, self.log_xs, self.log_values)
        below = self.log_values[0] + self.slope_lo * (lx - self.log_xs[0])
        above = self.log_values[-1] + self.slope_hi * (lx - self.log_xs[-1])
        out = np.where(lx < self.log_xs[0], below, np.where(lx > self.log_xs[-1], above, inner))
        return np.exp(out)

    def derivative(self, x):
        """d/dx of the interpolant (one-sided at the nodes)."""
        x = np.asarray(x, dtype=float)
        if not self.positive:
            slopes = np.diff(self.values) / np.diff(self.log_xs)
            idx = np.clip(np.searchsorted(self.log_xs, np.log(x)) - 1, 0, slopes.size - 1)
            inside = (x >= self.xs[0]) & (x <= self.xs[-1])
            return np.where(inside, slopes[idx] / x, 0.0)
        slopes = np.diff(self.log_values) / np.diff(self.log_xs)
        lx = np.log(x)
        idx = np.clip(np.searchsorted(self.log_xs, lx) - 1, 0, slopes.size - 1)
        local = np.where(lx < self.log_xs[0], self.slope_lo, np.where(lx > self.log_xs[-1], self.slope_hi, slopes[idx]))
        return local * self(x) / x


@dataclass(frozen=True)
class Tabulated:
    """Sampled g and B on a common abscissa, plus the user-declared xi."""

    xs: Tuple[float, ...]
    g_values: Tuple[float, ...]
    B_values: Tuple[float, ...]


@dataclass(frozen=True)
class Coefficients:
    """
    Growth rate g, fragmentation rate B and the small-size exponent xi.

    g(x) = O(x^{-xi}) at 0. For power laws xi = max(0, -a) is derived; for
    tables it must be declared.
    """

    family: CoefficientFamily
    params: Any
    xi: float
    _g_table: Optional[LogLogTable] = field(default=None, repr=False, compare=False)
    _B_table: Optional[LogLogTable] = field(default=None, repr=False, compare=False)

    @classmethod
    def power_law(cls, a: float = 1.0, g0: float = 1.0, b: float = 1.0, b0: float = 1.0) -> "Coefficients":
        params = PowerLaw(float(a), float(g0), float(b), float(b0))
        return cls(CoefficientFamily.POWER_LAW, params, max(0.0, -float(a)))

    @classmethod
    def tabulated(cls, xs, g_values, B_values, xi: float) -> "Coefficients":
        if xi is None or xi < 0:
            raise ConfigError("tabulated coefficients need a declared xi >= 0")
        g_table = LogLogTable(xs, g_values, "g")
        if not g_table.positive:
            raise ConfigError("tabulated g must be strictly positive")
        B_table = LogLogTable(xs, B_values, "B")
        params = Tabulated(tuple(map(float, xs)), tuple(map(float, g_values)), tuple(map(float, B_values)))
        return cls(CoefficientFamily.TABULATED, params, float(xi), g_table, B_table)

    @classmethod
    def from_dict(cls, block: Dict[str, Any]) -> "Coefficients":
        """Build from the model block: {"g": {...}, "B": {...}, "xi": ...}."""
        g_spec, B_spec = block.get("g"), block.get("B")
        if not isinstance(g_spec, dict) or not isinstance(B_spec, dict):
            raise ConfigError("model block needs 'g' and 'B' objects")
        kinds = {g_spec.get("type"), B_spec.get("type")}
        if kinds == {"power"}:
            _check_keys(g_spec, {"type", "a", "g0"}, "g")
            _check_keys(B_spec, {"type", "b", "b0"}, "B")
            coeffs = cls.power_law(
                a=g_spec.get("a", 1.0), g0=g_spec.get("g0", 1.0),
                b=B_spec.get("b", 1.0), b0=B_spec.get("b0", 1.0),
            )
            declared = block.get("xi")
            if declared is not None and abs(float(declared) - coeffs.xi) > 1e-12:
                logger.warning(f"Declared xi={declared} ignored, power law implies xi={coeffs.xi}")
            return coeffs
        if kinds == {"table"}:
            _check_keys(g_spec, {"type", "x", "values"}, "g")
            _check_keys(B_spec, {"type", "x", "values"}, "B")
            if list(g_spec["x"]) != list(B_spec["x"]):
                raise ConfigError("tabulated g and B must share their abscissae")
            return cls.tabulated(g_spec["x"], g_spec["values"], B_spec["values"], block.get("xi"))
        raise ConfigError(f"g and B must both be 'power' or both be 'table', got {sorted(map(str, kinds))}")

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    @property
    def is_power_law(self) -> bool:
        return self.family is CoefficientFamily.POWER_LAW

    @property
    def has_growth(self) -> bool:
        """False only for the pure-fragmentation configuration g = 0."""
        return not (self.is_power_law and self.params.g0 == 0.0)

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_power_law:
            p = self.params
            if np.any(x <= 0):
                raise DomainError("g is only defined for x > 0")
            return p.g0 * x ** p.a
        return self._g_table(x)

    def B(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("B is only defined for x >= 0")
        if self.is_power_law:
            p = self.params
            if p.b0 == 0.0:
                return np.zeros_like(x)
            if p.b == 0.0:
                return np.full_like(x, p.b0)
            return p.b0 * x ** p.b
        return self._B_table(np.maximum(x, 1e-300))

    def g_prime(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_power_law:
            p = self.params
            if p.a == 0.0:
                return np.zeros_like(x)
            return p.g0 * p.a * x ** (p.a - 1.0)
        return self._g_table.derivative(x)

    def g_tail_exponents(self) -> Tuple[float, float, float]:
        """Log-log slopes of g below and above the table, and the first abscissa."""
        if self.is_power_law:
            return self.params.a, self.params.a, 1.0
        table = self._g_table
        return table.slope_lo, table.slope_hi, float(table.xs[0])

    def describe(self) -> Dict[str, Any]:
        if self.is_power_law:
            p = self.params
            return {"g": {"type": "power", "a": p.a, "g0": p.g0},
                    "B": {"type": "power", "b": p.b, "b0": p.b0}, "xi": self.xi}
        p = self.params
        return {"g": {"type": "table", "x": list(p.xs), "values": list(p.g_values)},
                "B": {"type": "table", "x": list(p.xs), "values": list(p.B_values)}, "xi": self.xi}


def _check_keys(spec: Dict[str, Any], allowed: set, name: str) -> None:
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
