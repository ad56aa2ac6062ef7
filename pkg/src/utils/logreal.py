"""
Log-domain reals.

Signed reals carried as (sign, log|x|) so that certificate probabilities of
order exp(-1e7) survive products, sums and the one-minus path into rates.
"""

import math
from dataclasses import dataclass
from functools import total_ordering
from typing import Union

import numpy as np

from src.utils.errors import DomainError

Number = Union[int, float, "LogReal"]

# Below this log-magnitude exp() underflows to zero in binary64
MIN_LOG = math.log(np.finfo(float).tiny)
MAX_LOG = math.log(np.finfo(float).max)


@total_ordering
@dataclass(frozen=True)
class LogReal:
    """A real number stored as sign and natural log of its magnitude."""

    sign: int
    log_abs: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise DomainError(f"LogReal sign must be -1, 0 or 1, got {self.sign}")
        if self.sign == 0 and self.log_abs != -math.inf:
            object.__setattr__(self, "log_abs", -math.inf)
        if math.isnan(self.log_abs):
            raise DomainError("LogReal log-magnitude is NaN")

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    @classmethod
    def from_float(cls, value: float) -> "LogReal":
        if value == 0:
            return cls.zero()
        if math.isnan(value):
            raise DomainError("cannot represent NaN")
        return cls(1 if value > 0 else -1, math.log(abs(value)))

    @classmethod
    def from_log(cls, log_abs: float, sign: int = 1) -> "LogReal":
        if log_abs == -math.inf:
            return cls.zero()
        return cls(sign, float(log_abs))

    @classmethod
    def zero(cls) -> "LogReal":
        return cls(0, -math.inf)

    @classmethod
    def one(cls) -> "LogReal":
        return cls(1, 0.0)

    @staticmethod
    def coerce(value: Number) -> "LogReal":
        return value if isinstance(value, LogReal) else LogReal.from_float(float(value))

    # ------------------------------------------------------------------
    # views
    # ------------------------------------------------------------------

    def to_float(self) -> float:
        """Plain float; underflows to 0.0 and overflows to +-inf."""
        if self.sign == 0:
            return 0.0
        if self.log_abs > MAX_LOG:
            return self.sign * math.inf
        return self.sign * math.exp(self.log_abs)

    @property
    def log(self) -> float:
        """Natural log; only defined for positive values."""
        if self.sign != 1:
            raise DomainError(f"log of non-positive LogReal (sign={self.sign})")
        return self.log_abs

    @property
    def log10(self) -> float:
        return self.log / math.log(10.0)

    def is_positive(self) -> bool:
        return self.sign == 1

    # ------------------------------------------------------------------
    # arithmetic
    # ------------------------------------------------------------------

    def __neg__(self) -> "LogReal":
        return LogReal(-self.sign, self.log_abs)

    def __mul__(self, other: Number) -> "LogReal":
        other = LogReal.coerce(other)
        if self.sign == 0 or other.sign == 0:
            return LogReal.zero()
        return LogReal(self.sign * other.sign, self.log_abs + other.log_abs)

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "LogReal":
        other = LogReal.coerce(other)
        if other.sign == 0:
            raise DomainError("division by zero LogReal")
        if self.sign == 0:
            return LogReal.zero()
        return LogReal(self.sign * other.sign, self.log_abs - other.log_abs)

    def __rtruediv__(self, other: Number) -> "LogReal":
        return LogReal.coerce(other) / self

    def __add__(self, other: Number) -> "LogReal":
        other = LogReal.coerce(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        if self.sign == other.sign:
            return LogReal(self.sign, float(np.logaddexp(self.log_abs, other.log_abs)))
        big, small = (self, other) if self.log_abs >= other.log_abs else (other, self)
        if big.log_abs == small.log_abs:
            return LogReal.zero()
        return LogReal(big.sign, big.log_abs + math.log1p(-math.exp(small.log_abs - big.log_abs)))

    __radd__ = __add__

    def __sub__(self, other: Number) -> "LogReal":
        return self + (-LogReal.coerce(other))

    def __rsub__(self, other: Number) -> "LogReal":
        return LogReal.coerce(other) - self

    def __pow__(self, exponent: float) -> "LogReal":
        if self.sign != 1:
            raise DomainError("only positive LogReal values can be raised to real powers")
        return LogReal(1, self.log_abs * float(exponent))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, (LogReal, int, float)):
            return NotImplemented
        other = LogReal.coerce(other)
        return self.sign == other.sign and (self.sign == 0 or self.log_abs == other.log_abs)

    def __lt__(self, other: Number) -> bool:
        other = LogReal.coerce(other)
        if self.sign != other.sign:
            return self.sign < other.sign
        if self.sign == 0:
            return False
        if self.sign > 0:
            return self.log_abs < other.log_abs
        return self.log_abs > other.log_abs

    # ------------------------------------------------------------------
    # one-minus path
    # ------------------------------------------------------------------

    def one_minus(self) -> "LogReal":
        """1 - x, exact in log-domain for tiny x."""
        return LogReal.one() - self

    def neg_log1m(self) -> "LogReal":
        """-log(1 - x) for 0 <= x < 1, accurate when x underflows binary64."""
        if self.sign == 0:
            return LogReal.zero()
        if self.sign < 0 or self.log_abs >= 0.0:
            raise DomainError("neg_log1m needs 0 <= x < 1")
        if self.log_abs < -20.0:
            # -log(1-x) = x (1 + x/2 + x^2/3 + ...)
            x = math.exp(self.log_abs) if self.log_abs > MIN_LOG else 0.0
            return LogReal(1, self.log_abs + math.log1p(x / 2.0 + x * x / 3.0))
        return LogReal.from_float(-math.log1p(-math.exp(self.log_abs)))

    def to_json(self) -> dict:
        return {"sign": self.sign, "log": self.log_abs if self.sign else None}

    def __repr__(self) -> str:
        if self.sign == 0:
            return "LogReal(0)"
        return f"LogReal({'-' if self.sign < 0 else ''}exp({self.log_abs:.12g}))"
