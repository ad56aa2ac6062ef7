"""
Fragment kernels.

Self-similar fragment distributions p on (0, 1]: uniform (p = 2) and equal
mitosis (p = 2 delta_{1/2}). A general density can be attached for moment
bookkeeping; only the two named kernels are certified downstream.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import integrate

from src.models.coefficients import Coefficients
from src.utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)


class KernelKind(str, Enum):
    UNIFORM = "uniform"
    EQUAL_MITOSIS = "mitosis"
    DENSITY = "density"


@dataclass(frozen=True)
class FragmentKernel:
    """Fragment distribution p on (0, 1]."""

    kind: KernelKind
    density: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.kind is KernelKind.DENSITY and self.density is None:
            raise ConfigError("a density kernel needs its density p(z)")

    @classmethod
    def uniform(cls) -> "FragmentKernel":
        return cls(KernelKind.UNIFORM)

    @classmethod
    def mitosis(cls) -> "FragmentKernel":
        return cls(KernelKind.EQUAL_MITOSIS)

    @classmethod
    def from_name(cls, name: str) -> "FragmentKernel":
        try:
            kind = KernelKind(name)
        except ValueError:
            raise ConfigError(f"kernel must be 'uniform' or 'mitosis', got {name!r}")
        if kind is KernelKind.DENSITY:
            raise ConfigError("density kernels cannot be declared in a run config")
        return cls(kind)

    @property
    def is_certified(self) -> bool:
        return self.kind in (KernelKind.UNIFORM, KernelKind.EQUAL_MITOSIS)


def moment(kernel: FragmentKernel, k: float) -> float:
    """
    k-th moment p_k of the fragment distribution.

    Args:
        kernel: Fragment kernel
        k: Moment order (Uniform needs k > -1)

    Returns:
        Uniform: 2/(k+1); EqualMitosis: 2^(1-k); density kernels by quadrature.
    """
    if kernel.kind is KernelKind.UNIFORM:
        if k <= -1:
            raise DomainError(f"uniform kernel moment diverges for k={k} <= -1")
        return 2.0 / (k + 1.0)
    if kernel.kind is KernelKind.EQUAL_MITOSIS:
        return 2.0 ** (1.0 - k)
    value, _ = integrate.quad(lambda z: z ** k * kernel.density(z), 0.0, 1.0, limit=200)
    if not np.isfinite(value):
        raise DomainError(f"moment of order {k} diverges for the given density")
    return float(value)


def kernel_rate_consistency(kernel: FragmentKernel, coeffs: Coefficients,
                            probe_xs: Iterable[float], rtol: float = 1e-8) -> bool:
    """True iff int_0^x (y/x) kappa(x, y) dy = B(x) at every probe."""
    probes = np.asarray(list(probe_xs), dtype=float)
    if probes.size == 0 or np.any(probes <= 0):
        raise DomainError("probe_xs must be a nonempty list of positive sizes")

    for x in probes:
        Bx = float(coeffs.B(x))
        if kernel.kind is KernelKind.DENSITY:
            # kappa(x, y) = B(x) p(y/x) / x
            integral, _ = integrate.quad(lambda y: (y / x) * Bx * kernel.density(y / x) / x, 0.0, x, limit=200)
        else:
            integral = Bx * moment(kernel, 1.0)
        if abs(integral - Bx) > rtol * max(Bx, 1.0):
            logger.info(f"Kernel/rate mismatch at x={x}: integral {integral} vs B(x) {Bx}")
            return False
    return True
