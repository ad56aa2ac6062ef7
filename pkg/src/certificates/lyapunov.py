"""
Foster-Lyapunov drift certificates.

Evaluates the drift function of each growth regime on log-spaced probes,
turns its supremum into (C1, C2, K_d) and checks the integrated drift
inequality on the conservative semigroup.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np

import config
from src.models.coefficients import Coefficients
from src.models.hypotheses import GrowthClass, estimate_limit
from src.models.kernel import FragmentKernel, moment
from src.numerics.eigen import consistent_dual
from src.numerics.grid import Grid, WeightSpec
from src.numerics.semigroup import SplitStepOperator, commensurate_dt, stable_dt
from src.utils.errors import CertificateError, ConfigError, DomainError
from src.utils.workers import worker_pool

logger = logging.getLogger(__name__)

PROBE_RANGE = (-6.0, 6.0)
C2_FLOOR = 1e-12


class DriftRegime(str, Enum):
    LINEAR_GROWTH = "LinearGrowth"
    SUBLINEAR_AT_0 = "SublinearAt0"
    SUPERLINEAR_AT_0 = "SuperlinearAt0"

    @classmethod
    def from_growth_class(cls, growth_class: GrowthClass) -> "DriftRegime":
        return {
            GrowthClass.EXACTLY_LINEAR: cls.LINEAR_GROWTH,
            GrowthClass.SUBLINEAR_AT_0: cls.SUBLINEAR_AT_0,
            GrowthClass.SUPERLINEAR_AT_0: cls.SUPERLINEAR_AT_0,
        }[growth_class]


@dataclass
class DriftCertificate:
    """Drift constants: S_t0 V <= gamma(t0) V + K_d with gamma(t0) = exp(-C1 t0)."""

    regime: DriftRegime
    weight: WeightSpec
    C1: float
    C2: float
    K_d: float
    source: str = "simulated"
    phi: Optional[Callable] = field(default=None, repr=False)
    lam: Optional[float] = None

    def gamma_of_t0(self, t0: float) -> float:
        return math.exp(-self.C1 * t0)

    def weight_m(self, x):
        """The weight in the variable m."""
        x = np.asarray(x, dtype=float)
        k, K = self.weight.exponents()
        if self.regime is DriftRegime.SUBLINEAR_AT_0:
            return np.asarray(self.phi(x), dtype=float) + x ** K
        return x ** k + x ** K

    def weight_f(self, x):
        """The weight in the variable f = phi m."""
        x = np.asarray(x, dtype=float)
        phi = x if self.regime is DriftRegime.LINEAR_GROWTH else np.asarray(self.phi(x), dtype=float)
        return self.weight_m(x) / phi

    def to_dict(self) -> Dict[str, Any]:
        return {
            "regime": self.regime.value,
            "weight": self.weight.describe(),
            "C1": self.C1,
            "C2": self.C2,
            "K_d": self.K_d,
            "source": self.source,
            "phi_source": "identity" if self.regime is DriftRegime.LINEAR_GROWTH else "numeric",
        }


# ----------------------------------------------------------------------
# drift functions
# ----------------------------------------------------------------------

def linear_coefficients(k: float, K_w: float, kernel: Optional[FragmentKernel] = None):
    """(c1, c2, c3, c4) of the linear-growth drift function."""
    kernel = kernel or FragmentKernel.uniform()
    c_one = (1.0 - k) / 2.0
    return (moment(kernel, K_w) - 1.0, K_w - 1.0 + c_one, moment(kernel, k) - 1.0, k - 1.0 + c_one)


def phi_linear(x, k: float, K_w: float, B: Callable, kernel: Optional[FragmentKernel] = None):
    """
    Drift function of f = x m for g(x) = x.

    c1 B x^{K-1} + c2 x^{K-1} + c3 B x^{k-1} + c4 x^{k-1}; the uniform kernel
    gives c = ((1-K)/(1+K), K-(k+1)/2, (1-k)/(1+k), (k-1)/2).
    """
    if not -1.0 < k < 1.0 < K_w:
        raise DomainError(f"linear drift needs -1 < k < 1 < K, got k={k}, K={K_w}")
    x = np.asarray(x, dtype=float)
    c1, c2, c3, c4 = linear_coefficients(k, K_w, kernel)
    b = np.asarray(B(x), dtype=float)
    return c1 * b * x ** (K_w - 1.0) + c2 * x ** (K_w - 1.0) + c3 * b * x ** (k - 1.0) + c4 * x ** (k - 1.0)


def phi_sublinear(x, K_w: float, coeffs: Coefficients, kernel: FragmentKernel):
    """(p_K - 1) x^K B + K x^{K-1} g."""
    x = np.asarray(x, dtype=float)
    return (moment(kernel, K_w) - 1.0) * x ** K_w * coeffs.B(x) + K_w * x ** (K_w - 1.0) * coeffs.g(x)


def phi_superlinear(x, k: float, K_w: float, coeffs: Coefficients, kernel: FragmentKernel):
    """(p_k - 1) x^k B + (p_K - 1) x^K B + k x^{k-1} g + K x^{K-1} g."""
    x = np.asarray(x, dtype=float)
    B, g = coeffs.B(x), coeffs.g(x)
    return ((moment(kernel, k) - 1.0) * x ** k * B + (moment(kernel, K_w) - 1.0) * x ** K_w * B
            + k * x ** (k - 1.0) * g + K_w * x ** (K_w - 1.0) * g)


def drift_probes(count: int = config.DRIFT_PROBES) -> np.ndarray:
    return np.logspace(PROBE_RANGE[0], PROBE_RANGE[1], count)


def _check_endpoints(regime: DriftRegime, xs: np.ndarray, values: np.ndarray, ratio_fn: Optional[Callable]) -> None:
    top = xs >= 10.0 ** (PROBE_RANGE[1] - 1.0)
    if not np.all(values[top] < 0):
        raise CertificateError(f"drift function is not negative on the top decade ({regime.value}); "
                               "sup does not stabilize")
    if regime is DriftRegime.SUBLINEAR_AT_0:
        toward_zero = 10.0 ** -np.arange(0, 7, dtype=float)
        kind, _ = estimate_limit(ratio_fn(toward_zero))
        if kind == "infinite":
            raise CertificateError("drift ratio Phi/phi is unbounded at 0 (SublinearAt0)")
        return
    bottom = xs <= 10.0 ** (PROBE_RANGE[0] + 1.0)
    if not np.all(values[bottom] < 0):
        raise CertificateError(f"drift function is not negative on the bottom decade ({regime.value}); "
                               "sup does not stabilize")


def drift_constants(regime: DriftRegime, weight: WeightSpec, coeffs: Coefficients, kernel: FragmentKernel,
                    phi: Optional[Callable] = None, lam: Optional[float] = None,
                    probes: int = config.DRIFT_PROBES, safety: float = config.DRIFT_SAFETY) -> DriftCertificate:
    """
    Drift constants of one regime.

    Args:
        regime: Growth regime, must match the coefficients
        weight: Weight exponents (validated against xi)
        coeffs: Growth and fragmentation rates
        kernel: Fragment kernel
        phi: Dual eigenfunction (sublinear and superlinear regimes)
        lam: Perron eigenvalue, used as C1 outside the linear regime
        probes: Number of log-spaced probes on [1e-6, 1e6]
        safety: Factor applied to the probe supremum

    Returns:
        DriftCertificate
    """
    linear = regime is DriftRegime.LINEAR_GROWTH
    if linear and not (coeffs.is_power_law and coeffs.params.a == 1.0 and coeffs.params.g0 == 1.0):
        raise ConfigError("the LinearGrowth regime needs g(x) = x")
    weight.validate(linear_growth=linear)
    k, K = weight.exponents()
    xs = drift_probes(probes)

    if linear:
        values = phi_linear(xs, k, K, coeffs.B, kernel)
        ratio_fn = None
        sup = float(np.max(values))
        C1 = (1.0 - k) / 2.0
    else:
        if phi is None or lam is None:
            raise ConfigError(f"the {regime.value} drift needs phi and lambda from the eigen solve")
        if regime is DriftRegime.SUBLINEAR_AT_0:
            drift = lambda x: phi_sublinear(x, K, coeffs, kernel)
        else:
            drift = lambda x: phi_superlinear(x, k, K, coeffs, kernel)
        ratio_fn = lambda x: drift(x) / np.asarray(phi(x), dtype=float)
        values = drift(xs)
        sup = float(np.max(ratio_fn(xs)))
        C1 = float(lam)
    if not C1 > 0:
        raise CertificateError(f"C1 = {C1} must be positive")

    _check_endpoints(regime, xs, values, ratio_fn)
    C2 = max(safety * sup, C2_FLOOR)
    K_d = C2 / C1 if linear else 1.0 + C2 / C1
    logger.info(f"Drift {regime.value}: C1={C1:.6g}, C2={C2:.6g}, K_d={K_d:.6g}")
    return DriftCertificate(regime=regime, weight=weight, C1=C1, C2=C2, K_d=K_d, phi=phi, lam=lam)


def selfsim_envelope(b: float) -> float:
    """Closed upper bound 5 (15/2)^{1/b + b/2} of the drift function for g = x, B = x^b, V = 1 + x^2."""
    if not b > 0:
        raise DomainError(f"b must be positive, got {b}")
    return 5.0 * 7.5 ** (1.0 / b + b / 2.0)


def selfsim_drift(b: float) -> DriftCertificate:
    """Closed-form drift constants for g = x, B = x^b and V = 1 + x^2."""
    C2 = selfsim_envelope(b)
    return DriftCertificate(regime=DriftRegime.LINEAR_GROWTH, weight=WeightSpec.self_similar_quadratic(),
                            C1=0.5, C2=C2, K_d=2.0 * C2, source="closed-form")


# ----------------------------------------------------------------------
# empirical verification
# ----------------------------------------------------------------------

@dataclass
class DriftReport:
    passed: bool
    trials: int
    t0: float
    gamma: float
    worst_ratio: float
    violations: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "trials": self.trials, "t0": self.t0, "gamma": self.gamma,
                "worst_ratio": self.worst_ratio, "violations": list(self.violations)}


def initial_states(grid: Grid, trials: int, rng: np.random.Generator) -> List[tuple]:
    """Near-Diracs at both grid ends plus random log-normal bumps, each of unit mass."""
    n = grid.size
    states = []
    for label, cells in (("near-dirac x_min", slice(0, 2)), ("near-dirac x_max", slice(n - 2, n))):
        mass = np.zeros(n)
        mass[cells] = 0.5
        states.append((label, mass))
    lo, hi = np.log(grid.x_min), np.log(grid.x_max)
    for i in range(max(trials - 2, 0)):
        centre, width = rng.uniform(lo, hi), rng.uniform(0.1, 1.0)
        mass = np.exp(-0.5 * ((np.log(grid.nodes) - centre) / width) ** 2) * grid.widths / grid.nodes
        if mass.sum() <= 0:
            mass[grid.cell_index(math.exp(centre))] = 1.0
        states.append((f"bump centre={math.exp(centre):.4g} width={width:.3f}", mass / mass.sum()))
    return states[:trials]


def verify_drift(cert: DriftCertificate, t0: float, trials: int, grid: Grid, coeffs: Coefficients,
                 kernel: FragmentKernel, phi_nodes: np.ndarray, dt: Optional[float] = None,
                 seed: int = config.SEED, slack: float = config.DRIFT_SLACK) -> DriftReport:
    """
    Check int V f(t0) <= gamma int V f(0) + K_d int f(0) on the conservative semigroup.

    phi_nodes is the dual eigenfunction on the grid nodes (x for g = x).
    """
    lam = cert.lam or 1.0
    dt = commensurate_dt(grid, coeffs, dt or stable_dt(grid, coeffs, lam))
    dual = consistent_dual(grid, coeffs, kernel, dt, phi_nodes, lam=lam)
    op = SplitStepOperator(grid, coeffs, kernel, dual.conservative())
    steps = max(1, int(round(t0 / dt)))
    gamma = cert.gamma_of_t0(steps * dt)
    V = np.asarray(cert.weight_f(grid.nodes), dtype=float)

    def run(item):
        label, f0 = item
        f = f0.copy()
        for _ in range(steps):
            f, _ = op.apply(f)
        lhs = float(np.dot(V, f))
        rhs = gamma * float(np.dot(V, f0)) + cert.K_d * float(f0.sum())
        return label, lhs, rhs

    rng = np.random.default_rng(seed)
    results = worker_pool.map(run, initial_states(grid, trials, rng))
    violations = [{"initial_state": label, "lhs": lhs, "rhs": rhs}
                  for label, lhs, rhs in results if lhs > (1.0 + slack) * rhs]
    worst = max(lhs / rhs for _, lhs, rhs in results)
    report = DriftReport(passed=not violations, trials=len(results), t0=steps * dt, gamma=gamma,
                         worst_ratio=worst, violations=violations)
    if violations:
        logger.error(f"Drift inequality violated for {len(violations)} of {len(results)} initial states")
    else:
        logger.info(f"Drift inequality holds on {len(results)} initial states (worst ratio {worst:.4f})")
    return report
