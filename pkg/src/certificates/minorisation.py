"""
Small-set (minorisation) certificates.

Evolves Dirac cells from across the small set C = {V <= R} under the
conservative semigroup, intersects the supports that stay above a floor and
reads off (alpha, nu). The self-similar case also has a closed form.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize

import config
from src.models.coefficients import Coefficients
from src.models.kernel import FragmentKernel, KernelKind
from src.numerics.eigen import consistent_dual
from src.numerics.flow import FlowMap, flow_sublinearity_holds
from src.numerics.grid import Grid, GridMeasure, WeightLike, weight_values
from src.numerics.semigroup import SplitStepOperator, commensurate_dt, stable_dt, step_count
from src.utils.errors import CertificateError, DomainError, EmptyIntervalError
from src.utils.logreal import LogReal
from src.utils.workers import worker_pool

logger = logging.getLogger(__name__)

ALPHA_CEILING = 1.0 - 1e-12
T_B_PROBES = np.logspace(-6, 6, 1201)
MITOSIS_INTERVAL_DOUBLINGS = 12


class SmallSetMode(str, Enum):
    SIMULATED = "Simulated"
    CLOSED_FORM_SELF_SIMILAR = "ClosedFormSelfSimilar"


class NuShape(str, Enum):
    UNIFORM = "uniform"
    LINEAR = "linear"


# ----------------------------------------------------------------------
# proof intervals
# ----------------------------------------------------------------------

def fragmentation_threshold(coeffs: Coefficients, probes=T_B_PROBES) -> float:
    """First probe with B(x) >= g(x)/x; falls back to the first probe where B > 0."""
    probes = np.asarray(probes, dtype=float)
    B = np.asarray(coeffs.B(probes), dtype=float)
    hits = np.nonzero(B >= np.asarray(coeffs.g(probes), dtype=float) / probes)[0]
    if hits.size:
        return float(probes[hits[0]])
    positive = np.nonzero(B > 0)[0]
    if not positive.size:
        raise CertificateError("B vanishes on every probe; no time t_B exists")
    logger.info("B(x) >= g(x)/x never holds on the probes; using the first x with B(x) > 0")
    return float(probes[positive[0]])


def time_to_threshold(flow_map: FlowMap, eta: float, x_B: float) -> float:
    """t_B: smallest t with X_t(eta) >= x_B."""
    if eta >= x_B:
        return 0.0
    upper = 1.0
    while flow_map.flow(upper, eta) < x_B:
        upper *= 2.0
        if upper > 1e8:
            raise CertificateError(f"the flow from {eta} never reaches x_B = {x_B}")
    return float(optimize.brentq(lambda t: flow_map.flow(t, eta) - x_B, 0.0, upper, xtol=1e-12))


def proof_interval(flow_map: FlowMap, kernel: FragmentKernel, eta: float, theta: float, t: float,
                   t_B: float) -> Tuple[float, float]:
    """
    Interval on which the evolved Dirac has a guaranteed lower bound.

    Uniform: (X_{t-t_B}(eta), X_t(eta)). EqualMitosis:
    [X_t(theta)/2, X_{t-t_B}(X_{t_B}(0)/2)].
    """
    if t <= t_B:
        raise EmptyIntervalError(f"t = {t:.6g} does not exceed t_B = {t_B:.6g}")
    if kernel.kind is KernelKind.EQUAL_MITOSIS:
        lo = 0.5 * flow_map.flow(t, theta)
        hi = flow_map.flow(t - t_B, 0.5 * flow_map.flow(t_B, 0.0))
    else:
        lo = flow_map.flow(t - t_B, eta)
        hi = flow_map.flow(t, eta)
    if not lo < hi:
        raise EmptyIntervalError(f"proof interval [{lo:.6g}, {hi:.6g}] is empty at t = {t:.6g}")
    return float(lo), float(hi)


def mitosis_interval_time(flow_map: FlowMap, eta: float, theta: float, t_B: float, t_start: float,
                          max_doublings: int = MITOSIS_INTERVAL_DOUBLINGS) -> float:
    """First t = t_B + s 2^j with a nonempty mitosis proof interval."""
    span = max(t_start - t_B, 1.0)
    for _ in range(max_doublings + 1):
        t = t_B + span
        try:
            proof_interval(flow_map, FragmentKernel.mitosis(), eta, theta, t, t_B)
            return t
        except EmptyIntervalError:
            span *= 2.0
    raise EmptyIntervalError(
        f"mitosis proof interval stays empty up to t = {t_B + span / 2.0:.6g}; "
        "X_t(theta)/2 never falls below X_(t - t_B)(X_(t_B)(0)/2)")


def time_integrated_dirac(grid: Grid, F: Callable[[float], float], t: float, steps: int = 4000) -> GridMeasure:
    """int_0^t delta_{F(tau)} dtau on the grid (midpoint rule)."""
    if steps < 1 or t <= 0:
        raise DomainError("time_integrated_dirac needs t > 0 and steps >= 1")
    taus = (np.arange(steps) + 0.5) * (t / steps)
    points = np.array([F(tau) for tau in taus], dtype=float)
    inside = (points >= grid.x_min) & (points < grid.x_max)
    cells = np.searchsorted(grid.edges, points[inside], side="right") - 1
    mass = np.bincount(cells, minlength=grid.size) * (t / steps)
    return GridMeasure(grid, mass.astype(float))


# ----------------------------------------------------------------------
# Dirac evolutions
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiracBound:
    x0: float
    interval: Tuple[float, float]
    floor: float
    mass: np.ndarray = field(repr=False)


class DiracEvolver:
    """
    Conservative semigroup for Dirac-cell initial data.

    Builds the discrete dual pair once; every starting point reuses the same operator.
    """

    def __init__(self, grid: Grid, coeffs: Coefficients, kernel: FragmentKernel, phi_nodes: np.ndarray,
                 lam: float, dt: Optional[float] = None):
        self.grid = grid
        self.coeffs = coeffs
        self.kernel = kernel
        self.dt = commensurate_dt(grid, coeffs, dt or stable_dt(grid, coeffs, lam))
        dual = consistent_dual(grid, coeffs, kernel, self.dt, phi_nodes, lam=lam)
        self.lam_h, self.phi_h = dual.lam_h, dual.phi_h
        self.operator = SplitStepOperator(grid, coeffs, kernel, dual.conservative())

    def evolve(self, x0: float, t: float) -> np.ndarray:
        f = GridMeasure.dirac(self.grid, x0).mass
        for _ in range(step_count(t, self.dt)):
            f, _ = self.operator.apply(f)
        return f

    def lower_bound(self, x0: float, t: float, floor: float = config.DIRAC_FLOOR) -> DiracBound:
        """Largest run of cells whose density stays above floor * max density."""
        mass = self.evolve(x0, t)
        density = mass / self.grid.widths
        above = density >= floor * float(np.max(density))
        best, start = (0, -1, -1), None
        for i, flag in enumerate(np.append(above, False)):
            if flag and start is None:
                start = i
            elif not flag and start is not None:
                if i - start > best[0]:
                    best = (i - start, start, i)
                start = None
        _, lo, hi = best
        if best[0] < 2:
            raise EmptyIntervalError(f"evolved Dirac from x0={x0:.6g} has no interval above the floor at t={t:.6g}")
        interval = (float(self.grid.edges[lo]), float(self.grid.edges[hi]))
        return DiracBound(x0=x0, interval=interval, floor=float(np.min(density[lo:hi])), mass=mass)


def dirac_lower_bound(evolver: DiracEvolver, x0: float, t: float,
                      floor: float = config.DIRAC_FLOOR) -> Tuple[Tuple[float, float], float]:
    """(interval, density floor) of the evolved Dirac cell at x0."""
    bound = evolver.lower_bound(x0, t, floor)
    return bound.interval, bound.floor


# ----------------------------------------------------------------------
# certificates
# ----------------------------------------------------------------------

@dataclass
class SmallSetCertificate:
    """Hypothesis: F_t0 delta_x0 >= alpha nu for every x0 in C_set."""

    t0: float
    C_set: Tuple[float, float]
    nu: GridMeasure
    alpha: LogReal
    R: float
    mode: SmallSetMode = SmallSetMode.SIMULATED
    probes: List[float] = field(default_factory=list)
    interval: Optional[Tuple[float, float]] = None
    t_B: Optional[float] = None
    nu_shape: NuShape = NuShape.UNIFORM
    resolution: Dict[str, Any] = field(default_factory=dict)

    @property
    def log_alpha(self) -> float:
        return self.alpha.log

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": self.mode.value,
            "t0": self.t0,
            "R": self.R,
            "C_set": list(self.C_set),
            "interval": list(self.interval) if self.interval else None,
            "t_B": self.t_B,
            "alpha": self.alpha.to_json(),
            "nu_shape": self.nu_shape.value,
            "nu_mass": self.nu.total(),
            "probes": len(self.probes),
            "resolution": self.resolution,
        }


def small_set_cells(grid: Grid, V: WeightLike, R: float) -> np.ndarray:
    """Indices of the grid nodes with V <= R."""
    cells = np.nonzero(weight_values(grid, V) <= R)[0]
    if cells.size == 0:
        raise CertificateError(f"no grid node satisfies V(x) <= R = {R:.6g}")
    return cells


def reference_measure(grid: Grid, interval: Tuple[float, float], shape: NuShape) -> GridMeasure:
    """Probability on the cells whose nodes lie in the interval."""
    inside = (grid.nodes >= interval[0]) & (grid.nodes <= interval[1])
    if not np.any(inside):
        raise EmptyIntervalError(f"no cell node inside [{interval[0]:.6g}, {interval[1]:.6g}]")
    weights = grid.widths if shape is NuShape.UNIFORM else grid.nodes * grid.widths
    mass = np.where(inside, weights, 0.0)
    return GridMeasure(grid, mass / mass.sum())


def small_set_constants(evolver: DiracEvolver, t0: float, V: WeightLike, R: float,
                        probes: int = config.SMALLSET_PROBES, nu_shape: NuShape = NuShape.UNIFORM,
                        floor: float = config.DIRAC_FLOOR) -> SmallSetCertificate:
    """
    Simulated small-set constants.

    Args:
        evolver: Conservative semigroup for Dirac cells
        t0: Minorisation time
        V: Weight in the conservative variable
        R: Level of the small set {V <= R}
        probes: Log-spaced starting points across C, endpoints included
        nu_shape: Uniform or proportional to y on the common interval
        floor: Relative density floor of each evolved Dirac

    Returns:
        SmallSetCertificate with alpha in (0, 1) and nu a probability
    """
    grid = evolver.grid
    cells = small_set_cells(grid, V, R)
    eta, theta = float(grid.nodes[cells[0]]), float(grid.nodes[cells[-1]])
    starts = np.unique(np.clip(np.geomspace(eta, theta, probes), grid.nodes[0], grid.nodes[-1]))

    # proof intervals need growth; without it only the simulated bounds below count
    t_B = None
    if evolver.coeffs.has_growth:
        flow_map = evolver.operator.flow_map
        t_B = time_to_threshold(flow_map, eta, fragmentation_threshold(evolver.coeffs))
        if evolver.kernel.kind is KernelKind.EQUAL_MITOSIS:
            # interval first: for g = g0 x it is empty at every t
            t_proof = mitosis_interval_time(flow_map, eta, theta, t_B, t0)
            if not flow_sublinearity_holds(flow_map, [0.5], starts, [t0]):
                raise CertificateError("mitosis needs X_t(x)/2 < X_t(x/2) on the probe set")
            logger.info(f"Mitosis proof interval nonempty from t = {t_proof:.6g} (t_B = {t_B:.6g})")
        elif t0 <= t_B:
            logger.info(f"t0 = {t0:.6g} does not exceed t_B = {t_B:.6g}; relying on simulated positivity")

    # evolve one Dirac cell per starting point and intersect the supports above the floor
    bounds = worker_pool.map(lambda x0: evolver.lower_bound(float(x0), t0, floor), starts)
    lo = max(b.interval[0] for b in bounds)
    hi = min(b.interval[1] for b in bounds)
    if not lo < hi:
        raise EmptyIntervalError(f"evolved Dirac supports do not intersect: [{lo:.6g}, {hi:.6g}]")

    # alpha is the worst ratio of an evolved Dirac to nu on nu's support
    nu = reference_measure(grid, (lo, hi), nu_shape)
    support = nu.mass > 0
    ratios = [float(np.min(b.mass[support] / nu.mass[support])) for b in bounds]
    alpha = min(ratios)
    if not alpha > 0:
        raise CertificateError(f"alpha = {alpha:.3e} must be positive")
    alpha = min(alpha, ALPHA_CEILING)

    cert = SmallSetCertificate(
        t0=t0, C_set=(eta, theta), nu=nu, alpha=LogReal.from_float(alpha), R=R,
        probes=[float(x) for x in starts], interval=(lo, hi), t_B=t_B, nu_shape=nu_shape,
        resolution={**grid.describe(), "dt": evolver.dt},
    )
    logger.info(f"Small set [{eta:.4g}, {theta:.4g}] at t0={t0:.4g}: alpha={alpha:.6e}, "
                f"nu on [{lo:.4g}, {hi:.4g}]")
    return cert


def replay_certificate(cert: SmallSetCertificate, evolver: DiracEvolver, rtol: float = 1e-9) -> int:
    """Number of (probe, cell) pairs where F_t0 delta_x0 < alpha nu."""
    alpha = cert.alpha.to_float()
    bound = alpha * cert.nu.mass
    violations = 0
    for x0 in cert.probes:
        mass = evolver.evolve(x0, cert.t0)
        violations += int(np.count_nonzero(mass < bound * (1.0 - rtol)))
    if violations:
        logger.error(f"Small-set replay: {violations} violations of F delta >= alpha nu")
    return violations


# ----------------------------------------------------------------------
# closed form for g = x, B = x^b, uniform kernel
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SelfSimilarSmallSet:
    """
    alpha and nu for g = x, B = x^b with the uniform kernel.

    Three readings of log alpha are kept: the general-t0 formula with
    exponent b, the form displayed for t0 = 2 log 2 and the literal
    exponent R^gamma with gamma = exp(-t0/2).
    """

    b: float
    t0: float
    R: float

    def __post_init__(self):
        if not (self.b > 0 and self.t0 > 0 and self.R > 1):
            raise DomainError(f"closed-form small set needs b > 0, t0 > 0, R > 1 (b={self.b}, t0={self.t0}, R={self.R})")

    @property
    def C_set(self) -> Tuple[float, float]:
        return 1.0 / self.R, self.R

    @property
    def nu_support(self) -> Tuple[float, float]:
        return 0.0, self.R * math.exp(self.t0)

    def log_alpha_general(self) -> float:
        b, R, t0 = self.b, self.R, self.t0
        return (b + 3.0) * math.log(R) + math.log(t0) - 2.0 * R ** b * math.exp(b * t0) / b

    def log_alpha_displayed(self) -> float:
        b, R = self.b, self.R
        return math.log(2.0 * math.log(2.0)) + (b + 3.0) * math.log(R) - 2.0 * (4.0 * R) ** b / b

    def log_alpha_literal(self) -> float:
        b, R, t0 = self.b, self.R, self.t0
        gamma = math.exp(-t0 / 2.0)
        return (b + 3.0) * math.log(R) + math.log(t0) - 2.0 * R ** gamma * math.exp(b * t0) / b

    @property
    def alpha(self) -> LogReal:
        return LogReal.from_log(self.log_alpha_general())

    def nu_density(self, y):
        """2 e^{-2 t0} R^{-2} y on [0, R e^{t0}]; a probability density."""
        y = np.asarray(y, dtype=float)
        top = self.nu_support[1]
        return np.where((y >= 0) & (y <= top), 2.0 * math.exp(-2.0 * self.t0) / self.R ** 2 * y, 0.0)

    def nu_measure(self, grid: Grid) -> GridMeasure:
        return GridMeasure.from_density(grid, self.nu_density)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mode": SmallSetMode.CLOSED_FORM_SELF_SIMILAR.value,
            "b": self.b,
            "t0": self.t0,
            "R": self.R,
            "C_set": list(self.C_set),
            "nu_support": list(self.nu_support),
            "log_alpha": {
                "general": self.log_alpha_general(),
                "displayed_t0_2log2": self.log_alpha_displayed(),
                "literal_R_pow_gamma": self.log_alpha_literal(),
            },
            "literal_reading_flag": "suspected typo: exponent R^gamma read with gamma = exp(-t0/2)",
        }
