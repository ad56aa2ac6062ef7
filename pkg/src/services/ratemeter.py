"""
Empirical convergence rate.

Evolves the scaled equation, measures the weighted distance to the
stationary profile and fits its exponential decay, with gates that reject
stationary, oscillating and pre-asymptotic data.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy import stats

import config
from src.models.coefficients import Coefficients
from src.models.kernel import FragmentKernel
from src.numerics.eigen import EigenTriple, discrete_residual
from src.numerics.grid import Grid, GridMeasure, WeightLike, weight_values, weighted_tv_norm
from src.numerics.semigroup import commensurate_dt, evolve, stable_dt, step_count
from src.utils.errors import DomainError
from src.utils.logreal import LogReal
from src.utils.workers import worker_pool

logger = logging.getLogger(__name__)

STATIONARY_RTOL = 1e-6
ROUNDOFF_FLOOR = 1e-12
FLOOR_SAFETY = 10.0
MONOTONE_SLACK = 0.05
DOMINANT_POWER = 0.30
STALLED_DECAY = math.log(2.0)
BAND_OCTAVES = 0.25
TARGET_SNAPSHOTS = 240
SOFT_RATE_FLOOR = 0.4


@dataclass
class RateFit:
    """Slope of log d(t) on [T/3, T], or the reason it was rejected."""

    initial: str
    times: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    rho_emp: Optional[float] = None
    fit_window: Optional[tuple] = None
    r_squared: Optional[float] = None
    rejection: Optional[str] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    certificate_rho: Optional[LogReal] = None

    @property
    def accepted(self) -> bool:
        return self.rejection is None

    def rows(self):
        return zip(self.times, self.distances)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "initial": self.initial,
            "accepted": self.accepted,
            "rho_emp": self.rho_emp,
            "fit_window": list(self.fit_window) if self.fit_window else None,
            "r_squared": self.r_squared,
            "rejection": self.rejection,
            "diagnostics": self.diagnostics,
            "certificate_log_rho": self.certificate_rho.log if self.certificate_rho else None,
        }


@dataclass
class DistanceCurve:
    """d(t) over the whole window and over a quarter-octave band, with the floor the target supports."""

    times: np.ndarray
    distances: np.ndarray
    band: np.ndarray
    target_norm: float
    floor: float


def gaussian_bump(grid: Grid, center: float, width: Optional[float] = None) -> GridMeasure:
    """Unit-mass Gaussian bump in x."""
    if center <= 0:
        raise DomainError(f"bump centre must be positive, got {center}")
    width = width or center / 4.0
    bump = GridMeasure.from_density(grid, lambda x: np.exp(-0.5 * ((np.asarray(x) - center) / width) ** 2))
    return bump.normalized()


def band_cells(grid: Grid, weighted: np.ndarray, octaves: float = BAND_OCTAVES) -> np.ndarray:
    """Cells within octaves/2 of the median of the weighted target."""
    cumulative = np.cumsum(weighted) / np.sum(weighted)
    median = grid.nodes[min(int(np.searchsorted(cumulative, 0.5)), grid.size - 1)]
    return np.abs(np.log2(grid.nodes / median)) <= 0.5 * octaves


def distance_curve(n0: GridMeasure, T: float, V: WeightLike, triple: EigenTriple, coeffs: Coefficients,
                   kernel: FragmentKernel, dt: Optional[float] = None) -> DistanceCurve:
    """
    d(t) = || m_t - (int phi n0) N ||_V along the scaled run.

    The run uses the step N was computed for (dt_h, lambda_h and the
    inflow lambda), so a converged N is its fixed point up to the eigen
    tolerance; the floor is FLOOR_SAFETY times the stationary residual of N
    for that step.
    """
    grid = n0.grid
    lam = triple.lam_h if triple.lam_h is not None else triple.lam
    dt = dt or triple.dt_h or commensurate_dt(grid, coeffs, stable_dt(grid, coeffs, lam))
    stride = max(1, step_count(T, dt) // TARGET_SNAPSHOTS)
    trajectory = evolve(n0, T, triple.scaled_config(stride, dt=dt), coeffs, kernel)

    target = triple.N.scaled(float(np.dot(triple.phi, n0.mass)))
    V_nodes = weight_values(grid, V)
    band = band_cells(grid, V_nodes * target.mass)
    deviations = [s - target for s in trajectory.snapshots]
    distances = np.array([weighted_tv_norm(d, V_nodes) for d in deviations])
    local = np.array([float(np.sum(V_nodes[band] * np.abs(d.mass[band]))) for d in deviations])
    target_norm = weighted_tv_norm(target, V_nodes)
    # a Cesaro mean is not a fixed point of the step
    residual = discrete_residual(triple, coeffs, kernel, dt) if triple.converged else 0.0
    floor = target_norm * max(ROUNDOFF_FLOOR, FLOOR_SAFETY * residual)
    return DistanceCurve(trajectory.times, distances, local, target_norm, floor)


def _oscillation(times: np.ndarray, residual: np.ndarray, slope: float) -> Optional[Dict[str, Any]]:
    """Diagnostics when the detrended log residual carries a dominant periodic component."""
    power = np.abs(np.fft.rfft(residual - residual.mean())) ** 2
    ac = power[1:]
    if ac.size == 0 or ac.sum() <= 0:
        return None
    peak = int(np.argmax(ac))
    share = float(ac[peak] / ac.sum())
    amplitude = float(residual.max() - residual.min())
    decay = abs(slope) * float(times[-1] - times[0])
    if share < DOMINANT_POWER:
        return None
    if amplitude > 2.0 * math.log1p(config.OSCILLATION_AMPLITUDE) or decay < amplitude:
        period = float(times[-1] - times[0]) / (peak + 1)
        return {"dominant_share": share, "log_amplitude": amplitude, "log_decay": decay, "period": period}
    return None


def _band_oscillation(times: np.ndarray, band: np.ndarray) -> Optional[Dict[str, Any]]:
    """Persistent oscillation of the band distance; only large swings count."""
    usable = band > 0
    if usable.sum() < config.RATE_MIN_SNAPSHOTS:
        return None
    t, log_b = times[usable], np.log(band[usable])
    line = stats.linregress(t, log_b)
    found = _oscillation(t, log_b - (line.intercept + line.slope * t), line.slope)
    if found and found["log_amplitude"] > 2.0 * math.log1p(config.OSCILLATION_AMPLITUDE):
        return {**found, "observable": "quarter-octave band"}
    return None


def fit_rate(times: np.ndarray, distances: np.ndarray, target_norm: float, initial: str = "",
             floor: float = 0.0, band: Optional[np.ndarray] = None) -> RateFit:
    """
    Gate and fit log d(t) on [T_eff/3, T_eff].

    T_eff is T, or the first time d(t) reaches the floor. Gates, in order:
    already stationary, too few snapshots above the floor, oscillation of
    d or (when d has stalled) of the band distance, non-monotone decay,
    r^2 below the minimum.
    """
    fit = RateFit(initial=initial, times=times, distances=distances)
    if np.max(distances) <= STATIONARY_RTOL * max(target_norm, 1e-300):
        fit.rejection = "already stationary"
        fit.diagnostics = {"max_distance": float(np.max(distances))}
        return fit

    # cut the horizon where d(t) meets what the discrete target can resolve
    floor = max(floor, ROUNDOFF_FLOOR * distances[0])
    reached = np.nonzero(distances <= floor)[0]
    horizon = float(times[reached[0]]) if reached.size else float(times[-1])
    keep = (times >= horizon / 3.0) & (times <= horizon) & (distances > floor)
    t_win, d_win = times[keep], distances[keep]
    if t_win.size < config.RATE_MIN_SNAPSHOTS:
        fit.rejection = "too few snapshots in the fit window"
        fit.diagnostics = {"snapshots": int(t_win.size), "required": config.RATE_MIN_SNAPSHOTS,
                           "floor": floor, "horizon": horizon}
        return fit

    log_d = np.log(d_win)
    line = stats.linregress(t_win, log_d)
    fit.fit_window = (float(t_win[0]), float(t_win[-1]))
    fit.r_squared = float(line.rvalue ** 2)

    # periodic structure in log d, then in the band when d itself has stalled
    oscillation = _oscillation(t_win, log_d - (line.intercept + line.slope * t_win), line.slope)
    stalled = abs(line.slope) * (t_win[-1] - t_win[0]) < STALLED_DECAY
    if oscillation is None and stalled and band is not None:
        oscillation = _band_oscillation(t_win, band[keep])
    if oscillation:
        fit.rejection = "oscillation"
        fit.diagnostics = oscillation
        return fit

    rises = np.diff(log_d)
    if np.max(rises) > math.log1p(MONOTONE_SLACK):
        fit.rejection = "non-monotone decay"
        fit.diagnostics = {"max_log_increase": float(np.max(rises))}
        return fit

    if fit.r_squared < config.RATE_MIN_R2 or line.slope >= 0:
        fit.rejection = "poor log-linear fit"
        fit.diagnostics = {"r_squared": fit.r_squared, "slope": float(line.slope)}
        return fit

    fit.rho_emp = float(-line.slope)
    fit.diagnostics = {"floor": floor, "horizon": horizon}
    return fit


def measure_rate(n0: GridMeasure, T: float, V: WeightLike, triple: EigenTriple, coeffs: Coefficients,
                 kernel: FragmentKernel, dt: Optional[float] = None, initial: str = "") -> RateFit:
    """
    Empirical decay rate of the scaled solution towards (int phi n0) N.

    Args:
        n0: Initial datum
        T: Final time
        V: Weight of the distance
        triple: Frozen (lambda, N, phi); the step of a simulated N is reused
        coeffs: Growth and fragmentation rates
        kernel: Fragment kernel
        dt: Time step (default: the triple's dt_h)
        initial: Descriptor of n0 for the report

    Returns:
        RateFit, accepted or with a rejection reason
    """
    curve = distance_curve(n0, T, V, triple, coeffs, kernel, dt)
    fit = fit_rate(curve.times, curve.distances, curve.target_norm, initial, floor=curve.floor, band=curve.band)
    if fit.accepted:
        logger.info(f"Rate ({initial}): rho_emp={fit.rho_emp:.6g}, r^2={fit.r_squared:.5f}")
    else:
        logger.info(f"Rate fit ({initial}) rejected: {fit.rejection} {fit.diagnostics}")
    return fit


def measure_rates(grid: Grid, centers: Iterable[float], T: float, V: WeightLike, triple: EigenTriple,
                  coeffs: Coefficients, kernel: FragmentKernel, dt: Optional[float] = None) -> List[RateFit]:
    """Independent fits from Gaussian bumps, run in parallel."""
    def one(center: float) -> RateFit:
        return measure_rate(gaussian_bump(grid, center), T, V, triple, coeffs, kernel, dt,
                            initial=f"gaussian bump at x={center:g}")
    return worker_pool.map(one, list(centers))


def rate_vs_certificate(fit: Optional[RateFit], certificate_rho: Optional[LogReal]) -> Dict[str, Any]:
    """Lower-bound comparison of the fitted rate and the certified rate, in log-domain."""
    has_rate = fit is not None and fit.accepted
    if certificate_rho is None and not has_rate:
        return {"verdict": "consistently no gap", "holds": True}
    if certificate_rho is None:
        return {"verdict": "no certificate", "holds": None, "rho_emp": fit.rho_emp}
    if not has_rate:
        return {"verdict": "no empirical rate", "holds": None, "log_rho_cert": certificate_rho.log}

    fit.certificate_rho = certificate_rho
    log_emp = math.log(fit.rho_emp)
    log_cert = certificate_rho.log
    holds = log_emp >= log_cert
    if not holds:
        logger.error(f"Empirical rate {fit.rho_emp:.6g} ({fit.initial}) is below the certified rate "
                     f"exp({log_cert:.6g})")
    return {
        "verdict": "lower bound holds" if holds else "lower bound violated",
        "holds": holds,
        "rho_emp": fit.rho_emp,
        "log_rho_cert": log_cert,
        "log_gap": log_emp - log_cert,
    }


def compare_fits(fits: Sequence[RateFit], certificate_rho: Optional[LogReal]) -> Dict[str, Any]:
    """
    Every fit against the certified rate.

    The bound holds when every accepted fit respects it and fails when any
    one does not; with no accepted fit it is undecided (None), except that
    no certificate and no rate agree on "no gap".
    """
    per_fit = [{"initial": f.initial, **rate_vs_certificate(f, certificate_rho)} for f in fits]
    accepted = [c for f, c in zip(fits, per_fit) if f.accepted]
    if certificate_rho is None:
        verdict = "no certificate" if accepted else "consistently no gap"
        holds = None if accepted else True
    elif not accepted:
        verdict, holds = "no empirical rate", None
    else:
        holds = all(c["holds"] for c in accepted)
        verdict = "lower bound holds" if holds else "lower bound violated"
    return {"verdict": verdict, "holds": holds, "accepted": len(accepted), "fits": per_fit}
