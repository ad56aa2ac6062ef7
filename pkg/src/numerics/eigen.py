"""
Perron eigenelements.

The truncated dual problem on (0, R] is discretized upwind on a dyadic grid
and solved by shifted inverse iteration; R is doubled until lambda_R and
phi_R settle. The direct eigenvector N is read off the long-time
conservative semigroup. Closed forms cover the self-similar family and
constant-rate mitosis.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np
from scipy import integrate, special, stats
from scipy.linalg import lu_factor, lu_solve

import config
from src.models.coefficients import Coefficients
from src.models.kernel import FragmentKernel, KernelKind, moment
from src.numerics.flow import FlowMap
from src.numerics.grid import DyadicLog, Grid, GridMeasure, make_grid, refine_grid
from src.numerics.semigroup import (EvolutionConfig, EvolutionMode, SplitStepOperator, commensurate_dt,
                                    conserved_functional, evolve, reaction_substeps)
from src.utils.errors import ConfigError, ConvergenceError, DomainError, PerronPositivityError

logger = logging.getLogger(__name__)

MAX_REFACTORS = 25
PERRON_NEGATIVE_TOL = 1e-10
PHI_FLOOR = 1e-14


# ----------------------------------------------------------------------
# results
# ----------------------------------------------------------------------

@dataclass
class TruncatedDualSolution:
    """phi_R on the edges of a dyadic grid ending at R, with phi_R(R) = 0."""

    R: float
    lambda_R: float
    grid: Grid
    phi_R: np.ndarray
    A_norm: float
    k: float
    residual: float
    iterations: int
    lower_constant: bool

    @property
    def points(self) -> np.ndarray:
        return self.grid.edges

    @property
    def bound_excess(self) -> float:
        """max(phi_R - (1 + x^k)); nonpositive when the a priori bound holds."""
        return float(np.max(self.phi_R - (1.0 + self.points ** self.k)))

    def derivative_bound(self, upper: float) -> float:
        """max |phi_R'| by differences on [x_min, upper]."""
        xs = self.points
        inside = xs <= upper
        if inside.sum() < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self.phi_R[inside]) / np.diff(xs[inside]))))

    def extension(self) -> "PhiExtension":
        return PhiExtension(self.points, self.phi_R, top=0.5 * self.R, lower_constant=self.lower_constant)


@dataclass
class DualEigenResult:
    lam: float
    solution: TruncatedDualSolution
    telemetry: List[Dict[str, float]] = field(default_factory=list)
    converged: bool = True

    @property
    def phi(self) -> "PhiExtension":
        return self.solution.extension()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda": self.lam,
            "R": self.solution.R,
            "A_norm": self.solution.A_norm,
            "residual": self.solution.residual,
            "converged": self.converged,
            "telemetry": list(self.telemetry),
        }


@dataclass
class EigenTriple:
    """
    (lambda, N, phi) with sum N = 1 and sum phi N = 1 on the grid.

    For a simulated triple N is the fixed point of the scaled step with
    (dt_h, lam_h, inflow_lam); N_extrapolated, when present, is the
    grid-refinement estimate of the continuum N.
    """

    lam: float
    N: GridMeasure
    phi: np.ndarray
    A_norm: float = 0.0
    converged: bool = True
    source: str = "simulated"
    lam_h: Optional[float] = None
    distance: Optional[float] = None
    dt_h: Optional[float] = None
    inflow_lam: Optional[float] = None
    residual: Optional[float] = None
    N_extrapolated: Optional[GridMeasure] = None
    lam_malthus: Optional[float] = None
    substeps: Optional[int] = None
    extrapolation_order: Optional[float] = None

    @property
    def best_N(self) -> GridMeasure:
        return self.N_extrapolated if self.N_extrapolated is not None else self.N

    def scaled_config(self, snapshot_every: int = 1, dt: Optional[float] = None) -> EvolutionConfig:
        """The scaled step N was computed for (dt_h and its substeps unless dt is given)."""
        lam = self.lam_h if self.lam_h is not None else self.lam
        inflow = self.inflow_lam if self.inflow_lam is not None else lam
        substeps = self.substeps if dt is None or dt == self.dt_h else None
        return EvolutionConfig(dt=dt or self.dt_h, lam=lam, inflow_lam=inflow, snapshot_every=snapshot_every,
                               substeps=substeps)

    def normalization_errors(self):
        return abs(self.N.total() - 1.0), abs(float(np.dot(self.phi, self.N.mass)) - 1.0)

    def phi_bound_constant(self, k: float) -> float:
        """Smallest C with phi <= C (1 + x^k) on the grid."""
        return float(np.max(self.phi / (1.0 + self.N.grid.nodes ** k)))

    def rows(self):
        """(x, N density, phi) per node, N extrapolated when available."""
        return zip(self.N.grid.nodes, self.best_N.density(), self.phi)

    def to_dict(self) -> Dict[str, Any]:
        n_err, phi_err = self.normalization_errors()
        return {
            "lambda": self.lam,
            "lambda_h": self.lam_h,
            "lambda_malthus": self.lam_malthus,
            "A_norm": self.A_norm,
            "converged": self.converged,
            "distance": self.distance,
            "dt_h": self.dt_h,
            "stationary_residual": self.residual,
            "extrapolated": self.N_extrapolated is not None,
            "extrapolation_order": self.extrapolation_order,
            "source": self.source,
            "normalization": {"sum_N_error": n_err, "sum_phi_N_error": phi_err},
        }


class PhiExtension:
    """
    phi off the solve window.

    Log-log interpolation on [x_min, top], constant (phi(0) > 0) or linear
    (phi(0) = 0) below x_min and a fitted power law above top.
    """

    def __init__(self, xs: np.ndarray, values: np.ndarray, top: float, lower_constant: bool):
        keep = (xs <= top) & (values > 0)
        if keep.sum() < 2:
            raise DomainError("phi has fewer than two positive points in its trusted window")
        self.xs = xs[keep]
        self.values = values[keep]
        self.lower_constant = lower_constant
        self.top = float(self.xs[-1])
        decade = self.xs >= self.top / 10.0
        if decade.sum() >= 2:
            self.slope = float(np.polyfit(np.log(self.xs[decade]), np.log(self.values[decade]), 1)[0])
        else:
            self.slope = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        lx = np.log(np.maximum(x, 1e-300))
        inner = np.exp(np.interp(lx, np.log(self.xs), np.log(self.values)))
        if self.lower_constant:
            below = np.full_like(x, self.values[0])
        else:
            below = self.values[0] * x / self.xs[0]
        above = self.values[-1] * (np.maximum(x, 1e-300) / self.top) ** self.slope
        return np.where(x < self.xs[0], below, np.where(x > self.top, above, inner))


# ----------------------------------------------------------------------
# truncated dual problem
# ----------------------------------------------------------------------

def phi_positive_at_zero(coeffs: Coefficients) -> bool:
    """phi(0) > 0 exactly when int_0^1 1/g is finite."""
    return math.isfinite(FlowMap(coeffs).H0)


def crossover_A(coeffs: Coefficients, kernel: FragmentKernel, k: float, probes=None) -> float:
    """
    First probe beyond which x^{k-1}(-k g - B x^{1-k} + (1 - p_k) B x) stays positive.

    Args:
        coeffs: Growth and fragmentation rates
        kernel: Fragment kernel
        k: Weight exponent, > 1
        probes: Increasing probe points (log-spaced on [1e-6, 1e6] by default)

    Returns:
        The crossover point A(k)
    """
    if not k > 1:
        raise DomainError(f"crossover_A needs k > 1, got {k}")
    xs = np.logspace(-6, 6, config.DRIFT_PROBES) if probes is None else np.asarray(probes, dtype=float)
    p_k = moment(kernel, k)
    g, B = np.asarray(coeffs.g(xs), dtype=float), np.asarray(coeffs.B(xs), dtype=float)
    rho = xs ** (k - 1.0) * (-k * g - B * xs ** (1.0 - k) + (1.0 - p_k) * B * xs)
    nonpositive = np.nonzero(rho <= 0)[0]
    if nonpositive.size == 0:
        return float(xs[0])
    last = nonpositive[-1]
    if last == xs.size - 1:
        raise DomainError(f"drift function for k={k} is not positive at the top probe {xs[-1]:.3g}")
    return float(xs[last + 1])


def dual_matrix(grid: Grid, coeffs: Coefficients, kernel: FragmentKernel, lower_constant: bool) -> np.ndarray:
    """Upwind discretization of g phi' - B phi + B (Q phi) on the edges below R, phi(R) = 0."""
    if kernel.kind is KernelKind.EQUAL_MITOSIS and not grid.is_dyadic:
        raise ConfigError("the mitosis dual needs a dyadic grid")
    xs = grid.edges[:-1]
    n = xs.size
    delta = np.diff(grid.edges)
    g = np.asarray(coeffs.g(xs), dtype=float)
    B = np.asarray(coeffs.B(xs), dtype=float)

    M = np.zeros((n, n))
    diag = np.arange(n)
    M[diag, diag] = -g / delta - B
    M[diag[:-1], diag[:-1] + 1] = g[:-1] / delta[:-1]

    if kernel.kind is KernelKind.EQUAL_MITOSIS:
        q = grid.q
        Q = np.zeros((n, n))
        Q[diag[q:], diag[q:] - q] = 2.0
        # below the grid phi is flat when phi(0) > 0 and linear otherwise
        Q[diag[:q], 0] = 2.0 if lower_constant else xs[:q] / xs[0]
    elif kernel.kind is KernelKind.UNIFORM:
        rows, cols = np.meshgrid(diag, diag, indexing="ij")
        half = 0.5 * delta
        W = np.where(cols < rows, half[cols], 0.0)
        W += np.where((cols >= 1) & (cols <= rows), half[np.maximum(cols - 1, 0)], 0.0)
        W[:, 0] += xs[0] if lower_constant else 0.5 * xs[0]
        Q = (2.0 / xs)[:, None] * W
    else:
        raise DomainError("only the uniform and mitosis kernels have a discrete dual")
    return M + B[:, None] * Q


def _inverse_iteration(M: np.ndarray, tol: float, max_iter: int):
    n = M.shape[0]
    v = np.ones(n)
    sigma = float(np.max(M.sum(axis=1))) + 1.0
    lu = lu_factor(sigma * np.eye(n) - M)
    refactors = 0
    lam, residual = float("nan"), float("inf")
    for iteration in range(1, max_iter + 1):
        w = lu_solve(lu, v)
        v = w / np.max(np.abs(w))
        Mv = M @ v
        lam = float(np.dot(v, Mv) / np.dot(v, v))
        residual = float(np.max(np.abs(Mv - lam * v)) / np.max(np.abs(v)))
        logger.debug(f"inverse iteration {iteration}: lambda={lam:.12g} residual={residual:.3e} sigma={sigma:.6g}")
        if residual <= tol:
            return lam, v, residual, iteration
        positive = v > 0
        if refactors < MAX_REFACTORS and positive.any():
            upper = float(np.max(Mv[positive] / v[positive]))
            candidate = upper + 0.1 * abs(lam) + 1e-12 * (1.0 + abs(lam))
            if candidate < sigma - 1e-3 * max(abs(sigma), 1.0):
                sigma = candidate
                lu = lu_factor(sigma * np.eye(n) - M)
                refactors += 1
    raise ConvergenceError(
        f"inverse iteration did not reach residual {tol:.1e} in {max_iter} iterations "
        f"(last residual {residual:.3e}); R may be too small or the grid too coarse"
    )


def solve_truncated_dual(coeffs: Coefficients, kernel: FragmentKernel, R: float, k: float = 2.0,
                         x_min: float = 1e-3, q: int = 32, A: Optional[float] = None,
                         tol: float = config.DUAL_TOL, max_iter: int = config.DUAL_MAX_ITER) -> TruncatedDualSolution:
    """
    Perron pair of the dual problem truncated at R.

    Args:
        coeffs: Growth and fragmentation rates
        kernel: Uniform or EqualMitosis
        R: Truncation point (rounded up to a dyadic edge), must exceed A(k)
        k: Exponent of the a priori bound 1 + x^k
        x_min: Smallest edge of the solve grid
        q: Cells per octave
        A: Normalization point (crossover_A(k) by default)
        tol: Residual tolerance
        max_iter: Iteration cap

    Returns:
        TruncatedDualSolution with sup over [0, A] of phi_R equal to 1
    """
    if A is None:
        A = crossover_A(coeffs, kernel, k)
    grid = make_grid(x_min, R, DyadicLog(q))
    if grid.x_max <= A:
        raise DomainError(f"R = {grid.x_max:.4g} must exceed the crossover A = {A:.4g}")
    lower_constant = phi_positive_at_zero(coeffs)

    M = dual_matrix(grid, coeffs, kernel, lower_constant)
    lam, v, residual, iterations = _inverse_iteration(M, tol, max_iter)

    if np.min(v) < -PERRON_NEGATIVE_TOL * np.max(v):
        raise PerronPositivityError(f"eigenvector has a negative component {np.min(v):.3e} at R = {grid.x_max:.4g}")
    phi = np.append(np.maximum(v, 0.0), 0.0)

    a_index = int(np.searchsorted(grid.edges, A, side="left"))
    A_edge = float(grid.edges[min(a_index, grid.size)])
    phi = phi / np.max(phi[: a_index + 1])

    solution = TruncatedDualSolution(R=grid.x_max, lambda_R=lam, grid=grid, phi_R=phi, A_norm=A_edge, k=k,
                                     residual=residual, iterations=iterations, lower_constant=lower_constant)
    logger.info(f"Truncated dual at R={grid.x_max:.4g}: lambda_R={lam:.10g}, residual={residual:.2e}, "
                f"{iterations} iterations")
    return solution


def dual_eigen(coeffs: Coefficients, kernel: FragmentKernel, tol: float = 1e-6, k: float = 2.0,
               x_min: float = 1e-3, q: int = 32, R0: Optional[float] = None,
               max_doublings: int = config.R_MAX_DOUBLINGS) -> DualEigenResult:
    """Solve at R, 2R, 4R, ... until lambda_R and phi_R agree within tol."""
    A = crossover_A(coeffs, kernel, k)
    if R0 is None:
        R0 = x_min * 2.0 ** math.ceil(math.log2(2.0 * max(A, x_min) / x_min))
    R = R0
    previous: Optional[TruncatedDualSolution] = None
    telemetry: List[Dict[str, float]] = []

    for doubling in range(max_doublings + 1):
        current = solve_truncated_dual(coeffs, kernel, R, k=k, x_min=x_min, q=q, A=A)
        telemetry.append({
            "R": current.R,
            "lambda_R": current.lambda_R,
            "bound_excess": current.bound_excess,
            "derivative_bound": current.derivative_bound(current.A_norm),
        })
        if previous is not None:
            if current.lambda_R <= 0:
                raise ConvergenceError(f"lambda_R = {current.lambda_R:.4g} <= 0 at R = {current.R:.4g}")
            lam_gap = abs(current.lambda_R - previous.lambda_R)
            window = previous.points <= 0.5 * previous.R
            width = int(window.sum())
            diff = np.max(np.abs(current.phi_R[:width] - previous.phi_R[:width]))
            phi_gap = float(diff / np.max(np.abs(current.phi_R[:width])))
            logger.debug(f"R doubling {doubling}: |d lambda|={lam_gap:.3e}, phi gap={phi_gap:.3e}")
            if lam_gap <= tol * abs(previous.lambda_R) and phi_gap <= tol:
                logger.info(f"Dual eigen converged: lambda={current.lambda_R:.10g} at R={current.R:.4g}")
                return DualEigenResult(current.lambda_R, current, telemetry)
        previous = current
        R = 2.0 * current.R

    raise ConvergenceError(f"lambda_R did not settle within {max_doublings} doublings "
                           f"(last values {[round(t['lambda_R'], 10) for t in telemetry[-3:]]})")


# ----------------------------------------------------------------------
# direct eigenvector
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteDual:
    """Left Perron pair (lam_h, phi_h) of one split step, with the lambda its lower inflow uses."""

    lam_h: float
    phi_h: np.ndarray = field(repr=False, compare=False)
    dt: float
    inflow_lam: float
    substeps: Optional[int] = None

    def conservative(self, snapshot_every: int = 1) -> EvolutionConfig:
        """f -> phi_h S(f / phi_h) with lam_h and the same substeps; sum f is kept exactly."""
        return EvolutionConfig(dt=self.dt, lam=self.lam_h, mode=EvolutionMode.CONSERVATIVE, phi=self.phi_h,
                               snapshot_every=snapshot_every, inflow_lam=self.inflow_lam,
                               substeps=self.substeps)


def consistent_dual(grid: Grid, coeffs: Coefficients, kernel: FragmentKernel, dt: float, phi0: np.ndarray,
                    lam: float = 0.0, tol: float = 1e-12, max_steps: Optional[int] = None,
                    check_every: int = 50, substeps: Optional[int] = None) -> DiscreteDual:
    """
    Left Perron pair of one split step.

    Power iteration on the adjoint of the scaled step with lam, started
    from phi0. lam_h = lam + log(mu) / dt for the Perron root mu, and phi_h
    is scaled to phi0. The substep count is the one lam_h needs, so the
    conservative step reuses exactly this operator.
    """
    op = SplitStepOperator(grid, coeffs, kernel, EvolutionConfig(dt=dt, lam=lam, substeps=substeps))
    max_steps = max_steps or int(config.DIRECT_EIGEN_T_MAX / dt)
    v = np.asarray(phi0, dtype=float) / np.max(phi0)
    for it in range(1, max_steps + 1):
        w = op.apply_adjoint(v)
        top = np.max(w)
        if not top > 0:
            raise ConvergenceError("adjoint step annihilated phi")
        change = float(np.max(np.abs(w / top - v))) if it % check_every == 0 else float("inf")
        v = w / top
        if change <= tol:
            break
    else:
        raise ConvergenceError(f"adjoint power iteration did not settle in {max_steps} steps")

    mu = float(np.max(op.apply_adjoint(v)) / np.max(v))
    lam_h = lam + math.log(mu) / dt
    stiffness = float(np.max(np.asarray(coeffs.B(grid.nodes), dtype=float))) + lam_h
    needed = reaction_substeps(EvolutionConfig(dt=dt, lam=lam_h), stiffness)
    if needed > op.substeps:
        refined = consistent_dual(grid, coeffs, kernel, dt, v, lam=lam, tol=tol, max_steps=max_steps,
                                  check_every=check_every, substeps=needed)
        scale = float(np.dot(refined.phi_h, phi0) / np.dot(refined.phi_h, refined.phi_h))
        return replace(refined, phi_h=refined.phi_h * scale)
    phi_h = np.maximum(v, PHI_FLOOR * np.max(v))
    phi_h *= float(np.dot(phi_h, phi0) / np.dot(phi_h, phi_h))
    logger.info(f"Discrete dual: lambda_h={lam_h:.10g} after {it} adjoint steps")
    return DiscreteDual(lam_h, phi_h, dt, lam, op.substeps)


def _reference_density(x):
    return x * np.exp(-x)


def observed_order(lam: float, coarse_lam: float, fine_lam: float) -> float:
    """log2 of the ratio of the lambda errors on a grid and its refinement, in [1, 2]; 1 when undecided."""
    coarse_err, fine_err = abs(coarse_lam - lam), abs(fine_lam - lam)
    if not (fine_err > 0 and coarse_err > fine_err):
        return 1.0
    return float(np.clip(math.log2(coarse_err / fine_err), 1.0, 2.0))


def richardson(coarse: GridMeasure, fine: GridMeasure, order: float = 1.0) -> GridMeasure:
    """
    N_{h/2} + (N_{h/2} - N_h) / (2^order - 1) on the coarse cells, clipped and
    renormalized. The fine grid splits every coarse cell in two.
    """
    if fine.grid.size != 2 * coarse.grid.size:
        raise DomainError("richardson needs a grid with every cell split in two")
    if order <= 0:
        raise DomainError(f"extrapolation order must be positive, got {order}")
    paired = fine.mass[0::2] + fine.mass[1::2]
    mass = np.maximum(paired + (paired - coarse.mass) / (2.0 ** order - 1.0), 0.0)
    return GridMeasure(coarse.grid, mass / mass.sum())


def direct_eigen(coeffs: Coefficients, kernel: FragmentKernel, lam: float, phi: Callable, grid: Grid,
                 dt: Optional[float] = None, tol: float = 1e-12, t_max: float = config.DIRECT_EIGEN_T_MAX,
                 snapshot_interval: float = 0.5, n_init: Optional[GridMeasure] = None,
                 A_norm: float = 0.0, extrapolate: bool = False) -> EigenTriple:
    """
    N from the long-time conservative semigroup.

    Args:
        coeffs: Growth and fragmentation rates
        kernel: Fragment kernel
        lam: Continuum eigenvalue (also discounts the lower inflow)
        phi: Continuum dual eigenfunction, the start of the discrete dual
        grid: Grid of N
        dt: Time step (default config.EIGEN_MAX_DT, made commensurate)
        tol: L1 distance of consecutive normalized snapshots that ends the run
        t_max: Time cap
        snapshot_interval: Time between compared snapshots
        n_init: Initial state (default x e^{-x})
        A_norm: Recorded on the triple
        extrapolate: Also solve on the refined grid with dt/2 and extrapolate N

    Returns:
        EigenTriple; converged=False holds the Cesaro mean of the late snapshots
    """
    dt = commensurate_dt(grid, coeffs, dt or config.EIGEN_MAX_DT)
    phi_nodes = np.asarray(phi(grid.nodes), dtype=float)
    try:
        dual = consistent_dual(grid, coeffs, kernel, dt, phi_nodes, lam=lam, max_steps=int(math.ceil(t_max / dt)))
    except ConvergenceError as e:
        logger.warning(f"Discrete dual unavailable ({e}); using the continuum pair")
        dual = DiscreteDual(lam, np.maximum(phi_nodes, PHI_FLOOR * np.max(phi_nodes)), dt, lam)

    stride = max(1, int(round(snapshot_interval / dt)))
    op = SplitStepOperator(grid, coeffs, kernel, dual.conservative(stride))

    n0 = n_init or GridMeasure.from_density(grid, _reference_density)
    f = dual.phi_h * n0.mass
    f /= f.sum()
    previous = f
    history: List[np.ndarray] = []
    distance = float("inf")
    converged = False
    steps = int(math.ceil(t_max / dt))
    for k in range(1, steps + 1):
        f, _ = op.apply(f)
        if k % stride:
            continue
        # the step keeps sum f, so normalizing only removes roundoff drift
        current = f / f.sum()
        distance = float(np.abs(current - previous).sum())
        history.append(current)
        previous = current
        if distance < tol:
            converged = True
            break

    if converged:
        f_inf = previous
    else:
        # periodic or slow limits: average the second half of the run
        tail = history[len(history) // 2:] or [previous]
        f_inf = np.mean(tail, axis=0)
        logger.warning(f"Direct eigenvector did not converge by t={t_max}: consecutive distance {distance:.3e}")

    N_mass = f_inf / dual.phi_h
    N_mass /= N_mass.sum()
    N = GridMeasure(grid, N_mass)
    phi_out = dual.phi_h / float(np.dot(dual.phi_h, N_mass))
    triple = EigenTriple(lam=lam, N=N, phi=phi_out, A_norm=A_norm, converged=converged, source="simulated",
                         lam_h=dual.lam_h, distance=distance, dt_h=dt, inflow_lam=dual.inflow_lam,
                         substeps=op.substeps)
    triple.residual = discrete_residual(triple, coeffs, kernel)
    logger.info(f"Direct eigen: converged={converged}, distance={distance:.3e}, lambda_h={dual.lam_h:.8g}, "
                f"residual={triple.residual:.3e}")

    if extrapolate and converged:
        fine = direct_eigen(coeffs, kernel, lam, phi, refine_grid(grid), dt=dt / 2.0, tol=tol, t_max=t_max,
                            snapshot_interval=snapshot_interval, A_norm=A_norm)
        if fine.converged:
            triple.extrapolation_order = observed_order(lam, dual.lam_h, fine.lam_h)
            triple.N_extrapolated = richardson(N, fine.N, triple.extrapolation_order)
            change = float(np.abs(triple.N_extrapolated.mass - N_mass).sum())
            logger.info(f"Extrapolated N from {grid.size} and {fine.N.grid.size} cells at order "
                        f"{triple.extrapolation_order:.2f} (L1 change {change:.3e})")
    elif extrapolate:
        logger.warning("Skipping the extrapolation of an unconverged N")
    return triple


def malthus_exponent(coeffs: Coefficients, kernel: FragmentKernel, grid: Grid, phi: Callable, T: float,
                     dt: Optional[float] = None, n0: Optional[GridMeasure] = None) -> float:
    """Growth rate of log int phi n_t fitted on [T/2, T] for the unscaled equation."""
    dt = commensurate_dt(grid, coeffs, dt or config.EIGEN_MAX_DT)
    n0 = n0 or GridMeasure.from_density(grid, _reference_density)
    stride = max(1, int(round(0.05 * T / dt)))
    trajectory = evolve(n0, T, EvolutionConfig(dt=dt, lam=0.0, snapshot_every=stride), coeffs, kernel)
    phi_nodes = np.asarray(phi(grid.nodes), dtype=float)
    values = np.array([conserved_functional(s, phi_nodes) for s in trajectory.snapshots])
    window = trajectory.times >= 0.5 * T
    fit = stats.linregress(trajectory.times[window], np.log(values[window]))
    logger.info(f"Malthus exponent {fit.slope:.8g} (r^2 = {fit.rvalue ** 2:.6f})")
    return float(fit.slope)


def discrete_residual(triple: EigenTriple, coeffs: Coefficients, kernel: FragmentKernel,
                      dt: Optional[float] = None) -> float:
    """sup |S N - N| / (dt sup N) for one scaled step of the triple's own configuration."""
    cfg = triple.scaled_config(dt=dt)
    op = SplitStepOperator(triple.N.grid, coeffs, kernel, cfg)
    stepped, _ = op.apply(triple.N.mass)
    return float(np.max(np.abs(stepped - triple.N.mass)) / (cfg.dt * np.max(triple.N.mass)))


# ----------------------------------------------------------------------
# closed forms
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SelfSimilar:
    """g = g0 x, B = b0 x^gamma, uniform kernel."""

    g0: float = 1.0
    b0: float = 1.0
    gamma: float = 1.0

    @property
    def c(self) -> float:
        return self.b0 / (self.gamma * self.g0)

    @property
    def lam(self) -> float:
        return self.g0

    def coefficients(self) -> Coefficients:
        return Coefficients.power_law(a=1.0, g0=self.g0, b=self.gamma, b0=self.b0)

    def kernel(self) -> FragmentKernel:
        return FragmentKernel.uniform()

    def density(self, x):
        x = np.asarray(x, dtype=float)
        c, gam = self.c, self.gamma
        return gam * c ** (1.0 / gam) / special.gamma(1.0 / gam) * np.exp(-c * x ** gam)

    def density_prime(self, x):
        x = np.asarray(x, dtype=float)
        return -self.c * self.gamma * x ** (self.gamma - 1.0) * self.density(x)

    def phi(self, x):
        gam = self.gamma
        return self.c ** (1.0 / gam) * special.gamma(1.0 / gam) / special.gamma(2.0 / gam) * np.asarray(x, dtype=float)

    def phi_prime(self, x):
        return self.phi(np.ones_like(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class ConstantMitosis:
    """g = 1, B = 1, equal mitosis: N = sum (-1)^n alpha_n exp(-2^{n+1} x)."""

    n_terms: int = 25

    @property
    def lam(self) -> float:
        return 1.0

    def coefficients(self) -> Coefficients:
        return Coefficients.power_law(a=0.0, g0=1.0, b=0.0, b0=1.0)

    def kernel(self) -> FragmentKernel:
        return FragmentKernel.mitosis()

    def alphas(self) -> np.ndarray:
        ratios = np.ones(self.n_terms)
        for n in range(1, self.n_terms):
            ratios[n] = ratios[n - 1] * 2.0 / (2.0 ** n - 1.0)
        signs = (-1.0) ** np.arange(self.n_terms)
        mass = float(np.sum(signs * ratios * 2.0 ** (-(np.arange(self.n_terms) + 1.0))))
        return ratios / mass

    def density(self, x):
        x = np.asarray(x, dtype=float)
        n = np.arange(self.n_terms)
        terms = ((-1.0) ** n * self.alphas())[:, None] * np.exp(-np.outer(2.0 ** (n + 1.0), np.atleast_1d(x)))
        return terms.sum(axis=0).reshape(x.shape)

    def density_prime(self, x):
        x = np.asarray(x, dtype=float)
        n = np.arange(self.n_terms)
        rates = 2.0 ** (n + 1.0)
        terms = (-(-1.0) ** n * self.alphas() * rates)[:, None] * np.exp(-np.outer(rates, np.atleast_1d(x)))
        return terms.sum(axis=0).reshape(x.shape)

    def phi(self, x):
        return np.ones_like(np.asarray(x, dtype=float))

    def phi_prime(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


ExplicitCase = Union[SelfSimilar, ConstantMitosis]


def explicit_eigen(case: ExplicitCase, grid: Grid) -> EigenTriple:
    """Closed-form eigenelements evaluated on the grid and renormalized there."""
    if not isinstance(case, (SelfSimilar, ConstantMitosis)):
        raise ConfigError(f"no closed form for {case!r}")
    N = GridMeasure.from_density(grid, case.density)
    N = N.normalized()
    phi = np.asarray(case.phi(grid.nodes), dtype=float)
    phi = phi / float(np.dot(phi, N.mass))
    return EigenTriple(lam=case.lam, N=N, phi=phi, source="closed-form")


def _fragment_integral(coeffs: Coefficients, kernel: FragmentKernel, density: Callable, x: float) -> float:
    if kernel.kind is KernelKind.EQUAL_MITOSIS:
        return float(4.0 * coeffs.B(2.0 * x) * density(2.0 * x))
    value, _ = integrate.quad(lambda u: 2.0 * float(coeffs.B(math.exp(u))) * float(density(math.exp(u))),
                              math.log(x), max(math.log(x), 0.0) + 6.0, limit=400, epsabs=1e-15, epsrel=1e-12)
    return value


def stationary_residual(case: ExplicitCase, xs) -> float:
    """sup |-(g N)' - (B + lambda) N + gain| / sup |(B + lambda) N| on the probes."""
    coeffs, kernel = case.coefficients(), case.kernel()
    xs = np.asarray(xs, dtype=float)
    N, dN = case.density(xs), case.density_prime(xs)
    g, dg, B = coeffs.g(xs), coeffs.g_prime(xs), coeffs.B(xs)
    gain = np.array([_fragment_integral(coeffs, kernel, case.density, x) for x in xs])
    residual = -(dg * N + g * dN) - (B + case.lam) * N + gain
    return float(np.max(np.abs(residual)) / np.max(np.abs((B + case.lam) * N)))


def dual_residual(case: ExplicitCase, xs) -> float:
    """sup |g phi' - (B + lambda) phi + B int phi(zx) p(dz)| / sup |(B + lambda) phi|."""
    coeffs, kernel = case.coefficients(), case.kernel()
    xs = np.asarray(xs, dtype=float)
    phi, dphi = case.phi(xs), case.phi_prime(xs)
    g, B = coeffs.g(xs), coeffs.B(xs)
    if kernel.kind is KernelKind.EQUAL_MITOSIS:
        gain = 2.0 * case.phi(0.5 * xs)
    else:
        gain = np.array([2.0 / x * integrate.quad(lambda y: float(case.phi(y)), 0.0, x)[0] for x in xs])
    residual = g * dphi - (B + case.lam) * phi + B * gain
    return float(np.max(np.abs(residual)) / np.max(np.abs((B + case.lam) * phi)))
