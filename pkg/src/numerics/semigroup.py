"""
Split-step semigroup.

One step transports the measure exactly along the characteristics, then
runs the reaction in substeps: each cell survives with probability
exp(-int B along the backward characteristic) and the fragmented mass goes
to the kernel. Children born below the lowest node re-enter there with
their passage weight. The scaled equation multiplies by exp(-lambda dt);
the conservative mode conjugates the same step by phi.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy import integrate

import config
from src.models.coefficients import Coefficients
from src.models.kernel import FragmentKernel, KernelKind
from src.numerics.flow import FlowMap
from src.numerics.grid import Grid, GridMeasure, WeightLike, transport_matrix, weighted_tv_norm
from src.utils.errors import ConfigError, DomainError, GridKernelMismatch, PositivityError, StabilityError

logger = logging.getLogger(__name__)

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(3)

INFLOW_LOG_SPAN = 60.0
INFLOW_SAMPLES = 4001


class EvolutionMode(str, Enum):
    SCALED = "scaled"
    CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class EvolutionConfig:
    """
    Time step, the lambda of c = B + lambda, the mode and phi on the nodes.

    inflow_lam discounts the children that re-enter at the lowest node and
    defaults to lam. substeps fixes the number of reaction substeps; None
    takes the fewest that meet the stability bound and
    config.REACTION_MAX_SUBSTEP.
    """

    dt: float
    lam: float = 0.0
    mode: EvolutionMode = EvolutionMode.SCALED
    phi: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    snapshot_every: int = 1
    inflow_lam: Optional[float] = None
    substeps: Optional[int] = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")
        if self.substeps is not None and self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        if self.mode is EvolutionMode.CONSERVATIVE and self.phi is None:
            raise ConfigError("the conservative mode needs phi")

    @property
    def inflow(self) -> float:
        return self.lam if self.inflow_lam is None else self.inflow_lam


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: List[GridMeasure]
    conserved_series: Optional[np.ndarray] = None

    @property
    def final(self) -> GridMeasure:
        return self.snapshots[-1]

    @property
    def escaped_mass(self) -> float:
        return self.snapshots[-1].escaped_mass

    def conserved_drift(self) -> Optional[float]:
        """max_t |I(t) - I(0)| / |I(0)| of the recorded functional."""
        if self.conserved_series is None or self.conserved_series[0] == 0:
            return None
        series = self.conserved_series
        return float(np.max(np.abs(series - series[0])) / abs(series[0]))

    def rows(self):
        """(t, x_center, mass, density) for every snapshot and cell."""
        for t, snap in zip(self.times, self.snapshots):
            for x, _, mass, density in snap.rows():
                yield float(t), float(x), float(mass), float(density)


# ----------------------------------------------------------------------
# fragmentation exchange
# ----------------------------------------------------------------------

class LowerInflow:
    """
    Passage weights from below the lowest node x_0.

    A child born at y < x_0 reaches x_0 with weight
    w(y) = exp(-int_y^{x_0} (B(s) + lambda) / g(s) ds) and re-enters the
    first cell there; the remaining 1 - w leaves the window. Without growth
    nothing comes back.
    """

    def __init__(self, grid: Grid, coeffs: Coefficients, lam: float = 0.0):
        self.x0 = float(grid.nodes[0])
        self.lam = lam
        self.u = np.linspace(0.0, INFLOW_LOG_SPAN, INFLOW_SAMPLES)
        if coeffs.has_growth:
            y = self.x0 * np.exp(-self.u)
            with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
                rate = (np.asarray(coeffs.B(y), dtype=float) + lam) * y / np.asarray(coeffs.g(y), dtype=float)
            rate = np.where(np.isfinite(rate), rate, np.inf)
            with np.errstate(invalid="ignore"):
                self.passage = np.exp(-integrate.cumulative_trapezoid(rate, self.u, initial=0.0))
            self.passage = np.nan_to_num(self.passage, nan=0.0)
        else:
            self.passage = np.zeros_like(self.u)
        # mean of w over sizes uniform on (0, x_0)
        self.uniform = float(integrate.simpson(self.passage * np.exp(-self.u), x=self.u))
        self.halves = self.weight(grid.nodes[: grid.q] / 2.0) if grid.is_dyadic else None

    def weight(self, y) -> np.ndarray:
        """w(y) for 0 < y <= x_0."""
        u = np.log(self.x0 / np.asarray(y, dtype=float))
        return np.interp(u, self.u, self.passage, right=0.0)


def _check_kernel_grid(grid: Grid, kernel: FragmentKernel) -> None:
    if kernel.kind is KernelKind.EQUAL_MITOSIS and not grid.is_dyadic:
        raise GridKernelMismatch("equal mitosis needs a DyadicLog grid for the exact halving")
    if kernel.kind is KernelKind.DENSITY:
        raise DomainError("only the uniform and mitosis kernels have a discrete gain")


def _pivot_widths(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Widths of the node intervals [a_i, a_{i+1}] (a_0 = x_0) and of the parent's own [a_j, x_j]."""
    x_prev = np.concatenate(([x[0]], x[:-1]))
    x_next = np.concatenate((x[1:], [x[-1]]))
    return 0.5 * (x_next - x_prev), 0.5 * (x - x_prev)


def distribute_fragments(grid: Grid, kernel: FragmentKernel, fragmented: np.ndarray,
                         inflow: Optional[LowerInflow] = None) -> Tuple[np.ndarray, float]:
    """
    Children of the parents that fragment.

    Args:
        grid: Grid of the measure
        kernel: Uniform or EqualMitosis
        fragmented: Number mass of parents fragmenting in each cell
        inflow: Passage weights for children born below x_0; None drops them

    Returns:
        (children per cell, number mass of children lost below x_0)
    """
    _check_kernel_grid(grid, kernel)
    x = grid.nodes
    gain = np.zeros_like(fragmented)
    if kernel.kind is KernelKind.EQUAL_MITOSIS:
        q = min(grid.q, x.size)
        gain[: x.size - q] = 2.0 * fragmented[q:]
        below = 2.0 * fragmented[:q]
        weights = inflow.halves[:q] if inflow is not None else np.zeros(q)
    else:
        # children of the parent at x_j: density 2 f_j / x_j on (0, x_j);
        # the part on [x_0, x_j] goes to the node intervals, size exact
        h, own = _pivot_widths(x)
        density = 2.0 * fragmented / x
        tail = np.cumsum(density[::-1])[::-1]
        gain += h * np.concatenate((tail[1:], [0.0])) + own * density
        below = np.array([x[0] * tail[0]])
        weights = np.array([inflow.uniform if inflow is not None else 0.0])
    gain[0] += float(np.dot(weights, below))
    return gain, float(np.dot(1.0 - weights, below))


def distribute_fragments_adjoint(grid: Grid, kernel: FragmentKernel, values: np.ndarray,
                                 inflow: Optional[LowerInflow] = None) -> np.ndarray:
    """Transpose of distribute_fragments acting on a grid function."""
    _check_kernel_grid(grid, kernel)
    x = grid.nodes
    if kernel.kind is KernelKind.EQUAL_MITOSIS:
        q = min(grid.q, x.size)
        out = np.zeros_like(values)
        out[q:] = 2.0 * values[: x.size - q]
        if inflow is not None:
            out[:q] = 2.0 * inflow.halves[:q] * values[0]
        return out
    h, own = _pivot_widths(x)
    below = np.concatenate(([0.0], np.cumsum(h * values)[:-1]))
    reentry = x[0] * (inflow.uniform if inflow is not None else 0.0) * values[0]
    return 2.0 * (below + own * values + reentry) / x


# ----------------------------------------------------------------------
# the step operator
# ----------------------------------------------------------------------

def survival_weights(grid: Grid, coeffs: Coefficients, dt: float,
                     flow_map: Optional[FlowMap] = None, start: float = 0.0) -> np.ndarray:
    """exp(-int_start^{start+dt} B(X_{-tau}(x_i)) dtau) at the nodes, 3-point Gauss-Legendre."""
    x = grid.nodes
    if flow_map is None:
        return np.exp(-dt * np.asarray(coeffs.B(x), dtype=float))
    taus = start + 0.5 * dt * (GAUSS_NODES + 1.0)
    integral = np.zeros_like(x)
    for tau, weight in zip(taus, GAUSS_WEIGHTS):
        integral += weight * np.asarray(coeffs.B(flow_map.flow_clamped(-tau, x)), dtype=float)
    return np.exp(-0.5 * dt * integral)


def reaction_substeps(cfg: EvolutionConfig, stiffness: float) -> int:
    """Substep count for a step of cfg.dt with max(B + lambda) = stiffness."""
    if cfg.substeps is not None:
        delta = cfg.dt / cfg.substeps
        if delta * stiffness > config.STABILITY_CFL:
            raise StabilityError(
                f"dt * max(B + lambda) = {delta * stiffness:.4g} per substep exceeds {config.STABILITY_CFL}; "
                f"use at least {math.ceil(cfg.dt * stiffness / config.STABILITY_CFL)} substeps"
            )
        return cfg.substeps
    by_bound = math.ceil(cfg.dt * max(stiffness, 0.0) / config.STABILITY_CFL - 1e-12)
    by_accuracy = math.ceil(cfg.dt / config.REACTION_MAX_SUBSTEP - 1e-9)
    return max(1, by_bound, by_accuracy)


class SplitStepOperator:
    """
    The linear map of one step on cell masses.

    Scaled mode: m -> e^{-lambda dt} R_n ... R_1 P m with P the transport
    matrix. A reaction substep keeps s m, hands (1 - s) m to the fragment
    distribution D, lets the children survive half the substep and passes
    the ones that do not back through D:
    R m = s m + s' D((1 - s) m) + D((1 - s') D((1 - s) m)), s' = sqrt(s).
    Conservative mode: f -> phi S(f / phi).
    """

    def __init__(self, grid: Grid, coeffs: Coefficients, kernel: FragmentKernel, cfg: EvolutionConfig):
        _check_kernel_grid(grid, kernel)
        self.grid = grid
        self.coeffs = coeffs
        self.kernel = kernel
        self.cfg = cfg
        self.dt = cfg.dt

        stiffness = float(np.max(np.asarray(coeffs.B(grid.nodes), dtype=float) + cfg.lam))
        self.substeps = reaction_substeps(cfg, stiffness)

        if coeffs.has_growth:
            self.flow_map = FlowMap(coeffs)
            self.transport = transport_matrix(grid, self.flow_map.flow(cfg.dt, grid.edges))
            self.retained = np.asarray(self.transport.sum(axis=0)).ravel()
        else:
            self.flow_map = None
            self.transport = None
            self.retained = np.ones(grid.size)

        # substep k runs over the backward times [dt - (k + 1) delta, dt - k delta]
        delta = cfg.dt / self.substeps
        self.survival = [survival_weights(grid, coeffs, delta, self.flow_map, start=cfg.dt - (k + 1) * delta)
                         for k in range(self.substeps)]
        self.newborn = [np.sqrt(s) for s in self.survival]
        self.inflow = LowerInflow(grid, coeffs, cfg.inflow)
        self.decay = math.exp(-cfg.lam * cfg.dt)

        self.phi = None
        if cfg.mode is EvolutionMode.CONSERVATIVE:
            phi = np.asarray(cfg.phi, dtype=float)
            if phi.shape != (grid.size,) or np.any(phi <= 0) or not np.all(np.isfinite(phi)):
                raise ConfigError("phi must be finite and positive on every node")
            self.phi = phi
        logger.debug(f"SplitStepOperator dt={cfg.dt} lam={cfg.lam} mode={cfg.mode.value} "
                     f"substeps={self.substeps} stiffness={stiffness:.3g}")

    def _transport(self, mass: np.ndarray) -> np.ndarray:
        return mass if self.transport is None else self.transport @ mass

    def _fragment(self, fragmented: np.ndarray) -> Tuple[np.ndarray, float]:
        return distribute_fragments(self.grid, self.kernel, fragmented, self.inflow)

    def _fragment_adjoint(self, values: np.ndarray) -> np.ndarray:
        return distribute_fragments_adjoint(self.grid, self.kernel, values, self.inflow)

    def _react(self, mass: np.ndarray, k: int) -> Tuple[np.ndarray, float]:
        s, half = self.survival[k], self.newborn[k]
        children, spilled = self._fragment(mass * (1.0 - s))
        grandchildren, respilled = self._fragment(children * (1.0 - half))
        return mass * s + children * half + grandchildren, spilled + respilled

    def _react_adjoint(self, values: np.ndarray, k: int) -> np.ndarray:
        s, half = self.survival[k], self.newborn[k]
        inner = half * values + (1.0 - half) * self._fragment_adjoint(values)
        return s * values + (1.0 - s) * self._fragment_adjoint(inner)

    def _scaled(self, mass: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        moved = self._transport(mass)
        lost_below = 0.0
        for k in range(self.substeps):
            moved, spilled = self._react(moved, k)
            lost_below += spilled
        return self.decay * moved, self.decay * mass * (1.0 - self.retained), self.decay * lost_below

    def apply(self, mass: np.ndarray) -> Tuple[np.ndarray, float]:
        """One step; returns (new masses, mass that left the window)."""
        if self.phi is None:
            out, lost_top, lost_below = self._scaled(mass)
            return out, float(lost_top.sum()) + lost_below
        out, lost_top, lost_below = self._scaled(mass / self.phi)
        return self.phi * out, float(np.dot(self.phi, lost_top)) + lost_below * float(self.phi[0])

    def apply_adjoint(self, values: np.ndarray) -> np.ndarray:
        """Transpose of apply acting on grid functions."""
        v = values if self.phi is None else values * self.phi
        for k in reversed(range(self.substeps)):
            v = self._react_adjoint(v, k)
        out = self.decay * (v if self.transport is None else self.transport.T @ v)
        return out if self.phi is None else out / self.phi

    def step(self, state: GridMeasure) -> GridMeasure:
        mass, escaped = self.apply(state.mass)
        if np.any(mass < 0.0) and np.all(state.mass >= 0.0):
            raise PositivityError(f"step produced a negative cell mass {float(mass.min()):.3e}")
        return GridMeasure(state.grid, mass, state.escaped_mass + escaped)


def step(state: GridMeasure, cfg: EvolutionConfig, coeffs: Coefficients, kernel: FragmentKernel) -> GridMeasure:
    return SplitStepOperator(state.grid, coeffs, kernel, cfg).step(state)


# ----------------------------------------------------------------------
# trajectories
# ----------------------------------------------------------------------

def conserved_functional(f: GridMeasure, phi: Union[np.ndarray, Callable]) -> float:
    """sum_i phi(node_i) mass_i."""
    values = phi if isinstance(phi, np.ndarray) else np.asarray(phi(f.grid.nodes), dtype=float)
    if not np.all(np.isfinite(values)):
        raise DomainError("phi must be finite on the grid")
    return float(np.dot(values, f.mass))


def step_count(T: float, dt: float) -> int:
    if T < 0:
        raise DomainError(f"T must be >= 0, got {T}")
    return int(math.ceil(T / dt - 1e-9))


def evolve(n0: GridMeasure, T: float, cfg: EvolutionConfig, coeffs: Coefficients, kernel: FragmentKernel,
           operator: Optional[SplitStepOperator] = None) -> Trajectory:
    """
    Repeat the step up to the first multiple of dt reaching T.

    Args:
        n0: Initial masses
        T: Final time (>= 0)
        cfg: Evolution settings
        coeffs: Growth and fragmentation rates
        kernel: Fragment kernel
        operator: Prebuilt operator for cfg (optional)

    Returns:
        Trajectory with snapshots every cfg.snapshot_every steps and at the end
    """
    op = operator or SplitStepOperator(n0.grid, coeffs, kernel, cfg)
    steps = step_count(T, cfg.dt)
    if cfg.mode is EvolutionMode.CONSERVATIVE:
        phi = np.ones(n0.grid.size)
    else:
        phi = cfg.phi

    times = [0.0]
    snapshots = [n0.copy()]
    state = n0.copy()
    for k in range(1, steps + 1):
        state = op.step(state)
        if k % cfg.snapshot_every == 0 or k == steps:
            times.append(k * cfg.dt)
            snapshots.append(state)

    series = None if phi is None else np.array([conserved_functional(s, phi) for s in snapshots])
    trajectory = Trajectory(np.array(times), snapshots, series)
    if trajectory.escaped_mass > config.ESCAPED_MASS_WARNING * max(n0.total(), 1e-300):
        logger.warning(f"Escaped mass {trajectory.escaped_mass:.3e} after T={times[-1]:.4g}; widen the window")
    logger.info(f"Evolved {steps} steps to T={times[-1]:.4g} ({cfg.mode.value}, dt={cfg.dt:.4g}, "
                f"{op.substeps} reaction substeps)")
    return trajectory


def whole_shift(grid: Grid, coeffs: Coefficients) -> Optional[float]:
    """Time of a one-cell shift when the transport is a permutation (g = g0 x on a DyadicLog grid)."""
    if not (grid.is_dyadic and coeffs.is_power_law and coeffs.params.a == 1.0 and coeffs.params.g0 > 0):
        return None
    return math.log(2.0) / (grid.q * coeffs.params.g0)


def commensurate_dt(grid: Grid, coeffs: Coefficients, target_dt: float) -> float:
    """
    Largest whole number of cell shifts not above target_dt, and never
    less than one shift.

    Only g = g0 x on a DyadicLog grid admits one: e^{g0 dt} = 2^{s/q}.
    Other configurations return target_dt unchanged. A target below one
    shift is raised to one shift; the reaction substeps keep the step
    stable.
    """
    cell = whole_shift(grid, coeffs)
    if cell is None:
        return target_dt
    shifts = int(math.floor(target_dt / cell + 1e-9))
    if shifts < 1:
        logger.debug(f"dt={target_dt:.4g} is below one cell shift; using {cell:.4g}")
        return cell
    return shifts * cell


def observed_splitting_order(n0: GridMeasure, T: float, dt: float, coeffs: Coefficients,
                             kernel: FragmentKernel, V: WeightLike, lam: float = 0.0) -> float:
    """
    log2 of |u_dt - u_dt/2| / |u_dt/2 - u_dt/4| at time T.

    The reaction runs in one substep so that dt sets the whole step, and
    the transport has to be exact at dt/4 (no growth, or whole-cell shifts).
    """
    if coeffs.has_growth and abs(commensurate_dt(n0.grid, coeffs, dt / 4.0) - dt / 4.0) > 1e-12 * dt:
        raise DomainError("the splitting order needs a transport that is exact at dt/4")
    finals = []
    for divisor in (1, 2, 4):
        cfg = EvolutionConfig(dt=dt / divisor, lam=lam, snapshot_every=10 ** 9, substeps=1)
        finals.append(evolve(n0, T, cfg, coeffs, kernel).final)
    coarse = weighted_tv_norm(finals[0] - finals[1], V)
    fine = weighted_tv_norm(finals[1] - finals[2], V)
    if fine == 0:
        raise DomainError("the dt/2 and dt/4 runs agree exactly; no order to observe")
    order = math.log2(coarse / fine)
    logger.info(f"Step differences {coarse:.3e} (dt vs dt/2) and {fine:.3e} (dt/2 vs dt/4): observed order {order:.3f}")
    return order


def stable_dt(grid: Grid, coeffs: Coefficients, lam: float = 0.0, fraction: float = 0.9) -> float:
    """A fraction of the largest single-substep dt allowed by the stability bound."""
    stiffness = float(np.max(np.asarray(coeffs.B(grid.nodes), dtype=float) + lam))
    if stiffness <= 0:
        return 1.0
    return fraction * config.STABILITY_CFL / stiffness
