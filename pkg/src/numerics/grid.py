"""
Truncated log grids and measures on them.

Grids cover [x_min, x_max] with cells uniform in log x. The dyadic layout
puts q cells in every octave so that x -> 2x is an exact shift by q cells.
Measures store mass per cell; mass pushed past x_max is kept as escaped
mass.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Union

import numpy as np
from scipy import sparse

from src.utils.errors import ConfigError, DomainError

logger = logging.getLogger(__name__)

SNAP_RTOL = 1e-12


class GridScheme(str, Enum):
    LOG_UNIFORM = "log"
    DYADIC_LOG = "dyadic"


@dataclass(frozen=True)
class LogUniform:
    n: int


@dataclass(frozen=True)
class DyadicLog:
    q: int
    levels: Optional[int] = None


class Grid:
    """Cells [edges[i], edges[i+1]] with geometric centres as nodes."""

    def __init__(self, edges: np.ndarray, nodes: np.ndarray, scheme: GridScheme, q: Optional[int] = None):
        self.edges = edges
        self.nodes = nodes
        self.scheme = scheme
        self.q = q
        self.x_min = float(edges[0])
        self.x_max = float(edges[-1])
        self.widths = np.diff(edges)
        self.size = nodes.size

    @property
    def is_dyadic(self) -> bool:
        return self.scheme is GridScheme.DYADIC_LOG

    @property
    def levels(self) -> Optional[int]:
        return self.size // self.q if self.is_dyadic else None

    def cell_index(self, x: float) -> int:
        if not self.x_min <= x <= self.x_max:
            raise DomainError(f"x = {x} outside the grid [{self.x_min}, {self.x_max}]")
        return int(min(np.searchsorted(self.edges, x, side="right") - 1, self.size - 1))

    def describe(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "cells": self.size,
                "scheme": self.scheme.value, "q": self.q}

    def __repr__(self) -> str:
        return f"Grid({self.scheme.value}, [{self.x_min:.4g}, {self.x_max:.4g}], {self.size} cells)"


def make_grid(x_min: float, x_max: float, scheme: Union[LogUniform, DyadicLog]) -> Grid:
    """
    Build a truncated log grid.

    Args:
        x_min: Left end, > 0
        x_max: Right end, > x_min (rounded up to whole cells for DyadicLog)
        scheme: LogUniform(n) or DyadicLog(q)

    Returns:
        Grid with geometric-centre nodes
    """
    if not (x_min > 0 and x_max > x_min and math.isfinite(x_max)):
        raise ConfigError(f"grid bounds need 0 < x_min < x_max, got ({x_min}, {x_max})")

    if isinstance(scheme, LogUniform):
        if scheme.n < 1:
            raise ConfigError("LogUniform needs n >= 1 cells")
        edges = np.geomspace(x_min, x_max, scheme.n + 1)
        edges[0], edges[-1] = x_min, x_max
        nodes = np.sqrt(edges[:-1] * edges[1:])
        return Grid(edges, nodes, GridScheme.LOG_UNIFORM)

    if isinstance(scheme, DyadicLog):
        q = int(scheme.q)
        if q < 1:
            raise ConfigError("DyadicLog needs q >= 1 cells per octave")
        n = int(math.ceil(q * math.log2(x_max / x_min) - 1e-9))
        if scheme.levels is not None:
            n = max(n, q * int(scheme.levels))
        # one octave of base edges, then exact powers of two
        base = x_min * 2.0 ** (np.arange(q + 1) / q)
        base[q] = 2.0 * x_min
        base_nodes = np.sqrt(base[:-1] * base[1:])
        idx = np.arange(n + 1)
        edges = np.ldexp(base[idx % q], idx // q)
        node_idx = np.arange(n)
        nodes = np.ldexp(base_nodes[node_idx % q], node_idx // q)
        return Grid(edges, nodes, GridScheme.DYADIC_LOG, q=q)

    raise ConfigError(f"unknown grid scheme {scheme!r}")


def refine_grid(grid: Grid) -> Grid:
    """Split every cell at its node; DyadicLog(q) becomes DyadicLog(2q) on the same window."""
    edges = np.empty(2 * grid.size + 1)
    edges[0::2] = grid.edges
    edges[1::2] = grid.nodes
    nodes = np.sqrt(edges[:-1] * edges[1:])
    return Grid(edges, nodes, grid.scheme, q=2 * grid.q if grid.is_dyadic else None)


@dataclass
class GridMeasure:
    """Mass per cell on a grid, plus the mass that left through x_max."""

    grid: Grid
    mass: np.ndarray
    escaped_mass: float = 0.0

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        if self.mass.shape != (self.grid.size,):
            raise DomainError(f"mass has shape {self.mass.shape}, grid has {self.grid.size} cells")

    @classmethod
    def zeros(cls, grid: Grid) -> "GridMeasure":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def dirac(cls, grid: Grid, x0: float, weight: float = 1.0) -> "GridMeasure":
        """Unit mass in the single cell that contains x0."""
        mass = np.zeros(grid.size)
        mass[grid.cell_index(x0)] = weight
        return cls(grid, mass)

    @classmethod
    def from_density(cls, grid: Grid, density: Callable) -> "GridMeasure":
        """Cell masses of a density by Simpson's rule on each cell."""
        lo, hi = grid.edges[:-1], grid.edges[1:]
        mid = 0.5 * (lo + hi)
        mass = (np.asarray(density(lo)) + 4.0 * np.asarray(density(mid)) + np.asarray(density(hi))) * (hi - lo) / 6.0
        return cls(grid, mass)

    def copy(self) -> "GridMeasure":
        return GridMeasure(self.grid, self.mass.copy(), self.escaped_mass)

    def total(self) -> float:
        return float(self.mass.sum())

    def density(self) -> np.ndarray:
        return self.mass / self.grid.widths

    def moment(self, k: float = 1.0) -> float:
        return float(np.dot(self.grid.nodes ** k, self.mass))

    def normalized(self) -> "GridMeasure":
        total = self.total()
        if total == 0:
            raise DomainError("cannot normalize a measure of zero mass")
        return GridMeasure(self.grid, self.mass / total, self.escaped_mass / total)

    def scaled(self, factor: float) -> "GridMeasure":
        return GridMeasure(self.grid, self.mass * factor, self.escaped_mass * abs(factor))

    def __sub__(self, other: "GridMeasure") -> "GridMeasure":
        _same_grid(self, other)
        return GridMeasure(self.grid, self.mass - other.mass)

    def __add__(self, other: "GridMeasure") -> "GridMeasure":
        _same_grid(self, other)
        return GridMeasure(self.grid, self.mass + other.mass, self.escaped_mass + other.escaped_mass)

    def rows(self) -> Iterable[tuple]:
        """(x_center, cell_width, mass, density) per cell."""
        return zip(self.grid.nodes, self.grid.widths, self.mass, self.density())


def _same_grid(a: GridMeasure, b: GridMeasure) -> None:
    if a.grid is not b.grid and not np.array_equal(a.grid.edges, b.grid.edges):
        raise DomainError("measures live on different grids")


class WeightKind(str, Enum):
    ONE_PLUS_XK = "one_plus_xK"
    XK_PLUS_XK = "xk_plus_xK"
    SELF_SIMILAR_QUADRATIC = "self_similar_quadratic"


@dataclass(frozen=True)
class WeightSpec:
    """Lyapunov weight V of the weighted total-variation norm."""

    kind: WeightKind
    K_w: float = 2.0
    k_w: float = 0.0
    xi: float = 0.0

    @classmethod
    def one_plus_xK(cls, K_w: float, xi: float = 0.0) -> "WeightSpec":
        return cls(WeightKind.ONE_PLUS_XK, K_w=K_w, xi=xi)

    @classmethod
    def xk_plus_xK(cls, k_w: float, K_w: float, xi: float = 0.0) -> "WeightSpec":
        return cls(WeightKind.XK_PLUS_XK, K_w=K_w, k_w=k_w, xi=xi)

    @classmethod
    def self_similar_quadratic(cls) -> "WeightSpec":
        return cls(WeightKind.SELF_SIMILAR_QUADRATIC, K_w=2.0, k_w=0.0)

    def exponents(self):
        """(k, K) with V(x) = x^k + x^K."""
        if self.kind is WeightKind.XK_PLUS_XK:
            return self.k_w, self.K_w
        return 0.0, self.K_w

    def validate(self, linear_growth: bool = False) -> "WeightSpec":
        """Raise ConfigError unless the exponents satisfy 1 + xi < K (and the k range)."""
        if self.kind is WeightKind.SELF_SIMILAR_QUADRATIC:
            if not linear_growth and 2.0 <= 1.0 + self.xi:
                raise ConfigError(f"V = 1 + x^2 needs 1 + xi < 2, xi = {self.xi}")
            return self
        if linear_growth and self.kind is WeightKind.XK_PLUS_XK:
            if not -1.0 < self.k_w < 1.0 < self.K_w:
                raise ConfigError(f"g(x) = x needs -1 < k < 1 < K, got k={self.k_w}, K={self.K_w}")
            return self
        if not self.K_w > 1.0 + self.xi:
            raise ConfigError(f"weight exponent violates 1 + xi < K: K={self.K_w}, xi={self.xi}")
        if self.kind is WeightKind.XK_PLUS_XK and not -1.0 < self.k_w < 0.0:
            raise ConfigError(f"weight exponent k must satisfy -1 < k < 0, got k={self.k_w}")
        return self

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k, K = self.exponents()
        if self.kind is WeightKind.XK_PLUS_XK:
            return x ** k + x ** K
        return 1.0 + x ** K

    def describe(self) -> dict:
        return {"kind": self.kind.value, "k": self.exponents()[0], "K": self.K_w, "xi": self.xi}


WeightLike = Union[WeightSpec, Callable, np.ndarray]


def weight_values(grid: Grid, V: WeightLike) -> np.ndarray:
    if isinstance(V, np.ndarray):
        return V
    return np.asarray(V(grid.nodes), dtype=float)


def weighted_tv_norm(mu: GridMeasure, V: WeightLike) -> float:
    """sum_i V(node_i) |mass_i|."""
    return float(np.dot(weight_values(mu.grid, V), np.abs(mu.mass)))


def transport_matrix(grid: Grid, image_edges: np.ndarray, snap_rtol: float = SNAP_RTOL) -> sparse.csr_matrix:
    """
    Column i spreads source cell i uniformly over [image_edges[i], image_edges[i+1]].

    Image edges within snap_rtol of a grid edge are moved onto it, so maps that
    shift whole cells give an exact permutation. Columns sum to the fraction of
    the image inside [x_min, x_max].
    """
    image_edges = _snap(grid.edges, np.asarray(image_edges, dtype=float), snap_rtol)
    a, b = image_edges[:-1], image_edges[1:]
    if np.any(b <= a):
        raise DomainError("push-forward map must be strictly increasing")
    n = grid.size
    edges = grid.edges
    lo = np.clip(np.searchsorted(edges, a, side="right") - 1, 0, n - 1)
    hi = np.clip(np.searchsorted(edges, b, side="left") - 1, 0, n - 1)
    hi = np.maximum(hi, lo)
    counts = hi - lo + 1
    cols = np.repeat(np.arange(n), counts)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rows = lo[cols] + (np.arange(cols.size) - offsets[cols])
    left = np.clip(edges[rows], a[cols], b[cols])
    right = np.clip(edges[rows + 1], a[cols], b[cols])
    frac = (right - left) / (b - a)[cols]
    matrix = sparse.csr_matrix((frac, (rows, cols)), shape=(n, n))
    matrix.eliminate_zeros()
    return matrix


def _snap(edges: np.ndarray, image: np.ndarray, rtol: float) -> np.ndarray:
    idx = np.clip(np.searchsorted(edges, image), 1, edges.size - 1)
    nearest = np.where(image - edges[idx - 1] < edges[idx] - image, edges[idx - 1], edges[idx])
    return np.where(np.abs(image - nearest) <= rtol * nearest, nearest, image)


def push_forward(mu: GridMeasure, mapping: Callable) -> GridMeasure:
    """Transport mu by a strictly increasing map; mass beyond the grid is escaped."""
    image = np.asarray(mapping(mu.grid.edges), dtype=float)
    matrix = transport_matrix(mu.grid, image)
    mass = matrix @ mu.mass
    lost = float(mu.mass.sum() - mass.sum())
    return GridMeasure(mu.grid, mass, mu.escaped_mass + max(lost, 0.0))
