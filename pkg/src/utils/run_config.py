"""
Run configuration.

Parses the JSON run config into frozen blocks. Every block rejects unknown
keys with ConfigError.
"""

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import config
from src.models.coefficients import Coefficients
from src.models.kernel import FragmentKernel, KernelKind
from src.numerics.grid import DyadicLog, Grid, LogUniform, WeightSpec, make_grid
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

PIPELINES = ("simulated", "selfsim", "doeblin")
NU_SHAPES = ("uniform", "linear")


def _strict(block: Any, allowed: set, name: str) -> Dict[str, Any]:
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' must be an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")
    return block


def _positive(value: Any, name: str) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if not value > 0 or not math.isfinite(value):
        raise ConfigError(f"{name} must be positive and finite, got {value}")
    return value


# ----------------------------------------------------------------------
# blocks
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ModelBlock:
    coeffs: Coefficients
    kernel: FragmentKernel

    @classmethod
    def from_dict(cls, block: Any) -> "ModelBlock":
        if block is None:
            raise ConfigError("the run config needs a 'model' block")
        block = _strict(block, {"g", "B", "xi", "kernel"}, "model")
        coeffs = Coefficients.from_dict(block)
        kernel = FragmentKernel.from_name(block.get("kernel", "uniform"))
        return cls(coeffs, kernel)

    @property
    def is_linear_growth(self) -> bool:
        p = self.coeffs.params
        return self.coeffs.is_power_law and p.a == 1.0 and p.g0 == 1.0


@dataclass(frozen=True)
class GridBlock:
    x_min: float = 2.0 ** -10
    x_max: float = 64.0
    scheme: str = "dyadic"
    q: int = 32
    n: int = 400

    @classmethod
    def from_dict(cls, block: Any) -> "GridBlock":
        block = _strict(block, {"x_min", "x_max", "scheme", "q", "n"}, "grid")
        parsed = cls(
            x_min=_positive(block.get("x_min", cls.x_min), "grid.x_min"),
            x_max=_positive(block.get("x_max", cls.x_max), "grid.x_max"),
            scheme=block.get("scheme", cls.scheme),
            q=int(block.get("q", cls.q)),
            n=int(block.get("n", cls.n)),
        )
        if parsed.scheme not in ("dyadic", "log"):
            raise ConfigError(f"grid.scheme must be 'dyadic' or 'log', got {parsed.scheme!r}")
        if parsed.x_max <= parsed.x_min:
            raise ConfigError("grid.x_max must exceed grid.x_min")
        return parsed

    def build(self, kernel: Optional[FragmentKernel] = None) -> Grid:
        """Mitosis always gets a dyadic grid."""
        dyadic = self.scheme == "dyadic" or (kernel is not None and kernel.kind is KernelKind.EQUAL_MITOSIS)
        scheme = DyadicLog(self.q) if dyadic else LogUniform(self.n)
        return make_grid(self.x_min, self.x_max, scheme)


@dataclass(frozen=True)
class EvolutionBlock:
    dt: Optional[float] = None
    T: float = 10.0
    snapshots: int = 50

    @classmethod
    def from_dict(cls, block: Any) -> "EvolutionBlock":
        block = _strict(block, {"dt", "T", "snapshots"}, "evolution")
        dt = block.get("dt")
        return cls(
            dt=None if dt is None else _positive(dt, "evolution.dt"),
            T=_positive(block.get("T", cls.T), "evolution.T"),
            snapshots=max(1, int(block.get("snapshots", cls.snapshots))),
        )


@dataclass(frozen=True)
class EigenBlock:
    tol: float = 1e-6
    k: float = 2.0
    x_min: float = 1e-3
    q: int = 32
    t_max: float = config.DIRECT_EIGEN_T_MAX
    extrapolate: bool = True
    malthus_T: float = 20.0

    @classmethod
    def from_dict(cls, block: Any) -> "EigenBlock":
        block = _strict(block, {"tol", "k", "x_min", "q", "t_max", "extrapolate", "malthus_T"}, "eigen")
        malthus_T = float(block.get("malthus_T", cls.malthus_T))
        if malthus_T < 0:
            raise ConfigError(f"eigen.malthus_T must be >= 0 (0 disables the check), got {malthus_T}")
        return cls(
            tol=_positive(block.get("tol", cls.tol), "eigen.tol"),
            k=float(block.get("k", cls.k)),
            x_min=_positive(block.get("x_min", cls.x_min), "eigen.x_min"),
            q=int(block.get("q", cls.q)),
            t_max=_positive(block.get("t_max", cls.t_max), "eigen.t_max"),
            extrapolate=bool(block.get("extrapolate", cls.extrapolate)),
            malthus_T=malthus_T,
        )


@dataclass(frozen=True)
class CertificateBlock:
    k: float = 0.0
    K_w: float = 2.0
    t0: float = 2.0 * math.log(2.0)
    R: Union[str, float] = "auto"
    probes: int = config.SMALLSET_PROBES
    trials: int = 100
    nu: str = "uniform"
    pipeline: str = "simulated"
    b: Optional[float] = None

    @classmethod
    def from_dict(cls, block: Any) -> "CertificateBlock":
        block = _strict(block, {"k", "K_w", "t0", "R", "probes", "trials", "nu", "pipeline", "b"}, "certificate")
        R = block.get("R", "auto")
        if R != "auto":
            R = _positive(R, "certificate.R")
        b = block.get("b")
        parsed = cls(
            k=float(block.get("k", cls.k)),
            K_w=float(block.get("K_w", cls.K_w)),
            t0=_positive(block.get("t0", cls.t0), "certificate.t0"),
            R=R,
            probes=int(block.get("probes", cls.probes)),
            trials=int(block.get("trials", cls.trials)),
            nu=block.get("nu", cls.nu),
            pipeline=block.get("pipeline", cls.pipeline),
            b=None if b is None else _positive(b, "certificate.b"),
        )
        if parsed.pipeline not in PIPELINES:
            raise ConfigError(f"certificate.pipeline must be one of {PIPELINES}, got {parsed.pipeline!r}")
        if parsed.nu not in NU_SHAPES:
            raise ConfigError(f"certificate.nu must be one of {NU_SHAPES}, got {parsed.nu!r}")
        if parsed.probes < 2 or parsed.trials < 1:
            raise ConfigError("certificate.probes must be >= 2 and certificate.trials >= 1")
        return parsed


@dataclass(frozen=True)
class RateBlock:
    T: float = 20.0
    bumps: Tuple[float, ...] = (3.0,)

    @classmethod
    def from_dict(cls, block: Any) -> "RateBlock":
        block = _strict(block, {"T", "bumps"}, "rate")
        bumps = block.get("bumps", list(cls.bumps))
        if not isinstance(bumps, list) or not bumps:
            raise ConfigError("rate.bumps must be a nonempty list of centres")
        return cls(T=_positive(block.get("T", cls.T), "rate.T"),
                   bumps=tuple(_positive(c, "rate.bumps[]") for c in bumps))


@dataclass(frozen=True)
class OutputBlock:
    dir: str = config.OUTPUT_DIR

    @classmethod
    def from_dict(cls, block: Any) -> "OutputBlock":
        block = _strict(block, {"dir"}, "output")
        return cls(dir=str(block.get("dir", config.OUTPUT_DIR)))


# ----------------------------------------------------------------------
# run config
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock
    grid: GridBlock = field(default_factory=GridBlock)
    evolution: EvolutionBlock = field(default_factory=EvolutionBlock)
    eigen: EigenBlock = field(default_factory=EigenBlock)
    certificate: CertificateBlock = field(default_factory=CertificateBlock)
    rate: RateBlock = field(default_factory=RateBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    seed: int = config.SEED

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        data = _strict(data, {"model", "grid", "evolution", "eigen", "certificate", "rate", "output", "seed"},
                       "run config")
        return cls(
            model=ModelBlock.from_dict(data.get("model")),
            grid=GridBlock.from_dict(data.get("grid")),
            evolution=EvolutionBlock.from_dict(data.get("evolution")),
            eigen=EigenBlock.from_dict(data.get("eigen")),
            certificate=CertificateBlock.from_dict(data.get("certificate")),
            rate=RateBlock.from_dict(data.get("rate")),
            output=OutputBlock.from_dict(data.get("output")),
            seed=int(data.get("seed", config.SEED)),
        )

    def with_overrides(self, **changes) -> "RunConfig":
        """Copy with certificate fields replaced (CLI flags)."""
        cert_changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, certificate=replace(self.certificate, **cert_changes))

    def weight(self) -> WeightSpec:
        """The Lyapunov weight; 1 + x^K when k = 0, else x^k + x^K."""
        c = self.certificate
        xi = self.model.coeffs.xi
        if c.k == 0.0:
            spec = WeightSpec.one_plus_xK(c.K_w, xi)
        else:
            spec = WeightSpec.xk_plus_xK(c.k, c.K_w, xi)
        return spec.validate(linear_growth=self.model.is_linear_growth)

    def describe(self) -> Dict[str, Any]:
        c = self.certificate
        return {
            "model": {**self.model.coeffs.describe(), "kernel": self.model.kernel.kind.value},
            "grid": vars(self.grid).copy(),
            "certificate": {"k": c.k, "K_w": c.K_w, "t0": c.t0, "R": c.R, "probes": c.probes,
                            "trials": c.trials, "nu": c.nu, "pipeline": c.pipeline, "b": c.b},
            "seed": self.seed,
        }


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """Read a RunConfig from JSON; without a path the self-similar b = 2 model is used."""
    if path is None:
        logger.info("No --config given; using g = x, B = x^2, uniform kernel")
        return RunConfig.from_dict({"model": {"g": {"type": "power", "a": 1.0, "g0": 1.0},
                                              "B": {"type": "power", "b": 2.0, "b0": 1.0},
                                              "kernel": "uniform"}})
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    return RunConfig.from_dict(data)
