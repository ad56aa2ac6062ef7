"""
Pipeline service.

Runs hypotheses -> eigen -> drift -> minorise -> certify -> rate for one
run config, keeps every intermediate result and assembles the summary with
provenance tags. Stage failures are recorded and later stages that do not
depend on them still run.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from src.certificates.harris import (HarrisCertificate, SelfSimilarCertificate, default_level, doeblin_rate,
                                     harris_from_certificates, selfsim_certificate)
from src.certificates.lyapunov import DriftCertificate, DriftRegime, drift_constants, selfsim_drift, verify_drift
from src.certificates.minorisation import DiracEvolver, NuShape, SmallSetCertificate, small_set_constants
from src.models.hypotheses import HypothesisReport, check_hypotheses
from src.models.kernel import KernelKind
from src.numerics.eigen import DualEigenResult, EigenTriple, direct_eigen, dual_eigen, malthus_exponent
from src.numerics.flow import FlowMap
from src.numerics.grid import Grid, WeightSpec, weight_values
from src.numerics.semigroup import (EvolutionConfig, Trajectory, commensurate_dt, evolve, observed_splitting_order,
                                    stable_dt, step_count, whole_shift)
from src.services.ratemeter import SOFT_RATE_FLOOR, RateFit, compare_fits, gaussian_bump, measure_rates
from src.utils.errors import ConfigError, DomainError, EmptyIntervalError, GateFailure, GFError
from src.utils.logreal import LogReal
from src.utils.report_writer import report_writer
from src.utils.run_config import RunConfig

logger = logging.getLogger(__name__)

LAMBDA_INVARIANCE_RTOL = 1e-3

STAGES = ("hypotheses", "eigen", "drift", "minorise", "certify", "rate")


@dataclass
class StageError:
    stage: str
    type: str
    message: str

    def to_dict(self) -> Dict[str, str]:
        return {"stage": self.stage, "type": self.type, "message": self.message}


@dataclass
class CertifiedRate:
    """Certified rate from one of the three certificate routes."""

    pipeline: str
    rho: LogReal
    C: Optional[LogReal] = None
    harris: Optional[HarrisCertificate] = None
    selfsim: Optional[SelfSimilarCertificate] = None
    alpha: Optional[LogReal] = None

    def to_dict(self) -> Dict[str, Any]:
        tag = report_writer.tagged
        source = "closed-form" if self.pipeline == "selfsim" else "simulated"
        out: Dict[str, Any] = {"pipeline": self.pipeline, "log_rho": tag(self.rho.log, source)}
        if self.C is not None:
            out["C"] = tag(self.C.to_float(), source)
        if self.harris is not None:
            out["harris"] = report_writer.tag_all(self.harris.to_dict(), source)
        if self.selfsim is not None:
            out["small_set_closed_form"] = report_writer.tag_all(self.selfsim.small_set.to_dict(), "closed-form")
        if self.alpha is not None:
            out["log_alpha"] = tag(self.alpha.log, source)
        return out


@dataclass
class PipelineResult:
    summary: Dict[str, Any]
    errors: List[StageError] = field(default_factory=list)
    gates: Dict[str, Optional[bool]] = field(default_factory=dict)
    verdict: str = ""

    @property
    def exit_code(self) -> int:
        return 1 if any(v is False for v in self.gates.values()) else 0

    @property
    def failed_gates(self) -> List[str]:
        return [name for name, passed in self.gates.items() if passed is False]

    def raise_for_gates(self) -> None:
        if self.failed_gates:
            raise GateFailure(f"{', '.join(self.failed_gates)} ({self.verdict})")


class PipelineService:
    """Holds one run config and the results of each stage run so far."""

    def __init__(self, run_config: RunConfig):
        self.cfg = run_config
        self.coeffs = run_config.model.coeffs
        self.kernel = run_config.model.kernel
        self.errors: List[StageError] = []
        self._grid: Optional[Grid] = None
        self.hypotheses: Optional[HypothesisReport] = None
        self.dual: Optional[DualEigenResult] = None
        self.triple: Optional[EigenTriple] = None
        self.drift: Optional[DriftCertificate] = None
        self.drift_report = None
        self.small_set: Optional[SmallSetCertificate] = None
        self.certified: Optional[CertifiedRate] = None
        self.fits: List[RateFit] = []

    @property
    def grid(self) -> Grid:
        if self._grid is None:
            self._grid = self.cfg.grid.build(self.kernel)
            logger.info(f"Grid {self._grid!r}")
        return self._grid

    @property
    def weight(self) -> WeightSpec:
        return self.cfg.weight()

    @property
    def t0(self) -> float:
        return self.cfg.certificate.t0

    def _selfsim_b(self) -> float:
        if self.cfg.certificate.b is not None:
            return self.cfg.certificate.b
        if self.coeffs.is_power_law:
            return self.coeffs.params.b
        raise ConfigError("the selfsim pipeline needs certificate.b or power-law coefficients")

    def _dt(self, lam: float) -> float:
        return commensurate_dt(self.grid, self.coeffs, self.cfg.evolution.dt or stable_dt(self.grid, self.coeffs, lam))

    # ------------------------------------------------------------------
    # stages
    # ------------------------------------------------------------------

    def run_hypotheses(self) -> HypothesisReport:
        self.cfg.weight()
        self.hypotheses = check_hypotheses(self.coeffs, self.kernel)
        return self.hypotheses

    def run_eigen(self) -> EigenTriple:
        e = self.cfg.eigen
        self.dual = dual_eigen(self.coeffs, self.kernel, tol=e.tol, k=e.k, x_min=e.x_min, q=e.q)
        self.triple = direct_eigen(self.coeffs, self.kernel, self.dual.lam, self.dual.phi, self.grid,
                                   dt=self.cfg.evolution.dt, t_max=e.t_max, A_norm=self.dual.solution.A_norm,
                                   extrapolate=e.extrapolate)
        if e.malthus_T:
            self.triple.lam_malthus = malthus_exponent(self.coeffs, self.kernel, self.grid, self.dual.phi,
                                                       e.malthus_T, dt=self.triple.dt_h)
            mismatch = self.lambda_mismatch()
            if mismatch > LAMBDA_INVARIANCE_RTOL:
                logger.warning(f"Malthus exponent {self.triple.lam_malthus:.6g} differs from lambda "
                               f"{self.dual.lam:.6g} by {mismatch:.2e} (relative)")
        return self.triple

    def lambda_mismatch(self) -> float:
        """Relative gap between the dual eigenvalue and the fitted growth of int phi n_t."""
        if self.triple is None or self.triple.lam_malthus is None:
            return float("nan")
        return abs(self.triple.lam_malthus - self.triple.lam) / max(abs(self.triple.lam), 1e-300)

    def _phi_nodes(self) -> np.ndarray:
        if self.triple is None:
            self.run_eigen()
        return self.triple.phi

    def _regime(self) -> DriftRegime:
        if self.hypotheses is None:
            self.run_hypotheses()
        return DriftRegime.from_growth_class(self.hypotheses.growth_class)

    def run_drift(self, verify: bool = True) -> DriftCertificate:
        if self.cfg.certificate.pipeline == "selfsim":
            self.drift = selfsim_drift(self._selfsim_b())
        else:
            regime = self._regime()
            phi = lam = None
            if regime is not DriftRegime.LINEAR_GROWTH:
                if self.dual is None:
                    self.run_eigen()
                phi, lam = self.dual.phi, self.dual.lam
            self.drift = drift_constants(regime, self.weight, self.coeffs, self.kernel, phi=phi, lam=lam)
        if verify:
            lam = self.triple.lam if self.triple is not None else 1.0
            phi_nodes = self._phi_nodes()
            self.drift_report = verify_drift(self.drift, self.t0, self.cfg.certificate.trials, self.grid,
                                             self.coeffs, self.kernel, phi_nodes, dt=self._dt(lam),
                                             seed=self.cfg.seed)
        return self.drift

    def level(self) -> float:
        R = self.cfg.certificate.R
        if R != "auto":
            return float(R)
        if self.drift is None:
            self.run_drift(verify=False)
        return default_level(self.drift.K_d, self.drift.gamma_of_t0(self.t0))

    def run_minorise(self, R: Optional[float] = None) -> SmallSetCertificate:
        if self.drift is None:
            self.run_drift(verify=False)
        phi_nodes = self._phi_nodes()
        evolver = DiracEvolver(self.grid, self.coeffs, self.kernel, phi_nodes, self.triple.lam,
                               dt=self.cfg.evolution.dt)
        R = self.level() if R is None else R
        self.small_set = small_set_constants(evolver, self.t0, self.drift.weight_f, R,
                                             probes=self.cfg.certificate.probes,
                                             nu_shape=NuShape(self.cfg.certificate.nu))
        return self.small_set

    def run_certify(self) -> CertifiedRate:
        pipeline = self.cfg.certificate.pipeline
        if pipeline == "selfsim":
            chain = selfsim_certificate(self._selfsim_b(), self.t0)
            self.drift = chain.drift
            self.certified = CertifiedRate(pipeline, chain.rho, C=chain.harris.C, harris=chain.harris,
                                           selfsim=chain, alpha=chain.harris.alpha)
        elif pipeline == "doeblin":
            if self.drift is None:
                self.run_drift(verify=False)
            top = float(np.max(weight_values(self.grid, self.drift.weight_f)))
            small = self.small_set if self.small_set is not None and self.small_set.R >= top else None
            small = small or self.run_minorise(R=top)
            C, rho = doeblin_rate(small.alpha, self.t0)
            self.certified = CertifiedRate(pipeline, rho, C=C, alpha=small.alpha)
        else:
            if self.small_set is None:
                self.run_minorise()
            harris = harris_from_certificates(self.drift, self.t0, self.small_set.alpha, self.small_set.R)
            self.certified = CertifiedRate(pipeline, harris.rho, C=harris.C, harris=harris, alpha=harris.alpha)
        logger.info(f"Certified rate ({pipeline}): log rho = {self.certified.rho.log:.6g}")
        return self.certified

    def run_rate(self, T: Optional[float] = None) -> List[RateFit]:
        if self.triple is None:
            self.run_eigen()
        T = T or self.cfg.rate.T
        # the step N was solved with, not evolution.dt
        self.fits = measure_rates(self.grid, self.cfg.rate.bumps, T, self.weight, self.triple, self.coeffs,
                                  self.kernel)
        self._soft_rate_expectation()
        return self.fits

    def try_certify(self) -> Optional[CertifiedRate]:
        """Certified rate, or None when some certificate stage cannot be built."""
        try:
            return self.run_certify()
        except ConfigError:
            raise
        except GFError as e:
            logger.warning(f"No certificate: {type(e).__name__}: {e}")
            self.errors.append(StageError("certify", type(e).__name__, str(e)))
            return None

    def comparison(self) -> Dict[str, Any]:
        return compare_fits(self.fits, self.certified.rho if self.certified else None)

    def run_evolve(self, T: Optional[float] = None, snapshots: Optional[int] = None) -> Trajectory:
        """Scaled run from the first configured bump, with the eigen stage's step when it has run."""
        T = T or self.cfg.evolution.T
        count = snapshots or self.cfg.evolution.snapshots
        n0 = gaussian_bump(self.grid, self.cfg.rate.bumps[0])
        if self.triple is not None:
            dt = self.cfg.evolution.dt or self.triple.dt_h or self._dt(self.triple.lam)
            cfg = self.triple.scaled_config(max(1, step_count(T, dt) // count), dt=commensurate_dt(
                self.grid, self.coeffs, dt))
        else:
            dt = self._dt(0.0)
            cfg = EvolutionConfig(dt=dt, lam=0.0, snapshot_every=max(1, step_count(T, dt) // count))
        return evolve(n0, T, cfg, self.coeffs, self.kernel)

    def splitting_order(self) -> float:
        """Observed order of the single-substep step from the first bump, dt = four cell shifts when g = g0 x."""
        cell = whole_shift(self.grid, self.coeffs)
        if cell is None and self.coeffs.has_growth:
            raise DomainError("the splitting order needs g = g0 x on a DyadicLog grid, or no growth")
        dt = 4.0 * cell if cell is not None else stable_dt(self.grid, self.coeffs)
        n0 = gaussian_bump(self.grid, self.cfg.rate.bumps[0])
        return observed_splitting_order(n0, self.cfg.evolution.T, dt, self.coeffs, self.kernel, self.weight)

    def flow_rows(self, times) -> List[tuple]:
        """(t, x0, X_t(x0)) over the grid edges."""
        flow_map = FlowMap(self.coeffs)
        rows = []
        for t in times:
            for x0, xt in zip(self.grid.edges, flow_map.flow(float(t), self.grid.edges)):
                rows.append((float(t), float(x0), float(xt)))
        return rows

    def _soft_rate_expectation(self) -> None:
        p = self.coeffs.params
        selfsim = (self.coeffs.is_power_law and p.a == 1.0 and p.g0 == 1.0 and p.b >= 2.0
                   and self.kernel.kind is KernelKind.UNIFORM)
        if not selfsim:
            return
        for fit in self.fits:
            if fit.accepted and fit.rho_emp < SOFT_RATE_FLOOR:
                logger.warning(f"rho_emp = {fit.rho_emp:.4g} below {SOFT_RATE_FLOOR} for b = {p.b} ({fit.initial})")

    # ------------------------------------------------------------------
    # full pipeline
    # ------------------------------------------------------------------

    def _stage(self, name: str, fn: Callable[[], Any]) -> Any:
        logger.info(f"Stage {name}")
        try:
            return fn()
        except ConfigError:
            raise
        except GFError as e:
            logger.error(f"Stage {name} failed: {type(e).__name__}: {e}")
            self.errors.append(StageError(name, type(e).__name__, str(e)))
            return None

    def expects_no_gap(self) -> bool:
        """Equal mitosis with g(x) = x: no spectral gap."""
        return self.kernel.kind is KernelKind.EQUAL_MITOSIS and self._regime() is DriftRegime.LINEAR_GROWTH

    def no_gap_observed(self) -> bool:
        """
        The failures a missing gap produces, and only those: the minorisation
        interval is empty, no certificate was built and every rate fit saw an
        oscillation or no decay at all, with at least one oscillation.
        """
        empty_interval = any(e.type == EmptyIntervalError.__name__ for e in self.errors)
        reasons = [f.rejection for f in self.fits]
        oscillating = bool(reasons) and None not in reasons and "oscillation" in reasons
        return empty_interval and oscillating and self.certified is None

    def run(self) -> PipelineResult:
        self._stage("hypotheses", self.run_hypotheses)
        self._stage("eigen", self.run_eigen)
        if self.triple is not None or self.cfg.certificate.pipeline == "selfsim":
            self._stage("drift", lambda: self.run_drift(verify=self.triple is not None))
        if self.cfg.certificate.pipeline != "selfsim" and self.drift is not None and self.triple is not None:
            self._stage("minorise", self.run_minorise)
        self._stage("certify", self.run_certify)
        if self.triple is not None:
            self._stage("rate", self.run_rate)
        return self._result()

    def _result(self) -> PipelineResult:
        comparison = self.comparison()
        no_gap = self.expects_no_gap()

        gates: Dict[str, Optional[bool]] = {}
        if no_gap:
            gates["no_gap_observed"] = observed = self.no_gap_observed()
            verdict = "no-gap expected and observed" if observed else "no-gap expected but a gap was measured"
        else:
            gates["hypotheses"] = self.hypotheses.satisfied if self.hypotheses else False
            if self.drift_report is not None:
                gates["drift"] = self.drift_report.passed
            gates["certificate"] = self.certified is not None
            gates["lower_bound"] = comparison["holds"]
            verdict = comparison["verdict"]
        result = PipelineResult(summary=self.summary(comparison, verdict), errors=list(self.errors),
                                gates=gates, verdict=verdict)
        result.summary["gates"] = gates
        result.summary["exit_code"] = result.exit_code
        logger.info(f"Pipeline verdict: {verdict} (exit {result.exit_code})")
        return result

    def summary(self, comparison: Optional[Dict[str, Any]] = None, verdict: str = "") -> Dict[str, Any]:
        tag = report_writer.tagged
        out: Dict[str, Any] = {
            "config": report_writer.tag_all(self.cfg.describe(), "config"),
            "errors": [e.to_dict() for e in self.errors],
            "verdict": verdict,
        }
        if self.hypotheses is not None:
            out["hypotheses"] = self.hypotheses.to_dict()
        if self.triple is not None:
            out["eigen"] = report_writer.tag_all(self.triple.to_dict(), self.triple.source)
            if self.dual is not None:
                out["eigen"]["dual"] = report_writer.tag_all(self.dual.to_dict(), "simulated")
            if self.triple.lam_malthus is not None:
                out["eigen"]["lambda_invariance"] = report_writer.tag_all(
                    {"lambda_malthus": self.triple.lam_malthus, "relative_mismatch": self.lambda_mismatch(),
                     "within_tolerance": bool(self.lambda_mismatch() <= LAMBDA_INVARIANCE_RTOL)}, "fitted")
        if self.drift is not None:
            out["drift"] = report_writer.tag_all(self.drift.to_dict(), self.drift.source)
            out["drift"]["gamma"] = tag(self.drift.gamma_of_t0(self.t0), self.drift.source)
            if self.drift_report is not None:
                out["drift"]["verification"] = report_writer.tag_all(self.drift_report.to_dict(), "simulated")
        if self.small_set is not None:
            out["small_set"] = report_writer.tag_all(self.small_set.to_dict(), "simulated")
        if self.certified is not None:
            out["certificate"] = self.certified.to_dict()
        if self.fits:
            out["rate"] = [report_writer.tag_all(f.to_dict(), "fitted") for f in self.fits]
        if comparison is not None:
            out["comparison"] = report_writer.tag_all(comparison, "fitted")
        return out
