"""
Hypothesis checker.

Decides whether a (coefficients, kernel) pair lies in the regime where the
eigenproblem and the convergence certificate apply. Power laws are decided
analytically, tables by limits along geometric probe sequences.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import integrate

from src.models.coefficients import Coefficients
from src.models.kernel import FragmentKernel, KernelKind, moment

logger = logging.getLogger(__name__)

# Probe exponents x = 10^{+-j}
PROBE_EXPONENTS = np.arange(0, 13)


class Verdict(str, Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDABLE = "undecidable-numerically"


class GrowthClass(str, Enum):
    SUBLINEAR_AT_0 = "SublinearAt0"
    SUPERLINEAR_AT_0 = "SuperlinearAt0"
    EXACTLY_LINEAR = "ExactlyLinear"


@dataclass(frozen=True)
class HypothesisVerdict:
    verdict: Verdict
    witness: str
    required: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {"verdict": self.verdict.value, "witness": self.witness, "required": self.required}


@dataclass(frozen=True)
class HypothesisReport:
    """Per-hypothesis verdicts plus the growth class of g at 0."""

    verdicts: Dict[str, HypothesisVerdict]
    growth_class: GrowthClass
    admissible_region: str = ""
    notes: List[str] = field(default_factory=list)

    @property
    def satisfied(self) -> bool:
        return all(v.verdict is Verdict.HOLDS for v in self.verdicts.values() if v.required)

    def failures(self) -> List[str]:
        return [name for name, v in self.verdicts.items() if v.required and v.verdict is not Verdict.HOLDS]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verdicts": {name: v.to_dict() for name, v in self.verdicts.items()},
            "growth_class": self.growth_class.value,
            "admissible_region": self.admissible_region,
            "satisfied": self.satisfied,
            "notes": list(self.notes),
        }


def estimate_limit(values) -> Tuple[str, float]:
    """
    Classify the tail of a probe sequence.

    Returns one of ("converged", v), ("zero", 0), ("infinite", inf),
    ("undecidable", last) from the last three probes.
    """
    v = np.asarray(values, dtype=float)[-3:]
    if not np.all(np.isfinite(v)):
        return ("infinite", np.inf) if np.all(v[np.isfinite(v)] >= 0) else ("undecidable", float(v[-1]))
    # differences at roundoff level count as zero
    noise = 1e-12 * max(float(np.max(np.abs(v))), 1e-300)
    d1, d2 = (0.0 if abs(d) <= noise else float(d) for d in (v[1] - v[0], v[2] - v[1]))
    monotone = (d1 >= 0 and d2 >= 0) or (d1 <= 0 and d2 <= 0)
    if not monotone:
        return "undecidable", float(v[-1])
    scale = np.maximum(np.abs(v[1:]), 1e-300)
    if abs(v[-1]) < 1e-6 and d2 <= 0:
        return "zero", 0.0
    if np.all(np.abs(np.array([d1, d2])) <= 0.01 * scale):
        return "converged", float(v[-1])
    if d2 > 0 and v[-1] > 1e6:
        return "infinite", np.inf
    return "undecidable", float(v[-1])


class HypothesisChecker:
    """Checks the coefficient and kernel hypotheses for one model."""

    def check(self, coeffs: Coefficients, kernel: FragmentKernel) -> HypothesisReport:
        verdicts: Dict[str, HypothesisVerdict] = {}

        p1 = moment(kernel, 1.0)
        verdicts["self_similar_kernel"] = HypothesisVerdict(
            Verdict.HOLDS if abs(p1 - 1.0) <= 1e-12 else Verdict.FAILS, f"p_1 = {p1:.12g}")
        verdicts["certified_kernel"] = HypothesisVerdict(
            Verdict.HOLDS if kernel.is_certified else Verdict.FAILS, f"kernel kind {kernel.kind.value}")

        if coeffs.is_power_law:
            growth_class, region = self._check_power_law(coeffs, kernel, verdicts)
        else:
            growth_class, region = self._check_tabulated(coeffs, kernel, verdicts)

        report = HypothesisReport(verdicts=verdicts, growth_class=growth_class, admissible_region=region)
        for name, v in verdicts.items():
            logger.info(f"Hypothesis {name}: {v.verdict.value} ({v.witness})")
        logger.info(f"Growth class {growth_class.value}; all required hypotheses hold: {report.satisfied}")
        return report

    # ------------------------------------------------------------------
    # power laws: closed-form exponent conditions
    # ------------------------------------------------------------------

    def _check_power_law(self, coeffs: Coefficients, kernel: FragmentKernel,
                         verdicts: Dict[str, HypothesisVerdict]):
        p = coeffs.params
        mitosis = kernel.kind is KernelKind.EQUAL_MITOSIS

        verdicts["positive_growth"] = HypothesisVerdict(
            Verdict.HOLDS if p.g0 > 0 else Verdict.FAILS, f"g0 = {p.g0}")

        if p.b0 == 0.0:
            verdicts["growth_fragmentation_balance"] = HypothesisVerdict(
                Verdict.FAILS, "B = 0: xB/g -> 0 at infinity, not +infinity")
        else:
            exponent = p.b - p.a + 1.0
            holds = p.b >= 0 and exponent > 0
            witness = f"b - a + 1 = {exponent:.6g}" if p.b >= 0 else f"b = {p.b} < 0"
            verdicts["growth_fragmentation_balance"] = HypothesisVerdict(
                Verdict.HOLDS if holds else Verdict.FAILS, witness)

        verdicts["growth_at_infinity"] = HypothesisVerdict(
            Verdict.HOLDS if p.a <= 1.0 else Verdict.FAILS, f"g = O(x) at infinity needs a <= 1, a = {p.a}")

        verdicts["mitosis_growth"] = HypothesisVerdict(
            Verdict.HOLDS if p.a < 1.0 else Verdict.FAILS,
            f"omega g(x) < g(omega x) and H(0) finite need a < 1, a = {p.a}",
            required=mitosis,
        )

        if p.g0 > 0 and abs(p.a - 1.0) <= 1e-12 and abs(p.g0 - 1.0) <= 1e-12:
            growth_class = GrowthClass.EXACTLY_LINEAR
        elif p.a < 1.0:
            growth_class = GrowthClass.SUBLINEAR_AT_0
        else:
            growth_class = GrowthClass.SUPERLINEAR_AT_0

        if mitosis:
            region = "mitosis: b >= 0 and a < 1"
        else:
            region = "uniform: b >= 0 and a <= 1, excluding (b, a) = (0, 1)"
        return growth_class, region

    # ------------------------------------------------------------------
    # tables: limits along x = 10^{+-j}
    # ------------------------------------------------------------------

    def _check_tabulated(self, coeffs: Coefficients, kernel: FragmentKernel,
                         verdicts: Dict[str, HypothesisVerdict]):
        small = 10.0 ** (-PROBE_EXPONENTS.astype(float))
        large = 10.0 ** PROBE_EXPONENTS.astype(float)

        verdicts["positive_growth"] = HypothesisVerdict(
            Verdict.HOLDS if np.all(coeffs.g(np.concatenate([small, large])) > 0) else Verdict.FAILS,
            "g > 0 on probes")

        ratio_small = small * coeffs.B(small) / coeffs.g(small)
        ratio_large = large * coeffs.B(large) / coeffs.g(large)
        at_zero = estimate_limit(ratio_small)
        at_inf = estimate_limit(ratio_large)
        integral_bg = estimate_limit([self._log_quad(lambda y: coeffs.B(y) / coeffs.g(y), s) for s in small])

        if at_zero[0] == "zero" and at_inf[0] == "infinite" and integral_bg[0] == "converged":
            balance = Verdict.HOLDS
        elif "undecidable" in (at_zero[0], at_inf[0], integral_bg[0]):
            balance = Verdict.UNDECIDABLE
        else:
            balance = Verdict.FAILS
        verdicts["growth_fragmentation_balance"] = HypothesisVerdict(
            balance, f"xB/g at 0: {at_zero}; at infinity: {at_inf}; int_0^1 B/g: {integral_bg}")

        growth_ratio = estimate_limit(coeffs.g(large) / large)
        verdicts["growth_at_infinity"] = HypothesisVerdict(
            {"converged": Verdict.HOLDS, "zero": Verdict.HOLDS, "infinite": Verdict.FAILS}.get(
                growth_ratio[0], Verdict.UNDECIDABLE),
            f"g(x)/x at infinity: {growth_ratio}")

        inverse_growth = estimate_limit([self._log_quad(lambda y: 1.0 / coeffs.g(y), s) for s in small])
        if inverse_growth[0] == "converged":
            growth_class = GrowthClass.SUBLINEAR_AT_0
        else:
            growth_class = GrowthClass.SUPERLINEAR_AT_0

        omegas = np.linspace(0.02, 0.98, 50)
        xs = np.logspace(-6, 6, 50)
        lhs = omegas[:, None] * coeffs.g(xs)[None, :]
        rhs = coeffs.g(omegas[:, None] * xs[None, :])
        strict = bool(np.all(lhs < rhs))
        mitosis_ok = strict and growth_class is GrowthClass.SUBLINEAR_AT_0 and growth_ratio[0] == "zero"
        if mitosis_ok:
            mitosis_verdict = Verdict.HOLDS
        elif growth_ratio[0] == "undecidable" or inverse_growth[0] == "undecidable":
            mitosis_verdict = Verdict.UNDECIDABLE
        else:
            mitosis_verdict = Verdict.FAILS
        verdicts["mitosis_growth"] = HypothesisVerdict(
            mitosis_verdict,
            f"omega g(x) < g(omega x) on 50x50 sample: {strict}; int_0^1 1/g: {inverse_growth}; g(x)/x: {growth_ratio}",
            required=kernel.kind is KernelKind.EQUAL_MITOSIS,
        )
        return growth_class, "tabulated: decided numerically on probes 10^{+-j}, j = 0..12"

    @staticmethod
    def _log_quad(fn, lower: float) -> float:
        """int_lower^1 fn(y) dy in the variable u = log y."""
        if lower >= 1.0:
            return 0.0
        value, _ = integrate.quad(lambda u: float(fn(np.exp(u))) * np.exp(u), np.log(lower), 0.0, limit=200)
        return value


# Global hypothesis checker instance
hypothesis_checker = HypothesisChecker()


def check_hypotheses(coeffs: Coefficients, kernel: FragmentKernel) -> HypothesisReport:
    return hypothesis_checker.check(coeffs, kernel)
