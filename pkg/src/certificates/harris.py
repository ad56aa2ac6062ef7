"""
Doeblin and Harris constants.

Turns a drift certificate (gamma, K_d) and a small-set certificate
(alpha, R) into the contraction factor alpha_bar, the prefactor C and the
rate rho. Probabilities stay in log-domain end to end.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Union

from src.certificates.lyapunov import DriftCertificate, selfsim_drift
from src.certificates.minorisation import SelfSimilarSmallSet
from src.utils.errors import CertificateError, DomainError
from src.utils.logreal import LogReal

logger = logging.getLogger(__name__)

Probability = Union[float, LogReal]

SELFSIM_T0 = 2.0 * math.log(2.0)


def doeblin_rate(alpha: Probability, t0: float):
    """
    Doeblin constants C = 1/(1 - alpha) and rho = -log(1 - alpha)/t0.

    Returns:
        (C, rho) as LogReal values
    """
    alpha = LogReal.coerce(alpha)
    if not (LogReal.zero() < alpha < LogReal.one()):
        raise DomainError(f"Doeblin needs 0 < alpha < 1, got {alpha}")
    if not t0 > 0:
        raise DomainError(f"t0 must be positive, got {t0}")
    C = LogReal.one() / alpha.one_minus()
    rho = alpha.neg_log1m() / t0
    return C, rho


@dataclass(frozen=True)
class HarrisCertificate:
    """
    Constants of the Harris contraction in the norm int (1 + beta V)|mu|.

    alpha_bar is kept as 1 - epsilon with epsilon in log-domain.
    """

    gamma: float
    K_d: float
    t0: float
    alpha: LogReal
    R: float
    alpha0: LogReal
    gamma0: float
    beta: LogReal
    epsilon: LogReal

    @property
    def alpha_bar(self) -> LogReal:
        return self.epsilon.one_minus()

    @property
    def C(self) -> LogReal:
        return LogReal.one() / self.alpha_bar

    @property
    def rho(self) -> LogReal:
        return self.epsilon.neg_log1m() / self.t0

    @property
    def log_rho(self) -> float:
        return self.rho.log

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma": self.gamma,
            "K_d": self.K_d,
            "t0": self.t0,
            "R": self.R,
            "log_alpha": self.alpha.log,
            "log_alpha0": self.alpha0.log,
            "gamma0": self.gamma0,
            "log_beta": self.beta.log,
            "alpha_bar": {"one_minus": True, "log_epsilon": self.epsilon.log},
            "C": self.C.to_float(),
            "log_rho": self.log_rho,
        }


def harris_rate(gamma: float, K_d: float, t0: float, alpha: Probability, R: float,
                alpha0: Optional[Probability] = None, gamma0: Optional[float] = None) -> HarrisCertificate:
    """
    Harris constants from drift and small-set inputs.

    Args:
        gamma: Drift contraction gamma(t0) in (0, 1)
        K_d: Additive drift constant
        t0: Time of the drift and minorisation steps
        alpha: Minorisation constant in (0, 1]
        R: Level of the small set, R > 2 K_d / (1 - gamma)
        alpha0: Defaults to alpha / 2
        gamma0: Defaults to gamma + 2 K_d / R

    Returns:
        HarrisCertificate with beta = alpha0 / K_d and
        alpha_bar = max{1 - alpha + alpha0, (2 + R beta gamma0) / (2 + R beta)}
    """
    alpha = LogReal.coerce(alpha)
    if not 0.0 < gamma < 1.0:
        raise CertificateError(f"0 < gamma < 1 violated: gamma = {gamma}")
    if not K_d > 0:
        raise CertificateError(f"K_d > 0 violated: K_d = {K_d}")
    if not t0 > 0:
        raise CertificateError(f"t0 > 0 violated: t0 = {t0}")
    if not (LogReal.zero() < alpha and alpha <= LogReal.one()):
        raise CertificateError(f"0 < alpha <= 1 violated: alpha = {alpha}")
    if not R > 2.0 * K_d / (1.0 - gamma):
        raise CertificateError(f"R > 2 K_d / (1 - gamma) violated: {R:.6g} <= {2.0 * K_d / (1.0 - gamma):.6g}")

    alpha0 = alpha / 2 if alpha0 is None else LogReal.coerce(alpha0)
    if not (LogReal.zero() < alpha0 < alpha):
        raise CertificateError(f"0 < alpha0 < alpha violated: alpha0 = {alpha0}, alpha = {alpha}")
    floor = gamma + 2.0 * K_d / R
    gamma0 = floor if gamma0 is None else float(gamma0)
    if not floor <= gamma0 < 1.0:
        raise CertificateError(f"gamma + 2 K_d / R <= gamma0 < 1 violated: {floor:.6g} <= {gamma0:.6g} < 1")

    beta = alpha0 / K_d
    R_beta = beta * R
    coupling = alpha - alpha0
    contraction = R_beta * (1.0 - gamma0) / (R_beta + 2)
    epsilon = min(coupling, contraction)

    cert = HarrisCertificate(gamma=gamma, K_d=K_d, t0=t0, alpha=alpha, R=R, alpha0=alpha0, gamma0=gamma0,
                             beta=beta, epsilon=epsilon)
    logger.info(f"Harris: gamma={gamma:.6g}, K_d={K_d:.6g}, R={R:.6g}, log alpha={alpha.log:.6g}, "
                f"log(1 - alpha_bar)={epsilon.log:.6g}, log rho={cert.log_rho:.6g}")
    return cert


def harris_from_certificates(drift: DriftCertificate, t0: float, alpha: Probability, R: float,
                             alpha0: Optional[Probability] = None,
                             gamma0: Optional[float] = None) -> HarrisCertificate:
    return harris_rate(drift.gamma_of_t0(t0), drift.K_d, t0, alpha, R, alpha0, gamma0)


def default_level(K_d: float, gamma: float) -> float:
    """R = 4 K_d / (1 - gamma), twice the smallest admissible level."""
    return 4.0 * K_d / (1.0 - gamma)


# ----------------------------------------------------------------------
# self-similar chain: g = x, B = x^b, uniform kernel, V = 1 + x^2
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SelfSimilarCertificate:
    b: float
    drift: DriftCertificate
    small_set: SelfSimilarSmallSet
    harris: HarrisCertificate

    @property
    def rho(self) -> LogReal:
        return self.harris.rho

    def closed_form_rho(self) -> LogReal:
        """-log(1 - alpha/(2(1 + 2 alpha)))/t0, the contraction at t0 = 2 log 2."""
        alpha = self.harris.alpha
        epsilon = alpha / (alpha * 4 + 2)
        return epsilon.neg_log1m() / self.harris.t0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "b": self.b,
            "drift": self.drift.to_dict(),
            "small_set": self.small_set.to_dict(),
            "harris": self.harris.to_dict(),
        }


def selfsim_certificate(b: float, t0: float = SELFSIM_T0) -> SelfSimilarCertificate:
    """Closed-form constant chain for g = x, B = x^b with V = 1 + x^2."""
    drift = selfsim_drift(b)
    gamma = drift.gamma_of_t0(t0)
    R = default_level(drift.K_d, gamma)
    small_set = SelfSimilarSmallSet(b=b, t0=t0, R=R)
    harris = harris_rate(gamma, drift.K_d, t0, small_set.alpha, R)
    logger.info(f"Self-similar chain b={b}: K_d={drift.K_d:.6g}, R={R:.6g}, log alpha={small_set.alpha.log:.6g}")
    return SelfSimilarCertificate(b=b, drift=drift, small_set=small_set, harris=harris)
