"""
Finite-state oracle for the certificate calculus.

Brute-force checks of the Doeblin and Harris contraction bounds on small
row-stochastic matrices, with the constants taken from doeblin_rate and
harris_rate.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from src.certificates.harris import doeblin_rate, harris_rate
from src.utils.errors import CertificateError, ConfigError, DomainError
from src.utils.workers import worker_pool

logger = logging.getLogger(__name__)

MAX_STATES = 12
STOCHASTIC_TOL = 1e-12
DOEBLIN_STEPS = 10
BOUND_RTOL = 1e-12
BOUND_ATOL = 1e-14

CHAINS = ("random", "identity", "birth-death", "constant-column")


@dataclass
class FiniteChain:
    """P with a drift weight V satisfying PV <= gamma V + K and a small-set level R."""

    name: str
    P: np.ndarray
    V: np.ndarray
    gamma: float
    K: float
    R: float
    steps: int = 1

    def __post_init__(self):
        check_stochastic(self.P)
        if self.V.shape != (self.P.shape[0],) or np.any(self.V < 1.0):
            raise DomainError("V must be a vector of weights >= 1, one per state")


def check_stochastic(P: np.ndarray) -> None:
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise DomainError(f"P must be square, got shape {P.shape}")
    if P.shape[0] > MAX_STATES:
        raise DomainError(f"the oracle handles at most {MAX_STATES} states, got {P.shape[0]}")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
        raise DomainError("P must be nonnegative with rows summing to 1")


# ----------------------------------------------------------------------
# chains
# ----------------------------------------------------------------------

def random_chain(n: int, rng: np.random.Generator) -> FiniteChain:
    P = rng.dirichlet(np.ones(n), size=n)
    V = 1.0 + 9.0 * rng.random(n)
    gamma = 0.5
    K = max(float(np.max(P @ V - gamma * V)), 1e-12)
    return FiniteChain("random", P, V, gamma, K, 4.0 * K / (1.0 - gamma))


def identity_chain(n: int) -> FiniteChain:
    return FiniteChain("identity", np.eye(n), np.ones(n), 0.5, 0.5, 4.0)


def birth_death_chain(n: int = 5, down: float = 0.6, up: float = 0.1) -> FiniteChain:
    """Lazy walk reflected at both ends; V(i) = 2^i gives PV <= 0.8 V + 1."""
    P = np.zeros((n, n))
    for i in range(n):
        P[i, max(i - 1, 0)] += down
        P[i, min(i + 1, n - 1)] += up
        P[i, i] += 1.0 - down - up
    return FiniteChain("birth-death", P, 2.0 ** np.arange(n), 0.8, 1.0, 20.0, steps=4)


def constant_column_chain(n: int, rng: np.random.Generator, c: float = 0.3) -> FiniteChain:
    rest = rng.dirichlet(np.ones(n - 1), size=n) * (1.0 - c)
    P = np.hstack([np.full((n, 1), c), rest])
    V = np.ones(n)
    gamma = 0.5
    K = max(float(np.max(P @ V - gamma * V)), 1e-12)
    return FiniteChain("constant-column", P, V, gamma, K, 4.0 * K / (1.0 - gamma))


def build_chain(name: str, n: int, rng: np.random.Generator) -> FiniteChain:
    if name == "random":
        return random_chain(n, rng)
    if name == "identity":
        return identity_chain(n)
    if name == "birth-death":
        return birth_death_chain(n)
    if name == "constant-column":
        return constant_column_chain(n, rng)
    raise ConfigError(f"chain must be one of {CHAINS}, got {name!r}")


# ----------------------------------------------------------------------
# checks
# ----------------------------------------------------------------------

def doeblin_alpha(P: np.ndarray) -> float:
    """Largest alpha with P(i, .) >= alpha nu for all i: sum_j min_i P_ij."""
    return float(np.sum(np.min(P, axis=0)))


def zero_mass_pairs(n: int, trials: int, rng: np.random.Generator) -> np.ndarray:
    """Rows mu1 - mu2 for random probability vectors mu1, mu2."""
    return rng.dirichlet(np.ones(n), size=trials) - rng.dirichlet(np.ones(n), size=trials)


def doeblin_check(P: np.ndarray, pairs: np.ndarray, steps: int = DOEBLIN_STEPS) -> Dict[str, Any]:
    alpha = doeblin_alpha(P)
    norms = np.abs(pairs).sum(axis=1)

    def one(n_steps: int):
        bound = (1.0 - alpha) ** n_steps
        pushed = pairs @ np.linalg.matrix_power(P, n_steps)
        ratios = np.abs(pushed).sum(axis=1) / norms
        violations = int(np.count_nonzero(ratios > bound * (1.0 + BOUND_RTOL) + BOUND_ATOL))
        return {"n": n_steps, "bound": bound, "worst_ratio": float(np.max(ratios)), "violations": violations}

    per_step = worker_pool.map(one, range(1, steps + 1))
    report = {
        "alpha_star": alpha,
        "steps": per_step,
        "violations": sum(s["violations"] for s in per_step),
        "contraction": alpha > 0,
    }
    if alpha > 0:
        C, rho = doeblin_rate(min(alpha, 1.0 - 1e-15), 1.0)
        report.update({"C": C.to_float(), "rho": rho.to_float()})
    else:
        report["status"] = "Doeblin failure: no uniform minorisation"
    return report


def harris_check(chain: FiniteChain, pairs: np.ndarray) -> Dict[str, Any]:
    P, V = chain.P, chain.V
    drift_gap = float(np.max(P @ V - chain.gamma * V - chain.K))
    if drift_gap > BOUND_ATOL * max(1.0, float(np.max(V))):
        raise CertificateError(f"PV <= gamma V + K fails by {drift_gap:.3e}")

    m = chain.steps
    Q = np.linalg.matrix_power(P, m)
    gamma_m = chain.gamma ** m
    K_m = chain.K * sum(chain.gamma ** j for j in range(m))
    small = V <= chain.R
    if not np.any(small):
        return {"status": "empty small set", "violations": 0}
    floor = np.min(Q[small], axis=0)
    alpha = float(floor.sum())
    if alpha <= 0:
        return {"status": "no minorisation on the small set", "alpha": 0.0, "violations": 0}

    cert = harris_rate(gamma_m, K_m, float(m), min(alpha, 1.0), chain.R)
    beta = cert.beta.to_float()
    alpha_bar = cert.alpha_bar.to_float()
    weight = 1.0 + beta * V
    norms = np.abs(pairs) @ weight
    ratios = (np.abs(pairs @ Q) @ weight) / norms
    violations = int(np.count_nonzero(ratios > alpha_bar * (1.0 + BOUND_RTOL) + BOUND_ATOL))
    return {
        "steps": m,
        "gamma": gamma_m,
        "K": K_m,
        "R": chain.R,
        "alpha": alpha,
        "beta": beta,
        "alpha_bar": alpha_bar,
        "worst_ratio": float(np.max(ratios)),
        "violations": violations,
    }


def finite_chain_oracle(chain: FiniteChain, trials: int, rng: np.random.Generator) -> Dict[str, Any]:
    """Doeblin and Harris contraction checks over random zero-mass pairs."""
    pairs = zero_mass_pairs(chain.P.shape[0], trials, rng)
    doeblin = doeblin_check(chain.P, pairs)
    harris = harris_check(chain, pairs)
    violations = doeblin["violations"] + harris["violations"]
    if violations:
        logger.error(f"Oracle ({chain.name}): {violations} contractions exceed the theorem bound")
    else:
        logger.info(f"Oracle ({chain.name}, n={chain.P.shape[0]}): no violations over {trials} pairs")
    return {
        "chain": chain.name,
        "n": int(chain.P.shape[0]),
        "trials": trials,
        "doeblin": doeblin,
        "harris": harris,
        "violations": violations,
    }


def run_oracle(n: int, trials: int, seed: int, chain: Optional[str] = None) -> Dict[str, Any]:
    """Deterministic oracle run; the identity chain is used for n <= 2 unless a chain is named."""
    if not 1 <= n <= MAX_STATES:
        raise ConfigError(f"n must lie in [1, {MAX_STATES}], got {n}")
    if trials < 1:
        raise ConfigError(f"trials must be positive, got {trials}")
    rng = np.random.default_rng(seed)
    name = chain or ("identity" if n <= 2 else "random")
    return finite_chain_oracle(build_chain(name, n, rng), trials, rng)
