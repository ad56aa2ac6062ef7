"""
Characteristic flow of x' = g(x).

H(x) = int_1^x 1/g, X_t(x0) = H^{-1}(t + H(x0)), the boundary value X_t(0)
and the Jacobian weight of the backward flow. Power laws use closed forms;
tables use quadrature, a bracketed root-find and an embedded RK45 solver.
"""

import logging
import math

import numpy as np
from scipy import integrate, optimize

from src.models.coefficients import Coefficients
from src.utils.errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

ODE_TOL = 1e-10
ROOT_MAX_ITER = 60


def _output(values, scalar: bool):
    return float(values) if scalar else values


class FlowMap:
    """Exact characteristics for a fixed set of coefficients."""

    def __init__(self, coeffs: Coefficients):
        if not coeffs.has_growth:
            raise DomainError("the pure-fragmentation configuration g = 0 has no characteristic flow")
        self.coeffs = coeffs
        self.closed_form = coeffs.is_power_law
        if self.closed_form:
            p = coeffs.params
            if p.a > 1.0:
                raise DomainError(f"g = g0 x^{p.a} blows up in finite time (a > 1)")
            self._a, self._g0 = p.a, p.g0
            self.H0 = -math.inf if p.a >= 1.0 else -1.0 / (p.g0 * (1.0 - p.a))
        else:
            slope_lo, slope_hi, x_lo = coeffs.g_tail_exponents()
            if slope_hi > 1.0:
                raise DomainError("tabulated g grows faster than x at infinity")
            if slope_lo >= 1.0:
                self.H0 = -math.inf
            else:
                tail = x_lo / (float(coeffs.g(x_lo)) * (1.0 - slope_lo))
                self.H0 = float(self.H(x_lo)) - tail
        logger.debug(f"FlowMap ready (closed form: {self.closed_form}, H0 = {self.H0})")

    # ------------------------------------------------------------------
    # H and its inverse
    # ------------------------------------------------------------------

    def H(self, x):
        """int_1^x dy / g(y)."""
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("H(x) needs x > 0")
        if self.closed_form:
            if self._a == 1.0:
                out = np.log(x) / self._g0
            else:
                out = (x ** (1.0 - self._a) - 1.0) / (self._g0 * (1.0 - self._a))
            return _output(out, scalar)
        out = np.array([self._h_quad(v) for v in np.atleast_1d(x)]).reshape(x.shape)
        return _output(out, scalar)

    def _h_quad(self, x: float) -> float:
        value, _ = integrate.quad(lambda u: math.exp(u) / float(self.coeffs.g(math.exp(u))),
                                  0.0, math.log(x), epsabs=1e-13, epsrel=1e-12, limit=200)
        return value

    def H_inv(self, y):
        scalar = np.ndim(y) == 0
        y = np.asarray(y, dtype=float)
        if np.any(y <= self.H0):
            raise DomainError(f"H^-1 is only defined above H(0+) = {self.H0}")
        if self.closed_form:
            if self._a == 1.0:
                out = np.exp(self._g0 * y)
            else:
                out = (1.0 + self._g0 * (1.0 - self._a) * y) ** (1.0 / (1.0 - self._a))
            return _output(out, scalar)
        out = np.array([self._h_root(v) for v in np.atleast_1d(y)]).reshape(y.shape)
        return _output(out, scalar)

    def _h_root(self, y: float) -> float:
        lo = hi = 0.0
        for _ in range(2000):
            if self._h_quad(math.exp(lo)) <= y:
                break
            lo -= 1.0
        for _ in range(2000):
            if self._h_quad(math.exp(hi)) >= y:
                break
            hi += 1.0
        try:
            root = optimize.brentq(lambda u: self._h_quad(math.exp(u)) - y, lo, hi,
                                   maxiter=ROOT_MAX_ITER, xtol=1e-14)
        except (RuntimeError, ValueError) as e:
            raise ConvergenceError(f"H^-1({y}) root-find failed: {e}")
        return math.exp(root)

    # ------------------------------------------------------------------
    # flow
    # ------------------------------------------------------------------

    def flow(self, t: float, x0):
        """X_t(x0) for either sign of t; X_t(0) per the two-case boundary rule."""
        scalar = np.ndim(x0) == 0
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if np.any(x0 < 0):
            raise DomainError("flow needs x0 >= 0")
        t = float(t)
        out = np.empty_like(x0)

        at_zero = x0 == 0.0
        if np.any(at_zero):
            if self.H0 == -math.inf:
                out[at_zero] = 0.0
            elif t < 0:
                raise DomainError("backward flow from 0 leaves (0, inf)")
            elif t == 0:
                out[at_zero] = 0.0
            else:
                out[at_zero] = self.H_inv(t + self.H0)

        inner = ~at_zero
        if np.any(inner):
            xs = x0[inner]
            if t == 0.0:
                out[inner] = xs
            else:
                if t < 0 and self.H0 != -math.inf and np.any(t + self.H(xs) <= self.H0):
                    raise DomainError(f"backward flow by {t} exits (0, inf)")
                out[inner] = self._flow_positive(t, xs)
        return _output(out[0], True) if scalar else out

    def _flow_positive(self, t: float, xs: np.ndarray) -> np.ndarray:
        if self.closed_form:
            return self.H_inv(t + self.H(xs))
        solution = integrate.solve_ivp(
            lambda _, y: self.coeffs.g(np.maximum(y, 1e-300)),
            (0.0, t), xs, method="RK45", rtol=ODE_TOL, atol=ODE_TOL,
        )
        if not solution.success:
            raise ConvergenceError(f"characteristic ODE failed: {solution.message}")
        return solution.y[:, -1]

    def flow_clamped(self, t: float, x):
        """Backward flow where defined, 0 where the characteristic has left (0, inf)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if t >= 0 or self.H0 == -math.inf:
            return self.flow(t, x)
        out = np.zeros_like(x)
        alive = x > 0
        alive[alive] = t + self.H(x[alive]) > self.H0
        if np.any(alive):
            out[alive] = self.flow(t, x[alive])
        return out

    # ------------------------------------------------------------------
    # Jacobian
    # ------------------------------------------------------------------

    def jacobian_weight(self, t: float, x, method: str = "auto"):
        """
        d/dx X_{-t}(x) = exp(-int_0^t g'(X_{-tau}(x)) dtau).

        Args:
            t: Nonnegative time
            x: Point(s) above X_t(0)
            method: "auto", "analytic" (power laws) or "quadrature"

        Returns:
            Positive weight(s)
        """
        if t < 0:
            raise DomainError("jacobian_weight needs t >= 0")
        scalar = np.ndim(x) == 0
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x <= self.flow(t, 0.0)):
            raise DomainError("jacobian_weight needs x > X_t(0)")
        if method == "auto":
            method = "analytic" if self.closed_form else "quadrature"
        if method == "analytic":
            if not self.closed_form:
                raise DomainError("analytic Jacobian is only available for power laws")
            out = self.coeffs.g(self.flow(-t, x)) / self.coeffs.g(x)
        else:
            out = np.array([self._jacobian_quad(t, v) for v in x])
        return _output(out[0], True) if scalar else out

    def _jacobian_quad(self, t: float, x: float) -> float:
        if t == 0:
            return 1.0
        integral, _ = integrate.quad(lambda tau: float(self.coeffs.g_prime(self.flow(-tau, x))),
                                     0.0, t, epsabs=1e-13, epsrel=1e-11, limit=200)
        return math.exp(-integral)


def flow_sublinearity_holds(flow_map: FlowMap, omegas, xs, ts) -> bool:
    """omega X_t(x) < X_t(omega x) on every sampled (omega, x, t)."""
    for t in ts:
        for omega in omegas:
            lhs = omega * flow_map.flow(t, np.asarray(xs, dtype=float))
            rhs = flow_map.flow(t, omega * np.asarray(xs, dtype=float))
            if not np.all(lhs < rhs):
                logger.info(f"Flow sublinearity fails at t={t}, omega={omega}")
                return False
    return True
