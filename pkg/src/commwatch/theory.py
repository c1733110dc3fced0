"""Numerical evaluation of the asymptotic ARL bounds for the mixture rule.

The per-edge windowed LLR at lag tau is approximated by a Gaussian
g_tau(Z) = drift + scale*Z, pushed through the soft threshold h, and the
bounds are built from the cumulant generating function of h_tau(Z):

    psi(theta)  = log E[exp(theta * h_tau(Z))],   Z ~ N(0, 1)
    theta_tau solves  psi'(theta) = b / N

with an exponential-tilt correction gamma and the boundary-crossing
function nu.  All expectations are adaptive Gauss-Legendre quadratures on a
truncated z-range, evaluated in log space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import erf, logsumexp

_log = logging.getLogger(__name__)


@lru_cache(maxsize=16)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


class TheoryError(RuntimeError):
    """Quadrature non-convergence, missing tilt root, or failed bracketing."""


@dataclass(frozen=True)
class TheoryParams:
    p0: float
    p1: float
    alpha: float
    b: float
    n_nodes: int
    n_effective: Optional[float] = None  # defaults to n_nodes
    m0: int = 1
    m1: int = 200
    quad_tol: float = 1e-8
    z_range: float = 8.0

    def __post_init__(self):
        if not 0.0 < self.p0 < self.p1 < 1.0:
            raise ValueError("need 0 < p0 < p1 < 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha={self.alpha} outside (0, 1]")
        if self.b <= 0:
            raise ValueError("threshold b must be positive")
        if self.m0 < 1 or self.m1 < self.m0:
            raise ValueError("need 1 <= m0 <= m1")
        if self.n_effective is None:
            object.__setattr__(self, "n_effective", float(self.n_nodes))

    @classmethod
    def from_json_dict(cls, d: dict) -> "TheoryParams":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class TauProfile:
    """Gaussian approximation of the per-edge LLR at lag tau (tau may be real)."""

    tau: float
    p0: float
    p1: float
    drift: float = field(init=False)
    scale: float = field(init=False)

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        c0 = math.log(self.p1 / self.p0)
        c1 = math.log((1.0 - self.p1) / (1.0 - self.p0))
        object.__setattr__(self, "drift", self.tau * (self.p0 * (c0 - c1) + c1))
        object.__setattr__(
            self, "scale", math.sqrt(self.tau * (c0 - c1) ** 2 * self.p0 * (1.0 - self.p0))
        )


def _h_and_dh(g: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Soft threshold h(g) = log(1-a+a*e^g) and its derivative wrt g, stably."""
    if alpha == 1.0:
        return g, np.ones_like(g)
    h = np.where(
        g < 30.0,
        np.log1p(alpha * np.expm1(np.minimum(g, 30.0))),
        g + math.log(alpha) + np.log1p((1.0 - alpha) * np.exp(-np.maximum(g, 30.0)) / alpha),
    )
    # dh/dg = alpha*e^g / (1-a+a*e^g) = exp(g + log(alpha) - h)
    dh = np.exp(g + math.log(alpha) - h)
    return h, dh


def h_tau(x, profile: TauProfile, alpha: float):
    """h applied to the Gaussian LLR approximation drift + scale*x."""
    h, _ = _h_and_dh(np.asarray(x, dtype=float) * profile.scale + profile.drift, alpha)
    return float(h) if np.isscalar(x) else h


def h_tau_deriv(x, profile: TauProfile, alpha: float):
    """d/dx of h_tau: scale * h'(g_tau(x))."""
    _, dh = _h_and_dh(np.asarray(x, dtype=float) * profile.scale + profile.drift, alpha)
    out = profile.scale * dh
    return float(out) if np.isscalar(x) else out


class TiltedExpectations:
    """Cached Gauss-Legendre rule for expectations of functions of h_tau(Z).

    Node count is doubled until psi and its derivatives are stable to
    quad_tol (checked lazily at the first evaluated theta); the weights are
    normalized so that psi(0) = 0 exactly.
    """

    _START_NODES = 200
    _MAX_NODES = 6400

    def __init__(self, profile: TauProfile, alpha: float,
                 z_range: float = 8.0, quad_tol: float = 1e-8):
        self.profile = profile
        self.alpha = alpha
        self.z_range = z_range
        self.quad_tol = quad_tol
        self._n = self._START_NODES
        self._build(self._n)
        self._converged = False

    def _build(self, n: int) -> None:
        x, w = _leggauss(n)
        z = x * self.z_range
        logw = np.log(w * self.z_range) - 0.5 * z * z - 0.5 * math.log(2.0 * math.pi)
        logw -= logsumexp(logw)  # truncated-normal normalization: psi(0) = 0
        self._z = z
        self._logw = logw
        self._h, dh = _h_and_dh(z * self.profile.scale + self.profile.drift, self.alpha)
        self._dh = self.profile.scale * dh

    def _psi_raw(self, theta: float) -> tuple[float, float, float]:
        logits = theta * self._h + self._logw
        psi = logsumexp(logits)
        p = np.exp(logits - psi)  # tilted probability weights
        psi_dot = float(p @ self._h)
        psi_ddot = float(p @ (self._h * self._h)) - psi_dot * psi_dot
        return float(psi), psi_dot, max(psi_ddot, 0.0)

    def _ensure_converged(self, theta: float) -> None:
        if self._converged:
            return
        while True:
            ref = self._psi_raw(theta)
            self._build(2 * self._n)
            new = self._psi_raw(theta)
            # mixed absolute/relative: psi'' can legitimately be ~0 at large tau
            err = max(
                abs(new[i] - ref[i]) / (1.0 + abs(new[i])) for i in range(3)
            )
            if err <= self.quad_tol:
                self._converged = True
                return
            self._n *= 2
            if self._n > self._MAX_NODES:
                raise TheoryError(
                    f"quadrature did not converge to {self.quad_tol} "
                    f"(tau={self.profile.tau}, theta={theta})"
                )

    def psi(self, theta: float) -> tuple[float, float, float]:
        """(psi, psi', psi'') at theta (theta >= 0)."""
        if theta < 0:
            raise ValueError("theta must be nonnegative")
        self._ensure_converged(max(theta, 0.5))
        return self._psi_raw(theta)

    def gamma(self, theta: float) -> float:
        """Tilt correction: 0.5*theta^2 * E[(h_tau'(Z))^2 e^{theta h - psi}]."""
        if theta <= 0:
            raise ValueError("theta must be positive")
        self._ensure_converged(max(theta, 0.5))
        psi = logsumexp(theta * self._h + self._logw)
        tilted = np.exp(theta * self._h + self._logw - psi)
        return 0.5 * theta * theta * float(tilted @ (self._dh * self._dh))

    @property
    def psi_dot_sup(self) -> float:
        return float(np.max(self._h))


def psi(theta: float, profile: TauProfile, alpha: float,
        z_range: float = 8.0, quad_tol: float = 1e-8) -> tuple[float, float, float]:
    return TiltedExpectations(profile, alpha, z_range, quad_tol).psi(theta)


def gamma_fn(theta: float, profile: TauProfile, alpha: float,
             z_range: float = 8.0, quad_tol: float = 1e-8) -> float:
    return TiltedExpectations(profile, alpha, z_range, quad_tol).gamma(theta)


def solve_theta(exp_cache: TiltedExpectations, target: float,
                rel_tol: float = 1e-9) -> float:
    """Root of psi'(theta) = target by bracket expansion then bisection.

    Raises TheoryError when the target is below psi'(0) (subcritical
    threshold) or cannot be reached below theta = 1e3.
    """
    psi0_dot = exp_cache.psi(0.0)[1]
    if target <= psi0_dot:
        raise TheoryError(
            f"target {target} not above psi'(0) = {psi0_dot}: threshold too small"
        )
    if target >= exp_cache.psi_dot_sup:
        raise TheoryError(f"target {target} at/above sup h = {exp_cache.psi_dot_sup}")
    lo, hi = 0.0, 1e-6
    while exp_cache.psi(hi)[1] < target:
        lo, hi = hi, hi * 2.0
        if hi > 1e3:
            raise TheoryError(f"no tilt root below theta = 1e3 for target {target}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = exp_cache.psi(mid)[1]
        if abs(val - target) <= rel_tol * abs(target):
            return mid
        if val < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def big_H(n_effective: float, theta: float,
          psi_triple: tuple[float, float, float], gamma: float) -> tuple[float, float]:
    """H(N, theta) and its log (the log is what the bounds actually use)."""
    p, pd, pdd = psi_triple
    log_h = (
        math.log(theta)
        + 0.5 * math.log(2.0 * math.pi * pdd)
        - 2.0 * math.log(gamma)
        - 0.5 * math.log(n_effective)
        + n_effective * (theta * pd - p)
    )
    return math.exp(log_h) if log_h < 700 else math.inf, log_h


def nu_approx(x: float) -> float:
    """Boundary-crossing correction nu(x); nu(0+) = 1."""
    if x < 0:
        raise ValueError("nu is defined for x >= 0")
    if x == 0.0:
        return 1.0
    u = 0.5 * x
    # Phi(u) - 1/2 written via erf to avoid cancellation at small x
    num = (2.0 / x) * 0.5 * erf(u / math.sqrt(2.0))
    phi_u = math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    cdf_u = 0.5 * (1.0 + erf(u / math.sqrt(2.0)))
    return num / (u * cdf_u + phi_u)


def _lb_log_term(params: TheoryParams, tau: int) -> Optional[float]:
    """log of one tau term of the lower-bound sum, or None when no tilt root."""
    n = params.n_effective
    profile = TauProfile(float(tau), params.p0, params.p1)
    cache = TiltedExpectations(profile, params.alpha, params.z_range, params.quad_tol)
    try:
        theta = solve_theta(cache, params.b / n)
    except TheoryError as exc:
        _log.info("LB term tau=%d skipped: %s", tau, exc)
        return None
    gam = cache.gamma(theta)
    _, log_h = big_H(n, theta, cache.psi(theta), gam)
    nu = nu_approx(2.0 * n * math.sqrt(gam) / tau ** 2)
    if nu <= 0.0:
        return None
    return math.log(2.0 * n) + 2.0 * math.log(nu) - 2.0 * math.log(tau) - log_h


def arl_lower_bound(params: TheoryParams) -> float:
    """Reciprocal of the per-tau false-alarm intensity sum (integer tau)."""
    total = 0.0
    for tau in range(params.m0, params.m1 + 1):
        log_term = _lb_log_term(params, tau)
        if log_term is not None:
            total += math.exp(log_term)
    if total == 0.0:
        raise TheoryError("all lower-bound terms vanished: bound undefined")
    return 1.0 / total


def lb_term_profile(params: TheoryParams) -> list[dict]:
    """Per-tau diagnostics behind the lower bound (tau, theta, gamma, H, term)."""
    rows = []
    n = params.n_effective
    for tau in range(params.m0, params.m1 + 1):
        profile = TauProfile(float(tau), params.p0, params.p1)
        cache = TiltedExpectations(profile, params.alpha, params.z_range, params.quad_tol)
        try:
            theta = solve_theta(cache, params.b / n)
        except TheoryError:
            rows.append({"tau": tau, "theta": math.nan, "gamma": math.nan,
                         "log_H": math.nan, "term": 0.0})
            continue
        gam = cache.gamma(theta)
        h_val, log_h = big_H(n, theta, cache.psi(theta), gam)
        log_term = _lb_log_term(params, tau)
        rows.append({
            "tau": tau, "theta": theta, "gamma": gam, "log_H": log_h,
            "term": 0.0 if log_term is None else math.exp(log_term),
        })
    return rows


def _ub_integrand(params: TheoryParams) -> Callable[[float], float]:
    n = params.n_effective

    def integrand(y: float) -> float:
        tau = 2.0 * n / (y * y)
        profile = TauProfile(tau, params.p0, params.p1)
        cache = TiltedExpectations(profile, params.alpha, params.z_range, params.quad_tol)
        try:
            theta = solve_theta(cache, params.b / n)
        except TheoryError:
            return 0.0
        gam = cache.gamma(theta)
        _, log_h = big_H(n, theta, cache.psi(theta), gam)
        nu = nu_approx(y * math.sqrt(gam))
        if nu <= 0.0:
            return 0.0
        return math.exp(math.log(y) + 2.0 * math.log(nu) - log_h)

    return integrand


def arl_upper_bound(params: TheoryParams) -> float:
    """Reciprocal of the continuous-tau false-alarm intensity integral."""
    n = params.n_effective
    y_lo = math.sqrt(2.0 * n / params.m1)
    y_hi = math.sqrt(2.0 * n / params.m0)
    total, _ = quad(_ub_integrand(params), y_lo, y_hi, limit=200,
                    epsabs=0.0, epsrel=max(params.quad_tol, 1e-9) * 100)
    if total <= 0.0:
        raise TheoryError("upper-bound integral vanished: bound undefined")
    return 1.0 / total


def ub_integrand_profile(params: TheoryParams, n_samples: int = 200) -> list[dict]:
    """Sampled (y, tau, integrand) rows behind the upper-bound integral."""
    n = params.n_effective
    integrand = _ub_integrand(params)
    ys = np.linspace(math.sqrt(2.0 * n / params.m1), math.sqrt(2.0 * n / params.m0),
                     n_samples)
    return [{"y": float(y), "tau": 2.0 * n / (y * y), "integrand": integrand(float(y))}
            for y in ys]


def threshold_for_arl(params: TheoryParams, target_arl: float,
                      which: str = "LB", rel_tol: float = 5e-3) -> float:
    """Invert the chosen bound for the threshold b by bisection."""
    if target_arl <= 1.0:
        raise ValueError("target_arl must exceed 1")
    if which not in ("LB", "UB"):
        raise ValueError("which must be 'LB' or 'UB'")

    def bound_at(b: float) -> float:
        p = TheoryParams(params.p0, params.p1, params.alpha, b, params.n_nodes,
                         params.n_effective, params.m0, params.m1,
                         params.quad_tol, params.z_range)
        return arl_lower_bound(p) if which == "LB" else arl_upper_bound(p)

    lo, hi = 0.5, 2.0
    f_lo = bound_at(lo)
    f_hi = bound_at(hi)
    if f_hi < f_lo:
        raise TheoryError("bound not increasing in b during bracketing")
    while f_hi < target_arl:
        lo, f_lo = hi, f_hi
        hi *= 1.6
        if hi > 100.0:
            raise TheoryError("failed to bracket target ARL below b = 100")
        f_hi = bound_at(hi)
        if f_hi < f_lo:
            raise TheoryError("bound not increasing in b during bracketing")
    if f_lo > target_arl:
        raise TheoryError("target ARL below the bound at the minimum threshold")
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        val = bound_at(mid)
        if abs(val - target_arl) <= rel_tol * target_arl:
            return mid
        if val < target_arl:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
