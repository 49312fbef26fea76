"""Stage-count selection and per-step Chebyshev coefficients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chebyshev import cheb_T, cheb_T_prime, cheb_T_sequence, cheb_U_sequence
from .stability import StabilityPolyParams, damping_beta

DEFAULT_EPS = 0.05
SAFETY_FACTOR = 1.05


class StageSelectionError(ValueError):
    pass


def coupling_time(tau: float, s: int, m: int, eps: float) -> float:
    """``eta = 6 tau / (beta s^2) * m^2 / (m^2 - 1)``."""
    beta = damping_beta(eps)
    return 6.0 * tau / (beta * s * s) * m * m / (m * m - 1.0)


def _rkc_coefficients(n: int, eps: float):
    """Three-term recurrence coefficients of an ``n``-stage RKC scheme.

    Returns ``(w0, w1, t, mu, nu, kappa)`` with arrays indexed by stage
    ``j = 0..n`` (entries 0, and 1 for nu/kappa, left for the caller).
    """
    w0 = 1.0 + eps / n**2
    t = cheb_T_sequence(n, w0)
    w1 = t[n] / cheb_T_prime(n, w0)
    b = 1.0 / t
    mu = np.full(n + 1, np.nan)
    nu = np.full(n + 1, np.nan)
    kappa = np.full(n + 1, np.nan)
    mu[1] = w1 / w0
    for j in range(2, n + 1):
        mu[j] = 2.0 * w1 * b[j] / b[j - 1]
        nu[j] = 2.0 * w0 * b[j] / b[j - 1]
        kappa[j] = -b[j] / b[j - 2]
    return w0, w1, b, mu, nu, kappa


@dataclass(frozen=True)
class StageParams:
    """Everything one multirate step needs, built once per ``(tau, s, m, eps)``.

    Outer arrays ``mu, nu, kappa`` and inner arrays ``alpha, beta_c, gamma``
    are indexed by stage number (index 0 unused).  ``nu[1], kappa[1]`` hold
    the SK-ROCK first-stage noise coefficients; ``beta_c[1], gamma[1]`` and
    ``theta1`` the noise-injection coefficients of the damped diffusion.
    """

    s: int
    m: int
    tau: float
    eta: float
    eps: float
    beta: float
    mu: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    b: np.ndarray
    alpha: np.ndarray
    beta_c: np.ndarray
    gamma: np.ndarray
    theta1: float
    outer_poly: StabilityPolyParams
    inner_poly: StabilityPolyParams

    @property
    def r(self) -> int:
        return self.m // 2

    @classmethod
    def build(cls, s: int, m: int, tau: float, eps: float = DEFAULT_EPS) -> "StageParams":
        if s < 1:
            raise StageSelectionError("s must be >= 1")
        if m < 2 or m % 2:
            raise StageSelectionError("m must be even and >= 2")
        if not tau > 0:
            raise StageSelectionError("tau must be positive")
        w0, w1, b, mu, nu, kappa = _rkc_coefficients(s, eps)
        nu[1] = s * w1 / 2.0
        kappa[1] = s * w1 / w0
        v0, v1, a, alpha, beta_c, gamma = _rkc_coefficients(m, eps)
        r = m // 2
        beta_c[1] = m * v1 / 2.0
        gamma[1] = m * v1 / v0
        theta1 = cheb_T(r, v0) / (2.0 * v1 * cheb_T_prime(r, v0))
        for arr in (mu, nu, kappa, b, alpha, beta_c, gamma):
            arr.setflags(write=False)
        return cls(
            s=int(s),
            m=int(m),
            tau=float(tau),
            eta=coupling_time(tau, s, m, eps),
            eps=float(eps),
            beta=damping_beta(eps),
            mu=mu,
            nu=nu,
            kappa=kappa,
            b=b,
            alpha=alpha,
            beta_c=beta_c,
            gamma=gamma,
            theta1=theta1,
            outer_poly=StabilityPolyParams(s, float(eps), w0, w1),
            inner_poly=StabilityPolyParams(m, float(eps), v0, v1),
        )

    def rebuild(self) -> "StageParams":
        return StageParams.build(self.s, self.m, self.tau, self.eps)


def _check_radius(name, rho):
    if not math.isfinite(rho) or rho < 0:
        raise StageSelectionError(f"{name} must be finite and nonnegative, got {rho!r}")


def min_outer_stages(tau: float, rho: float, eps: float = DEFAULT_EPS) -> int:
    """Smallest ``s >= 1`` with ``beta s^2 >= tau rho``."""
    beta = damping_beta(eps)
    x = tau * rho
    s = max(1, math.ceil(math.sqrt(x / beta)))
    while s > 1 and beta * (s - 1) ** 2 >= x:
        s -= 1
    while beta * s * s < x:
        s += 1
    return s


def min_inner_stages(tau: float, rho_F: float, s: int, eps: float = DEFAULT_EPS) -> int:
    """Smallest even ``m >= 2`` with ``beta (m^2 - 1) >= 6 tau rho_F / (beta s^2)``."""
    beta = damping_beta(eps)
    x = 6.0 * tau * rho_F / (beta * s * s)
    m = max(2, math.ceil(math.sqrt(x / beta + 1.0)))
    while m > 2 and beta * ((m - 1) ** 2 - 1.0) >= x:
        m -= 1
    while beta * (m * m - 1.0) < x:
        m += 1
    return m + (m % 2)


def select_stages(tau: float, rho_F: float, rho_S: float, eps: float = DEFAULT_EPS) -> StageParams:
    """Stage counts satisfying ``tau rho_S <= beta s^2`` and ``eta rho_F <= beta m^2``.

    The radii are used as given; callers feeding power-method estimates apply
    :data:`SAFETY_FACTOR` themselves.
    """
    if not (math.isfinite(tau) and tau > 0):
        raise StageSelectionError("tau must be positive and finite")
    _check_radius("rho_F", rho_F)
    _check_radius("rho_S", rho_S)
    s = min_outer_stages(tau, rho_S, eps)
    m = min_inner_stages(tau, rho_F, s, eps)
    return StageParams.build(s, m, tau, eps)


def select_skrock_stages(tau: float, rho: float, eps: float = DEFAULT_EPS) -> StageParams:
    """Single-rate SK-ROCK stages from the radius of the full drift (``m = 2`` is unused)."""
    if not (math.isfinite(tau) and tau > 0):
        raise StageSelectionError("tau must be positive and finite")
    _check_radius("rho", rho)
    return StageParams.build(min_outer_stages(tau, rho, eps), 2, tau, eps)


@dataclass(frozen=True)
class ConsistencyReport:
    weights: np.ndarray
    total: float
    min_weight: float

    def ok(self, tol: float = 1e-12, neg_tol: float = 1e-14) -> bool:
        return abs(self.total - 1.0) <= tol and self.min_weight >= -neg_tol


def stage_abscissae_check(p: StageParams) -> ConsistencyReport:
    """Weights ``(b_s/b_k) U_{s-k}(w0) mu_k`` of the outer scheme; they sum to one."""
    s = p.s
    u = cheb_U_sequence(s - 1, p.outer_poly.omega0)
    k = np.arange(1, s + 1)
    w = p.b[s] / p.b[k] * u[s - k] * p.mu[k]
    return ConsistencyReport(w, float(w.sum()), float(w.min()))
