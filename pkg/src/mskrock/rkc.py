"""Deterministic Chebyshev steps: RKC, the discrete averaged force, and mRKC.

States are numpy arrays whose last axis is the state dimension; any leading
axes are treated as independent copies (e.g. Monte-Carlo paths).  Drift
callables take ``(t, x)``.  Nonautonomous drifts are frozen at the step's
base time for every stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .stages import StageParams

Drift = Callable[[float, np.ndarray], np.ndarray]


class DivergenceError(FloatingPointError):
    """A stage produced a non-finite value.

    ``index`` is the leading-axis position of the first offending state when
    the step ran on a stack of states.
    """

    def __init__(self, where: str, stage: int, index: tuple = ()):
        at = f" (state {index})" if index else ""
        super().__init__(f"non-finite value in {where} at stage {stage}{at}")
        self.where = where
        self.stage = stage
        self.index = index


@dataclass(frozen=True)
class DriftPair:
    f_F: Drift
    f_S: Drift
    dimension: int

    def full(self, t, x):
        return self.f_F(t, x) + self.f_S(t, x)


def _guard(x, where, stage):
    ok = np.isfinite(x)
    if not ok.all():
        bad = np.argwhere(~ok)[0][:-1] if np.ndim(x) > 1 else ()
        raise DivergenceError(where, stage, tuple(int(i) for i in bad))
    return x


def rkc_step(p: StageParams, f: Drift, y, tau: float, t: float = 0.0) -> np.ndarray:
    """One ``s``-stage RKC step of ``y' = f(t, y)`` using the outer coefficients of ``p``."""
    mu, nu, kappa = p.mu, p.nu, p.kappa
    k_prev = np.asarray(y, dtype=float)
    k = _guard(k_prev + mu[1] * tau * f(t, k_prev), "rkc", 1)
    for j in range(2, p.s + 1):
        k, k_prev = nu[j] * k + kappa[j] * k_prev + mu[j] * tau * f(t, k), k
        _guard(k, "rkc", j)
    return k


def averaged_force(dp: DriftPair, p: StageParams, y, t: float = 0.0) -> np.ndarray:
    """Discrete averaged force ``(u_eta - y) / eta``.

    ``u_eta`` is one ``m``-stage RKC step of length ``eta`` for
    ``u' = f_F(u) + f_S(y)`` with the slow force evaluated once and frozen.
    """
    if not p.eta > 0:
        raise ValueError("eta must be positive")
    alpha, beta_c, gamma, eta = p.alpha, p.beta_c, p.gamma, p.eta
    y = np.asarray(y, dtype=float)
    fs = dp.f_S(t, y)
    u_prev = y
    u = _guard(u_prev + alpha[1] * eta * (dp.f_F(t, u_prev) + fs), "averaged force", 1)
    for j in range(2, p.m + 1):
        u, u_prev = beta_c[j] * u + gamma[j] * u_prev + alpha[j] * eta * (dp.f_F(t, u) + fs), u
        _guard(u, "averaged force", j)
    return (u - y) / eta


def mrkc_step(dp: DriftPair, p: StageParams, y, t: float, tau: float) -> np.ndarray:
    """One mRKC step: the outer RKC recurrence driven by the averaged force."""
    mu, nu, kappa = p.mu, p.nu, p.kappa
    k_prev = np.asarray(y, dtype=float)
    k = _guard(k_prev + mu[1] * tau * averaged_force(dp, p, k_prev, t), "mrkc", 1)
    for j in range(2, p.s + 1):
        k, k_prev = nu[j] * k + kappa[j] * k_prev + mu[j] * tau * averaged_force(dp, p, k, t), k
        _guard(k, "mrkc", j)
    return k


def exact_averaged_force_oracle(lam: float, zeta: float, eta: float, y):
    """Continuous averaged force ``phi(eta lam)(lam + zeta) y`` of the linear test problem."""
    from .stability import phi

    if eta < 0:
        raise ValueError("eta must be nonnegative")
    return phi(eta * lam) * (lam + zeta) * np.asarray(y, dtype=float)
