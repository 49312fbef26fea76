"""Stochastic Chebyshev steps: SK-ROCK, the damped diffusion, and mSK-ROCK.

Wiener increments are always supplied by the caller, so that different
methods can be compared on identical sample paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .rkc import DivergenceError, Drift, DriftPair, _guard, averaged_force
from .stages import StageParams

DIFFUSION_KINDS = ("vector", "diagonal", "matrix")


@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion term ``g(t, x)``.

    ``vector``: returns an ``(..., n)`` array driven by a scalar Wiener process.
    ``diagonal``: returns ``(..., n)``; component ``i`` is driven by ``W_i``.
    ``matrix``: returns ``(..., n, l)``.
    """

    kind: str
    g: Callable[[float, np.ndarray], np.ndarray]
    noise_dim: int

    def __post_init__(self):
        if self.kind not in DIFFUSION_KINDS:
            raise ValueError(f"unknown diffusion kind {self.kind!r}")
        if self.kind == "vector" and self.noise_dim != 1:
            raise ValueError("vector diffusion is driven by a single Wiener process")
        if self.noise_dim < 1:
            raise ValueError("noise_dim must be positive")


@dataclass
class StepStats:
    n_fF: int = 0
    n_fS: int = 0
    n_g: int = 0
    rho_F_est: float = float("nan")
    rho_S_est: float = float("nan")
    s_used: int = 0
    m_used: int = 0
    eta: float = float("nan")
    rho_est: float = float("nan")  # radius of the full drift (single-rate runs)


class _Counted:
    __slots__ = ("fn", "calls")

    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, t, x):
        self.calls += 1
        return self.fn(t, x)


def _as_dw(d: DiffusionSpec, dW, batch_shape):
    dW = np.asarray(dW, dtype=float)
    if d.kind == "vector" and dW.shape == batch_shape:
        dW = dW[..., None]
    if dW.shape[-1:] != (d.noise_dim,):
        raise ValueError(
            f"increment has trailing dimension {dW.shape[-1:]} but diffusion expects {d.noise_dim}"
        )
    return dW


def apply_noise(d: DiffusionSpec, gx, dW) -> np.ndarray:
    """``g(x) dW`` for any diffusion kind."""
    gx = np.asarray(gx, dtype=float)
    if d.kind == "matrix":
        if gx.shape[-1] != dW.shape[-1]:
            raise ValueError("diffusion matrix columns do not match the noise dimension")
        return np.einsum("...nl,...l->...n", gx, dW)
    if d.kind == "diagonal" and gx.shape[-1] != dW.shape[-1]:
        raise ValueError("diagonal diffusion needs one increment per component")
    return gx * dW


def _damped(f_F: Drift, p: StageParams, x, t, inject):
    """``(v_r - vbar_r) / eta`` for the injected vector ``inject = eta * G``."""
    alpha, beta_c, gamma, eta, th = p.alpha, p.beta_c, p.gamma, p.eta, p.theta1
    v_prev = x
    v = _guard(
        v_prev + alpha[1] * eta * f_F(t, v_prev + beta_c[1] * th * inject) + gamma[1] * th * inject,
        "damped diffusion",
        1,
    )
    w_prev = x
    w = _guard(w_prev + alpha[1] * eta * f_F(t, w_prev), "damped diffusion", 1)
    for j in range(2, p.r + 1):
        v, v_prev = beta_c[j] * v + gamma[j] * v_prev + alpha[j] * eta * f_F(t, v), v
        w, w_prev = beta_c[j] * w + gamma[j] * w_prev + alpha[j] * eta * f_F(t, w), w
        _guard(v, "damped diffusion", j)
        _guard(w, "damped diffusion", j)
    return (v - w) / eta


def damped_diffusion_vector(
    dp: DriftPair, d: DiffusionSpec, p: StageParams, x, t: float = 0.0
) -> np.ndarray:
    """Damped diffusion for a single noise channel; multiply by ``dW`` afterwards."""
    if d.kind != "vector":
        raise ValueError("vector mode requires a vector diffusion")
    if not p.eta > 0:
        raise ValueError("eta must be positive")
    x = np.asarray(x, dtype=float)
    return _damped(dp.f_F, p, x, t, p.eta * np.asarray(d.g(t, x), dtype=float))


def damped_diffusion_matrix(
    dp: DriftPair, d: DiffusionSpec, p: StageParams, x, t: float, dW
) -> np.ndarray:
    """Damped diffusion with ``eta g(x) dW`` injected; the result already contains ``dW``."""
    if d.kind not in ("matrix", "diagonal"):
        raise ValueError("matrix mode requires a matrix or diagonal diffusion")
    x = np.asarray(x, dtype=float)
    dW = _as_dw(d, dW, x.shape[:-1])
    return _damped(dp.f_F, p, x, t, p.eta * apply_noise(d, d.g(t, x), dW))


def _damped_columns(f_F, d, p, x, t, gx, dW):
    out = np.zeros_like(x)
    for j in range(d.noise_dim):
        out = out + _damped(f_F, p, x, t, p.eta * gx[..., :, j]) * dW[..., j : j + 1]
    return out


def _noise_term(f_F, d, p, x, t, dW, g, column_mode):
    gx = np.asarray(g(t, x), dtype=float)
    if d.kind == "vector":
        return _damped(f_F, p, x, t, p.eta * gx) * dW
    if column_mode and d.kind == "matrix":
        return _damped_columns(f_F, d, p, x, t, gx, dW)
    return _damped(f_F, p, x, t, p.eta * apply_noise(d, gx, dW))


def mskrock_step(
    dp: DriftPair,
    d: DiffusionSpec,
    p: StageParams,
    x,
    t: float,
    tau: float,
    dW,
    column_mode: bool = False,
) -> tuple[np.ndarray, StepStats]:
    """One mSK-ROCK step.

    ``column_mode`` damps each diffusion column separately (matrix kind only);
    it costs ``l`` times more fast evaluations and exists for cross-checks.
    """
    x = np.asarray(x, dtype=float)
    dW = _as_dw(d, dW, x.shape[:-1])
    fF = _Counted(dp.f_F)
    fS = _Counted(dp.f_S)
    g = _Counted(d.g)
    counted = DriftPair(fF, fS, dp.dimension)
    mu, nu, kappa = p.mu, p.nu, p.kappa

    Q = _guard(_noise_term(fF, d, p, x, t, dW, g, column_mode), "mskrock noise", 0)
    K_prev = x
    K = K_prev + mu[1] * tau * averaged_force(counted, p, K_prev + nu[1] * Q, t) + kappa[1] * Q
    _guard(K, "mskrock", 1)
    for j in range(2, p.s + 1):
        K, K_prev = nu[j] * K + kappa[j] * K_prev + mu[j] * tau * averaged_force(counted, p, K, t), K
        _guard(K, "mskrock", j)
    stats = StepStats(fF.calls, fS.calls, g.calls, s_used=p.s, m_used=p.m, eta=p.eta)
    return K, stats


def skrock_step(
    f: Drift, d: DiffusionSpec, p: StageParams, x, t: float, tau: float, dW
) -> np.ndarray:
    """One SK-ROCK step of ``dX = f dt + g dW`` using the outer coefficients of ``p``."""
    x = np.asarray(x, dtype=float)
    dW = _as_dw(d, dW, x.shape[:-1])
    mu, nu, kappa = p.mu, p.nu, p.kappa
    Q = apply_noise(d, d.g(t, x), dW)
    K_prev = x
    K = _guard(K_prev + mu[1] * tau * f(t, K_prev + nu[1] * Q) + kappa[1] * Q, "skrock", 1)
    for j in range(2, p.s + 1):
        K, K_prev = nu[j] * K + kappa[j] * K_prev + mu[j] * tau * f(t, K), K
        _guard(K, "skrock", j)
    return K


def skrock_step_split(
    dp: DriftPair, d: DiffusionSpec, p: StageParams, x, t: float, tau: float, dW
) -> tuple[np.ndarray, StepStats]:
    """SK-ROCK on ``f = f_F + f_S`` with evaluation counters."""
    fF = _Counted(dp.f_F)
    fS = _Counted(dp.f_S)
    g = _Counted(d.g)
    d_counted = replace(d, g=g)
    x_new = skrock_step(lambda tt, xx: fF(tt, xx) + fS(tt, xx), d_counted, p, x, t, tau, dW)
    return x_new, StepStats(fF.calls, fS.calls, g.calls, s_used=p.s, m_used=0)


# -- cost model ------------------------------------------------------------


@dataclass(frozen=True)
class CostEstimate:
    C_mskrock: float
    C_skrock: float
    speedup: float


def mskrock_cost(s: float, m: float, c_F: float, c_S: float) -> float:
    """Relative cost of one mSK-ROCK step, ``((s+1)m - 1) c_F + (s-1) c_S + 1``."""
    return ((s + 1.0) * m - 1.0) * c_F + (s - 1.0) * c_S + 1.0


def skrock_cost(s: float, c_F: float, c_S: float) -> float:
    return (s - 1.0) * (c_F + c_S) + 1.0


def cost_model(s: float, m: float, c_F: float, c_S: float) -> CostEstimate:
    """Costs and speed-up for real-valued stage numbers at ``eps = 0``.

    ``s`` and ``m`` are interpreted through ``s = sqrt(p_S/2)`` and
    ``m = sqrt(3 p_F/p_S + 1)``; SK-ROCK then needs ``sqrt((p_F + p_S)/2)``
    stages for the combined radius.
    """
    if c_F < 0 or c_S < 0 or c_F + c_S > 1.0 + 1e-15:
        raise ValueError("relative costs must satisfy c_F, c_S >= 0 and c_F + c_S <= 1")
    p_S = 2.0 * s * s
    p_F = (m * m - 1.0) * p_S / 3.0
    s_sk = math.sqrt((p_F + p_S) / 2.0)
    c_m = mskrock_cost(s, m, c_F, c_S)
    c_sk = skrock_cost(s_sk, c_F, c_S)
    return CostEstimate(c_m, c_sk, c_sk / c_m)


def speedup_from_radii(p_F: float, p_S: float, c_F: float, c_S: float) -> float:
    """Theoretical speed-up in terms of ``p_F = tau rho_F`` and ``p_S = tau rho_S``."""
    r2 = math.sqrt(2.0)
    num = (math.sqrt(p_F + p_S) - r2) * (c_F + c_S) + r2
    den = (
        ((math.sqrt(p_S) + r2) * math.sqrt(3.0 * p_F / p_S + 1.0) - r2) * c_F
        + (math.sqrt(p_S) - r2) * c_S
        + r2
    )
    return num / den


def expected_counts(s: int, m: int, kind: str = "vector", noise_dim: int = 1, column_mode: bool = False):
    """Symbolic ``(n_fF, n_fS, n_g)`` for one mSK-ROCK step."""
    cols = noise_dim if (column_mode and kind == "matrix") else 1
    return s * m + cols * m, s, 1
