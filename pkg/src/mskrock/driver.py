"""Fixed-step time integration of split problems over stacks of sample paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problems import SplitSdeProblem
from .rkc import DriftPair, mrkc_step
from .skrock import StepStats, _Counted, mskrock_step, skrock_step_split
from .spectral import estimate_radius_batch
from .stages import (
    DEFAULT_EPS,
    SAFETY_FACTOR,
    StageParams,
    select_skrock_stages,
    select_stages,
)

METHODS = ("mskrock", "skrock", "mrkc")


@dataclass(frozen=True)
class StageControl:
    """How stages are chosen each step.

    With ``fixed = (s, m)`` no spectral estimation happens.  Otherwise the
    radii are re-estimated every ``cadence`` steps (warm-started), multiplied
    by ``safety``, and fed to the stage selector.
    """

    fixed: Optional[tuple[int, int]] = None
    eps: float = DEFAULT_EPS
    safety: float = SAFETY_FACTOR
    cadence: int = 1
    tol: float = 1e-2
    max_iter: int = 100


@dataclass
class IntegrationResult:
    x: np.ndarray
    steps: list[StepStats]
    trajectory: Optional[np.ndarray] = None

    def totals(self) -> tuple[int, int, int]:
        return (
            sum(st.n_fF for st in self.steps),
            sum(st.n_fS for st in self.steps),
            sum(st.n_g for st in self.steps),
        )


def n_steps_for(horizon: float, tau: float) -> int:
    n = horizon / tau
    N = int(round(n))
    if N < 1 or abs(n - N) > 1e-9 * max(1.0, n):
        raise ValueError(f"step size {tau} does not divide the horizon {horizon}")
    return N


class _RadiusTracker:
    def __init__(self, fn, control: StageControl):
        self.fn = fn
        self.control = control
        self.warm = None
        self.rho = math.nan

    def update(self, t, x):
        rho, _, self.warm = estimate_radius_batch(
            lambda y: self.fn(t, y), x, self.warm, self.control.tol, self.control.max_iter
        )
        self.rho = float(rho.max())
        return self.rho


def integrate(
    problem: SplitSdeProblem,
    method: str,
    tau: float,
    dW: Optional[np.ndarray] = None,
    control: StageControl = StageControl(),
    x0: Optional[np.ndarray] = None,
    n_paths: Optional[int] = None,
    record: bool = False,
    column_mode: bool = False,
) -> IntegrationResult:
    """Integrate ``problem`` on ``[0, horizon]`` with step ``tau``.

    ``dW`` has shape ``(P, N, l)`` (``P`` paths, ``N`` steps, ``l`` noise
    channels).  ``mrkc`` ignores the noise and needs no increments.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    N = n_steps_for(problem.horizon, tau)
    if dW is not None:
        dW = np.asarray(dW, dtype=float)
        if dW.ndim != 3 or dW.shape[1] != N or dW.shape[2] != problem.noise_dim:
            raise ValueError(f"increments must have shape (P, {N}, {problem.noise_dim}), got {dW.shape}")
        P = dW.shape[0]
    elif method == "mrkc":
        P = 1 if n_paths is None else n_paths
    else:
        raise ValueError("stochastic methods need Wiener increments")

    x = np.broadcast_to(problem.x0 if x0 is None else np.asarray(x0, float), (P, problem.dimension)).copy()
    dp = problem.drift
    d = problem.diffusion
    traj = np.empty((N + 1,) + x.shape) if record else None
    if record:
        traj[0] = x

    rho_F = _RadiusTracker(dp.f_F, control)
    rho_S = _RadiusTracker(dp.f_S, control)
    rho_f = _RadiusTracker(problem.f, control)
    params: Optional[StageParams] = None
    if control.fixed is not None:
        s, m = control.fixed
        params = StageParams.build(s, m, tau, control.eps)

    steps = []
    for n in range(N):
        t = n * tau
        if control.fixed is None and n % control.cadence == 0:
            if method == "skrock":
                params = select_skrock_stages(tau, control.safety * rho_f.update(t, x), control.eps)
            else:
                params = select_stages(
                    tau,
                    control.safety * rho_F.update(t, x),
                    control.safety * rho_S.update(t, x),
                    control.eps,
                )
        if method == "mskrock":
            x, st = mskrock_step(dp, d, params, x, t, tau, dW[:, n], column_mode=column_mode)
        elif method == "skrock":
            x, st = skrock_step_split(dp, d, params, x, t, tau, dW[:, n])
        else:
            fF, fS = _Counted(dp.f_F), _Counted(dp.f_S)
            x = mrkc_step(DriftPair(fF, fS, dp.dimension), params, x, t, tau)
            st = StepStats(fF.calls, fS.calls, 0, s_used=params.s, m_used=params.m, eta=params.eta)
        if method == "skrock":
            st.rho_est = rho_f.rho
        else:
            st.rho_F_est, st.rho_S_est = rho_F.rho, rho_S.rho
        steps.append(st)
        if record:
            traj[n + 1] = x
    return IntegrationResult(x, steps, traj)


def weighted_cost(steps: list[StepStats], weights: tuple[float, float, float]) -> float:
    """Evaluation count weighted by the per-call work of ``(f_F, f_S, g)``."""
    wF, wS, wg = weights
    return float(sum(st.n_fF * wF + st.n_fS * wS + st.n_g * wg for st in steps))
