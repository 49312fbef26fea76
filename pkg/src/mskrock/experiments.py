"""Cost sweeps comparing mSK-ROCK with SK-ROCK on common sample paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .driver import IntegrationResult, StageControl, integrate, n_steps_for, weighted_cost
from .montecarlo import generate_paths
from .problems import ReactionNetwork, SplitSdeProblem, make_refined_heat, network_problem
from .skrock import expected_counts


@dataclass
class SweepRow:
    key: float
    rho_F: float
    rho_S: float
    rho: float
    mean_s: float
    mean_m: float
    mean_s_skrock: float
    n_fF: int
    n_fS: int
    n_g: int
    n_f_skrock: int
    n_g_skrock: int
    cost_mskrock: float
    cost_skrock: float
    speedup: float
    rel_l2_diff: float
    counts_match: bool
    extra: dict = field(default_factory=dict)


SWEEP_COLUMNS = [
    "key", "rho_F", "rho_S", "rho", "mean_s", "mean_m", "mean_s_skrock",
    "n_fF", "n_fS", "n_g", "n_f_skrock", "n_g_skrock",
    "cost_mskrock", "cost_skrock", "speedup", "rel_l2_diff", "counts_match",
]


def counts_consistent(res: IntegrationResult, method: str, kind: str, noise_dim: int) -> bool:
    """True when every step's counters agree with the symbolic per-step cost."""
    for st in res.steps:
        if method == "mskrock":
            want = expected_counts(st.s_used, st.m_used, kind, noise_dim)
        else:
            # SK-ROCK on a split drift: each stage evaluates both parts once
            want = (st.s_used, st.s_used, 1)
        if (st.n_fF, st.n_fS, st.n_g) != want:
            return False
    return True


def _mean(steps, attr):
    return float(np.mean([getattr(st, attr) for st in steps]))


def _row(key, res, method, prob, base, base_prob):
    w = prob.cost_weights
    cost = weighted_cost(res.steps, w)
    base_cost = weighted_cost(base.steps, base_prob.cost_weights)
    fF, fS, g = res.totals()
    _, fb, gb = base.totals()
    multirate = method == "mskrock"
    return SweepRow(
        key=key,
        rho_F=_mean(res.steps, "rho_F_est") if multirate else 0.0,
        rho_S=_mean(res.steps, "rho_S_est") if multirate else _mean(res.steps, "rho_est"),
        rho=_mean(base.steps, "rho_est"),
        mean_s=_mean(res.steps, "s_used"),
        mean_m=_mean(res.steps, "m_used") if multirate else 0.0,
        mean_s_skrock=_mean(base.steps, "s_used"),
        n_fF=fF,
        n_fS=fS,
        n_g=g,
        n_f_skrock=fb,
        n_g_skrock=gb,
        cost_mskrock=cost,
        cost_skrock=base_cost,
        speedup=base_cost / cost,
        rel_l2_diff=float(np.linalg.norm(res.x - base.x) / np.linalg.norm(base.x)),
        counts_match=counts_consistent(res, method, prob.diffusion.kind, prob.noise_dim),
    )


def _shared_path(problem: SplitSdeProblem, tau: float, seed: int) -> np.ndarray:
    N = n_steps_for(problem.horizon, tau)
    return generate_paths(seed, 1, N, problem.noise_dim, problem.horizon).increments


def delta_sweep(
    deltas: Iterable[float],
    seed: int,
    tau: float = 0.01,
    control: StageControl = StageControl(),
    **heat_kw,
) -> list[SweepRow]:
    """mSK-ROCK against SK-ROCK on the refined heat problem, one row per channel width."""
    rows = []
    for delta in deltas:
        prob = make_refined_heat(delta, **heat_kw)
        dW = _shared_path(prob, tau, seed)
        base = integrate(prob, "skrock", tau, dW, control)
        res = integrate(prob, "mskrock", tau, dW, control)
        row = _row(delta, res, "mskrock", prob, base, prob)
        row.extra = {k: prob.meta[k] for k in ("n_nodes", "n_fast", "h")}
        rows.append(row)
    return rows


def fast_count_sweep(
    net: ReactionNetwork,
    fast_counts: Sequence[int],
    seed: int,
    tau: float,
    x0=None,
    horizon=None,
    control: StageControl = StageControl(),
) -> list[SweepRow]:
    """Put the first ``r`` reactions into ``f_F`` for each ``r``.

    The baseline is SK-ROCK with every reaction slow, which is also what the
    ``r = 0`` row runs. Work is counted per reaction, so speed-ups reflect the
    relative expense of fast and slow channels.
    """
    base_prob = network_problem(net.with_fast(0), x0, horizon)
    dW = _shared_path(base_prob, tau, seed)
    base = integrate(base_prob, "skrock", tau, dW, control)
    rows = []
    for r in fast_counts:
        if r == 0:
            rows.append(_row(0, base, "skrock", base_prob, base, base_prob))
            continue
        prob = network_problem(net.with_fast(r), x0, horizon)
        res = integrate(prob, "mskrock", tau, dW, control)
        rows.append(_row(r, res, "mskrock", prob, base, base_prob))
    return rows


def sweep_table(rows: Sequence[SweepRow], key_name: str) -> tuple[list[str], list[list]]:
    header = [key_name] + SWEEP_COLUMNS[1:]
    body = [[getattr(r, c) for c in SWEEP_COLUMNS] for r in rows]
    return header, body
