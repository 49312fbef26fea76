"""Common-path Brownian sampling, strong/weak error tables, slope fits."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .driver import StageControl, integrate, n_steps_for
from .problems import SplitSdeProblem
from .rkc import DivergenceError

_MASK64 = (1 << 64) - 1


class RunError(RuntimeError):
    pass


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based substream keyed by ``(seed, path_index)``."""
    if not 0 <= seed <= _MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    key = np.array([seed, path_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class BrownianPaths:
    """Fine-grid Wiener increments for a block of paths.

    ``increments`` has shape ``(P, finest_steps, noise_dim)``; row ``i``
    belongs to path ``first_index + i``.
    """

    seed: int
    first_index: int
    finest_steps: int
    horizon: float
    increments: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def tau_fine(self) -> float:
        return self.horizon / self.finest_steps

    def coarsen(self, steps: int) -> np.ndarray:
        """Increments on a grid of ``steps`` intervals, each the sum of its fine ones."""
        if steps < 1 or self.finest_steps % steps:
            raise ValueError(f"{steps} steps do not divide the finest grid of {self.finest_steps}")
        k = self.finest_steps // steps
        P, _, l = self.increments.shape
        return self.increments.reshape(P, steps, k, l).sum(axis=2)

    def terminal(self) -> np.ndarray:
        """``W(horizon)`` per path, shape ``(P, noise_dim)``."""
        return self.increments.sum(axis=1)


def generate_paths(
    seed: int,
    n_paths: int,
    finest_steps: int,
    noise_dim: int,
    horizon: float,
    first_index: int = 0,
    coarse_steps: Sequence[int] = (),
) -> BrownianPaths:
    """Sample paths ``first_index .. first_index + n_paths - 1``.

    Every path draws from its own substream, so any block partition yields
    the same increments.
    """
    for c in coarse_steps:
        if c < 1 or finest_steps % c:
            raise ValueError(f"finest grid of {finest_steps} steps is not divisible by {c}")
    sd = math.sqrt(horizon / finest_steps)
    inc = np.empty((n_paths, finest_steps, noise_dim))
    for i in range(n_paths):
        inc[i] = path_generator(seed, first_index + i).standard_normal((finest_steps, noise_dim))
    inc *= sd
    return BrownianPaths(seed, first_index, finest_steps, horizon, inc)


# -- error tables ----------------------------------------------------------


@dataclass
class ErrorRow:
    tau: float
    strong_error: float
    strong_mc_stderr: float
    weak_error: float
    weak_mc_stderr: float
    n_samples: int
    mean_n_fF: float = 0.0
    mean_n_fS: float = 0.0
    mean_n_g: float = 0.0
    mean_s: float = 0.0
    mean_m: float = 0.0


@dataclass
class ErrorTable:
    rows: list[ErrorRow] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def taus(self) -> np.ndarray:
        return self.column("tau")

    def validate(self):
        t = self.taus
        if np.any(np.diff(t) >= 0):
            raise ValueError("tau must be strictly decreasing down the rows")
        for name in ("strong_error", "weak_error"):
            if np.any(self.column(name) < 0):
                raise ValueError(f"{name} must be nonnegative")


COLUMNS = [f.name for f in fields(ErrorRow)]


def write_error_table(table: ErrorTable, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for row in table.rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in asdict(row).values()])


def read_error_table(path) -> ErrorTable:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        rows = [
            ErrorRow(**{k: (int(v) if k == "n_samples" else float(v)) for k, v in rec.items()})
            for rec in reader
        ]
    return ErrorTable(rows)


def fit_slope(table: ErrorTable, which: str = "strong", rows: Optional[Sequence[int]] = None):
    """Least-squares fit of ``log2(error)`` against ``log2(tau)``; returns ``(slope, intercept)``."""
    if which not in ("strong", "weak"):
        raise ValueError("which must be 'strong' or 'weak'")
    err = table.column(f"{which}_error")
    tau = table.taus
    if rows is not None:
        err, tau = err[list(rows)], tau[list(rows)]
    if err.size < 3:
        raise ValueError("need at least three rows to fit a slope")
    if np.any(err <= 0):
        raise ValueError("errors must be positive to fit in log scale")
    slope, intercept = np.polyfit(np.log2(tau), np.log2(err), 1)
    return float(slope), float(intercept)


def significant_rows(table: ErrorTable, which: str = "weak", factor: float = 3.0) -> list[int]:
    err = table.column(f"{which}_error")
    se = table.column(f"{which}_mc_stderr")
    return [i for i in range(err.size) if err[i] >= factor * se[i]]


# -- convergence runs ------------------------------------------------------


@dataclass
class _Sums:
    n: int
    d2: np.ndarray
    d4: np.ndarray
    dpsi: np.ndarray
    dpsi2: np.ndarray
    counts: np.ndarray  # per tau: n_fF, n_fS, n_g, s, m per step (means)


def _terminal(problem, method, tau, dW, control, column_mode=False):
    return integrate(problem, method, tau, dW, control, column_mode=column_mode)


def _batch(problem, method, taus, seed, first, size, n_fine, reference, control, ref_factor):
    paths = generate_paths(seed, size, n_fine, problem.noise_dim, problem.horizon, first)
    if reference == "exact":
        x_ref = problem.exact_solution(problem.horizon, paths.terminal())
    elif reference == "fine-skrock":
        ref_control = StageControl(eps=control.eps, safety=control.safety)
        x_ref = integrate(problem, "skrock", problem.horizon / n_fine, paths.increments, ref_control).x
    k = len(taus)
    sums = _Sums(size, np.zeros(k), np.zeros(k), np.zeros(k), np.zeros(k), np.zeros((k, 5)))
    for i, tau in enumerate(taus):
        dW = paths.coarsen(n_steps_for(problem.horizon, tau))
        res = integrate(problem, method, tau, dW, control)
        ref = res.x if reference == "self" else x_ref
        d2 = np.sum((ref - res.x) ** 2, axis=-1)
        dpsi = problem.psi(ref) - problem.psi(res.x)
        sums.d2[i] = d2.sum()
        sums.d4[i] = (d2 * d2).sum()
        sums.dpsi[i] = dpsi.sum()
        sums.dpsi2[i] = (dpsi * dpsi).sum()
        sums.counts[i] = np.mean(
            [[st.n_fF, st.n_fS, st.n_g, st.s_used, st.m_used] for st in res.steps], axis=0
        )
    return sums


def run_convergence(
    problem: SplitSdeProblem,
    method: str,
    taus: Sequence[float],
    n_paths: int,
    seed: int,
    reference: str = "exact",
    control: StageControl = StageControl(),
    ref_factor: int = 16,
    batch_size: int = 2000,
    threads: int = 1,
) -> ErrorTable:
    """Strong and weak errors at each step size on common sample paths.

    ``reference`` is ``exact`` (needs ``problem.exact_solution``),
    ``fine-skrock`` (SK-ROCK with step ``min(taus) / ref_factor``) or
    ``self`` (the method against itself, a zero-error sanity check).
    Batches are reduced in index order, so results do not depend on
    ``threads``.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    if method not in ("mskrock", "skrock"):
        raise ValueError("convergence runs use 'mskrock' or 'skrock'")
    taus = sorted((float(t) for t in taus), reverse=True)
    if len(set(taus)) != len(taus):
        raise ValueError("step sizes must be distinct")
    steps = [n_steps_for(problem.horizon, t) for t in taus]
    if reference == "exact":
        if problem.exact_solution is None:
            raise ValueError(f"problem {problem.name!r} has no exact solution")
        n_fine = steps[-1]
    elif reference == "fine-skrock":
        if ref_factor < 2:
            raise ValueError("reference level must be strictly finer than all step sizes")
        n_fine = steps[-1] * ref_factor
    elif reference == "self":
        n_fine = steps[-1]
    else:
        raise ValueError(f"unknown reference {reference!r}")
    for s in steps:
        if n_fine % s:
            raise ValueError(f"finest grid {n_fine} is not divisible by {s} steps")

    starts = list(range(0, n_paths, batch_size))

    def work(first):
        size = min(batch_size, n_paths - first)
        try:
            return _batch(problem, method, taus, seed, first, size, n_fine, reference, control, ref_factor)
        except DivergenceError as exc:
            idx = first + (exc.index[0] if exc.index else 0)
            raise RunError(f"path {idx} diverged: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(f) for f in starts]

    k = len(taus)
    d2 = np.zeros(k)
    d4 = np.zeros(k)
    dpsi = np.zeros(k)
    dpsi2 = np.zeros(k)
    counts = np.zeros((k, 5))
    for part in parts:
        d2 += part.d2
        d4 += part.d4
        dpsi += part.dpsi
        dpsi2 += part.dpsi2
        counts += part.counts * part.n
    N = float(n_paths)
    counts /= N

    table = ErrorTable(
        meta={
            "problem": problem.name,
            "method": method,
            "reference": reference,
            "reference_steps": n_fine,
            "n_paths": n_paths,
            "seed": seed,
            "eps": control.eps,
            "stages": "auto" if control.fixed is None else f"{control.fixed[0]},{control.fixed[1]}",
            "safety": control.safety,
        }
    )
    for i, tau in enumerate(taus):
        m2 = d2[i] / N
        var2 = max(d4[i] / N - m2 * m2, 0.0) * N / max(N - 1.0, 1.0)
        se_m2 = math.sqrt(var2 / N)
        strong = math.sqrt(m2)
        strong_se = se_m2 / (2.0 * strong) if strong > 0 else 0.0
        mpsi = dpsi[i] / N
        varpsi = max(dpsi2[i] / N - mpsi * mpsi, 0.0) * N / max(N - 1.0, 1.0)
        table.rows.append(
            ErrorRow(
                tau=tau,
                strong_error=strong,
                strong_mc_stderr=strong_se,
                weak_error=abs(float(mpsi)),
                weak_mc_stderr=math.sqrt(varpsi / N),
                n_samples=n_paths,
                mean_n_fF=float(counts[i, 0]),
                mean_n_fS=float(counts[i, 1]),
                mean_n_g=float(counts[i, 2]),
                mean_s=float(counts[i, 3]),
                mean_m=float(counts[i, 4]),
            )
        )
    table.validate()
    return table
