"""Command-line front end.

Each run reads a versioned INI-style config (``[run]``, ``[problem]`` and one
section per subcommand), applies flag overrides, writes CSV tables plus a
``metadata.txt`` sidecar and the resolved ``config.ini`` into the output
directory, and exits 0 only if every in-run check passed. Failed checks are
listed in ``failures.json``.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .driver import StageControl, integrate, n_steps_for
from .experiments import delta_sweep, fast_count_sweep, sweep_table
from .montecarlo import RunError, fit_slope, generate_paths, run_convergence, significant_rows, write_error_table
from .problems import (
    NetworkParseError,
    make_multirate_test,
    make_refined_heat,
    make_sinh_problem,
    make_split_ode,
    network_problem,
    parse_reaction_network,
)
from .rkc import DivergenceError
from .spectral import EstimationError
from .skrock import expected_counts
from .stability import (
    StabilityPolyParams,
    certification_grid,
    certify_theorem_stability,
    polynomial_table,
)
from .stages import DEFAULT_EPS, SAFETY_FACTOR
from .tables import write_columns, write_csv, write_metadata

FORMAT_VERSION = 1
COMMANDS = ("integrate", "converge", "stability-scan", "speedup", "certify")
RANDOM_COMMANDS = ("integrate", "converge", "speedup")
PROBLEMS = ("multirate-test", "sinh", "split-ode", "reaction-network", "refined-heat")
BUNDLED_NETWORKS = {"toy-dimerization": "toy_dimerization.net"}

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# -- value parsing ---------------------------------------------------------

_POW2 = re.compile(r"^2\^([-+]?\d+)$")


def parse_number(text: str) -> float:
    """A float, or a power of two written ``2^k``."""
    text = text.strip()
    m = _POW2.match(text)
    if m:
        return 2.0 ** int(m.group(1))
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def parse_list(text: str) -> list[float]:
    """Comma or space separated values, or an inclusive range.

    ``2^-1 .. 2^-8`` expands to successive powers of two and ``0 .. 8`` to
    consecutive integers.
    """
    text = text.strip()
    if ".." in text:
        lo, _, hi = (p.strip() for p in text.partition(".."))
        a, b = _POW2.match(lo), _POW2.match(hi)
        if a and b:
            ka, kb = int(a.group(1)), int(b.group(1))
            step = 1 if kb >= ka else -1
            return [2.0 ** k for k in range(ka, kb + step, step)]
        if re.fullmatch(r"[-+]?\d+", lo) and re.fullmatch(r"[-+]?\d+", hi):
            ia, ib = int(lo), int(hi)
            step = 1 if ib >= ia else -1
            return [float(k) for k in range(ia, ib + step, step)]
        raise ConfigError(f"range must join two integers or two powers of two: {text!r}")
    parts = [p for p in re.split(r"[,\s]+", text) if p]
    if not parts:
        raise ConfigError("empty list")
    return [parse_number(p) for p in parts]


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_stages(text: str) -> Optional[tuple[int, int]]:
    text = text.strip()
    if text == "auto":
        return None
    parts = [p for p in re.split(r"[,\s]+", text) if p]
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ConfigError(f"stages must be 'auto' or 's, m': {text!r}")
    return int(parts[0]), int(parts[1])


# -- configuration ---------------------------------------------------------


@dataclass
class RunConfig:
    """All settings of one run; ``dump`` reproduces it exactly."""

    command: str
    sections: dict[str, dict[str, str]] = field(default_factory=dict)

    @classmethod
    def load(cls, command: str, path: Optional[str], overrides: dict[str, str]) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        if path is not None:
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            except configparser.Error as exc:
                raise ConfigError(f"malformed config {path}: {exc}") from exc
        sections = {s: dict(parser[s]) for s in parser.sections()}
        for dotted, value in overrides.items():
            sec, _, key = dotted.rpartition(".")
            if not sec or not key:
                raise ConfigError(f"override must look like section.key=value: {dotted!r}")
            sections.setdefault(sec, {})[key] = value
        run = sections.setdefault("run", {})
        version = run.setdefault("format_version", str(FORMAT_VERSION))
        if version.strip() != str(FORMAT_VERSION):
            raise ConfigError(f"unsupported format_version {version} (expected {FORMAT_VERSION})")
        return cls(command, sections)

    def get(self, section: str, key: str, default=None, conv: Callable = str):
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing required key [{section}] {key}")
            if not isinstance(default, str):
                return default
            raw = default
        try:
            return conv(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from exc

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {})

    def dump(self) -> str:
        out = []
        for sec, kv in self.sections.items():
            out.append(f"[{sec}]")
            out += [f"{k} = {v}" for k, v in kv.items()]
            out.append("")
        return "\n".join(out)

    @property
    def seed(self) -> int:
        if not self.has("run", "seed"):
            raise ConfigError(f"'{self.command}' needs an explicit seed (--seed or [run] seed)")
        text = self.sections["run"]["seed"].strip()
        if not text.isdigit() or int(text) >= 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {text!r}")
        return int(text)

    @property
    def threads(self) -> int:
        n = self.get("run", "threads", "1", int)
        if n < 1:
            raise ConfigError("threads must be at least 1")
        return n

    def stage_control(self, section: str) -> StageControl:
        return StageControl(
            fixed=self.get(section, "stages", "auto", parse_stages),
            eps=self.get(section, "eps", DEFAULT_EPS, float),
            safety=self.get(section, "safety", SAFETY_FACTOR, float),
            cadence=self.get(section, "cadence", 1, int),
        )


def _network_text(spec: str) -> str:
    if spec in BUNDLED_NETWORKS:
        return resources.files("mskrock.data").joinpath(BUNDLED_NETWORKS[spec]).read_text()
    try:
        return Path(spec).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read network file {spec}: {exc}") from exc


def load_network(cfg: RunConfig):
    try:
        return parse_reaction_network(_network_text(cfg.get("problem", "network", "toy-dimerization")))
    except NetworkParseError as exc:
        raise ConfigError(f"network file: {exc}") from exc


def build_problem(cfg: RunConfig):
    pid = cfg.get("problem", "id")
    g = lambda k, d: cfg.get("problem", k, d, parse_number)  # noqa: E731
    if pid == "multirate-test":
        return make_multirate_test(g("lambda", -1.0), g("zeta", -1.0), g("mu", 1.0), g("x0", 1.0), g("horizon", 1.0))
    if pid == "sinh":
        return make_sinh_problem(g("horizon", 1.0))
    if pid == "split-ode":
        return make_split_ode(g("horizon", 1.0), g("y0", 1.0))
    if pid == "reaction-network":
        net = load_network(cfg)
        if cfg.has("problem", "fast"):
            net = net.with_fast(cfg.get("problem", "fast", conv=int))
        x0 = cfg.get("problem", "initial", conv=parse_list) if cfg.has("problem", "initial") else None
        horizon = g("horizon", None) if cfg.has("problem", "horizon") else None
        try:
            return network_problem(net, x0, horizon, cfg.get("problem", "falling_factorial", False, parse_bool))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if pid == "refined-heat":
        return make_refined_heat(
            g("delta", 2.0**-4),
            H=g("H", 1.0 / 16.0),
            sigma=g("sigma", 0.5),
            length=g("length", 10.0),
            refine=cfg.get("problem", "refine", 8, int),
            amplitude=g("amplitude", 1.0),
            horizon=g("horizon", 0.1),
            x0=g("x0", 0.0),
        )
    raise ConfigError(f"unknown problem id {pid!r}; choose from {', '.join(PROBLEMS)}")


# -- in-run checks ---------------------------------------------------------


class Checks:
    def __init__(self):
        self.failures: list[dict] = []
        self.passed: list[str] = []

    def require(self, name: str, ok: bool, detail: str = ""):
        if ok:
            self.passed.append(name)
        else:
            self.failures.append({"check": name, "detail": detail})


def _range_pair(text: str) -> tuple[float, float]:
    vals = parse_list(text)
    if len(vals) != 2 or vals[0] > vals[1]:
        raise ConfigError(f"expected 'lo, hi': {text!r}")
    return vals[0], vals[1]


# -- subcommands -----------------------------------------------------------


def cmd_integrate(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    prob = build_problem(cfg)
    method = cfg.get("integrate", "method", "mskrock")
    tau = cfg.get("integrate", "tau", conv=parse_number)
    record = cfg.get("integrate", "record", False, parse_bool)
    control = cfg.stage_control("integrate")
    N = n_steps_for(prob.horizon, tau)
    seed = cfg.seed
    dW = None if method == "mrkc" else generate_paths(seed, 1, N, prob.noise_dim, prob.horizon).increments
    res = integrate(prob, method, tau, dW, control, record=record)

    names = [f"x_{i}" for i in range(prob.dimension)]
    if record:
        snaps = [(n, n * tau, res.trajectory[n, 0]) for n in range(N + 1)]
    else:
        snaps = [(0, 0.0, prob.x0), (N, N * tau, res.x[0])]
    write_csv(out / "solution.csv", ["step", "t"] + names, [[n, t] + list(map(float, x)) for n, t, x in snaps])
    write_csv(
        out / "steps.csv",
        ["step", "t", "s", "m", "eta", "rho_F", "rho_S", "rho", "n_fF", "n_fS", "n_g"],
        [
            [n, n * tau, st.s_used, st.m_used, st.eta, st.rho_F_est, st.rho_S_est, st.rho_est, st.n_fF, st.n_fS, st.n_g]
            for n, st in enumerate(res.steps)
        ],
    )
    checks.require("finite_solution", bool(np.all(np.isfinite(res.x))), "non-finite terminal state")
    if method == "mskrock":
        bad = [
            n for n, st in enumerate(res.steps)
            if (st.n_fF, st.n_fS, st.n_g) != expected_counts(st.s_used, st.m_used, prob.diffusion.kind, prob.noise_dim)
        ]
        checks.require("evaluation_counts", not bad, f"steps with unexpected counts: {bad[:10]}")
    fF, fS, ng = res.totals()
    return {"problem": prob.name, "method": method, "tau": tau, "n_steps": N, "seed": seed,
            "stages": _stages_text(control), "eps": control.eps, "total_n_fF": fF, "total_n_fS": fS, "total_n_g": ng}


def _stages_text(control: StageControl) -> str:
    return "auto" if control.fixed is None else f"{control.fixed[0]},{control.fixed[1]}"


def cmd_converge(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    prob = build_problem(cfg)
    sec = "converge"
    method = cfg.get(sec, "method", "mskrock")
    taus = cfg.get(sec, "taus", conv=parse_list)
    control = cfg.stage_control(sec)
    seed = cfg.seed
    table = run_convergence(
        prob,
        method,
        taus,
        cfg.get(sec, "n_paths", conv=int),
        seed,
        reference=cfg.get(sec, "reference", "exact"),
        control=control,
        ref_factor=cfg.get(sec, "ref_factor", 16, int),
        batch_size=cfg.get(sec, "batch_size", 2000, int),
        threads=cfg.threads,
    )
    table.validate()
    write_error_table(table, out / "error_table.csv")
    meta = dict(table.meta)
    for which in ("strong", "weak"):
        rows = significant_rows(table, which) if which == "weak" else None
        try:
            slope, icpt = fit_slope(table, which, rows)
        except ValueError as exc:
            slope = icpt = math.nan
            meta[f"{which}_fit_note"] = str(exc)
        meta[f"{which}_slope"] = slope
        meta[f"{which}_intercept"] = icpt
        key = f"expect_{which}_slope"
        if cfg.has(sec, key):
            lo, hi = cfg.get(sec, key, conv=_range_pair)
            checks.require(key, lo <= slope <= hi, f"{which} slope {slope:.4f} outside [{lo}, {hi}]")
    if cfg.has(sec, "expect_weak_slope"):
        n_sig = len(significant_rows(table, "weak"))
        checks.require("weak_signal", n_sig >= 3, f"only {n_sig} rows with weak error >= 3 stderr")
    return meta


def cmd_stability_scan(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    sec = "stability-scan"
    s = cfg.get(sec, "s", 5, int)
    m = cfg.get(sec, "m", 6, int)
    eps = cfg.get(sec, "eps", 0.0, float)
    n_points = cfg.get(sec, "n_points", 1001, int)
    if m < 2 or m % 2 or s < 1 or n_points < 2:
        raise ConfigError("need s >= 1, even m >= 2 and n_points >= 2")
    outer = StabilityPolyParams.build(s, eps)
    inner = StabilityPolyParams.build(m, eps)
    z_min = cfg.get(sec, "z_min", -inner.beta * m * m, parse_number)
    z = np.linspace(z_min, 0.0, n_points)
    cols = polynomial_table(outer, inner, z)
    flag = cols["Psi_r"] ** 2 <= cols["Phi_m"] * (1 + 1e-12) + 1e-15
    cols["psi_sq_le_phi"] = [bool(v) for v in flag]
    write_columns(out / "polynomials.csv", cols)
    checks.require("Phi_m(0)=1", abs(cols["Phi_m"][-1] - 1.0) <= 1e-12, f"Phi_m(0) = {cols['Phi_m'][-1]!r}")
    checks.require("Psi_r^2<=Phi_m", bool(flag.all()), f"{int((~flag).sum())} grid points violate the bound")

    tau = cfg.get(sec, "tau", 0.1, parse_number)
    grid = certification_grid(cfg.get(sec, "grid_n", 10, int))
    report = certify_theorem_stability(grid, tau, eps)
    write_csv(
        out / "region.csv",
        ["lambda", "zeta", "mu", "s", "m", "p_m", "q_r", "amplification", "stable"],
        [[p.lam, p.zeta, p.mu, p.s, p.m, p.p_m, p.q_r, p.amplification, p.stable] for p in report.points],
    )
    checks.require("amplification<1", report.ok, f"{len(report.violations)} unstable grid points")
    return {"s": s, "m": m, "eps": eps, "tau": tau, "n_points": n_points,
            "grid_points": len(report.points), "max_amplification": report.max_amplification}


def cmd_certify(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    sec = "certify"
    eps = cfg.get(sec, "eps", 0.0, float)
    n = cfg.get(sec, "grid_n", 20, int)
    taus = cfg.get(sec, "taus", "0.1", parse_list)
    grid = certification_grid(n)
    rows = []
    worst = 0.0
    for tau in taus:
        report = certify_theorem_stability(grid, tau, eps)
        rows += [[tau, p.lam, p.zeta, p.mu, p.s, p.m, p.eta, p.p_m, p.q_r, p.amplification, p.stable]
                 for p in report.points]
        worst = max(worst, report.max_amplification)
        checks.require(f"certified tau={tau!r}", report.ok, f"{len(report.violations)} violations")
    write_csv(
        out / "certification.csv",
        ["tau", "lambda", "zeta", "mu", "s", "m", "eta", "p_m", "q_r", "amplification", "stable"],
        rows,
    )
    return {"eps": eps, "grid_n": n, "taus": " ".join(map(repr, taus)), "max_amplification": worst}


def cmd_speedup(cfg: RunConfig, out: Path, checks: Checks) -> dict:
    sec = "speedup"
    sweep = cfg.get(sec, "sweep", "delta")
    seed = cfg.seed
    control = cfg.stage_control(sec)
    meta = {"sweep": sweep, "seed": seed, "eps": control.eps, "safety": control.safety}
    if sweep == "delta":
        deltas = cfg.get(sec, "deltas", "2^-2 .. 2^-6", parse_list)
        tau = cfg.get(sec, "tau", 0.01, parse_number)
        heat = {k: cfg.get("problem", k, conv=parse_number)
                for k in ("H", "sigma", "length", "amplitude", "horizon", "x0") if cfg.has("problem", k)}
        rows = delta_sweep(deltas, seed, tau, control, **heat)
        header, body = sweep_table(rows, "delta")
        header += ["n_nodes", "n_fast"]
        body = [b + [r.extra["n_nodes"], r.extra["n_fast"]] for b, r in zip(body, rows)]
        smallest = min(rows, key=lambda r: r.key)
        checks.require("speedup_at_smallest_delta", smallest.speedup >= 1.0,
                       f"speed-up {smallest.speedup:.3f} at delta={smallest.key}")
        meta.update(tau=tau, problem="refined-heat", **heat)
    elif sweep == "fast":
        net = load_network(cfg)
        counts = [int(r) for r in cfg.get(sec, "fast_counts", f"0 .. {len(net.reactions)}", parse_list)]
        if any(r < 0 or r > len(net.reactions) for r in counts):
            raise ConfigError("fast counts must lie between 0 and the number of reactions")
        tau = cfg.get(sec, "tau", conv=parse_number)
        x0 = cfg.get("problem", "initial", conv=parse_list) if cfg.has("problem", "initial") else None
        horizon = cfg.get("problem", "horizon", conv=parse_number) if cfg.has("problem", "horizon") else None
        rows = fast_count_sweep(net, counts, seed, tau, x0, horizon, control)
        header, body = sweep_table(rows, "r")
        zero = [r for r in rows if r.key == 0]
        if zero:
            checks.require("r0_equals_skrock", zero[0].cost_mskrock == zero[0].cost_skrock,
                           "r = 0 cost differs from the SK-ROCK baseline")
        meta.update(tau=tau, problem="reaction-network")
    else:
        raise ConfigError("speedup sweep must be 'delta' or 'fast'")
    bad = [r.key for r in rows if not r.counts_match]
    checks.require("counts_match_cost_model", not bad, f"rows with mismatched counts: {bad}")
    write_csv(out / "cost.csv", header, body)
    return meta


HANDLERS = {
    "integrate": cmd_integrate,
    "converge": cmd_converge,
    "stability-scan": cmd_stability_scan,
    "speedup": cmd_speedup,
    "certify": cmd_certify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mskrock", description="Multirate stabilized SDE integration experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--seed", metavar="U64")
        p.add_argument("--threads", type=int, metavar="N")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config entry (repeatable)")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    for item in args.set:
        k, sep, v = item.partition("=")
        if not sep:
            print(f"error: --set expects SECTION.KEY=VALUE, got {item!r}", file=sys.stderr)
            return EXIT_CONFIG
        overrides[k.strip()] = v.strip()
    for flag in ("seed", "threads", "out"):
        v = getattr(args, flag)
        if v is not None:
            overrides[f"run.{flag}"] = str(v)
    try:
        cfg = RunConfig.load(args.command, args.config, overrides)
        if args.command in RANDOM_COMMANDS:
            cfg.seed  # noqa: B018 (validate before any work)
        out = Path(cfg.get("run", "out", "mskrock-out"))
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "config.ini").write_text(cfg.dump())
        except OSError as exc:
            raise ConfigError(f"cannot write to output directory {out}: {exc}") from exc
        checks = Checks()
        meta = HANDLERS[args.command](cfg, out, checks)
    except ValueError as exc:  # ConfigError and library input validation
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunError, DivergenceError, EstimationError) as exc:
        checks = Checks()
        checks.require("run_completed", False, str(exc))
        meta = {}

    meta = {"command": args.command, "format_version": FORMAT_VERSION, "version": __version__, **meta,
            "checks_passed": len(checks.passed), "checks_failed": len(checks.failures)}
    write_metadata(out / "metadata.txt", meta)
    (out / "failures.json").write_text(json.dumps(checks.failures, indent=2) + "\n")
    if checks.failures:
        print(json.dumps({"failures": checks.failures}), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
