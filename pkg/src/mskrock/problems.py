"""Test problems: scalar SDEs, chemical Langevin networks, a refined-grid heat equation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .rkc import DriftPair
from .skrock import DiffusionSpec


@dataclass(frozen=True)
class SplitSdeProblem:
    """``dX = (f_F + f_S) dt + g dW`` on ``[0, horizon]``.

    ``cost_weights`` are the relative work of one evaluation of
    ``(f_F, f_S, g)``; they turn evaluation counters into comparable costs.
    """

    name: str
    drift: DriftPair
    diffusion: DiffusionSpec
    x0: np.ndarray
    horizon: float
    exact_solution: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    weak_functional: Optional[Callable[[np.ndarray], np.ndarray]] = None
    cost_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.shape(self.x0) != (self.drift.dimension,):
            raise ValueError("x0 dimension does not match the drift dimension")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def dimension(self) -> int:
        return self.drift.dimension

    @property
    def noise_dim(self) -> int:
        return self.diffusion.noise_dim

    def f(self, t, x):
        return self.drift.f_F(t, x) + self.drift.f_S(t, x)

    def psi(self, x) -> np.ndarray:
        if self.weak_functional is not None:
            return self.weak_functional(x)
        return np.asarray(x)[..., 0]


# -- scalar problems -------------------------------------------------------


def make_multirate_test(lam: float, zeta: float, mu: float, x0: float = 1.0, horizon: float = 1.0):
    """``dX = (lam + zeta) X dt + mu X dW`` with ``f_F = lam X`` and ``f_S = zeta X``."""
    if lam > 0 or zeta > 0:
        raise ValueError("lambda and zeta must be nonpositive")
    drift = DriftPair(lambda t, x: lam * x, lambda t, x: zeta * x, 1)
    diffusion = DiffusionSpec("vector", lambda t, x: mu * x, 1)
    rate = lam + zeta - 0.5 * mu * mu

    def exact(t, w):
        w = np.asarray(w, dtype=float)
        return x0 * np.exp(rate * t + mu * w)

    return SplitSdeProblem(
        "multirate-test",
        drift,
        diffusion,
        np.array([float(x0)]),
        float(horizon),
        exact_solution=exact,
        meta={"lambda": lam, "zeta": zeta, "mu": mu},
    )


def make_sinh_problem(horizon: float = 1.0) -> SplitSdeProblem:
    """Nonstiff SDE with exact solution ``sinh(t/2 + W/sqrt 2)`` and functional ``asinh``."""
    drift = DriftPair(
        lambda t, x: 0.5 * np.sqrt(x * x + 1.0),
        lambda t, x: 0.25 * x,
        1,
    )
    diffusion = DiffusionSpec("vector", lambda t, x: np.sqrt(0.5 * (x * x + 1.0)), 1)
    return SplitSdeProblem(
        "sinh",
        drift,
        diffusion,
        np.zeros(1),
        float(horizon),
        exact_solution=lambda t, w: np.sinh(0.5 * t + np.asarray(w) / math.sqrt(2.0)),
        weak_functional=lambda x: np.arcsinh(np.asarray(x)[..., 0]),
    )


def make_split_ode(horizon: float = 1.0, y0: float = 1.0) -> SplitSdeProblem:
    """Deterministic ``y' = -y + cos(y)`` split as ``f_F = -y``, ``f_S = cos(y)``."""
    drift = DriftPair(lambda t, x: -x, lambda t, x: np.cos(x), 1)
    diffusion = DiffusionSpec("vector", lambda t, x: np.zeros_like(x), 1)
    return SplitSdeProblem("split-ode", drift, diffusion, np.array([float(y0)]), float(horizon))


# -- chemical Langevin networks --------------------------------------------


class NetworkParseError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class Reaction:
    rate: float
    orders: tuple[int, ...]
    stoich: tuple[int, ...]

    @property
    def work(self) -> int:
        """Multiplications for the propensity plus the stoichiometric update."""
        return 1 + sum(self.orders) + sum(1 for v in self.stoich if v)


@dataclass(frozen=True)
class ReactionNetwork:
    n_species: int
    reactions: tuple[Reaction, ...]
    fast_count: int = 0
    initial: Optional[tuple[float, ...]] = None
    horizon: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.fast_count <= len(self.reactions):
            raise ValueError("fast reaction count out of range")
        for rx in self.reactions:
            if len(rx.orders) != self.n_species or len(rx.stoich) != self.n_species:
                raise ValueError("reaction vectors must have one entry per species")
            if not rx.rate > 0:
                raise ValueError("rate constants must be positive")

    def with_fast(self, r: int) -> "ReactionNetwork":
        return replace(self, fast_count=r)

    @property
    def stoich_matrix(self) -> np.ndarray:
        return np.array([rx.stoich for rx in self.reactions], dtype=float).reshape(-1, self.n_species)

    @property
    def order_matrix(self) -> np.ndarray:
        return np.array([rx.orders for rx in self.reactions], dtype=float).reshape(-1, self.n_species)

    @property
    def rates(self) -> np.ndarray:
        return np.array([rx.rate for rx in self.reactions], dtype=float)


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_INT_LIST = re.compile(r"^[-+]?\d+(\s+[-+]?\d+)*$")


def _ints(text: str, n: int, lineno: int, what: str) -> tuple[int, ...]:
    text = text.strip()
    if not _INT_LIST.match(text):
        raise NetworkParseError(lineno, f"{what} must be a list of integers")
    vals = tuple(int(v) for v in text.split())
    if len(vals) != n:
        raise NetworkParseError(lineno, f"{what} has {len(vals)} entries, expected {n}")
    return vals


def _float(text: str, lineno: int, what: str) -> float:
    text = text.strip()
    if not re.fullmatch(_NUM, text):
        raise NetworkParseError(lineno, f"{what} is not a number: {text!r}")
    return float(text)


def parse_reaction_network(text: str) -> ReactionNetwork:
    """Parse the line-oriented network format (see ``docs/reaction_network.md``)."""
    n_species = None
    reactions = []
    initial = None
    horizon = None
    fast = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if fast is not None:
            raise NetworkParseError(lineno, "trailing content after 'fast' line")
        head, _, rest = line.partition(" ")
        if n_species is None:
            if head != "species":
                raise NetworkParseError(lineno, "file must start with 'species N'")
            if not rest.strip().isdigit() or int(rest) < 1:
                raise NetworkParseError(lineno, "species count must be a positive integer")
            n_species = int(rest)
        elif head == "rate":
            parts = [p.strip() for p in line.split("|")]
            if len(parts) != 3:
                raise NetworkParseError(lineno, "reaction needs 'rate k | orders ... | stoich ...'")
            k = _float(parts[0][len("rate"):], lineno, "rate")
            if not k > 0:
                raise NetworkParseError(lineno, "rate constant must be positive")
            if not parts[1].startswith("orders ") or not parts[2].startswith("stoich "):
                raise NetworkParseError(lineno, "expected 'orders' then 'stoich' fields")
            orders = _ints(parts[1][len("orders"):], n_species, lineno, "orders")
            if min(orders) < 0:
                raise NetworkParseError(lineno, "reactant orders must be nonnegative")
            stoich = _ints(parts[2][len("stoich"):], n_species, lineno, "stoich")
            reactions.append(Reaction(k, orders, stoich))
        elif head == "initial":
            vals = rest.split()
            if len(vals) != n_species:
                raise NetworkParseError(lineno, f"initial state needs {n_species} values")
            initial = tuple(_float(v, lineno, "initial value") for v in vals)
        elif head == "horizon":
            horizon = _float(rest, lineno, "horizon")
            if not horizon > 0:
                raise NetworkParseError(lineno, "horizon must be positive")
        elif head == "fast":
            if not rest.strip().isdigit():
                raise NetworkParseError(lineno, "fast count must be a nonnegative integer")
            fast = int(rest)
            if fast > len(reactions):
                raise NetworkParseError(lineno, f"fast count {fast} exceeds {len(reactions)} reactions")
        else:
            raise NetworkParseError(lineno, f"unknown directive {head!r}")
    if n_species is None:
        raise NetworkParseError(0, "empty network file")
    if fast is None:
        raise NetworkParseError(0, "missing final 'fast r' line")
    if not reactions:
        raise NetworkParseError(0, "network has no reactions")
    return ReactionNetwork(n_species, tuple(reactions), fast, initial, horizon)


def format_reaction_network(net: ReactionNetwork) -> str:
    lines = [f"species {net.n_species}"]
    for rx in net.reactions:
        lines.append(
            f"rate {rx.rate!r} | orders {' '.join(map(str, rx.orders))} | stoich {' '.join(map(str, rx.stoich))}"
        )
    if net.initial is not None:
        lines.append("initial " + " ".join(repr(float(v)) for v in net.initial))
    if net.horizon is not None:
        lines.append(f"horizon {net.horizon!r}")
    lines.append(f"fast {net.fast_count}")
    return "\n".join(lines) + "\n"


def propensities(net: ReactionNetwork, x, falling_factorial: bool = False) -> np.ndarray:
    """Mass-action propensities ``k_j prod_i x_i^{o_ji}``, shape ``(..., n_reactions)``."""
    x = np.asarray(x, dtype=float)
    orders = net.order_matrix
    if falling_factorial:
        terms = np.ones(x.shape[:-1] + orders.shape)
        for q in range(int(orders.max(initial=0))):
            factor = x[..., None, :] - q
            terms = np.where(orders > q, terms * factor, terms)
        return net.rates * terms.prod(axis=-1)
    return net.rates * np.prod(x[..., None, :] ** orders, axis=-1)


def network_problem(
    net: ReactionNetwork,
    x0: Optional[Sequence[float]] = None,
    horizon: Optional[float] = None,
    falling_factorial: bool = False,
) -> SplitSdeProblem:
    """Chemical Langevin equation with the first ``fast_count`` reactions as ``f_F``."""
    if x0 is None:
        x0 = net.initial
    if horizon is None:
        horizon = net.horizon
    if x0 is None or horizon is None:
        raise ValueError("initial state and horizon must be given in the file or as arguments")
    nu = net.stoich_matrix
    r = net.fast_count
    fast_nu, slow_nu = nu[:r], nu[r:]

    def f_F(t, x):
        if r == 0:
            return np.zeros_like(np.asarray(x, dtype=float))
        return propensities(net, x, falling_factorial)[..., :r] @ fast_nu

    def f_S(t, x):
        return propensities(net, x, falling_factorial)[..., r:] @ slow_nu

    def g(t, x):
        a = np.maximum(propensities(net, x, falling_factorial), 0.0)
        return nu.T * np.sqrt(a)[..., None, :]

    work = [rx.work for rx in net.reactions]
    weights = (float(sum(work[:r])), float(sum(work[r:])), float(sum(w + 1 for w in work)))
    return SplitSdeProblem(
        "reaction-network",
        DriftPair(f_F, f_S, net.n_species),
        DiffusionSpec("matrix", g, len(net.reactions)),
        np.asarray(x0, dtype=float),
        float(horizon),
        cost_weights=weights,
        meta={"fast_count": r, "n_reactions": len(net.reactions)},
    )


def load_reaction_network(path, x0=None, horizon=None, fast_count: Optional[int] = None, **kw):
    net = parse_reaction_network(Path(path).read_text())
    if fast_count is not None:
        net = net.with_fast(fast_count)
    return network_problem(net, x0, horizon, **kw)


# -- locally refined heat equation -----------------------------------------


@dataclass(frozen=True)
class RefinedGrid:
    nodes: np.ndarray
    fine: np.ndarray  # bool, node lies in the channel
    fast: np.ndarray  # bool, row belongs to f_F
    h: float
    H: float
    delta: float


def refined_grid(delta: float, H: float, length: float = 10.0, refine: int = 8) -> RefinedGrid:
    """Piecewise-uniform grid: spacing ``H`` outside a channel of width ``delta`` at
    the domain center, spacing ``delta / refine`` inside it."""
    if not 0 < delta < length:
        raise ValueError("channel width must satisfy 0 < delta < domain length")
    h = delta / refine
    if not 0 < h <= H * (1 + 1e-12):
        raise ValueError("fine spacing must satisfy 0 < h <= H")
    a = 0.5 * (length - delta)
    b = a + delta
    coarse = np.arange(0.0, length + 0.5 * H, H)
    coarse[-1] = min(coarse[-1], length)
    fine = a + h * np.arange(refine + 1)
    fine[-1] = b
    keep = (coarse < a - 0.5 * h) | (coarse > b + 0.5 * h)
    nodes = np.sort(np.concatenate((coarse[keep], fine)))
    is_fine = (nodes >= a - 1e-12) & (nodes <= b + 1e-12)
    d = np.diff(nodes)
    small = np.zeros(nodes.size, bool)
    tight = d < H * (1.0 - 1e-9)
    small[:-1] |= tight
    small[1:] |= tight
    touch = is_fine.copy()
    touch[:-1] |= is_fine[1:]
    touch[1:] |= is_fine[:-1]
    return RefinedGrid(nodes, is_fine, touch | small, h, H, delta)


def neumann_laplacian(nodes: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """Finite-volume flux form of ``u''`` with zero-flux ends; exact on constants."""
    d = np.diff(nodes)
    w = np.empty(nodes.size)
    w[1:-1] = 0.5 * (d[:-1] + d[1:])
    w[0] = 0.5 * d[0]
    w[-1] = 0.5 * d[-1]

    def apply(u):
        flux = np.diff(u, axis=-1) / d
        out = np.zeros_like(u)
        out[..., :-1] += flux
        out[..., 1:] -= flux
        return out / w

    return apply


def make_refined_heat(
    delta: float,
    H: float = 1.0 / 16.0,
    sigma: float = 0.5,
    length: float = 10.0,
    refine: int = 8,
    amplitude: float = 1.0,
    center: Optional[float] = None,
    horizon: float = 0.1,
    x0: float = 0.0,
) -> SplitSdeProblem:
    """1-D stochastic heat equation on a grid refined inside a narrow channel.

    ``f_F`` holds the Laplacian rows of the refined region, ``f_S`` the other
    rows plus the source ``amplitude sin(10 pi t)^2 exp(-5 (x - c)^2)``; the
    noise is diagonal and multiplicative, ``g_i(X) = sigma X_i``.
    """
    grid = refined_grid(delta, H, length, refine)
    lap = neumann_laplacian(grid.nodes)
    c = 0.25 * length if center is None else center
    shape = amplitude * np.exp(-5.0 * (grid.nodes - c) ** 2)
    fast = grid.fast
    slow = ~fast
    n = grid.nodes.size

    def f_F(t, x):
        return np.where(fast, lap(x), 0.0)

    def f_S(t, x):
        return np.where(slow, lap(x), 0.0) + math.sin(10.0 * math.pi * t) ** 2 * shape

    def g(t, x):
        return sigma * np.asarray(x, dtype=float)

    n_fast = int(fast.sum())
    return SplitSdeProblem(
        "refined-heat",
        DriftPair(f_F, f_S, n),
        DiffusionSpec("diagonal", g, n),
        np.full(n, float(x0)),
        float(horizon),
        cost_weights=(float(n_fast), float(n - n_fast), float(n)),
        meta={
            "delta": delta,
            "H": H,
            "h": grid.h,
            "n_nodes": n,
            "n_fast": n_fast,
            "sigma": sigma,
            "nodes": grid.nodes,
        },
    )
