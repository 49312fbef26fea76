"""Stability functions of the Chebyshev schemes and mean-square certification.

Notation follows the usual RKC conventions: ``omega0 = 1 + eps/s**2`` and
``omega1 = T_s(omega0) / T_s'(omega0)``.  The same record describes both the
outer ``s``-stage scheme and the inner ``m``-stage scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .chebyshev import cheb_T, cheb_T_prime, cheb_U

PHI_SERIES_CUTOFF = 1e-6
PHI_M_SERIES_CUTOFF = 1e-8
CERTIFY_SLACK = 1e-12


def damping_beta(eps: float) -> float:
    """Stability-interval constant ``beta = 2 - 4 eps / 3``."""
    return 2.0 - 4.0 * eps / 3.0


@dataclass(frozen=True)
class StabilityPolyParams:
    stages: int
    damping: float
    omega0: float
    omega1: float

    @classmethod
    def build(cls, stages: int, damping: float = 0.0) -> "StabilityPolyParams":
        if stages < 1:
            raise ValueError("stages must be positive")
        if damping < 0:
            raise ValueError("damping must be nonnegative")
        w0 = 1.0 + damping / stages**2
        w1 = cheb_T(stages, w0) / cheb_T_prime(stages, w0)
        return cls(int(stages), float(damping), w0, w1)

    @property
    def beta(self) -> float:
        return damping_beta(self.damping)


@dataclass(frozen=True)
class MultirateTestParams:
    lam: float
    zeta: float
    mu: float

    def __post_init__(self):
        if self.lam > 0 or self.zeta > 0:
            raise ValueError("lambda and zeta must be nonpositive")


def _scalar_or_array(z, v):
    return float(v) if np.ndim(z) == 0 else v


def phi(z):
    """``(exp(z) - 1) / z`` with the removable singularity at 0."""
    za = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(za)):
        raise ValueError("phi argument must be finite")
    small = np.abs(za) < PHI_SERIES_CUTOFF
    safe = np.where(small, 1.0, za)
    out = np.where(small, 1.0 + za / 2.0 + za * za / 6.0, np.expm1(safe) / safe)
    return _scalar_or_array(z, out)


def stab_A(p: StabilityPolyParams, z):
    """RKC stability polynomial ``T_s(w0 + w1 z) / T_s(w0)``."""
    za = np.asarray(z, dtype=float)
    v = cheb_T(p.stages, p.omega0 + p.omega1 * za) / cheb_T(p.stages, p.omega0)
    return _scalar_or_array(z, v)


def stab_A_prime0(p: StabilityPolyParams) -> float:
    return p.omega1 * cheb_T_prime(p.stages, p.omega0) / cheb_T(p.stages, p.omega0)


def stab_Phi(p: StabilityPolyParams, z):
    """``(A(z) - 1) / z``, the discrete counterpart of :func:`phi`."""
    za = np.asarray(z, dtype=float)
    tiny = np.abs(za) < PHI_M_SERIES_CUTOFF
    safe = np.where(tiny, 1.0, za)
    out = (np.asarray(stab_A(p, safe)) - 1.0) / safe
    out = np.where(tiny, stab_A_prime0(p), out)
    out = np.where(za == 0.0, 1.0, out)
    return _scalar_or_array(z, out)


def stab_B(p: StabilityPolyParams, z):
    """SK-ROCK noise polynomial ``U_{s-1}(w0 + w1 z) / U_{s-1}(w0) (1 + w1 z / 2)``."""
    za = np.asarray(z, dtype=float)
    k = p.stages - 1
    v = cheb_U(k, p.omega0 + p.omega1 * za) / cheb_U(k, p.omega0) * (1.0 + 0.5 * p.omega1 * za)
    return _scalar_or_array(z, v)


def stab_Psi(p: StabilityPolyParams, z):
    """Damping factor of the discrete damped diffusion.

    ``p`` holds the parameters of the ``m = 2r`` stage scheme while the
    second-kind polynomial has degree ``r - 1``.
    """
    if p.stages % 2:
        raise ValueError("Psi requires the parameters of an even stage count m = 2r")
    za = np.asarray(z, dtype=float)
    k = p.stages // 2 - 1
    v = cheb_U(k, p.omega0 + p.omega1 * za) / cheb_U(k, p.omega0) * (1.0 + 0.5 * p.omega1 * za)
    return _scalar_or_array(z, v)


def ms_stable_exact(t: MultirateTestParams) -> bool:
    return t.lam + t.zeta + 0.5 * t.mu**2 < 0.0


def ms_amplification(outer: StabilityPolyParams, p, q):
    """Second moment ``E|A_s(p) + B_s(p) q xi|^2`` for standard normal ``xi``."""
    a = np.asarray(stab_A(outer, p))
    b = np.asarray(stab_B(outer, p))
    out = a * a + b * b * np.asarray(q, dtype=float) ** 2
    return float(out) if np.ndim(out) == 0 else out


def averaged_rate(lam, zeta, eta):
    """Exact averaged-force rate ``phi(eta lam) (lam + zeta)``."""
    return np.asarray(phi(np.asarray(eta) * lam)) * (np.asarray(lam) + zeta)


def modified_ms_margin(lam, zeta, mu, eta):
    """``phi(eta lam)(lam+zeta) + phi(eta lam/2)^2 mu^2/2``; negative means stable."""
    lam = np.asarray(lam, dtype=float)
    return averaged_rate(lam, zeta, eta) + 0.5 * np.asarray(phi(eta * lam / 2.0)) ** 2 * mu**2


# -- certification ---------------------------------------------------------


@dataclass
class PointResult:
    lam: float
    zeta: float
    mu: float
    tau: float
    s: int
    m: int
    eta: float
    p_m: float
    q_r: float
    amplification: float

    @property
    def stable(self) -> bool:
        return self.amplification < 1.0 + CERTIFY_SLACK


@dataclass
class CertificationReport:
    points: list[PointResult] = field(default_factory=list)

    @property
    def violations(self) -> list[PointResult]:
        return [pt for pt in self.points if not pt.stable]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def max_amplification(self) -> float:
        return max((pt.amplification for pt in self.points), default=float("nan"))


def multirate_p_q(lam, zeta, mu, tau: float, sp):
    """``(p_m, q_r)`` of the scalar test equation for the stage choice ``sp``.

    Scalars give floats; arrays of test parameters give arrays.
    """
    inner = sp.inner_poly
    z = sp.eta * lam
    p_m = tau * np.asarray(stab_Phi(inner, z)) * (np.asarray(lam) + zeta)
    q_r = np.asarray(stab_Psi(inner, z)) * mu * math.sqrt(tau)
    if np.ndim(p_m) == 0:
        return float(p_m), float(q_r)
    return p_m, q_r


def certify_theorem_stability(
    grid: Iterable[MultirateTestParams], tau: float, eps: float = 0.0
) -> CertificationReport:
    """Check ``E|R_s(p_m, q_r, xi)|^2 < 1`` for every test point.

    Stages are chosen from the exact radii ``rho_F = |lam|``, ``rho_S = |zeta|``.
    Points outside the mean-square stability domain are rejected.
    """
    from .stages import StageParams, min_inner_stages, min_outer_stages

    if tau <= 0:
        raise ValueError("tau must be positive")
    pts = list(grid)
    for t in pts:
        if not ms_stable_exact(t):
            raise ValueError(f"point {t} lies outside the mean-square stability domain")
    # coefficients depend on (s, m) only, so evaluate each group in one pass
    groups: dict[tuple[int, int], list[int]] = {}
    for i, t in enumerate(pts):
        s = min_outer_stages(tau, abs(t.zeta), eps)
        groups.setdefault((s, min_inner_stages(tau, abs(t.lam), s, eps)), []).append(i)
    results: list[PointResult | None] = [None] * len(pts)
    for (s, m), idx in groups.items():
        sp = StageParams.build(s, m, tau, eps)
        lam = np.array([pts[i].lam for i in idx])
        zeta = np.array([pts[i].zeta for i in idx])
        mu = np.array([pts[i].mu for i in idx])
        p_m, q_r = multirate_p_q(lam, zeta, mu, tau, sp)
        amp = np.atleast_1d(ms_amplification(sp.outer_poly, p_m, q_r))
        p_m, q_r = np.atleast_1d(p_m), np.atleast_1d(q_r)
        for k, i in enumerate(idx):
            t = pts[i]
            results[i] = PointResult(
                t.lam, t.zeta, t.mu, tau, s, m, sp.eta, float(p_m[k]), float(q_r[k]), float(amp[k])
            )
    return CertificationReport(points=results)


def certification_grid(
    n: int = 20,
    lam_range: tuple[float, float] = (1e-2, 1e6),
    zeta_range: tuple[float, float] = (1e-2, 1e3),
    mu_fraction: tuple[float, float] = (0.01, 0.99),
) -> list[MultirateTestParams]:
    """Deterministic ``n**3`` grid inside the mean-square stability domain.

    lambda takes the value 0 plus ``n - 1`` log-spaced negative values; mu is
    parameterised by the fraction ``mu**2 / (2 |lam + zeta|)``.
    """
    lams = np.concatenate(([0.0], -np.logspace(*np.log10(lam_range), n - 1)))
    zetas = -np.logspace(*np.log10(zeta_range), n)
    fracs = np.linspace(*mu_fraction, n)
    pts = []
    for lam in lams:
        for zeta in zetas:
            for fr in fracs:
                mu = math.sqrt(fr * 2.0 * abs(lam + zeta))
                pts.append(MultirateTestParams(float(lam), float(zeta), mu))
    return pts


def psi_phi_gap(r: int, eps: float, n_points: int = 5000) -> tuple[np.ndarray, np.ndarray]:
    """Grid and ``Phi_{2r}(z) - Psi_r(z)^2`` on ``[-beta (2r)^2, 0]``."""
    p = StabilityPolyParams.build(2 * r, eps)
    z = np.linspace(-p.beta * (2 * r) ** 2, 0.0, n_points)
    return z, np.asarray(stab_Phi(p, z)) - np.asarray(stab_Psi(p, z)) ** 2


def polynomial_table(
    outer: StabilityPolyParams, inner: StabilityPolyParams, z: Sequence[float]
) -> dict[str, np.ndarray]:
    """Columns ``z, A_s, B_s, Phi_m, Psi_r`` on a common grid."""
    z = np.asarray(z, dtype=float)
    return {
        "z": z,
        "A_s": np.asarray(stab_A(outer, z)),
        "B_s": np.asarray(stab_B(outer, z)),
        "Phi_m": np.asarray(stab_Phi(inner, z)),
        "Psi_r": np.asarray(stab_Psi(inner, z)),
    }
