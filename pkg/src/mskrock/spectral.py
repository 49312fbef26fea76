"""Jacobian-free power iteration for spectral-radius estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

_SQRT_EPS = float(np.sqrt(np.finfo(float).eps))


class EstimationError(FloatingPointError):
    pass


@dataclass
class RadiusEstimate:
    rho: float
    iterations: int
    eigvec: np.ndarray


def _initial_direction(n: int) -> np.ndarray:
    z = np.ones(n)
    z[1::2] = -1.0
    return z / np.linalg.norm(z)


def estimate_radius(
    fmap: Callable[[np.ndarray], np.ndarray],
    y,
    warm: Optional[np.ndarray] = None,
    tol: float = 1e-2,
    max_iter: int = 100,
) -> RadiusEstimate:
    """Estimate the spectral radius of the Jacobian of ``fmap`` at ``y``.

    Jacobian-vector products are replaced by forward differences with step
    ``sqrt(machine eps) * max(1, |y|)``.  Iteration stops once two successive
    Rayleigh quotients agree to ``tol`` relative, or the direction stops
    changing.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("estimate_radius works on a single state vector")
    if not np.all(np.isfinite(y)):
        raise EstimationError("state is not finite")
    n = y.size
    f0 = np.asarray(fmap(y), dtype=float)
    if not np.all(np.isfinite(f0)):
        raise EstimationError("map returned non-finite values")

    z = _initial_direction(n) if warm is None else np.asarray(warm, dtype=float).copy()
    nz = np.linalg.norm(z)
    if not np.isfinite(nz) or nz == 0.0:
        z, nz = _initial_direction(n), 1.0
    z = z / nz
    delta = _SQRT_EPS * max(1.0, float(np.linalg.norm(y)))

    q_old = None
    it = 0
    for it in range(1, max_iter + 1):
        w = (np.asarray(fmap(y + delta * z), dtype=float) - f0) / delta
        if not np.all(np.isfinite(w)):
            raise EstimationError("map returned non-finite values")
        q = abs(float(z @ w))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return RadiusEstimate(0.0, it, z)
        z_new = w / nw
        aligned = 1.0 - abs(float(z_new @ z)) < tol * tol
        if aligned or (q_old is not None and abs(q - q_old) <= tol * q):
            # orient consistently so warm starts stay close
            if z_new @ z < 0:
                z_new = -z_new
            return RadiusEstimate(q, it, z_new)
        q_old = q
        z = z_new
    return RadiusEstimate(q_old if q_old is not None else 0.0, it, z)


def estimate_radius_batch(
    fmap: Callable[[np.ndarray], np.ndarray],
    Y,
    warm: Optional[np.ndarray] = None,
    tol: float = 1e-2,
    max_iter: int = 100,
) -> tuple[np.ndarray, int, np.ndarray]:
    """Per-row estimates for a stack of states ``Y`` of shape ``(P, n)``.

    Same iteration as :func:`estimate_radius`, run on all rows at once;
    rows that have converged keep their value.  Returns
    ``(rho, iterations, directions)``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError("expected states of shape (P, n)")
    if not np.all(np.isfinite(Y)):
        raise EstimationError("state is not finite")
    P, n = Y.shape
    F0 = np.asarray(fmap(Y), dtype=float)
    if not np.all(np.isfinite(F0)):
        raise EstimationError("map returned non-finite values")
    if warm is None:
        Z = np.tile(_initial_direction(n), (P, 1))
    else:
        Z = np.array(warm, dtype=float, copy=True)
        norms = np.linalg.norm(Z, axis=1)
        bad = ~np.isfinite(norms) | (norms == 0.0)
        Z[bad] = _initial_direction(n)
        Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    delta = (_SQRT_EPS * np.maximum(1.0, np.linalg.norm(Y, axis=1)))[:, None]

    rho = np.zeros(P)
    q_old = np.full(P, np.nan)
    active = np.ones(P, bool)
    it = 0
    for it in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        W = (np.asarray(fmap(Y[idx] + delta[idx] * Z[idx]), dtype=float) - F0[idx]) / delta[idx]
        if not np.all(np.isfinite(W)):
            raise EstimationError("map returned non-finite values")
        z = Z[idx]
        q = np.abs(np.einsum("ij,ij->i", z, W))
        nw = np.linalg.norm(W, axis=1)
        zero = nw == 0.0
        Znew = np.where(zero[:, None], z, W / np.where(zero, 1.0, nw)[:, None])
        dots = np.einsum("ij,ij->i", Znew, z)
        aligned = 1.0 - np.abs(dots) < tol * tol
        settled = np.abs(q - q_old[idx]) <= tol * q
        done = zero | aligned | settled
        Znew[dots < 0] *= -1.0
        rho[idx] = np.where(zero, 0.0, q)
        Z[idx] = Znew
        q_old[idx] = q
        active[idx[done]] = False
        if not active.any():
            break
    return rho, it, Z
