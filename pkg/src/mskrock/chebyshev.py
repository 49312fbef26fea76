"""Chebyshev polynomials of the first and second kind.

All evaluations use the forward three-term recurrence, which is the same
arithmetic the stabilized integrators perform stage by stage.  Arguments
slightly above 1 (``1 + eps/s**2``) are therefore handled exactly to
round-off, unlike the trigonometric closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised for non-finite arguments or negative degrees."""


@dataclass(frozen=True)
class ChebEval:
    value: float
    derivative: float


def _check(k, x):
    if int(k) != k or k < 0:
        raise DomainError(f"degree must be a nonnegative integer, got {k!r}")
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise DomainError("Chebyshev argument must be finite")
    return int(k), xa


def _recurrence(k, x, first):
    # first = x for T, 2x for U
    if k == 0:
        return np.ones_like(x)
    prev, cur = np.ones_like(x), first
    for _ in range(k - 1):
        prev, cur = cur, 2.0 * x * cur - prev
    return cur


def _out(x, v):
    return float(v) if np.ndim(x) == 0 else v


def cheb_T(k: int, x):
    """First-kind polynomial ``T_k(x)``; ``x`` may be a scalar or an array."""
    k, xa = _check(k, x)
    return _out(x, _recurrence(k, xa, xa.copy()))


def cheb_U(k: int, x):
    """Second-kind polynomial ``U_k(x)``; ``x`` may be a scalar or an array."""
    k, xa = _check(k, x)
    return _out(x, _recurrence(k, xa, 2.0 * xa))


def cheb_T_prime(k: int, x):
    """Derivative ``T_k'(x) = k U_{k-1}(x)`` (zero for ``k = 0``)."""
    k, xa = _check(k, x)
    if k == 0:
        return _out(x, np.zeros_like(xa))
    return _out(x, k * _recurrence(k - 1, xa, 2.0 * xa))


def cheb_eval(k: int, x: float) -> ChebEval:
    return ChebEval(cheb_T(k, x), cheb_T_prime(k, x))


def cheb_T_sequence(k: int, x: float) -> np.ndarray:
    """Values ``T_0(x), ..., T_k(x)`` in one pass."""
    k, _ = _check(k, x)
    out = np.empty(k + 1)
    out[0] = 1.0
    if k >= 1:
        out[1] = x
    for j in range(2, k + 1):
        out[j] = 2.0 * x * out[j - 1] - out[j - 2]
    return out


def cheb_U_sequence(k: int, x: float) -> np.ndarray:
    """Values ``U_0(x), ..., U_k(x)`` in one pass."""
    k, _ = _check(k, x)
    out = np.empty(k + 1)
    out[0] = 1.0
    if k >= 1:
        out[1] = 2.0 * x
    for j in range(2, k + 1):
        out[j] = 2.0 * x * out[j - 1] - out[j - 2]
    return out
