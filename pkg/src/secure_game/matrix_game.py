"""Zero-sum matrix games: exact LP solver with saddle certificate, plus a fictitious-play reference.

The row player (attacker) maximizes, the column player (system) minimizes.
The simplex kernel comes from the compiled ``_kernels`` extension when it is
importable; otherwise the pure-Python twin is used. Setting
``SECURE_GAME_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py
from .errors import DimensionMismatch, NumericalFailure

try:
    if os.environ.get("SECURE_GAME_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled
DEFAULT_BACKEND = "compiled" if _compiled is not None else "python"

CERT_EPS = 1e-8


def get_backend(name=None):
    name = name or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}") from None


@dataclass(frozen=True)
class GameSolution:
    """Value and a saddle-point pair of a zero-sum matrix game."""

    value: float
    f_star: np.ndarray
    g_star: np.ndarray
    duality_gap: float

    def certificate(self, Q, eps=CERT_EPS):
        """True iff both one-sided saddle inequalities hold within ``eps``."""
        Q = np.asarray(Q, dtype=float)
        return bool(
            np.all(self.f_star @ Q >= self.value - eps) and np.all(Q @ self.g_star <= self.value + eps)
        )


def _check_matrix(Q):
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2 or Q.shape[0] < 1 or Q.shape[1] < 1:
        raise DimensionMismatch(f"payoff matrix must be M x N with M, N >= 1, got shape {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise ValueError("payoff matrix must be finite")
    return Q


def _normalize(Q):
    """Map ``Q`` to a strictly positive matrix with max entry O(1)."""
    scale = float(np.max(np.abs(Q)))
    Qn = Q / scale if scale > 0 else Q.copy()
    lo = float(Qn.min())
    if lo <= 0:
        Qn = Qn + (1.0 - lo)
    return Qn, max(1.0, scale)


def _finish(Q, f, g, tol_scale):
    """Build a solution from strategies in original units; None if the certificate fails."""
    f = np.clip(f, 0.0, None)
    g = np.clip(g, 0.0, None)
    f = f / f.sum()
    g = g / g.sum()
    upper = float(np.max(Q @ g))
    lower = float(np.min(f @ Q))
    gap = max(upper - lower, 0.0)
    sol = GameSolution(value=0.5 * (upper + lower), f_star=f, g_star=g, duality_gap=gap)
    eps = CERT_EPS * tol_scale
    if gap > eps or not sol.certificate(Q, eps):
        return None
    return sol


def _constant_solution(Q):
    M, N = Q.shape
    f = np.zeros(M)
    g = np.zeros(N)
    f[0] = g[0] = 1.0
    return GameSolution(value=float(Q[0, 0]), f_star=f, g_star=g, duality_gap=0.0)


def _solve_once(kern, Q, transpose=False):
    if transpose:
        # the system's problem as a maximizer over -Q'
        Qn, tol_scale = _normalize(-Q.T)
        _, g, f, status = kern.solve_positive_game(Qn)
    else:
        Qn, tol_scale = _normalize(Q)
        _, f, g, status = kern.solve_positive_game(Qn)
    if status != kern.STATUS_OK:
        return None
    return _finish(Q, f, g, tol_scale)


def solve_zero_sum(Q, backend=None) -> GameSolution:
    """Value ``min_g max_f f'Qg`` and a saddle pair via a Bland-rule simplex.

    Raises NumericalFailure if neither the direct nor the transposed LP yields
    a certificate within ``1e-8`` (scaled by ``max|Q|`` when that exceeds 1).
    """
    Q = _check_matrix(Q)
    if Q.max() == Q.min():
        return _constant_solution(Q)
    kern = get_backend(backend)
    for transpose in (False, True):
        sol = _solve_once(kern, Q, transpose)
        if sol is not None:
            return sol
    raise NumericalFailure(f"saddle certificate failed for a {Q.shape[0]}x{Q.shape[1]} game")


def solve_zero_sum_batch(Qs, backend=None):
    """Solve a stack of games; returns ``(values, f_stars, g_stars)`` arrays."""
    Qs = np.asarray(Qs, dtype=float)
    if Qs.ndim != 3 or Qs.shape[1] < 1 or Qs.shape[2] < 1:
        raise DimensionMismatch(f"expected an H x M x N stack, got shape {Qs.shape}")
    H, M, N = Qs.shape
    values = np.zeros(H)
    fs = np.zeros((H, M))
    gs = np.zeros((H, N))
    if H == 0:
        return values, fs, gs
    if not np.all(np.isfinite(Qs)):
        raise ValueError("payoff matrices must be finite")
    kern = get_backend(backend)
    scale = np.max(np.abs(Qs), axis=(1, 2))
    safe = np.where(scale > 0, scale, 1.0)
    Qn = Qs / safe[:, None, None]
    lo = Qn.min(axis=(1, 2))
    Qn = Qn + np.where(lo <= 0, 1.0 - lo, 0.0)[:, None, None]
    _, f_raw, g_raw, status = kern.solve_positive_game_batch(np.ascontiguousarray(Qn))
    constant = Qs.max(axis=(1, 2)) == Qs.min(axis=(1, 2))
    for h in range(H):
        sol = None
        if constant[h]:
            sol = _constant_solution(Qs[h])
        elif status[h] == kern.STATUS_OK:
            sol = _finish(Qs[h], f_raw[h], g_raw[h], max(1.0, scale[h]))
        if sol is None:
            sol = solve_zero_sum(Qs[h], backend=backend)
        values[h] = sol.value
        fs[h] = sol.f_star
        gs[h] = sol.g_star
    return values, fs, gs


def solve_zero_sum_reference(Q, iters=100_000, backend=None) -> GameSolution:
    """Fictitious-play approximation; an independent oracle for ``solve_zero_sum``.

    ``duality_gap`` holds the width of the best bracket found, which bounds
    the value error.
    """
    Q = _check_matrix(Q)
    if iters < 1:
        raise ValueError("iters must be >= 1")
    kern = get_backend(backend)
    est, f, g, lower, upper = kern.fictitious_play(np.ascontiguousarray(Q), int(iters))
    return GameSolution(value=float(est), f_star=f, g_star=g, duality_gap=float(max(upper - lower, 0.0)))


__all__ = [
    "GameSolution",
    "solve_zero_sum",
    "solve_zero_sum_batch",
    "solve_zero_sum_reference",
    "get_backend",
    "BACKENDS",
    "DEFAULT_BACKEND",
]
