"""Moving-horizon equilibrium computation with a one-stage lookahead."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .detection import N_MODES, CyberMode
from .game import (
    HybridGame,
    HybridGameState,
    MixedStrategyProfile,
    WindowBatch,
    child_batch,
    mode_payoffs,
    stage_quantities,
    update_with_strategies,
)
from .errors import NumericalFailure
from .matrix_game import solve_zero_sum, solve_zero_sum_batch


@dataclass
class SolveCounter:
    """Counts matrix games handed to the solver."""

    count: int = 0

    def add(self, n=1):
        self.count += int(n)


@dataclass
class LookaheadValues:
    """``v[l, h, i, j]``: value of the stage-(k+1) game in mode ``h`` after pair ``(i, j)`` from mode ``l``.

    The window reached from SAFE has the attack neutralized, so it depends on
    the source mode as well as on the pair.
    """

    v: np.ndarray  # (3, 3, M, N)


def lookahead_values(game: HybridGame, batch: WindowBatch, q=None, backend=None, counter=None) -> LookaheadValues:
    """Treat the next stage as terminal and value its games after every current pure pair.

    NO_DETECTION values need one LP per pair. SAFE matrices have identical
    rows (attack neutralized), so their value is the smallest entry of row 0.
    FALSE_ALARM matrices are the constant ``p_f``.
    """
    if q is None:
        q = stage_quantities(game, batch)
    M, N = game.M, game.N
    children = child_batch(batch, q)
    qc = stage_quantities(game, children)
    nd_values, _, _ = solve_zero_sum_batch(qc.payoff, backend=backend)
    if counter is not None:
        counter.add(len(nd_values))
    nd_values = nd_values.reshape(M, N)
    safe_values = qc.payoff[:, 0, :].min(axis=1).reshape(M, N)

    v = np.empty((N_MODES, N_MODES, M, N))
    for l in (CyberMode.NO_DETECTION, CyberMode.FALSE_ALARM):
        v[l, CyberMode.SAFE] = safe_values
        v[l, CyberMode.NO_DETECTION] = nd_values
    # from SAFE the pair behaves like (0, j)
    v[CyberMode.SAFE, CyberMode.SAFE] = safe_values[:1, :]
    v[CyberMode.SAFE, CyberMode.NO_DETECTION] = nd_values[:1, :]
    v[:, CyberMode.FALSE_ALARM] = game.p_f
    return LookaheadValues(v)


def auxiliary_matrices(game: HybridGame, r, lookahead: LookaheadValues | None):
    """``Q_l = r_l + sum_h P(h | l, i, j) * v[l, h]`` elementwise, shape (3, M, N)."""
    if lookahead is None:
        return r.copy()
    P = game.kernel.probs  # (M, N, 3, 3) indexed [i, j, l, h]
    return r + np.einsum("ijlh,lhij->lij", P, lookahead.v)


@dataclass
class StageSolution:
    values: np.ndarray  # (3,)
    f: np.ndarray  # (3, M)
    g: np.ndarray  # (3, N)
    Q: np.ndarray  # (3, M, N)


def stage_solve(Q, backend=None, counter=None) -> StageSolution:
    values = np.empty(N_MODES)
    fs, gs = [], []
    for l in range(N_MODES):
        sol = solve_zero_sum(Q[l], backend=backend)
        values[l] = sol.value
        fs.append(sol.f_star)
        gs.append(sol.g_star)
    if counter is not None:
        counter.add(N_MODES)
    return StageSolution(values, np.array(fs), np.array(gs), Q)


@dataclass
class MovingHorizonResult:
    strategies: list  # MixedStrategyProfile per stage
    values: np.ndarray  # (K, 3)
    Q: np.ndarray  # (K, 3, M, N)
    stage_costs: np.ndarray  # expected payoff per stage
    mode_dists: np.ndarray  # (K, 3) mode distribution at each stage
    final_state: HybridGameState = field(repr=False)
    solve_count: int = 0
    wall_time: float = 0.0

    @property
    def total_payoff(self):
        return float(self.stage_costs.sum())


def run_moving_horizon(game: HybridGame, initial_state: HybridGameState, K, backend=None) -> MovingHorizonResult:
    """Solve ``K`` stages forward; each stage uses a one-stage lookahead except the last.

    The final stage has nothing beyond the horizon to look ahead to, so its
    auxiliary matrices are the immediate payoffs.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    t0 = time.perf_counter()
    counter = SolveCounter()
    state = initial_state
    profiles, values, Qs, costs, dists = [], [], [], [], []
    for k in range(K):
        batch = WindowBatch.from_window(state.window)
        q = stage_quantities(game, batch)
        r = mode_payoffs(game, q)[0]
        la = lookahead_values(game, batch, q, backend=backend, counter=counter) if k < K - 1 else None
        Q = auxiliary_matrices(game, r, la)
        if not np.all(np.isfinite(Q)):
            raise NumericalFailure(f"auxiliary matrices overflowed at stage {k + 1}")
        sol = stage_solve(Q, backend=backend, counter=counter)
        profile = MixedStrategyProfile(sol.f, sol.g)
        dists.append(state.mode_dist.copy())
        costs.append(float(np.einsum("l,li,lij,lj->", state.mode_dist, sol.f, r, sol.g)))
        profiles.append(profile)
        values.append(sol.values)
        Qs.append(Q)
        state = update_with_strategies(game, state, profile, q)
    return MovingHorizonResult(
        strategies=profiles,
        values=np.array(values),
        Q=np.array(Qs),
        stage_costs=np.array(costs),
        mode_dists=np.array(dists),
        final_state=state,
        solve_count=counter.count,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class ConvergenceReport:
    converged: bool
    strategy_drift: float
    Q_drift: float


def convergence_diagnostic(result: MovingHorizonResult, tail_window=10, tol=1e-6) -> ConvergenceReport:
    """Largest stage-to-stage change of strategies and auxiliary matrices over the last ``tail_window`` stages.

    The terminal stage is left out: without a lookahead its auxiliary
    matrices differ from the stationary regime by construction.
    """
    K = len(result.strategies) - 1
    if tail_window < 1 or K < tail_window + 1:
        raise ValueError(f"need at least {tail_window + 2} stages, have {K + 1}")
    s_drift = q_drift = 0.0
    for k in range(K - tail_window, K):
        a, b = result.strategies[k], result.strategies[k - 1]
        s_drift = max(s_drift, float(np.max(np.abs(a.f - b.f))), float(np.max(np.abs(a.g - b.g))))
        q_drift = max(q_drift, float(np.max(np.abs(result.Q[k] - result.Q[k - 1]))))
    return ConvergenceReport(s_drift <= tol and q_drift <= tol, s_drift, q_drift)


__all__ = [
    "SolveCounter",
    "LookaheadValues",
    "StageSolution",
    "MovingHorizonResult",
    "ConvergenceReport",
    "lookahead_values",
    "auxiliary_matrices",
    "stage_solve",
    "run_moving_horizon",
    "convergence_diagnostic",
]
