"""Backward robust value iteration over pure-strategy histories.

Stage ``t`` (0-based) has ``(MN)^t`` pure histories, each a sequence of
``(i, j)`` pairs applied with the attack in effect. For every history and
mode the backup matrix is

    Q[l] = r[l] + sum_h P(h | l, i, j) * vbar_{t+1}[h]

where ``vbar_{t+1}`` is either the largest value over all stage-``t+1``
histories (``continuation="stage_max"``, the default) or the value of the
child history reached by ``(i, j)`` (``continuation="child"``). Only the
former dominates the value of the game whose state after mixed strategies is
the strategy-weighted window; the child variant can fall below it. The reported
robust value ``vbar_t[l]`` is the largest matrix-game value over all
stage-``t`` histories. Strategies are read off the maximizing history, the
first one in lexicographic order on ties.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .detection import N_MODES
from .errors import BudgetExceeded, NumericalFailure
from .game import (
    HybridGame,
    HybridGameState,
    MixedStrategyProfile,
    WindowBatch,
    child_batch,
    evaluate_total_payoff,
    mode_payoffs,
    stage_quantities,
)
from .matrix_game import solve_zero_sum_batch

DEFAULT_BUDGET = 1_000_000


@dataclass
class PureHistory:
    actions: tuple  # ((i, j), ...) for the stages before this one
    window: object = field(repr=False)


def history_count(M, N, K):
    """Total number of pure histories over stages 0..K-1."""
    return sum((M * N) ** t for t in range(K))


def _check_budget(game, K, budget):
    count = history_count(game.M, game.N, K)
    if budget is not None and count > budget:
        raise BudgetExceeded(count, budget)
    return count


def history_batches(game: HybridGame, initial_state: HybridGameState, K, budget=DEFAULT_BUDGET):
    """Windows of every pure history, one batch per stage."""
    _check_budget(game, K, budget)
    batches = [WindowBatch.from_window(initial_state.window)]
    for _ in range(K - 1):
        prev = batches[-1]
        batches.append(child_batch(prev, stage_quantities(game, prev)))
    return batches


def enumerate_pure_histories(game: HybridGame, initial_state: HybridGameState, k, budget=DEFAULT_BUDGET):
    """All ``(MN)^(k-1)`` histories reaching stage ``k`` (1-based), with their expected windows."""
    if k < 1:
        raise ValueError("k must be >= 1")
    batch = history_batches(game, initial_state, k, budget)[-1]
    pairs = list(itertools.product(range(game.M), range(game.N)))
    out = []
    for h, actions in enumerate(itertools.product(pairs, repeat=k - 1)):
        out.append(PureHistory(tuple(actions), batch.window(h)))
    return out


@dataclass
class SuboptimalResult:
    v_bar: np.ndarray  # (K, 3) robust values per stage and mode
    strategies: list  # MixedStrategyProfile per stage
    argmax_history: np.ndarray  # (K, 3) index of the maximizing history
    solve_count: int
    wall_time: float
    history_count: int

    @property
    def v_bar_1(self):
        return self.v_bar[0]


CONTINUATIONS = ("stage_max", "child")


def backup_matrices(game: HybridGame, r, v_next, continuation="stage_max"):
    """Backup matrices ``(H, 3, M, N)`` from payoffs ``r`` and the next stage's values.

    ``v_next`` is ``(H * M * N, 3)`` with rows in child order (``child``) or any
    stack of stage-``t+1`` values (``stage_max``).
    """
    P = game.kernel.probs
    if continuation == "child":
        H = r.shape[0]
        return r + np.einsum("ijlh,xijh->xlij", P, v_next.reshape(H, game.M, game.N, N_MODES))
    return r + np.einsum("ijlh,h->lij", P, v_next.max(axis=0))[None]


def robust_value_iteration(
    game: HybridGame, initial_state: HybridGameState, K, budget=DEFAULT_BUDGET, backend=None, continuation="stage_max"
) -> SuboptimalResult:
    if K < 1:
        raise ValueError("K must be >= 1")
    if continuation not in CONTINUATIONS:
        raise ValueError(f"continuation must be one of {CONTINUATIONS}")
    t0 = time.perf_counter()
    count = _check_budget(game, K, budget)
    batches = history_batches(game, initial_state, K, budget=None)
    M, N = game.M, game.N
    v_bar = np.zeros((K, N_MODES))
    argmax = np.zeros((K, N_MODES), dtype=int)
    fs = np.zeros((K, N_MODES, M))
    gs = np.zeros((K, N_MODES, N))
    solves = 0
    v_next = None
    for t in range(K - 1, -1, -1):
        batch = batches[t]
        H = len(batch)
        Q = mode_payoffs(game, stage_quantities(game, batch))
        if v_next is not None:
            Q = backup_matrices(game, Q, v_next, continuation)
        if not np.all(np.isfinite(Q)):
            raise NumericalFailure(f"backup matrices overflowed at stage {t + 1}")
        values, f, g = solve_zero_sum_batch(Q.reshape(H * N_MODES, M, N), backend=backend)
        solves += H * N_MODES
        values = values.reshape(H, N_MODES)
        best = np.argmax(values, axis=0)
        for l in range(N_MODES):
            argmax[t, l] = best[l]
            v_bar[t, l] = values[best[l], l]
            fs[t, l] = f[best[l] * N_MODES + l]
            gs[t, l] = g[best[l] * N_MODES + l]
        v_next = values
    strategies = [MixedStrategyProfile(fs[t], gs[t]) for t in range(K)]
    return SuboptimalResult(v_bar, strategies, argmax, solves, time.perf_counter() - t0, count)


def expected_solve_count(M, N, K):
    return N_MODES * history_count(M, N, K)


def upper_bound_certificate(v_bar_1, realized, slack=1e-9):
    """True iff ``v_bar_1 + slack`` dominates every realized total payoff."""
    return bool(np.all(float(v_bar_1) + slack >= np.asarray(realized, dtype=float)))


def pure_attacker_payoffs(game: HybridGame, initial_state: HybridGameState, system_strategies):
    """Total payoff of every pure attacker plan (one action per stage and mode) against fixed system strategies."""
    K = len(system_strategies)
    M = game.M
    out = []
    for plan in itertools.product(range(M), repeat=K * N_MODES):
        seq = []
        for t, prof in enumerate(system_strategies):
            f = np.zeros((N_MODES, M))
            f[np.arange(N_MODES), plan[t * N_MODES : (t + 1) * N_MODES]] = 1.0
            seq.append(MixedStrategyProfile(f, prof.g))
        out.append(evaluate_total_payoff(game, initial_state, seq).total)
    return np.array(out)


__all__ = [
    "DEFAULT_BUDGET",
    "CONTINUATIONS",
    "PureHistory",
    "SuboptimalResult",
    "history_count",
    "history_batches",
    "enumerate_pure_histories",
    "backup_matrices",
    "robust_value_iteration",
    "expected_solve_count",
    "upper_bound_certificate",
    "pure_attacker_payoffs",
]
