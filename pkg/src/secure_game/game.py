"""Hybrid game model: state, immediate payoffs, mixed strategies and the strategy-weighted update.

Payoffs are evaluated on expectation-mode trajectories. For a window with
current prediction x_hat_{k|k-1} and a pair (attack i, subsystem j):

* NO_DETECTION: ``x' W x + g' U g + tr(U Lw_j)`` with x the filtered estimate
  and g the control under the actual attack,
* SAFE: the same with the attack neutralized (row 0 for every i),
* FALSE_ALARM: the constant penalty ``p_f``.

``tr(U Lw_j)`` is the expected energy of the watermark, which is zero-mean
and would otherwise vanish from the expectation-mode cost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .control import LqgWeights, PlantModel
from .detection import N_MODES, CyberMode, TransitionKernel
from .dynamics import AttackAction, AttackKind, EstimateWindow, Subsystem, validate_action_space
from .errors import DimensionMismatch

SIMPLEX_TOL = 1e-9


@dataclass
class HybridGame:
    """Everything that stays fixed across stages of one game."""

    plant: PlantModel
    subsystems: list
    attacks: list
    weights: LqgWeights
    p_f: float
    kernel: TransitionKernel
    T: int

    def __post_init__(self):
        self.subsystems = list(self.subsystems)
        self.attacks = validate_action_space(self.attacks, self.T)
        if self.p_f < 0:
            raise ValueError("p_f must be nonnegative")
        if self.kernel.shape != (self.M, self.N):
            raise DimensionMismatch(f"kernel is {self.kernel.shape}, expected {(self.M, self.N)}")
        n = self.plant.n
        self._K = np.stack([s.kalman_gain for s in self.subsystems])  # (N, n, m)
        self._L = np.stack([s.controller_gain for s in self.subsystems])  # (N, p, n)
        if self._K.shape[1:] != (n, self.plant.m) or self._L.shape[1:] != (self.plant.p, n):
            raise DimensionMismatch("subsystem gains do not match the plant")
        self._wm_cost = np.array([float(np.trace(self.weights.U @ s.watermark_cov)) for s in self.subsystems])
        self._replay_idx = np.array(
            [a.delay_steps if a.kind is AttackKind.REPLAY else 0 for a in self.attacks], dtype=int
        )
        self._bias = np.zeros((self.M, self.plant.m))
        for i, a in enumerate(self.attacks):
            if a.kind is AttackKind.INJECT:
                if a.bias.shape != (self.plant.m,):
                    raise DimensionMismatch(f"injection bias of action {i} has wrong length")
                self._bias[i] = a.bias

    @property
    def M(self):
        return len(self.attacks)

    @property
    def N(self):
        return len(self.subsystems)


@dataclass
class WindowBatch:
    """A stack of ``H`` expectation-mode windows (current prediction, clean outputs, true state)."""

    pred: np.ndarray  # (H, n)
    raw: np.ndarray  # (H, T+1, m)
    x: np.ndarray  # (H, n)

    @classmethod
    def from_window(cls, window: EstimateWindow):
        return cls(window.prediction[None].copy(), window.raw_outputs[None].copy(), window.true_state[None].copy())

    def __len__(self):
        return self.pred.shape[0]

    def window(self, h, estimates=None):
        """Materialize entry ``h``; only the current prediction is tracked unless ``estimates`` is given."""
        T = self.raw.shape[1] - 1
        est = estimates if estimates is not None else np.tile(self.pred[h], (T + 1, 1))
        return EstimateWindow(est, self.raw[h], self.x[h])


@dataclass
class StageQuantities:
    """Per-window, per-pair expectation-mode quantities under the actual attack."""

    y_del: np.ndarray  # (H, M, m)
    x_filt: np.ndarray  # (H, M, N, n)
    control: np.ndarray  # (H, M, N, p)
    payoff: np.ndarray  # (H, M, N) NO_DETECTION payoff
    next_pred: np.ndarray  # (H, M, N, n)
    next_x: np.ndarray  # (H, M, N, n)
    next_y: np.ndarray  # (H, M, N, m)


def stage_quantities(game: HybridGame, batch: WindowBatch) -> StageQuantities:
    plant, W, U = game.plant, game.weights.W, game.weights.U
    H = len(batch)
    clean = batch.raw[:, -1, :]
    y_del = np.empty((H, game.M, plant.m))
    for i in range(game.M):
        d = game._replay_idx[i]
        y_del[:, i] = batch.raw[:, -1 - d, :] if d > 0 else clean + game._bias[i]
    innov = y_del - batch.pred[:, None, :] @ plant.C.T  # (H, M, m)
    x_filt = batch.pred[:, None, None, :] + np.einsum("jnm,him->hijn", game._K, innov)
    control = np.einsum("jpn,hijn->hijp", game._L, x_filt)
    payoff = (
        np.einsum("hijn,nk,hijk->hij", x_filt, W, x_filt)
        + np.einsum("hijp,pq,hijq->hij", control, U, control)
        + game._wm_cost[None, None, :]
    )
    Bu = control @ plant.B.T
    next_pred = x_filt @ plant.A.T + Bu
    next_x = (batch.x @ plant.A.T)[:, None, None, :] + Bu
    next_y = next_x @ plant.C.T
    return StageQuantities(y_del, x_filt, control, payoff, next_pred, next_x, next_y)


def mode_payoffs(game: HybridGame, q: StageQuantities):
    """Per-mode payoff matrices, shape (H, 3, M, N)."""
    H = q.payoff.shape[0]
    r = np.empty((H, N_MODES, game.M, game.N))
    r[:, CyberMode.SAFE] = q.payoff[:, :1, :]
    r[:, CyberMode.NO_DETECTION] = q.payoff
    r[:, CyberMode.FALSE_ALARM] = game.p_f
    return r


def child_batch(batch: WindowBatch, q: StageQuantities):
    """Windows after every pure pair under the actual attack, flattened row-major over (h, i, j)."""
    H, M, N, n = q.next_pred.shape
    raw = np.repeat(batch.raw[:, 1:, :], M * N, axis=0)
    raw = np.concatenate([raw, q.next_y.reshape(H * M * N, 1, -1)], axis=1)
    return WindowBatch(q.next_pred.reshape(H * M * N, n), raw, q.next_x.reshape(H * M * N, n))


@dataclass
class HybridGameState:
    window: EstimateWindow
    mode_dist: np.ndarray
    stage: int = 0

    def __post_init__(self):
        p = np.asarray(self.mode_dist, dtype=float)
        if p.shape != (N_MODES,) or np.any(p < -SIMPLEX_TOL) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"mode distribution must be a probability 3-vector, got {p}")
        self.mode_dist = p


def _check_simplex(v, name):
    v = np.asarray(v, dtype=float)
    if np.any(v < -SIMPLEX_TOL) or np.any(np.abs(v.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise ValueError(f"{name} is not on the probability simplex")
    return v


@dataclass
class MixedStrategyProfile:
    """Per-mode mixed strategies: ``f`` is (3, M) for the attacker, ``g`` is (3, N) for the system."""

    f: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        self.f = _check_simplex(self.f, "attacker strategy")
        self.g = _check_simplex(self.g, "system strategy")
        if self.f.shape[0] != N_MODES or self.g.shape[0] != N_MODES:
            raise DimensionMismatch("profiles need one strategy per cyber mode")

    @classmethod
    def pure(cls, M, N, i, j):
        f = np.zeros((N_MODES, M))
        g = np.zeros((N_MODES, N))
        f[:, i] = 1.0
        g[:, j] = 1.0
        return cls(f, g)


def immediate_payoff(game: HybridGame, window: EstimateWindow, mode, i, j):
    """Payoff of pure pair ``(i, j)`` in ``mode`` at ``window``."""
    if CyberMode(mode) is CyberMode.FALSE_ALARM:
        return float(game.p_f)
    q = stage_quantities(game, WindowBatch.from_window(window))
    row = 0 if CyberMode(mode) is CyberMode.SAFE else i
    return float(q.payoff[0, row, j])


def build_stage_payoff(game: HybridGame, window: EstimateWindow):
    """Payoff matrices for all three modes, shape (3, M, N)."""
    return mode_payoffs(game, stage_quantities(game, WindowBatch.from_window(window)))[0]


def _mode_weights(game: HybridGame, mode_dist, profile: MixedStrategyProfile):
    """Weights of each (mode, i, j) combination, shape (3, M, N)."""
    return mode_dist[:, None, None] * profile.f[:, :, None] * profile.g[:, None, :]


def next_mode_distribution(game: HybridGame, mode_dist, profile: MixedStrategyProfile):
    w = _mode_weights(game, mode_dist, profile)
    nxt = np.einsum("lij,ijlh->h", w, game.kernel.probs)
    return np.clip(nxt, 0.0, None) / nxt.sum()


def update_with_strategies(game: HybridGame, state: HybridGameState, profile: MixedStrategyProfile, q=None):
    """Advance the expected window and mode distribution one stage under ``profile``.

    Attacks are neutralized on the SAFE share of the mixture.
    """
    if q is None:
        q = stage_quantities(game, WindowBatch.from_window(state.window))
    w = _mode_weights(game, state.mode_dist, profile)
    w_eff = w[1] + w[2]
    w_eff[0] += w[0].sum(axis=0)  # SAFE share behaves like attack 0

    def avg(a):
        return np.einsum("ij,ij...->...", w_eff, a[0])

    next_pred = avg(q.next_pred)
    next_x = avg(q.next_x)
    next_y = avg(q.next_y)
    window = state.window.advance(next_pred, next_y, next_x)
    return HybridGameState(window, next_mode_distribution(game, state.mode_dist, profile), state.stage + 1)


def expected_stage_payoff(game: HybridGame, state: HybridGameState, profile: MixedStrategyProfile, r=None):
    """``sum_l p_l f_l' r_l g_l`` at ``state``."""
    if r is None:
        r = build_stage_payoff(game, state.window)
    return float(np.einsum("l,li,lij,lj->", state.mode_dist, profile.f, r, profile.g))


@dataclass
class PayoffTrace:
    total: float
    stage_costs: np.ndarray
    mode_dists: np.ndarray
    final_state: HybridGameState = field(repr=False, default=None)


def evaluate_total_payoff(game: HybridGame, initial_state: HybridGameState, strategy_sequence):
    """Expected total payoff ``R_K`` of a profile sequence, with the per-stage breakdown."""
    state = initial_state
    costs, dists = [], []
    for profile in strategy_sequence:
        q = stage_quantities(game, WindowBatch.from_window(state.window))
        r = mode_payoffs(game, q)[0]
        dists.append(state.mode_dist.copy())
        costs.append(expected_stage_payoff(game, state, profile, r))
        state = update_with_strategies(game, state, profile, q)
    costs = np.array(costs)
    return PayoffTrace(float(costs.sum()), costs, np.array(dists).reshape(-1, N_MODES), state)


def initial_mode_dist(mode=CyberMode.NO_DETECTION):
    p = np.zeros(N_MODES)
    p[int(mode)] = 1.0
    return p


__all__ = [
    "HybridGame",
    "HybridGameState",
    "MixedStrategyProfile",
    "WindowBatch",
    "StageQuantities",
    "PayoffTrace",
    "stage_quantities",
    "mode_payoffs",
    "child_batch",
    "immediate_payoff",
    "build_stage_payoff",
    "update_with_strategies",
    "next_mode_distribution",
    "expected_stage_payoff",
    "evaluate_total_payoff",
    "initial_mode_dist",
]
