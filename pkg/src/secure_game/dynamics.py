"""Closed-loop plant/estimator dynamics under sensor attacks, and attack-action classification.

Indexing is 0-based throughout: attack action 0 is always NoAttack and
subsystem 0 is the first entry of the roster.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .control import PlantModel
from .errors import DimensionMismatch, InsufficientHistory


class AttackKind(enum.Enum):
    NONE = "none"
    REPLAY = "replay"
    INJECT = "inject"


@dataclass(frozen=True)
class AttackAction:
    """One attacker action: no attack, replay with a delay in steps, or additive bias injection."""

    kind: AttackKind
    delay_steps: int = 0
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.kind is AttackKind.REPLAY and self.delay_steps < 1:
            raise ValueError("replay delay must be a positive number of steps")
        if self.kind is AttackKind.INJECT:
            if self.bias is None:
                raise ValueError("injection needs a bias vector")
            object.__setattr__(self, "bias", np.asarray(self.bias, dtype=float).reshape(-1))

    @classmethod
    def no_attack(cls):
        return cls(AttackKind.NONE)

    @classmethod
    def replay(cls, delay_steps):
        return cls(AttackKind.REPLAY, delay_steps=int(delay_steps))

    @classmethod
    def inject(cls, bias):
        return cls(AttackKind.INJECT, bias=bias)

    @property
    def label(self):
        if self.kind is AttackKind.NONE:
            return "none"
        if self.kind is AttackKind.REPLAY:
            return f"replay{self.delay_steps}"
        return "inject(" + ",".join(f"{b:g}" for b in self.bias) + ")"


def validate_action_space(actions, T=None):
    """Action 0 must be NoAttack, replay delays must fit the window."""
    actions = list(actions)
    if not actions or actions[0].kind is not AttackKind.NONE:
        raise ValueError("attack action 0 must be NoAttack")
    if T is not None:
        for a in actions:
            if a.kind is AttackKind.REPLAY and a.delay_steps > T:
                raise ValueError(f"replay delay {a.delay_steps} exceeds window size {T}")
    return actions


@dataclass(frozen=True)
class Subsystem:
    """One system action: LQG controller (+ optional watermark), Kalman gain and detector."""

    controller_gain: np.ndarray
    watermark_cov: np.ndarray
    kalman_gain: np.ndarray
    detector: object = None
    name: str = ""

    def __post_init__(self):
        L = np.atleast_2d(np.asarray(self.controller_gain, dtype=float))
        Lw = np.atleast_2d(np.asarray(self.watermark_cov, dtype=float))
        K = np.atleast_2d(np.asarray(self.kalman_gain, dtype=float))
        if Lw.shape != (L.shape[0], L.shape[0]):
            raise DimensionMismatch(f"watermark covariance must be {L.shape[0]}x{L.shape[0]}")
        if not np.allclose(Lw, Lw.T) or np.min(np.linalg.eigvalsh(Lw)) < -1e-12:
            raise ValueError("watermark covariance must be symmetric positive semidefinite")
        object.__setattr__(self, "controller_gain", L)
        object.__setattr__(self, "watermark_cov", Lw)
        object.__setattr__(self, "kalman_gain", K)


@dataclass(frozen=True)
class EstimateWindow:
    """Sliding window of the last ``T+1`` steps.

    ``estimates[t]`` is the one-step prediction x_hat_{t|t-1} and
    ``raw_outputs[t]`` the clean (pre-attack) output y_t, for t = k-T..k; the
    last row is the current step. ``true_state`` is x_k (its mean in
    expectation mode).
    """

    estimates: np.ndarray
    raw_outputs: np.ndarray
    true_state: np.ndarray

    def __post_init__(self):
        est = np.atleast_2d(np.asarray(self.estimates, dtype=float))
        raw = np.atleast_2d(np.asarray(self.raw_outputs, dtype=float))
        if est.shape[0] != raw.shape[0]:
            raise DimensionMismatch("estimates and raw_outputs must have equal length")
        object.__setattr__(self, "estimates", est)
        object.__setattr__(self, "raw_outputs", raw)
        object.__setattr__(self, "true_state", np.asarray(self.true_state, dtype=float).reshape(-1))

    @property
    def T(self):
        return self.estimates.shape[0] - 1

    @property
    def prediction(self):
        return self.estimates[-1]

    @property
    def output(self):
        return self.raw_outputs[-1]

    def advance(self, next_prediction, next_output, next_true_state):
        """Append one step and drop the oldest."""
        est = np.vstack([self.estimates[1:], np.asarray(next_prediction, dtype=float)[None]])
        raw = np.vstack([self.raw_outputs[1:], np.asarray(next_output, dtype=float)[None]])
        return EstimateWindow(est, raw, next_true_state)


@dataclass(frozen=True)
class StageDynamicsResult:
    next_true_state: np.ndarray
    next_prediction: np.ndarray
    filtered_estimate: np.ndarray
    control: np.ndarray
    residual: np.ndarray
    delivered_output: np.ndarray
    next_output: np.ndarray = field(default=None)


def apply_attack(action: AttackAction, window: EstimateWindow, clean_output):
    """Output delivered to the estimator under ``action``."""
    y = np.asarray(clean_output, dtype=float)
    if action.kind is AttackKind.NONE:
        return y.copy()
    if action.kind is AttackKind.INJECT:
        if action.bias.shape != y.shape:
            raise DimensionMismatch(f"bias shape {action.bias.shape} does not match output {y.shape}")
        return y + action.bias
    d = action.delay_steps
    if d > window.T:
        raise InsufficientHistory(f"replay delay {d} exceeds stored history of {window.T} steps")
    return window.raw_outputs[-1 - d].copy()


def step_dynamics(plant: PlantModel, subsystem: Subsystem, action: AttackAction, window: EstimateWindow, rng=None):
    """Advance the closed loop one step.

    ``rng=None`` selects expectation mode (all noise at its zero mean);
    otherwise process/measurement noise and the watermark are sampled from ``rng``.
    """
    K, L = subsystem.kalman_gain, subsystem.controller_gain
    pred = window.prediction
    y_del = apply_attack(action, window, window.output)
    z = y_del - plant.C @ pred
    x_filt = pred + K @ z
    u = L @ x_filt
    w = v = None
    if rng is not None:
        if np.any(subsystem.watermark_cov):
            u = u + rng.multivariate_normal(np.zeros(u.shape[0]), subsystem.watermark_cov)
        w = rng.multivariate_normal(np.zeros(plant.n), plant.Q)
        v = rng.multivariate_normal(np.zeros(plant.m), plant.R)
    x_next = plant.A @ window.true_state + plant.B @ u
    if w is not None:
        x_next = x_next + w
    y_next = plant.C @ x_next
    if v is not None:
        y_next = y_next + v
    return StageDynamicsResult(
        next_true_state=x_next,
        next_prediction=plant.A @ x_filt + plant.B @ u,
        filtered_estimate=x_filt,
        control=u,
        residual=z,
        delivered_output=y_del,
        next_output=y_next,
    )


def advance_window(window: EstimateWindow, result: StageDynamicsResult):
    return window.advance(result.next_prediction, result.next_output, result.next_true_state)


def nominal_window(plant: PlantModel, subsystem: Subsystem, T, rng=None):
    """Window x_hat_[0,T] from ``T`` steps of unattacked operation started at the initial mean."""
    x0 = plant.x0_mean
    y0 = plant.C @ x0
    if rng is not None:
        x0 = rng.multivariate_normal(plant.x0_mean, plant.x0_cov)
        y0 = plant.C @ x0 + rng.multivariate_normal(np.zeros(plant.m), plant.R)
    # pre-history padded with the step-0 values so replay lookups are always defined
    window = EstimateWindow(np.tile(plant.x0_mean, (T + 1, 1)), np.tile(y0, (T + 1, 1)), x0)
    for _ in range(T):
        window = advance_window(window, step_dynamics(plant, subsystem, AttackAction.no_attack(), window, rng))
    return window


def delay_steps(seconds, Ts):
    return int(round(seconds / Ts))


def classify_replay(T_a, grid):
    """Index of the grid window nearest ``T_a``; ties go to the smaller index."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be ascending")
    return int(np.argmin(np.abs(grid - float(T_a))))


def classify_injection(y_a, grid):
    """Index of the grid vector nearest ``y_a`` in Euclidean norm; ties go to the smaller index."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[0] == 0:
        raise ValueError("grid must be nonempty")
    y_a = np.asarray(y_a, dtype=float).reshape(-1)
    return int(np.argmin(np.linalg.norm(grid - y_a[None], axis=1)))


__all__ = [
    "AttackKind",
    "AttackAction",
    "Subsystem",
    "EstimateWindow",
    "StageDynamicsResult",
    "apply_attack",
    "step_dynamics",
    "advance_window",
    "nominal_window",
    "held_window",
    "validate_action_space",
    "delay_steps",
    "classify_replay",
    "classify_injection",
]


def held_window(plant: PlantModel, T):
    """Window with the plant held at its initial mean for ``T+1`` steps.

    The game starts with x_hat_{k|k-1} = x_k = x0_mean; the recorded outputs an
    attacker can replay are the corresponding C x0_mean.
    """
    x0 = plant.x0_mean
    return EstimateWindow(np.tile(x0, (T + 1, 1)), np.tile(plant.C @ x0, (T + 1, 1)), x0)
