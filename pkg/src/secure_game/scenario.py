"""Scenario files: JSON schema, loading, and construction of the game they describe."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .control import LqgWeights, PlantModel, discretize_zoh, kalman_gain, lqr_gain, stationary_estimate_cost
from .detection import CyberMode, DetectorSpec, TransitionKernel, estimate_transition_kernel
from .dynamics import AttackAction, EstimateWindow, Subsystem, classify_injection, classify_replay, delay_steps, held_window
from .errors import ParseError, ValidationError
from .game import HybridGame, HybridGameState, initial_mode_dist

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 1}, "minItems": 1}
_square_or_scalar = {"oneOf": [{"type": "number"}, _matrix]}
_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "plant", "Ts", "K", "weights", "watermark_variance", "replay_grid_s"],
    "properties": {
        "name": {"type": "string"},
        "plant": {
            "type": "object",
            "additionalProperties": False,
            "required": ["A", "B", "C"],
            "properties": {
                "A": _matrix,
                "B": _matrix,
                "C": _matrix,
                "continuous": {"type": "boolean"},
                "Q": _square_or_scalar,
                "R": _square_or_scalar,
                "x0_mean": {"oneOf": [{"type": "number"}, _vector]},
                "x0_cov": _square_or_scalar,
            },
        },
        "Ts": {"type": "number", "exclusiveMinimum": 0},
        "K": {"type": "integer", "minimum": 1},
        "T": {"type": "integer", "minimum": 1},
        "p_f": {"type": "number", "minimum": 0},
        "p_f_scale": {"type": "number", "minimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "detector_window": {"type": "integer", "minimum": 0},
        "weights": {
            "type": "object",
            "additionalProperties": False,
            "required": ["W", "U"],
            "properties": {"W": _square_or_scalar, "U": _square_or_scalar},
        },
        "watermark_variance": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "replay_grid_s": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "injection_grid": {"type": "array", "items": _vector},
        "rollout_attack": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["none", "replay", "inject"]},
                "delay_s": {"type": "number", "exclusiveMinimum": 0},
                "bias": _vector,
                "onset_stage": {"type": "integer", "minimum": 0},
            },
        },
        "initial_mode": {"enum": ["safe", "no_detection", "false_alarm"]},
        "seed": {"type": "integer", "minimum": 0},
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kernel_trials": {"type": "integer", "minimum": 1},
                "rollouts": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
            },
        },
        "algorithm": {"enum": ["mh", "subopt", "both"]},
        "budget": {"type": "integer", "minimum": 1},
        "kernel_file": {"type": "string"},
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "p_f_scale": 10.0,
    "alpha": 0.05,
    "detector_window": 0,
    "injection_grid": [],
    "rollout_attack": {"kind": "none"},
    "initial_mode": "no_detection",
    "seed": 0,
    "algorithm": "both",
    "budget": 1_000_000,
    "output_dir": "out",
}
MC_DEFAULTS = {"kernel_trials": 20_000, "rollouts": 10_000, "burn_in": 60}


@dataclass
class ScenarioConfig:
    """Validated scenario with defaults filled in. ``A``/``B`` are already discrete-time."""

    raw: dict
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray
    W: np.ndarray
    U: np.ndarray
    replay_steps: list
    T: int
    base_dir: str = field(default=".", repr=False)

    def __getattr__(self, key):
        raw = self.__dict__.get("raw")
        if raw is not None and key in raw:
            return raw[key]
        raise AttributeError(key)

    @property
    def mc(self):
        return {**MC_DEFAULTS, **self.raw.get("mc", {})}

    def with_overrides(self, **kw):
        raw = json.loads(json.dumps(self.raw))
        for k, v in kw.items():
            if v is not None:
                raw[k] = v
        return config_from_dict(raw, self.base_dir)


def _square(value, n, name, problems):
    if isinstance(value, (int, float)):
        return float(value) * np.eye(n)
    arr = np.asarray(value, dtype=float)
    if arr.shape != (n, n):
        problems.append(f"{name} must be {n}x{n} or a scalar, got shape {arr.shape}")
        return np.eye(n)
    return arr


def _rect(value, name, problems):
    try:
        return np.asarray(value, dtype=float)
    except ValueError:
        problems.append(f"{name} has ragged rows")
        return None


def _schema_problems(raw):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{where}: {err.message}")
    return problems


def config_from_dict(raw, base_dir="."):
    problems = _schema_problems(raw)
    if problems:
        raise ValidationError(problems)
    raw = {**DEFAULTS, **raw}
    plant = raw["plant"]
    A, B, C = (_rect(plant[k], k, problems) for k in ("A", "B", "C"))
    if problems:
        raise ValidationError(problems)
    n = A.shape[0]
    if A.shape != (n, n):
        problems.append(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        problems.append(f"B must have {n} rows")
    if C.shape[1] != n:
        problems.append(f"C must have {n} columns")
    if problems:
        raise ValidationError(problems)
    m, p = C.shape[0], B.shape[1]
    Q = _square(plant.get("Q", 1.0), n, "Q", problems)
    R = _square(plant.get("R", 1.0), m, "R", problems)
    x0 = plant.get("x0_mean", 0.0)
    x0 = np.full(n, float(x0)) if isinstance(x0, (int, float)) else np.asarray(x0, dtype=float)
    if x0.shape != (n,):
        problems.append(f"x0_mean must have length {n}")
    x0_cov = _square(plant.get("x0_cov", 1.0), n, "x0_cov", problems)
    W = _square(raw["weights"]["W"], n, "weights/W", problems)
    U = _square(raw["weights"]["U"], p, "weights/U", problems)
    grid = list(raw["replay_grid_s"])
    if any(b < a for a, b in zip(grid, grid[1:])):
        problems.append("replay_grid_s must be ascending")
    steps = [delay_steps(s, raw["Ts"]) for s in grid]
    if any(d < 1 for d in steps):
        problems.append("every replay window must be at least one sample long")
    for idx, b in enumerate(raw["injection_grid"]):
        if len(b) != m:
            problems.append(f"injection_grid/{idx} must have length {m}")
    need_T = max([raw["detector_window"], 1] + steps)
    T = raw.get("T", need_T)
    if T < need_T:
        problems.append(f"T={T} is shorter than the longest replay window or detector window ({need_T})")
    attack = raw["rollout_attack"]
    if attack["kind"] == "replay" and "delay_s" not in attack:
        problems.append("rollout_attack: replay needs delay_s")
    if attack["kind"] == "replay" and not grid:
        problems.append("rollout_attack: replay needs a nonempty replay_grid_s")
    if attack["kind"] == "inject":
        if "bias" not in attack:
            problems.append("rollout_attack: inject needs bias")
        if not raw["injection_grid"]:
            problems.append("rollout_attack: inject needs a nonempty injection_grid")
    if problems:
        raise ValidationError(problems)
    if plant.get("continuous", False):
        A, B = discretize_zoh(A, B, raw["Ts"])
    return ScenarioConfig(raw, A, B, C, Q, R, x0, x0_cov, W, U, steps, int(T), base_dir)


def load_scenario(path) -> ScenarioConfig:
    path = os.fspath(path)
    with open(path) as fh:
        text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: top level must be a JSON object")
    return config_from_dict(raw, os.path.dirname(os.path.abspath(path)))


def builtin_scenario_path(name="batch_reactor"):
    return str(resources.files("secure_game") / "data" / f"{name}.json")


@dataclass
class Scenario:
    """A game built from a config, plus what the experiments need around it."""

    config: ScenarioConfig
    game: HybridGame
    initial_state: HybridGameState
    weights: LqgWeights
    stationary_cost: float
    attack_schedule: np.ndarray  # attack index per stage for rollouts

    @property
    def K(self):
        return self.config.K


def build_subsystems(plant, weights, variances, alpha, window_T1=0):
    kf = kalman_gain(plant)
    L = lqr_gain(plant, weights)
    det = DetectorSpec(alpha, plant.m, kf.Pz, window_T1)
    subs = []
    for j, s2 in enumerate(variances):
        name = "lqg" if s2 == 0 else f"watermark{s2:g}"
        subs.append(Subsystem(L, float(s2) * np.eye(plant.p), kf.K, det, name))
    return subs, kf, L


def build_attacks(config: ScenarioConfig):
    attacks = [AttackAction.no_attack()]
    attacks += [AttackAction.replay(d) for d in config.replay_steps]
    attacks += [AttackAction.inject(b) for b in config.raw["injection_grid"]]
    return attacks


def attack_schedule(config: ScenarioConfig):
    """Attack index for each stage of a rollout, classified onto the action grid."""
    spec = config.raw["rollout_attack"]
    idx = 0
    if spec["kind"] == "replay":
        idx = 1 + classify_replay(spec["delay_s"], config.raw["replay_grid_s"])
    elif spec["kind"] == "inject":
        idx = 1 + len(config.replay_steps) + classify_injection(spec["bias"], config.raw["injection_grid"])
    sched = np.zeros(config.K, dtype=int)
    sched[spec.get("onset_stage", 0) :] = idx
    return sched


def build_scenario(config: ScenarioConfig, kernel: TransitionKernel | None = None) -> Scenario:
    plant = PlantModel(config.A, config.B, config.C, config.Q, config.R, config.x0_mean, config.x0_cov)
    weights = LqgWeights(config.W, config.U)
    subs, kf, L = build_subsystems(plant, weights, config.watermark_variance, config.alpha, config.detector_window)
    attacks = build_attacks(config)
    if kernel is None and "kernel_file" in config.raw:
        kernel = TransitionKernel.from_csv(os.path.join(config.base_dir, config.raw["kernel_file"]))
    if kernel is None:
        mc = config.mc
        kernel = estimate_transition_kernel(
            plant, subs, attacks, n_trials=mc["kernel_trials"], seed=config.seed, burn_in=mc["burn_in"]
        )
    J0 = stationary_estimate_cost(plant, weights, L, kf)
    p_f = float(config.raw["p_f"]) if "p_f" in config.raw else config.p_f_scale * J0
    game = HybridGame(plant, subs, attacks, weights, p_f, kernel, config.T)
    mode = {m.label: m for m in CyberMode}[config.initial_mode]
    state = HybridGameState(held_window(plant, config.T), initial_mode_dist(mode))
    return Scenario(config, game, state, weights, J0, attack_schedule(config))


def random_toy_game(rng, K_T=1, n=2, p_f_range=(1.0, 5.0)):
    """Small random game with M = N = 2 used for checks against brute-force oracles.

    Two stabilizable ``n``-state plants share random dynamics; the attacker
    chooses between no attack and a one-step replay; the two subsystems are
    plain LQG and a watermarked variant. The kernel is drawn at random with
    the required structure instead of being estimated.
    """
    while True:
        A = rng.normal(scale=0.7, size=(n, n))
        A *= min(1.0, 1.1 / np.max(np.abs(np.linalg.eigvals(A))))
        B = rng.normal(size=(n, 1))
        C = rng.normal(size=(1, n))
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        obsv = np.vstack([C @ np.linalg.matrix_power(A, k) for k in range(n)])
        # keep gains and payoffs O(1): well-conditioned controllability and observability
        if np.linalg.cond(ctrb) < 10 and np.linalg.cond(obsv) < 10:
            break
    plant = PlantModel(A, B, C, np.eye(n), np.eye(1), np.zeros(n), np.eye(n))
    weights = LqgWeights(np.eye(n), np.eye(1))
    subs, _, _ = build_subsystems(plant, weights, [0.0, float(rng.uniform(0.1, 2.0))], 0.05)
    attacks = [AttackAction.no_attack(), AttackAction.replay(1)]
    probs = np.zeros((2, 2, 3, 3))
    for i in range(2):
        for j in range(2):
            a = rng.uniform(0.01, 0.3) if i == 0 else rng.uniform(0.05, 0.9)
            probs[i, j, CyberMode.SAFE] = (1.0, 0.0, 0.0)
            probs[i, j, CyberMode.NO_DETECTION] = (0.0, 1 - a, a) if i == 0 else (a, 1 - a, 0.0)
            probs[i, j, CyberMode.FALSE_ALARM] = (0.0, 1.0, 0.0)
    game = HybridGame(plant, subs, attacks, weights, float(rng.uniform(*p_f_range)), TransitionKernel(probs), K_T)
    # random pre-history so that replay already matters at the first stage
    window = EstimateWindow(rng.normal(size=(K_T + 1, n)), rng.normal(size=(K_T + 1, 1)), rng.normal(size=n))
    return game, HybridGameState(window, initial_mode_dist())


__all__ = [
    "SCHEMA",
    "ScenarioConfig",
    "Scenario",
    "load_scenario",
    "config_from_dict",
    "builtin_scenario_path",
    "build_scenario",
    "build_subsystems",
    "build_attacks",
    "attack_schedule",
    "random_toy_game",
]
