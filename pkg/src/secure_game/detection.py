"""Chi-square detector, cyber-mode machine and Monte Carlo transition kernel."""

from __future__ import annotations

import csv
import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.special

from .control import PlantModel, lu_solve
from .dynamics import AttackAction, AttackKind, Subsystem
from .errors import DimensionMismatch, SingularCovariance, SingularMatrix


class CyberMode(enum.IntEnum):
    SAFE = 0
    NO_DETECTION = 1
    FALSE_ALARM = 2

    @property
    def label(self):
        return ("safe", "no_detection", "false_alarm")[self]


N_MODES = 3


def chi2_threshold(m, alpha, tol=1e-13):
    """Threshold ``t`` with ``P(chi2_m > t) = alpha``, by bisection on the incomplete gamma CDF."""
    if m < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")

    def tail(x):
        return 1.0 - scipy.special.gammainc(0.5 * m, 0.5 * x)

    lo, hi = 0.0, float(m) + 10.0
    while tail(hi) > alpha:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if tail(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def chi2_statistic(residual, Pz):
    """``z' Pz^-1 z`` for one residual or a stack of residuals (last axis)."""
    z = np.asarray(residual, dtype=float)
    Pz = np.atleast_2d(np.asarray(Pz, dtype=float))
    if z.shape[-1] != Pz.shape[0]:
        raise DimensionMismatch(f"residual length {z.shape[-1]} does not match Pz {Pz.shape}")
    try:
        sol = lu_solve(Pz, z.reshape(-1, Pz.shape[0]).T).T
    except SingularMatrix as exc:
        raise SingularCovariance("innovation covariance is singular") from exc
    if np.min(np.linalg.eigvalsh(0.5 * (Pz + Pz.T))) <= 0:
        raise SingularCovariance("innovation covariance must be positive definite")
    stat = np.einsum("ij,ij->i", z.reshape(-1, Pz.shape[0]), sol)
    return float(stat[0]) if z.ndim == 1 else stat.reshape(z.shape[:-1])


@dataclass(frozen=True)
class DetectorSpec:
    """Chi-square detector summing the last ``window_T1 + 1`` normalized residuals."""

    false_alarm_rate: float
    statistic_dim: int
    Pz: np.ndarray
    window_T1: int = 0
    threshold: float = field(init=False)

    def __post_init__(self):
        Pz = np.atleast_2d(np.asarray(self.Pz, dtype=float))
        if Pz.shape != (self.statistic_dim, self.statistic_dim):
            raise DimensionMismatch("Pz must be statistic_dim x statistic_dim")
        if self.window_T1 < 0:
            raise ValueError("window_T1 must be nonnegative")
        object.__setattr__(self, "Pz", Pz)
        object.__setattr__(self, "threshold", chi2_threshold(self.statistic_dim * (self.window_T1 + 1), self.false_alarm_rate))

    def alarm(self, stats):
        """Alarm decision from the sum of per-step statistics over the detector window."""
        return np.asarray(stats) > self.threshold


@dataclass
class TransitionKernel:
    """``probs[i, j, l, h] = P(next mode h | mode l, attack i, subsystem j)``.

    ``alarm_rate`` and ``n_trials`` keep the Monte Carlo detector statistics
    behind the source-mode ``NO_DETECTION`` rows.
    """

    probs: np.ndarray
    alarm_rate: np.ndarray | None = None
    n_trials: int = 0

    @property
    def shape(self):
        return self.probs.shape[:2]

    def row(self, i, j, source):
        return self.probs[i, j, int(source)]

    def check(self, tol=1e-9):
        P = self.probs
        problems = []
        if P.ndim != 4 or P.shape[2:] != (N_MODES, N_MODES):
            problems.append(f"kernel must have shape (M, N, 3, 3), got {P.shape}")
            return problems
        if np.any(P < 0) or np.any(P > 1):
            problems.append("kernel entries outside [0, 1]")
        if np.any(np.abs(P.sum(axis=3) - 1.0) > tol):
            problems.append("kernel rows do not sum to 1")
        safe = np.zeros(N_MODES)
        safe[CyberMode.SAFE] = 1.0
        if np.any(np.abs(P[:, :, CyberMode.SAFE] - safe) > tol):
            problems.append("safe mode is not absorbing")
        return problems

    def standard_error(self):
        if self.alarm_rate is None or self.n_trials == 0:
            return None
        return np.sqrt(self.alarm_rate * (1.0 - self.alarm_rate) / self.n_trials)

    def to_csv(self, path):
        M, N = self.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "source_mode", "p_safe", "p_nodetect", "p_false"])
            for i in range(M):
                for j in range(N):
                    for l in CyberMode:
                        w.writerow([i, j, l.label] + [repr(float(p)) for p in self.probs[i, j, l]])

    @classmethod
    def from_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for r in reader:
                rows.append(r)
        if not rows:
            raise ValueError(f"{path}: empty kernel file")
        labels = {m.label: m for m in CyberMode}
        M = 1 + max(int(r["i"]) for r in rows)
        N = 1 + max(int(r["j"]) for r in rows)
        probs = np.full((M, N, N_MODES, N_MODES), np.nan)
        for r in rows:
            l = labels[r["source_mode"]]
            probs[int(r["i"]), int(r["j"]), l] = [float(r["p_safe"]), float(r["p_nodetect"]), float(r["p_false"])]
        if np.isnan(probs).any():
            raise ValueError(f"{path}: kernel file is missing rows")
        kernel = cls(probs)
        problems = kernel.check()
        if problems:
            raise ValueError(f"{path}: " + "; ".join(problems))
        return kernel


def _psd_sqrt(S):
    vals, vecs = np.linalg.eigh(0.5 * (S + S.T))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def alarm_probability(plant: PlantModel, subsystem: Subsystem, action: AttackAction, n_trials, rng, burn_in=60):
    """Monte Carlo probability that the detector fires at the decision step of ``action``.

    Trials run ``burn_in`` steps of unattacked closed-loop operation first.
    A replay of ``d`` steps plays back the last ``d`` clean outputs recorded
    before onset and is judged at its final step; an injection is judged at
    onset; no attack is judged on the step right after burn-in.
    """
    det = subsystem.detector
    if det is None:
        raise ValueError(f"subsystem {subsystem.name!r} has no detector")
    K, L = subsystem.kalman_gain, subsystem.controller_gain
    A, B, C = plant.A, plant.B, plant.C
    sq_w, sq_v = _psd_sqrt(plant.Q), _psd_sqrt(plant.R)
    sq_u = _psd_sqrt(subsystem.watermark_cov)
    has_wm = bool(np.any(subsystem.watermark_cov))
    Pz_inv = np.linalg.inv(det.Pz)
    d = action.delay_steps if action.kind is AttackKind.REPLAY else 1
    n_steps = burn_in + d
    recorded = deque(maxlen=max(d, 1))
    recent = deque(maxlen=det.window_T1 + 1)

    x = np.zeros((n_trials, plant.n))
    pred = np.zeros((n_trials, plant.n))
    for t in range(n_steps):
        y = x @ C.T + rng.standard_normal((n_trials, plant.m)) @ sq_v.T
        if t < burn_in or action.kind is AttackKind.NONE:
            y_del = y
        elif action.kind is AttackKind.INJECT:
            y_del = y + action.bias[None]
        else:
            y_del = recorded.popleft()
        if t < burn_in:
            recorded.append(y)
        z = y_del - pred @ C.T
        recent.append(np.einsum("ij,jk,ik->i", z, Pz_inv, z))
        x_filt = pred + z @ K.T
        u = x_filt @ L.T
        if has_wm:
            u = u + rng.standard_normal((n_trials, u.shape[1])) @ sq_u.T
        pred = x_filt @ A.T + u @ B.T
        x = x @ A.T + u @ B.T + rng.standard_normal((n_trials, plant.n)) @ sq_w.T
    stat = np.sum(recent, axis=0)
    return float(np.mean(det.alarm(stat)))


def estimate_transition_kernel(plant, subsystems, attack_actions, window=None, n_trials=20_000, seed=0, burn_in=60):
    """Per-pair mode transition kernel.

    From NO_DETECTION: an alarm under an attack (i > 0) moves to SAFE, an alarm
    with no attack to FALSE_ALARM. Attack 0 rows use the exact false-alarm rate.
    FALSE_ALARM restarts into NO_DETECTION; SAFE is absorbing. Detector
    statistics are taken at steady state, so ``window`` is accepted for
    interface symmetry but unused.

    Each (i, j) pair draws from its own stream seeded by ``(seed, i * N + j)``.
    """
    attack_actions = list(attack_actions)
    subsystems = list(subsystems)
    M, N = len(attack_actions), len(subsystems)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    probs = np.zeros((M, N, N_MODES, N_MODES))
    alarm_rate = np.zeros((M, N))
    for i, action in enumerate(attack_actions):
        for j, sub in enumerate(subsystems):
            if action.kind is AttackKind.NONE:
                rate = sub.detector.false_alarm_rate
            else:
                rng = np.random.default_rng([int(seed), i * N + j])
                rate = alarm_probability(plant, sub, action, n_trials, rng, burn_in=burn_in)
            alarm_rate[i, j] = rate
            if action.kind is AttackKind.NONE:
                probs[i, j, CyberMode.NO_DETECTION] = (0.0, 1.0 - rate, rate)
            else:
                probs[i, j, CyberMode.NO_DETECTION] = (rate, 1.0 - rate, 0.0)
            probs[i, j, CyberMode.SAFE] = (1.0, 0.0, 0.0)
            probs[i, j, CyberMode.FALSE_ALARM] = (0.0, 1.0, 0.0)
    return TransitionKernel(probs, alarm_rate=alarm_rate, n_trials=int(n_trials))


__all__ = [
    "CyberMode",
    "N_MODES",
    "DetectorSpec",
    "TransitionKernel",
    "chi2_threshold",
    "chi2_statistic",
    "alarm_probability",
    "estimate_transition_kernel",
]
