"""Experiment orchestration: policies, Monte Carlo rollouts, scaling benchmark and plot-data emission."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .detection import N_MODES, CyberMode
from .errors import BudgetExceeded, NumericalFailure
from .game import MixedStrategyProfile, WindowBatch, evaluate_total_payoff, stage_quantities
from .moving_horizon import run_moving_horizon
from .scenario import Scenario
from .suboptimal import robust_value_iteration

log = logging.getLogger(__name__)

POLICY_MH = "moving_horizon"
POLICY_SUBOPT = "suboptimal"


def always_policy(K, N, j):
    g = np.zeros((K, N_MODES, N))
    g[:, :, j] = 1.0
    return g


def always_name(j):
    return f"always_sub{j + 1}"


@dataclass
class RolloutResult:
    """Monte Carlo evaluation of one system policy against the scheduled attack."""

    stage_cost: np.ndarray  # (K,) mean cost per stage
    stage_se: np.ndarray  # (K,) standard error per stage
    totals: np.ndarray = field(repr=False)  # (R,) total cost per rollout
    mode_freq: np.ndarray = field(default=None)  # (K, 3) empirical mode frequencies

    @property
    def total(self):
        return float(self.totals.mean())

    @property
    def total_se(self):
        return float(self.totals.std(ddof=1) / np.sqrt(len(self.totals))) if len(self.totals) > 1 else 0.0


def _rollout_uniforms(n_rollouts, K, seed):
    """Two uniforms per stage per rollout, each rollout from its own stream ``(seed, r)``."""
    return np.stack([np.random.default_rng([int(seed), r]).random((K, 2)) for r in range(n_rollouts)])


def rollout_policy(scn: Scenario, g_seq, n_rollouts, seed, schedule=None) -> RolloutResult:
    """Sample subsystem choices and mode transitions; physics runs in expectation mode along each path.

    In SAFE the detected attack is neutralized, so the pair acts like
    ``(0, j)``; the kernel row is the absorbing one either way.
    """
    game = scn.game
    g_seq = np.asarray(g_seq, dtype=float)
    K = g_seq.shape[0]
    sched = scn.attack_schedule if schedule is None else np.asarray(schedule)
    U = _rollout_uniforms(n_rollouts, K, seed)
    batch = WindowBatch.from_window(scn.initial_state.window)
    batch = WindowBatch(
        np.repeat(batch.pred, n_rollouts, 0), np.repeat(batch.raw, n_rollouts, 0), np.repeat(batch.x, n_rollouts, 0)
    )
    mode = np.full(n_rollouts, int(np.argmax(scn.initial_state.mode_dist)))
    if np.max(scn.initial_state.mode_dist) < 1.0:
        # mixed initial modes draw from a dedicated stream
        mode = np.random.default_rng([int(seed), n_rollouts]).choice(N_MODES, n_rollouts, p=scn.initial_state.mode_dist)
    costs = np.zeros((n_rollouts, K))
    freq = np.zeros((K, N_MODES))
    rows = np.arange(n_rollouts)
    P = game.kernel.probs
    for k in range(K):
        freq[k] = np.bincount(mode, minlength=N_MODES) / n_rollouts
        q = stage_quantities(game, batch)
        i_att = int(sched[k])
        i_eff = np.where(mode == CyberMode.SAFE, 0, i_att)
        cum_g = np.cumsum(g_seq[k][mode], axis=1)
        j = np.minimum((U[:, k, 0][:, None] >= cum_g).sum(axis=1), game.N - 1)
        c = q.payoff[rows, i_eff, j]
        costs[:, k] = np.where(mode == CyberMode.FALSE_ALARM, game.p_f, c)
        cum_p = np.cumsum(P[i_att, j, mode], axis=1)
        mode = np.minimum((U[:, k, 1][:, None] >= cum_p).sum(axis=1), N_MODES - 1)
        raw = np.concatenate([batch.raw[:, 1:], q.next_y[rows, i_eff, j][:, None]], axis=1)
        batch = WindowBatch(q.next_pred[rows, i_eff, j], raw, q.next_x[rows, i_eff, j])
    if not np.all(np.isfinite(costs)):
        raise NumericalFailure("rollout costs overflowed; shorten the horizon or stabilize the scenario")
    se = costs.std(axis=0, ddof=1) / np.sqrt(n_rollouts) if n_rollouts > 1 else np.zeros(K)
    return RolloutResult(costs.mean(axis=0), se, costs.sum(axis=1), freq)


def mode_probability_series(scn: Scenario, g_seq, schedule=None):
    """Exact mode distribution at each stage under a system policy and the scheduled attack, shape (K, 3)."""
    game = scn.game
    sched = scn.attack_schedule if schedule is None else np.asarray(schedule)
    p = scn.initial_state.mode_dist.copy()
    out = []
    for k, g in enumerate(np.asarray(g_seq)):
        out.append(p.copy())
        # rows of the kernel for attack sched[k], weighted by the system's per-mode choice
        p = np.einsum("l,lj,jlh->h", p, g, game.kernel.probs[int(sched[k])])
    return np.array(out)


def scheduled_attacker(scn: Scenario, K):
    f = np.zeros((K, N_MODES, scn.game.M))
    f[np.arange(K), :, scn.attack_schedule[:K]] = 1.0
    return f


@dataclass
class PolicyReport:
    name: str
    g: np.ndarray  # (K, 3, N) system strategies
    stage_cost: np.ndarray  # Monte Carlo mean per stage
    stage_se: np.ndarray
    total: float
    total_se: float
    p_modes: np.ndarray  # (K, 3) exact mode distribution
    p_modes_mc: np.ndarray  # (K, 3) Monte Carlo mode frequencies
    model_total: float  # strategy-weighted game model total against the scheduled attack
    f: np.ndarray | None = None  # (K, 3, M) attacker strategies the algorithm assumed

    @property
    def final_p_safe(self):
        return float(self.p_modes[-1, CyberMode.SAFE])


@dataclass
class RunReport:
    scenario: str
    K: int
    policies: dict  # name -> PolicyReport
    wall_time: dict = field(default_factory=dict)
    solve_count: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)  # algorithm -> (K, 3) values per stage and mode
    scaling: list = field(default_factory=list)  # rows (algorithm, K, wall_time, solve_count)
    p_f: float = 0.0
    kernel_alarm_rate: np.ndarray | None = None


def evaluate_policy(scn: Scenario, name, g_seq, n_rollouts, seed, f=None) -> PolicyReport:
    K = len(g_seq)
    ro = rollout_policy(scn, g_seq, n_rollouts, seed)
    att = scheduled_attacker(scn, K)
    seq = [MixedStrategyProfile(att[k], g_seq[k]) for k in range(K)]
    model_total = evaluate_total_payoff(scn.game, scn.initial_state, seq).total
    return PolicyReport(
        name=name,
        g=np.asarray(g_seq),
        stage_cost=ro.stage_cost,
        stage_se=ro.stage_se,
        total=ro.total,
        total_se=ro.total_se,
        p_modes=mode_probability_series(scn, g_seq),
        p_modes_mc=ro.mode_freq,
        model_total=model_total,
        f=f,
    )


def run_comparison(scn: Scenario, algorithm=None, budget=None, n_rollouts=None, seed=None, backend=None) -> RunReport:
    """Solve the game with the selected algorithms and evaluate them next to the fixed-subsystem baselines."""
    cfg = scn.config
    algorithm = algorithm or cfg.algorithm
    budget = cfg.budget if budget is None else budget
    n_rollouts = cfg.mc["rollouts"] if n_rollouts is None else n_rollouts
    seed = cfg.seed if seed is None else seed
    K, N = cfg.K, scn.game.N
    report = RunReport(cfg.name, K, {}, p_f=scn.game.p_f, kernel_alarm_rate=scn.game.kernel.alarm_rate)
    # policies share the rollout seed so their comparison uses common random numbers
    if algorithm in ("subopt", "both"):
        try:
            so = robust_value_iteration(scn.game, scn.initial_state, K, budget=budget, backend=backend)
        except BudgetExceeded as exc:
            log.warning("skipping the pure-history algorithm: %s", exc)
            report.skipped[POLICY_SUBOPT] = str(exc)
        else:
            g = np.array([s.g for s in so.strategies])
            f = np.array([s.f for s in so.strategies])
            report.policies[POLICY_SUBOPT] = evaluate_policy(scn, POLICY_SUBOPT, g, n_rollouts, seed, f)
            report.wall_time[POLICY_SUBOPT] = so.wall_time
            report.solve_count[POLICY_SUBOPT] = so.solve_count
            report.values[POLICY_SUBOPT] = so.v_bar
    if algorithm in ("mh", "both"):
        mh = run_moving_horizon(scn.game, scn.initial_state, K, backend=backend)
        g = np.array([s.g for s in mh.strategies])
        f = np.array([s.f for s in mh.strategies])
        report.policies[POLICY_MH] = evaluate_policy(scn, POLICY_MH, g, n_rollouts, seed, f)
        report.wall_time[POLICY_MH] = mh.wall_time
        report.solve_count[POLICY_MH] = mh.solve_count
        report.values[POLICY_MH] = mh.values
    for j in range(N):
        name = always_name(j)
        report.policies[name] = evaluate_policy(scn, name, always_policy(K, N, j), n_rollouts, seed)
    return report


def _time_min(fn, repeats):
    best, out = np.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run_scaling_benchmark(scn: Scenario, K_list, K_list_subopt=(), repeats=3, budget=None, backend=None):
    """Wall-clock time (best of ``repeats``) and solve counts per horizon, as rows (algorithm, K, seconds, solves)."""
    for lst in (K_list, K_list_subopt):
        if list(lst) != sorted(lst):
            raise ValueError("K lists must be ascending")
    budget = scn.config.budget if budget is None else budget
    rows = []
    for K in K_list:
        try:
            t, res = _time_min(lambda: run_moving_horizon(scn.game, scn.initial_state, K, backend=backend), repeats)
            rows.append((POLICY_MH, int(K), t, res.solve_count))
        except NumericalFailure as exc:
            log.warning("moving horizon at K=%d: %s", K, exc)
            rows.append((POLICY_MH, int(K), float("nan"), -1))
    for K in K_list_subopt:
        try:
            t, res = _time_min(
                lambda: robust_value_iteration(scn.game, scn.initial_state, K, budget=budget, backend=backend), repeats
            )
            rows.append((POLICY_SUBOPT, int(K), t, res.solve_count))
        except BudgetExceeded as exc:
            log.warning("pure-history algorithm at K=%d: %s", K, exc)
            break
    return rows


def _fmt(x):
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


COST_HEADER = ["k", "policy", "expected_cost"]
MODE_HEADER = ["k", "policy", "p_safe", "p_nodetect", "p_false"]
STRATEGY_HEADER = ["k", "policy", "mode", "player", "action", "probability"]
VALUES_HEADER = ["k", "algorithm", "mode", "value"]
SCALING_HEADER = ["algorithm", "K", "wall_time_s", "solve_count"]


def emit_plot_data(report: RunReport, outdir):
    """Write the plot-ready CSVs; ``k`` is 1-based. Returns the list of files written."""
    os.makedirs(outdir, exist_ok=True)
    names = list(report.policies)
    files = []

    path = os.path.join(outdir, "cost_series.csv")
    rows = [(k + 1, n, _fmt(report.policies[n].stage_cost[k])) for n in names for k in range(report.K)]
    _write_csv(path, COST_HEADER, rows)
    files.append(path)

    path = os.path.join(outdir, "mode_prob.csv")
    rows = [(k + 1, n, *map(_fmt, report.policies[n].p_modes[k])) for n in names for k in range(report.K)]
    _write_csv(path, MODE_HEADER, rows)
    files.append(path)

    path = os.path.join(outdir, "strategy_series.csv")
    rows = []
    for n in names:
        pol = report.policies[n]
        for k in range(report.K):
            for l in CyberMode:
                for j, pr in enumerate(pol.g[k, l]):
                    rows.append((k + 1, n, l.label, "system", j, _fmt(pr)))
                if pol.f is not None:
                    for i, pr in enumerate(pol.f[k, l]):
                        rows.append((k + 1, n, l.label, "attacker", i, _fmt(pr)))
    _write_csv(path, STRATEGY_HEADER, rows)
    files.append(path)

    path = os.path.join(outdir, "stage_values.csv")
    rows = [
        (k + 1, a, l.label, _fmt(v[k, l])) for a, v in report.values.items() for k in range(len(v)) for l in CyberMode
    ]
    _write_csv(path, VALUES_HEADER, rows)
    files.append(path)

    files.append(write_scaling(report.scaling, os.path.join(outdir, "scaling.csv")))
    return files


def write_scaling(rows, path):
    _write_csv(path, SCALING_HEADER, [(a, K, _fmt(t), c) for a, K, t, c in rows])
    return path


def report_summary(report: RunReport):
    """JSON-serializable summary of a run (totals, standard errors, final detection probability, timings)."""
    out = {
        "scenario": report.scenario,
        "K": report.K,
        "p_f": report.p_f,
        "skipped": report.skipped,
        "solve_count": report.solve_count,
        "wall_time_s": report.wall_time,
        "values_stage1": {k: [float(x) for x in v[0]] for k, v in report.values.items()},
        "policies": {},
    }
    if report.kernel_alarm_rate is not None:
        out["alarm_rate"] = report.kernel_alarm_rate.tolist()
    for n, p in report.policies.items():
        out["policies"][n] = {
            "total_cost": p.total,
            "total_cost_se": p.total_se,
            "model_total": p.model_total,
            "final_p_safe": p.final_p_safe,
        }
    return out


def write_summary(report: RunReport, path):
    with open(path, "w") as fh:
        json.dump(report_summary(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


__all__ = [
    "POLICY_MH",
    "POLICY_SUBOPT",
    "RolloutResult",
    "PolicyReport",
    "RunReport",
    "always_policy",
    "always_name",
    "rollout_policy",
    "mode_probability_series",
    "evaluate_policy",
    "run_comparison",
    "run_scaling_benchmark",
    "emit_plot_data",
    "report_summary",
    "write_summary",
    "write_scaling",
]
