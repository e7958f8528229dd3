import time

import numpy as np
import pytest

from oracles import game_2x2, pair_step, stage_payoffs
from secure_game.control import LqgWeights, PlantModel
from secure_game.detection import CyberMode, TransitionKernel
from secure_game.dynamics import AttackAction, EstimateWindow, Subsystem
from secure_game.game import HybridGame, HybridGameState, MixedStrategyProfile, WindowBatch, build_stage_payoff, initial_mode_dist
from secure_game.matrix_game import solve_zero_sum, solve_zero_sum_reference
from secure_game.moving_horizon import (
    LookaheadValues,
    MovingHorizonResult,
    auxiliary_matrices,
    convergence_diagnostic,
    lookahead_values,
    run_moving_horizon,
    stage_solve,
)
from secure_game.scenario import random_toy_game


def scalar_game(M=1, p_f=4.0, nd_row=(0.0, 1.0, 0.0)):
    plant = PlantModel([[0.9]], [[1.0]], [[1.0]], [[1.0]], [[1.0]], [0.0], [[1.0]])
    sub = Subsystem([[-0.3]], [[0.0]], [[0.5]])
    attacks = [AttackAction.no_attack()] + [AttackAction.inject([float(b)]) for b in range(1, M)]
    P = np.zeros((M, 1, 3, 3))
    P[:, :, CyberMode.SAFE] = (1, 0, 0)
    P[:, :, CyberMode.NO_DETECTION] = nd_row
    P[:, :, CyberMode.FALSE_ALARM] = (0, 1, 0)
    game = HybridGame(plant, [sub], attacks, LqgWeights([[1.0]], [[1.0]]), p_f, TransitionKernel(P), 1)
    window = EstimateWindow([[1.0], [2.0]], [[0.5], [1.5]], [2.5])
    return game, HybridGameState(window, initial_mode_dist())


class TestLookahead:
    def test_one_by_one_is_next_payoff(self):
        game, state = scalar_game()
        la = lookahead_values(game, WindowBatch.from_window(state.window))
        w = state.window
        _, pred, x, y = pair_step(game, w.prediction, w.raw_outputs, w.true_state, 0, 0)
        nxt = stage_payoffs(game, pred, np.vstack([w.raw_outputs[1:], y]), x)
        for l in range(3):
            for h in range(3):
                assert la.v[l, h, 0, 0] == pytest.approx(nxt[h, 0, 0], rel=1e-12)

    def test_false_alarm_entries_are_penalty(self, quick_scenario):
        g = quick_scenario.game
        la = lookahead_values(g, WindowBatch.from_window(quick_scenario.initial_state.window))
        assert np.all(la.v[:, CyberMode.FALSE_ALARM] == g.p_f)
        assert np.all(la.v >= 0)

    def test_zero_payoffs(self):
        plant = PlantModel(np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.zeros(2), np.eye(2))
        sub = Subsystem(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
        attacks = [AttackAction.no_attack(), AttackAction.replay(1)]
        P = np.zeros((2, 1, 3, 3))
        P[:, :, :, 1] = 1.0
        P[:, :, CyberMode.SAFE] = (1, 0, 0)
        game = HybridGame(plant, [sub], attacks, LqgWeights(np.eye(2), np.eye(2)), 3.0, TransitionKernel(P), 1)
        w = EstimateWindow(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros(2))
        la = lookahead_values(game, WindowBatch.from_window(w))
        assert np.all(la.v[:, :2] == 0) and np.all(la.v[:, 2] == 3.0)

    def test_safe_lookahead_matches_full_solve(self, quick_scenario):
        """The SAFE shortcut (min of row 0) equals the LP value of the neutralized matrix."""
        g = quick_scenario.game
        w = quick_scenario.initial_state.window
        la = lookahead_values(g, WindowBatch.from_window(w))
        for i in range(g.M):
            for j in range(g.N):
                _, pred, x, y = pair_step(g, w.prediction, w.raw_outputs, w.true_state, i, j)
                r = stage_payoffs(g, pred, np.vstack([w.raw_outputs[1:], y]), x)
                assert la.v[1, 0, i, j] == pytest.approx(solve_zero_sum(r[0]).value, rel=1e-9)
                assert la.v[1, 1, i, j] == pytest.approx(solve_zero_sum(r[1]).value, rel=1e-9)


class TestStageSolve:
    def test_degenerate_lookahead_gives_one_shot_value(self, rng):
        game, state = random_toy_game(rng)
        P = game.kernel.probs.copy()
        P[:, :, CyberMode.NO_DETECTION] = (0, 1, 0)
        game.kernel = TransitionKernel(P)
        r = build_stage_payoff(game, state.window)
        v = np.zeros((3, 3, 2, 2))
        v[:, 2] = game.p_f
        Q = auxiliary_matrices(game, r, LookaheadValues(v))
        assert np.array_equal(Q[CyberMode.NO_DETECTION], r[CyberMode.NO_DETECTION])
        sol = stage_solve(Q)
        assert sol.values[1] == pytest.approx(solve_zero_sum(r[1]).value, abs=1e-12)

    def test_absorbing_safe_with_zero_payoffs(self, rng):
        game, _ = random_toy_game(rng)
        r = np.zeros((3, 2, 2))
        v = rng.uniform(0, 5, size=(3, 3, 2, 2))
        Q = auxiliary_matrices(game, r, LookaheadValues(v))
        assert np.allclose(Q[CyberMode.SAFE], v[CyberMode.SAFE, CyberMode.SAFE])

    def test_hand_built_two_by_two(self):
        Q = np.array([[[3.0, 1.0], [1.0, 2.0]]] * 3)
        sol = stage_solve(Q)
        assert np.allclose(sol.values, game_2x2(Q[0]), atol=1e-12)

    def test_auxiliary_dominates_payoff(self, quick_scenario):
        res = run_moving_horizon(quick_scenario.game, quick_scenario.initial_state, 4)
        g = quick_scenario.game
        state = quick_scenario.initial_state
        r0 = build_stage_payoff(g, state.window)
        assert np.all(res.Q[0] >= r0 - 1e-9)


class TestRun:
    def test_single_stage(self, rng):
        game, state = random_toy_game(rng)
        res = run_moving_horizon(game, state, 1)
        sol = stage_solve(build_stage_payoff(game, state.window))
        assert np.array_equal(res.values[0], sol.values)
        assert np.array_equal(res.strategies[0].f, sol.f)
        assert res.solve_count == 3

    def test_no_choice_is_pure(self):
        game, state = scalar_game()
        res = run_moving_horizon(game, state, 6)
        for prof in res.strategies:
            assert np.array_equal(prof.f, np.ones((3, 1))) and np.array_equal(prof.g, np.ones((3, 1)))

    @pytest.mark.parametrize("K", [1, 2, 5, 9])
    def test_solve_count(self, quick_scenario, K):
        g = quick_scenario.game
        res = run_moving_horizon(g, quick_scenario.initial_state, K)
        MN = g.M * g.N
        assert res.solve_count == (K - 1) * (MN + 3) + 3
        assert res.solve_count <= K * (MN + 3)

    def test_deterministic(self, quick_scenario):
        a = run_moving_horizon(quick_scenario.game, quick_scenario.initial_state, 8)
        b = run_moving_horizon(quick_scenario.game, quick_scenario.initial_state, 8)
        assert np.array_equal(a.values, b.values) and np.array_equal(a.Q, b.Q)
        for x, y in zip(a.strategies, b.strategies):
            assert np.array_equal(x.f, y.f) and np.array_equal(x.g, y.g)

    def test_outputs_valid(self, quick_scenario):
        res = run_moving_horizon(quick_scenario.game, quick_scenario.initial_state, 10)
        assert res.values.shape == (10, 3) and np.all(np.isfinite(res.values))
        for prof in res.strategies:
            assert np.all(prof.f >= 0) and np.allclose(prof.f.sum(axis=1), 1, atol=1e-9)
            assert np.all(prof.g >= 0) and np.allclose(prof.g.sum(axis=1), 1, atol=1e-9)

    def test_rejects_zero_horizon(self, rng):
        game, state = random_toy_game(rng)
        with pytest.raises(ValueError):
            run_moving_horizon(game, state, 0)

    def test_two_stage_toys_against_fictitious_play(self, rng):
        """Re-derive both stage values pair by pair and solve every game by fictitious play."""

        def fp(Q):
            return solve_zero_sum_reference(Q, iters=100_000).value

        for _ in range(20):
            game, state = random_toy_game(rng)
            res = run_moving_horizon(game, state, 2)
            w = state.window
            P = game.kernel.probs
            r1 = stage_payoffs(game, w.prediction, w.raw_outputs, w.true_state)
            steps = {}
            for i in range(2):
                for j in range(2):
                    for safe in (False, True):
                        _, pred, x, y = pair_step(game, w.prediction, w.raw_outputs, w.true_state, i, j, safe)
                        r2 = stage_payoffs(game, pred, np.vstack([w.raw_outputs[1:], y]), x)
                        steps[i, j, safe] = (pred, x, y, [fp(r2[h]) for h in range(3)])
            for l in range(3):
                Q = r1[l].copy()
                for i in range(2):
                    for j in range(2):
                        v = steps[i, j, l == CyberMode.SAFE][3]
                        Q[i, j] += sum(P[i, j, l, h] * v[h] for h in range(3))
                assert res.values[0, l] == pytest.approx(fp(Q), abs=0.05)
            # the start is NO_DETECTION, so the mixed update weights pairs by that mode's strategies
            f, g = res.strategies[0].f[1], res.strategies[0].g[1]
            wts = np.outer(f, g)
            pred = sum(wts[i, j] * steps[i, j, False][0] for i in range(2) for j in range(2))
            x = sum(wts[i, j] * steps[i, j, False][1] for i in range(2) for j in range(2))
            y = sum(wts[i, j] * steps[i, j, False][2] for i in range(2) for j in range(2))
            r2 = stage_payoffs(game, pred, np.vstack([w.raw_outputs[1:], y]), x)
            for l in range(3):
                assert res.values[1, l] == pytest.approx(fp(r2[l]), abs=0.05)


def fake_result(fs, Qs):
    profiles = [MixedStrategyProfile(np.tile(f, (3, 1)), np.tile(f, (3, 1))) for f in fs]
    K = len(fs)
    return MovingHorizonResult(profiles, np.zeros((K, 3)), np.array(Qs), np.zeros(K), np.zeros((K, 3)), None)


class TestConvergence:
    def test_constant_strategies_converge(self):
        fs = [np.array([0.3, 0.7])] * 14
        rep = convergence_diagnostic(fake_result(fs, [np.ones((3, 2, 2))] * 14), tail_window=10)
        assert rep.converged and rep.strategy_drift == 0 and rep.Q_drift == 0

    def test_alternating_pure_strategies(self):
        fs = [np.array([1.0, 0.0]) if k % 2 else np.array([0.0, 1.0]) for k in range(14)]
        rep = convergence_diagnostic(fake_result(fs, [np.ones((3, 2, 2))] * 14), tail_window=10)
        assert not rep.converged and rep.strategy_drift == 1.0

    def test_needs_enough_stages(self):
        with pytest.raises(ValueError):
            convergence_diagnostic(fake_result([np.array([1.0, 0.0])] * 5, [np.ones((3, 2, 2))] * 5), tail_window=10)

    def test_long_reactor_run_reports(self, quick_scenario):
        res = run_moving_horizon(quick_scenario.game, quick_scenario.initial_state, 500)
        rep = convergence_diagnostic(res)
        assert np.isfinite(rep.strategy_drift) and np.isfinite(rep.Q_drift)


def best_time(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


@pytest.mark.parametrize("K", [50, 100, 250])
def test_linear_time_scaling(quick_scenario, K):
    g, s = quick_scenario.game, quick_scenario.initial_state
    run_moving_horizon(g, s, 5)  # warm up
    t1 = best_time(lambda: run_moving_horizon(g, s, K))
    t2 = best_time(lambda: run_moving_horizon(g, s, 2 * K))
    assert 1.5 <= t2 / t1 <= 3.0
