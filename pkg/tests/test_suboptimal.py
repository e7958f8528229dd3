import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lp_game_value, pair_step
from secure_game.detection import CyberMode
from secure_game.errors import BudgetExceeded
from secure_game.game import HybridGameState, build_stage_payoff, initial_mode_dist
from secure_game.matrix_game import solve_zero_sum
from secure_game.moving_horizon import run_moving_horizon
from secure_game.scenario import random_toy_game
from secure_game.suboptimal import (
    backup_matrices,
    enumerate_pure_histories,
    expected_solve_count,
    history_count,
    pure_attacker_payoffs,
    robust_value_iteration,
    upper_bound_certificate,
)
from test_game import hand_game, window_at


class TestHistories:
    def test_first_stage_single_empty_history(self, rng):
        game, state = random_toy_game(rng)
        hs = enumerate_pure_histories(game, state, 1)
        assert len(hs) == 1 and hs[0].actions == ()
        assert np.array_equal(hs[0].window.raw_outputs, state.window.raw_outputs)

    def test_count_two_by_two(self, rng):
        game, state = random_toy_game(rng)
        hs = enumerate_pure_histories(game, state, 3)
        assert len(hs) == 16
        assert all(len(h.actions) == 2 for h in hs)
        assert all(0 <= i < 2 and 0 <= j < 2 for h in hs for i, j in h.actions)

    def test_history_windows_replay_actions(self, rng):
        game, state = random_toy_game(rng, K_T=2)
        for h in enumerate_pure_histories(game, state, 3):
            w = state.window
            pred, raw, x = w.prediction, w.raw_outputs, w.true_state
            for i, j in h.actions:
                _, pred, x, y = pair_step(game, pred, raw, x, i, j)
                raw = np.vstack([raw[1:], y])
            assert np.allclose(h.window.prediction, pred, atol=1e-12)
            assert np.allclose(h.window.raw_outputs, raw, atol=1e-12)

    def test_budget_exceeded(self, quick_scenario):
        g = quick_scenario.game
        assert (g.M, g.N) == (5, 2)
        with pytest.raises(BudgetExceeded) as exc:
            robust_value_iteration(g, quick_scenario.initial_state, 50)
        assert exc.value.count == history_count(5, 2, 50)
        assert exc.value.count > 10**49

    def test_history_count(self):
        assert history_count(2, 2, 3) == 1 + 4 + 16
        assert expected_solve_count(5, 2, 3) == 3 * (1 + 10 + 100)


class TestRobustValueIteration:
    def test_single_stage_is_matrix_game(self, rng):
        for _ in range(10):
            game, state = random_toy_game(rng)
            res = robust_value_iteration(game, state, 1)
            r = build_stage_payoff(game, state.window)
            for l in range(3):
                assert res.v_bar[0, l] == pytest.approx(lp_game_value(r[l]), abs=1e-9)

    def test_zero_payoffs(self):
        game = hand_game(np.zeros((1, 2)), np.zeros((2, 2)), p_f=0.0)
        state = HybridGameState(window_at([0.0, 0.0]), initial_mode_dist())
        res = robust_value_iteration(game, state, 4)
        assert np.all(res.v_bar == 0)

    @pytest.mark.parametrize("K", [1, 2, 3, 4])
    def test_solve_count(self, quick_scenario, K):
        g = quick_scenario.game
        res = robust_value_iteration(g, quick_scenario.initial_state, K)
        assert res.solve_count == sum(3 * (g.M * g.N) ** (k - 1) for k in range(1, K + 1))
        assert res.solve_count == expected_solve_count(g.M, g.N, K)

    @pytest.mark.parametrize("continuation", ["stage_max", "child"])
    def test_values_nonnegative_and_valid(self, rng, continuation):
        for _ in range(5):
            game, state = random_toy_game(rng)
            res = robust_value_iteration(game, state, 3, continuation=continuation)
            assert np.all(res.v_bar >= 0)
            for prof in res.strategies:
                assert np.all(prof.f >= 0) and np.allclose(prof.f.sum(axis=1), 1, atol=1e-9)

    def test_stage_values_are_max_over_histories(self, rng):
        game, state = random_toy_game(rng)
        res = robust_value_iteration(game, state, 2)
        r2 = [build_stage_payoff(game, h.window) for h in enumerate_pure_histories(game, state, 2)]
        for l in range(3):
            assert res.v_bar[1, l] == pytest.approx(max(lp_game_value(r[l]) for r in r2), abs=1e-9)

    def test_stage_max_dominates_child(self, rng):
        for _ in range(5):
            game, state = random_toy_game(rng)
            a = robust_value_iteration(game, state, 3, continuation="stage_max")
            b = robust_value_iteration(game, state, 3, continuation="child")
            assert np.all(a.v_bar >= b.v_bar - 1e-9)

    def test_unknown_continuation(self, rng):
        game, state = random_toy_game(rng)
        with pytest.raises(ValueError):
            robust_value_iteration(game, state, 2, continuation="mean")

    def test_agrees_with_moving_horizon_at_one_stage(self, rng):
        for _ in range(20):
            game, state = random_toy_game(rng)
            a = robust_value_iteration(game, state, 1)
            b = run_moving_horizon(game, state, 1)
            assert np.allclose(a.v_bar[0], b.values[0], atol=1e-9)
            assert np.allclose(a.strategies[0].f, b.strategies[0].f, atol=1e-9)
            assert np.allclose(a.strategies[0].g, b.strategies[0].g, atol=1e-9)


class TestMonotoneBackup:
    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), continuation=st.sampled_from(["stage_max", "child"]))
    def test_raising_continuation_never_lowers_values(self, seed, continuation):
        rng = np.random.default_rng(seed)
        game, state = random_toy_game(rng)
        r = build_stage_payoff(game, state.window)[None]
        v = rng.uniform(0, 10, size=(4, 3))
        bumped = v + rng.uniform(0, 3, size=v.shape) * (rng.random(v.shape) < 0.5)
        Qa = backup_matrices(game, r, v, continuation)
        Qb = backup_matrices(game, r, bumped, continuation)
        assert np.all(Qa >= r - 1e-12)
        assert np.all(Qb >= Qa - 1e-12)
        for l in range(3):
            assert solve_zero_sum(Qb[0, l]).value >= solve_zero_sum(Qa[0, l]).value - 1e-9


class TestCertificate:
    def test_single_stage_reduces_to_saddle(self, rng):
        game, state = random_toy_game(rng)
        res = robust_value_iteration(game, state, 1)
        realized = pure_attacker_payoffs(game, state, res.strategies)
        assert upper_bound_certificate(res.v_bar_1[CyberMode.NO_DETECTION], realized)

    def test_two_stage_toys(self, rng):
        for _ in range(20):
            game, state = random_toy_game(rng)
            res = robust_value_iteration(game, state, 2)
            realized = pure_attacker_payoffs(game, state, res.strategies)
            assert len(realized) == 2 ** (2 * 3)
            assert upper_bound_certificate(res.v_bar_1[CyberMode.NO_DETECTION], realized)

    def test_zero_game(self):
        game = hand_game(np.zeros((1, 2)), np.zeros((2, 2)), p_f=0.0)
        state = HybridGameState(window_at([0.0, 0.0]), initial_mode_dist())
        res = robust_value_iteration(game, state, 2)
        assert upper_bound_certificate(res.v_bar_1[1], pure_attacker_payoffs(game, state, res.strategies))

    def test_certificate_rejects(self):
        assert not upper_bound_certificate(1.0, [0.5, 1.1])
        assert upper_bound_certificate(1.0, [1.0 + 1e-10])
