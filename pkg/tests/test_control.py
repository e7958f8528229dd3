import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import scalar_dare
from secure_game.control import (
    LqgWeights,
    PlantModel,
    dare_residual,
    discretize_zoh,
    expm,
    kalman_gain,
    lqr_gain,
    lu_solve,
    solve_dare,
    spectral_radius,
    stationary_estimate_cost,
)
from secure_game.errors import DimensionMismatch, NonConvergent, SingularMatrix


def scalar_plant(a, b=1.0, c=1.0, q=1.0, r=1.0):
    return PlantModel([[a]], [[b]], [[c]], [[q]], [[r]], [0.0], [[1.0]])


class TestSolveDare:
    def test_zero_dynamics_gives_state_weight(self):
        S = solve_dare([[0.0]], [[1.0]], [[1.0]], [[1.0]])
        assert S[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_scalar_matches_closed_form(self):
        S = solve_dare([[0.5]], [[1.0]], [[1.0]], [[1.0]])
        assert S[0, 0] == pytest.approx(scalar_dare(0.5, 1.0, 1.0, 1.0), abs=1e-9)
        assert S[0, 0] == pytest.approx(1.13278, abs=1e-5)

    def test_matches_scipy_on_reactor(self, reactor_config):
        c = reactor_config
        S = solve_dare(c.A, c.B, c.W, c.U)
        ref = scipy.linalg.solve_discrete_are(c.A, c.B, c.W, c.U)
        assert np.allclose(S, ref, rtol=1e-8, atol=1e-8)

    def test_residual_postcondition(self, reactor_config):
        c = reactor_config
        S = solve_dare(c.A, c.B, c.W, c.U, tol=1e-10)
        assert dare_residual(S, c.A, c.B, c.W, c.U) <= 1e-10
        assert np.array_equal(S, S.T)

    def test_nonconvergent_when_iterations_run_out(self, reactor_config):
        c = reactor_config
        with pytest.raises(NonConvergent) as exc:
            solve_dare(c.A, c.B, c.W, c.U, max_iter=2)
        assert exc.value.iterations == 2

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            solve_dare(np.eye(2), np.ones((3, 1)), np.eye(2), np.eye(1))

    @settings(max_examples=40, deadline=None)
    @given(
        a=st.floats(-1.5, 1.5),
        b=st.floats(0.2, 2.0),
        q=st.floats(0.1, 5.0),
        r=st.floats(0.1, 5.0),
    )
    def test_scalar_property(self, a, b, q, r):
        S = solve_dare([[a]], [[b]], [[q]], [[r]])
        assert S[0, 0] == pytest.approx(scalar_dare(a, b, q, r), rel=1e-8)
        assert dare_residual(S, [[a]], [[b]], [[q]], [[r]]) <= 1e-10


class TestGains:
    def test_kalman_zero_dynamics(self):
        plant = PlantModel([[0.0]], [[1.0]], [[1.0]], [[2.0]], [[1.0]], [0.0], [[1.0]])
        kf = kalman_gain(plant)
        assert kf.P[0, 0] == pytest.approx(2.0)
        assert kf.K[0, 0] == pytest.approx(2.0 / 3.0)
        assert kf.Pz[0, 0] == pytest.approx(3.0)

    def test_kalman_reactor_filter_stable(self, reactor_config):
        c = reactor_config
        plant = PlantModel(c.A, c.B, c.C, c.Q, c.R, c.x0_mean, c.x0_cov)
        kf = kalman_gain(plant)
        assert spectral_radius(c.A - c.A @ kf.K @ c.C) < 1
        ref = scipy.linalg.solve_discrete_are(c.A.T, c.C.T, c.Q, c.R)
        assert np.allclose(kf.P, ref, rtol=1e-8, atol=1e-8)

    def test_kalman_large_noise_shrinks_gain(self):
        small = kalman_gain(scalar_plant(0.9, r=1e8)).K[0, 0]
        assert abs(small) < 1e-6

    def test_lqr_zero_dynamics(self):
        L = lqr_gain(scalar_plant(0.0), LqgWeights([[1.0]], [[1.0]]))
        assert L[0, 0] == pytest.approx(0.0, abs=1e-14)

    def test_lqr_scalar(self):
        L = lqr_gain(scalar_plant(0.5), LqgWeights([[1.0]], [[1.0]]))
        S = scalar_dare(0.5, 1.0, 1.0, 1.0)
        assert L[0, 0] == pytest.approx(-0.5 * S / (S + 1.0), abs=1e-9)
        assert L[0, 0] == pytest.approx(-0.26556, abs=1e-5)

    def test_lqr_reactor_closed_loop_stable(self, reactor_config):
        c = reactor_config
        plant = PlantModel(c.A, c.B, c.C, c.Q, c.R, c.x0_mean, c.x0_cov)
        L = lqr_gain(plant, LqgWeights(c.W, c.U))
        assert spectral_radius(c.A + c.B @ L) < 1

    def test_stationary_cost_watermark_premium(self, reactor_config):
        c = reactor_config
        plant = PlantModel(c.A, c.B, c.C, c.Q, c.R, c.x0_mean, c.x0_cov)
        w = LqgWeights(c.W, c.U)
        kf, L = kalman_gain(plant), lqr_gain(plant, w)
        base = stationary_estimate_cost(plant, w, L, kf)
        wm = stationary_estimate_cost(plant, w, L, kf, watermark_cov=np.eye(2))
        assert base > 0
        assert wm > base + np.trace(c.U) - 1e-9


class TestExpmAndZoh:
    def test_expm_matches_scipy(self, rng):
        for _ in range(20):
            M = rng.normal(scale=3.0, size=(4, 4))
            assert np.allclose(expm(M), scipy.linalg.expm(M), rtol=1e-9, atol=1e-12)

    def test_zero_dynamics(self):
        A, B = discretize_zoh(np.zeros((2, 2)), np.eye(2), 0.1)
        assert np.allclose(A, np.eye(2))
        assert np.allclose(B, 0.1 * np.eye(2))

    def test_scalar_closed_form(self):
        A, B = discretize_zoh([[1.0]], [[1.0]], 0.1)
        assert A[0, 0] == pytest.approx(np.exp(0.1), rel=1e-12)
        assert B[0, 0] == pytest.approx(np.exp(0.1) - 1.0, rel=1e-10)

    def test_semigroup(self, rng):
        Ac = rng.normal(size=(3, 3))
        Bc = rng.normal(size=(3, 2))
        A1, B1 = discretize_zoh(Ac, Bc, 0.3)
        A2, B2 = discretize_zoh(Ac, Bc, 0.6)
        assert np.allclose(A1 @ A1, A2, atol=1e-9)
        assert np.allclose(A1 @ B1 + B1, B2, atol=1e-9)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(ValueError):
            discretize_zoh(np.eye(2), np.eye(2), 0.0)


class TestLinearAlgebra:
    def test_lu_solve_matches_numpy(self, rng):
        M = rng.normal(size=(5, 5))
        b = rng.normal(size=(5, 3))
        assert np.allclose(lu_solve(M, b), np.linalg.solve(M, b))

    def test_lu_solve_singular(self):
        with pytest.raises(SingularMatrix):
            lu_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))

    def test_plant_validation(self):
        with pytest.raises(DimensionMismatch):
            PlantModel(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), np.eye(2), np.eye(1), np.zeros(2), np.eye(2))
