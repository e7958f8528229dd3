"""Small dense linear-algebra kernel: Riccati solvers, LQG gains, ZOH discretization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonConvergent, SingularMatrix

PIVOT_RTOL = 1e-12


def _as_matrix(a, name):
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def symmetrize(S):
    return 0.5 * (S + S.T)


def spectral_radius(M):
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


@dataclass(frozen=True)
class PlantModel:
    """Discrete-time LTI plant ``x+ = Ax + Bu + w``, ``y = Cx + v``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "C", "Q", "R", "x0_cov"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        object.__setattr__(self, "x0_mean", np.asarray(self.x0_mean, dtype=float).reshape(-1))
        n = self.A.shape[0]
        problems = []
        if self.A.shape != (n, n):
            problems.append(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            problems.append(f"B has {self.B.shape[0]} rows, expected {n}")
        if self.C.shape[1] != n:
            problems.append(f"C has {self.C.shape[1]} columns, expected {n}")
        m = self.C.shape[0]
        if self.Q.shape != (n, n):
            problems.append(f"Q must be {n}x{n}")
        if self.R.shape != (m, m):
            problems.append(f"R must be {m}x{m}")
        if self.x0_mean.shape != (n,):
            problems.append(f"x0_mean must have length {n}")
        if self.x0_cov.shape != (n, n):
            problems.append(f"x0_cov must be {n}x{n}")
        if problems:
            raise DimensionMismatch("; ".join(problems))
        for name in ("Q", "R", "x0_cov"):
            M = getattr(self, name)
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(M)) < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise ValueError("R must be positive definite")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def m(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class LqgWeights:
    W: np.ndarray
    U: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", _as_matrix(self.W, "W"))
        object.__setattr__(self, "U", _as_matrix(self.U, "U"))
        if np.min(np.linalg.eigvalsh(symmetrize(self.W))) < -1e-12:
            raise ValueError("W must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(symmetrize(self.U))) <= 0:
            raise ValueError("U must be positive definite")


def lu_solve(M, rhs):
    """Solve ``M X = rhs`` by LU with partial pivoting.

    Raises SingularMatrix when a pivot falls below ``PIVOT_RTOL`` times the
    largest entry of the corresponding row of ``M``; no silent regularization.
    """
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {M.shape}")
    with warnings.catch_warnings():
        # singularity is reported below through SingularMatrix
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    row_scale = np.max(np.abs(M), axis=1)
    perm = np.arange(M.shape[0])
    for i, p in enumerate(piv):
        perm[i], perm[p] = perm[p], perm[i]
    pivots = np.abs(np.diag(lu))
    scale = row_scale[perm]
    if np.any(pivots < PIVOT_RTOL * np.maximum(scale, np.finfo(float).tiny)):
        raise SingularMatrix("singular pivot encountered in LU factorization")
    return scipy.linalg.lu_solve((lu, piv), rhs)


def riccati_map(S, A, B, Q_w, R_w):
    """One application of ``S -> A'SA + Q - A'SB (B'SB + R)^-1 B'SA``."""
    SA = S @ A
    gain = lu_solve(B.T @ S @ B + R_w, B.T @ SA)
    return symmetrize(A.T @ SA + Q_w - SA.T @ B @ gain)


def dare_residual(S, A, B, Q_w, R_w):
    """Induced infinity norm (largest absolute row sum) of ``S - f(S)``."""
    S, A, B, Q_w, R_w = (_as_matrix(M, "M") for M in (S, A, B, Q_w, R_w))
    return float(np.linalg.norm(S - riccati_map(S, A, B, Q_w, R_w), np.inf))


def solve_dare(A, B, Q_w, R_w, tol=1e-10, max_iter=10_000, damping=0.0):
    """Solve the discrete algebraic Riccati equation by fixed-point iteration.

    Use ``(A, B)`` for the control equation and ``(A.T, C.T)`` for the
    filter equation. The returned ``S`` satisfies
    ``||S - f(S)||_inf <= tol``; otherwise NonConvergent is raised.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    Q_w = _as_matrix(Q_w, "Q_w")
    R_w = _as_matrix(R_w, "R_w")
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or Q_w.shape != (n, n):
        raise DimensionMismatch(f"inconsistent shapes A{A.shape} B{B.shape} Q{Q_w.shape}")
    if R_w.shape != (B.shape[1], B.shape[1]):
        raise DimensionMismatch(f"R must be {B.shape[1]}x{B.shape[1]}, got {R_w.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must lie in [0, 1)")

    S = symmetrize(Q_w.copy())
    residual = np.inf
    for it in range(1, max_iter + 1):
        S_next = riccati_map(S, A, B, Q_w, R_w)
        residual = float(np.linalg.norm(S_next - S, np.inf))
        if not np.isfinite(residual):
            break
        S = symmetrize((1.0 - damping) * S_next + damping * S)
        if residual <= tol:
            residual = dare_residual(S, A, B, Q_w, R_w)
            if residual <= tol:
                return S
    raise NonConvergent(
        f"DARE residual {residual:.3e} above tol {tol:.1e} after {max_iter} iterations",
        residual=residual,
        iterations=max_iter,
    )


@dataclass(frozen=True)
class KalmanFilter:
    K: np.ndarray
    P: np.ndarray
    Pz: np.ndarray

    def __iter__(self):
        return iter((self.K, self.P, self.Pz))


def kalman_gain(plant: PlantModel, tol=1e-10, max_iter=10_000) -> KalmanFilter:
    """Steady-state Kalman gain ``K``, prediction covariance ``P`` and innovation covariance ``Pz``."""
    P = solve_dare(plant.A.T, plant.C.T, plant.Q, plant.R, tol=tol, max_iter=max_iter)
    Pz = symmetrize(plant.C @ P @ plant.C.T + plant.R)
    K = lu_solve(Pz, plant.C @ P).T  # Pz symmetric, so (Pz^-1 C P)^T = P C^T Pz^-1
    return KalmanFilter(K=K, P=P, Pz=Pz)


def lqr_gain(plant: PlantModel, weights: LqgWeights, tol=1e-10, max_iter=10_000):
    """Infinite-horizon LQR gain ``L`` with ``u = L x``."""
    if weights.W.shape != (plant.n, plant.n) or weights.U.shape != (plant.p, plant.p):
        raise DimensionMismatch("LQG weights do not match plant dimensions")
    S = solve_dare(plant.A, plant.B, weights.W, weights.U, tol=tol, max_iter=max_iter)
    return -lu_solve(plant.B.T @ S @ plant.B + weights.U, plant.B.T @ S @ plant.A)


def expm(M, rtol=1e-10):
    """Matrix exponential by scaling-and-squaring of a truncated Taylor series."""
    M = _as_matrix(M, "M")
    norm = np.linalg.norm(M, 1)
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    X = M / (2.0**s)
    # squaring s times amplifies the truncation error roughly 2**s fold
    term_tol = rtol * 2.0 ** (-s)
    result = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 60):
        term = term @ X / k
        result = result + term
        if np.linalg.norm(term, 1) <= term_tol * np.linalg.norm(result, 1):
            break
    for _ in range(s):
        result = result @ result
    return result


def discretize_zoh(A_cont, B_cont, Ts):
    """Zero-order-hold discretization via the augmented matrix exponential."""
    if Ts <= 0:
        raise ValueError("Ts must be positive")
    A_cont = _as_matrix(A_cont, "A_cont")
    B_cont = _as_matrix(B_cont, "B_cont")
    n, p = B_cont.shape
    if A_cont.shape != (n, n):
        raise DimensionMismatch(f"A_cont {A_cont.shape} incompatible with B_cont {B_cont.shape}")
    aug = np.zeros((n + p, n + p))
    aug[:n, :n] = A_cont * Ts
    aug[:n, n:] = B_cont * Ts
    E = expm(aug)
    return E[:n, :n], E[:n, n:]


def stationary_estimate_cost(plant: PlantModel, weights: LqgWeights, L, kf: KalmanFilter, watermark_cov=None):
    """Steady-state ``E[x_hat' W x_hat + u' U u]`` of the filtered estimate under LQG.

    The filtered estimate obeys ``x_hat+ = (A + B L) x_hat + B du + K z`` with
    white innovations of covariance ``Pz``. The filter knows its own watermark
    ``du ~ N(0, Lw)``, so innovations stay white; the watermark adds
    ``B Lw B'`` to the drive and ``tr(U Lw)`` to the input cost.
    """
    Acl = plant.A + plant.B @ L
    drive = kf.K @ kf.Pz @ kf.K.T
    wm_cost = 0.0
    if watermark_cov is not None:
        drive = drive + plant.B @ watermark_cov @ plant.B.T
        wm_cost = float(np.trace(weights.U @ watermark_cov))
    Sigma = scipy.linalg.solve_discrete_lyapunov(Acl, symmetrize(drive))
    return float(np.trace(weights.W @ Sigma) + np.trace(weights.U @ L @ Sigma @ L.T)) + wm_cost


__all__ = [
    "PlantModel",
    "LqgWeights",
    "KalmanFilter",
    "solve_dare",
    "riccati_map",
    "dare_residual",
    "kalman_gain",
    "lqr_gain",
    "discretize_zoh",
    "expm",
    "lu_solve",
    "spectral_radius",
    "symmetrize",
    "stationary_estimate_cost",
]
