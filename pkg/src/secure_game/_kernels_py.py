"""Pure-Python twin of the compiled kernels.

Same tableau layout, pivot rules, tolerances and status codes as ``_kernels``.
"""

import numpy as np

PIVOT_TOL = 1e-12

STATUS_OK = 0
STATUS_UNBOUNDED = 1
STATUS_ITER_LIMIT = 2
STATUS_DEGENERATE = 3


def _simplex(T, basis, m, ncol, max_pivots):
    pivots = 0
    while True:
        positive = np.nonzero(T[m, :ncol] > PIVOT_TOL)[0]
        if positive.size == 0:
            return STATUS_OK
        if pivots >= max_pivots:
            return STATUS_ITER_LIMIT
        c = positive[0]
        r = -1
        best = 0.0
        col = T[:m, c]
        for i in np.nonzero(col > PIVOT_TOL)[0]:
            ratio = T[i, ncol] / col[i]
            if r < 0 or ratio < best - PIVOT_TOL:
                r = i
                best = ratio
            elif ratio <= best + PIVOT_TOL and basis[i] < basis[r]:
                r = i
        if r < 0:
            return STATUS_UNBOUNDED
        T[r] /= T[r, c]
        factors = T[:, c].copy()
        factors[r] = 0.0
        T -= np.outer(factors, T[r])
        basis[r] = c
        pivots += 1


def _solve_positive_game(Q, T, basis):
    M, N = Q.shape
    ncol = N + M
    T[:] = 0.0
    T[:M, :N] = Q
    T[:M, N:ncol] = np.eye(M)
    T[:M, ncol] = 1.0
    T[M, :N] = 1.0
    basis[:] = np.arange(N, N + M)
    f = np.zeros(M)
    g = np.zeros(N)
    status = _simplex(T, basis, M, ncol, 50 * (M + N) + 100)
    if status != STATUS_OK:
        return 0.0, f, g, status
    for i in range(M):
        if basis[i] < N:
            g[basis[i]] = T[i, ncol]
    g = np.maximum(g, 0.0)
    f = np.maximum(-T[M, N:ncol], 0.0)
    total, dual_total = g.sum(), f.sum()
    if total <= 0.0 or dual_total <= 0.0:
        return 0.0, np.zeros(M), np.zeros(N), STATUS_DEGENERATE
    return 2.0 / (total + dual_total), f / dual_total, g / total, STATUS_OK


def solve_positive_game(Q):
    """Returns ``(value, f, g, status)`` for a strictly positive payoff matrix."""
    Q = np.asarray(Q, dtype=float)
    M, N = Q.shape
    T = np.zeros((M + 1, N + M + 1))
    basis = np.zeros(M, dtype=np.intp)
    return _solve_positive_game(Q, T, basis)


def solve_positive_game_batch(Qs):
    """Batched ``solve_positive_game`` over the leading axis."""
    Qs = np.asarray(Qs, dtype=float)
    H, M, N = Qs.shape
    values = np.zeros(H)
    fs = np.zeros((H, M))
    gs = np.zeros((H, N))
    status = np.zeros(H, dtype=np.int32)
    T = np.zeros((M + 1, N + M + 1))
    basis = np.zeros(M, dtype=np.intp)
    for h in range(H):
        values[h], fs[h], gs[h], status[h] = _solve_positive_game(Qs[h], T, basis)
    return values, fs, gs, status


def fictitious_play(Q, iters):
    """Simultaneous fictitious play; returns ``(estimate, f, g, lower, upper)``."""
    Q = np.asarray(Q, dtype=float)
    M, N = Q.shape
    rp = np.zeros(M)
    cp = np.zeros(N)
    fc = np.zeros(M)
    gc = np.zeros(N)
    bi = bj = 0
    best_upper, best_lower = 1e300, -1e300
    for t in range(1, int(iters) + 1):
        fc[bi] += 1.0
        gc[bj] += 1.0
        rp += Q[:, bj]
        cp += Q[bi, :]
        bi = int(np.argmax(rp))
        bj = int(np.argmin(cp))
        best_upper = min(best_upper, rp[bi] / t)
        best_lower = max(best_lower, cp[bj] / t)
    return 0.5 * (best_lower + best_upper), fc / iters, gc / iters, best_lower, best_upper
