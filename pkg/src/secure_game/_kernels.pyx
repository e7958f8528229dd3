# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: dense Bland-rule simplex for matrix games, fictitious play.

Semantics mirror ``_kernels_py`` exactly; tests run both.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF PIVOT_TOL = 1e-12

# status codes shared with the Python twin
STATUS_OK = 0
STATUS_UNBOUNDED = 1
STATUS_ITER_LIMIT = 2
STATUS_DEGENERATE = 3


cdef int _simplex(double[:, ::1] T, Py_ssize_t[::1] basis, Py_ssize_t m, Py_ssize_t ncol, int max_pivots) nogil:
    """Maximize over tableau ``T`` (m constraint rows + objective row m).

    Objective row holds reduced costs; rhs in column ``ncol``.
    Bland's rule on both entering and leaving choices.
    """
    cdef Py_ssize_t i, j, r, c, k
    cdef double best, ratio, piv, factor
    cdef int pivots = 0
    while True:
        c = -1
        for j in range(ncol):
            if T[m, j] > PIVOT_TOL:
                c = j
                break
        if c < 0:
            return 0
        if pivots >= max_pivots:
            return 2
        r = -1
        best = 0.0
        for i in range(m):
            if T[i, c] > PIVOT_TOL:
                ratio = T[i, ncol] / T[i, c]
                if r < 0 or ratio < best - PIVOT_TOL:
                    r = i
                    best = ratio
                elif ratio <= best + PIVOT_TOL and basis[i] < basis[r]:
                    r = i
        if r < 0:
            return 1
        piv = T[r, c]
        for k in range(ncol + 1):
            T[r, k] /= piv
        for i in range(m + 1):
            if i != r:
                factor = T[i, c]
                if factor != 0.0:
                    for k in range(ncol + 1):
                        T[i, k] -= factor * T[r, k]
        basis[r] = c
        pivots += 1


cdef int _solve_positive_game(double[:, :] Q, double[::1] f, double[::1] g, double* value,
                              double[:, ::1] T, Py_ssize_t[::1] basis) nogil:
    """Game value and optimal mixed strategies of a strictly positive matrix.

    Column player LP: max sum(y) s.t. Q y <= 1, y >= 0; value = 1/sum(y).
    Row player strategy is read from the slack reduced costs.
    ``T`` is an (M+1, N+M+1) workspace, ``basis`` length M.
    """
    cdef Py_ssize_t M = Q.shape[0]
    cdef Py_ssize_t N = Q.shape[1]
    cdef Py_ssize_t ncol = N + M
    cdef Py_ssize_t i, j
    cdef double total = 0.0
    cdef double dual_total = 0.0
    cdef int status
    T[:, :] = 0.0
    for i in range(M):
        for j in range(N):
            T[i, j] = Q[i, j]
        T[i, N + i] = 1.0
        T[i, ncol] = 1.0
        basis[i] = N + i
    for j in range(N):
        T[M, j] = 1.0
    status = _simplex(T, basis, M, ncol, 50 * (M + N) + 100)
    if status != 0:
        return status
    for j in range(N):
        g[j] = 0.0
    for i in range(M):
        if basis[i] < N:
            g[basis[i]] = T[i, ncol]
    for j in range(N):
        if g[j] < 0.0:
            g[j] = 0.0
        total += g[j]
    for i in range(M):
        f[i] = -T[M, N + i]
        if f[i] < 0.0:
            f[i] = 0.0
        dual_total += f[i]
    if total <= 0.0 or dual_total <= 0.0:
        return 3
    for j in range(N):
        g[j] /= total
    for i in range(M):
        f[i] /= dual_total
    value[0] = 2.0 / (total + dual_total)
    return 0


def solve_positive_game(double[:, :] Q):
    """Returns ``(value, f, g, status)`` for a strictly positive payoff matrix."""
    cdef Py_ssize_t M = Q.shape[0]
    cdef Py_ssize_t N = Q.shape[1]
    f = np.zeros(M)
    g = np.zeros(N)
    cdef double[::1] fv = f
    cdef double[::1] gv = g
    cdef double[:, ::1] T = np.zeros((M + 1, N + M + 1))
    cdef Py_ssize_t[::1] basis = np.zeros(M, dtype=np.intp)
    cdef double value = 0.0
    cdef int status
    with nogil:
        status = _solve_positive_game(Q, fv, gv, &value, T, basis)
    return value, f, g, status


def solve_positive_game_batch(double[:, :, :] Qs):
    """Batched ``solve_positive_game`` over the leading axis."""
    cdef Py_ssize_t H = Qs.shape[0]
    cdef Py_ssize_t M = Qs.shape[1]
    cdef Py_ssize_t N = Qs.shape[2]
    values = np.zeros(H)
    fs = np.zeros((H, M))
    gs = np.zeros((H, N))
    status = np.zeros(H, dtype=np.int32)
    cdef double[::1] vv = values
    cdef double[:, ::1] fv = fs
    cdef double[:, ::1] gv = gs
    cdef int[::1] sv = status
    cdef double[:, ::1] T = np.zeros((M + 1, N + M + 1))
    cdef Py_ssize_t[::1] basis = np.zeros(M, dtype=np.intp)
    cdef Py_ssize_t h
    cdef double value
    with nogil:
        for h in range(H):
            value = 0.0
            sv[h] = _solve_positive_game(Qs[h], fv[h], gv[h], &value, T, basis)
            vv[h] = value
    return values, fs, gs, status


def fictitious_play(double[:, :] Q, long iters):
    """Simultaneous fictitious play; returns ``(estimate, f, g, lower, upper)``.

    ``lower``/``upper`` are the best bounds seen over all iterations; both
    bracket the game value, the estimate is their midpoint.
    """
    cdef Py_ssize_t M = Q.shape[0]
    cdef Py_ssize_t N = Q.shape[1]
    cdef Py_ssize_t i, j, bi = 0, bj = 0
    cdef long t
    cdef double best_upper = 1e300, best_lower = -1e300, ub, lb
    rp_arr = np.zeros(M)
    cp_arr = np.zeros(N)
    fc_arr = np.zeros(M)
    gc_arr = np.zeros(N)
    cdef double[::1] rp = rp_arr
    cdef double[::1] cp = cp_arr
    cdef double[::1] fc = fc_arr
    cdef double[::1] gc = gc_arr
    with nogil:
        for t in range(1, iters + 1):
            fc[bi] += 1.0
            gc[bj] += 1.0
            for i in range(M):
                rp[i] += Q[i, bj]
            for j in range(N):
                cp[j] += Q[bi, j]
            bi = 0
            for i in range(1, M):
                if rp[i] > rp[bi]:
                    bi = i
            bj = 0
            for j in range(1, N):
                if cp[j] < cp[bj]:
                    bj = j
            ub = rp[bi] / t
            lb = cp[bj] / t
            if ub < best_upper:
                best_upper = ub
            if lb > best_lower:
                best_lower = lb
    return (
        0.5 * (best_lower + best_upper),
        fc_arr / iters,
        gc_arr / iters,
        best_lower,
        best_upper,
    )
