# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for split scanning and lasso coordinate descent.

Contracts match ``_scan_py`` exactly; see that module for documentation.
"""

from libc.math cimport fabs, sqrt, INFINITY
from libc.stdlib cimport calloc, free
from libc.string cimport memcpy

import numpy as np

cdef int MAX_JITTER_ATTEMPTS = 4
cdef double JITTER_BASE = 1e-8


cdef int _chol(double* a, int d) noexcept nogil:
    # in-place lower-triangular Cholesky; nonzero return = not positive definite
    cdef int i, j, k
    cdef double s
    for j in range(d):
        s = a[j * d + j]
        for k in range(j):
            s -= a[j * d + k] * a[j * d + k]
        if s <= 0.0 or s != s:
            return 1
        a[j * d + j] = sqrt(s)
        for i in range(j + 1, d):
            s = a[i * d + j]
            for k in range(j):
                s -= a[i * d + k] * a[j * d + k]
            a[i * d + j] = s / a[j * d + j]
    return 0


cdef void _chol_solve(double* L, double* b, double* x, int d) noexcept nogil:
    # solve L L^T x = b given the lower factor L
    cdef int i, k
    cdef double s
    for i in range(d):
        s = b[i]
        for k in range(i):
            s -= L[i * d + k] * x[k]
        x[i] = s / L[i * d + i]
    for i in range(d - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, d):
            s -= L[k * d + i] * x[k]
        x[i] = s / L[i * d + i]


cdef double _gram_sse(double* G, double* b, double yy, long m, int d,
                      double* L, double* beta) noexcept nogil:
    # SSE of the least-squares fit summarized by (G, b, yy) on m rows;
    # jitter escalation and intercept-only fallback match the numpy backend
    cdef int i, k, attempt, ok
    cdef double trace, jit, s, quad
    if m <= 0:
        return 0.0
    if m < d:
        s = yy - b[0] * b[0] / m
        return s if s > 0.0 else 0.0
    trace = 0.0
    for i in range(d):
        trace += G[i * d + i]
    ok = 0
    for attempt in range(MAX_JITTER_ATTEMPTS):
        memcpy(L, G, d * d * sizeof(double))
        if attempt > 0:
            jit = JITTER_BASE * trace / d
            for i in range(attempt - 1):
                jit *= 10.0
            for i in range(d):
                L[i * d + i] += jit
        if _chol(L, d) == 0:
            ok = 1
            break
    if ok == 0:
        s = yy - b[0] * b[0] / m
        return s if s > 0.0 else 0.0
    _chol_solve(L, b, beta, d)
    quad = 0.0
    s = 0.0
    for i in range(d):
        s += beta[i] * b[i]
    for i in range(d):
        jit = 0.0
        for k in range(d):
            jit += G[i * d + k] * beta[k]
        quad += beta[i] * jit
    s = yy - 2.0 * s + quad
    return s if s > 0.0 else 0.0


def linear_split_scan(A, y, z, thresholds, long min_child):
    A = np.ascontiguousarray(A, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)

    order = np.argsort(z, kind="stable")
    cdef double[:, ::1] A_o = np.ascontiguousarray(A[order])
    cdef double[::1] y_o = np.ascontiguousarray(y[order])
    z_o = z[order]
    cdef long[::1] counts = np.ascontiguousarray(
        np.searchsorted(z_o, thresholds, side="right"), dtype=np.int64)

    cdef long n = A_o.shape[0]
    cdef int d = A_o.shape[1]
    cdef long T = counts.shape[0]
    out = np.full(T, np.inf)
    cdef double[::1] out_v = out

    cdef double* work = <double*> calloc(4 * d * d + 4 * d, sizeof(double))
    if work == NULL:
        raise MemoryError
    cdef double* Gtot = work
    cdef double* Grun = work + d * d
    cdef double* Grhs = work + 2 * d * d
    cdef double* L = work + 3 * d * d
    cdef double* btot = work + 4 * d * d
    cdef double* brun = btot + d
    cdef double* brhs = btot + 2 * d
    cdef double* beta = btot + 3 * d

    cdef double yytot = 0.0, yyrun = 0.0, yi, sse_l, sse_r
    cdef long row, t, i, a, c

    with nogil:
        for row in range(n):
            yi = y_o[row]
            yytot += yi * yi
            for a in range(d):
                btot[a] += A_o[row, a] * yi
                for c in range(a, d):
                    Gtot[a * d + c] += A_o[row, a] * A_o[row, c]
        for a in range(d):
            for c in range(a + 1, d):
                Gtot[c * d + a] = Gtot[a * d + c]

        row = 0
        for t in range(T):
            i = counts[t]
            while row < i:
                yi = y_o[row]
                yyrun += yi * yi
                for a in range(d):
                    brun[a] += A_o[row, a] * yi
                    for c in range(a, d):
                        Grun[a * d + c] += A_o[row, a] * A_o[row, c]
                row += 1
            if i < min_child or (n - i) < min_child or i == 0 or i == n:
                continue
            for a in range(d):
                brhs[a] = brun[a]
                for c in range(a, d):
                    Grhs[a * d + c] = Grun[a * d + c]
                    Grhs[c * d + a] = Grun[a * d + c]
            sse_l = _gram_sse(Grhs, brhs, yyrun, i, d, L, beta)
            for a in range(d):
                brhs[a] = btot[a] - brun[a]
                for c in range(d):
                    Grhs[a * d + c] = Gtot[a * d + c] - (
                        Grun[a * d + c] if c >= a else Grun[c * d + a])
            sse_r = _gram_sse(Grhs, brhs, yytot - yyrun, n - i, d, L, beta)
            out_v[t] = sse_l + sse_r

    free(work)
    return out


def constant_split_scan(D, z, thresholds, long min_child):
    D = np.ascontiguousarray(D, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)

    order = np.argsort(z, kind="stable")
    cdef double[:, ::1] D_o = np.ascontiguousarray(D[order])
    z_o = z[order]
    cdef long[::1] counts = np.ascontiguousarray(
        np.searchsorted(z_o, thresholds, side="right"), dtype=np.int64)

    cdef long n = D_o.shape[0]
    cdef int m = D_o.shape[1]
    cdef long T = counts.shape[0]
    out = np.full(T, np.inf)
    cdef double[::1] out_v = out

    cdef double* work = <double*> calloc(4 * m, sizeof(double))
    if work == NULL:
        raise MemoryError
    cdef double* s1tot = work
    cdef double* s2tot = work + m
    cdef double* s1run = work + 2 * m
    cdef double* s2run = work + 3 * m

    cdef double v, sse, rsum, rsq
    cdef long row, t, i, j
    cdef long floor_child = min_child if min_child > 1 else 1

    with nogil:
        for row in range(n):
            for j in range(m):
                v = D_o[row, j]
                s1tot[j] += v
                s2tot[j] += v * v

        row = 0
        for t in range(T):
            i = counts[t]
            while row < i:
                for j in range(m):
                    v = D_o[row, j]
                    s1run[j] += v
                    s2run[j] += v * v
                row += 1
            if i < floor_child or (n - i) < floor_child:
                continue
            sse = 0.0
            for j in range(m):
                sse += s2run[j] - s1run[j] * s1run[j] / i
                rsum = s1tot[j] - s1run[j]
                rsq = s2tot[j] - s2run[j]
                sse += rsq - rsum * rsum / (n - i)
            out_v[t] = sse if sse > 0.0 else 0.0

    free(work)
    return out


def lasso_cd(X, y, double lam, double tol=1e-7, long max_sweeps=10000, beta0=None):
    cdef double[::1, :] Xf = np.asfortranarray(X, dtype=np.float64)
    cdef double[::1] y_v = np.ascontiguousarray(y, dtype=np.float64)
    cdef long n = Xf.shape[0]
    cdef int p = Xf.shape[1]

    beta_arr = (np.zeros(p) if beta0 is None
                else np.array(beta0, dtype=np.float64, copy=True))
    cdef double[::1] beta = beta_arr
    resid = np.asarray(y) - np.asarray(X) @ beta_arr
    cdef double[::1] r = np.ascontiguousarray(resid, dtype=np.float64)
    cdef double[::1] col_sq = (np.asarray(X, dtype=np.float64) ** 2).sum(axis=0) / n

    cdef long sweeps = 0, i
    cdef int j, converged = 0
    cdef double cj, bj, bj_new, rho, max_delta, diff

    with nogil:
        while sweeps < max_sweeps:
            sweeps += 1
            max_delta = 0.0
            for j in range(p):
                cj = col_sq[j]
                if cj <= 0.0:
                    continue
                bj = beta[j]
                rho = 0.0
                for i in range(n):
                    rho += Xf[i, j] * r[i]
                rho = rho / n + cj * bj
                if rho > lam:
                    bj_new = (rho - lam) / cj
                elif rho < -lam:
                    bj_new = (rho + lam) / cj
                else:
                    bj_new = 0.0
                if bj_new != bj:
                    diff = bj - bj_new
                    for i in range(n):
                        r[i] += Xf[i, j] * diff
                    beta[j] = bj_new
                    diff = fabs(diff)
                    if diff > max_delta:
                        max_delta = diff
            if max_delta < tol:
                converged = 1
                break

    return beta_arr, sweeps, bool(converged)
