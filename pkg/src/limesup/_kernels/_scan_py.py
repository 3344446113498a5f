"""Numpy fallback for the hot kernels.

Same contracts as the compiled backend in ``_scan_cy.pyx``:

* ``linear_split_scan``   -- total child SSE of per-child least-squares fits,
  for every candidate threshold of one split variable.
* ``constant_split_scan`` -- same, with per-column constant (mean) fits.
* ``lasso_cd``            -- cyclic coordinate descent for the lasso.

Threshold arrays must be sorted ascending and lie strictly between observed
values of ``z``; design matrices must carry the intercept in column 0.
"""

import numpy as np

_JITTER = 1e-8


def _solve_gram(G, b):
    """Solve G beta = b via Cholesky, adding diagonal jitter on failure.

    Returns None when the system stays intractable after three escalations
    (callers fall back to an intercept-only fit).
    """
    d = G.shape[0]
    jitter = _JITTER * np.trace(G) / d
    for attempt in range(4):
        Gj = G if attempt == 0 else G + (jitter * 10.0 ** (attempt - 1)) * np.eye(d)
        try:
            L = np.linalg.cholesky(Gj)
        except np.linalg.LinAlgError:
            continue
        y = np.linalg.solve(L, b)
        return np.linalg.solve(L.T, y)
    return None


def _gram_sse(G, b, yy, m):
    """SSE of the least-squares fit summarized by (G, b, yy) on m rows."""
    d = G.shape[0]
    if m <= 0:
        return 0.0
    if m < d:
        # too few rows for the full design: intercept-only fallback
        return max(yy - b[0] * b[0] / m, 0.0)
    beta = _solve_gram(G, b)
    if beta is None:
        return max(yy - b[0] * b[0] / m, 0.0)
    return max(yy - 2.0 * (beta @ b) + beta @ (G @ beta), 0.0)


def linear_split_scan(A, y, z, thresholds, min_child):
    """SSE(left fit) + SSE(right fit) for each threshold on ``z``.

    A : (n, d) design matrix, intercept in column 0.
    Returns an array aligned with ``thresholds``; +inf marks splits where a
    child would fall below ``min_child`` rows.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    n, d = A.shape

    order = np.argsort(z, kind="stable")
    A_o = A[order]
    y_o = y[order]
    z_o = z[order]

    G_pref = np.cumsum(A_o[:, :, None] * A_o[:, None, :], axis=0)
    b_pref = np.cumsum(A_o * y_o[:, None], axis=0)
    yy_pref = np.cumsum(y_o * y_o)
    G_tot, b_tot, yy_tot = G_pref[-1], b_pref[-1], yy_pref[-1]

    counts = np.searchsorted(z_o, thresholds, side="right")
    out = np.full(len(thresholds), np.inf)
    for t, i in enumerate(counts):
        if i < min_child or (n - i) < min_child or i == 0 or i == n:
            continue
        sse_l = _gram_sse(G_pref[i - 1], b_pref[i - 1], yy_pref[i - 1], i)
        sse_r = _gram_sse(G_tot - G_pref[i - 1], b_tot - b_pref[i - 1],
                          yy_tot - yy_pref[i - 1], n - i)
        out[t] = sse_l + sse_r
    return out


def constant_split_scan(D, z, thresholds, min_child):
    """Sum over columns of per-child constant-fit SSE, for each threshold.

    D : (n, m) response matrix; each child's fit is the per-column mean.
    """
    D = np.ascontiguousarray(D, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    n = D.shape[0]

    order = np.argsort(z, kind="stable")
    D_o = D[order]
    z_o = z[order]

    s1 = np.cumsum(D_o, axis=0)
    s2 = np.cumsum(D_o * D_o, axis=0)
    s1_tot, s2_tot = s1[-1], s2[-1]

    counts = np.searchsorted(z_o, thresholds, side="right")
    out = np.full(len(thresholds), np.inf)
    legal = (counts >= max(min_child, 1)) & ((n - counts) >= max(min_child, 1))
    if legal.any():
        i = counts[legal]
        l1, l2 = s1[i - 1], s2[i - 1]
        r1, r2 = s1_tot - l1, s2_tot - l2
        nl = i[:, None].astype(np.float64)
        nr = (n - i)[:, None].astype(np.float64)
        sse = (l2 - l1 * l1 / nl).sum(axis=1) + (r2 - r1 * r1 / nr).sum(axis=1)
        out[legal] = np.maximum(sse, 0.0)
    return out


def lasso_cd(X, y, lam, tol=1e-7, max_sweeps=10000, beta0=None):
    """Cyclic coordinate descent for (1/2n)||y - X beta||^2 + lam * ||beta||_1.

    X and y are assumed preprocessed by the caller (centered response,
    centered/scaled columns); no intercept is handled here.  Convergence is
    declared when the largest coefficient change in a sweep drops below
    ``tol``.  Returns (beta, sweeps_used, converged).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=np.float64)

    col_sq = (X * X).sum(axis=0) / n
    r = y - X @ beta
    sweeps = 0
    converged = False
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for j in range(p):
            cj = col_sq[j]
            if cj <= 0.0:
                continue
            bj = beta[j]
            rho = (X[:, j] @ r) / n + cj * bj
            bj_new = np.sign(rho) * max(abs(rho) - lam, 0.0) / cj
            if bj_new != bj:
                r += X[:, j] * (bj - bj_new)
                beta[j] = bj_new
                max_delta = max(max_delta, abs(bj_new - bj))
        if max_delta < tol:
            converged = True
            break
    return beta, sweeps, converged
