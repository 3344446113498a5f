"""Node-level parametric models: OLS, lasso, and multivariate constant fits.

The lasso minimizes (1/2n) * SSE + lambda * sum|beta_j| with an unpenalized
intercept.  Columns are standardized internally (population scaling, so that
x_j'x_j / n = 1) and coefficients mapped back, which gives the closed form

    lambda_max = max_j |x_j'(y - ybar)| / n

for the smallest penalty that zeroes every coefficient.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from limesup import _kernels
from limesup.exceptions import DataError

LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 10000
GRID_FLOOR = 1e-4


@dataclass
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    sse: float
    r2: float
    n: int
    lam: float = 0.0

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.coefficients):
            raise DataError("prediction matrix width does not match model")
        return X @ self.coefficients + self.intercept


@dataclass
class ConstantModel:
    means: np.ndarray
    sse_per_column: np.ndarray
    n: int

    @property
    def sse(self):
        return float(self.sse_per_column.sum())

    def predict(self, X):
        X = np.asarray(X)
        return np.broadcast_to(self.means, (X.shape[0], len(self.means))).copy()


def r_squared(sse, sst):
    """1 - sse/sst, with the degenerate convention for constant targets."""
    if sst <= 0.0:
        return 1.0 if sse < 1e-12 else 0.0
    return 1.0 - sse / sst


def _solve_gram(G, b):
    d = G.shape[0]
    jitter = 1e-8 * np.trace(G) / d
    for attempt in range(4):
        Gj = G if attempt == 0 else G + (jitter * 10.0 ** (attempt - 1)) * np.eye(d)
        try:
            L = np.linalg.cholesky(Gj)
        except np.linalg.LinAlgError:
            continue
        return np.linalg.solve(L.T, np.linalg.solve(L, b))
    return None


def fit_ols(X, y):
    """Least squares with intercept via the normal equations.

    Rank deficiency is repaired with diagonal jitter (1e-8 * trace/d).
    Requires n >= p + 1; smaller nodes should use :func:`fit_intercept_only`.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    if n < p + 1:
        raise DataError(f"need at least p+1={p + 1} rows for OLS, got {n}")
    A = np.column_stack([np.ones(n), X])
    beta = _solve_gram(A.T @ A, A.T @ y)
    if beta is None:
        return fit_intercept_only(y, p)
    resid = y - A @ beta
    sse = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    return LinearModel(intercept=float(beta[0]), coefficients=beta[1:],
                       sse=sse, r2=r_squared(sse, sst), n=n)


def fit_intercept_only(y, p):
    """Mean-only model, shaped like a p-coefficient linear model."""
    y = np.asarray(y, dtype=np.float64)
    mean = float(y.mean())
    sse = float(((y - mean) ** 2).sum())
    return LinearModel(intercept=mean, coefficients=np.zeros(p),
                       sse=sse, r2=r_squared(sse, sse), n=len(y))


def fit_node_model(X, y):
    """OLS when the node is big enough, intercept-only otherwise."""
    n, p = np.asarray(X).shape
    if n < p + 1:
        return fit_intercept_only(y, p)
    return fit_ols(X, y)


def _center_scale(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xm = X.mean(axis=0)
    xs = np.sqrt(((X - xm) ** 2).mean(axis=0))
    xs = np.where(xs > 0, xs, 1.0)
    return (X - xm) / xs, y - y.mean(), xm, xs, y.mean()


def lambda_max(X, y):
    """Smallest penalty at which the lasso solution is all-zero."""
    Xs, yc, _, _, _ = _center_scale(X, y)
    if Xs.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(Xs.T @ yc)) / Xs.shape[0])


def lambda_grid(lmax, size):
    """Log-spaced penalty grid from lmax down to GRID_FLOOR * lmax."""
    if size < 1:
        raise DataError("grid size must be >= 1")
    if lmax <= 0:
        return np.zeros(1)
    return np.geomspace(lmax, GRID_FLOOR * lmax, size)


def _finalize_lasso(X, y, beta_std, xm, xs, ym, lam):
    beta = beta_std / xs
    intercept = ym - float(xm @ beta)
    resid = y - (X @ beta + intercept)
    sse = float(resid @ resid)
    sst = float(((y - ym) ** 2).sum())
    return LinearModel(intercept=intercept, coefficients=beta,
                       sse=sse, r2=r_squared(sse, sst), n=len(y), lam=float(lam))


def fit_lasso(X, y, lam):
    """Lasso fit at a single penalty; see the module docstring for scaling."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 2:
        raise DataError("lasso needs at least 2 observations")
    if lam < 0:
        raise DataError("penalty must be nonnegative")
    Xs, yc, xm, xs, ym = _center_scale(X, y)
    beta_std, sweeps, converged = _kernels.lasso_cd(
        Xs, yc, float(lam), tol=LASSO_TOL, max_sweeps=LASSO_MAX_SWEEPS)
    if not converged:
        warnings.warn(
            f"lasso coordinate descent hit the {LASSO_MAX_SWEEPS}-sweep cap "
            f"(lambda={lam:g}); returning the last iterate", RuntimeWarning)
    return _finalize_lasso(X, y, beta_std, xm, xs, ym, lam)


def lasso_path(X, y, lambdas):
    """Warm-started lasso fits along a decreasing penalty sequence."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    Xs, yc, xm, xs, ym = _center_scale(X, y)
    models = []
    beta = None
    for lam in lambdas:
        beta, _, converged = _kernels.lasso_cd(
            Xs, yc, float(lam), tol=LASSO_TOL, max_sweeps=LASSO_MAX_SWEEPS,
            beta0=beta)
        if not converged:
            warnings.warn(f"lasso path did not converge at lambda={lam:g}",
                          RuntimeWarning)
        models.append(_finalize_lasso(X, y, beta, xm, xs, ym, lam))
    return models


def select_lambda(train, valid, grid_size):
    """Penalty minimizing validation SSE over a log grid; ties pick the
    larger (sparser) penalty."""
    Xt, yt = train
    Xv, yv = valid
    if len(yt) == 0 or len(yv) == 0:
        raise DataError("empty training or validation set")
    grid = lambda_grid(lambda_max(Xt, yt), grid_size)
    best_lam, best_sse = None, np.inf
    for model in lasso_path(Xt, yt, grid):
        resid = np.asarray(yv) - model.predict(np.asarray(Xv, dtype=np.float64))
        sse = float(resid @ resid)
        if sse < best_sse:
            best_lam, best_sse = model.lam, sse
    return best_lam


def select_lambda_bic(X, y, grid_size):
    """BIC-style penalty choice on training rows alone.

    Used for terminal nodes that receive no validation rows: minimizes
    n*log(SSE/n) + k*log(n) with k = nonzero coefficients + 1.
    """
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    grid = lambda_grid(lambda_max(X, y), grid_size)
    best_lam, best_bic = None, np.inf
    for model in lasso_path(X, y, grid):
        k = int(np.count_nonzero(model.coefficients)) + 1
        bic = n * np.log(max(model.sse, 1e-30) / n) + k * np.log(n)
        if bic < best_bic:
            best_lam, best_bic = model.lam, bic
    return best_lam


def fit_constant(D):
    """Per-column means and SSEs of a response matrix."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] < 1:
        raise DataError("need a nonempty 2-d response matrix")
    means = D.mean(axis=0)
    sse = ((D - means) ** 2).sum(axis=0)
    return ConstantModel(means=means, sse_per_column=sse, n=D.shape[0])


def predict(model, X):
    """Affine map for linear models, broadcast means for constant models."""
    if isinstance(model, LinearModel):
        return model.predict(X)
    if isinstance(model, ConstantModel):
        return model.predict(X)
    raise TypeError(f"unsupported model type: {type(model).__name__}")
