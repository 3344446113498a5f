import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limesup._kernels import lasso_cd
from limesup.exceptions import DataError
from limesup.linmod import (
    ConstantModel,
    LinearModel,
    fit_constant,
    fit_intercept_only,
    fit_lasso,
    fit_ols,
    lambda_grid,
    lambda_max,
    lasso_path,
    predict,
    select_lambda,
    select_lambda_bic,
)


def ols_oracle(X, y):
    """Independent normal-equation solve via explicit matrix inverse."""
    A = np.column_stack([np.ones(len(y)), X])
    return np.linalg.inv(A.T @ A) @ (A.T @ y)


class TestOls:
    def test_exact_line(self):
        x = np.linspace(0, 9, 10)
        model = fit_ols(x[:, None], 2 + 3 * x)
        assert abs(model.intercept - 2) < 1e-10
        assert abs(model.coefficients[0] - 3) < 1e-10
        assert abs(model.r2 - 1) < 1e-10

    def test_constant_response(self, rng):
        X = rng.standard_normal((15, 2))
        model = fit_ols(X, np.full(15, 5.0))
        assert abs(model.intercept - 5) < 1e-8
        np.testing.assert_allclose(model.coefficients, 0, atol=1e-8)
        assert model.sse < 1e-16

    def test_matches_explicit_inverse(self, rng):
        X = rng.standard_normal((20, 3))
        y = rng.standard_normal(20)
        model = fit_ols(X, y)
        expected = ols_oracle(X, y)
        assert abs(model.intercept - expected[0]) < 1e-8
        np.testing.assert_allclose(model.coefficients, expected[1:], atol=1e-8)

    def test_too_few_rows(self, rng):
        with pytest.raises(DataError):
            fit_ols(rng.standard_normal((3, 3)), np.zeros(3))

    def test_rank_deficient_duplicated_column(self, rng):
        x = rng.standard_normal(30)
        X = np.column_stack([x, x])
        model = fit_ols(X, 1 + 2 * x)
        # jittered solve still reproduces the fit even though coefficients
        # are not identified individually
        pred = model.predict(X)
        np.testing.assert_allclose(pred, 1 + 2 * x, atol=1e-4)

    @given(seed=st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_residual_orthogonality(self, seed):
        r = np.random.default_rng(seed)
        n, p = 30, 4
        X = r.standard_normal((n, p))
        y = r.standard_normal(n)
        model = fit_ols(X, y)
        resid = y - model.predict(X)
        norm_r = np.linalg.norm(resid)
        for j in range(p):
            xj = X[:, j]
            assert abs(xj @ resid) < 1e-6 * np.linalg.norm(xj) * max(norm_r, 1e-12)


class TestLasso:
    def test_zero_penalty_matches_ols(self, rng):
        X = rng.standard_normal((50, 4))
        y = X @ [1.0, -0.5, 0.0, 2.0] + 0.1 * rng.standard_normal(50)
        ols = fit_ols(X, y)
        lasso = fit_lasso(X, y, 0.0)
        assert abs(lasso.intercept - ols.intercept) < 1e-6
        np.testing.assert_allclose(lasso.coefficients, ols.coefficients, atol=1e-6)

    def test_lambda_max_zeroes_support(self, rng):
        X = rng.standard_normal((40, 5))
        y = X @ [1.0, 0.0, -2.0, 0.5, 0.0] + rng.standard_normal(40)
        lmax = lambda_max(X, y)
        # subgradient check: at beta = 0 every score must sit inside lam
        Xc = X - X.mean(axis=0)
        Xs = Xc / np.sqrt((Xc ** 2).mean(axis=0))
        scores = np.abs(Xs.T @ (y - y.mean())) / len(y)
        assert np.isclose(scores.max(), lmax)
        for lam in (lmax, 1.5 * lmax):
            model = fit_lasso(X, y, lam)
            np.testing.assert_array_equal(model.coefficients, 0.0)

    def test_univariate_soft_threshold_closed_form(self, rng):
        n = 60
        x = rng.standard_normal(n)
        x = (x - x.mean()) / np.sqrt(((x - x.mean()) ** 2).mean())
        y = 2.0 * x + 0.05 * rng.standard_normal(n)
        y = y - y.mean()
        for lam in (0.0, 0.3, 1.0, 5.0):
            rho = float(x @ y) / n
            expected = np.sign(rho) * max(abs(rho) - lam, 0.0) / (float(x @ x) / n)
            model = fit_lasso(x[:, None], y, lam)
            assert abs(model.coefficients[0] - expected) < 1e-7

    def test_objective_nonincreasing_over_sweeps(self, rng):
        # running s sweeps from a cold start is a prefix of the same
        # trajectory, so the objective must be monotone in s
        from limesup._kernels import _scan_py

        X = rng.standard_normal((40, 6))
        Xs = (X - X.mean(0)) / np.sqrt(((X - X.mean(0)) ** 2).mean(0))
        y = rng.standard_normal(40)
        yc = y - y.mean()
        lam = 0.05

        def objective(beta):
            r = yc - Xs @ beta
            return float(r @ r) / (2 * len(yc)) + lam * np.abs(beta).sum()

        values = []
        for sweeps in range(1, 8):
            beta, _, _ = _scan_py.lasso_cd(Xs, yc, lam, max_sweeps=sweeps)
            values.append(objective(beta))
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))

    def test_support_monotone_at_endpoints(self, rng):
        X = rng.standard_normal((50, 4))
        y = X @ [1.0, -1.0, 0.5, 0.0] + 0.2 * rng.standard_normal(50)
        at_zero = fit_lasso(X, y, 0.0)
        at_max = fit_lasso(X, y, lambda_max(X, y))
        support_zero = set(np.flatnonzero(at_zero.coefficients))
        support_max = set(np.flatnonzero(at_max.coefficients))
        assert support_max == set()
        assert support_max <= support_zero

    def test_rejects_bad_inputs(self, rng):
        with pytest.raises(DataError):
            fit_lasso(rng.standard_normal((1, 2)), np.zeros(1), 0.1)
        with pytest.raises(DataError):
            fit_lasso(rng.standard_normal((5, 2)), np.zeros(5), -1.0)


class TestSelectLambda:
    def test_tie_breaks_to_largest(self, rng):
        # noiseless linear data, validation identical to train: lambda = 0
        # region all tie at SSE ~ 0 only at the exact minimum; the rule is
        # exercised directly with a constant response where all lambdas tie
        X = rng.standard_normal((30, 2))
        y = np.full(30, 3.0)
        lam = select_lambda((X, y), (X, y), grid_size=10)
        # constant y means lambda_max = 0; the degenerate grid returns 0
        assert lam == 0.0

    def test_noiseless_linear_selects_min_or_tied(self, rng):
        X = rng.standard_normal((40, 3))
        y = 1 + X @ [2.0, -1.0, 0.5]
        grid = lambda_grid(lambda_max(X, y), 20)
        lam = select_lambda((X, y), (X, y), grid_size=20)
        # the exact-fit solution requires the smallest penalty on the grid
        assert np.isclose(lam, grid[-1])

    def test_pure_noise_selects_near_max(self, rng):
        X = rng.standard_normal((200, 3))
        y_train = rng.standard_normal(200)
        Xv = rng.standard_normal((200, 3))
        y_valid = rng.standard_normal(200)
        lmax = lambda_max(X, y_train)
        lam = select_lambda((X, y_train), (Xv, y_valid), grid_size=30)
        # explicit grid comparison oracle
        best = None
        for model in lasso_path(X, y_train, lambda_grid(lmax, 30)):
            resid = y_valid - model.predict(Xv)
            sse = float(resid @ resid)
            if best is None or sse < best[0]:
                best = (sse, model.lam)
        assert np.isclose(lam, best[1])
        assert lam >= 0.1 * lmax  # heavy penalty wins on pure noise

    def test_grid_size_one_returns_lambda_max(self, rng):
        X = rng.standard_normal((30, 3))
        y = X @ [1.0, 2.0, 3.0] + rng.standard_normal(30)
        lam = select_lambda((X, y), (X, y), grid_size=1)
        assert np.isclose(lam, lambda_max(X, y))

    def test_bic_fallback_prefers_sparse_on_noise(self, rng):
        X = rng.standard_normal((100, 3))
        y = rng.standard_normal(100)
        lam = select_lambda_bic(X, y, grid_size=20)
        model = fit_lasso(X, y, lam)
        assert np.count_nonzero(model.coefficients) == 0


class TestConstantAndPredict:
    def test_single_row(self):
        model = fit_constant(np.array([[1.5, -2.0]]))
        np.testing.assert_allclose(model.means, [1.5, -2.0])
        np.testing.assert_allclose(model.sse_per_column, 0.0)

    def test_hand_arithmetic(self):
        model = fit_constant(np.array([[1.0], [3.0]]))
        assert model.means[0] == 2.0
        assert model.sse_per_column[0] == 2.0

    def test_matches_definitional_double_loop(self, rng):
        D = rng.standard_normal((100, 6))
        model = fit_constant(D)
        for j in range(6):
            mean_j = sum(D[i, j] for i in range(100)) / 100
            sse_j = sum((D[i, j] - mean_j) ** 2 for i in range(100))
            assert abs(model.sse_per_column[j] - sse_j) < 1e-9

    def test_predict_linear(self):
        model = LinearModel(intercept=2.0, coefficients=np.array([3.0]),
                            sse=0.0, r2=1.0, n=10)
        np.testing.assert_allclose(predict(model, np.array([[1.0]])), [5.0])

    def test_predict_constant_broadcast(self):
        model = ConstantModel(means=np.array([0.5, -1.0]),
                              sse_per_column=np.zeros(2), n=3)
        out = predict(model, np.zeros((4, 2)))
        assert out.shape == (4, 2)
        np.testing.assert_allclose(out[:, 0], 0.5)
        np.testing.assert_allclose(out[:, 1], -1.0)

    def test_zero_coefficient_model_is_constant(self, rng):
        model = fit_intercept_only(np.array([1.0, 2.0, 3.0]), p=4)
        out = predict(model, rng.standard_normal((5, 4)))
        np.testing.assert_allclose(out, 2.0)

    def test_dimension_mismatch(self, rng):
        model = LinearModel(intercept=0.0, coefficients=np.zeros(2),
                            sse=0.0, r2=1.0, n=5)
        with pytest.raises(DataError):
            predict(model, rng.standard_normal((4, 3)))


class TestKernelLassoEdge:
    def test_zero_variance_column_stays_zero(self, rng):
        X = rng.standard_normal((30, 3))
        X[:, 1] = 0.0  # already centered, zero scale
        y = rng.standard_normal(30)
        beta, _, converged = lasso_cd(X, y - y.mean(), 0.01)
        assert converged
        assert beta[1] == 0.0
