import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from limesup.data import Dataset, load_csv, split_dataset, standardize, write_csv
from limesup.exceptions import DataError

from conftest import make_dataset


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        path = write(tmp_path, "x1,x2,yhat\n1,2,3\n4,5,6\n7,8,9\n")
        ds = load_csv(path)
        assert ds.n == 3 and ds.k == 2
        assert ds.feature_names == ("x1", "x2")
        assert ds.derivatives is None and ds.labels is None
        np.testing.assert_allclose(ds.response, [3, 6, 9])
        # row order preserved
        np.testing.assert_allclose(ds.features[:, 0], [1, 4, 7])

    def test_nan_cell_rejected(self, tmp_path):
        path = write(tmp_path, "x1,x2,yhat\n1,2,3\n4,NaN,6\n")
        with pytest.raises(DataError, match=r"non-finite value at row 1, column 'x2'"):
            load_csv(path)

    def test_non_numeric_cell_rejected(self, tmp_path):
        path = write(tmp_path, "x1,x2,yhat\n1,2,3\nfoo,5,6\n")
        with pytest.raises(DataError, match=r"non-finite value at row 1, column 'x1'"):
            load_csv(path)

    def test_partial_derivative_coverage(self, tmp_path):
        path = write(tmp_path, "x1,x2,d_x1,yhat\n1,2,0.5,3\n4,5,0.5,6\n")
        with pytest.raises(DataError, match="partial derivative coverage"):
            load_csv(path)

    def test_full_derivative_coverage(self, tmp_path):
        path = write(tmp_path, "x1,x2,d_x1,d_x2,yhat,label\n1,2,0.1,0.2,3,0\n4,5,0.3,0.4,6,1\n")
        ds = load_csv(path)
        assert ds.derivatives.shape == (2, 2)
        np.testing.assert_allclose(ds.derivatives[:, 1], [0.2, 0.4])
        np.testing.assert_array_equal(ds.labels, [0, 1])

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="missing file"):
            load_csv(str(tmp_path / "nope.csv"))

    def test_missing_response(self, tmp_path):
        path = write(tmp_path, "x1,x2\n1,2\n")
        with pytest.raises(DataError, match="missing response column"):
            load_csv(path)

    def test_duplicate_columns(self, tmp_path):
        path = write(tmp_path, "x1,x1,yhat\n1,2,3\n")
        with pytest.raises(DataError, match="duplicate columns"):
            load_csv(path)

    def test_roundtrip_through_csv(self, tmp_path, rng):
        X = rng.standard_normal((20, 3))
        ds = make_dataset(X, rng.standard_normal(20),
                          derivatives=rng.standard_normal((20, 3)),
                          labels=(rng.random(20) < 0.5).astype(int))
        path = str(tmp_path / "roundtrip.csv")
        write_csv(ds, path)
        back = load_csv(path)
        np.testing.assert_array_equal(back.features, ds.features)
        np.testing.assert_array_equal(back.response, ds.response)
        np.testing.assert_array_equal(back.derivatives, ds.derivatives)
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_model_vars_resolution(self, tmp_path):
        path = write(tmp_path, "x1,x2,yhat\n1,2,3\n4,5,6\n")
        ds = load_csv(path, model_vars=["x2"], partition_vars=["x1", "x2"])
        assert ds.model_vars == (1,)
        assert ds.partition_vars == (0, 1)
        with pytest.raises(DataError, match="unknown feature column"):
            load_csv(path, model_vars=["nope"])


class TestDatasetInvariants:
    def test_rejects_nonfinite(self, rng):
        X = rng.standard_normal((5, 2))
        X[3, 1] = np.inf
        with pytest.raises(DataError):
            make_dataset(X, np.zeros(5))

    def test_rejects_misaligned_derivatives(self, rng):
        X = rng.standard_normal((5, 2))
        with pytest.raises(DataError):
            make_dataset(X, np.zeros(5), derivatives=np.zeros((5, 3)))

    def test_rejects_empty_model_vars(self, rng):
        with pytest.raises(DataError):
            make_dataset(rng.standard_normal((5, 2)), np.zeros(5), model_vars=())

    def test_rejects_nonbinary_labels(self, rng):
        with pytest.raises(DataError):
            make_dataset(rng.standard_normal((5, 2)), np.zeros(5),
                         labels=np.array([0, 1, 2, 0, 1]))


class TestSplitDataset:
    def test_paper_proportions(self, rng):
        ds = make_dataset(rng.standard_normal((50000, 2)), rng.standard_normal(50000))
        train, valid, test = split_dataset(ds, (0.5, 0.2, 0.3), seed=1)
        assert (train.n, valid.n, test.n) == (25000, 10000, 15000)

    def test_remainder_assigned_train_first(self, rng):
        ds = make_dataset(rng.standard_normal((11, 2)), rng.standard_normal(11))
        train, valid, test = split_dataset(ds, (0.5, 0.25, 0.25), seed=0)
        # floors are (5, 2, 2); remainder 2 goes train then valid
        assert (train.n, valid.n, test.n) == (6, 3, 2)

    def test_degenerate_fraction_rejected(self, rng):
        ds = make_dataset(rng.standard_normal((10, 2)), rng.standard_normal(10))
        with pytest.raises(DataError, match="degenerate fraction"):
            split_dataset(ds, (1.0 - 2e-10, 1e-10, 1e-10), seed=0)
        with pytest.raises(DataError, match="degenerate fraction"):
            split_dataset(ds, (0.5, 0.5, 0.2), seed=0)

    def test_too_small(self, rng):
        ds = make_dataset(rng.standard_normal((2, 2)), np.zeros(2))
        with pytest.raises(DataError):
            split_dataset(ds, (0.4, 0.3, 0.3), seed=0)

    def test_deterministic(self, rng):
        ds = make_dataset(rng.standard_normal((100, 2)), rng.standard_normal(100))
        a = split_dataset(ds, (0.5, 0.2, 0.3), seed=9)
        b = split_dataset(ds, (0.5, 0.2, 0.3), seed=9)
        for da, db in zip(a, b):
            np.testing.assert_array_equal(da.features, db.features)

    @given(n=st.integers(10, 400), seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_partition_property(self, n, seed):
        # every original row lands in exactly one part
        X = np.arange(n, dtype=np.float64).reshape(-1, 1)
        ds = make_dataset(X, np.zeros(n))
        parts = split_dataset(ds, (0.5, 0.2, 0.3), seed=seed)
        seen = np.concatenate([p.features[:, 0] for p in parts])
        assert sorted(seen.tolist()) == list(range(n))


class TestStandardize:
    def test_hand_computed_column(self):
        # column (0, 2, 4): mean 2, sample sd 2 -> (-1, 0, 1)
        ds = make_dataset(np.array([[0.0], [2.0], [4.0]]), np.zeros(3))
        out, params = standardize(ds)
        np.testing.assert_allclose(out.features[:, 0], [-1.0, 0.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(params.mean, [2.0])
        np.testing.assert_allclose(params.sd, [2.0])

    def test_postcondition(self, rng):
        ds = make_dataset(rng.standard_normal((50, 4)) * 7 + 3, np.zeros(50))
        out, _ = standardize(ds)
        assert np.abs(out.features.mean(axis=0)).max() < 1e-10
        assert np.abs(out.features.std(axis=0, ddof=1) - 1).max() < 1e-10

    def test_idempotent_on_fixed_point(self, rng):
        ds = make_dataset(rng.standard_normal((60, 3)), np.zeros(60))
        once, _ = standardize(ds)
        twice, _ = standardize(once)
        np.testing.assert_allclose(twice.features, once.features, atol=1e-10)

    def test_constant_column_rejected(self, rng):
        X = rng.standard_normal((10, 2))
        X[:, 1] = 4.0
        with pytest.raises(DataError, match="zero-variance column"):
            standardize(make_dataset(X, np.zeros(10)))

    @given(seed=st.integers(0, 2**31), n=st.integers(3, 50), k=st.integers(1, 5))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_property(self, seed, n, k):
        r = np.random.default_rng(seed)
        X = r.standard_normal((n, k)) * (1 + r.random(k) * 10) + r.standard_normal(k)
        if np.any(X.std(axis=0, ddof=1) <= 0):
            return
        ds = make_dataset(X, np.zeros(n))
        out, params = standardize(ds)
        back = params.invert(out.features)
        np.testing.assert_allclose(back, X, rtol=1e-9, atol=1e-9)
