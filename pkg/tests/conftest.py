import numpy as np
import pytest

from limesup.data import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(X, y, names=None, derivatives=None, labels=None, **kw):
    X = np.asarray(X, dtype=np.float64)
    if names is None:
        names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
    return Dataset(features=X, feature_names=names, response=np.asarray(y),
                   derivatives=derivatives, labels=labels, **kw)


def linear_dataset(rng, n=200, p=3, noise=0.0):
    """y = 1 + sum_j (j+1) * x_j + noise; exactly linear when noise = 0."""
    X = rng.standard_normal((n, p))
    beta = np.arange(1, p + 1, dtype=np.float64)
    y = 1.0 + X @ beta + noise * rng.standard_normal(n)
    return make_dataset(X, y)
