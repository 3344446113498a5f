"""Synthetic logistic benchmark with analytic derivatives.

The generator draws six independent standard normal predictors and builds
the logit surface

    eta(x) = -1 + 0.5*x1 + 1.5*(x2 - 1)_+ - 0.5*x3^2 + 0.5*x4*(x5 + x6)

with Bernoulli labels at sigmoid(eta).  The true logit stands in for a
fitted black-box response; optional Gaussian noise on responses and
derivatives emulates fitting error.  At the hinge point x2 = 1 (a
probability-zero event) the x2-derivative is defined as 0.
"""

from dataclasses import dataclass

import numpy as np

from limesup.data import Dataset
from limesup.exceptions import DataError

FEATURE_NAMES = ("x1", "x2", "x3", "x4", "x5", "x6")


@dataclass(frozen=True)
class SimConfig:
    n: int = 50000
    seed: int = 0
    response_noise_sd: float = 0.0
    derivative_noise_sd: float = 0.0
    fractions: tuple = (0.5, 0.2, 0.3)

    def __post_init__(self):
        if self.n < 10:
            raise DataError("simulation needs n >= 10")
        if self.response_noise_sd < 0 or self.derivative_noise_sd < 0:
            raise DataError("noise sd must be nonnegative")


def eq1_logit(X):
    """True logit surface at the given 6-column inputs."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 6:
        raise DataError("expected a 6-column input matrix")
    x1, x2, x3, x4, x5, x6 = X.T
    return (-1.0 + 0.5 * x1 + 1.5 * np.maximum(x2 - 1.0, 0.0)
            - 0.5 * x3 ** 2 + 0.5 * x4 * (x5 + x6))


def analytic_derivatives(X):
    """Exact partial derivatives of the logit surface, column per feature."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 6:
        raise DataError("expected a 6-column input matrix")
    x2, x3, x4, x5, x6 = X[:, 1], X[:, 2], X[:, 3], X[:, 4], X[:, 5]
    D = np.empty_like(X)
    D[:, 0] = 0.5
    D[:, 1] = np.where(x2 > 1.0, 1.5, 0.0)
    D[:, 2] = -x3
    D[:, 3] = 0.5 * (x5 + x6)
    D[:, 4] = 0.5 * x4
    D[:, 5] = 0.5 * x4
    return D


def simulate_eq1(config=None, **overrides):
    """Generate the benchmark dataset; bit-identical for a fixed config.

    Draw order is fixed (features, labels, then optional noise blocks) so
    enabling one noise term does not disturb the others' streams beyond the
    documented sequence.
    """
    if config is None:
        config = SimConfig(**overrides)
    rng = np.random.default_rng(config.seed)
    X = rng.standard_normal((config.n, 6))
    eta = eq1_logit(X)
    labels = (rng.random(config.n) < 1.0 / (1.0 + np.exp(-eta))).astype(np.int64)

    response = eta
    if config.response_noise_sd > 0:
        response = eta + config.response_noise_sd * rng.standard_normal(config.n)
    derivatives = analytic_derivatives(X)
    if config.derivative_noise_sd > 0:
        derivatives = derivatives + (config.derivative_noise_sd
                                     * rng.standard_normal(X.shape))

    return Dataset(features=X, feature_names=FEATURE_NAMES, response=response,
                   derivatives=derivatives, labels=labels)
