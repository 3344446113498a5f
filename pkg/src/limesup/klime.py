"""K-means partitioning baselines with per-cluster lasso linear models.

Three geometries over standardized features: plain Euclidean (E),
Mahalanobis via the inverse square root of the sample covariance (M), and
PCA restricted to the top components explaining at least 95% of variance
(P).  Clustering uses k-means++ seeding with restarts; the lowest
within-cluster sum of squares wins, ties resolved by restart index.
"""

import json
from dataclasses import dataclass

import numpy as np

from limesup._util import pmap
from limesup.data import StandardizationParams, standardize
from limesup.exceptions import DataError, NumericError
from limesup.linmod import LinearModel, fit_intercept_only
from limesup.suptree import _leaf_lasso

PCA_VARIANCE_TARGET = 0.95
EIGENVALUE_FLOOR = 1e-10
MAX_LLOYD_ITER = 300


@dataclass
class KMeansModel:
    variant: str
    standardization: StandardizationParams
    transform: np.ndarray          # (q, k); applied as X_std @ transform.T
    centroids: np.ndarray          # (n_clusters, q)
    models: list
    seed: int
    n_init: int
    feature_names: tuple
    model_vars: tuple

    @property
    def k(self):
        return self.centroids.shape[0]


def build_transform(X, variant):
    """Transform matrix for the requested geometry, from standardized X."""
    X = np.asarray(X, dtype=np.float64)
    k = X.shape[1]
    if variant == "E":
        return np.eye(k)
    S = np.cov(X, rowvar=False, ddof=1).reshape(k, k)
    evals, evecs = np.linalg.eigh(S)
    if evals.min() < -1e-8 * max(abs(evals.max()), 1.0):
        raise NumericError("covariance is not numerically positive semidefinite")
    if variant == "M":
        inv_sqrt = np.sqrt(1.0 / np.maximum(evals, EIGENVALUE_FLOOR))
        return evecs @ np.diag(inv_sqrt) @ evecs.T
    if variant == "P":
        order = np.argsort(evals)[::-1]
        evals, evecs = np.maximum(evals[order], 0.0), evecs[:, order]
        total = evals.sum()
        if total <= 0:
            raise NumericError("covariance has no variance to decompose")
        q = int(np.searchsorted(np.cumsum(evals) / total, PCA_VARIANCE_TARGET) + 1)
        W = evecs[:, :q].T.copy()
        # deterministic sign: largest-|loading| entry of each component positive
        for row in W:
            if row[np.argmax(np.abs(row))] < 0:
                row *= -1.0
        return W
    raise DataError(f"unknown variant: {variant!r} (expected E, M or P)")


def _plusplus_init(X, k, rng):
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centroids[0] = X[first]
    chosen[first] = True
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(np.flatnonzero(~chosen)[0]) if (~chosen).any() else first
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[c] = X[idx]
        chosen[idx] = True
        d2 = np.minimum(d2, ((X - centroids[c]) ** 2).sum(axis=1))
    return centroids


def _assign(X, centroids):
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1), d2


def _lloyd(X, centroids, max_iter=MAX_LLOYD_ITER):
    """Lloyd iterations until assignments stabilize; empty clusters are
    reseeded at the point farthest from its current centroid.  Returns
    (centroids, assignments, wcss, wcss_history)."""
    centroids = np.array(centroids, dtype=np.float64, copy=True)
    k = centroids.shape[0]
    assignments = None
    history = []
    for _ in range(max_iter):
        new_assign, d2 = _assign(X, centroids)
        for c in range(k):
            if (new_assign == c).any():
                continue
            dist_own = d2[np.arange(len(new_assign)), new_assign]
            far = int(dist_own.argmax())
            new_assign[far] = c
            centroids[c] = X[far]
            _, d2 = _assign(X, centroids)
        history.append(float(d2[np.arange(len(new_assign)), new_assign].sum()))
        if assignments is not None and (new_assign == assignments).all():
            assignments = new_assign
            break
        assignments = new_assign
        for c in range(k):
            centroids[c] = X[assignments == c].mean(axis=0)
    final_assign, d2 = _assign(X, centroids)
    wcss = float(d2[np.arange(len(final_assign)), final_assign].sum())
    return centroids, final_assign, wcss, history


def kmeans(Xt, k, seed=0, n_init=10, threads=1):
    """k-means++ with ``n_init`` restarts; returns (centroids, assignments,
    wcss) of the best restart, deterministic for a given seed."""
    Xt = np.asarray(Xt, dtype=np.float64)
    n = Xt.shape[0]
    if k < 1 or k > n:
        raise DataError(f"k must be in [1, {n}], got {k}")
    seeds = np.random.SeedSequence(seed).spawn(n_init)

    def run(child):
        rng = np.random.default_rng(child)
        init = _plusplus_init(Xt, k, rng)
        centroids, assign, wcss, _ = _lloyd(Xt, init)
        return centroids, assign, wcss

    results = pmap(run, seeds, threads)
    best = min(range(n_init), key=lambda i: (results[i][2], i))
    centroids, assign, wcss = results[best]
    return centroids, assign, wcss


def klime_fit(train, valid, k, variant, seed=0, n_init=10, lasso_grid_size=50,
              threads=1):
    """Standardize, transform, cluster the training rows, then fit one lasso
    linear model per cluster on the original features.

    Clusters with fewer than p+2 training rows get intercept-only models;
    clusters with no validation rows pick their penalty by BIC.
    """
    ds_std, params = standardize(train)
    W = build_transform(ds_std.features, variant)
    Xt = ds_std.features @ W.T
    centroids, assign, _ = kmeans(Xt, k, seed=seed, n_init=n_init,
                                  threads=threads)

    model = KMeansModel(variant=variant, standardization=params, transform=W,
                        centroids=centroids, models=[], seed=seed,
                        n_init=n_init, feature_names=train.feature_names,
                        model_vars=train.model_vars)
    valid_assign = assign_clusters(model, valid.features)
    cols = list(train.model_vars)
    p = len(cols)

    def fit_cluster(c):
        rows_t = np.flatnonzero(assign == c)
        rows_v = np.flatnonzero(valid_assign == c)
        if rows_t.size < p + 2:
            return fit_intercept_only(train.response[rows_t], p)
        return _leaf_lasso(train.features[np.ix_(rows_t, cols)],
                           train.response[rows_t],
                           valid.features[np.ix_(rows_v, cols)],
                           valid.response[rows_v], lasso_grid_size)

    model.models = pmap(fit_cluster, range(k), threads)
    return model


def assign_clusters(model, X):
    """Nearest-centroid cluster ids; ties go to the lowest cluster index."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise DataError("input width does not match the cluster model")
    Xt = model.standardization.apply(X) @ model.transform.T
    ids, _ = _assign(Xt, model.centroids)
    return ids


def klime_predict(model, X):
    """Per-row prediction from each row's cluster model."""
    X = np.asarray(X, dtype=np.float64)
    ids = assign_clusters(model, X)
    out = np.empty(X.shape[0])
    cols = list(model.model_vars)
    for c in np.unique(ids):
        idx = np.flatnonzero(ids == c)
        out[idx] = model.models[c].predict(X[np.ix_(idx, cols)])
    return out


def klime_to_json(model):
    return {
        "artifact": "klime",
        "variant": model.variant,
        "standardization": {"mean": list(map(float, model.standardization.mean)),
                            "sd": list(map(float, model.standardization.sd))},
        "transform": [list(map(float, row)) for row in model.transform],
        "centroids": [list(map(float, row)) for row in model.centroids],
        "models": [{"intercept": m.intercept,
                    "coefficients": list(map(float, m.coefficients)),
                    "sse": m.sse, "r2": m.r2, "n": m.n, "lambda": m.lam}
                   for m in model.models],
        "seed": model.seed,
        "n_init": model.n_init,
        "feature_names": list(model.feature_names),
        "model_vars": list(model.model_vars),
    }


def klime_from_json(obj):
    params = StandardizationParams(mean=np.asarray(obj["standardization"]["mean"]),
                                   sd=np.asarray(obj["standardization"]["sd"]))
    models = [LinearModel(intercept=m["intercept"],
                          coefficients=np.asarray(m["coefficients"]),
                          sse=m["sse"], r2=m["r2"], n=m["n"], lam=m["lambda"])
              for m in obj["models"]]
    return KMeansModel(variant=obj["variant"], standardization=params,
                       transform=np.asarray(obj["transform"]),
                       centroids=np.asarray(obj["centroids"]),
                       models=models, seed=obj["seed"], n_init=obj["n_init"],
                       feature_names=tuple(obj["feature_names"]),
                       model_vars=tuple(obj["model_vars"]))


def save_klime(model, path):
    with open(path, "w") as fh:
        json.dump(klime_to_json(model), fh, indent=2)
        fh.write("\n")


def load_klime(path):
    with open(path) as fh:
        return klime_from_json(json.load(fh))


def cluster_coefficients(model):
    """Per-cluster linear coefficients as a DataFrame."""
    import pandas as pd

    rows = []
    for c, m in enumerate(model.models):
        rec = {"cluster_id": c, "n": m.n, "lambda": m.lam, "r2": m.r2,
               "intercept": m.intercept}
        for j, col in enumerate(model.model_vars):
            rec[model.feature_names[col]] = float(m.coefficients[j])
        rows.append(rec)
    return pd.DataFrame(rows)
