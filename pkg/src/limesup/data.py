"""Tabular dataset handling: load, validate, split, standardize.

A :class:`Dataset` bundles a feature matrix with the fitted responses of the
model being explained, plus optional per-feature derivatives and binary
labels.  ``model_vars`` and ``partition_vars`` let callers restrict which
columns enter node models versus split search; both default to all columns.
"""

import csv
import os
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

from limesup._util import array_digest
from limesup.exceptions import DataError


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    feature_names: tuple
    response: np.ndarray
    derivatives: np.ndarray | None = None
    labels: np.ndarray | None = None
    model_vars: tuple = None
    partition_vars: tuple = None

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] == 0 or feats.shape[1] == 0:
            raise DataError("features must be a nonempty 2-d matrix")
        resp = np.ascontiguousarray(self.response, dtype=np.float64)
        if resp.shape != (feats.shape[0],):
            raise DataError("response length does not match feature rows")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != feats.shape[1] or len(set(names)) != len(names):
            raise DataError("feature_names must be unique and match columns")
        if not np.isfinite(feats).all() or not np.isfinite(resp).all():
            raise DataError("non-finite value in features or response")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "response", resp)
        object.__setattr__(self, "feature_names", names)

        if self.derivatives is not None:
            deriv = np.ascontiguousarray(self.derivatives, dtype=np.float64)
            if deriv.shape != feats.shape:
                raise DataError("derivatives must align with features")
            if not np.isfinite(deriv).all():
                raise DataError("non-finite value in derivatives")
            object.__setattr__(self, "derivatives", deriv)
        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels)
            if labels.shape != (feats.shape[0],):
                raise DataError("labels length does not match feature rows")
            vals = np.unique(labels)
            if not np.isin(vals, (0, 1)).all():
                raise DataError("labels must be binary 0/1")
            object.__setattr__(self, "labels", labels.astype(np.int64))

        for attr in ("model_vars", "partition_vars"):
            val = getattr(self, attr)
            if val is None:
                val = tuple(range(feats.shape[1]))
            else:
                val = tuple(int(v) for v in val)
                if len(val) == 0:
                    raise DataError(f"{attr} must be nonempty")
                if len(set(val)) != len(val) or not all(0 <= v < feats.shape[1] for v in val):
                    raise DataError(f"{attr} must be distinct valid column indices")
            object.__setattr__(self, attr, val)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def k(self):
        return self.features.shape[1]

    def take(self, rows):
        """Row subset as a new Dataset (order follows ``rows``)."""
        rows = np.asarray(rows, dtype=np.int64)
        return replace(
            self,
            features=self.features[rows],
            response=self.response[rows],
            derivatives=None if self.derivatives is None else self.derivatives[rows],
            labels=None if self.labels is None else self.labels[rows],
        )

    def model_matrix(self, rows=None):
        """Feature columns used by node models, optionally row-subset."""
        cols = self.features[:, self.model_vars]
        return cols if rows is None else cols[np.asarray(rows, dtype=np.int64)]

    def content_hash(self):
        parts = [self.features, self.response]
        if self.derivatives is not None:
            parts.append(self.derivatives)
        if self.labels is not None:
            parts.append(self.labels)
        return array_digest(*parts)


@dataclass(frozen=True)
class StandardizationParams:
    mean: np.ndarray
    sd: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.sd

    def invert(self, Xs):
        return np.asarray(Xs, dtype=np.float64) * self.sd + self.mean


def load_csv(path, response="yhat", label="label", delimiter=",",
             model_vars=None, partition_vars=None):
    """Load a dataset from a headed CSV file.

    Columns named ``d_<feature>`` are treated as derivatives and must cover
    all features or none.  ``label`` is optional: the default column name is
    used when present, silently skipped when absent.

    Raises DataError on a missing file, missing/duplicate columns, any
    non-numeric or non-finite cell, or partial derivative coverage.
    """
    if not os.path.isfile(path):
        raise DataError(f"missing file: {path}")
    with open(path, newline="") as fh:
        header = next(csv.reader(fh, delimiter=delimiter), None)
    if not header:
        raise DataError(f"empty file: {path}")
    if len(set(header)) != len(header):
        dupes = sorted({c for c in header if header.count(c) > 1})
        raise DataError(f"duplicate columns: {', '.join(dupes)}")

    df = pd.read_csv(path, sep=delimiter, float_precision="round_trip")
    if response not in df.columns:
        raise DataError(f"missing response column: {response}")

    label_col = label if label in df.columns else None
    deriv_cols = [c for c in df.columns
                  if c.startswith("d_") and c not in (response, label_col)]
    feature_cols = [c for c in df.columns
                    if c not in deriv_cols and c != response and c != label_col]
    if not feature_cols:
        raise DataError("no feature columns found")

    covered = {c[2:] for c in deriv_cols}
    if covered and covered != set(feature_cols):
        raise DataError(
            "partial derivative coverage: d_* columns must cover all features or none")

    def to_numeric(cols):
        block = np.empty((len(df), len(cols)))
        for j, c in enumerate(cols):
            block[:, j] = pd.to_numeric(df[c], errors="coerce").to_numpy(dtype=np.float64)
        bad = ~np.isfinite(block)
        if bad.any():
            r, j = np.argwhere(bad)[0]
            raise DataError(f"non-finite value at row {r}, column {cols[j]!r}")
        return block

    features = to_numeric(feature_cols)
    resp = to_numeric([response])[:, 0]
    derivatives = None
    if deriv_cols:
        derivatives = to_numeric([f"d_{c}" for c in feature_cols])
    labels = None
    if label_col is not None:
        raw = to_numeric([label_col])[:, 0]
        if not np.isin(raw, (0.0, 1.0)).all():
            raise DataError(f"label column {label_col!r} must be binary 0/1")
        labels = raw.astype(np.int64)

    def resolve(names):
        if names is None:
            return None
        idx = []
        for nm in names:
            if nm not in feature_cols:
                raise DataError(f"unknown feature column: {nm}")
            idx.append(feature_cols.index(nm))
        return tuple(idx)

    return Dataset(
        features=features,
        feature_names=tuple(feature_cols),
        response=resp,
        derivatives=derivatives,
        labels=labels,
        model_vars=resolve(model_vars),
        partition_vars=resolve(partition_vars),
    )


def write_csv(ds, path, response="yhat", label="label", delimiter=","):
    """Write a dataset in the schema read back by :func:`load_csv`."""
    cols = {name: ds.features[:, j] for j, name in enumerate(ds.feature_names)}
    if ds.derivatives is not None:
        for j, name in enumerate(ds.feature_names):
            cols[f"d_{name}"] = ds.derivatives[:, j]
    cols[response] = ds.response
    if ds.labels is not None:
        cols[label] = ds.labels
    pd.DataFrame(cols).to_csv(path, index=False, sep=delimiter)


def split_dataset(ds, fractions=(0.5, 0.2, 0.3), seed=0):
    """Random disjoint train/validation/test split.

    Sizes are floor(N * f) with the remainder distributed train-first; the
    shuffle is a seeded Fisher-Yates permutation, so a given (dataset, seed)
    always produces the same assignment.
    """
    if len(fractions) != 3:
        raise DataError("fractions must be a (train, valid, test) triple")
    fr = [float(f) for f in fractions]
    if any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise DataError("degenerate fraction: fractions must be positive and sum to 1")
    if ds.n < 3:
        raise DataError("dataset too small to split (need at least 3 rows)")

    sizes = [int(np.floor(ds.n * f)) for f in fr]
    for i in range(ds.n - sum(sizes)):
        sizes[i % 3] += 1
    if any(s == 0 for s in sizes):
        raise DataError("degenerate fraction: a split would be empty")

    perm = np.random.default_rng(seed).permutation(ds.n)
    bounds = np.cumsum(sizes)
    parts = (perm[:bounds[0]], perm[bounds[0]:bounds[1]], perm[bounds[1]:bounds[2]])
    return tuple(ds.take(np.sort(p)) for p in parts)


def standardize(ds):
    """Center/scale features to sample mean 0, sample sd 1 (n-1 divisor).

    Response, derivatives and labels pass through unchanged.  Returns the
    transformed dataset and the parameters needed to invert the transform.
    """
    if ds.n < 2:
        raise DataError("standardize needs at least 2 rows")
    mean = ds.features.mean(axis=0)
    sd = ds.features.std(axis=0, ddof=1)
    bad = np.flatnonzero(sd <= 0)
    if bad.size:
        raise DataError(f"zero-variance column: {ds.feature_names[bad[0]]}")
    params = StandardizationParams(mean=mean, sd=sd)
    return replace(ds, features=params.apply(ds.features)), params
