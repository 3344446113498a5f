"""Global and per-partition surrogate evaluation: MSE, R-squared, AUC.

MSE and R-squared compare surrogate predictions against the explained
model's outputs; AUC ranks surrogate predictions against the original
binary labels (the only target AUC is meaningful for) using the
Mann-Whitney statistic with midrank tie handling.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from limesup.exceptions import DataError


@dataclass
class MetricsReport:
    method: str
    mse: float
    r2: float
    auc: float | None
    n: int


@dataclass
class PartitionCell:
    partition_id: int
    method: str
    n: int
    mse: float
    r2: float | None


@dataclass
class PartitionReport:
    source: str
    cells: list

    def partition_ids(self):
        return sorted({c.partition_id for c in self.cells})


def _check_aligned(*vectors):
    lengths = {len(v) for v in vectors}
    if len(lengths) != 1:
        raise DataError(f"length mismatch: {sorted(lengths)}")


def auc_score(y_pred, labels):
    """Mann-Whitney AUC of predictions against binary labels (midranks)."""
    y_pred = np.asarray(y_pred, dtype=np.float64)
    labels = np.asarray(labels)
    _check_aligned(y_pred, labels)
    pos = labels == 1
    n1 = int(pos.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        raise DataError("AUC requires both label classes to be present")
    ranks = rankdata(y_pred, method="average")
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def global_metrics(y_ref, y_pred, labels=None, method=""):
    """MSE, R-squared (SST about mean(y_ref)) and optional AUC."""
    y_ref = np.asarray(y_ref, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    _check_aligned(y_ref, y_pred)
    resid = y_ref - y_pred
    sse = float(resid @ resid)
    sst = float(((y_ref - y_ref.mean()) ** 2).sum())
    if sst <= 0.0:
        r2 = 1.0 if sse < 1e-12 else 0.0
    else:
        r2 = 1.0 - sse / sst
    auc = None
    if labels is not None:
        _check_aligned(y_ref, labels)
        auc = auc_score(y_pred, labels)
    return MetricsReport(method=method, mse=sse / len(y_ref), r2=r2,
                         auc=auc, n=len(y_ref))


def partition_comparison(partition_ids, y_ref, predictions, source=""):
    """Per-partition MSE and R-squared for each method.

    ``predictions`` maps method name to a prediction vector aligned with
    ``y_ref``.  R-squared uses the partition-local SST and is omitted (None)
    for partitions whose reference values have no spread, e.g. singletons.
    """
    partition_ids = np.asarray(partition_ids)
    y_ref = np.asarray(y_ref, dtype=np.float64)
    _check_aligned(partition_ids, y_ref)
    for name, pred in predictions.items():
        _check_aligned(y_ref, pred)

    cells = []
    for pid in np.unique(partition_ids):
        idx = np.flatnonzero(partition_ids == pid)
        y_p = y_ref[idx]
        sst = float(((y_p - y_p.mean()) ** 2).sum())
        for name, pred in predictions.items():
            resid = y_p - np.asarray(pred, dtype=np.float64)[idx]
            sse = float(resid @ resid)
            r2 = None if sst <= 0.0 else 1.0 - sse / sst
            cells.append(PartitionCell(partition_id=int(pid), method=name,
                                       n=len(idx), mse=sse / len(idx), r2=r2))
    return PartitionReport(source=source, cells=cells)


def metrics_to_rows(reports):
    return [{"method": r.method, "mse": r.mse, "r2": r.r2,
             "auc": r.auc, "n": r.n} for r in reports]


def partition_to_rows(report):
    return [{"source": report.source, "partition_id": c.partition_id,
             "method": c.method, "n": c.n, "mse": c.mse, "r2": c.r2}
            for c in report.cells]


def format_table(reports):
    """Fixed-width methods-by-metrics grid (MSE, R-squared, AUC)."""
    methods = [r.method for r in reports]
    widths = [max(10, len(m) + 2) for m in methods]
    lines = ["".join([" " * 6] + [f"{m:>{w}}" for m, w in zip(methods, widths)])]
    for key, label in (("mse", "MSE"), ("r2", "R^2"), ("auc", "AUC")):
        cells = []
        for r, w in zip(reports, widths):
            value = getattr(r, key)
            cells.append(f"{'-':>{w}}" if value is None else f"{value:>{w}.3f}")
        lines.append("".join([f"{label:<6}"] + cells))
    return "\n".join(lines)
