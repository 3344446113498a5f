"""Supervised-partitioning trees with parametric node models.

Response trees carry per-node linear models fitted to the explained model's
outputs; derivative trees (built through :mod:`limesup.dtree`) carry
per-node constant models on locally scaled derivative matrices.  Both share
the same growth skeleton: rank candidate split variables with a
score-process instability statistic (supLM), then run an exhaustive
threshold scan on the top few, splitting while the training SSE improvement
clears a relative threshold.
"""

import json
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from limesup import _kernels
from limesup._util import pmap
from limesup.exceptions import DataError
from limesup.linmod import (
    ConstantModel,
    LinearModel,
    fit_constant,
    fit_intercept_only,
    fit_lasso,
    fit_node_model,
    select_lambda,
    select_lambda_bic,
)

SUPLM_TRIM = (0.1, 0.9)
SCORE_COV_RIDGE = 1e-10


@dataclass(frozen=True)
class SplitSpec:
    variable: int
    threshold: float


@dataclass
class Node:
    id: int
    n: int
    depth: int
    model: object
    rows: np.ndarray | None = None
    split: SplitSpec | None = None
    children: tuple | None = None
    sse_improvement: float = 0.0
    scale_sds: np.ndarray | None = None
    response_model: LinearModel | None = None

    @property
    def is_leaf(self):
        return self.split is None


@dataclass
class GrowthConfig:
    max_depth: int = 3
    min_node_size: int | None = None   # None resolves to max(30, 5 * (p + 1))
    n_quantiles: int = 99
    m_filter: int = 5
    min_relative_improvement: float = 1e-3
    prune_threshold: float = 1e-3
    lasso_grid_size: int = 50

    def __post_init__(self):
        if self.max_depth < 1 or self.n_quantiles < 1 or self.m_filter < 1:
            raise DataError("tree growth parameters must be positive")
        if self.min_node_size is not None and self.min_node_size < 1:
            raise DataError("min_node_size must be positive")
        if self.min_relative_improvement < 0 or self.prune_threshold < 0:
            raise DataError("improvement thresholds must be nonnegative")
        if self.lasso_grid_size < 1:
            raise DataError("lasso_grid_size must be positive")

    def resolved_min_node_size(self, p):
        if self.min_node_size is not None:
            return int(self.min_node_size)
        return max(30, 5 * (p + 1))


@dataclass
class Tree:
    kind: str
    nodes: dict
    feature_names: tuple
    model_vars: tuple
    partition_vars: tuple
    config: GrowthConfig
    provenance: dict = field(default_factory=dict)
    root_id: int = 0

    def leaves(self):
        return [n for _, n in sorted(self.nodes.items()) if n.is_leaf]

    def internal_nodes(self):
        return [n for _, n in sorted(self.nodes.items()) if not n.is_leaf]

    @property
    def n_leaves(self):
        return sum(1 for n in self.nodes.values() if n.is_leaf)

    @property
    def depth(self):
        return max(n.depth for n in self.nodes.values())


def candidate_thresholds(values, n_quantiles):
    """Midpoints between consecutive distinct values at node-local quantiles.

    Quantile levels are q / (n_quantiles + 1) for q = 1..n_quantiles; each
    maps to an order statistic whose midpoint with the next larger distinct
    value becomes a candidate.  Duplicates collapse, so heavily tied columns
    yield fewer candidates.  Result is ascending and strictly between
    observed values.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = len(v)
    distinct = np.unique(v)
    if distinct.size < 2 or n < 2:
        return np.empty(0)
    q = np.arange(1, n_quantiles + 1) / (n_quantiles + 1)
    ks = np.clip((np.ceil(q * n) - 1).astype(np.int64), 0, n - 1)
    pos = np.searchsorted(distinct, v[ks])
    keep = pos < distinct.size - 1
    if not keep.any():
        return np.empty(0)
    return np.unique((distinct[pos[keep]] + distinct[pos[keep] + 1]) / 2.0)


def _suplm_statistic(Q, z, lo, hi, n):
    order = np.argsort(z, kind="stable")
    csum = np.cumsum(Q[order], axis=0) / np.sqrt(n)
    t = np.arange(lo, hi + 1)
    frac = t / n
    norms = (csum[t - 1] ** 2).sum(axis=1)
    return float(np.max(norms / (frac * (1.0 - frac))))


def _suplm_rank(psi, candidates, m, threads=1):
    """Rank candidate (variable, values) pairs by the supLM statistic of the
    cumulative score process, descending; ties prefer the lower variable
    index.  Returns at most m pairs (variable, statistic)."""
    psi = np.asarray(psi, dtype=np.float64)
    n, d = psi.shape
    J = psi.T @ psi / n + SCORE_COV_RIDGE * np.eye(d)
    evals, evecs = np.linalg.eigh(J)
    inv_sqrt = evecs @ np.diag(1.0 / np.sqrt(np.maximum(evals, 1e-12))) @ evecs.T
    Q = psi @ inv_sqrt

    lo = max(int(np.ceil(SUPLM_TRIM[0] * n)), 1)
    hi = min(int(np.floor(SUPLM_TRIM[1] * n)), n - 1)
    if lo > hi:
        lo, hi = 1, n - 1

    stats = pmap(lambda it: (it[0], _suplm_statistic(Q, it[1], lo, hi, n)),
                 candidates, threads)
    stats.sort(key=lambda item: (-item[1], item[0]))
    return stats[:m]


def fluctuation_filter(node_rows, ds, model, m, threads=1):
    """Rank partitioning variables by parameter-instability evidence.

    Scores are residual times design row (intercept included); their
    covariance is ridge-stabilized and the supLM statistic of the normalized
    cumulative score process is evaluated over the trimmed break range.
    Variables with fewer than 2 distinct values at the node are skipped; an
    empty list signals an unsplittable node.
    """
    rows = np.asarray(node_rows, dtype=np.int64)
    X = ds.model_matrix(rows)
    resid = ds.response[rows] - model.predict(X)
    psi = resid[:, None] * np.column_stack([np.ones(len(rows)), X])

    candidates = []
    for v in ds.partition_vars:
        z = ds.features[rows, v]
        if z.size >= 2 and (z != z[0]).any():
            candidates.append((v, z))
    if not candidates:
        return []
    return _suplm_rank(psi, candidates, m, threads)


def exhaustive_split_search(node_rows, ds, variables, config, parent_sse=None,
                            threads=1):
    """Best (SplitSpec, SSE improvement) over all candidate thresholds of the
    given variables, fitting per-child linear models; None when no legal
    split clears ``min_relative_improvement``.

    Ties break to the lower variable index, then the smaller threshold.
    """
    rows = np.asarray(node_rows, dtype=np.int64)
    X = ds.model_matrix(rows)
    y = ds.response[rows]
    A = np.column_stack([np.ones(len(rows)), X])
    if parent_sse is None:
        parent_sse = fit_node_model(X, y).sse
    min_child = config.resolved_min_node_size(len(ds.model_vars))

    def scan(var):
        z = ds.features[rows, var]
        thr = candidate_thresholds(z, config.n_quantiles)
        if thr.size == 0:
            return var, thr, None
        return var, thr, _kernels.linear_split_scan(A, y, z, thr, min_child)

    return _pick_best_split(pmap(scan, variables, threads), parent_sse, config,
                            _sse_floor(y))


def _sse_floor(values):
    """Node SSE at or below this level counts as a satisfactory exact fit,
    so no further split is attempted (keeps float noise from driving
    relative-improvement comparisons)."""
    values = np.asarray(values, dtype=np.float64)
    return 1e-12 * values.size * (1.0 + float((values * values).mean()))


def _pick_best_split(scans, parent_sse, config, sse_floor=0.0):
    best = None
    for var, thr, sses in scans:
        if sses is None:
            continue
        finite = np.isfinite(sses)
        if not finite.any():
            continue
        j = int(np.argmin(np.where(finite, sses, np.inf)))
        cand = (float(sses[j]), int(var), float(thr[j]))
        if best is None or cand < best:
            best = cand
    if best is None or parent_sse <= sse_floor:
        return None
    improvement = parent_sse - best[0]
    if improvement < config.min_relative_improvement * parent_sse:
        return None
    return SplitSpec(variable=best[1], threshold=best[2]), improvement


def _node_sds(ds, rows):
    sds = ds.features[rows].std(axis=0, ddof=1)
    return np.where(sds > 0, sds, 1.0)


def _grow(ds, config, kind, threads=1, provenance=None):
    if kind == "derivative" and ds.derivatives is None:
        raise DataError("derivatives required to grow a derivative tree")
    p = len(ds.model_vars)
    min_node = config.resolved_min_node_size(p)
    if ds.n < 2 * min_node:
        raise DataError(
            f"dataset too small: need at least {2 * min_node} rows, got {ds.n}")
    config = replace(config, min_node_size=min_node)
    m_filter = min(config.m_filter, len(ds.partition_vars))

    def fit(rows):
        if kind == "response":
            return fit_node_model(ds.model_matrix(rows), ds.response[rows]), None
        sds = _node_sds(ds, rows)
        return fit_constant(ds.derivatives[rows] * sds), sds

    def make_node(nid, rows, depth):
        model, sds = fit(rows)
        return Node(id=nid, n=len(rows), depth=depth, model=model, rows=rows,
                    scale_sds=sds)

    def score_matrix(node):
        if kind == "response":
            X = ds.model_matrix(node.rows)
            resid = ds.response[node.rows] - node.model.predict(X)
            return resid[:, None] * np.column_stack([np.ones(node.n), X])
        scaled = ds.derivatives[node.rows] * node.scale_sds
        return scaled - node.model.means

    def search(node, variables):
        if kind == "response":
            return exhaustive_split_search(node.rows, ds, variables, config,
                                           parent_sse=node.model.sse,
                                           threads=threads)
        scaled = ds.derivatives[node.rows] * node.scale_sds

        def scan(var):
            z = ds.features[node.rows, var]
            thr = candidate_thresholds(z, config.n_quantiles)
            if thr.size == 0:
                return var, thr, None
            return var, thr, _kernels.constant_split_scan(scaled, z, thr, min_node)

        return _pick_best_split(pmap(scan, variables, threads),
                                node.model.sse, config, _sse_floor(scaled))

    nodes = {0: make_node(0, np.arange(ds.n, dtype=np.int64), 0)}
    next_id = 1
    queue = deque([0])
    while queue:
        nid = queue.popleft()
        node = nodes[nid]
        if node.depth >= config.max_depth or node.n < 2 * min_node:
            continue
        candidates = []
        for v in ds.partition_vars:
            z = ds.features[node.rows, v]
            if (z != z[0]).any():
                candidates.append((v, z))
        if not candidates:
            continue
        ranked = _suplm_rank(score_matrix(node), candidates, m_filter, threads)
        found = search(node, [v for v, _ in ranked])
        if found is None:
            continue
        spec, improvement = found
        mask = ds.features[node.rows, spec.variable] <= spec.threshold
        left, right = next_id, next_id + 1
        next_id += 2
        nodes[left] = make_node(left, node.rows[mask], node.depth + 1)
        nodes[right] = make_node(right, node.rows[~mask], node.depth + 1)
        node.split = spec
        node.children = (left, right)
        node.sse_improvement = float(improvement)
        queue.extend((left, right))

    prov = dict(provenance or {})
    prov.setdefault("dataset_sha256", ds.content_hash())
    prov.setdefault("kernel_backend", _kernels.BACKEND)
    return Tree(kind=kind, nodes=nodes, feature_names=ds.feature_names,
                model_vars=ds.model_vars, partition_vars=ds.partition_vars,
                config=config, provenance=prov)


def grow_tree(train, config=None, threads=1, provenance=None):
    """Grow a response tree: per-node linear models, hybrid split search."""
    return _grow(train, config or GrowthConfig(), "response", threads, provenance)


def _route_rows(tree, X):
    out = np.full(X.shape[0], -1, dtype=np.int64)
    stack = [(tree.root_id, np.arange(X.shape[0], dtype=np.int64))]
    while stack:
        nid, idx = stack.pop()
        node = tree.nodes[nid]
        if node.is_leaf:
            out[idx] = nid
            continue
        mask = X[idx, node.split.variable] <= node.split.threshold
        stack.append((node.children[0], idx[mask]))
        stack.append((node.children[1], idx[~mask]))
    return out


def assign_partition(tree, X):
    """Terminal node id for each row of X (rows at a threshold go left)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(tree.feature_names):
        raise DataError("input width does not match the tree's feature count")
    return _route_rows(tree, X)


def _prediction_model(node):
    model = node.response_model if node.response_model is not None else node.model
    if not isinstance(model, LinearModel):
        raise DataError(
            "node has no response-scale model; derivative trees need "
            "dtree_response_models before prediction")
    return model


def predict_tree(tree, X):
    """Response prediction from each row's terminal-node model."""
    X = np.asarray(X, dtype=np.float64)
    ids = assign_partition(tree, X)
    out = np.empty(X.shape[0])
    cols = list(tree.model_vars)
    for nid in np.unique(ids):
        idx = np.flatnonzero(ids == nid)
        out[idx] = _prediction_model(tree.nodes[nid]).predict(X[np.ix_(idx, cols)])
    return out


def _valid_rows_by_node(tree, X):
    """Validation row indices reaching each node (path sets, not just leaves)."""
    X = np.asarray(X, dtype=np.float64)
    sets = {tree.root_id: np.arange(X.shape[0], dtype=np.int64)}
    order = sorted(tree.nodes)
    for nid in order:
        node = tree.nodes[nid]
        if node.is_leaf or nid not in sets:
            continue
        idx = sets[nid]
        mask = X[idx, node.split.variable] <= node.split.threshold
        sets[node.children[0]] = idx[mask]
        sets[node.children[1]] = idx[~mask]
    return sets


def _node_validation_sse(tree, node, valid, rows):
    if rows.size == 0:
        return 0.0
    if tree.kind == "response":
        X = valid.features[np.ix_(rows, list(tree.model_vars))]
        resid = valid.response[rows] - node.model.predict(X)
        return float(resid @ resid)
    # derivative tree: compare in the root node's scaling so SSEs are
    # commensurable across the whole tree
    root_sds = tree.nodes[tree.root_id].scale_sds
    means_root = node.model.means / node.scale_sds * root_sds
    D = valid.derivatives[rows] * root_sds
    return float(((D - means_root) ** 2).sum())


def prune_tree(tree, valid, config=None, threads=1):
    """Bottom-up collapse of splits whose validation-SSE reduction falls
    below ``prune_threshold`` times the root validation SSE."""
    config = config or tree.config
    if valid.n == 0:
        raise DataError("empty validation set")
    if tree.kind == "derivative" and valid.derivatives is None:
        raise DataError("derivatives required to prune a derivative tree")

    nodes = {nid: replace(node) for nid, node in tree.nodes.items()}
    pruned = replace(tree, nodes=nodes)
    valid_rows = _valid_rows_by_node(pruned, valid.features)
    root_sse = _node_validation_sse(pruned, nodes[pruned.root_id], valid,
                                    valid_rows[pruned.root_id])

    cache = {}

    def node_sse(nid):
        if nid not in cache:
            rows = valid_rows.get(nid, np.empty(0, dtype=np.int64))
            cache[nid] = _node_validation_sse(pruned, nodes[nid], valid, rows)
        return cache[nid]

    changed = True
    while changed:
        changed = False
        for nid in sorted(nodes, reverse=True):
            node = nodes.get(nid)
            if node is None or node.is_leaf:
                continue
            left, right = node.children
            if not (nodes[left].is_leaf and nodes[right].is_leaf):
                continue
            reduction = node_sse(nid) - (node_sse(left) + node_sse(right))
            if reduction < config.prune_threshold * root_sse:
                del nodes[left], nodes[right]
                node.split = None
                node.children = None
                node.sse_improvement = 0.0
                changed = True
    return pruned


def _leaf_lasso(X_train, y_train, X_valid, y_valid, grid_size):
    if len(y_train) < X_train.shape[1] + 1:
        return fit_intercept_only(y_train, X_train.shape[1])
    if len(y_valid) == 0:
        lam = select_lambda_bic(X_train, y_train, grid_size)
    else:
        lam = select_lambda((X_train, y_train), (X_valid, y_valid), grid_size)
    return fit_lasso(X_train, y_train, lam)


def refit_terminals_lasso(tree, train, valid, config=None, threads=1):
    """Replace each terminal model with a lasso fit, penalty chosen on that
    node's validation rows (BIC fallback when a leaf receives none).
    Tree structure and routing are unchanged."""
    if tree.kind != "response":
        raise DataError("refit_terminals_lasso applies to response trees")
    if any(node.rows is None for node in tree.nodes.values()):
        raise DataError("tree has no training row sets (loaded from JSON?)")
    config = config or tree.config
    nodes = {nid: replace(node) for nid, node in tree.nodes.items()}
    out = replace(tree, nodes=nodes)
    valid_rows = _valid_rows_by_node(out, valid.features)
    cols = list(tree.model_vars)

    leaf_ids = [nid for nid in sorted(nodes) if nodes[nid].is_leaf]

    def refit(nid):
        node = nodes[nid]
        rows_v = valid_rows.get(nid, np.empty(0, dtype=np.int64))
        return _leaf_lasso(train.features[np.ix_(node.rows, cols)],
                           train.response[node.rows],
                           valid.features[np.ix_(rows_v, cols)],
                           valid.response[rows_v], config.lasso_grid_size)

    for nid, model in zip(leaf_ids, pmap(refit, leaf_ids, threads)):
        nodes[nid].model = model
    return out


# ---------------------------------------------------------------------------
# serialization

def _model_to_json(model):
    if model is None:
        return None
    if isinstance(model, LinearModel):
        return {"type": "linear", "intercept": model.intercept,
                "coefficients": list(map(float, model.coefficients)),
                "sse": model.sse, "r2": model.r2, "n": model.n,
                "lambda": model.lam}
    if isinstance(model, ConstantModel):
        return {"type": "constant", "means": list(map(float, model.means)),
                "sse_per_column": list(map(float, model.sse_per_column)),
                "n": model.n}
    raise TypeError(type(model).__name__)


def _model_from_json(obj):
    if obj is None:
        return None
    if obj["type"] == "linear":
        return LinearModel(intercept=obj["intercept"],
                           coefficients=np.asarray(obj["coefficients"]),
                           sse=obj["sse"], r2=obj["r2"], n=obj["n"],
                           lam=obj["lambda"])
    return ConstantModel(means=np.asarray(obj["means"]),
                         sse_per_column=np.asarray(obj["sse_per_column"]),
                         n=obj["n"])


def tree_to_json(tree):
    cfg = tree.config
    out = {
        "artifact": tree.kind,
        "feature_names": list(tree.feature_names),
        "model_vars": list(tree.model_vars),
        "partition_vars": list(tree.partition_vars),
        "config": {
            "max_depth": cfg.max_depth, "min_node_size": cfg.min_node_size,
            "n_quantiles": cfg.n_quantiles, "m_filter": cfg.m_filter,
            "min_relative_improvement": cfg.min_relative_improvement,
            "prune_threshold": cfg.prune_threshold,
            "lasso_grid_size": cfg.lasso_grid_size,
        },
        "provenance": tree.provenance,
        "root_id": tree.root_id,
        "nodes": [],
    }
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        rec = {
            "id": node.id, "n": node.n, "depth": node.depth,
            "split_variable": (None if node.is_leaf
                               else tree.feature_names[node.split.variable]),
            "threshold": None if node.is_leaf else node.split.threshold,
            "children": None if node.children is None else list(node.children),
            "sse_improvement": node.sse_improvement,
            "pre_split_r2": (node.model.r2
                             if isinstance(node.model, LinearModel) else None),
            "model": _model_to_json(node.model),
        }
        if node.scale_sds is not None:
            rec["scale_sds"] = list(map(float, node.scale_sds))
        if node.response_model is not None:
            rec["response_model"] = _model_to_json(node.response_model)
        out["nodes"].append(rec)
    return out


def tree_from_json(obj):
    name_to_col = {n: j for j, n in enumerate(obj["feature_names"])}
    nodes = {}
    for rec in obj["nodes"]:
        split = None
        if rec["split_variable"] is not None:
            split = SplitSpec(variable=name_to_col[rec["split_variable"]],
                              threshold=rec["threshold"])
        nodes[rec["id"]] = Node(
            id=rec["id"], n=rec["n"], depth=rec["depth"],
            model=_model_from_json(rec["model"]), rows=None, split=split,
            children=None if rec["children"] is None else tuple(rec["children"]),
            sse_improvement=rec["sse_improvement"],
            scale_sds=(np.asarray(rec["scale_sds"])
                       if rec.get("scale_sds") is not None else None),
            response_model=_model_from_json(rec.get("response_model")),
        )
    cfg = GrowthConfig(**obj["config"])
    return Tree(kind=obj["artifact"], nodes=nodes,
                feature_names=tuple(obj["feature_names"]),
                model_vars=tuple(obj["model_vars"]),
                partition_vars=tuple(obj["partition_vars"]),
                config=cfg, provenance=obj.get("provenance", {}),
                root_id=obj.get("root_id", 0))


def save_tree(tree, path):
    with open(path, "w") as fh:
        json.dump(tree_to_json(tree), fh, indent=2)
        fh.write("\n")


def load_tree(path):
    with open(path) as fh:
        return tree_from_json(json.load(fh))


def coefficients_table(tree):
    """Terminal-node linear coefficients as a DataFrame (one row per leaf)."""
    import pandas as pd

    rows = []
    for node in tree.leaves():
        model = _prediction_model(node)
        rec = {"node_id": node.id, "n": node.n, "lambda": model.lam,
               "r2": model.r2, "intercept": model.intercept}
        for j, col in enumerate(tree.model_vars):
            rec[tree.feature_names[col]] = float(model.coefficients[j])
        rows.append(rec)
    return pd.DataFrame(rows)
