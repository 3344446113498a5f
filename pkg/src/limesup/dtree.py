"""Piecewise-constant trees on locally scaled partial derivatives.

Each node rescales the derivative matrix by the node-local standard
deviation of the matching feature (recomputed before every split), fits
per-column means, and splits on the summed per-column SSE reduction.  The
per-leaf means are the interpretability output; response-scale predictions
come from a separate per-leaf lasso refit on the fitted responses.
"""

from dataclasses import dataclass, replace

import numpy as np

from limesup.exceptions import DataError
from limesup.suptree import (
    GrowthConfig,
    _grow,
    _leaf_lasso,
    _node_sds,
    _valid_rows_by_node,
)


@dataclass(frozen=True)
class ScaledDerivatives:
    matrix: np.ndarray
    sds: np.ndarray


def scale_derivatives(node_rows, ds):
    """Node-local scaling: derivative column k times the sample sd of
    feature k over the node's rows (zero-variance columns keep scale 1)."""
    if ds.derivatives is None:
        raise DataError("derivatives required")
    rows = np.asarray(node_rows, dtype=np.int64)
    if rows.size < 2:
        raise DataError("need at least 2 rows to scale derivatives")
    sds = _node_sds(ds, rows)
    return ScaledDerivatives(matrix=ds.derivatives[rows] * sds, sds=sds)


def grow_dtree(train, config=None, threads=1, provenance=None):
    """Grow a derivative tree; same skeleton as the response tree with
    constant node models and column-summed split scores."""
    return _grow(train, config or GrowthConfig(), "derivative", threads,
                 provenance)


def terminal_coefficients(tree, scaled=True):
    """Per-leaf derivative means as a DataFrame.

    ``scaled=True`` reports means of the node-scaled derivatives (the
    quantity the tree was grown on); ``scaled=False`` divides out the leaf's
    scaling to recover raw derivative means.
    """
    import pandas as pd

    if tree.kind != "derivative":
        raise DataError("terminal_coefficients applies to derivative trees")
    rows = []
    for node in tree.leaves():
        means = node.model.means if scaled else node.model.means / node.scale_sds
        rec = {"node_id": node.id, "n": node.n}
        for name, value in zip(tree.feature_names, means):
            rec[name] = float(value)
        if scaled:
            for name, sd in zip(tree.feature_names, node.scale_sds):
                rec[f"sd_{name}"] = float(sd)
        rows.append(rec)
    return pd.DataFrame(rows)


def dtree_response_models(tree, train, valid, config=None, threads=1):
    """Attach per-leaf lasso models on the fitted responses.

    The returned tree keeps the constant derivative models (and therefore
    the interpretability output) and gains ``response_model`` entries that
    make it predictable on the response scale for evaluation.
    """
    if tree.kind != "derivative":
        raise DataError("dtree_response_models applies to derivative trees")
    if any(node.rows is None for node in tree.nodes.values()):
        raise DataError("tree has no training row sets (loaded from JSON?)")
    config = config or tree.config
    nodes = {nid: replace(node) for nid, node in tree.nodes.items()}
    out = replace(tree, nodes=nodes)
    valid_rows = _valid_rows_by_node(out, valid.features)
    cols = list(tree.model_vars)

    from limesup._util import pmap

    leaf_ids = [nid for nid in sorted(nodes) if nodes[nid].is_leaf]

    def refit(nid):
        node = nodes[nid]
        rows_v = valid_rows.get(nid, np.empty(0, dtype=np.int64))
        return _leaf_lasso(train.features[np.ix_(node.rows, cols)],
                           train.response[node.rows],
                           valid.features[np.ix_(rows_v, cols)],
                           valid.response[rows_v], config.lasso_grid_size)

    for nid, model in zip(leaf_ids, pmap(refit, leaf_ids, threads)):
        nodes[nid].response_model = model
    return out
