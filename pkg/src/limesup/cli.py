"""Command-line front end: simulate, fit, evaluate, export.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
failure.  All randomized steps take an explicit --seed (a fixed constant
when omitted, never wall-clock), so reruns with identical flags overwrite
outputs with identical bytes.
"""

import argparse
import json
import sys

import numpy as np
import pandas as pd

from limesup import _kernels
from limesup.data import load_csv, split_dataset, write_csv
from limesup.dtree import dtree_response_models, grow_dtree, terminal_coefficients
from limesup.evalx import (
    format_table,
    global_metrics,
    metrics_to_rows,
    partition_comparison,
    partition_to_rows,
)
from limesup.exceptions import DataError, NumericError
from limesup.klime import (
    assign_clusters,
    cluster_coefficients,
    klime_fit,
    klime_predict,
    load_klime,
    save_klime,
)
from limesup.simgen import SimConfig, simulate_eq1
from limesup.suptree import (
    GrowthConfig,
    assign_partition,
    coefficients_table,
    grow_tree,
    load_tree,
    predict_tree,
    prune_tree,
    refit_terminals_lasso,
    save_tree,
    tree_from_json,
)

DEFAULT_SEED = 1729


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


def _fractions(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated fractions")
    return tuple(parts)


def _name_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_split_flags(p):
    p.add_argument("--fractions", type=_fractions, default=(0.5, 0.2, 0.3),
                   help="train,valid,test fractions (default 0.5,0.2,0.3)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help="seed for the split and any clustering")


def _add_data_flags(p):
    p.add_argument("--response-col", default="yhat")
    p.add_argument("--label-col", default="label")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--model-vars", type=_name_list, default=None,
                   help="comma-separated feature names used in node models")
    p.add_argument("--partition-vars", type=_name_list, default=None,
                   help="comma-separated feature names eligible for splits")


def _add_growth_flags(p):
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--min-node-size", type=int, default=None)
    p.add_argument("--n-quantiles", type=int, default=99)
    p.add_argument("--m-filter", type=int, default=5)
    p.add_argument("--min-improvement", type=float, default=1e-3)
    p.add_argument("--prune-threshold", type=float, default=1e-3)
    p.add_argument("--lasso-grid-size", type=int, default=50)


def build_parser():
    parser = _Parser(prog="limesup", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", default=None,
                        help="key=value defaults file; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)
    registry = {}

    p = sub.add_parser("simulate", help="generate the synthetic benchmark CSV")
    p.add_argument("--n", type=int, default=50000)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--response-noise-sd", type=float, default=0.0)
    p.add_argument("--derivative-noise-sd", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)
    registry["simulate"] = p

    p = sub.add_parser("fit-r", help="fit a response tree (grow, prune, lasso refit)")
    p.add_argument("csv")
    p.add_argument("--out-tree", required=True)
    p.add_argument("--out-coefs", default=None)
    p.add_argument("--threads", type=int, default=1)
    _add_data_flags(p)
    _add_split_flags(p)
    _add_growth_flags(p)
    p.set_defaults(func=cmd_fit_r)
    registry["fit-r"] = p

    p = sub.add_parser("fit-d", help="fit a derivative tree plus response-scale leaf models")
    p.add_argument("csv")
    p.add_argument("--out-tree", required=True)
    p.add_argument("--out-coefs", default=None)
    p.add_argument("--threads", type=int, default=1)
    _add_data_flags(p)
    _add_split_flags(p)
    _add_growth_flags(p)
    p.set_defaults(func=cmd_fit_d)
    registry["fit-d"] = p

    p = sub.add_parser("klime", help="fit a k-means clustering baseline")
    p.add_argument("csv")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--variant", choices=("E", "M", "P"), default="E")
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--lasso-grid-size", type=int, default=50)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-coefs", default=None)
    p.add_argument("--threads", type=int, default=1)
    _add_data_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_klime)
    registry["klime"] = p

    p = sub.add_parser("evaluate", help="test-set metrics for fitted artifacts")
    p.add_argument("csv")
    p.add_argument("--tree-r", default=None)
    p.add_argument("--tree-d", default=None)
    p.add_argument("--klime", action="append", default=[],
                   help="cluster model JSON (repeatable)")
    p.add_argument("--partition-source", default=None,
                   help="method whose partitions decompose the comparison")
    p.add_argument("--out-global", default=None)
    p.add_argument("--out-partitions", default=None)
    p.add_argument("--out-predictions", default=None)
    p.add_argument("--table1", action="store_true",
                   help="print the methods-by-metrics grid")
    p.add_argument("--threads", type=int, default=1)
    _add_data_flags(p)
    _add_split_flags(p)
    p.set_defaults(func=cmd_evaluate)
    registry["evaluate"] = p

    p = sub.add_parser("export", help="re-derive the coefficient CSV from an artifact")
    p.add_argument("artifact")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    registry["export"] = p

    return parser, registry


def _read_config_file(path):
    values = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliUsageError(
                        f"config line {lineno}: expected key = value")
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
    except OSError as exc:
        raise CliUsageError(f"cannot read config file: {exc}")
    return values


def _apply_config(subparser, values):
    actions = {a.dest: a for a in subparser._actions}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise CliUsageError(f"unknown config key: {key}")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise CliUsageError(f"bad config value for {key}: {exc}")
        else:
            value = raw
        subparser.set_defaults(**{dest: value})


def _load_split(args):
    ds = load_csv(args.csv, response=args.response_col, label=args.label_col,
                  delimiter=args.delimiter, model_vars=args.model_vars,
                  partition_vars=args.partition_vars)
    return split_dataset(ds, fractions=args.fractions, seed=args.seed)


def _growth_config(args):
    return GrowthConfig(
        max_depth=args.max_depth, min_node_size=args.min_node_size,
        n_quantiles=args.n_quantiles, m_filter=args.m_filter,
        min_relative_improvement=args.min_improvement,
        prune_threshold=args.prune_threshold,
        lasso_grid_size=args.lasso_grid_size)


def _write_rows(rows, path):
    if path.endswith(".json"):
        with open(path, "w") as fh:
            json.dump(rows, fh, indent=2)
            fh.write("\n")
    else:
        pd.DataFrame(rows).to_csv(path, index=False)


def cmd_simulate(args):
    config = SimConfig(n=args.n, seed=args.seed,
                       response_noise_sd=args.response_noise_sd,
                       derivative_noise_sd=args.derivative_noise_sd)
    ds = simulate_eq1(config)
    write_csv(ds, args.out)
    print(f"wrote {ds.n} rows x {2 * ds.k + 2} columns to {args.out}")
    return 0


def _print_fit_summary(label, tree, train):
    pred = predict_tree(tree, train.features)
    r2 = global_metrics(train.response, pred).r2
    print(f"{label}: leaves={tree.n_leaves} depth={tree.depth} "
          f"train_r2={r2:.4f} backend={_kernels.BACKEND}")


def cmd_fit_r(args):
    train, valid, _ = _load_split(args)
    config = _growth_config(args)
    provenance = {"seed": args.seed, "source": args.csv}
    tree = grow_tree(train, config, threads=args.threads, provenance=provenance)
    tree = prune_tree(tree, valid, config, threads=args.threads)
    tree = refit_terminals_lasso(tree, train, valid, config, threads=args.threads)
    save_tree(tree, args.out_tree)
    if args.out_coefs:
        coefficients_table(tree).to_csv(args.out_coefs, index=False)
    _print_fit_summary("fit-r", tree, train)
    return 0


def cmd_fit_d(args):
    train, valid, _ = _load_split(args)
    if train.derivatives is None:
        raise DataError("derivatives required: no d_* columns in input")
    config = _growth_config(args)
    provenance = {"seed": args.seed, "source": args.csv}
    tree = grow_dtree(train, config, threads=args.threads, provenance=provenance)
    tree = prune_tree(tree, valid, config, threads=args.threads)
    tree = dtree_response_models(tree, train, valid, config, threads=args.threads)
    save_tree(tree, args.out_tree)
    if args.out_coefs:
        terminal_coefficients(tree).to_csv(args.out_coefs, index=False)
    _print_fit_summary("fit-d", tree, train)
    return 0


def cmd_klime(args):
    train, valid, _ = _load_split(args)
    model = klime_fit(train, valid, k=args.k, variant=args.variant,
                      seed=args.seed, n_init=args.n_init,
                      lasso_grid_size=args.lasso_grid_size,
                      threads=args.threads)
    save_klime(model, args.out_model)
    if args.out_coefs:
        cluster_coefficients(model).to_csv(args.out_coefs, index=False)
    pred = klime_predict(model, train.features)
    r2 = global_metrics(train.response, pred).r2
    print(f"klime-{args.variant.lower()}: clusters={model.k} "
          f"train_r2={r2:.4f} backend={_kernels.BACKEND}")
    return 0


def cmd_evaluate(args):
    _, _, test = _load_split(args)
    artifacts = {}
    if args.tree_r:
        artifacts["limesup-r"] = ("tree", load_tree(args.tree_r))
    if args.tree_d:
        artifacts["limesup-d"] = ("tree", load_tree(args.tree_d))
    for path in args.klime:
        model = load_klime(path)
        artifacts[f"klime-{model.variant.lower()}"] = ("klime", model)
    if not artifacts:
        raise CliUsageError("no artifacts given (use --tree-r/--tree-d/--klime)")

    predictions = {}
    for name, (kind, artifact) in artifacts.items():
        if kind == "tree":
            predictions[name] = predict_tree(artifact, test.features)
        else:
            predictions[name] = klime_predict(artifact, test.features)

    reports = [global_metrics(test.response, pred, labels=test.labels, method=name)
               for name, pred in predictions.items()]
    if args.table1:
        print(format_table(reports))
    if args.out_global:
        _write_rows(metrics_to_rows(reports), args.out_global)

    if args.partition_source:
        source = args.partition_source.lower()
        if source not in artifacts:
            raise CliUsageError(
                f"--partition-source {source!r} is not among the evaluated "
                f"artifacts: {sorted(artifacts)}")
        kind, artifact = artifacts[source]
        if kind == "tree":
            ids = assign_partition(artifact, test.features)
        else:
            ids = assign_clusters(artifact, test.features)
        report = partition_comparison(ids, test.response, predictions,
                                      source=source)
        if args.out_partitions:
            _write_rows(partition_to_rows(report), args.out_partitions)

    if args.out_predictions:
        rows = {"row": np.arange(test.n), "y_ref": test.response}
        if test.labels is not None:
            rows["label"] = test.labels
        if args.partition_source:
            rows["partition"] = ids
        for name, pred in predictions.items():
            rows[f"pred_{name}"] = pred
        pd.DataFrame(rows).to_csv(args.out_predictions, index=False)
    return 0


def cmd_export(args):
    try:
        with open(args.artifact) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read artifact: {exc}")
    except json.JSONDecodeError as exc:
        raise DataError(f"artifact is not valid JSON: {exc}")
    kind = obj.get("artifact")
    if kind == "klime":
        from limesup.klime import klime_from_json

        table = cluster_coefficients(klime_from_json(obj))
    elif kind == "response":
        table = coefficients_table(tree_from_json(obj))
    elif kind == "derivative":
        table = terminal_coefficients(tree_from_json(obj))
    else:
        raise DataError(f"unrecognized artifact type: {kind!r}")
    table.to_csv(args.out, index=False)
    print(f"wrote {len(table)} rows to {args.out}")
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, registry = build_parser()
    try:
        command = next((a for a in argv if a in registry), None)
        config_values = {}
        if "--config" in argv:
            idx = argv.index("--config")
            if idx + 1 >= len(argv):
                raise CliUsageError("--config needs a file argument")
            config_values = _read_config_file(argv[idx + 1])
        if config_values:
            if command is None:
                raise CliUsageError("--config requires a subcommand")
            _apply_config(registry[command], config_values)
        args = parser.parse_args(argv)
    except CliUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except CliUsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
