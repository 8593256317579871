"""Command-line front end.

Subcommands: encode, train-forest, extract, cv, predict. Exit codes: 0 on
success, 2 on usage errors, 3 on data errors, 4 when an extraction
precondition fails at runtime.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    dataset_from_json,
    dataset_to_json,
    load_csv,
    one_hot_encode,
    schema_to_json,
    stratified_folds,
)
from .engine import (
    ExtractionConfig,
    format_cv_table,
    format_summary,
    grid_search,
    run_extraction,
)
from .errors import DataError, ExtractionError
from .forest import (
    accuracy,
    forest_to_json,
    import_importances,
    importances_text,
    train_forest,
)
from .rules import ABSTAIN_CODE, Ruleset
from .dataset import BinaryDataset
from .surrogate import MIN_INS_NODE_FLOOR, render_tree

log = logging.getLogger(__name__)

PREDICTIONS_FORMAT = "branchrules.predictions/1"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_EXTRACTION = 4


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError("value must be a positive integer")
    return value


def _min_ins_node(text: str) -> int:
    value = _positive_int(text)
    if value < MIN_INS_NODE_FLOOR:
        raise argparse.ArgumentTypeError(
            f"min_ins_node must be at least {MIN_INS_NODE_FLOOR}"
        )
    return value


def _unit_open(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("value must lie strictly between 0 and 1")
    return value


def _unit_closed(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("value must lie in [0, 1]")
    return value


def _float_list(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{text!r} is not a comma-separated list of numbers"
        ) from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{text!r} is not a comma-separated list of integers"
        ) from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def _read_dataset(path: str) -> BinaryDataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"dataset file not found: {path}") from None
    return dataset_from_json(text)


def _add_extraction_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("extraction parameters")
    group.add_argument(
        "--min-imp", type=_unit_closed, default=0.05,
        help="importance threshold on the normalized ranking (default 0.05)",
    )
    group.add_argument(
        "--alpha", type=_unit_closed, default=0.9,
        help="minimum rule precision (default 0.9)",
    )
    group.add_argument(
        "--min-ins-node", type=_min_ins_node, default=5,
        help=f"minimum records per tree node, floor {MIN_INS_NODE_FLOOR} (default 5)",
    )
    group.add_argument(
        "--significance", type=_unit_open, default=0.95,
        help="confidence level of the split test (default 0.95)",
    )
    group.add_argument(
        "--estimators", type=_positive_int, default=100,
        help="trees in the built-in forest (default 100)",
    )
    group.add_argument(
        "--depth", type=_positive_int, default=4,
        help="maximum depth of the built-in forest's trees (default 4)",
    )
    group.add_argument(
        "--importance", choices=("gini", "permutation"), default="gini",
        help="importance source for the built-in forest (default gini)",
    )
    group.add_argument(
        "--permutation-rounds", type=_positive_int, default=5,
        help="shuffling rounds for permutation importance (default 5)",
    )
    group.add_argument(
        "--seed", type=int, default=0, help="random seed (default 0)"
    )


def _cmd_encode(args) -> int:
    table = load_csv(
        args.csv, args.label, args.positive, skip_missing_rows=args.skip_missing_rows
    )
    ds = one_hot_encode(table)
    out = Path(args.out)
    out.write_text(dataset_to_json(ds), encoding="utf-8")
    schema_path = Path(str(out) + ".schema.json")
    schema_path.write_text(schema_to_json(table), encoding="utf-8")
    counts = ds.class_counts()
    print(
        f"encoded {ds.n_records} records x {ds.n_features} binary features "
        f"-> {out}"
    )
    print(
        f"classes: {ds.class_names[0]}={int(counts[0])} "
        f"{ds.class_names[1]}={int(counts[1])}; schema -> {schema_path}"
    )
    return EXIT_OK


def _cmd_train_forest(args) -> int:
    ds = _read_dataset(args.data)
    model = train_forest(ds, args.estimators, args.depth, args.seed)
    if args.out:
        Path(args.out).write_text(forest_to_json(model), encoding="utf-8")
        print(f"model -> {args.out}")
    if args.importances_out:
        Path(args.importances_out).write_text(
            importances_text(model), encoding="utf-8"
        )
        print(f"importances -> {args.importances_out}")
    print(
        f"trained {args.estimators} trees (max depth {args.depth}); "
        f"training accuracy {accuracy(model, ds):.4f}"
    )
    return EXIT_OK


def _cmd_extract(args) -> int:
    ds = _read_dataset(args.data)
    cfg = ExtractionConfig(
        min_imp=args.min_imp,
        alpha=args.alpha,
        min_ins_node=args.min_ins_node,
        significance=args.significance,
        recursive=args.recursive,
        max_iterations=args.max_iterations,
        n_estimators=args.estimators,
        max_depth=args.depth,
        importance=args.importance,
        permutation_rounds=args.permutation_rounds,
        seed=args.seed,
    )
    ranking = None
    if args.importances:
        ranking = import_importances(args.importances, ds)
    report = run_extraction(ds, cfg, ranking)
    if args.dump_tree:
        for record in report.iterations:
            print(f"--- surrogate tree, iteration {record.index} ---")
            print(render_tree(record.tree, ds.feature_names), end="")
    print(report.ruleset.render(), end="")
    score = report.ruleset.score(ds)
    print(
        f"rules {score.n_rules} | training coverage {score.coverage:.4f} | "
        f"covered F1 {score.f1:.4f} | objective {score.objective:.4f}"
    )
    log.debug("extraction took %.3fs", report.elapsed_seconds)
    if args.out:
        Path(args.out).write_text(report.ruleset.to_json(), encoding="utf-8")
        print(f"ruleset -> {args.out}")
    return EXIT_OK


def _cmd_cv(args) -> int:
    ds = _read_dataset(args.data)
    plan = stratified_folds(ds, args.folds, args.repeats, args.seed)
    grids = {
        "min_imp": args.grid_min_imp,
        "alpha": args.grid_alpha,
        "min_ins_node": args.grid_min_ins_node,
        "significance": args.grid_significance,
        "n_estimators": args.grid_estimators,
        "max_depth": args.grid_depth,
    }
    for value in grids["min_ins_node"]:
        if value < MIN_INS_NODE_FLOOR:
            raise ValueError(
                f"min_ins_node grid value {value} is below the floor of "
                f"{MIN_INS_NODE_FLOOR}"
            )
    result = grid_search(
        ds,
        grids,
        plan,
        recursive=args.recursive,
        importance=args.importance,
        permutation_rounds=args.permutation_rounds,
        max_iterations=args.max_iterations,
        seed=args.seed,
        jobs=args.jobs,
    )
    Path(args.out).write_text(format_cv_table(result), encoding="utf-8")
    print(format_summary(result), end="")
    print(f"cv table -> {args.out}")
    if args.folds_out:
        Path(args.folds_out).write_text(plan.manifest_text(), encoding="utf-8")
        print(f"fold manifest -> {args.folds_out}")
    return EXIT_OK


def _cmd_predict(args) -> int:
    ds = _read_dataset(args.data)
    try:
        text = Path(args.rules).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"ruleset file not found: {args.rules}") from None
    ruleset = Ruleset.from_json(text)
    if tuple(ds.class_names) != tuple(ruleset.class_names):
        raise DataError(
            f"dataset classes {ds.class_names} do not match the ruleset's "
            f"{ruleset.class_names}"
        )
    name_to_index = {name: i for i, name in enumerate(ds.feature_names)}
    perm = []
    for name in ruleset.feature_names:
        if name not in name_to_index:
            raise DataError(f"dataset is missing feature {name!r} required by the ruleset")
        perm.append(name_to_index[name])
    view = BinaryDataset(
        ds.features[:, perm], ds.labels, ruleset.feature_names, ds.class_names
    )
    codes = ruleset.predict_codes(view.features)
    score = ruleset.score(view)
    lines = [f"# format: {PREDICTIONS_FORMAT}", "record,prediction,label"]
    for i, code in enumerate(codes):
        label = ds.class_names[ds.labels[i]]
        prediction = "ABSTAIN" if code == ABSTAIN_CODE else ds.class_names[code]
        lines.append(f"{i},{prediction},{label}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(
        f"predicted {len(codes)} records ({int(np.sum(codes != ABSTAIN_CODE))} covered) "
        f"-> {args.out}"
    )
    print(
        f"rules {score.n_rules} | coverage {score.coverage:.4f} | "
        f"covered F1 {score.f1:.4f} | objective {score.objective:.4f}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchrules",
        description=(
            "Extract interpretable IF/THEN rulesets from a black-box model's "
            "feature-importance ranking via surrogate binary trees."
        ),
    )
    parser.add_argument("--version", action="version", version=f"branchrules {__version__}")
    parser.add_argument(
        "--verbose", action="store_true", help="debug logging on stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="one-hot encode a CSV into the binary dataset format")
    p.add_argument("--csv", required=True, help="input CSV with a header row")
    p.add_argument("--label", required=True, help="name of the label column")
    p.add_argument("--positive", required=True, help="label value of the positive class")
    p.add_argument("--out", required=True, help="output dataset file (JSON)")
    p.add_argument(
        "--skip-missing-rows", action="store_true",
        help="drop rows with empty cells instead of failing (count is reported)",
    )
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("train-forest", help="train the built-in forest on an encoded dataset")
    p.add_argument("--data", required=True, help="encoded dataset file")
    p.add_argument("--estimators", type=_positive_int, default=100)
    p.add_argument("--depth", type=_positive_int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="model export file (JSON)")
    p.add_argument(
        "--importances-out",
        help="write importances as importable feature_name<TAB>value lines",
    )
    p.set_defaults(func=_cmd_train_forest)

    p = sub.add_parser("extract", help="extract a ruleset from an encoded dataset")
    p.add_argument("--data", required=True, help="encoded dataset file")
    p.add_argument(
        "--importances",
        help="feature_name<TAB>value file; skips training the built-in forest",
    )
    _add_extraction_flags(p)
    p.add_argument(
        "--recursive", action="store_true",
        help="repeat extraction on uncovered records",
    )
    p.add_argument(
        "--max-iterations", type=_positive_int, default=10,
        help="cap on recursive passes (default 10)",
    )
    p.add_argument("--out", help="ruleset interchange file (JSON)")
    p.add_argument(
        "--dump-tree", action="store_true",
        help="print each pass's surrogate tree before the ruleset",
    )
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("cv", help="repeated stratified cross-validated grid search")
    p.add_argument("--data", required=True, help="encoded dataset file")
    p.add_argument("--folds", type=_positive_int, default=10, help="folds per repeat (default 10)")
    p.add_argument("--repeats", type=_positive_int, default=3, help="repeats (default 3)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--grid-min-imp", type=_float_list, default=[0.05, 0.1],
        help="min_imp grid (default 0.05,0.1)",
    )
    p.add_argument(
        "--grid-alpha", type=_float_list, default=[0.9, 0.95],
        help="alpha grid (default 0.9,0.95)",
    )
    p.add_argument(
        "--grid-min-ins-node", type=_int_list, default=[5, 7, 10, 25, 50],
        help="min_ins_node grid (default 5,7,10,25,50)",
    )
    p.add_argument(
        "--grid-significance", type=_float_list, default=[0.95, 0.97],
        help="significance grid (default 0.95,0.97)",
    )
    p.add_argument(
        "--grid-estimators", type=_int_list, default=[100],
        help="forest size grid (default 100)",
    )
    p.add_argument(
        "--grid-depth", type=_int_list, default=[4],
        help="forest depth grid (default 4)",
    )
    p.add_argument("--importance", choices=("gini", "permutation"), default="gini")
    p.add_argument("--permutation-rounds", type=_positive_int, default=5)
    p.add_argument("--recursive", action="store_true")
    p.add_argument("--max-iterations", type=_positive_int, default=10)
    p.add_argument(
        "--jobs", type=_positive_int, default=max(os.cpu_count() or 1, 1),
        help="parallel workers (default: available parallelism)",
    )
    p.add_argument("--out", required=True, help="per-fold result table (CSV)")
    p.add_argument("--folds-out", help="write the fold-assignment manifest")
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("predict", help="apply a saved ruleset to an encoded dataset")
    p.add_argument("--rules", required=True, help="ruleset interchange file")
    p.add_argument("--data", required=True, help="encoded dataset file")
    p.add_argument("--out", required=True, help="per-record predictions (CSV)")
    p.set_defaults(func=_cmd_predict)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXTRACTION
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
