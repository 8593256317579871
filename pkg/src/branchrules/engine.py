"""Extraction pipeline and cross-validated grid search.

A single pass filters features by importance, builds the layered surrogate
tree, chi-square tests every split, turns the accepted branch prefixes into
precise rules, and orders + prunes them. The recursive mode repeats that on
the records no rule has covered yet, refreshing the importance ranking on the
residual each time, then re-orders and re-prunes the union.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import BinaryDataset, FoldPlan
from .errors import ExtractionError
from .forest import (
    ForestModel,
    ImportanceRanking,
    gini_ranking,
    permutation_importance,
    train_forest,
)
from .rules import Rule, Ruleset, RulesetScore, categorize, order_rules, prune_rules
from .seeding import derive_seed
from .stats import PatternTestResult, test_split
from .surrogate import (
    MIN_INS_NODE_FLOOR,
    BranchPattern,
    SurrogateNode,
    build_surrogate_tree,
    nodes_with_prefixes,
)

log = logging.getLogger(__name__)

IMPORTANCE_SOURCES = ("gini", "permutation")

# Grid-search keys, in Cartesian-product enumeration order.
GRID_KEYS = ("min_imp", "alpha", "min_ins_node", "significance", "n_estimators", "max_depth")


@dataclass(frozen=True)
class ExtractionConfig:
    """Hyperparameters of one extraction run.

    min_imp filters the normalized importance ranking; alpha is the minimum
    rule precision; min_ins_node the per-node instance floor (>= 5);
    significance the confidence level of the split test. n_estimators /
    max_depth parameterize the built-in forest when no ranking is supplied.
    """

    min_imp: float = 0.05
    alpha: float = 0.9
    min_ins_node: int = 5
    significance: float = 0.95
    recursive: bool = False
    max_iterations: int = 10
    n_estimators: int = 100
    max_depth: int = 4
    importance: str = "gini"
    permutation_rounds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.min_imp <= 1.0:
            raise ValueError("min_imp must lie in [0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.min_ins_node < MIN_INS_NODE_FLOOR:
            raise ValueError(
                f"min_ins_node must be at least {MIN_INS_NODE_FLOOR} "
                f"(got {self.min_ins_node})"
            )
        if not 0.0 < self.significance < 1.0:
            raise ValueError("significance must lie strictly between 0 and 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be at least 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        if self.importance not in IMPORTANCE_SOURCES:
            raise ValueError(
                f"importance must be one of {IMPORTANCE_SOURCES}, got {self.importance!r}"
            )
        if self.permutation_rounds < 1:
            raise ValueError("permutation_rounds must be at least 1")

    def snapshot(self) -> tuple[tuple[str, object], ...]:
        """Config as a sorted key/value tuple for ruleset metadata."""
        return tuple(sorted(dataclasses.asdict(self).items()))


@dataclass(frozen=True)
class SplitTestTrace:
    """One tested split: the prefix of the tested node and the result."""

    prefix: tuple[tuple[int, int], ...]
    support: int
    result: PatternTestResult


@dataclass(frozen=True)
class IterationRecord:
    """One extraction pass: its residual subset, tree, tests, and ruleset."""

    index: int
    subset: np.ndarray
    ruleset: Ruleset
    tests: tuple[SplitTestTrace, ...]
    tree: SurrogateNode
    ranking: ImportanceRanking
    n_uncovered_after: int


@dataclass(frozen=True)
class ExtractionReport:
    """Everything one extraction produced; elapsed time never leaves exports."""

    ruleset: Ruleset
    iterations: tuple[IterationRecord, ...]
    elapsed_seconds: float


def _forest_seed(cfg: ExtractionConfig, iteration: int) -> int:
    return derive_seed(cfg.seed, "forest", cfg.n_estimators, cfg.max_depth, iteration)


def _train_ranking(ds: BinaryDataset, cfg: ExtractionConfig, iteration: int) -> ImportanceRanking:
    model = train_forest(ds, cfg.n_estimators, cfg.max_depth, _forest_seed(cfg, iteration))
    if cfg.importance == "permutation":
        return permutation_importance(
            model, ds, cfg.permutation_rounds, derive_seed(cfg.seed, "perm", iteration)
        )
    return gini_ranking(model)


def _collect_patterns(root: SurrogateNode, significance: float):
    """Walk the tree, test every split, gather child prefixes of accepted splits."""
    patterns: list[BranchPattern] = []
    traces: list[SplitTestTrace] = []
    prefix_of = {id(root): ()}
    for node, prefix in nodes_with_prefixes(root):
        prefix_of[id(node)] = prefix

    def visit(node: SurrogateNode):
        children = node.materialized_children()
        if not children:
            return
        result = test_split(node, significance)
        traces.append(
            SplitTestTrace(prefix=prefix_of[id(node)], support=node.support, result=result)
        )
        if result.accepted:
            for child in children:
                patterns.append(
                    BranchPattern(
                        conditions=prefix_of[id(child)],
                        class_counts=(
                            int(child.class_counts[0]),
                            int(child.class_counts[1]),
                        ),
                        support=child.support,
                    )
                )
        for child in children:
            visit(child)

    visit(root)
    return patterns, traces


def _single_pass(
    ds: BinaryDataset,
    subset: np.ndarray,
    ranking: ImportanceRanking,
    cfg: ExtractionConfig,
    iteration: int,
) -> IterationRecord:
    root = build_surrogate_tree(
        ds, ranking, cfg.min_imp, cfg.min_ins_node, record_indices=subset
    )
    patterns, traces = _collect_patterns(root, cfg.significance)
    rules = prune_rules(order_rules(categorize(patterns, cfg.alpha, iteration=iteration)))
    ruleset = Ruleset(
        rules=tuple(rules),
        feature_names=ds.feature_names,
        class_names=ds.class_names,
        config=cfg.snapshot(),
    )
    return IterationRecord(
        index=iteration,
        subset=subset,
        ruleset=ruleset,
        tests=tuple(traces),
        tree=root,
        ranking=ranking,
        n_uncovered_after=0,  # filled in by the caller once coverage is known
    )


def _finalize(ds, cfg, iterations) -> ExtractionReport:
    all_rules = [rule for record in iterations for rule in record.ruleset.rules]
    final = Ruleset(
        rules=tuple(prune_rules(order_rules(all_rules))),
        feature_names=ds.feature_names,
        class_names=ds.class_names,
        config=cfg.snapshot(),
    )
    return ExtractionReport(ruleset=final, iterations=tuple(iterations), elapsed_seconds=0.0)


def extract(ds: BinaryDataset, ranking: ImportanceRanking, cfg: ExtractionConfig) -> ExtractionReport:
    """One extraction pass over the whole dataset with the given ranking.

    :raises ExtractionError: no feature survives min_imp.
    """
    start = time.perf_counter()
    subset = np.arange(ds.n_records, dtype=np.intp)
    record = _single_pass(ds, subset, ranking, cfg, iteration=0)
    codes = record.ruleset.predict_codes(ds.features)
    record = dataclasses.replace(
        record, n_uncovered_after=int(np.sum(codes < 0))
    )
    report = _finalize(ds, cfg, [record])
    return dataclasses.replace(report, elapsed_seconds=time.perf_counter() - start)


def extract_recursive(
    ds: BinaryDataset,
    cfg: ExtractionConfig,
    *,
    static_ranking: ImportanceRanking | None = None,
    initial_ranking: ImportanceRanking | None = None,
) -> ExtractionReport:
    """Repeated extraction on the not-yet-covered residual.

    With static_ranking (imported importances) the same ranking is reused in
    every pass; otherwise a fresh forest is trained on each residual.
    initial_ranking, when given, replaces the pass-0 training only (used by
    grid search to share the fold's forest). Stops when the residual is empty,
    a class disappears from it, a pass yields no rules or fails its
    preconditions, or max_iterations is reached.
    """
    start = time.perf_counter()
    remaining = np.arange(ds.n_records, dtype=np.intp)
    iterations: list[IterationRecord] = []
    for i in range(cfg.max_iterations):
        if remaining.size == 0:
            break
        residual_labels = ds.labels[remaining]
        if len(np.unique(residual_labels)) < 2:
            log.debug("iteration %d: a class vanished from the residual; stopping", i)
            break
        if static_ranking is not None:
            ranking = static_ranking
        elif i == 0 and initial_ranking is not None:
            ranking = initial_ranking
        else:
            ranking = _train_ranking(ds.subset(remaining), cfg, iteration=i)
        try:
            record = _single_pass(ds, remaining, ranking, cfg, iteration=i)
        except ExtractionError as exc:
            if i == 0:
                raise
            log.debug("iteration %d failed preconditions (%s); stopping", i, exc)
            break
        if not record.ruleset.rules:
            break
        codes = record.ruleset.predict_codes(ds.features[remaining])
        remaining = remaining[codes < 0]
        record = dataclasses.replace(record, n_uncovered_after=int(remaining.size))
        iterations.append(record)
    if not iterations:
        # no pass produced rules; report an empty ruleset over zero iterations
        empty = Ruleset(
            rules=(),
            feature_names=ds.feature_names,
            class_names=ds.class_names,
            config=cfg.snapshot(),
        )
        report = ExtractionReport(ruleset=empty, iterations=(), elapsed_seconds=0.0)
    else:
        report = _finalize(ds, cfg, iterations)
    return dataclasses.replace(report, elapsed_seconds=time.perf_counter() - start)


def run_extraction(
    ds: BinaryDataset,
    cfg: ExtractionConfig,
    ranking: ImportanceRanking | None = None,
) -> ExtractionReport:
    """Dispatch on cfg.recursive; trains the built-in forest when no ranking is given."""
    if cfg.recursive:
        return extract_recursive(ds, cfg, static_ranking=ranking)
    if ranking is None:
        ranking = _train_ranking(ds, cfg, iteration=0)
    return extract(ds, ranking, cfg)


@dataclass(frozen=True)
class CvRow:
    """Held-out score of one config on one fold."""

    config_index: int
    repeat: int
    fold: int
    coverage: float
    f1: float
    n_rules: int
    objective: float


@dataclass(frozen=True)
class ConfigSummary:
    config_index: int
    config: ExtractionConfig
    mean_objective: float
    mean_coverage: float
    std_coverage: float
    mean_f1: float
    std_f1: float
    mean_rules: float
    std_rules: float


@dataclass(frozen=True)
class GridSearchResult:
    configs: tuple[ExtractionConfig, ...]
    rows: tuple[CvRow, ...]
    summaries: tuple[ConfigSummary, ...]
    best_index: int

    @property
    def best_config(self) -> ExtractionConfig:
        return self.configs[self.best_index]

    @property
    def best_summary(self) -> ConfigSummary:
        return self.summaries[self.best_index]


def expand_grid(grids: dict) -> list[dict]:
    """The Cartesian product of the per-parameter value lists, in GRID_KEYS order."""
    unknown = set(grids) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown grid parameters: {sorted(unknown)}")
    axes = []
    for key in GRID_KEYS:
        values = list(grids.get(key, []))
        if not values:
            raise ValueError(f"grid for {key!r} must be a nonempty list")
        axes.append(values)
    return [dict(zip(GRID_KEYS, combo)) for combo in itertools.product(*axes)]


def _evaluate_fold(
    ds: BinaryDataset,
    plan: FoldPlan,
    configs: list[ExtractionConfig],
    repeat: int,
    fold: int,
    seed: int,
    on_extraction=None,
) -> list[CvRow]:
    """All configs' held-out scores on one (repeat, fold); forests shared per params."""
    train_idx = plan.train_indices(repeat, fold)
    test_idx = plan.test_indices(repeat, fold)
    train_ds = ds.subset(train_idx)
    test_ds = ds.subset(test_idx)
    fold_seed = derive_seed(seed, "cv", repeat, fold)
    ranking_cache: dict = {}
    rows = []
    for config_index, cfg in enumerate(configs):
        fold_cfg = dataclasses.replace(cfg, seed=fold_seed)
        cache_key = (cfg.n_estimators, cfg.max_depth, cfg.importance)
        if cache_key not in ranking_cache:
            ranking_cache[cache_key] = _train_ranking(train_ds, fold_cfg, iteration=0)
        ranking = ranking_cache[cache_key]
        try:
            if cfg.recursive:
                report = extract_recursive(train_ds, fold_cfg, initial_ranking=ranking)
            else:
                report = extract(train_ds, ranking, fold_cfg)
            score = report.ruleset.score(test_ds)
            n_rules = report.ruleset.n_rules
        except ExtractionError as exc:
            log.debug(
                "config %d repeat %d fold %d: %s; scoring as empty ruleset",
                config_index, repeat, fold, exc,
            )
            report = None
            score = RulesetScore(
                coverage=0.0, f1=0.0, confusion=((0, 0), (0, 0)), n_rules=0
            )
            n_rules = 0
        if on_extraction is not None and report is not None:
            on_extraction(config_index, fold_cfg, repeat, fold, train_idx, report)
        rows.append(
            CvRow(
                config_index=config_index,
                repeat=repeat,
                fold=fold,
                coverage=score.coverage,
                f1=score.f1,
                n_rules=n_rules,
                objective=score.objective,
            )
        )
    return rows


def _fold_worker(args):
    ds, plan, configs, repeat, fold, seed = args
    return _evaluate_fold(ds, plan, configs, repeat, fold, seed)


def grid_search(
    ds: BinaryDataset,
    grids: dict,
    plan: FoldPlan,
    *,
    recursive: bool = False,
    importance: str = "gini",
    permutation_rounds: int = 5,
    max_iterations: int = 10,
    seed: int = 0,
    jobs: int = 1,
    on_extraction=None,
) -> GridSearchResult:
    """Cross-validated search over the Cartesian product of parameter grids.

    Every config is trained on each fold complement and scored on the held-out
    fold; the winner maximizes the mean objective, ties going to fewer mean
    rules and then the lowest config index. Results are a pure function of
    (ds, grids, plan, seed) regardless of jobs.
    """
    combos = expand_grid(grids)
    configs = [
        ExtractionConfig(
            recursive=recursive,
            importance=importance,
            permutation_rounds=permutation_rounds,
            max_iterations=max_iterations,
            seed=seed,
            **combo,
        )
        for combo in combos
    ]
    units = [
        (repeat, fold)
        for repeat in range(plan.n_repeats)
        for fold in range(plan.n_folds)
    ]
    all_rows: list[CvRow] = []
    if jobs > 1 and on_extraction is None:
        payloads = [(ds, plan, configs, r, f, seed) for r, f in units]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rows in pool.map(_fold_worker, payloads):
                all_rows.extend(rows)
    else:
        if jobs > 1:
            log.debug("on_extraction hook forces single-process evaluation")
        for repeat, fold in units:
            all_rows.extend(
                _evaluate_fold(ds, plan, configs, repeat, fold, seed, on_extraction)
            )
    all_rows.sort(key=lambda row: (row.config_index, row.repeat, row.fold))

    summaries = []
    for config_index, cfg in enumerate(configs):
        rows = [r for r in all_rows if r.config_index == config_index]
        coverage = np.array([r.coverage for r in rows])
        f1 = np.array([r.f1 for r in rows])
        n_rules = np.array([r.n_rules for r in rows], dtype=np.float64)
        objective = np.array([r.objective for r in rows])
        ddof = 1 if len(rows) > 1 else 0
        summaries.append(
            ConfigSummary(
                config_index=config_index,
                config=cfg,
                mean_objective=float(objective.mean()),
                mean_coverage=float(coverage.mean()),
                std_coverage=float(coverage.std(ddof=ddof)),
                mean_f1=float(f1.mean()),
                std_f1=float(f1.std(ddof=ddof)),
                mean_rules=float(n_rules.mean()),
                std_rules=float(n_rules.std(ddof=ddof)),
            )
        )
    best_index = min(
        range(len(summaries)),
        key=lambda i: (
            -summaries[i].mean_objective,
            summaries[i].mean_rules,
            i,
        ),
    )
    return GridSearchResult(
        configs=tuple(configs),
        rows=tuple(all_rows),
        summaries=tuple(summaries),
        best_index=best_index,
    )


CV_TABLE_FORMAT = "branchrules.cv/1"


def format_cv_table(result: GridSearchResult) -> str:
    """The per-fold result rows as a flat, versioned CSV table."""
    lines = [
        f"# format: {CV_TABLE_FORMAT}",
        "config_index,min_imp,alpha,min_ins_node,significance,n_estimators,"
        "max_depth,recursive,repeat,fold,coverage,f1,n_rules,objective",
    ]
    for row in result.rows:
        cfg = result.configs[row.config_index]
        lines.append(
            f"{row.config_index},{cfg.min_imp:.10g},{cfg.alpha:.10g},"
            f"{cfg.min_ins_node},{cfg.significance:.10g},{cfg.n_estimators},"
            f"{cfg.max_depth},{int(cfg.recursive)},{row.repeat},{row.fold},"
            f"{row.coverage:.10g},{row.f1:.10g},{row.n_rules},{row.objective:.10g}"
        )
    return "\n".join(lines) + "\n"


def format_summary(result: GridSearchResult) -> str:
    """Mean +/- std lines per config, best config last."""
    lines = []
    for s in result.summaries:
        cfg = s.config
        lines.append(
            f"config {s.config_index}: min_imp={cfg.min_imp:g} alpha={cfg.alpha:g} "
            f"min_ins_node={cfg.min_ins_node} significance={cfg.significance:g} "
            f"forest={cfg.n_estimators}x{cfg.max_depth} | "
            f"objective {s.mean_objective:.4f} | "
            f"coverage {100 * s.mean_coverage:.2f}+/-{100 * s.std_coverage:.2f} | "
            f"F1 {100 * s.mean_f1:.2f}+/-{100 * s.std_f1:.2f} | "
            f"rules {s.mean_rules:.2f}+/-{s.std_rules:.2f}"
        )
    best = result.best_summary
    lines.append(
        f"best: config {best.config_index} "
        f"(objective {best.mean_objective:.4f}, "
        f"coverage {100 * best.mean_coverage:.2f}+/-{100 * best.std_coverage:.2f}, "
        f"F1 {100 * best.mean_f1:.2f}+/-{100 * best.std_f1:.2f}, "
        f"rules {best.mean_rules:.2f}+/-{best.std_rules:.2f})"
    )
    return "\n".join(lines) + "\n"
