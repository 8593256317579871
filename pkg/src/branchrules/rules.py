"""Rules, rulesets, and their ordering, pruning, prediction, and scoring.

A rule is a conjunction of feature=value conditions over binary columns with
a single predicted class. Rulesets are ordered by reliability (precision
first, shorter rules preferred) and applied first-match-wins; records no rule
matches are abstained on rather than guessed, since partial but precise
coverage is the point of the method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import BinaryDataset
from .errors import DataError

RULESET_FORMAT = "branchrules.ruleset/1"


class _Abstain:
    """Sentinel for 'no rule matched'; never equal to any class id."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "ABSTAIN"


ABSTAIN = _Abstain()

# Integer stand-in for ABSTAIN inside prediction vectors.
ABSTAIN_CODE = -1


def normalize_condition(feature: int, op: str, value: int) -> tuple[int, int]:
    """Collapse a (feature, op, value) condition to (feature, required value).

    On binary columns `feature != v` is exactly `feature = 1 - v`.
    """
    if op not in ("=", "!="):
        raise ValueError(f"unknown condition operator {op!r}")
    if value not in (0, 1):
        raise ValueError(f"condition value must be 0 or 1, got {value!r}")
    return (feature, value if op == "=" else 1 - value)


@dataclass(frozen=True)
class Rule:
    """An ordered conjunction of (feature, value) conditions with a consequent.

    precision and support are the class purity and record count measured on
    the subset the rule was categorized on; iteration is the recursive pass
    that produced the rule (0 for a single pass).
    """

    conditions: tuple[tuple[int, int], ...]
    consequent: int
    precision: float
    support: int
    iteration: int = 0

    def __post_init__(self):
        features = [f for f, _ in self.conditions]
        if len(set(features)) != len(features):
            raise ValueError("rule conditions must use distinct features")
        for f, v in self.conditions:
            if v not in (0, 1):
                raise ValueError("condition values must be 0 or 1")
        if self.consequent not in (0, 1):
            raise ValueError("consequent must be a binary class id")
        if not 0.0 <= self.precision <= 1.0:
            raise ValueError("precision must lie in [0, 1]")
        if self.support < 1:
            raise ValueError("support must be positive")

    @property
    def condition_set(self) -> frozenset:
        return frozenset(self.conditions)

    def matches(self, record) -> bool:
        rec = np.asarray(record)
        return all(rec[f] == v for f, v in self.conditions)

    def match_mask(self, X: np.ndarray) -> np.ndarray:
        """Boolean match vector over a feature matrix."""
        mask = np.ones(X.shape[0], dtype=bool)
        for f, v in self.conditions:
            mask &= X[:, f] == v
        return mask


def categorize(patterns, alpha: float, iteration: int = 0) -> list[Rule]:
    """Turn branch patterns into rules, keeping only precise ones.

    The consequent is the majority class of the pattern's records (ties to
    class 0), precision the majority share; patterns below alpha are dropped.

    :raises ValueError: alpha outside (0, 1].
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    rules = []
    for pattern in patterns:
        counts = pattern.class_counts
        support = pattern.support
        if counts[0] + counts[1] != support:
            raise ValueError("pattern class counts do not sum to its support")
        consequent = 0 if counts[0] >= counts[1] else 1
        precision = counts[consequent] / support
        if precision >= alpha:
            rules.append(
                Rule(
                    conditions=tuple(pattern.conditions),
                    consequent=consequent,
                    precision=precision,
                    support=support,
                    iteration=iteration,
                )
            )
    return rules


def _sort_key(rule: Rule):
    return (
        -rule.precision,
        len(rule.conditions),
        tuple(sorted(rule.conditions)),
        rule.consequent,
        rule.iteration,
    )


def order_rules(rules) -> list[Rule]:
    """Sort by precision descending, then fewer conditions, then lexicographic
    conditions; consequent and iteration break any remaining ties so the order
    is total."""
    return sorted(rules, key=_sort_key)


def prune_rules(rules) -> list[Rule]:
    """Drop rules a higher-priority rule makes redundant.

    A rule is removed when an earlier rule with the same consequent has a
    subset of its conditions: every record the longer rule matches is already
    claimed, with the same prediction, before it is consulted. Order is
    preserved; the pass is idempotent and never changes what gets covered.
    """
    kept: list[Rule] = []
    for rule in rules:
        redundant = any(
            earlier.consequent == rule.consequent
            and earlier.condition_set <= rule.condition_set
            for earlier in kept
        )
        if not redundant:
            kept.append(rule)
    return kept


@dataclass(frozen=True)
class RulesetScore:
    """Coverage over all records; F1 and confusion over covered records only.

    confusion[i][j] counts covered records with true class i predicted as j.
    The objective, coverage * f1, is what model selection maximizes.
    """

    coverage: float
    f1: float
    confusion: tuple[tuple[int, int], tuple[int, int]]
    n_rules: int

    @property
    def objective(self) -> float:
        return self.coverage * self.f1


@dataclass(frozen=True)
class Ruleset:
    """An ordered, pruned rule list bound to the dataset schema it came from."""

    rules: tuple[Rule, ...]
    feature_names: tuple[str, ...]
    class_names: tuple[str, str]
    config: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        rules = tuple(self.rules)
        if list(rules) != order_rules(rules):
            raise ValueError("ruleset rules must be in priority order")
        if list(rules) != prune_rules(rules):
            raise ValueError("ruleset contains a redundant rule; prune first")
        for rule in rules:
            for f, _ in rule.conditions:
                if not 0 <= f < len(self.feature_names):
                    raise ValueError(f"rule condition references unknown feature {f}")
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(
            self, "config", tuple(sorted(self.config, key=lambda kv: kv[0]))
        )

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    def predict_codes(self, X: np.ndarray) -> np.ndarray:
        """First-match class ids over a feature matrix; ABSTAIN_CODE when none match."""
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise DataError(
                f"feature matrix width does not match the ruleset's "
                f"{len(self.feature_names)} features"
            )
        out = np.full(X.shape[0], ABSTAIN_CODE, dtype=np.int64)
        unassigned = np.ones(X.shape[0], dtype=bool)
        for rule in self.rules:
            if not unassigned.any():
                break
            hit = unassigned & rule.match_mask(X)
            out[hit] = rule.consequent
            unassigned &= ~hit
        return out

    def predict(self, record):
        """First matching rule's consequent for one record, or ABSTAIN."""
        rec = np.asarray(record)
        if rec.ndim != 1 or rec.shape[0] != len(self.feature_names):
            raise DataError(
                f"record width does not match the ruleset's "
                f"{len(self.feature_names)} features"
            )
        code = int(self.predict_codes(rec[np.newaxis, :])[0])
        return ABSTAIN if code == ABSTAIN_CODE else code

    def score(self, ds: BinaryDataset) -> RulesetScore:
        """Coverage over the whole dataset, F1 over the covered part."""
        if ds.feature_names != self.feature_names:
            raise DataError("dataset schema does not match the ruleset")
        codes = self.predict_codes(ds.features)
        covered = codes != ABSTAIN_CODE
        coverage = float(covered.mean())
        confusion = [[0, 0], [0, 0]]
        for true in (0, 1):
            for pred in (0, 1):
                confusion[true][pred] = int(
                    np.sum(covered & (ds.labels == true) & (codes == pred))
                )
        tp = confusion[0][0]
        fp = confusion[1][0]
        fn = confusion[0][1]
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom > 0 else 0.0
        return RulesetScore(
            coverage=coverage,
            f1=f1,
            confusion=tuple(tuple(row) for row in confusion),
            n_rules=self.n_rules,
        )

    def render_condition(self, feature: int, value: int) -> str:
        """Human-readable condition, decoding one-hot names back to source=value."""
        name = self.feature_names[feature]
        if "=" in name:
            source, source_value = name.split("=", 1)
            op = "=" if value == 1 else "!="
            return f'{source}{op}"{source_value}"'
        return f"{name}={value}"

    def render(self) -> str:
        """The ruleset as one IF/THEN line per rule, in priority order."""
        if not self.rules:
            return "(empty ruleset)\n"
        lines = []
        for rule in self.rules:
            conds = " AND ".join(self.render_condition(f, v) for f, v in rule.conditions)
            lines.append(
                f"IF {conds} THEN class={self.class_names[rule.consequent]}  "
                f"[precision {rule.precision:.2f}, support {rule.support}, "
                f"iter {rule.iteration}]"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "format": RULESET_FORMAT,
            "class_names": list(self.class_names),
            "feature_names": list(self.feature_names),
            "config": {key: value for key, value in self.config},
            "rules": [
                {
                    "conditions": [
                        f"{self.feature_names[f]} = {v}" for f, v in rule.conditions
                    ],
                    "consequent": self.class_names[rule.consequent],
                    "precision": rule.precision,
                    "support": rule.support,
                    "iteration": rule.iteration,
                }
                for rule in self.rules
            ],
        }
        return json.dumps(payload, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Ruleset":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"ruleset file is not valid JSON: {exc}") from None
        if not isinstance(payload, dict) or payload.get("format") != RULESET_FORMAT:
            raise DataError(
                f"unrecognized ruleset format tag {payload.get('format')!r} "
                f"(expected {RULESET_FORMAT!r})"
            )
        try:
            feature_names = tuple(payload["feature_names"])
            class_names = tuple(payload["class_names"])
            name_to_index = {n: i for i, n in enumerate(feature_names)}
            class_to_id = {n: i for i, n in enumerate(class_names)}
            rules = []
            for entry in payload["rules"]:
                conditions = []
                for cond in entry["conditions"]:
                    name, value = cond.rsplit(" = ", 1)
                    conditions.append((name_to_index[name], int(value)))
                rules.append(
                    Rule(
                        conditions=tuple(conditions),
                        consequent=class_to_id[entry["consequent"]],
                        precision=float(entry["precision"]),
                        support=int(entry["support"]),
                        iteration=int(entry["iteration"]),
                    )
                )
            config = tuple(sorted(payload.get("config", {}).items()))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed ruleset payload: {exc}") from None
        return cls(
            rules=tuple(rules),
            feature_names=feature_names,
            class_names=class_names,
            config=config,
        )
