"""Layered surrogate binary trees over an importance ranking.

The surrogate tree mirrors the black box only through its feature-importance
order: every node at depth d splits on the (d+1)-th ranked surviving feature,
so all branches share one global feature sequence and a root-to-node path
reads as a conjunction of feature=value conditions. A child is materialized
only when enough records reach it; branches below the instance floor simply
end early.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import BinaryDataset
from .errors import ExtractionError
from .forest import ImportanceRanking

# Floor on the per-node instance threshold; thinner nodes make rule support
# and the split tests meaningless.
MIN_INS_NODE_FLOOR = 5

# A branch prefix: ordered (feature index, value) conditions from the root.
BranchPrefix = tuple[tuple[int, int], ...]


@dataclass
class SurrogateNode:
    """One node of the layered surrogate tree.

    feature is the split feature assigned to this depth (None once the ranking
    is exhausted); branch_value is the parent-feature value taken to reach the
    node (None at the root). children holds the (value-0, value-1) pair, each
    possibly None when too few records reach it.
    """

    depth: int
    feature: int | None
    branch_value: int | None
    record_indices: np.ndarray
    class_counts: np.ndarray
    children: tuple["SurrogateNode | None", "SurrogateNode | None"] = (None, None)

    @property
    def support(self) -> int:
        return int(self.record_indices.size)

    def materialized_children(self) -> tuple["SurrogateNode", ...]:
        return tuple(c for c in self.children if c is not None)


@dataclass(frozen=True)
class BranchPattern:
    """A nonempty branch prefix with the class counts of its end node."""

    conditions: BranchPrefix
    class_counts: tuple[int, int]
    support: int


def build_surrogate_tree(
    ds: BinaryDataset,
    ranking: ImportanceRanking,
    min_imp: float,
    min_ins_node: int,
    record_indices=None,
) -> SurrogateNode:
    """Build the layered tree for the features surviving the importance filter.

    The root always materializes and holds record_indices (all records by
    default); children materialize only with at least min_ins_node records.
    Depth is bounded by the number of surviving features.

    :raises ValueError: min_ins_node below the floor of 5.
    :raises ExtractionError: no feature importance reaches min_imp.
    """
    if min_ins_node < MIN_INS_NODE_FLOOR:
        raise ValueError(
            f"min_ins_node must be at least {MIN_INS_NODE_FLOOR} (got {min_ins_node})"
        )
    features = ranking.surviving(min_imp)
    if not features:
        raise ExtractionError(
            f"no feature has importance >= min_imp={min_imp}; nothing to extract"
        )
    if record_indices is None:
        indices = np.arange(ds.n_records, dtype=np.intp)
    else:
        indices = np.sort(np.asarray(record_indices, dtype=np.intp))

    def make_node(idx: np.ndarray, depth: int, branch_value: int | None) -> SurrogateNode:
        counts = np.bincount(ds.labels[idx], minlength=2).astype(np.int64)
        feature = features[depth] if depth < len(features) else None
        node = SurrogateNode(
            depth=depth,
            feature=feature,
            branch_value=branch_value,
            record_indices=idx,
            class_counts=counts,
        )
        if feature is None:
            return node
        column = ds.features[idx, feature]
        children = []
        for value in (0, 1):
            sub = idx[column == value]
            if sub.size >= min_ins_node:
                children.append(make_node(sub, depth + 1, value))
            else:
                children.append(None)
        node.children = (children[0], children[1])
        return node

    return make_node(indices, 0, None)


def _walk(node: SurrogateNode, prefix: BranchPrefix, out: list):
    for child in node.children:
        if child is None:
            continue
        extended = prefix + ((node.feature, child.branch_value),)
        out.append((child, extended))
        _walk(child, extended, out)


def nodes_with_prefixes(root: SurrogateNode) -> list[tuple[SurrogateNode, BranchPrefix]]:
    """Every non-root node paired with its branch prefix, depth-first, value-0 first."""
    out: list[tuple[SurrogateNode, BranchPrefix]] = []
    _walk(root, (), out)
    return out


def enumerate_prefixes(root: SurrogateNode) -> tuple[BranchPattern, ...]:
    """All nonempty branch prefixes of the tree with their end-node counts."""
    return tuple(
        BranchPattern(
            conditions=prefix,
            class_counts=(int(node.class_counts[0]), int(node.class_counts[1])),
            support=node.support,
        )
        for node, prefix in nodes_with_prefixes(root)
    )


def render_tree(root: SurrogateNode, feature_names) -> str:
    """Indented debug dump of the tree: per node the split, counts, support."""
    lines: list[str] = []

    def describe(node: SurrogateNode) -> str:
        counts = f"[{int(node.class_counts[0])}, {int(node.class_counts[1])}]"
        split = (
            f"split on {feature_names[node.feature]}"
            if node.feature is not None
            else "no further split"
        )
        return f"n={node.support} counts={counts} {split}"

    def walk(node: SurrogateNode, indent: int, label: str):
        lines.append("  " * indent + label + describe(node))
        for child in node.children:
            if child is None:
                continue
            branch = f"{feature_names[node.feature]}={child.branch_value}: "
            walk(child, indent + 1, branch)

    walk(root, 0, "root: ")
    return "\n".join(lines) + "\n"
