"""Conditional chi-square testing of surrogate-tree splits.

A split is worth turning into rules when the class distributions of the
children differ from the parent's more than chance allows. The observed table
has one row per class and one column per materialized child; expected counts
are each child's total times the parent's class frequency, so the statistic
measures divergence from the parent distribution, conditioned on the branch
taken so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .surrogate import SurrogateNode


@dataclass(frozen=True)
class ContingencyTable:
    """Observed class-by-child counts plus the parent class frequencies.

    observed[k, s] counts records of class k in child s; child_totals are the
    column sums and parent_freq the row sums over the grand total (children
    partition the parent, so these equal the parent's class frequencies).
    """

    observed: np.ndarray
    parent_freq: np.ndarray
    child_totals: np.ndarray

    def __post_init__(self):
        observed = np.ascontiguousarray(self.observed, dtype=np.float64)
        parent_freq = np.ascontiguousarray(self.parent_freq, dtype=np.float64)
        child_totals = np.ascontiguousarray(self.child_totals, dtype=np.float64)
        if observed.ndim != 2:
            raise ValueError("observed must be a 2-d class-by-child matrix")
        if np.any(observed < 0):
            raise ValueError("observed counts must be nonnegative")
        total = observed.sum()
        if not np.allclose(observed.sum(axis=0), child_totals):
            raise ValueError("child_totals must equal the observed column sums")
        if total > 0 and not np.allclose(observed.sum(axis=1) / total, parent_freq):
            raise ValueError(
                "parent_freq must equal observed row sums over the grand total"
            )
        for arr in (observed, parent_freq, child_totals):
            arr.setflags(write=False)
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "parent_freq", parent_freq)
        object.__setattr__(self, "child_totals", child_totals)

    @classmethod
    def from_node(cls, node: SurrogateNode) -> "ContingencyTable":
        children = node.materialized_children()
        observed = np.column_stack([c.class_counts for c in children]).astype(np.float64)
        parent_total = node.class_counts.sum()
        return cls(
            observed=observed,
            parent_freq=node.class_counts / parent_total,
            child_totals=observed.sum(axis=0),
        )

    @property
    def dof(self) -> int:
        c, s = self.observed.shape
        return (c - 1) * (s - 1)


@dataclass(frozen=True)
class PatternTestResult:
    """Outcome of testing one node's split."""

    statistic: float
    dof: int
    p_value: float
    accepted: bool


def chi_square_statistic(table: ContingencyTable) -> float:
    """sum over classes k and children s of (O_ks - E_ks)^2 / E_ks.

    E_ks = child_total_s * parent_freq_k. Cells with zero expected count
    contribute 0 (an entire class absent from the parent forces the observed
    count to 0 as well).

    :raises ValueError: empty table or fewer than two children.
    """
    if table.observed.sum() <= 0:
        raise ValueError("contingency table has no records")
    if table.observed.shape[1] < 2:
        raise ValueError("chi-square needs at least two children")
    expected = np.outer(table.parent_freq, table.child_totals)
    with np.errstate(divide="ignore", invalid="ignore"):
        contrib = (table.observed - expected) ** 2 / expected
    contrib = np.where(expected > 0, contrib, 0.0)
    # fsum: correctly rounded total, so the reduction order cannot move the
    # last ulp. Tables here are a handful of cells.
    return math.fsum(contrib.ravel().tolist())


def chi_square_p_value(statistic: float, dof: int) -> float:
    """Upper-tail probability of the chi-square distribution.

    Evaluates the regularized upper incomplete gamma function Q(dof/2,
    statistic/2) through its exact series forms: for even dof the truncated
    Poisson sum e^-x * sum x^k/k!, for odd dof erfc(sqrt(x)) plus the
    half-integer continuation. All terms are positive, so no cancellation.

    :raises ValueError: negative statistic or dof < 1.
    """
    if statistic < 0:
        raise ValueError("statistic must be nonnegative")
    if dof < 1:
        raise ValueError("dof must be at least 1")
    x = statistic / 2.0
    if dof % 2 == 0:
        term = math.exp(-x)
        total = term
        for k in range(1, dof // 2):
            term *= x / k
            total += term
    else:
        total = math.erfc(math.sqrt(x))
        if dof > 1:
            # t_0 = x^(1/2) e^-x / Gamma(3/2); t_k = t_(k-1) * x / (k + 1/2)
            term = math.sqrt(x) * math.exp(-x) * 2.0 / math.sqrt(math.pi)
            total += term
            for k in range(1, (dof - 1) // 2):
                term *= x / (k + 0.5)
                total += term
    return min(total, 1.0)


def test_split(node: SurrogateNode, significance: float) -> PatternTestResult:
    """Chi-square test of one node's split against its own class distribution.

    Accepted iff p_value <= 1 - significance. A node with a single
    materialized child is rejected without computing: one column carries no
    distributional evidence.

    :raises ValueError: significance outside (0, 1) or a childless node.
    """
    if not 0.0 < significance < 1.0:
        raise ValueError("significance must lie strictly between 0 and 1")
    children = node.materialized_children()
    if not children:
        raise ValueError("test_split needs a node with at least one child")
    if len(children) < 2:
        return PatternTestResult(statistic=0.0, dof=1, p_value=1.0, accepted=False)
    table = ContingencyTable.from_node(node)
    statistic = chi_square_statistic(table)
    p_value = chi_square_p_value(statistic, table.dof)
    return PatternTestResult(
        statistic=statistic,
        dof=table.dof,
        p_value=p_value,
        accepted=p_value <= 1.0 - significance,
    )
