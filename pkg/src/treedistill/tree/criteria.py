"""Node statistics and the four split criteria.

All classification criteria are written in terms of additive node statistics,
so a parent's statistics are the elementwise sum of its children's.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


class DegenerateNodeError(ContractError):
    """The node carries zero total cost, so cost rates are undefined."""


class Criterion(str, enum.Enum):
    ERROR_REDUCTION = "error_reduction"
    COST_REDUCTION = "cost_reduction"
    COST_INFO_GAIN = "cost_info_gain"
    VARIANCE_REDUCTION = "variance_reduction"

    @property
    def is_regression(self) -> bool:
        return self is Criterion.VARIANCE_REDUCTION

    @property
    def code(self) -> int:
        return _CODES[self]


_CODES = {Criterion.ERROR_REDUCTION: 0, Criterion.COST_REDUCTION: 1,
          Criterion.COST_INFO_GAIN: 2, Criterion.VARIANCE_REDUCTION: 3}


@dataclass(frozen=True)
class NodeStats:
    """Summed per-action costs C^k, sample count N and per-action error counts E^a."""

    costs: np.ndarray
    count: int
    errors: np.ndarray | None = None

    @classmethod
    def from_rows(cls, cost_rows, labels=None, n_actions: int | None = None) -> "NodeStats":
        cost_rows = np.asarray(cost_rows, dtype=np.float64)
        n = len(cost_rows)
        errors = None
        if labels is not None:
            k = n_actions if n_actions is not None else cost_rows.shape[1]
            counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=k)
            errors = (n - counts).astype(np.float64)
        return cls(cost_rows.sum(axis=0), n, errors)

    @property
    def weight(self) -> float:
        return float(self.costs.sum())

    def __add__(self, other: "NodeStats") -> "NodeStats":
        errors = None if self.errors is None else self.errors + other.errors
        return NodeStats(self.costs + other.costs, self.count + other.count, errors)


@dataclass(frozen=True)
class RegressionStats:
    """Count, per-dimension sums and sums of squares of the Q-vector targets."""

    count: int
    sums: np.ndarray
    sq_sums: np.ndarray

    @classmethod
    def from_targets(cls, targets) -> "RegressionStats":
        t = np.asarray(targets, dtype=np.float64)
        return cls(len(t), t.sum(axis=0), (t * t).sum(axis=0))

    @property
    def mean(self) -> np.ndarray:
        return self.sums / self.count

    def total_variance(self) -> float:
        m = self.sums / self.count
        return float(np.sum(self.sq_sums / self.count - m * m))


def cost_rates(stats: NodeStats) -> tuple[np.ndarray, float, int]:
    """Cost rates C^k/W, the minimal rate and its action (ties -> smallest k)."""
    w = stats.weight
    if not w > 0:
        raise DegenerateNodeError("node has zero total cost")
    rates = stats.costs / w
    k = int(np.argmin(rates))
    return rates, float(rates[k]), k


def cost_entropy(stats: NodeStats) -> float:
    rates, _, _ = cost_rates(stats)
    nz = rates[rates > 0]
    return float(-np.sum(nz * np.log(nz)))


def _check_children(parent_n, left_n, right_n):
    if left_n <= 0 or right_n <= 0:
        raise ContractError("split has an empty child")
    if left_n + right_n != parent_n:
        raise ContractError("child sample counts do not add up to the parent's")


def error_reduction(parent: NodeStats, left: NodeStats, right: NodeStats) -> float:
    """Decrease of the misclassification rate against the teacher's actions.

    Uses min E / N per node; the N-weighted child rates collapse to raw counts.
    """
    _check_children(parent.count, left.count, right.count)
    if parent.errors is None:
        raise ContractError("error_reduction needs per-action error counts")
    return float((parent.errors.min() - left.errors.min() - right.errors.min()) / parent.count)


def cost_reduction(parent: NodeStats, left: NodeStats, right: NodeStats) -> float:
    """Decrease of the minimal cost rate, children weighted by W_child / W.

    (W_L/W) * min C_L / W_L == min C_L / W, so the gain is computed on sums,
    which keeps it exactly zero when the minimizing label is shared.
    """
    _check_children(parent.count, left.count, right.count)
    w = parent.weight
    if not w > 0:
        return 0.0
    return float((parent.costs.min() - left.costs.min() - right.costs.min()) / w)


def cost_info_gain(parent: NodeStats, left: NodeStats, right: NodeStats) -> float:
    """Information gain on the cost-rate distribution, children weighted by W."""
    _check_children(parent.count, left.count, right.count)
    w = parent.weight
    if not w > 0:
        return 0.0
    gain = cost_entropy(parent)
    for child in (left, right):
        wc = child.weight
        if wc > 0:
            gain -= wc / w * cost_entropy(child)
    return float(gain)


def variance_reduction(parent: RegressionStats, left: RegressionStats,
                       right: RegressionStats) -> float:
    """Decrease of the summed per-dimension variance of the Q targets."""
    _check_children(parent.count, left.count, right.count)
    n = parent.count
    return (parent.total_variance() - left.count / n * left.total_variance()
            - right.count / n * right.total_variance())
