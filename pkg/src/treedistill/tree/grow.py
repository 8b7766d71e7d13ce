"""Best split search and best-first tree growth under an internal-node budget."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import ContractError
from . import kernels
from .criteria import Criterion
from .model import PolicyTree

#: Best gains at or below this are treated as zero and stop growth.
MIN_GAIN = 1e-12
#: Candidates within this (absolute + relative) distance of the best gain tie.
TIE_ATOL = 1e-12
TIE_RTOL = 1e-9
#: Frontier priorities are rounded to this many decimals so that leaves whose
#: weighted gains differ only by roundoff expand in node-id order.
PRIORITY_DECIMALS = 12


@dataclass
class TrainingSet:
    """Features plus whatever targets the criteria need.

    ``labels`` are teacher actions; ``costs`` the per-action cost rows;
    ``targets`` the Q-vectors regressed by the variance criterion.
    """

    X: np.ndarray
    labels: np.ndarray
    costs: np.ndarray | None = None
    targets: np.ndarray | None = None
    n_actions: int | None = None

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or len(self.X) == 0:
            raise ContractError("training set needs a non-empty 2-D feature matrix")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        k = self.n_actions
        for name in ("costs", "targets"):
            value = getattr(self, name)
            if value is not None:
                value = np.ascontiguousarray(value, dtype=np.float64)
                setattr(self, name, value)
                k = value.shape[1] if k is None else k
                if value.shape != (len(self.X), k):
                    raise ContractError(f"{name} must have shape ({len(self.X)}, {k})")
        if k is None:
            k = int(self.labels.max()) + 1
        self.n_actions = k
        if self.labels.shape != (len(self.X),):
            raise ContractError("one label per sample required")
        if self.costs is not None and np.any(self.costs < 0):
            raise ContractError("costs must be nonnegative")

    def __len__(self):
        return len(self.X)

    def rows(self, criterion: Criterion) -> np.ndarray:
        """Per-sample additive statistics consumed by the split scan."""
        if criterion is Criterion.ERROR_REDUCTION:
            return np.eye(self.n_actions)[self.labels]
        if criterion is Criterion.VARIANCE_REDUCTION:
            if self.targets is None:
                raise ContractError("variance_reduction needs Q-vector targets")
            return self.targets
        if self.costs is None:
            raise ContractError(f"{criterion.value} needs a cost matrix")
        return self.costs


class SplitCandidate(NamedTuple):
    feature: int
    threshold: float
    gain: float
    criterion: Criterion


def _midpoint(a: float, b: float) -> float:
    mid = 0.5 * (a + b)
    # adjacent floats: the midpoint may round onto b and send b left
    return mid if a <= mid < b else a


def _scan(X, rows, sorted_idx, criterion) -> SplitCandidate | None:
    scans = []
    best = -np.inf
    for f, idx in enumerate(sorted_idx):
        xs = X[idx, f]
        gains = kernels.split_gains(xs, rows[idx], criterion.code)
        scans.append((xs, gains))
        if gains.size:
            best = max(best, float(gains.max()))
    if not best > MIN_GAIN:
        return None
    floor = best - (TIE_ATOL + TIE_RTOL * abs(best))
    for f, (xs, gains) in enumerate(scans):
        hits = np.flatnonzero(gains >= floor)
        if hits.size:
            j = int(hits[0])
            return SplitCandidate(f, _midpoint(float(xs[j]), float(xs[j + 1])),
                                  float(gains[j]), criterion)
    return None  # pragma: no cover


def _node_rows(data: TrainingSet, criterion: Criterion, members: np.ndarray) -> np.ndarray:
    rows = data.rows(criterion)
    if criterion is Criterion.VARIANCE_REDUCTION:
        # centering on the node mean keeps the sum-of-squares form well conditioned
        sub = rows[members]
        rows = rows - sub.sum(axis=0) / len(sub)
    return rows


def best_split(data: TrainingSet, criterion, indices=None) -> SplitCandidate | None:
    """Highest-gain axis-aligned split among the samples in ``indices``.

    Thresholds are midpoints between consecutive distinct sorted values.  Ties
    go to the lower feature index, then the lower threshold.  Returns None
    when no candidate gains more than ``MIN_GAIN``.
    """
    criterion = Criterion(criterion)
    members = np.arange(len(data)) if indices is None else np.asarray(indices, dtype=np.int64)
    if len(members) < 2:
        return None
    X = data.X
    sorted_idx = [members[np.argsort(X[members, f], kind="stable")] for f in range(X.shape[1])]
    return _scan(X, _node_rows(data, criterion, members), sorted_idx, criterion)


def _leaf_value(data: TrainingSet, criterion: Criterion, members: np.ndarray):
    """(action, node weight, q_mean) for a node holding ``members``."""
    k = data.n_actions
    if criterion is Criterion.VARIANCE_REDUCTION:
        q = data.targets[members].sum(axis=0) / len(members)
        return int(np.argmax(q)), float(len(members)), q
    majority = int(np.argmax(np.bincount(data.labels[members], minlength=k)))
    if criterion is Criterion.ERROR_REDUCTION:
        return majority, float(len(members)), None
    c = data.costs[members].sum(axis=0)
    w = float(c.sum())
    # all-zero costs carry no preference: fall back to the behaviour-cloning label
    return (int(np.argmin(c)) if w > 0 else majority), w, None


def grow(data: TrainingSet, criterion, max_nodes: int) -> PolicyTree:
    """Grow best-first: always expand the frontier leaf with the largest
    weighted gain (node weight share times split gain) until ``max_nodes``
    internal nodes exist or no leaf has a positive-gain split.
    """
    criterion = Criterion(criterion)
    if max_nodes < 0:
        raise ContractError("max_nodes must be nonnegative")
    if len(data) == 0:
        raise ContractError("cannot grow a tree on an empty dataset")
    data.rows(criterion)  # validates required targets up front
    X = data.X
    n_features = X.shape[1]
    regression = criterion.is_regression

    feature, threshold, left, right, action = [], [], [], [], []
    gain, weight, n_samples, order, q_means = [], [], [], [], []
    pending: dict[int, tuple] = {}
    frontier: list[tuple[float, int]] = []
    root_weight = None

    def add_node(members: np.ndarray, sorted_idx: list[np.ndarray]) -> None:
        nonlocal root_weight
        node = len(feature)
        act, w, q = _leaf_value(data, criterion, members)
        if root_weight is None:
            root_weight = w
        share = w / root_weight if root_weight > 0 else 0.0
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        action.append(act)
        gain.append(0.0)
        weight.append(share)
        n_samples.append(len(members))
        order.append(-1)
        q_means.append(q)
        if len(members) < 2 or max_nodes == 0:
            return
        cand = _scan(X, _node_rows(data, criterion, members), sorted_idx, criterion)
        if cand is not None:
            pending[node] = (cand, sorted_idx)
            heapq.heappush(frontier, (-round(share * cand.gain, PRIORITY_DECIMALS), node))

    all_idx = np.arange(len(data))
    add_node(all_idx, [np.argsort(X[:, f], kind="stable") for f in range(n_features)])
    expansions = 0
    while frontier and expansions < max_nodes:
        _, node = heapq.heappop(frontier)
        cand, sorted_idx = pending.pop(node)
        goes_left = X[:, cand.feature] <= cand.threshold
        left_sorted, right_sorted = [], []
        for idx in sorted_idx:
            mask = goes_left[idx]
            left_sorted.append(idx[mask])
            right_sorted.append(idx[~mask])
        feature[node] = cand.feature
        threshold[node] = cand.threshold
        gain[node] = cand.gain
        order[node] = expansions
        expansions += 1
        left[node] = len(feature)
        add_node(np.sort(left_sorted[0]), left_sorted)
        right[node] = len(feature)
        add_node(np.sort(right_sorted[0]), right_sorted)

    i64 = lambda a: np.asarray(a, dtype=np.int64)
    return PolicyTree(
        n_features, data.n_actions, criterion, i64(feature), np.asarray(threshold, float),
        i64(left), i64(right), i64(action), np.asarray(gain, float), np.asarray(weight, float),
        i64(n_samples), i64(order), np.array(q_means) if regression else None)


def total_cost(tree: PolicyTree, X, costs) -> float:
    """Summed cost of the tree's actions over a dataset."""
    actions = tree.predict_batch(X)
    costs = np.asarray(costs, dtype=np.float64)
    return float(costs[np.arange(len(costs)), actions].sum())
