"""The grown tree: flat node arrays, routing, truncation and the text format."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, FormatError
from .criteria import Criterion


@dataclass
class PolicyTree:
    """Binary tree of ``x[feature] <= threshold`` tests stored as parallel arrays.

    Node 0 is the root.  Leaves have ``feature == -1``.  ``action`` holds each
    node's label as if it were a leaf (argmax of ``q_mean`` for regression
    trees), so truncating an internal node to a leaf needs no data.
    ``weight`` is the node's share of the root's total weight (cost for cost
    criteria, sample count otherwise) and ``order`` is the rank at which an
    internal node was expanded.
    """

    n_features: int
    n_actions: int
    criterion: Criterion
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    action: np.ndarray
    gain: np.ndarray
    weight: np.ndarray
    n_samples: np.ndarray
    order: np.ndarray
    q_mean: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def internal_count(self) -> int:
        return int(np.count_nonzero(self.feature >= 0))

    @property
    def leaf_count(self) -> int:
        return self.n_nodes - self.internal_count

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def names(self) -> tuple[str, ...]:
        return self.feature_names or tuple(f"x{i}" for i in range(self.n_features))

    def apply(self, state) -> int:
        """Index of the leaf reached by ``state``."""
        node = 0
        feature, threshold, left, right = self.feature, self.threshold, self.left, self.right
        while feature[node] >= 0:
            node = left[node] if state[feature[node]] <= threshold[node] else right[node]
        return int(node)

    def __call__(self, state) -> int:
        return int(self.action[self.apply(state)])

    def predict_batch(self, states) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        node = np.zeros(len(states), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            cur = node[active]
            go_left = states[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.action[node]

    def truncate(self, max_nodes: int) -> "PolicyTree":
        """The tree best-first growth would have produced with a smaller budget.

        Children are numbered in expansion order, so keeping the first
        ``max_nodes`` expansions keeps nodes ``0 .. 2 * max_nodes``.
        """
        if max_nodes < 0:
            raise ContractError("max_nodes must be nonnegative")
        keep = min(self.n_nodes, 2 * max_nodes + 1)
        expanded = (self.order[:keep] >= 0) & (self.order[:keep] < max_nodes)
        cut = lambda a: a[:keep].copy()
        feature, threshold, left, right, gain, order = map(
            cut, (self.feature, self.threshold, self.left, self.right, self.gain, self.order))
        feature[~expanded] = -1
        threshold[~expanded] = 0.0
        left[~expanded] = -1
        right[~expanded] = -1
        gain[~expanded] = 0.0
        order[~expanded] = -1
        return PolicyTree(self.n_features, self.n_actions, self.criterion, feature, threshold,
                          left, right, cut(self.action), gain, cut(self.weight),
                          cut(self.n_samples), order,
                          None if self.q_mean is None else self.q_mean[:keep].copy(),
                          self.feature_names, dict(self.meta))

    # -- text format -------------------------------------------------------

    def to_text(self, header: dict | None = None) -> str:
        lines = []
        if header is not None:
            lines.append("# " + json.dumps(header, sort_keys=True))
        names = ",".join(self.feature_names) if self.feature_names else "-"
        lines.append(f"tree n_features={self.n_features} n_actions={self.n_actions} "
                     f"criterion={self.criterion.value} nodes={self.n_nodes} names={names}")
        for i in range(self.n_nodes):
            common = (f"action={int(self.action[i])} weight={float(self.weight[i])!r} "
                      f"n={int(self.n_samples[i])}")
            if self.q_mean is not None:
                common += " q=" + ",".join(repr(float(v)) for v in self.q_mean[i])
            if self.feature[i] >= 0:
                lines.append(
                    f"{i} internal feature={int(self.feature[i])} "
                    f"threshold={float(self.threshold[i])!r} left={int(self.left[i])} "
                    f"right={int(self.right[i])} gain={float(self.gain[i])!r} "
                    f"order={int(self.order[i])} {common}")
            else:
                kind = "regleaf" if self.q_mean is not None else "leaf"
                lines.append(f"{i} {kind} {common}")
        return "\n".join(lines) + "\n"

    def save(self, path, header: dict | None = None) -> None:
        Path(path).write_text(self.to_text(header))

    @classmethod
    def from_text(cls, text: str, source: str = "<tree>") -> "PolicyTree":
        lines = [(n + 1, ln) for n, ln in enumerate(text.splitlines())
                 if ln.strip() and not ln.startswith("#")]
        if not lines or not lines[0][1].startswith("tree "):
            raise FormatError(f"{source}: missing 'tree ...' header line")
        head = _fields(lines[0][1].split()[1:], source, lines[0][0])
        try:
            n_features = int(head["n_features"])
            n_actions = int(head["n_actions"])
            n_nodes = int(head["nodes"])
            criterion = Criterion(head["criterion"])
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{source}: bad header ({exc})") from None
        names = None if head.get("names", "-") == "-" else tuple(head["names"].split(","))
        body = lines[1:]
        if len(body) != n_nodes:
            raise FormatError(f"{source}: header says {n_nodes} nodes, found {len(body)}")
        arr = {k: np.full(n_nodes, -1, dtype=np.int64)
               for k in ("feature", "left", "right", "action", "n_samples", "order")}
        flt = {k: np.zeros(n_nodes) for k in ("threshold", "gain", "weight")}
        q_mean = np.zeros((n_nodes, n_actions)) if criterion.is_regression else None
        for lineno, ln in body:
            tok = ln.split()
            try:
                i = int(tok[0])
                kind = tok[1]
                f = _fields(tok[2:], source, lineno)
                if not 0 <= i < n_nodes or kind not in ("internal", "leaf", "regleaf"):
                    raise ValueError(f"bad node index or kind in {ln!r}")
                arr["action"][i] = int(f["action"])
                arr["n_samples"][i] = int(f["n"])
                flt["weight"][i] = float(f["weight"])
                if q_mean is not None:
                    q = [float(v) for v in f["q"].split(",")]
                    if len(q) != n_actions:
                        raise ValueError(f"q has {len(q)} entries, expected {n_actions}")
                    q_mean[i] = q
                if kind == "internal":
                    for k in ("feature", "left", "right", "order"):
                        arr[k][i] = int(f[k])
                    flt["threshold"][i] = float(f["threshold"])
                    flt["gain"][i] = float(f["gain"])
            except (IndexError, KeyError, ValueError) as exc:
                raise FormatError(f"{source}:{lineno}: {exc}") from None
        tree = cls(n_features, n_actions, criterion, arr["feature"], flt["threshold"],
                   arr["left"], arr["right"], arr["action"], flt["gain"], flt["weight"],
                   arr["n_samples"], arr["order"], q_mean, names)
        _validate(tree, source)
        return tree

    @classmethod
    def load(cls, path) -> "PolicyTree":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise FormatError(f"{path}: cannot read ({exc})") from exc
        return cls.from_text(text, str(path))


def _fields(tokens, source, lineno) -> dict:
    out = {}
    for t in tokens:
        key, sep, value = t.partition("=")
        if not sep:
            raise FormatError(f"{source}:{lineno}: expected key=value, got {t!r}")
        out[key] = value
    return out


def _validate(tree: PolicyTree, source: str) -> None:
    seen = np.zeros(tree.n_nodes, dtype=bool)
    stack = [0]
    while stack:
        i = stack.pop()
        if seen[i]:
            raise FormatError(f"{source}: node {i} reached twice")
        seen[i] = True
        if tree.feature[i] >= 0:
            if not 0 <= tree.feature[i] < tree.n_features:
                raise FormatError(f"{source}: node {i} splits on unknown feature")
            for child in (tree.left[i], tree.right[i]):
                if not 0 < child < tree.n_nodes:
                    raise FormatError(f"{source}: node {i} has invalid child {child}")
                stack.append(int(child))
        elif not 0 <= tree.action[i] < tree.n_actions:
            raise FormatError(f"{source}: leaf {i} has action outside [0, {tree.n_actions})")
    if not seen.all():
        raise FormatError(f"{source}: unreachable nodes {np.flatnonzero(~seen).tolist()}")


def predict(tree: PolicyTree, state) -> int:
    """Route ``state`` (left iff value <= threshold) and return the leaf's action."""
    return tree(state)
