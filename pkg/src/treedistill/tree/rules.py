"""If-then rule export for a grown tree, plus a parser for the exported text."""
from __future__ import annotations

import re

import numpy as np

from ..errors import FormatError
from .model import PolicyTree

_RULE = re.compile(r"^if (?P<conds>.+) then action (?P<action>\d+)(?:\s+#.*)?$")
_COND = re.compile(r"^(?P<name>\S+) (?P<op><=|>) (?P<value>\S+)$")


def export_rules(tree: PolicyTree) -> str:
    """One line per leaf: ``if a <= t and b > u then action k``.

    A tree that is a single leaf exports ``if true then action k``.  Thresholds
    are written with ``repr`` so parsing the text back routes exactly as the
    tree does.
    """
    names = tree.names()
    lines = []

    def walk(node: int, conds: list[str]) -> None:
        if tree.is_leaf(node):
            body = " and ".join(conds) if conds else "true"
            note = f"  # n={int(tree.n_samples[node])}"
            if tree.q_mean is not None:
                note += " q=[" + ", ".join(f"{v:.4g}" for v in tree.q_mean[node]) + "]"
            lines.append(f"if {body} then action {int(tree.action[node])}{note}")
            return
        name = names[tree.feature[node]]
        t = repr(float(tree.threshold[node]))
        walk(int(tree.left[node]), conds + [f"{name} <= {t}"])
        walk(int(tree.right[node]), conds + [f"{name} > {t}"])

    walk(0, [])
    return "\n".join(lines) + "\n"


class RuleSet:
    """Parsed rules; ``__call__`` returns the action of the first rule that fires."""

    def __init__(self, rules: list[tuple[list[tuple[int, str, float]], int]]):
        self.rules = rules

    @classmethod
    def parse(cls, text: str, feature_names) -> "RuleSet":
        index = {name: i for i, name in enumerate(feature_names)}
        rules = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            m = _RULE.match(line)
            if not m:
                raise FormatError(f"rule line {lineno}: cannot parse {line!r}")
            conds = []
            if m["conds"] != "true":
                for part in m["conds"].split(" and "):
                    c = _COND.match(part.strip())
                    if not c or c["name"] not in index:
                        raise FormatError(f"rule line {lineno}: bad condition {part!r}")
                    conds.append((index[c["name"]], c["op"], float(c["value"])))
            rules.append((conds, int(m["action"])))
        return cls(rules)

    def __len__(self):
        return len(self.rules)

    def __call__(self, state) -> int:
        for conds, action in self.rules:
            if all((state[f] <= v) if op == "<=" else (state[f] > v) for f, op, v in conds):
                return action
        raise ValueError("no rule matches the state")
