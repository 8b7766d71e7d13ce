"""Transfer sets: teacher rollouts annotated with Q-values, per-action costs
for each distillation objective, prioritized resampling, and the offline
collect/grow/evaluate loop."""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ContractError, FormatError
from .evaluate import avg_return
from .seeding import derive_seed, make_rng
from .teacher import Teacher, advantage, soft_value
from .tree import Criterion, PolicyTree, TrainingSet, grow

logger = logging.getLogger(__name__)


class Objective(str, enum.Enum):
    BC = "bc"
    DPIC = "dpic"
    DPIC_R = "dpic_r"
    FQ = "fq"


class Algorithm(NamedTuple):
    objective: Objective
    resample: bool
    criterion: Criterion


#: Distillation algorithms by name; the ``M`` variants resample the transfer set.
ALGORITHMS = {
    "BC": Algorithm(Objective.BC, False, Criterion.COST_INFO_GAIN),
    "FQ": Algorithm(Objective.FQ, False, Criterion.VARIANCE_REDUCTION),
    "ViperM": Algorithm(Objective.BC, True, Criterion.COST_INFO_GAIN),
    "Dpic": Algorithm(Objective.DPIC, False, Criterion.COST_INFO_GAIN),
    "DpicM": Algorithm(Objective.DPIC, True, Criterion.COST_INFO_GAIN),
    "DpicR": Algorithm(Objective.DPIC_R, False, Criterion.COST_INFO_GAIN),
    "DpicRM": Algorithm(Objective.DPIC_R, True, Criterion.COST_INFO_GAIN),
}


def algorithm(name: str) -> Algorithm:
    try:
        return ALGORITHMS[name]
    except KeyError:
        raise ContractError(f"unknown algorithm {name!r}; choose from {list(ALGORITHMS)}") from None


class TransferSample(NamedTuple):
    state: np.ndarray
    teacher_action: int
    q: np.ndarray
    advantage: np.ndarray


@dataclass
class TransferSet:
    """Teacher-visited states with the greedy teacher action and full Q-vector."""

    states: np.ndarray
    actions: np.ndarray
    q: np.ndarray
    advantages: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=np.float64))
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim == 1:
            self.states = self.states.reshape(len(self.q), -1)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        if not (len(self.states) == len(self.actions) == len(self.q)):
            raise ContractError("states, actions and q must have equal length")
        self.advantages = advantage(self.q) if len(self.q) else np.empty_like(self.q)

    @property
    def n_actions(self) -> int:
        return self.q.shape[1]

    @property
    def obs_dim(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return len(self.actions)

    def __getitem__(self, i: int) -> TransferSample:
        return TransferSample(self.states[i], int(self.actions[i]), self.q[i], self.advantages[i])

    def subset(self, indices) -> "TransferSet":
        idx = np.asarray(indices, dtype=np.int64)
        return TransferSet(self.states[idx], self.actions[idx], self.q[idx])

    def concat(self, other: "TransferSet") -> "TransferSet":
        return TransferSet(np.vstack([self.states, other.states]),
                           np.concatenate([self.actions, other.actions]),
                           np.vstack([self.q, other.q]))

    def save(self, path, header: dict | None = None) -> None:
        lines = ["# " + json.dumps(header, sort_keys=True)] if header else []
        lines.append(f"{self.obs_dim},{self.n_actions}")
        for s, a, q in zip(self.states, self.actions, self.q):
            lines.append(",".join([*map(repr, map(float, s)), str(int(a)), *map(repr, map(float, q))]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "TransferSet":
        try:
            raw = Path(path).read_text().splitlines()
        except OSError as exc:
            raise FormatError(f"{path}: cannot read ({exc})") from exc
        rows = [(n + 1, ln) for n, ln in enumerate(raw) if ln.strip() and not ln.startswith("#")]
        if not rows:
            raise FormatError(f"{path}: empty transfer file")
        try:
            obs_dim, k = (int(t) for t in rows[0][1].split(","))
        except ValueError:
            raise FormatError(f"{path}:{rows[0][0]}: header must be 'obs_dim,n_actions'") from None
        width = obs_dim + 1 + k
        states, actions, qs = [], [], []
        for lineno, ln in rows[1:]:
            tok = ln.split(",")
            if len(tok) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields, got {len(tok)}")
            try:
                states.append([float(t) for t in tok[:obs_dim]])
                actions.append(int(tok[obs_dim]))
                qs.append([float(t) for t in tok[obs_dim + 1:]])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= actions[-1] < k:
                raise FormatError(f"{path}:{lineno}: action {actions[-1]} outside [0, {k})")
        if not states:
            raise FormatError(f"{path}: no samples")
        return cls(np.array(states), np.array(actions), np.array(qs))


def collect(teacher: Teacher, env, n_samples: int, mode: str = "greedy",
            seed: int = 0) -> TransferSet:
    """Roll out the teacher over consecutive episodes and keep the first
    ``n_samples`` visited states, each with the teacher's Q-vector.

    In ``greedy`` mode the executed action is argmax Q; ``softmax`` samples it
    from the Boltzmann policy (the recorded teacher action stays argmax Q).
    """
    if n_samples < 1:
        raise ContractError("n_samples must be >= 1")
    if mode not in ("greedy", "softmax"):
        raise ContractError("mode must be 'greedy' or 'softmax'")
    states, qs = [], []
    episode = 0
    while len(states) < n_samples:
        s = env.reset(derive_seed("collect", seed, episode))
        rng = make_rng("collect-actions", seed, episode) if mode == "softmax" else None
        while len(states) < n_samples:
            q = teacher.q_values(s)
            states.append(s)
            qs.append(q)
            if rng is None:
                a = int(np.argmax(q))
            else:
                p = np.exp(q - q.max())
                a = int(rng.choice(len(q), p=p / p.sum()))
            tr = env.step(a)
            if tr.done or tr.truncated:
                break
            s = tr.next_state
        episode += 1
    q = np.array(qs)
    return TransferSet(np.array(states), np.argmax(q, axis=1), q)


@dataclass
class CostMatrix:
    """Per-sample, per-action costs (or Q regression targets for FQ)."""

    objective: Objective
    costs: np.ndarray | None
    targets: np.ndarray | None = None
    alpha: float | None = None


def build_costs(samples: TransferSet, objective, alpha: float | None = None) -> CostMatrix:
    """Cost rows per objective.

    BC: 1 for every action other than the teacher's.  Dpic: -A(s, a).
    DpicR: -A(s, a) + alpha * [a != teacher action].  FQ carries the Q-vectors
    as regression targets instead.
    """
    objective = Objective(objective)
    if objective is Objective.DPIC_R:
        if alpha is None:
            raise ContractError("dpic_r needs alpha")
        if alpha < 0:
            raise ContractError("alpha must be nonnegative")
    elif alpha is not None:
        raise ContractError(f"alpha only applies to dpic_r, not {objective.value}")
    if objective is Objective.FQ:
        return CostMatrix(objective, None, samples.q.copy())
    mismatch = np.ones((len(samples), samples.n_actions))
    mismatch[np.arange(len(samples)), samples.actions] = 0.0
    if objective is Objective.BC:
        return CostMatrix(objective, mismatch)
    costs = -samples.advantages
    costs[(costs < 0) & (costs > -1e-12)] = 0.0
    if objective is Objective.DPIC_R:
        costs = costs + alpha * mismatch
        return CostMatrix(objective, costs, alpha=float(alpha))
    return CostMatrix(objective, costs)


def training_set(samples: TransferSet, costs: CostMatrix) -> TrainingSet:
    return TrainingSet(samples.states, samples.actions, costs=costs.costs,
                       targets=costs.targets, n_actions=samples.n_actions)


def viper_weights(q) -> np.ndarray:
    """Resampling priority soft_value(q) - min(q): the gap between what the
    teacher can achieve in a state and its worst action."""
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    return np.maximum(soft_value(q) - q.min(axis=1), 0.0)


def viper_resample(samples: TransferSet, rng: np.random.Generator) -> TransferSet:
    """Draw ``len(samples)`` samples with replacement, proportional to
    :func:`viper_weights`; uniform if every weight is zero."""
    if len(samples) == 0:
        raise ContractError("cannot resample an empty transfer set")
    w = viper_weights(samples.q)
    total = w.sum()
    p = w / total if total > 0 else None
    return samples.subset(rng.choice(len(samples), size=len(samples), replace=True, p=p))


def distill(samples: TransferSet, algorithm_name: str, max_nodes: int,
            alpha: float | None = None, seed: int = 0,
            criterion: Criterion | None = None) -> PolicyTree:
    """Grow one tree for a named algorithm on a fixed transfer set."""
    algo = algorithm(algorithm_name)
    train = samples
    if algo.resample:
        train = viper_resample(samples, make_rng("resample", seed))
    costs = build_costs(train, algo.objective, alpha if algo.objective is Objective.DPIC_R else None)
    return grow(training_set(train, costs), criterion or algo.criterion, max_nodes)


@dataclass
class TreeConfig:
    max_nodes: int = 31
    criterion: Criterion | None = None


@dataclass
class IterationRecord:
    iteration: int
    dataset_size: int
    mean_return: float
    best_so_far: float


@dataclass
class LoopResult:
    tree: PolicyTree
    best_iteration: int
    records: list[IterationRecord]


def loop_collect_seed(seed: int, iteration: int) -> int:
    return derive_seed("loop-collect", seed, iteration)


def offline_loop(teacher: Teacher, env, objective, iterations: int, samples_per_iter: int,
                 tree_config: TreeConfig | None = None, *, alpha: float | None = None,
                 aggregate: bool = True, resample: bool = False, eval_episodes: int = 100,
                 seed: int = 0) -> LoopResult:
    """Collect with the teacher only, optionally aggregate and resample, grow,
    evaluate; return the tree with the best mean return (earliest on ties)."""
    if iterations < 1:
        raise ContractError("iterations must be >= 1")
    objective = Objective(objective)
    cfg = tree_config or TreeConfig()
    criterion = cfg.criterion or (Criterion.VARIANCE_REDUCTION if objective is Objective.FQ
                                  else Criterion.COST_INFO_GAIN)
    dataset = None
    best_tree, best_iter, best = None, -1, -np.inf
    records = []
    for t in range(iterations):
        batch = collect(teacher, env, samples_per_iter, "greedy", loop_collect_seed(seed, t))
        dataset = batch if dataset is None or not aggregate else dataset.concat(batch)
        train = viper_resample(dataset, make_rng("loop-resample", seed, t)) if resample else dataset
        costs = build_costs(train, objective, alpha if objective is Objective.DPIC_R else None)
        tree = grow(training_set(train, costs), criterion, cfg.max_nodes)
        score = avg_return(tree, env, eval_episodes, derive_seed("loop-eval", seed, t)).mean
        if score > best:
            best_tree, best_iter, best = tree, t, score
        records.append(IterationRecord(t, len(dataset), score, best))
        logger.info("iteration %d: %d samples, mean return %.2f (best %.2f)",
                    t, len(dataset), score, best)
    return LoopResult(best_tree, best_iter, records)
