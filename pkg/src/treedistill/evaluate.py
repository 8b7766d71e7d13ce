"""Policy evaluation: episode returns and state-distribution discrepancy (MMD)."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractError
from .seeding import derive_seed, make_rng

Policy = Callable[[np.ndarray], int]


@dataclass
class Rollout:
    """Concatenated episodes; ``starts[i]`` is the first step of episode i."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    starts: np.ndarray
    returns: np.ndarray


def episode_seed(seed: int, episode: int) -> int:
    return derive_seed("episode", seed, episode)


def run_episodes(policy: Policy, env, episodes: int, seed: int,
                 record_states: bool = True) -> Rollout:
    if episodes < 1:
        raise ContractError("need at least one episode")
    states, actions, rewards, dones, starts, returns = [], [], [], [], [], []
    for ep in range(episodes):
        s = env.reset(episode_seed(seed, ep))
        starts.append(len(rewards))
        total = 0.0
        while True:
            a = policy(s)
            tr = env.step(a)
            if record_states:
                states.append(s)
            actions.append(a)
            rewards.append(tr.reward)
            dones.append(tr.done)
            total += tr.reward
            if tr.done or tr.truncated:
                break
            s = tr.next_state
        returns.append(total)
    obs = np.array(states) if states else np.empty((0, env.spec.obs_dim))
    return Rollout(obs, np.array(actions, dtype=np.int64), np.array(rewards),
                   np.array(dones), np.array(starts, dtype=np.int64), np.array(returns))


@dataclass
class ReturnSummary:
    mean: float
    std: float
    per_episode: list[float]
    episodes: int
    seed: int


def summarize(returns: Sequence[float], seed: int) -> ReturnSummary:
    r = np.asarray(returns, dtype=np.float64)
    return ReturnSummary(float(r.mean()), float(r.std()), r.tolist(), len(r), seed)


def avg_return(policy: Policy, env, episodes: int = 100, seed: int = 0) -> ReturnSummary:
    """Mean and (population) standard deviation of the return over ``episodes``
    episodes whose reset seeds derive from ``seed`` and the episode index."""
    ro = run_episodes(policy, env, episodes, seed, record_states=False)
    return summarize(ro.returns, seed)


class UniformRandomPolicy:
    def __init__(self, n_actions: int, seed: int = 0):
        self.n_actions = n_actions
        self._rng = make_rng("uniform-policy", seed)

    def __call__(self, state) -> int:
        return int(self._rng.integers(self.n_actions))


# ---------------------------------------------------------------------------
# maximum mean discrepancy


@dataclass
class MmdConfig:
    bandwidth_multipliers: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)
    max_samples: int = 2000
    estimator: str = "biased"
    seed: int = 0

    def __post_init__(self):
        if not self.bandwidth_multipliers or min(self.bandwidth_multipliers) <= 0:
            raise ContractError("bandwidth multipliers must be positive")
        if self.max_samples < 2:
            raise ContractError("max_samples must be at least 2")
        if self.estimator not in ("biased", "unbiased"):
            raise ContractError("estimator must be 'biased' or 'unbiased'")


def _cap(points: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    if len(points) <= m:
        return points
    return points[np.sort(rng.choice(len(points), size=m, replace=False))]


def _canonical(points: np.ndarray) -> np.ndarray:
    return points[np.lexsort(points.T[::-1])]


def mmd(X, Y, cfg: MmdConfig | None = None) -> float:
    """Multi-bandwidth Gaussian-kernel MMD between two point sets.

    Points are standardized per dimension by the pooled mean/std, bandwidths
    are multiples of the pooled median pairwise distance, and the kernel is
    the average of the Gaussians.  Returns sqrt(max(MMD^2, 0)).  Sets larger
    than ``cfg.max_samples`` are subsampled without replacement.

    Rows are put in lexicographic order and the pair in a fixed order before
    any arithmetic, so permuting points or swapping X and Y reproduces the
    result bit-for-bit and identical multisets give exactly 0 (biased form).
    """
    cfg = cfg or MmdConfig()
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if len(X) < 2 or len(Y) < 2:
        raise ContractError("mmd needs at least two points in each set")
    if X.shape[1] != Y.shape[1]:
        raise ContractError("point sets differ in dimension")
    rng = make_rng("mmd-cap", cfg.seed)
    X = _canonical(_cap(X, cfg.max_samples, rng))
    Y = _canonical(_cap(Y, cfg.max_samples, rng))
    if (len(X), X.tobytes()) > (len(Y), Y.tobytes()):
        X, Y = Y, X
    n = len(X) + len(Y)
    mean = (X.sum(axis=0) + Y.sum(axis=0)) / n
    var = (((X - mean) ** 2).sum(axis=0) + ((Y - mean) ** 2).sum(axis=0)) / n
    std = np.sqrt(var)
    std[std == 0] = 1.0
    X = (X - mean) / std
    Y = (Y - mean) / std
    dxx = cdist(X, X, "sqeuclidean")
    dyy = cdist(Y, Y, "sqeuclidean")
    dxy = cdist(X, Y, "sqeuclidean")
    iu_x = np.triu_indices(len(X), 1)
    iu_y = np.triu_indices(len(Y), 1)
    pooled = np.concatenate([dxx[iu_x], dyy[iu_y], dxy.ravel()])
    median = math.sqrt(float(np.median(pooled)))
    if median == 0:
        median = 1.0
    unbiased = cfg.estimator == "unbiased"

    def kernel_mean(d2: np.ndarray, square: bool) -> float:
        total = 0.0
        for mult in cfg.bandwidth_multipliers:
            total += float(np.exp(d2 / (-2.0 * (mult * median) ** 2)).sum())
        total /= len(cfg.bandwidth_multipliers)
        if square and unbiased:
            m = len(d2)
            return (total - m) / (m * (m - 1))
        return total / d2.size

    kxx = kernel_mean(dxx, True)
    kyy = kernel_mean(dyy, True)
    kxy = kernel_mean(dxy, False)
    return math.sqrt(max((kxx + kyy) - 2.0 * kxy, 0.0))


def consistency_report(policy: Policy, teacher: Policy, env, cfg: MmdConfig | None = None,
                       episodes: int = 20, seed: int = 0) -> float:
    """MMD between states visited by ``policy`` and by ``teacher``.

    Both rollouts use independent episode seeds; the two state sets are
    subsampled without replacement to a common size of at most ``max_samples``.
    """
    cfg = cfg or MmdConfig()
    ours = run_episodes(policy, env, episodes, derive_seed("consistency-policy", seed)).states
    theirs = run_episodes(teacher, env, episodes, derive_seed("consistency-teacher", seed)).states
    size = min(len(ours), len(theirs), cfg.max_samples)
    if size < 2:
        raise ContractError("rollouts produced fewer than two states")
    rng = make_rng("consistency-cap", seed)
    return mmd(_cap(ours, size, rng), _cap(theirs, size, rng), cfg)


# ---------------------------------------------------------------------------
# report emission

GRID_COLUMNS = ("task", "algorithm", "max_nodes", "alpha", "run", "mean_return",
                "std_return", "internal_nodes", "leaf_count", "mmd")


@dataclass
class EvalReport:
    task: str
    algorithm: str
    max_nodes: int
    alpha: float | None
    run: int
    summary: ReturnSummary
    internal_nodes: int
    leaf_count: int
    mmd: float | None = None
    importance: list[float] | None = None
    config: dict = field(default_factory=dict)

    def grid_row(self) -> dict:
        return {
            "task": self.task, "algorithm": self.algorithm, "max_nodes": self.max_nodes,
            "alpha": "" if self.alpha is None else repr(float(self.alpha)), "run": self.run,
            "mean_return": repr(self.summary.mean), "std_return": repr(self.summary.std),
            "internal_nodes": self.internal_nodes, "leaf_count": self.leaf_count,
            "mmd": "" if self.mmd is None else repr(float(self.mmd)),
        }

    def to_dict(self) -> dict:
        return asdict(self)


def write_json(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def append_grid_rows(path, rows: list[dict], header_comment: dict | None = None) -> None:
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        if new and header_comment is not None:
            fh.write("# " + json.dumps(header_comment, sort_keys=True) + "\n")
        writer = csv.DictWriter(fh, fieldnames=GRID_COLUMNS)
        if new:
            writer.writeheader()
        writer.writerows(rows)


def read_grid_rows(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
