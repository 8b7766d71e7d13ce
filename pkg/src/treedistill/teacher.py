"""Teacher policies and the maximum-entropy conversions between Q, V and pi.

A teacher is anything that maps a state to a vector of action values.  Two are
provided: a tabular soft-Q learner over a uniform state grid and a feed-forward
network read from a plain-text weights file.
"""
from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .envs import EnvSpec, TASKS, make
from .errors import ContractError, FormatError, TrainingError
from .seeding import derive_seed, make_rng

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


def _as_q(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 0 or q.shape[-1] == 0:
        raise ContractError("Q-vector must have at least one action")
    if not np.all(np.isfinite(q)):
        raise ContractError("Q-vector contains non-finite entries")
    return q


def softmax_policy(q) -> np.ndarray:
    """Boltzmann policy exp(q) / sum(exp(q)), computed with a max shift.

    Accepts a single vector or a batch with actions on the last axis.
    """
    q = _as_q(q)
    z = np.exp(q - q.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def soft_value(q):
    """log-sum-exp of the action values."""
    q = _as_q(q)
    m = q.max(axis=-1)
    v = m + np.log(np.exp(q - m[..., None]).sum(axis=-1))
    return float(v) if v.ndim == 0 else v


def advantage(q) -> np.ndarray:
    """q - soft_value(q); every entry is <= 0 and the largest is >= -ln K."""
    q = _as_q(q)
    m = q.max(axis=-1, keepdims=True)
    shifted = q - m
    # shifting first keeps advantage(q + c) bit-identical to advantage(q)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def q_from_policy(probs, value) -> np.ndarray:
    """Invert the Boltzmann policy: q[k] = ln probs[k] + value.

    Probabilities below ``PROB_FLOOR`` are clamped to it before the log; a
    teacher with hard-zero actions therefore loses resolution on those actions.
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 0 or p.shape[-1] == 0:
        raise ContractError("probability vector must be non-empty")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise ContractError("probabilities must be finite and nonnegative")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > 1e-6):
        raise ContractError("probabilities must sum to 1")
    value = np.asarray(value, dtype=np.float64)
    return np.log(np.maximum(p, PROB_FLOOR)) + np.expand_dims(value, -1)


class SoftPolicyOutput(NamedTuple):
    probs: np.ndarray
    value: float
    advantage: np.ndarray


def soft_output(q) -> SoftPolicyOutput:
    return SoftPolicyOutput(softmax_policy(q), soft_value(q), advantage(q))


class Teacher:
    """Base class: subclasses implement ``q_batch``."""

    kind = "abstract"

    def __init__(self, spec: EnvSpec | None, n_actions: int):
        self.spec = spec
        self.n_actions = n_actions

    def q_batch(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def q_values(self, state) -> np.ndarray:
        return self.q_batch(np.asarray(state, dtype=np.float64)[None, :])[0]

    def soft_output(self, state) -> SoftPolicyOutput:
        return soft_output(self.q_values(state))

    def __call__(self, state) -> int:
        return int(np.argmax(self.q_values(state)))


# ---------------------------------------------------------------------------
# tabular soft-Q


@dataclass(frozen=True)
class Discretizer:
    """Uniform grid over (optionally transformed) observations.

    The first ``angle_pairs`` pairs of observation entries are read as
    (cos, sin) of an angle and replaced by the angle itself before binning,
    so an observation has ``len(bins) + angle_pairs`` entries.
    """

    bins: tuple[int, ...]
    lows: tuple[float, ...]
    highs: tuple[float, ...]
    angle_pairs: int = 0

    def __post_init__(self):
        if not (len(self.bins) == len(self.lows) == len(self.highs)):
            raise ContractError("bins, lows and highs must have equal length")
        if any(b < 1 for b in self.bins) or any(h <= l for l, h in zip(self.lows, self.highs)):
            raise ContractError("need bins >= 1 and highs > lows on every axis")
        if not 0 <= self.angle_pairs <= len(self.bins):
            raise ContractError("angle_pairs must be between 0 and the number of grid axes")

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.bins))

    @property
    def obs_dim(self) -> int:
        return len(self.bins) + self.angle_pairs

    def _strides(self):
        strides, acc = [], 1
        for b in reversed(self.bins):
            strides.append(acc)
            acc *= b
        return strides[::-1]

    def features(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        k = self.angle_pairs
        if k == 0:
            return states
        angles = np.arctan2(states[:, 1:2 * k:2], states[:, 0:2 * k:2])
        return np.hstack([angles, states[:, 2 * k:]])

    def indexer(self):
        """Return a fast scalar ``state -> cell`` function (clips to edge bins)."""
        spec = [(lo, (hi - lo) / b, b - 1, st)
                for lo, hi, b, st in zip(self.lows, self.highs, self.bins, self._strides())]
        k = self.angle_pairs

        def index(state) -> int:
            if k:
                state = [math.atan2(state[2 * j + 1], state[2 * j]) for j in range(k)] + \
                    list(state[2 * k:])
            i = 0
            for x, (lo, w, top, st) in zip(state, spec):
                b = int((x - lo) / w) if x > lo else 0
                i += (top if b > top else b) * st
            return i
        return index

    def index_batch(self, states: np.ndarray) -> np.ndarray:
        states = self.features(np.asarray(states, dtype=np.float64))
        lows = np.array(self.lows)
        width = (np.array(self.highs) - lows) / np.array(self.bins)
        b = np.floor((states - lows) / width)
        b = np.clip(b, 0, np.array(self.bins) - 1).astype(np.int64)
        b[states <= lows] = 0
        return b @ np.array(self._strides(), dtype=np.int64)


class TabularTeacher(Teacher):
    kind = "tabular"

    def __init__(self, spec: EnvSpec, grid: Discretizer, table: np.ndarray):
        table = np.asarray(table, dtype=np.float64)
        if grid.obs_dim != spec.obs_dim:
            raise ContractError(f"grid reads {grid.obs_dim} observation entries, "
                                f"{spec.name} has {spec.obs_dim}")
        if table.shape != (grid.n_cells, spec.n_actions):
            raise ContractError(
                f"Q table shape {table.shape} != ({grid.n_cells}, {spec.n_actions})")
        super().__init__(spec, spec.n_actions)
        self.grid = grid
        self.table = table
        self.table.setflags(write=False)
        self._index = grid.indexer()

    def q_values(self, state) -> np.ndarray:
        return self.table[self._index(state)].copy()

    def q_batch(self, states):
        return self.table[self.grid.index_batch(np.asarray(states, dtype=np.float64))]

    def __call__(self, state) -> int:
        return int(np.argmax(self.table[self._index(state)]))


_DEFAULT_GRIDS = {
    "CartPole": ((10, 10, 10, 10), (-2.4, -3.0, -0.21, -3.5), (2.4, 3.0, 0.21, 3.5)),
    "MountainCar": ((40, 40), (-1.2, -0.07), (0.6, 0.07)),
    # Acrobot is binned on (theta1, theta2, dtheta1, dtheta2) recovered from the
    # (cos, sin) observation pairs; the velocity range covers what swing-up visits
    "Acrobot": ((10, 10, 8, 8), (-math.pi, -math.pi, -6.0, -12.0),
                (math.pi, math.pi, 6.0, 12.0)),
}


@dataclass
class TrainConfig:
    """Hyper-parameters for :func:`train_tabular_soft_q`.

    ``reward_scale`` multiplies environment rewards before the soft Bellman
    update.  The entropy temperature is fixed at 1, so on tasks whose per-step
    reward is -1 the scale keeps the entropy bonus (at most ln K per step)
    from outweighing the step penalty.
    """

    bins: tuple[int, ...]
    lows: tuple[float, ...]
    highs: tuple[float, ...]
    angle_pairs: int = 0
    episodes: int = 3000
    gamma: float = 0.99
    reward_scale: float = 1.0
    lr_start: float = 0.5
    lr_end: float = 0.05
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    decay_fraction: float = 0.6
    backward_sweep: bool = False
    eval_every: int = 200
    eval_episodes: int = 30
    seed: int = 0

    @classmethod
    def for_task(cls, name: str, **overrides) -> "TrainConfig":
        if name not in _DEFAULT_GRIDS:
            raise ContractError(f"no default training config for {name!r}")
        bins, lows, highs = _DEFAULT_GRIDS[name]
        base = dict(bins=bins, lows=lows, highs=highs, **_TASK_DEFAULTS[name])
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


_TASK_DEFAULTS = {
    "CartPole": dict(episodes=3000, gamma=0.99, reward_scale=1.0),
    "MountainCar": dict(episodes=20000, gamma=1.0, reward_scale=10.0, lr_start=0.3,
                        lr_end=0.01, epsilon_start=0.05, epsilon_end=0.0, decay_fraction=0.6,
                        backward_sweep=True, eval_every=500, eval_episodes=50),
    "Acrobot": dict(angle_pairs=2, episodes=20000, gamma=0.99, reward_scale=10.0,
                    lr_end=0.01, epsilon_start=0.2, epsilon_end=0.0, backward_sweep=True,
                    eval_every=500, eval_episodes=50),
}


def _lse(row) -> float:
    m = max(row)
    return m + math.log(sum(math.exp(v - m) for v in row))


def soft_bellman_target(reward: float, next_q, done: bool, gamma: float) -> float:
    """r on terminal transitions, otherwise r + gamma * logsumexp(next_q).

    Time-limit truncation is not terminal and still bootstraps.
    """
    if done:
        return float(reward)
    return float(reward) + gamma * _lse(list(next_q))


def _greedy_return(env, index, table, seeds) -> float:
    total = 0.0
    for seed in seeds:
        s = env.reset(seed)
        while True:
            row = table[index(s)]
            tr = env.step(row.index(max(row)))
            total += tr.reward
            if tr.done or tr.truncated:
                break
            s = tr.next_state
    return total / len(seeds)


def train_tabular_soft_q(env, config: TrainConfig) -> TabularTeacher:
    """Soft Q-learning on a uniform grid with epsilon-greedy exploration.

    Learning rate and epsilon decay linearly over the first ``decay_fraction``
    of the episode budget.  Every ``eval_every`` episodes the greedy policy is
    scored on a fixed seed set and the best table seen is returned.
    """
    spec = env.spec
    grid = Discretizer(tuple(config.bins), tuple(config.lows), tuple(config.highs),
                       config.angle_pairs)
    if grid.obs_dim != spec.obs_dim:
        raise ContractError(f"grid reads {grid.obs_dim} observation entries, "
                            f"{spec.name} has {spec.obs_dim}")
    index = grid.indexer()
    n_actions = spec.n_actions
    table = [[0.0] * n_actions for _ in range(grid.n_cells)]
    rng = make_rng("train", spec.name, config.seed)
    eval_env = make(spec.name)
    eval_seeds = [derive_seed("train-eval", spec.name, config.seed, i)
                  for i in range(config.eval_episodes)]
    gamma, scale = config.gamma, config.reward_scale
    best_score, best_table = -math.inf, None
    decay_episodes = max(1.0, config.decay_fraction * config.episodes)

    for episode in range(config.episodes):
        frac = min(1.0, episode / decay_episodes)
        eps = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac
        lr = config.lr_start + (config.lr_end - config.lr_start) * frac
        i = index(env.reset(int(rng.integers(2**63))))
        trajectory = []
        while True:
            row = table[i]
            if rng.random() < eps:
                a = int(rng.integers(n_actions))
            else:
                a = row.index(max(row))
            tr = env.step(a)
            j = index(tr.next_state)
            r = tr.reward * scale
            target = r if tr.done else r + gamma * _lse(table[j])
            row[a] += lr * (target - row[a])
            if not math.isfinite(row[a]):
                raise TrainingError(
                    f"{spec.name}: Q[{i}][{a}] became {row[a]} at episode {episode} "
                    f"(lr={lr:.3g}, gamma={gamma}, reward_scale={scale}, target={target})")
            if config.backward_sweep:
                trajectory.append((i, a, r, j, tr.done))
            i = j
            if tr.done or tr.truncated:
                break
        for i0, a0, r0, j0, d0 in reversed(trajectory):
            target = r0 if d0 else r0 + gamma * _lse(table[j0])
            table[i0][a0] += lr * (target - table[i0][a0])
        if (episode + 1) % config.eval_every == 0 or episode + 1 == config.episodes:
            score = _greedy_return(eval_env, index, table, eval_seeds)
            logger.debug("%s episode %d: greedy return %.2f", spec.name, episode + 1, score)
            if score >= best_score:
                best_score, best_table = score, copy.deepcopy(table)

    q = np.array(best_table, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise TrainingError(f"{spec.name}: Q table contains non-finite values after training")
    logger.info("%s teacher: best greedy return %.2f on %d eval episodes",
                spec.name, best_score, len(eval_seeds))
    return TabularTeacher(spec, grid, q)


def save_tabular(teacher: TabularTeacher, path, header: dict | None = None) -> None:
    g = teacher.grid
    lines = []
    if header:
        lines.append("# " + _json_line(header))
    lines += [
        f"tabular {teacher.spec.name} {teacher.n_actions}"
        + (f" angle_pairs={g.angle_pairs}" if g.angle_pairs else ""),
        " ".join(str(b) for b in g.bins),
        " ".join(repr(float(v)) for v in g.lows),
        " ".join(repr(float(v)) for v in g.highs),
        " ".join(repr(float(v)) for v in teacher.table.ravel()),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def _json_line(d: dict) -> str:
    import json
    return json.dumps(d, sort_keys=True)


def _content_lines(path) -> list[str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    return [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def _floats(tokens, where) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from None


def load_tabular(path) -> TabularTeacher:
    lines = _content_lines(path)
    if len(lines) < 5 or not lines[0].startswith("tabular "):
        raise FormatError(f"{path}: not a tabular teacher file")
    head = lines[0].split()
    angle_pairs = 0
    if len(head) == 4 and head[3].startswith("angle_pairs="):
        try:
            angle_pairs = int(head.pop().partition("=")[2])
        except ValueError:
            raise FormatError(f"{path}: angle_pairs must be an integer") from None
    if len(head) != 3 or head[1] not in TASKS:
        raise FormatError(f"{path}: line 1 must be 'tabular <task> <n_actions> [angle_pairs=N]'")
    spec = TASKS[head[1]].spec
    try:
        bins = tuple(int(t) for t in lines[1].split())
    except ValueError:
        raise FormatError(f"{path}: bin counts must be integers") from None
    try:
        grid = Discretizer(bins, tuple(_floats(lines[2].split(), f"{path}: lows")),
                           tuple(_floats(lines[3].split(), f"{path}: highs")), angle_pairs)
    except ContractError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if grid.obs_dim != spec.obs_dim:
        raise FormatError(f"{path}: grid reads {grid.obs_dim} observation entries, "
                          f"{spec.name} has {spec.obs_dim}")
    flat = _floats(" ".join(lines[4:]).split(), f"{path}: Q table")
    if len(flat) != grid.n_cells * spec.n_actions:
        raise FormatError(f"{path}: Q table has {len(flat)} values, expected "
                          f"{grid.n_cells * spec.n_actions}")
    return TabularTeacher(spec, grid, np.array(flat).reshape(grid.n_cells, spec.n_actions))


# ---------------------------------------------------------------------------
# feed-forward network teacher

_ACTIVATIONS = {"relu": lambda x: np.maximum(x, 0.0), "tanh": np.tanh}


@dataclass
class NetworkWeights:
    """Dense layers ``y = W x + b``; each ``W`` has shape (out, in)."""

    activation: str
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.activation = self.activation.lower()
        if self.activation not in _ACTIVATIONS:
            raise ContractError(f"activation must be one of {sorted(_ACTIVATIONS)}")
        if not self.weights or len(self.weights) != len(self.biases):
            raise ContractError("need one bias vector per weight matrix")
        for n, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ContractError(f"layer {n}: weight {w.shape} / bias {b.shape} mismatch")
            if n and w.shape[1] != self.weights[n - 1].shape[0]:
                raise ContractError(f"layer {n}: input dim {w.shape[1]} != previous output "
                                    f"dim {self.weights[n - 1].shape[0]}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]


def network_forward(w: NetworkWeights, state) -> np.ndarray:
    """Affine layers with the hidden activation; the last layer is linear."""
    x = np.asarray(state, dtype=np.float64)
    act = _ACTIVATIONS[w.activation]
    last = len(w.weights) - 1
    for n, (W, b) in enumerate(zip(w.weights, w.biases)):
        x = x @ W.T + b
        if n < last:
            x = act(x)
    return x


class NetworkTeacher(Teacher):
    kind = "network"

    def __init__(self, weights: NetworkWeights, spec: EnvSpec | None = None):
        k = weights.layer_dims[-1]
        if spec is not None and (spec.n_actions != k or spec.obs_dim != weights.layer_dims[0]):
            raise ContractError(f"network dims {weights.layer_dims} do not fit {spec.name}")
        super().__init__(spec, k)
        self.weights = weights

    def q_batch(self, states):
        return network_forward(self.weights, np.atleast_2d(states))


def save_network(w: NetworkWeights, path, header: dict | None = None) -> None:
    lines = ["# " + _json_line(header)] if header else []
    lines += [w.activation, " ".join(str(d) for d in w.layer_dims)]
    for W, b in zip(w.weights, w.biases):
        lines += [" ".join(repr(float(v)) for v in row) for row in W]
        lines.append(" ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_network(path, spec: EnvSpec | None = None) -> NetworkTeacher:
    lines = _content_lines(path)
    if len(lines) < 2:
        raise FormatError(f"{path}: expected activation and layer-dims lines")
    activation = lines[0].strip().lower()
    if activation not in _ACTIVATIONS:
        raise FormatError(f"{path}: unknown activation {lines[0].strip()!r}")
    try:
        dims = [int(t) for t in lines[1].split()]
    except ValueError:
        raise FormatError(f"{path}: layer dims must be integers") from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise FormatError(f"{path}: need at least two positive layer dims")
    cursor = 2
    weights, biases = [], []
    for n, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        rows = lines[cursor:cursor + d_out + 1]
        if len(rows) != d_out + 1:
            raise FormatError(f"{path}: layer {n} is truncated")
        W = [_floats(r.split(), f"{path}: layer {n}") for r in rows[:-1]]
        b = _floats(rows[-1].split(), f"{path}: layer {n} bias")
        if any(len(r) != d_in for r in W) or len(b) != d_out:
            raise FormatError(f"{path}: layer {n} expects a {d_out}x{d_in} weight matrix "
                              f"and {d_out} biases")
        weights.append(np.array(W))
        biases.append(np.array(b))
        cursor += d_out + 1
    if cursor != len(lines):
        raise FormatError(f"{path}: {len(lines) - cursor} trailing lines after layer {len(dims) - 2}")
    return NetworkTeacher(NetworkWeights(activation, weights, biases), spec)


def load_teacher(path, spec: EnvSpec | None = None) -> Teacher:
    lines = _content_lines(path)
    if lines and lines[0].startswith("tabular "):
        return load_tabular(path)
    return load_network(path, spec)
