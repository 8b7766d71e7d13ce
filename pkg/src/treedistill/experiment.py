"""Experiment grid: algorithm x tree size x run, with alpha chosen by return."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import envs
from .errors import ContractError
from .evaluate import (EvalReport, MmdConfig, append_grid_rows, avg_return,
                       consistency_report, read_grid_rows)
from .seeding import derive_seed
from .teacher import Teacher, TrainConfig, load_teacher, train_tabular_soft_q
from .transfer import ALGORITHMS, Objective, TransferSet, algorithm, collect, distill

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (1, 3, 7, 15, 31, 63)
DEFAULT_ALPHAS = (0.02, 0.04, 0.08, 0.1, 0.15)


def _ints(v):
    return tuple(int(x) for x in _items(v))


def _floats(v):
    return tuple(float(x) for x in _items(v))


def _strs(v):
    return tuple(str(x).strip() for x in _items(v))


def _items(v):
    if isinstance(v, str):
        return [x for x in v.replace(" ", "").strip("[]()").split(",") if x]
    return list(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


@dataclass
class ExperimentConfig:
    task: str = "CartPole"
    algorithms: tuple[str, ...] = tuple(ALGORITHMS)
    max_nodes: tuple[int, ...] = DEFAULT_SIZES
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHAS
    runs: int = 10
    eval_episodes: int = 100
    n_samples: int = 20000
    seed: int = 0
    teacher: str = "train"
    mmd: bool = False
    mmd_episodes: int = 10
    jobs: int = 1

    _CONVERT = {"task": str, "algorithms": _strs, "max_nodes": _ints, "alpha_grid": _floats,
                "runs": int, "eval_episodes": int, "n_samples": int, "seed": int,
                "teacher": str, "mmd": _bool, "mmd_episodes": int, "jobs": int}

    def __post_init__(self):
        if self.task not in envs.TASKS:
            raise ContractError(f"unknown task {self.task!r}")
        for name in self.algorithms:
            algorithm(name)
        if self.runs < 1 or self.eval_episodes < 1 or self.n_samples < 1 or self.jobs < 1:
            raise ContractError("runs, eval_episodes, n_samples and jobs must be >= 1")
        if not self.algorithms or not self.max_nodes or not self.alpha_grid:
            raise ContractError("algorithm, size and alpha grids must be non-empty")
        if min(self.max_nodes) < 1 or min(self.alpha_grid) < 0:
            raise ContractError("tree sizes must be >= 1 and alphas >= 0")

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ContractError(f"unknown config key {key!r}")
            try:
                kwargs[key] = cls._CONVERT[key](raw)
            except (TypeError, ValueError) as exc:
                raise ContractError(f"config key {key!r}: {exc}") from None
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ContractError(f"{source}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


class Cell(NamedTuple):
    task: str
    algorithm: str
    max_nodes: int
    alpha: float | None
    run: int

    def key(self) -> tuple:
        return (self.task, self.algorithm, int(self.max_nodes),
                "" if self.alpha is None else repr(float(self.alpha)), int(self.run))


def cell_seed(master: int, cell: Cell) -> int:
    return derive_seed(master, cell.task, cell.algorithm, cell.max_nodes, cell.run)


def data_seed(master: int, task: str, run: int) -> int:
    return derive_seed(master, task, "data", run)


def eval_seed(master: int, task: str, max_nodes: int, run: int) -> int:
    # shared across algorithms so cells of one (size, run) see the same episodes
    return derive_seed(master, task, "eval", max_nodes, run)


def _row_key(row: dict) -> tuple:
    return (row["task"], row["algorithm"], int(row["max_nodes"]), row["alpha"], int(row["run"]))


_CTX: dict = {}


def _init_worker(ctx: dict) -> None:
    _CTX.clear()
    _CTX.update(ctx)


def run_cell(cell: Cell, want_mmd: bool = False) -> EvalReport:
    cfg: ExperimentConfig = _CTX["config"]
    teacher: Teacher = _CTX["teacher"]
    data: TransferSet = _CTX["data"][cell.run]
    env = envs.make(cell.task)
    tree = distill(data, cell.algorithm, cell.max_nodes, alpha=cell.alpha,
                   seed=cell_seed(cfg.seed, cell))
    summary = avg_return(tree, env, cfg.eval_episodes,
                         eval_seed(cfg.seed, cell.task, cell.max_nodes, cell.run))
    value = None
    if want_mmd:
        value = consistency_report(tree, teacher, env, MmdConfig(),
                                   cfg.mmd_episodes, cell_seed(cfg.seed, cell))
    return EvalReport(cell.task, cell.algorithm, cell.max_nodes, cell.alpha, cell.run, summary,
                      tree.internal_count, tree.leaf_count, value)


def _execute(cells: list[Cell], want_mmd: bool, jobs: int, sink) -> None:
    if not cells:
        return
    if jobs == 1:
        for cell in cells:
            sink(run_cell(cell, want_mmd))
        return
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(dict(_CTX),)) as pool:
        for report in pool.map(run_cell, cells, [want_mmd] * len(cells)):
            sink(report)


def select_alpha(rows: list[dict], algorithm_name: str, alphas) -> float:
    """Alpha with the highest mean return over every size and run; ties go
    to the smaller alpha."""
    best, best_score = None, -math.inf
    for a in sorted(alphas):
        scores = [float(r["mean_return"]) for r in rows
                  if r["algorithm"] == algorithm_name and r["alpha"] == repr(float(a))]
        if not scores:
            continue
        score = float(np.mean(scores))
        if score > best_score:
            best, best_score = a, score
    if best is None:
        raise ContractError(f"no alpha-sweep results for {algorithm_name}")
    return best


def obtain_teacher(cfg: ExperimentConfig) -> Teacher:
    if cfg.teacher == "train":
        env = envs.make(cfg.task)
        return train_tabular_soft_q(env, TrainConfig.for_task(
            cfg.task, seed=derive_seed(cfg.seed, cfg.task, "teacher")))
    return load_teacher(cfg.teacher, envs.TASKS[cfg.task].spec)


def run_grid(cfg: ExperimentConfig, out_path, teacher: Teacher | None = None) -> list[dict]:
    """Run every (algorithm, max_nodes, run) cell and append one CSV row each.

    Algorithms with an alpha are first swept over ``alpha_grid`` (rows go to
    ``<out>.alpha-sweep.csv``); the alpha with the best mean return across
    sizes and runs is then reported in the main grid.  Cells already present
    in either file are skipped, so an interrupted run can be resumed.
    """
    out_path = Path(out_path)
    sweep_path = out_path.with_name(out_path.name + ".alpha-sweep.csv")
    header = {"config": cfg.to_dict(), "seed": cfg.seed}
    done = {_row_key(r) for r in read_grid_rows(out_path)}
    swept = read_grid_rows(sweep_path)
    swept_keys = {_row_key(r) for r in swept}

    if teacher is None:
        teacher = obtain_teacher(cfg)
    env = envs.make(cfg.task)
    data = [collect(teacher, env, cfg.n_samples, "greedy", data_seed(cfg.seed, cfg.task, r))
            for r in range(cfg.runs)]
    _init_worker({"config": cfg, "teacher": teacher, "data": data})

    def cells_for(name, alpha):
        return [Cell(cfg.task, name, n, alpha, r) for n in cfg.max_nodes for r in range(cfg.runs)]

    final_rows = []
    for name in cfg.algorithms:
        alpha = None
        if algorithm(name).objective is Objective.DPIC_R:
            pending = [c for a in cfg.alpha_grid for c in cells_for(name, a)
                       if c.key() not in swept_keys]
            new_rows = []

            def keep_sweep(report):
                row = report.grid_row()
                new_rows.append(row)
                append_grid_rows(sweep_path, [row], header)

            _execute(pending, False, cfg.jobs, keep_sweep)
            swept.extend(new_rows)
            alpha = select_alpha(swept, name, cfg.alpha_grid)
            logger.info("%s/%s: selected alpha %s", cfg.task, name, alpha)
        todo = [c for c in cells_for(name, alpha) if c.key() not in done]
        if alpha is not None and not cfg.mmd:
            # the sweep already evaluated these exact cells
            by_key = {_row_key(r): r for r in swept}
            reused = [by_key[c.key()] for c in todo]
            final_rows.extend(reused)
            append_grid_rows(out_path, reused, header)
            todo = []

        def keep(report):
            row = report.grid_row()
            final_rows.append(row)
            append_grid_rows(out_path, [row], header)

        _execute(todo, cfg.mmd, cfg.jobs, keep)
    return read_grid_rows(out_path)
