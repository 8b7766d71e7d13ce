"""Command-line front end: ``treedistill <subcommand> ...``.

Subcommands: train-teacher, collect, distill, evaluate, importance, grid.
Exit status is 0 on success, 1 on a runtime or file error and 2 on a usage
error; failures print one ``error:`` line to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import envs
from .errors import ContractError, FormatError, TrainingError
from .evaluate import MmdConfig, avg_return, consistency_report, write_json
from .experiment import ExperimentConfig, parse_kv, run_grid
from .teacher import TrainConfig, load_teacher, save_tabular, train_tabular_soft_q
from .transfer import ALGORITHMS, TransferSet, TreeConfig, algorithm, collect, distill, offline_loop
from .tree import PolicyTree, export_rules, feature_importance

log = logging.getLogger("treedistill")


class UsageError(Exception):
    pass


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def _config_values(args) -> dict[str, str]:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            values.update(parse_kv(path.read_text(), str(path)))
        except OSError as exc:
            raise FormatError(f"{path}: cannot read ({exc})") from exc
    values.update(_overrides(getattr(args, "set", None)))
    return values


def _train_config(task: str, values: dict[str, str]) -> TrainConfig:
    base = TrainConfig.for_task(task)
    kwargs = {}
    for key, raw in values.items():
        if not hasattr(base, key):
            raise UsageError(f"unknown training key {key!r}")
        current = getattr(base, key)
        try:
            if isinstance(current, tuple):
                cast = type(current[0])
                kwargs[key] = tuple(cast(v) for v in raw.strip("[]()").split(",") if v.strip())
            elif isinstance(current, bool):
                kwargs[key] = raw.lower() in ("1", "true", "yes", "on")
            else:
                kwargs[key] = type(current)(raw)
        except ValueError as exc:
            raise UsageError(f"training key {key!r}: {exc}") from None
    return TrainConfig.for_task(task, **kwargs)


def cmd_train_teacher(args) -> None:
    values = _config_values(args)
    task = values.pop("task", args.task)
    if task not in envs.TASKS:
        raise UsageError(f"unknown task {task!r}")
    cfg = _train_config(task, values)
    env = envs.make(task)
    teacher = train_tabular_soft_q(env, cfg)
    summary = avg_return(teacher, env, args.episodes, args.seed)
    save_tabular(teacher, args.out, {"command": "train-teacher", "task": task,
                                     "config": cfg.to_dict(), "seed": cfg.seed,
                                     "greedy_mean_return": summary.mean})
    print(f"{task} teacher: mean return {summary.mean:.2f} +/- {summary.std:.2f} "
          f"over {summary.episodes} episodes -> {args.out}")


def cmd_collect(args) -> None:
    spec = envs.TASKS[args.task].spec
    teacher = load_teacher(args.teacher, spec)
    data = collect(teacher, envs.make(args.task), args.n, args.mode, args.seed)
    data.save(args.out, {"command": "collect", "task": args.task, "teacher": str(args.teacher),
                         "n": args.n, "mode": args.mode, "seed": args.seed})
    print(f"collected {len(data)} samples -> {args.out}")


def cmd_distill(args) -> None:
    algo = algorithm(args.algorithm)
    header = {"command": "distill", "algorithm": args.algorithm, "max_nodes": args.max_nodes,
              "alpha": args.alpha, "seed": args.seed}
    if args.transfer:
        data = TransferSet.load(args.transfer)
        tree = distill(data, args.algorithm, args.max_nodes, alpha=args.alpha, seed=args.seed)
        header["transfer"] = str(args.transfer)
    else:
        if not (args.teacher and args.task):
            raise UsageError("distill needs --transfer, or --teacher and --task for the loop")
        spec = envs.TASKS[args.task].spec
        teacher = load_teacher(args.teacher, spec)
        result = offline_loop(teacher, envs.make(args.task), algo.objective, args.iterations,
                              args.samples_per_iter, TreeConfig(args.max_nodes, algo.criterion),
                              alpha=args.alpha, aggregate=not args.no_aggregate,
                              resample=algo.resample, eval_episodes=args.eval_episodes,
                              seed=args.seed)
        tree = result.tree
        header.update(task=args.task, teacher=str(args.teacher), iterations=args.iterations,
                      samples_per_iter=args.samples_per_iter, aggregate=not args.no_aggregate,
                      records=[asdict(r) for r in result.records])
    if args.task:
        tree.feature_names = envs.TASKS[args.task].spec.feature_names
    tree.save(args.out, header)
    print(f"{args.algorithm}: {tree.internal_count} internal nodes, {tree.leaf_count} leaves "
          f"-> {args.out}")


def cmd_evaluate(args) -> None:
    tree = PolicyTree.load(args.tree)
    env = envs.make(args.task)
    summary = avg_return(tree, env, args.episodes, args.seed)
    report = {"command": "evaluate", "tree": str(args.tree), "task": args.task,
              "seed": args.seed, "episodes": args.episodes, "summary": asdict(summary),
              "internal_nodes": tree.internal_count, "leaf_count": tree.leaf_count,
              "importance": feature_importance(tree).tolist()}
    if args.teacher:
        teacher = load_teacher(args.teacher, env.spec)
        cfg = MmdConfig(seed=args.seed)
        report["mmd"] = consistency_report(tree, teacher, env, cfg, args.mmd_episodes, args.seed)
        report["mmd_config"] = asdict(cfg) | {"episodes": args.mmd_episodes}
    if args.out:
        write_json(report, args.out)
    print(json.dumps({k: report[k] for k in report if k not in ("summary",)}
                     | {"mean_return": summary.mean, "std_return": summary.std}))


def cmd_importance(args) -> None:
    tree = PolicyTree.load(args.tree)
    names = tree.names()
    imp = feature_importance(tree)
    payload = {"tree": str(args.tree), "importance": dict(zip(names, imp.tolist()))}
    rules = export_rules(tree)
    if args.out_json:
        write_json(payload, args.out_json)
    if args.out_rules:
        Path(args.out_rules).write_text(rules)
    print(json.dumps(payload["importance"]))
    if not args.out_rules:
        sys.stdout.write(rules)


def cmd_grid(args) -> None:
    values = _config_values(args)
    cfg = ExperimentConfig.from_mapping(values)
    rows = run_grid(cfg, args.out)
    print(f"{len(rows)} grid rows in {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="treedistill", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    tasks = sorted(envs.TASKS)

    s = sub.add_parser("train-teacher", help="train a tabular soft-Q teacher")
    s.add_argument("--task", choices=tasks, default="CartPole")
    s.add_argument("--config", help="key = value file of TrainConfig fields")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--episodes", type=int, default=100, help="evaluation episodes")
    s.add_argument("--seed", type=int, default=0, help="evaluation seed")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_teacher)

    s = sub.add_parser("collect", help="collect a transfer set with a teacher")
    s.add_argument("--teacher", required=True)
    s.add_argument("--task", choices=tasks, required=True)
    s.add_argument("--n", type=int, default=20000)
    s.add_argument("--mode", choices=("greedy", "softmax"), default="greedy")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_collect)

    s = sub.add_parser("distill", help="grow a tree from a transfer set or the offline loop")
    s.add_argument("--algorithm", required=True, help=", ".join(ALGORITHMS))
    s.add_argument("--max-nodes", type=int, default=31)
    s.add_argument("--alpha", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--transfer")
    s.add_argument("--teacher")
    s.add_argument("--task", choices=tasks)
    s.add_argument("--iterations", type=int, default=1)
    s.add_argument("--samples-per-iter", type=int, default=20000)
    s.add_argument("--eval-episodes", type=int, default=100)
    s.add_argument("--no-aggregate", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_distill)

    s = sub.add_parser("evaluate", help="average return (and MMD against a teacher)")
    s.add_argument("--tree", required=True)
    s.add_argument("--task", choices=tasks, required=True)
    s.add_argument("--episodes", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--teacher")
    s.add_argument("--mmd-episodes", type=int, default=20)
    s.add_argument("--out")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("importance", help="feature importance and if-then rules")
    s.add_argument("--tree", required=True)
    s.add_argument("--out-json")
    s.add_argument("--out-rules")
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("grid", help="run the algorithm x size x run grid to CSV")
    s.add_argument("--config", help="key = value experiment file")
    s.add_argument("--set", action="append", metavar="KEY=VALUE")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_grid)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
