import json

import numpy as np
import pytest

from treedistill.cli import main
from treedistill.evaluate import read_grid_rows
from treedistill.teacher import NetworkWeights, save_network
from treedistill.transfer import TransferSet
from treedistill.tree import PolicyTree


@pytest.fixture
def teacher_file(tmp_path):
    W = np.array([[0.0, 0.0, 0.0, 0.0], [0.1, 0.5, 10.0, 1.0]])
    path = tmp_path / "teacher.txt"
    save_network(NetworkWeights("relu", [W], [np.zeros(2)]), path)
    return path


@pytest.fixture
def transfer_file(tmp_path, teacher_file):
    path = tmp_path / "transfer.csv"
    assert main(["collect", "--teacher", str(teacher_file), "--task", "CartPole",
                 "--n", "1500", "--seed", "3", "--out", str(path)]) == 0
    return path


def test_collect_writes_header_and_rows(transfer_file):
    lines = transfer_file.read_text().splitlines()
    header = json.loads(lines[0][2:])
    assert header["seed"] == 3 and header["n"] == 1500
    assert len(TransferSet.load(transfer_file)) == 1500


def test_distill_is_deterministic(tmp_path, transfer_file):
    outs = []
    for name in ("a.txt", "b.txt"):
        out = tmp_path / name
        assert main(["distill", "--algorithm", "Dpic", "--max-nodes", "31",
                     "--transfer", str(transfer_file), "--out", str(out)]) == 0
        outs.append(out.read_text())
    assert outs[0] == outs[1]
    assert PolicyTree.from_text(outs[0]).internal_count <= 31


def test_distill_offline_loop(tmp_path, teacher_file):
    out = tmp_path / "loop.txt"
    assert main(["distill", "--algorithm", "DpicR", "--alpha", "0.1", "--max-nodes", "7",
                 "--teacher", str(teacher_file), "--task", "CartPole", "--iterations", "2",
                 "--samples-per-iter", "400", "--eval-episodes", "3", "--out", str(out)]) == 0
    header = json.loads(out.read_text().splitlines()[0][2:])
    assert len(header["records"]) == 2
    assert PolicyTree.load(out).names()[0] == "cart_position"


def test_evaluate_and_importance(tmp_path, transfer_file, teacher_file, capsys):
    tree = tmp_path / "t.txt"
    main(["distill", "--algorithm", "BC", "--max-nodes", "7", "--transfer", str(transfer_file),
          "--task", "CartPole", "--out", str(tree)])
    report = tmp_path / "r.json"
    assert main(["evaluate", "--tree", str(tree), "--task", "CartPole", "--episodes", "5",
                 "--teacher", str(teacher_file), "--mmd-episodes", "2", "--out", str(report)]) == 0
    data = json.loads(report.read_text())
    assert data["summary"]["episodes"] == 5 and data["mmd"] >= 0
    assert abs(sum(data["importance"]) - 1) < 1e-9
    rules = tmp_path / "rules.txt"
    capsys.readouterr()
    assert main(["importance", "--tree", str(tree), "--out-rules", str(rules)]) == 0
    imp = json.loads(capsys.readouterr().out)
    assert set(imp) == {"cart_position", "cart_velocity", "pole_angle", "pole_angular_velocity"}
    n_rules = sum(ln.startswith("if ") for ln in rules.read_text().splitlines())
    assert n_rules == PolicyTree.load(tree).leaf_count


def test_train_teacher_small_budget(tmp_path):
    out = tmp_path / "tab.txt"
    cfg = tmp_path / "train.cfg"
    cfg.write_text("episodes = 30\neval_every = 30\neval_episodes = 2  # tiny\n")
    assert main(["train-teacher", "--task", "MountainCar", "--config", str(cfg),
                 "--set", "bins=10,10", "--episodes", "2", "--out", str(out)]) == 0
    header = json.loads(out.read_text().splitlines()[0][2:])
    assert header["config"]["episodes"] == 30 and header["config"]["bins"] == [10, 10]


def grid_args(teacher_file, out, *extra):
    return ["grid", "--out", str(out), "--set", "task=CartPole", "--set", f"teacher={teacher_file}",
            "--set", "n_samples=1000", "--set", "eval_episodes=3", *extra]


def test_grid_bc_single_size(tmp_path, teacher_file):
    out = tmp_path / "grid.csv"
    assert main(grid_args(teacher_file, out, "--set", "algorithms=BC", "--set", "max_nodes=1")) == 0
    rows = read_grid_rows(out)
    assert len(rows) == 10
    assert sorted(int(r["run"]) for r in rows) == list(range(10))
    assert json.loads(out.read_text().splitlines()[0][2:])["config"]["runs"] == 10


def test_grid_alpha_selection_and_restart(tmp_path, teacher_file):
    out = tmp_path / "grid.csv"
    args = grid_args(teacher_file, out, "--set", "algorithms=DpicR,FQ", "--set", "max_nodes=1,3",
                     "--set", "runs=2", "--set", "alpha_grid=0.02,0.15")
    assert main(args) == 0
    first = out.read_text()
    rows = read_grid_rows(out)
    assert len(rows) == 8
    assert {r["alpha"] for r in rows if r["algorithm"] == "DpicR"} <= {"0.02", "0.15"}
    assert len(read_grid_rows(tmp_path / "grid.csv.alpha-sweep.csv")) == 8
    # rerunning finds every cell done and appends nothing
    assert main(args) == 0
    assert out.read_text() == first


def test_grid_parallel_matches_serial(tmp_path, teacher_file):
    base = ["--set", "algorithms=Dpic", "--set", "max_nodes=3", "--set", "runs=2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(grid_args(teacher_file, a, *base)) == 0
    assert main(grid_args(teacher_file, b, *base, "--set", "jobs=2")) == 0
    key = lambda r: (r["run"], r["mean_return"], r["internal_nodes"])
    assert sorted(map(key, read_grid_rows(a))) == sorted(map(key, read_grid_rows(b)))


@pytest.mark.parametrize("argv,code", [
    (["distill", "--algorithm", "Nope", "--transfer", "x", "--out", "y"], 2),
    (["distill", "--algorithm", "BC", "--out", "y"], 2),
    (["grid", "--set", "bogus=1", "--out", "g.csv"], 2),
    (["grid", "--set", "novalue", "--out", "g.csv"], 2),
    (["evaluate", "--tree", "missing.txt", "--task", "CartPole"], 1),
])
def test_error_exit_codes(argv, code, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code
    err = capsys.readouterr().err
    assert err.startswith("error: ") and err.count("\n") == 1


def test_malformed_transfer_file(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("4,2\n1,2\n")
    assert main(["distill", "--algorithm", "BC", "--transfer", str(bad),
                 "--out", str(tmp_path / "t.txt")]) == 1
    assert "bad.csv:2" in capsys.readouterr().err
