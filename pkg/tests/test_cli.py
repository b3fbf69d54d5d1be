import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from romforge.cli import main
from romforge.dataset import read_csv, read_snp, write_snp
from romforge.fom import BurgersConfig, solve_burgers
from romforge.graph import grid_graph, write_edge_list


@pytest.fixture(scope="module")
def files(tmp_path_factory, burgers_train, burgers_val):
    root = tmp_path_factory.mktemp("cli")
    write_snp(burgers_train, root / "train.snp")
    write_snp(burgers_val, root / "val.snp")
    return root


def run(*args):
    return main([str(a) for a in args])


def test_fom_small(tmp_path, capsys):
    assert run("fom", "--dt", 0.1, "--t-end", 0.1, "--out-dir", tmp_path) == 0
    assert len(read_snp(tmp_path / "train.snp")) == 12
    assert len(read_snp(tmp_path / "validation.snp")) == 6


def test_fom_default_counts(tmp_path):
    assert run("fom", "--out-dir", tmp_path) == 0
    assert len(read_snp(tmp_path / "train.snp")) == 1200
    assert len(read_snp(tmp_path / "validation.snp")) == 600


def test_pod_then_eval(files, tmp_path):
    pod = tmp_path / "b.pod"
    assert run("pod", "--train-data", files / "train.snp", "--n", 3, "--output", pod) == 0
    out = tmp_path / "m.csv"
    assert run("eval", "--model", pod, "--val-data", files / "val.snp", "--output", out) == 0
    row = list(csv.DictReader(open(out, encoding="utf-8")))[0]
    assert row["Method"] == "POD" and row["n"] == "3"
    assert 6.5 <= float(row["Rℓ2%"]) <= 10.5
    assert row["Time per Epoch (s)"] == "N/A"


def test_eval_identity(files, tmp_path):
    out = tmp_path / "m.csv"
    assert run("eval", "--model", "identity", "--val-data", files / "val.snp", "--output", out) == 0
    row = list(csv.DictReader(open(out, encoding="utf-8")))[0]
    assert float(row["Rℓ1%"]) == 0 and float(row["Rℓ2%"]) == 0


def test_rom_full_basis_matches_fom(files, tmp_path):
    pod = tmp_path / "full.pod"
    assert run("pod", "--train-data", files / "train.snp", "--n", 256, "--output", pod) == 0
    traj = tmp_path / "rom.csv"
    assert run("rom", "--model", pod, "--mu1", 2.5, "--mu2", 0.025, "--output", traj) == 0
    states = np.loadtxt(traj, delimiter=",", skiprows=1)[:, 1:]
    ref = solve_burgers(BurgersConfig(mu=(2.5, 0.025))).states
    assert np.linalg.norm(states - ref) / np.linalg.norm(ref) < 1e-8


def test_train_predict_and_determinism(files, tmp_path):
    sub_train = tmp_path / "t.snp"
    sub_val = tmp_path / "v.snp"
    write_snp(read_snp(files / "train.snp").subset(slice(0, 1200, 30)), sub_train)
    write_snp(read_snp(files / "val.snp", "validation").subset(slice(0, 600, 30)), sub_val)
    cfg = tmp_path / "run.cfg"
    cfg.write_text("arch = FCNN\ntask = prediction\nn = 3\nmax_epochs = 3\nbatch = 8\n"
                   "timing = false  # keep outputs byte-stable\n")
    outputs = []
    for tag in "ab":
        model, report, metrics = (tmp_path / f"{tag}.{ext}" for ext in ("mdl", "rep.csv", "met.csv"))
        assert run("train", "--config", cfg, "--train-data", sub_train, "--val-data", sub_val,
                   "--output", model, "--report", report) == 0
        assert run("eval", "--model", model, "--val-data", sub_val, "--task", "prediction",
                   "--timing", "false", "--output", metrics) == 0
        outputs.append([p.read_bytes() for p in (model, report, metrics)])
    assert outputs[0] == outputs[1]
    pred = tmp_path / "p.csv"
    assert run("predict", "--model", tmp_path / "a.mdl", "--params", "1.0,2.25,0.0175;2.0,2.5,0.02",
               "--output", pred) == 0
    assert read_csv(pred).snaps.shape == (2, 256, 1)


def test_generic_gcnn_pipeline(tmp_path):
    g = grid_graph(10, 10)
    rs = np.random.default_rng(0)
    coords = np.arange(100) / 100.0

    def make(n, role):
        from romforge.dataset import SnapshotSet
        p = rs.uniform(size=(n, 2))
        return SnapshotSet(p, np.sin(coords[None] * 6 + p[:, :1]) * p[:, 1:], role)

    write_snp(make(30, "train"), tmp_path / "t.snp")
    write_snp(make(10, "validation"), tmp_path / "v.snp")
    write_edge_list(g, tmp_path / "g.edges")
    assert run("train", "--problem", "generic", "--arch", "GCNN", "--n", 4, "--max-epochs", 2,
               "--train-data", tmp_path / "t.snp", "--val-data", tmp_path / "v.snp",
               "--graph", tmp_path / "g.edges", "--output", tmp_path / "m.mdl") == 0
    assert run("eval", "--model", tmp_path / "m.mdl", "--val-data", tmp_path / "v.snp") == 0


def test_flags_override_config(files, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(f"n = 2\ntrain_data = {files / 'train.snp'}\noutput = {tmp_path / 'x.pod'}\n")
    assert run("pod", "--config", cfg, "--n", 4) == 0
    from romforge.pod import read_pod
    assert read_pod(tmp_path / "x.pod").n == 4


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("learning_rat = 0.1\n")
    assert run("pod", "--config", cfg) == 2
    assert "learning_rat" in capsys.readouterr().err


def test_exit_codes(files, tmp_path):
    assert run("pod", "--n", 3) == 2
    assert run("pod", "--train-data", tmp_path / "absent.snp", "--output", tmp_path / "x") == 3
    bad = tmp_path / "bad.snp"
    bad.write_bytes(b"NOPE")
    assert run("eval", "--model", "identity", "--val-data", bad) == 3
    assert run("pod", "--train-data", files / "train.snp", "--n", "three", "--output", tmp_path / "x") == 2
    edges = tmp_path / "g.edges"
    write_edge_list(grid_graph(2, 2), edges)
    assert run("train", "--arch", "GCNN", "--graph", edges, "--max-epochs", 1,
               "--train-data", files / "train.snp", "--val-data", files / "val.snp",
               "--output", tmp_path / "m.mdl") == 5


def test_divergence_exit_code(tmp_path):
    from romforge.dataset import SnapshotSet
    rs = np.random.default_rng(0)
    val = rs.uniform(size=(4, 4))
    val[0, 0] = 1e300  # far outside the training range: the validation loss overflows
    write_snp(SnapshotSet(rs.uniform(size=(10, 3)), rs.uniform(size=(10, 4))), tmp_path / "t.snp")
    write_snp(SnapshotSet(rs.uniform(size=(4, 3)), val, "validation"), tmp_path / "v.snp")
    with np.errstate(all="ignore"):
        code = run("train", "--max-epochs", 5, "--train-data", tmp_path / "t.snp",
                   "--val-data", tmp_path / "v.snp", "--output", tmp_path / "m.mdl")
    assert code == 4


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "romforge.cli", "--help"], capture_output=True, text=True,
                         env={**os.environ, "ROMFORGE_THREADS": "1"})
    assert out.returncode == 0 and "fom" in out.stdout
