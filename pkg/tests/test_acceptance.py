"""Acceptance suite.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria". The network-training criteria take
several minutes each on one core; run them alone with ``-m slow``.
"""
import time

import numpy as np
import pytest

from helpers import gradcheck
from romforge.architectures import ArchitectureSpec, build_networks, conv_shape_chain, plan_shape_chain
from romforge.cli import main as cli_main
from romforge.dataset import SnapshotSet, write_snp
from romforge.evaluation import evaluate
from romforge.fom import TRAIN_MU, BurgersConfig, burgers_step, solve_burgers
from romforge.graph import from_edges, grid_graph, k_hop_neighborhood, path_graph, permute, propagation_matrix, write_edge_list
from romforge.nn import tensor as T
from romforge.nn.layers import BatchNorm, Conv2d, Dense, Gcn2, Gcn2Stack, gcn2, gcn2_beta
from romforge.pod import build_galerkin, difference_matrix, galerkin_rhs, galerkin_trajectory, pod_fit, quadratic_tensor
from romforge.rng import Xoshiro256
from romforge.training import TrainConfig, train

# bytes produced by criteria 1-8, compared against a rerun by criterion 13
ARTIFACTS = {}


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


# -- criteria 1-8 as pure functions (rerun for determinism) ------------------------------


def pod_compression(train, val, n):
    rec = evaluate(pod_fit(train, n), val, "compression")
    return np.array([rec.rl1, rec.rl2])


def galerkin_prediction(train, val):
    rec = evaluate(pod_fit(train, 10), val, "prediction")
    return np.array([rec.rl1, rec.rl2])


def oracle_equivalence(train):
    basis = pod_fit(train, 10)
    c = quadratic_tensor(basis.u_n, difference_matrix(256, BurgersConfig().dx))
    rs = np.random.default_rng(2024)
    worst = 0.0
    for mu in TRAIN_MU:
        cfg = BurgersConfig(mu=mu)
        rom = build_galerkin(basis, cfg, c)
        for _ in range(100):
            w_hat = rs.standard_normal(10)
            tensor_form = galerkin_rhs(rom, w_hat)
            w = rom.w0 + basis.u_n @ w_hat
            f = (burgers_step(w, cfg) - w) / cfg.dt  # FOM right-hand side, read off one step
            f[0] = 0.0  # the Dirichlet node is held, not evolved
            direct = basis.u_n.T @ f
            worst = max(worst, np.max(np.abs(tensor_form - direct)) / max(1.0, np.max(np.abs(direct))))
    return np.array([worst])


def full_basis(train):
    cfg = BurgersConfig(mu=(2.5, 0.025))
    _, states = galerkin_trajectory(pod_fit(train, 256), cfg)
    ref = solve_burgers(cfg).states
    return np.array([np.linalg.norm(states - ref) / np.linalg.norm(ref)])


def _leaf(a):
    return T.Tensor(np.array(a, dtype=float), requires_grad=True)


def gradient_checks():
    """Worst relative error per layer type over five random instances each."""
    out = {k: 0.0 for k in ("dense", "batchnorm", "conv2d", "conv2d_transpose", "gcn2")}
    graph = from_edges(6, [(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (3, 4, 1.0), (4, 5, 1.0), (0, 5, 1.0)])
    prop = propagation_matrix(graph)
    for seed in range(5):
        rs = np.random.default_rng(seed)
        layer = Dense(5, 4, "elu", Xoshiro256(seed))
        x = _leaf(rs.standard_normal((3, 5)))
        out["dense"] = max(out["dense"], gradcheck(lambda: layer(x), [x] + layer.parameters(), seed))

        bn = BatchNorm(4)
        bn.gamma.data[:] = rs.uniform(0.5, 2, 4)
        bn.beta.data[:] = rs.standard_normal(4)
        x = _leaf(rs.standard_normal((6, 4)))
        out["batchnorm"] = max(out["batchnorm"], gradcheck(lambda: bn(x), [x] + bn.parameters(), seed))

        for transposed, key in ((False, "conv2d"), (True, "conv2d_transpose")):
            conv = Conv2d(2, 3, 3, 1 + seed % 2, "same", transposed, "elu", Xoshiro256(seed))
            conv.b.data[:] = rs.standard_normal(3)
            x = _leaf(rs.standard_normal((2, 2, 4, 5)))
            out[key] = max(out[key], gradcheck(lambda: conv(x), [x] + conv.parameters(), seed))

        g = Gcn2(3, 0.2, gcn2_beta(1.5, 1 + seed), Xoshiro256(seed))
        x, x0 = _leaf(rs.standard_normal((2, 6, 3))), _leaf(rs.standard_normal((2, 6, 3)))
        out["gcn2"] = max(out["gcn2"], gradcheck(lambda: g.forward_with(prop, x, x0), [x, x0, g.w], seed))
    return out


def gcn2_properties():
    """(locality holds, worst equivariance error)."""
    g = path_graph(16)
    local = True
    for depth in (1, 2, 3, 4):
        stack = Gcn2Stack(propagation_matrix(g), 1, depth, rng=Xoshiro256(depth))
        for layer in stack.layers:
            layer.w.data[:] = 1.0
        x = np.ones((1, 16, 1))
        base = stack(x).data
        for v in range(16):
            bumped = x.copy()
            bumped[0, v, 0] += 0.5
            diff = np.abs(stack(bumped).data - base)[0, :, 0]
            near = k_hop_neighborhood(g, v, depth)
            local &= all((diff[i] > 0) == (i in near) for i in range(16))

    rs = np.random.default_rng(0)
    h = from_edges(8, [(0, 1, 1), (1, 2, 1), (2, 3, 2), (3, 4, 1), (4, 5, 1), (5, 6, 0.5),
                       (6, 7, 1), (0, 7, 1), (2, 6, 1)])
    w = rs.standard_normal((2, 2))
    x, x0 = rs.standard_normal((1, 8, 2)), rs.standard_normal((1, 8, 2))
    y = gcn2(propagation_matrix(h), x, x0, w, 0.2, 0.7).data
    worst = 0.0
    for _ in range(20):
        perm = rs.permutation(8)
        px, px0 = np.empty_like(x), np.empty_like(x0)
        px[:, perm], px0[:, perm] = x, x0
        py = gcn2(propagation_matrix(permute(h, perm)), px, px0, w, 0.2, 0.7).data
        worst = max(worst, np.max(np.abs(py[:, perm] - y)))
    return local, worst


TABLE4 = [
    ("1-C", (1, 16, 16), (8, 16, 16)), ("2-C", (8, 16, 16), (16, 8, 8)),
    ("3-C", (16, 8, 8), (32, 4, 4)), ("4-C", (32, 4, 4), (64, 2, 2)),
    ("1-TC", (64, 2, 2), (64, 4, 4)), ("2-TC", (64, 4, 4), (32, 8, 8)),
    ("3-TC", (32, 8, 8), (16, 16, 16)), ("4-TC", (16, 16, 16), (1, 16, 16)),
]
TABLE8 = [
    ("1-C", (1, 64, 64), (4, 32, 32)), ("2-C", (4, 32, 32), (16, 16, 16)),
    ("3-C", (16, 16, 16), (64, 8, 8)), ("4-C", (64, 8, 8), (256, 4, 4)),
    ("1-TC", (256, 4, 4), (64, 8, 8)), ("2-TC", (64, 8, 8), (16, 16, 16)),
    ("3-TC", (16, 16, 16), (4, 32, 32)), ("4-TC", (4, 32, 32), (1, 64, 64)),
]


def shape_rows():
    built = conv_shape_chain(build_networks(ArchitectureSpec("CNN", 10, 256)))
    return built, plan_shape_chain(256, 1), plan_shape_chain(2145, 1)


# -- tests -----------------------------------------------------------------------------


def test_criterion_01_pod_n3(burgers_train, burgers_val, criterion):
    (rl, sec) = timed(pod_compression, burgers_train, burgers_val, 3)
    ARTIFACTS[1] = rl.tobytes()
    ok = 2.8 <= rl[0] <= 4.5 and 6.5 <= rl[1] <= 10.5 and sec < 60
    assert criterion(1, "POD compression n=3", ok, f"Rl1={rl[0]:.3f}% Rl2={rl[1]:.3f}% in {sec:.1f}s")


def test_criterion_02_pod_n10_n32(burgers_train, burgers_val, criterion):
    r10, s10 = timed(pod_compression, burgers_train, burgers_val, 10)
    r32, s32 = timed(pod_compression, burgers_train, burgers_val, 32)
    ARTIFACTS[2] = r10.tobytes() + r32.tobytes()
    ok = r10[1] <= 5.7 and r32[1] <= 0.5 and max(s10, s32) < 60
    assert criterion(2, "POD compression n=10, n=32", ok,
                     f"Rl2={r10[1]:.3f}% / {r32[1]:.4f}% in {s10:.1f}s / {s32:.1f}s")


def test_criterion_03_galerkin_n10(burgers_train, burgers_val, criterion):
    rl, sec = timed(galerkin_prediction, burgers_train, burgers_val)
    ARTIFACTS[3] = rl.tobytes()
    ok = rl[1] <= 8.0 and sec < 120
    assert criterion(3, "POD-Galerkin prediction n=10", ok, f"Rl2={rl[1]:.3f}% in {sec:.1f}s")


def test_criterion_04_oracle_equivalence(burgers_train, criterion):
    worst, sec = timed(oracle_equivalence, burgers_train)
    ARTIFACTS[4] = worst.tobytes()
    ok = worst[0] <= 1e-10 and sec < 10
    assert criterion(4, "Galerkin tensor form vs direct projection", ok,
                     f"max rel diff {worst[0]:.2e} over 1200 states in {sec:.1f}s")


def test_criterion_05_full_basis(burgers_train, criterion):
    err, sec = timed(full_basis, burgers_train)
    ARTIFACTS[5] = err.tobytes()
    ok = err[0] <= 1e-8 and sec < 60
    assert criterion(5, "full-basis Galerkin matches FOM", ok, f"rel err {err[0]:.2e} in {sec:.1f}s")


def test_criterion_06_gradient_checks(criterion):
    errs, sec = timed(gradient_checks)
    ARTIFACTS[6] = np.array(list(errs.values())).tobytes()
    ok = max(errs.values()) < 1e-6 and sec < 60
    detail = " ".join(f"{k}={v:.1e}" for k, v in errs.items())
    assert criterion(6, "finite-difference gradient checks", ok, f"{detail} in {sec:.1f}s")


def test_criterion_07_gcn2_properties(criterion):
    (local, worst), sec = timed(gcn2_properties)
    ARTIFACTS[7] = np.array([local, worst]).tobytes()
    ok = local and worst <= 1e-12 and sec < 10
    assert criterion(7, "GCN2 K-locality and permutation equivariance", ok,
                     f"local={local} equivariance err {worst:.1e} in {sec:.2f}s")


def test_criterion_08_conv_shapes(criterion):
    (built, plan256, plan2145), sec = timed(shape_rows)
    ARTIFACTS[8] = repr((built, plan256, plan2145)).encode()
    ok = built == TABLE4 and plan256 == TABLE4 and plan2145 == TABLE8
    assert criterion(8, "conv shape chains for the Burgers and heat tables", ok,
                     f"{len(TABLE4) + len(TABLE8)} rows checked")


def _best_of_seeds(normalized, val, kind, n, task, lr, limit, seeds=(0, 1, 2)):
    stats, trn, van = normalized
    graph = path_graph(256) if kind == "GCNN" else None
    mode = "compression" if task == "compression" else "joint"
    results = []
    for seed in seeds:
        nets = build_networks(ArchitectureSpec(kind, n, 256, graph=graph), seed=seed)
        cfg = TrainConfig(lr=lr, batch_size=20, early_stop=200, max_epochs=3000, seed=seed, mode=mode)
        start = time.perf_counter()
        rep = train(nets, trn, van, cfg)
        rl2 = evaluate(nets, val, task, stats).rl2
        results.append((rl2, seed, rep.epochs, time.perf_counter() - start))
        if rl2 <= limit:
            break
    return min(results)


@pytest.mark.slow
def test_criterion_09_fcnn_compression(burgers_normalized, burgers_val, criterion):
    rl2, seed, epochs, sec = _best_of_seeds(burgers_normalized, burgers_val, "FCNN", 32,
                                            "compression", 5e-4, 1.5)
    assert criterion(9, "FCNN compression n=32", rl2 <= 1.5 and sec <= 1800,
                     f"Rl2={rl2:.3f}% (seed {seed}, {epochs} epochs, {sec:.0f}s)")


@pytest.mark.slow
def test_criterion_10_gcnn_compression(burgers_normalized, burgers_val, criterion):
    rl2, seed, epochs, sec = _best_of_seeds(burgers_normalized, burgers_val, "GCNN", 32,
                                            "compression", 2.5e-3, 2.0)
    assert criterion(10, "GCNN compression n=32", rl2 <= 2.0 and sec <= 2700,
                     f"Rl2={rl2:.3f}% (seed {seed}, {epochs} epochs, {sec:.0f}s)")


@pytest.mark.slow
def test_criterion_11_fcnn_prediction(burgers_normalized, burgers_val, criterion):
    rl2, seed, epochs, sec = _best_of_seeds(burgers_normalized, burgers_val, "FCNN", 10,
                                            "prediction", 5e-4, 5.0)
    assert criterion(11, "FCNN prediction n=10", rl2 <= 5.0 and sec <= 1800,
                     f"Rl2={rl2:.3f}% (seed {seed}, {epochs} epochs, {sec:.0f}s)")


def test_criterion_12_generic_graph_pipeline(tmp_path, criterion):
    g = grid_graph(10, 10)
    rs = np.random.default_rng(7)
    xy = np.array([(i // 10, i % 10) for i in range(100)]) / 9.0

    def make(n, role):
        p = np.column_stack([np.tile(np.linspace(0, 1, 5), n // 5), rs.uniform(0.5, 1.5, n)])
        u = np.exp(-p[:, 1:2] * ((xy[:, 0] - p[:, :1]) ** 2 + xy[:, 1] ** 2))
        v = np.sin(np.pi * xy[:, 0])[None] * p[:, :1]
        return SnapshotSet(p, np.stack([u, v], axis=2), role)

    write_snp(make(40, "train"), tmp_path / "train.snp")
    write_snp(make(10, "validation"), tmp_path / "val.snp")
    write_edge_list(g, tmp_path / "mesh.edges")
    common = ["--train-data", tmp_path / "train.snp", "--val-data", tmp_path / "val.snp"]
    codes = []
    for arch in ("GCNN", "FCNN", "CNN"):
        model = tmp_path / f"{arch}.mdl"
        codes.append(cli_main([str(a) for a in ["train", "--problem", "generic", "--arch", arch,
                                                "--n", 4, "--max-epochs", 3, "--batch", 8,
                                                "--graph", tmp_path / "mesh.edges", "--output", model,
                                                *common]]))
        codes.append(cli_main([str(a) for a in ["eval", "--model", model, "--val-data", tmp_path / "val.snp",
                                                "--output", tmp_path / f"{arch}.csv"]]))
        codes.append(cli_main([str(a) for a in ["predict", "--model", model, "--val-data",
                                                tmp_path / "val.snp", "--output", tmp_path / f"{arch}.p.csv"]]))
    codes.append(cli_main(["pod", "--train-data", str(tmp_path / "train.snp"), "--n", "4",
                           "--centering", "none", "--output", str(tmp_path / "b.pod")]))
    ok = all(c == 0 for c in codes)
    assert criterion(12, "external SNP1 + edge list on a 100-node graph", ok, f"exit codes {codes}")


def test_criterion_13_determinism(burgers_train, burgers_val, criterion):
    missing = [k for k in range(1, 9) if k not in ARTIFACTS]
    if missing:
        pytest.skip(f"criteria {missing} did not run in this session")
    rerun = {
        1: lambda: pod_compression(burgers_train, burgers_val, 3).tobytes(),
        2: lambda: (pod_compression(burgers_train, burgers_val, 10).tobytes()
                    + pod_compression(burgers_train, burgers_val, 32).tobytes()),
        3: lambda: galerkin_prediction(burgers_train, burgers_val).tobytes(),
        4: lambda: oracle_equivalence(burgers_train).tobytes(),
        5: lambda: full_basis(burgers_train).tobytes(),
        6: lambda: np.array(list(gradient_checks().values())).tobytes(),
        7: lambda: np.array(gcn2_properties()).tobytes(),
        8: lambda: repr(shape_rows()).encode(),
    }
    differ = [k for k, fn in rerun.items() if fn() != ARTIFACTS[k]]
    assert criterion(13, "criteria 1-8 byte-identical on rerun", not differ,
                     "all identical" if not differ else f"differ: {differ}")
