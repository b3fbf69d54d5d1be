"""``romforge`` command line.

Settings come from an optional ``key = value`` file (``--config``) with
command-line flags taking precedence. Exit codes: 0 ok, 2 configuration,
3 I/O, 4 numerical divergence, 5 shape mismatch.
"""
import argparse
import csv
import logging
import os
import sys

import numpy as np

from romforge.architectures import ArchitectureSpec, build_networks
from romforge.checkpoint import MDL_MAGIC, read_model, write_model
from romforge.dataset import (
    SnapshotSet,
    check_disjoint,
    fit_normalizer,
    normalize,
    read_csv,
    read_snp,
    write_csv,
    write_snp,
)
from romforge.errors import ConfigError, FormatError, RomforgeError, ShapeError
from romforge.evaluation import IdentityModel, evaluate, reconstruct, write_metrics_csv
from romforge.fom import BurgersConfig, lattice_snapshots
from romforge.graph import path_graph, read_edge_list
from romforge.pod import POD_MAGIC, galerkin_trajectory, pod_fit, read_pod, write_pod
from romforge.training import TrainConfig, train

log = logging.getLogger("romforge")

DEFAULT_LR = {"FCNN": 5e-4, "CNN": 1e-3, "GCNN": 2.5e-3}


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# key -> (type, default, help)
KEYS = {
    "problem": (str, "burgers", "burgers or generic"),
    "task": (str, "compression", "compression or prediction"),
    "arch": (str, "FCNN", "FCNN, CNN or GCNN"),
    "n": (int, 10, "latent dimension / POD modes"),
    "lr": (float, None, "ADAM learning rate (default depends on arch)"),
    "batch": (int, 20, "mini-batch size"),
    "early_stop": (int, 200, "early stopping patience in epochs"),
    "max_epochs": (int, 5000, "hard cap on training epochs"),
    "seed": (int, 0, "seed for weights and shuffling"),
    "N_l": (int, 4, "GCN2 layers per stack"),
    "prediction_depth": (int, None, "layers in the prediction network"),
    "mode": (str, "joint", "joint or two-stage (prediction task)"),
    "centering": (str, "ic", "POD centering: ic or none"),
    "store_t0": (_bool, False, "also store the t=0 state"),
    "sample_every": (int, 1, "store every k-th time step"),
    "n_nodes": (int, 256, "Burgers grid points"),
    "a": (float, 0.0, "left end of the Burgers domain"),
    "b": (float, 100.0, "right end of the Burgers domain"),
    "dt": (float, 0.1, "time step"),
    "t_end": (float, 10.0, "final time"),
    "mu1": (float, 2.75, "inflow value for the rom command"),
    "mu2": (float, 0.0275, "source rate for the rom command"),
    "out_dir": (str, ".", "output directory for fom"),
    "train_data": (str, None, "training snapshots (SNP1 or CSV)"),
    "val_data": (str, None, "validation snapshots (SNP1 or CSV)"),
    "graph": (str, None, "edge list for GCNN"),
    "model": (str, None, "MDL1/POD1 checkpoint, or 'identity'"),
    "output": (str, None, "output file"),
    "report": (str, None, "training report CSV"),
    "params": (str, None, "parameter rows 't,mu1,mu2;...' for predict"),
    "timing": (_bool, True, "write wall-clock columns to CSV outputs"),
}
ALIASES = {"n_l": "N_l", "depth": "N_l"}

COMMAND_KEYS = {
    "fom": ["n_nodes", "a", "b", "dt", "t_end", "sample_every", "store_t0", "out_dir"],
    "pod": ["train_data", "n", "centering", "output"],
    "train": ["train_data", "val_data", "arch", "task", "n", "lr", "batch", "early_stop",
              "max_epochs", "seed", "N_l", "prediction_depth", "mode", "graph", "problem",
              "output", "report", "timing"],
    "eval": ["model", "val_data", "task", "output", "timing", "n_nodes", "a", "b", "dt", "t_end"],
    "rom": ["model", "mu1", "mu2", "n_nodes", "a", "b", "dt", "t_end", "output"],
    "predict": ["model", "params", "val_data", "output"],
}
REQUIRED = {
    "pod": ["train_data", "output"],
    "train": ["train_data", "val_data", "output"],
    "eval": ["model", "val_data"],
    "rom": ["model", "output"],
    "predict": ["model", "output"],
}


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def resolve(command, file_values, flag_values):
    """Typed settings for ``command``: defaults < config file < flags."""
    settings = {}
    for key in COMMAND_KEYS[command]:
        kind, default, _ = KEYS[key]
        raw = flag_values.get(key)
        if raw is None:
            raw = file_values.get(key, default)
        if raw is not None:
            try:
                raw = kind(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from None
        settings[key] = raw
    missing = [k for k in REQUIRED.get(command, []) if settings.get(k) is None]
    if missing:
        raise ConfigError(f"{command}: missing required setting(s) {', '.join(missing)}")
    return settings


def _flag(key):
    return "--" + key.lower().replace("_", "-")


def build_parser():
    parser = argparse.ArgumentParser(prog="romforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fom": "generate Burgers training/validation snapshots",
        "pod": "fit a POD basis",
        "train": "train an autoencoder ROM",
        "eval": "compute reconstruction metrics",
        "rom": "run the Burgers POD-Galerkin ROM for one parameter",
        "predict": "evaluate a trained ROM at new parameters",
    }
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="key = value settings file")
        for key in keys:
            kind, default, text = KEYS[key]
            if kind is _bool:
                p.add_argument(_flag(key), dest=key, nargs="?", const="true", default=None,
                               help=f"{text} (default {default})")
            else:
                p.add_argument(_flag(key), dest=key, default=None,
                               help=text + ("" if default is None else f" (default {default})"))
    return parser


def threads():
    raw = os.environ.get("ROMFORGE_THREADS", "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"ROMFORGE_THREADS must be an integer, got {raw!r}") from None
    return max(1, value)


def load_snapshots(path, role="train"):
    with open_check(path) as fh:
        head = fh.read(4)
    if head == b"SNP1":
        return read_snp(path, role)
    if path.lower().endswith(".csv"):
        return read_csv(path, role)
    raise FormatError(f"{path}: not an SNP1 or CSV snapshot file")


def open_check(path):
    try:
        return open(path, "rb")
    except OSError as exc:
        raise FormatError(f"cannot open {path}: {exc}") from exc


def load_model(path):
    if path == "identity":
        return IdentityModel(), None, None
    with open_check(path) as fh:
        head = fh.read(4)
    if head == MDL_MAGIC:
        return read_model(path), None, os.path.getsize(path)
    if head == POD_MAGIC:
        return None, read_pod(path), os.path.getsize(path)
    raise FormatError(f"{path}: unknown checkpoint magic {head!r}")


def burgers_cfg(s, n_nodes=None, mu=(2.0, 0.015)):
    return BurgersConfig(a=s["a"], b=s["b"], n_nodes=n_nodes or s["n_nodes"], t_end=s["t_end"],
                         dt=s["dt"], mu=mu)


def cmd_fom(s):
    cfg = burgers_cfg(s)
    os.makedirs(s["out_dir"], exist_ok=True)
    written = []
    for role, is_train in (("train", True), ("validation", False)):
        data = lattice_snapshots(is_train, cfg, s["sample_every"], s["store_t0"], threads())
        path = os.path.join(s["out_dir"], f"{role}.snp")
        write_snp(data, path)
        written.append(path)
        log.info("wrote %d %s snapshots to %s", len(data), role, path)
    print("\n".join(written))


def cmd_pod(s):
    data = load_snapshots(s["train_data"])
    basis = pod_fit(data, s["n"], s["centering"])
    write_pod(basis, s["output"])
    print(f"wrote {basis.n}-mode POD basis to {s['output']}")


def _graph_for(s, n_nodes):
    if s["graph"]:
        g = read_edge_list(s["graph"])
        if g.n_nodes != n_nodes:
            raise ShapeError(f"graph has {g.n_nodes} nodes, data has {n_nodes}")
        return g
    if s["problem"] == "burgers":
        return path_graph(n_nodes)
    raise ConfigError("GCNN on generic data needs a 'graph' edge list")


def cmd_train(s):
    train_set = load_snapshots(s["train_data"], "train")
    val_set = load_snapshots(s["val_data"], "validation")
    if train_set.snaps.shape[1:] != val_set.snaps.shape[1:] or \
            train_set.params.shape[1] != val_set.params.shape[1]:
        raise ShapeError("training and validation sets have different sample shapes")
    check_disjoint(train_set, val_set)
    arch = s["arch"].upper()
    if s["task"] not in ("compression", "prediction"):
        raise ConfigError(f"unknown task {s['task']!r}")
    mode = "compression" if s["task"] == "compression" else s["mode"]
    graph = _graph_for(s, train_set.n_nodes) if arch == "GCNN" else None
    spec = ArchitectureSpec(arch, s["n"], train_set.n_nodes, train_set.n_features,
                            train_set.params.shape[1], s["N_l"], s["prediction_depth"],
                            graph=graph)
    nets = build_networks(spec, s["seed"])
    cfg = TrainConfig(lr=s["lr"] or DEFAULT_LR[arch], batch_size=s["batch"],
                      early_stop=s["early_stop"], max_epochs=s["max_epochs"], seed=s["seed"],
                      mode=mode)
    stats = fit_normalizer(train_set)
    report = train(nets, normalize(train_set, stats), normalize(val_set, stats), cfg)
    meta = {"task": s["task"], "mode": mode, "epochs": report.epochs,
            "best_val": repr(report.best_val)}
    if s["timing"]:
        meta["seconds_per_epoch"] = f"{report.seconds_per_epoch:.6g}"
    size = write_model(s["output"], nets, stats, meta)
    if s["report"]:
        report.write_csv(s["report"], timing=s["timing"])
    print(f"wrote {spec.kind} model ({size} bytes) to {s['output']}; "
          f"{report.epochs} epochs, best validation loss {report.best_val:.6g}")


def cmd_eval(s):
    loaded, basis, size = load_model(s["model"])
    data = load_snapshots(s["val_data"], "validation")
    spe = None
    if basis is not None:
        model, stats = basis, None
    elif isinstance(loaded, IdentityModel):
        model, stats = loaded, None
    else:
        model, stats = loaded.nets, loaded.stats
        if s["timing"] and "seconds_per_epoch" in loaded.meta:
            spe = float(loaded.meta["seconds_per_epoch"])
    fom_cfg = burgers_cfg(s, data.n_nodes) if basis is not None else None
    rec = evaluate(model, data, s["task"], stats, size, spe, fom_cfg)
    if s["output"]:
        write_metrics_csv([rec], s["output"])
    print(f"{rec.method} n={rec.n} {rec.task}: Rl1={rec.rl1:.4g}% Rl2={rec.rl2:.4g}%")


def cmd_rom(s):
    basis = read_pod(s["model"])
    cfg = burgers_cfg(s, basis.n_nodes, (s["mu1"], s["mu2"]))
    times, states = galerkin_trajectory(basis, cfg)
    try:
        with open(s["output"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"w_{i}" for i in range(states.shape[1])])
            for t, row in zip(times, states):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise FormatError(f"cannot write {s['output']}: {exc}") from exc
    print(f"wrote {len(times)} ROM states to {s['output']}")


def _parse_params(text):
    try:
        rows = [[float(v) for v in chunk.split(",")] for chunk in text.split(";") if chunk.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse parameter rows {text!r}") from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError("parameter rows must be non-empty and equally long")
    return np.array(rows)


def cmd_predict(s):
    loaded, basis, _ = load_model(s["model"])
    if s["params"]:
        params = _parse_params(s["params"])
    elif s["val_data"]:
        params = load_snapshots(s["val_data"], "validation").params
    else:
        raise ConfigError("predict needs 'params' or 'val_data'")
    if basis is not None:
        n_nodes, n_f = basis.n_nodes, basis.n_features
        model, stats = basis, None
    elif isinstance(loaded, IdentityModel):
        raise ConfigError("the identity model cannot predict")
    else:
        model, stats = loaded.nets, loaded.stats
        n_nodes, n_f = model.spec.n_nodes, model.spec.n_features
        if params.shape[1] != model.spec.n_params:
            raise ShapeError(f"model expects {model.spec.n_params} parameters, got {params.shape[1]}")
    query = SnapshotSet(params, np.zeros((len(params), n_nodes, n_f)), "validation")
    out = reconstruct(model, query, "prediction", stats)
    write_csv(SnapshotSet(params, out, "validation"), s["output"])
    print(f"wrote {len(params)} predictions to {s['output']}")


COMMANDS = {"fom": cmd_fom, "pod": cmd_pod, "train": cmd_train, "eval": cmd_eval,
            "rom": cmd_rom, "predict": cmd_predict}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = read_config(args.config) if args.config else {}
        flags = {k: v for k, v in vars(args).items() if k in KEYS and v is not None}
        settings = resolve(args.command, file_values, flags)
        COMMANDS[args.command](settings)
    except RomforgeError as exc:
        print(f"romforge: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
