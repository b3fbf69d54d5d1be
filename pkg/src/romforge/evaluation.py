"""Relative reconstruction errors and per-method evaluation records."""
import csv
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from romforge.architectures import RomNetworks
from romforge.dataset import denormalize_snaps, normalize_params, normalize_snaps
from romforge.errors import ConfigError, FormatError, ShapeError
from romforge.nn.tensor import Tensor
from romforge.pod import PodBasis, galerkin_predict, pod_compress

TASKS = ("prediction", "compression")
METRIC_COLUMNS = ["Method", "n", "Rℓ1%", "Rℓ2%", "Size (kB)", "Time per Epoch (s)"]


def relative_errors(x, x_rec):
    """Summed relative l1 and l2 errors over samples, in percent."""
    x = np.asarray(x, dtype=np.float64)
    x_rec = np.asarray(x_rec, dtype=np.float64)
    if x.shape != x_rec.shape:
        raise ShapeError(f"samples {x.shape} and reconstructions {x_rec.shape} differ")
    d = (x - x_rec).reshape(x.shape[0], -1)
    ref = x.reshape(x.shape[0], -1)
    den1 = np.abs(ref).sum()
    den2 = np.linalg.norm(ref, axis=1).sum()
    if den1 == 0 or den2 == 0:
        raise ValueError("relative error undefined: all samples are zero")
    return 100.0 * np.abs(d).sum() / den1, 100.0 * np.linalg.norm(d, axis=1).sum() / den2


class IdentityModel:
    """Stand-in autoencoder that returns its input."""

    n = 0


@dataclass
class MetricsRecord:
    method: str
    task: str
    n: int
    rl1: float
    rl2: float
    size_kb: Optional[float] = None
    seconds_per_epoch: Optional[float] = None
    wall_seconds: float = 0.0

    def row(self):
        def fmt(v):
            return "N/A" if v is None else f"{v:.6g}"

        return [self.method, self.n, f"{self.rl1:.6g}", f"{self.rl2:.6g}",
                fmt(self.size_kb), fmt(self.seconds_per_epoch)]


def network_reconstruct(nets, stats, data, task, chunk=200):
    """Denormalised reconstructions ``g(h(x))`` or ``g(F(t, mu))``."""
    nets.eval()
    out = []
    for i in range(0, len(data), chunk):
        if task == "compression":
            z = nets.encode(Tensor(normalize_snaps(data.snaps[i:i + chunk], stats)))
        else:
            z = nets.predict(Tensor(normalize_params(data.params[i:i + chunk], stats)))
        out.append(nets.decode(z).data)
    return denormalize_snaps(np.concatenate(out), stats)


def reconstruct(model, data, task, stats=None, fom_cfg=None):
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; choose from {TASKS}")
    if isinstance(model, IdentityModel):
        return data.snaps.copy()
    if isinstance(model, PodBasis):
        if task == "compression":
            return pod_compress(model, data.snaps, data.params)
        return galerkin_predict(model, data.params, fom_cfg)
    if isinstance(model, RomNetworks):
        if stats is None:
            raise ConfigError("network evaluation needs the normalisation statistics")
        return network_reconstruct(model, stats, data, task)
    raise ConfigError(f"cannot evaluate a {type(model).__name__}")


def method_name(model):
    if isinstance(model, IdentityModel):
        return "identity"
    if isinstance(model, PodBasis):
        return "POD"
    return model.spec.kind


def evaluate(model, data, task, stats=None, size_bytes=None, seconds_per_epoch=None, fom_cfg=None):
    """Metrics in original units for one model on one data set."""
    if model is None:
        raise FormatError("no model to evaluate")
    start = time.perf_counter()
    rec = reconstruct(model, data, task, stats, fom_cfg)
    wall = time.perf_counter() - start
    rl1, rl2 = relative_errors(data.snaps, rec)
    n = model.n if isinstance(model, (PodBasis, IdentityModel)) else model.spec.n
    size_kb = None if size_bytes is None else size_bytes / 1000.0
    return MetricsRecord(method_name(model), task, n, rl1, rl2, size_kb, seconds_per_epoch, wall)


def write_metrics_csv(records, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(METRIC_COLUMNS)
            for r in records:
                w.writerow(r.row())
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc
