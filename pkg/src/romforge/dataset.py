"""Snapshot storage, min-max normalisation and shuffled mini-batching.

On-disk format ``SNP1``::

    b"SNP1" | u64 LE x4: N_s, N, n_f, n_params | params f64 LE | snaps f64 LE

Both arrays are row-major. A CSV mirror (header row, parameter columns
first) is provided for interchange.
"""
import csv
import logging
import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from romforge.errors import FormatError, ShapeError

log = logging.getLogger(__name__)

SNP_MAGIC = b"SNP1"


@dataclass(eq=False)
class SnapshotSet:
    params: np.ndarray  # (N_s, n_mu + 1), column 0 is time
    snaps: np.ndarray  # (N_s, N, n_f)
    role: str = "train"

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        self.snaps = np.ascontiguousarray(self.snaps, dtype=np.float64)
        if self.snaps.ndim == 2:
            self.snaps = self.snaps[:, :, None]
        if self.params.ndim != 2 or self.snaps.ndim != 3:
            raise ShapeError("params must be 2-D and snaps 3-D")
        if self.params.shape[0] != self.snaps.shape[0]:
            raise ShapeError(
                f"{self.params.shape[0]} parameter rows but {self.snaps.shape[0]} snapshots"
            )
        if self.role not in ("train", "validation"):
            raise ValueError(f"unknown role {self.role!r}")

    def __len__(self):
        return self.snaps.shape[0]

    @property
    def n_nodes(self):
        return self.snaps.shape[1]

    @property
    def n_features(self):
        return self.snaps.shape[2]

    def subset(self, idx):
        return SnapshotSet(self.params[idx], self.snaps[idx], self.role)


class NormStats(NamedTuple):
    m_min: np.ndarray
    m_max: np.ndarray
    s_min: np.ndarray
    s_max: np.ndarray


class Batch(NamedTuple):
    params: np.ndarray
    snaps: np.ndarray


def fit_normalizer(train):
    if len(train) == 0:
        raise ShapeError("cannot fit a normaliser on an empty set")
    return NormStats(
        train.params.min(axis=0),
        train.params.max(axis=0),
        train.snaps.min(axis=0),
        train.snaps.max(axis=0),
    )


def _scale(x, lo, hi):
    span = hi - lo
    ok = span > 0
    return np.where(ok, (x - lo) / np.where(ok, span, 1.0), 0.0)


def _unscale(y, lo, hi):
    return lo + y * (hi - lo)


def normalize(x, stats):
    if x.params.shape[1:] != stats.m_min.shape or x.snaps.shape[1:] != stats.s_min.shape:
        raise ShapeError("snapshot set does not match the normalisation statistics")
    return SnapshotSet(
        _scale(x.params, stats.m_min, stats.m_max),
        _scale(x.snaps, stats.s_min, stats.s_max),
        x.role,
    )


def denormalize(x, stats):
    return SnapshotSet(
        _unscale(x.params, stats.m_min, stats.m_max),
        _unscale(x.snaps, stats.s_min, stats.s_max),
        x.role,
    )


def denormalize_snaps(y, stats):
    return _unscale(np.asarray(y), stats.s_min, stats.s_max)


def normalize_snaps(x, stats):
    return _scale(np.asarray(x, dtype=np.float64), stats.s_min, stats.s_max)


def normalize_params(p, stats):
    return _scale(np.asarray(p, dtype=np.float64), stats.m_min, stats.m_max)


def shuffle_batches(data, n_b, rng):
    """Shuffle consistently and split into ceil(N/n_b) batches; the last may be short."""
    if n_b < 1:
        raise ValueError("batch size must be >= 1")
    perm = rng.permutation(len(data))
    return [
        Batch(data.params[perm[i:i + n_b]], data.snaps[perm[i:i + n_b]])
        for i in range(0, len(data), n_b)
    ]


def check_disjoint(train, val, columns=slice(1, None)):
    """Warn when a parameter vector appears in both sets."""
    seen = {tuple(r) for r in train.params[:, columns]}
    shared = {tuple(r) for r in val.params[:, columns]} & seen
    if shared:
        log.warning("%d parameter vectors appear in both training and validation data", len(shared))
    return not shared


def write_snp(data, path):
    n_s, n, n_f = data.snaps.shape
    header = SNP_MAGIC + struct.pack("<4Q", n_s, n, n_f, data.params.shape[1])
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(data.params.astype("<f8").tobytes())
            fh.write(data.snaps.astype("<f8").tobytes())
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def read_snp(path, role="train"):
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != SNP_MAGIC:
                raise FormatError(f"{path}: bad magic {magic!r}, expected {SNP_MAGIC!r}")
            dims = fh.read(32)
            if len(dims) != 32:
                raise FormatError(f"{path}: truncated header")
            n_s, n, n_f, n_p = struct.unpack("<4Q", dims)
            body = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    expected = 8 * (n_s * n_p + n_s * n * n_f)
    if len(body) != expected:
        raise FormatError(f"{path}: body has {len(body)} bytes, expected {expected}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    params = flat[: n_s * n_p].reshape(n_s, n_p)
    snaps = flat[n_s * n_p:].reshape(n_s, n, n_f)
    return SnapshotSet(params, snaps, role)


def write_csv(data, path):
    n_p = data.params.shape[1]
    _, n, n_f = data.snaps.shape
    header = [f"param_{j}" for j in range(n_p)]
    header += [f"x_{i}_{f}" for i in range(n) for f in range(n_f)]
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for p, s in zip(data.params, data.snaps):
                w.writerow([repr(float(v)) for v in p] + [repr(float(v)) for v in s.ravel()])
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def read_csv(path, role="train"):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: empty file")
    header = rows[0]
    n_p = sum(1 for h in header if h.startswith("param_"))
    cells = [h.split("_") for h in header[n_p:]]
    try:
        n = max(int(c[1]) for c in cells) + 1
        n_f = max(int(c[2]) for c in cells) + 1
        body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed CSV ({exc})") from exc
    body = body.reshape(-1, n_p + n * n_f)
    return SnapshotSet(body[:, :n_p], body[:, n_p:].reshape(-1, n, n_f), role)


def flatten_samples(x):
    """(B, N, n_f) -> (B, n_f * N), feature j occupying columns jN..(j+1)N-1."""
    x = np.asarray(x)
    return np.ascontiguousarray(x.transpose(0, 2, 1).reshape(x.shape[0], -1))


def unflatten_samples(v, n_nodes, n_features):
    v = np.asarray(v)
    if v.shape[-1] != n_nodes * n_features:
        raise ShapeError(f"cannot reshape length {v.shape[-1]} to ({n_nodes}, {n_features})")
    return np.ascontiguousarray(v.reshape(-1, n_features, n_nodes).transpose(0, 2, 1))
