"""``MDL1`` model checkpoints.

Layout::

    b"MDL1" | u64 LE manifest length | manifest (UTF-8) | f64 LE blobs

The manifest is line oriented: an ``arch`` line holding the architecture
header, ``meta key=value`` lines, one ``layer`` line per layer (checked on
load against the rebuilt network) and one ``blob <name> <shape>`` line per
array, in the order the blobs follow. Normalisation statistics and, for
graph networks, the edge list travel as blobs too.
"""
import struct

import numpy as np

from romforge.architectures import ArchitectureSpec, build_networks
from romforge.dataset import NormStats
from romforge.errors import FormatError
from romforge.graph import from_edges

MDL_MAGIC = b"MDL1"


def _shape_text(a):
    return "x".join(map(str, a.shape)) if a.ndim else "scalar"


def _parse_shape(text):
    return () if text == "scalar" else tuple(int(v) for v in text.split("x"))


def write_model(path, nets, stats=None, meta=None):
    """Serialise ``nets`` (and optional normalisation stats) and return the byte count."""
    spec = nets.spec
    blobs = list(nets.named_arrays())
    if stats is not None:
        blobs += [(f"norm.{k}", np.asarray(v, dtype=np.float64)) for k, v in stats._asdict().items()]
    if spec.graph is not None:
        blobs.append(("graph.edges", np.array(spec.graph.edges, dtype=np.float64).reshape(-1, 3)))
    lines = ["romforge-model 1", f"arch {spec.header()}"]
    lines += [f"meta {k}={v}" for k, v in sorted((meta or {}).items())]
    lines += nets.manifest_lines()
    lines += [f"blob {name} {_shape_text(np.asarray(a))}" for name, a in blobs]
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MDL_MAGIC)
            fh.write(struct.pack("<Q", len(manifest)))
            fh.write(manifest)
            for _, a in blobs:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
            return fh.tell()
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


class LoadedModel:
    def __init__(self, nets, stats, meta, size):
        self.nets = nets
        self.stats = stats
        self.meta = meta
        self.size = size


def read_model(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if raw[:4] != MDL_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {MDL_MAGIC!r}")
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated header")
    (length,) = struct.unpack("<Q", raw[4:12])
    try:
        lines = raw[12:12 + length].decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: manifest is not UTF-8") from exc
    body = raw[12 + length:]

    arch, meta, layers, entries = None, {}, [], []
    for ln in lines:
        tag, _, rest = ln.partition(" ")
        if tag == "arch":
            arch = rest
        elif tag == "meta":
            k, _, v = rest.partition("=")
            meta[k] = v
        elif tag == "layer":
            layers.append(ln)
        elif tag == "blob":
            name, shape = rest.split()
            entries.append((name, _parse_shape(shape)))
    if arch is None:
        raise FormatError(f"{path}: manifest has no arch line")

    total = sum(int(np.prod(s)) for _, s in entries)
    if len(body) != 8 * total:
        raise FormatError(f"{path}: {len(body)} blob bytes, manifest describes {8 * total}")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    arrays, offset = {}, 0
    order = []
    for name, shape in entries:
        size = int(np.prod(shape))
        arrays[name] = flat[offset:offset + size].reshape(shape)
        order.append(name)
        offset += size

    graph = None
    fields = dict(item.split("=", 1) for item in arch.split())
    if "graph.edges" in arrays:
        graph = from_edges(int(fields["n_nodes"]), arrays["graph.edges"].tolist())
    spec = ArchitectureSpec.from_header(arch, graph)
    nets = build_networks(spec)
    if nets.manifest_lines() != layers:
        raise FormatError(f"{path}: layer list does not match the rebuilt {spec.kind} network")
    names = [n for n, _ in nets.named_arrays()]
    missing = [n for n in names if n not in arrays]
    if missing:
        raise FormatError(f"{path}: missing blobs {missing[:3]}")
    nets.load_state([arrays[n] for n in names])
    nets.eval()

    stats = None
    if "norm.m_min" in arrays:
        stats = NormStats(*(arrays[f"norm.{k}"] for k in NormStats._fields))
    return LoadedModel(nets, stats, meta, len(raw))
