"""Encoder, decoder and prediction networks for the three autoencoder ROMs.

All three take samples shaped (batch, N, n_f) and latent codes shaped
(batch, n); the predictor maps parameter rows (t, mu...) to latent codes.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from romforge.errors import ConfigError, ShapeError
from romforge.graph import Graph, propagation_matrix
from romforge.nn import tensor as T
from romforge.nn.layers import (
    BatchNorm,
    Conv2d,
    Dense,
    FlattenNodes,
    FromImage,
    Gcn2Stack,
    Reshape,
    Sequential,
    ToImage,
    UnflattenNodes,
)
from romforge.rng import Xoshiro256

KINDS = ("FCNN", "CNN", "GCNN")
PRED_WIDTH = 50
GCN2_ALPHA = 0.2
GCN2_THETA = 1.5
CNN_KERNEL = 5


@dataclass
class ArchitectureSpec:
    kind: str
    n: int
    n_nodes: int
    n_features: int = 1
    n_params: int = 3  # n_mu + 1, time included
    depth: int = 4  # GCN2 layers per stack
    prediction_depth: Optional[int] = None
    hidden: Optional[int] = None  # FCNN width
    graph: Optional[Graph] = None

    def __post_init__(self):
        self.kind = self.kind.upper()
        if self.kind not in KINDS:
            raise ConfigError(f"unknown architecture {self.kind!r}; choose from {KINDS}")
        if self.n < 1 or self.n_nodes < 1 or self.n_features < 1 or self.n_params < 1:
            raise ConfigError("n, N, n_f and the parameter count must all be >= 1")
        if self.depth < 1:
            raise ConfigError("GCN2 depth must be >= 1")
        if self.prediction_depth is None:
            self.prediction_depth = 8 if self.kind == "GCNN" else 4
        if self.prediction_depth < 2:
            raise ConfigError("prediction network needs at least 2 layers")
        if self.kind == "GCNN":
            if self.graph is None:
                raise ConfigError("GCNN architecture needs a graph")
            if self.graph.n_nodes != self.n_nodes:
                raise ShapeError(f"graph has {self.graph.n_nodes} nodes, data has {self.n_nodes}")

    @property
    def fcnn_hidden(self):
        if self.hidden:
            return self.hidden
        dim = self.n_nodes * self.n_features
        return 64 if dim == 256 else math.ceil(dim / 10)

    def header(self):
        hidden = self.hidden if self.hidden else 0
        return (f"kind={self.kind} n={self.n} n_nodes={self.n_nodes} n_features={self.n_features} "
                f"n_params={self.n_params} depth={self.depth} "
                f"prediction_depth={self.prediction_depth} hidden={hidden}")

    @classmethod
    def from_header(cls, text, graph=None):
        fields = dict(item.split("=", 1) for item in text.split())
        try:
            return cls(
                kind=fields["kind"],
                n=int(fields["n"]),
                n_nodes=int(fields["n_nodes"]),
                n_features=int(fields["n_features"]),
                n_params=int(fields["n_params"]),
                depth=int(fields["depth"]),
                prediction_depth=int(fields["prediction_depth"]),
                hidden=int(fields["hidden"]) or None,
                graph=graph,
            )
        except KeyError as exc:
            raise ConfigError(f"architecture header lacks {exc}") from None


class RomNetworks:
    """Encoder h, decoder g and predictor F for one architecture."""

    def __init__(self, spec, encoder, decoder, predictor):
        self.spec = spec
        self.encoder = encoder
        self.decoder = decoder
        self.predictor = predictor

    @property
    def parts(self):
        return {"encoder": self.encoder, "decoder": self.decoder, "predictor": self.predictor}

    def parameters(self):
        return [p for net in self.parts.values() for p in net.parameters()]

    def named_arrays(self):
        """Every saved array (parameters then buffers) under a stable name."""
        out = []
        for part, net in self.parts.items():
            for i, layer in enumerate(net.layers):
                for j, p in enumerate(layer.parameters()):
                    out.append((f"{part}.{i}.{j}.{p.name}", p.data))
                for j, b in enumerate(layer.buffers()):
                    out.append((f"{part}.{i}.buffer{j}", b))
        return out

    def train(self, mode=True):
        for net in self.parts.values():
            net.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def encode(self, x):
        return self.encoder(x)

    def decode(self, z):
        return self.decoder(z)

    def predict(self, p):
        return self.predictor(p)

    def manifest_lines(self):
        return [f"layer {part} {line}" for part, net in self.parts.items()
                for line in net.describe_lines()]

    def state(self):
        return [a.copy() for _, a in self.named_arrays()]

    def load_state(self, arrays):
        targets = self.named_arrays()
        if len(arrays) != len(targets):
            raise ShapeError(f"state has {len(arrays)} arrays, network expects {len(targets)}")
        for (name, dst), src in zip(targets, arrays):
            if dst.shape != np.shape(src):
                raise ShapeError(f"{name}: shape {np.shape(src)} != {dst.shape}")
            dst[...] = src


def parameter_count(nets):
    return int(sum(p.data.size for p in nets.parameters()))


def _predictor(spec, rng, final_activation):
    widths = [spec.n_params] + [PRED_WIDTH] * (spec.prediction_depth - 1) + [spec.n]
    layers = []
    for i in range(spec.prediction_depth):
        act = final_activation if i == spec.prediction_depth - 1 else "elu"
        layers.append(Dense(widths[i], widths[i + 1], act, rng))
    return Sequential(layers)


def build_fcnn(spec, seed=0):
    if spec.kind != "FCNN":
        raise ConfigError(f"build_fcnn got a {spec.kind} spec")
    rng = Xoshiro256(seed)
    dim = spec.n_nodes * spec.n_features
    h = spec.fcnn_hidden
    encoder = Sequential([
        FlattenNodes(spec.n_nodes, spec.n_features),
        Dense(dim, h, "elu", rng),
        BatchNorm(h),
        Dense(h, spec.n, "elu", rng),
    ])
    decoder = Sequential([
        Dense(spec.n, h, "elu", rng),
        BatchNorm(h),
        Dense(h, dim, "elu", rng),
        UnflattenNodes(spec.n_nodes, spec.n_features),
    ])
    return RomNetworks(spec, encoder, decoder, _predictor(spec, rng, "elu"))


def image_side(n_nodes):
    """Smallest 2^m with 4^m >= N."""
    m = 0
    while 4 ** m < n_nodes:
        m += 1
    return 2 ** m


def cnn_plan(n_nodes, n_f):
    """Encoder and decoder convolution plans as (c_in, c_out, stride) lists.

    A single-feature 16x16 image uses the fixed 8-16-32-64 channel ladder
    with an initial stride-1 layer. Otherwise every layer has stride 2 and
    multiplies the channels by 4 until the image is 4x4; the decoder
    retraces the encoder's channel counts.
    """
    side = image_side(n_nodes)
    if n_f == 1 and side == 16:
        enc = [(1, 8, 1), (8, 16, 2), (16, 32, 2), (32, 64, 2)]
        dec = [(64, 64, 2), (64, 32, 2), (32, 16, 2), (16, 1, 1)]
        return side, enc, dec
    enc, c, s = [], n_f, side
    while s > 4:
        enc.append((c, 4 * c, 2))
        c, s = 4 * c, s // 2
    if not enc:
        enc.append((c, 4 * c, 1))
    dec = [(c_out, c_in, st) for c_in, c_out, st in reversed(enc)]
    return side, enc, dec


def build_cnn(spec, seed=0):
    if spec.kind != "CNN":
        raise ConfigError(f"build_cnn got a {spec.kind} spec")
    rng = Xoshiro256(seed)
    side, enc_plan, dec_plan = cnn_plan(spec.n_nodes, spec.n_features)
    convs, shape = [], (spec.n_features, side, side)
    for c_in, c_out, s in enc_plan:
        layer = Conv2d(c_in, c_out, CNN_KERNEL, s, "same", False, "elu", rng)
        shape = layer.output_shape(shape)
        convs.append(layer)
    flat = int(np.prod(shape))
    encoder = Sequential([ToImage(spec.n_nodes, spec.n_features, side), *convs,
                          Reshape((flat,)), Dense(flat, spec.n, "elu", rng)])
    dconvs = [Conv2d(c_in, c_out, CNN_KERNEL, s, "same", True, "elu", rng)
              for c_in, c_out, s in dec_plan]
    decoder = Sequential([Dense(spec.n, flat, "elu", rng), Reshape(shape), *dconvs,
                          FromImage(spec.n_nodes, spec.n_features, side)])
    return RomNetworks(spec, encoder, decoder, _predictor(spec, rng, "elu"))


def build_gcnn(spec, seed=0):
    if spec.kind != "GCNN":
        raise ConfigError(f"build_gcnn got a {spec.kind} spec")
    rng = Xoshiro256(seed)
    prop = propagation_matrix(spec.graph)
    dim = spec.n_nodes * spec.n_features
    encoder = Sequential([
        Gcn2Stack(prop, spec.n_features, spec.depth, GCN2_ALPHA, GCN2_THETA, 0, rng),
        FlattenNodes(spec.n_nodes, spec.n_features),
        Dense(dim, spec.n, "identity", rng),
    ])
    decoder = Sequential([
        Dense(spec.n, dim, "identity", rng),
        UnflattenNodes(spec.n_nodes, spec.n_features),
        Gcn2Stack(prop, spec.n_features, spec.depth, GCN2_ALPHA, GCN2_THETA, spec.depth, rng),
    ])
    return RomNetworks(spec, encoder, decoder, _predictor(spec, rng, "identity"))


BUILDERS = {"FCNN": build_fcnn, "CNN": build_cnn, "GCNN": build_gcnn}


def build_networks(spec, seed=0):
    return BUILDERS[spec.kind](spec, seed)


def conv_shape_chain(nets):
    """``(label, input_shape, output_shape)`` for every conv layer of a CNN."""
    rows = []
    for part, prefix in ((nets.encoder, "C"), (nets.decoder, "TC")):
        shape, count = None, 0
        for layer in part.layers:
            if isinstance(layer, ToImage) and not isinstance(layer, FromImage):
                shape = (layer.n_f, layer.side, layer.side)
            elif isinstance(layer, Reshape) and len(layer.shape) == 3:
                shape = layer.shape
            elif isinstance(layer, Conv2d):
                out = layer.output_shape(shape)
                count += 1
                rows.append((f"{count}-{prefix}", shape, out))
                shape = out
    return rows


def plan_shape_chain(n_nodes, n_f, kernel=CNN_KERNEL, padding="same"):
    """Conv shape rows for :func:`cnn_plan` without allocating any weights."""
    side, enc, dec = cnn_plan(n_nodes, n_f)
    rows, shape = [], (n_f, side, side)
    for i, (_, c_out, s) in enumerate(enc, 1):
        h = T.conv_out_size(shape[1], kernel, s, padding)
        w = T.conv_out_size(shape[2], kernel, s, padding)
        rows.append((f"{i}-C", shape, (c_out, h, w)))
        shape = (c_out, h, w)
    for i, (_, c_out, s) in enumerate(dec, 1):
        h = T.conv_transpose_out_size(shape[1], kernel, s, padding)
        w = T.conv_transpose_out_size(shape[2], kernel, s, padding)
        rows.append((f"{i}-TC", shape, (c_out, h, w)))
        shape = (c_out, h, w)
    return rows


def flatten(x):
    """Feature-major flatten of one (N, n_f) sample."""
    x = np.asarray(x)
    return x.T.reshape(-1).copy()


def reshape(v, n_nodes, n_f):
    v = np.asarray(v)
    if v.size != n_nodes * n_f:
        raise ShapeError(f"cannot reshape length {v.size} to ({n_nodes}, {n_f})")
    return v.reshape(n_f, n_nodes).T.copy()


def forward_numpy(net, x):
    return net(T.Tensor(x)).data
