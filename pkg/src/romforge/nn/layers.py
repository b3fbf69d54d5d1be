"""Layers built on the autodiff tape.

Each layer owns its parameters as leaf tensors and can describe itself in
one manifest line (``describe``), which the checkpoint format stores so a
reader can confirm it rebuilt the same network.
"""
import math

import numpy as np

from romforge.errors import ConfigError, ShapeError
from romforge.nn import tensor as T
from romforge.rng import Xoshiro256


def glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, int(np.prod(shape))).reshape(shape)


def _param(data, name):
    return T.Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


class Module:
    kind = "module"
    training = True

    def parameters(self):
        return []

    def buffers(self):
        """Non-trainable state saved with the weights."""
        return []

    def train(self, mode=True):
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self):
        return self.train(False)

    def children(self):
        return []

    def describe(self):
        return self.kind

    def __call__(self, x):
        return self.forward(x)


class Sequential(Module):
    kind = "sequential"

    def __init__(self, layers):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def buffers(self):
        return [b for layer in self.layers for b in layer.buffers()]

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def describe_lines(self):
        return [layer.describe() for layer in self.layers]

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]


class Dense(Module):
    """``act(x W^T + b)`` with ``W`` shaped (out, in)."""

    kind = "dense"

    def __init__(self, n_in, n_out, activation="identity", rng=None):
        rng = rng or Xoshiro256(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.w = _param(glorot(rng, (n_out, n_in), n_in, n_out), "w")
        self.b = _param(np.zeros(n_out), "b")

    def parameters(self):
        return [self.w, self.b]

    def forward(self, x):
        x = T.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"dense layer expects last dim {self.n_in}, got {x.shape}")
        return T.activation(self.activation, T.matmul(x, T.transpose(self.w)) + self.b)

    def describe(self):
        return f"dense in={self.n_in} out={self.n_out} act={self.activation}"


class Activation(Module):
    kind = "activation"

    def __init__(self, activation):
        T.activation(activation, np.zeros(1))  # validates the name
        self.activation = activation

    def forward(self, x):
        return T.activation(self.activation, x)

    def describe(self):
        return f"activation act={self.activation}"


class BatchNorm(Module):
    """Batch normalisation over axis 0 of (batch, features) inputs."""

    kind = "batchnorm"

    def __init__(self, features, momentum=0.1, eps=1e-5):
        self.features, self.momentum, self.eps = features, momentum, eps
        self.gamma = _param(np.ones(features), "gamma")
        self.beta = _param(np.zeros(features), "beta")
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [self.running_mean, self.running_var]

    def forward(self, x):
        x = T.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.features:
            raise ShapeError(f"batchnorm expects (batch, {self.features}), got {x.shape}")
        if not self.training:
            scale = 1.0 / np.sqrt(self.running_var + self.eps)
            return (x - self.running_mean) * (scale * self.gamma) + self.beta
        if x.shape[0] < 2:
            raise ShapeError("batchnorm in training mode needs a batch of at least 2")
        mu = T.mean(x, axis=0)
        xc = x - mu
        var = T.mean(T.square(xc), axis=0)
        y = xc * T.power(var + self.eps, -0.5) * self.gamma + self.beta
        m = self.momentum
        self.running_mean[:] = (1 - m) * self.running_mean + m * mu.data
        self.running_var[:] = (1 - m) * self.running_var + m * var.data
        return y

    def describe(self):
        return f"batchnorm features={self.features} momentum={self.momentum!r} eps={self.eps!r}"


class Conv2d(Module):
    """2-D convolution (or its transpose) on (batch, C, H, W) inputs.

    The kernel is (C_out, C_in, k, k) for this layer's own channel counts
    in both directions.
    """

    def __init__(self, c_in, c_out, kernel=5, stride=1, padding="same", transposed=False,
                 activation="identity", rng=None):
        padding = padding.lower()
        if padding not in ("same", "valid"):
            raise ConfigError(f"padding must be SAME or VALID, got {padding!r}")
        if stride < 1:
            raise ConfigError("stride must be >= 1")
        if padding == "same" and kernel % 2 == 0:
            raise ConfigError("SAME padding needs an odd kernel")
        rng = rng or Xoshiro256(0)
        self.c_in, self.c_out, self.k = c_in, c_out, kernel
        self.stride, self.padding, self.transposed = stride, padding, transposed
        self.activation = activation
        shape = (c_out, c_in, kernel, kernel)
        self.w = _param(glorot(rng, shape, c_in * kernel * kernel, c_out * kernel * kernel), "w")
        self.b = _param(np.zeros(c_out), "b")

    @property
    def kind(self):
        return "convT2d" if self.transposed else "conv2d"

    def parameters(self):
        return [self.w, self.b]

    def output_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.c_in:
            raise ShapeError(f"{self.kind} expects {self.c_in} channels, got {c}")
        if self.transposed:
            size = (T.conv_transpose_out_size(n, self.k, self.stride, self.padding) for n in (h, w))
        else:
            size = (T.conv_out_size(n, self.k, self.stride, self.padding) for n in (h, w))
        return (self.c_out, *size)

    def forward(self, x):
        op = T.conv2d_transpose if self.transposed else T.conv2d
        y = op(x, self.w, self.b, self.stride, self.padding)
        return T.activation(self.activation, y)

    def describe(self):
        return (f"{self.kind} in={self.c_in} out={self.c_out} k={self.k} s={self.stride} "
                f"pad={self.padding} act={self.activation}")


def gcn2_beta(theta, ell):
    return math.log(1.0 + theta / ell)


def gcn2(prop, x, x0, w, alpha, beta, activation="relu"):
    """``act[((1-a) P x + a x0)((1-b) I + b W)]`` for (batch, N, n_f) signals."""
    x, x0 = T.as_tensor(x), T.as_tensor(x0)
    if x.shape != x0.shape:
        raise ShapeError(f"x {x.shape} and x0 {x0.shape} differ")
    n_f = x.shape[-1]
    if w.shape != (n_f, n_f):
        raise ShapeError(f"weight {w.shape} does not match {n_f} features")
    h = T.propagate(prop, x) * (1.0 - alpha) + x0 * alpha
    w_eff = T.mul(w, beta) + np.eye(n_f) * (1.0 - beta)
    return T.activation(activation, T.matmul(h, w_eff))


def gcn1(prop, x, w, activation="relu"):
    """``act(P x W)``."""
    return T.activation(activation, T.matmul(T.propagate(prop, x), w))


class Gcn2(Module):
    kind = "gcn2"

    def __init__(self, n_f, alpha=0.2, beta=0.5, rng=None):
        if not 0.0 <= alpha <= 1.0 or beta < 0.0:
            raise ConfigError(f"need 0 <= alpha <= 1 and beta >= 0, got {alpha}, {beta}")
        rng = rng or Xoshiro256(0)
        self.n_f, self.alpha, self.beta = n_f, alpha, beta
        self.w = _param(glorot(rng, (n_f, n_f), n_f, n_f), "w")

    def parameters(self):
        return [self.w]

    def forward_with(self, prop, x, x0):
        return gcn2(prop, x, x0, self.w, self.alpha, self.beta)

    def describe(self):
        return f"gcn2 features={self.n_f} alpha={self.alpha!r} beta={self.beta!r}"


class Gcn2Stack(Module):
    """Consecutive GCN2 layers; the stack's own input is the residual anchor."""

    kind = "gcn2stack"

    def __init__(self, prop, n_f, depth, alpha=0.2, theta=1.5, offset=0, rng=None):
        rng = rng or Xoshiro256(0)
        self.prop = prop
        self.layers = [Gcn2(n_f, alpha, gcn2_beta(theta, offset + ell), rng)
                       for ell in range(1, depth + 1)]

    def children(self):
        return self.layers

    def parameters(self):
        return [l.w for l in self.layers]

    def forward(self, x):
        x0 = T.as_tensor(x)
        if x0.ndim != 3 or x0.shape[1] != self.prop.n:
            raise ShapeError(f"graph has {self.prop.n} nodes, input shape {x0.shape}")
        for layer in self.layers:
            x = layer.forward_with(self.prop, x, x0)
        return x

    def describe(self):
        betas = ",".join(f"{l.beta!r}" for l in self.layers)
        return (f"gcn2stack nodes={self.prop.n} features={self.layers[0].n_f} "
                f"depth={len(self.layers)} alpha={self.layers[0].alpha!r} betas={betas}")


# -- reshaping plumbing ------------------------------------------------------------


class FlattenNodes(Module):
    """(B, N, n_f) -> (B, n_f * N), feature-major."""

    kind = "flatten_nodes"

    def __init__(self, n_nodes, n_f):
        self.n_nodes, self.n_f = n_nodes, n_f

    def forward(self, x):
        x = T.as_tensor(x)
        if x.shape[1:] != (self.n_nodes, self.n_f):
            raise ShapeError(f"expected (*, {self.n_nodes}, {self.n_f}), got {x.shape}")
        return T.reshape(T.transpose(x, (0, 2, 1)), (x.shape[0], self.n_f * self.n_nodes))

    def describe(self):
        return f"flatten_nodes nodes={self.n_nodes} features={self.n_f}"


class UnflattenNodes(FlattenNodes):
    kind = "unflatten_nodes"

    def forward(self, x):
        x = T.as_tensor(x)
        if x.shape[1:] != (self.n_f * self.n_nodes,):
            raise ShapeError(f"cannot reshape {x.shape} to (*, {self.n_nodes}, {self.n_f})")
        return T.transpose(T.reshape(x, (x.shape[0], self.n_f, self.n_nodes)), (0, 2, 1))

    def describe(self):
        return f"unflatten_nodes nodes={self.n_nodes} features={self.n_f}"


class Reshape(Module):
    """Reshape the per-sample part of a batch."""

    kind = "reshape"

    def __init__(self, shape):
        self.shape = tuple(int(s) for s in shape)

    def forward(self, x):
        x = T.as_tensor(x)
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise ShapeError(f"cannot reshape {x.shape[1:]} to {self.shape}")
        return T.reshape(x, (x.shape[0], *self.shape))

    def describe(self):
        return "reshape shape=" + "x".join(map(str, self.shape))


class ToImage(Module):
    """(B, N, n_f) -> zero-pad each feature to side^2 -> (B, n_f, side, side)."""

    kind = "to_image"

    def __init__(self, n_nodes, n_f, side):
        if side * side < n_nodes:
            raise ShapeError(f"side {side} too small for {n_nodes} nodes")
        self.n_nodes, self.n_f, self.side = n_nodes, n_f, side

    def forward(self, x):
        x = T.transpose(T.as_tensor(x), (0, 2, 1))
        x = T.pad_last(x, self.side * self.side)
        return T.reshape(x, (x.shape[0], self.n_f, self.side, self.side))

    def describe(self):
        return f"to_image nodes={self.n_nodes} features={self.n_f} side={self.side}"


class FromImage(ToImage):
    """Inverse of :class:`ToImage`: flatten each channel and truncate to N."""

    kind = "from_image"

    def forward(self, x):
        x = T.as_tensor(x)
        if x.shape[1:] != (self.n_f, self.side, self.side):
            raise ShapeError(f"expected (*, {self.n_f}, {self.side}, {self.side}), got {x.shape}")
        x = T.reshape(x, (x.shape[0], self.n_f, self.side * self.side))
        return T.transpose(T.truncate_last(x, self.n_nodes), (0, 2, 1))

    def describe(self):
        return f"from_image nodes={self.n_nodes} features={self.n_f} side={self.side}"
