"""A small reverse-mode autodiff tape over numpy arrays.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. The tape is
rebuilt on every forward pass.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from romforge.errors import DivergenceError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, data, requires_grad=False, name=None, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn):
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, needs, parents=parents if needs else (), backward_fn=backward_fn if needs else None)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def backward(loss, params=None):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf on the tape.

    Leaves in ``params`` that the loss does not depend on get zero grads.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if params is not None:
        for p in params:
            p.grad = np.zeros_like(p.data)
    if not loss.requires_grad:
        return

    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# -- elementwise and reductions ---------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def power(a, p):
    a = as_tensor(a)
    return _node(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def square(a):
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / count)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if b.ndim > 1 else np.multiply.outer(g, b.data)
        gb = np.swapaxes(a.data, -1, -2) @ g if a.ndim > 1 else np.multiply.outer(a.data, g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), bw)


def reshape(a, shape):
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return _node(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def pad_last(a, length):
    """Zero-pad the last axis up to ``length``."""
    a = as_tensor(a)
    n = a.shape[-1]
    if length < n:
        raise ShapeError(f"cannot pad length {n} down to {length}")
    width = [(0, 0)] * (a.ndim - 1) + [(0, length - n)]
    return _node(np.pad(a.data, width), (a,), lambda g: (g[..., :n],))


def truncate_last(a, length):
    a = as_tensor(a)
    n = a.shape[-1]

    def bw(g):
        out = np.zeros(a.shape)
        out[..., :length] = g
        return (out,)

    return _node(a.data[..., :length].copy(), (a,), bw)


# -- activations ---------------------------------------------------------------


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def elu(a, alpha=1.0):
    a = as_tensor(a)
    pos = a.data > 0
    neg_exp = np.exp(np.minimum(a.data, 0.0))
    out = np.where(pos, a.data, alpha * (neg_exp - 1.0))
    return _node(out, (a,), lambda g: (g * np.where(pos, 1.0, alpha * neg_exp),))


def identity(a):
    return as_tensor(a)


ACTIVATIONS = {"elu": elu, "relu": relu, "identity": identity}


def activation(kind, x):
    try:
        return ACTIVATIONS[kind.lower()](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


# -- graph propagation -----------------------------------------------------------


def propagate(op, x):
    """Apply a sparse (N, N) operator to every sample of ``x`` shaped (B, N, F)."""
    x = as_tensor(x)
    b, n, f = x.shape
    if op.n != n:
        raise ShapeError(f"operator has {op.n} nodes, signal has {n}")
    op_t = getattr(op, "transposed", None) or op

    def apply(mat, arr):
        flat = np.ascontiguousarray(arr.transpose(1, 0, 2).reshape(n, b * f))
        return mat.matmat(flat).reshape(n, b, f).transpose(1, 0, 2)

    return _node(apply(op, x.data), (x,), lambda g: (apply(op_t, g),))


# -- convolution -----------------------------------------------------------------


def same_pads(size, k, s):
    """TF-style SAME: output ceil(size/s); odd total padding goes on the high side."""
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2


def conv_out_size(size, k, s, padding):
    if padding == "same":
        return -(-size // s)
    if size < k:
        raise ShapeError(f"kernel {k} larger than input {size}")
    return 1 + (size - k) // s


def _pads(hw, kernel_hw, s, padding):
    if padding == "same":
        return [same_pads(n, k, s) for n, k in zip(hw, kernel_hw)]
    return [(0, 0), (0, 0)]


def _windows(xp, kernel_hw, s, out_hw):
    w = sliding_window_view(xp, kernel_hw, axis=(2, 3))
    return w[:, :, : s * (out_hw[0] - 1) + 1 : s, : s * (out_hw[1] - 1) + 1 : s]


def _conv_fwd(x, wf, s, pads, out_hw):
    xp = np.pad(x, [(0, 0), (0, 0), pads[0], pads[1]])
    win = _windows(xp, wf.shape[2:], s, out_hw)
    y = np.tensordot(win, wf, axes=([1, 4, 5], [1, 2, 3]))  # (B, Ho, Wo, O)
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2)), win


def _conv_adj(g, wf, s, pads, in_hw):
    """Adjoint of :func:`_conv_fwd` with respect to its input."""
    b, _, ho, wo = g.shape
    kh, kw = wf.shape[2:]
    hp, wp = in_hw[0] + sum(pads[0]), in_hw[1] + sum(pads[1])
    dxp = np.zeros((b, wf.shape[1], hp, wp))
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(g, wf[:, :, i, j], axes=([1], [0]))  # (B, Ho, Wo, C)
            dxp[:, :, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += \
                contrib.transpose(0, 3, 1, 2)
    return dxp[:, :, pads[0][0] : pads[0][0] + in_hw[0], pads[1][0] : pads[1][0] + in_hw[1]]


def conv2d(x, w, bias=None, stride=1, padding="same"):
    """Multi-channel 2-D convolution with a flipped kernel.

    ``y[b,o,a,c] = sum_{i,p,q} xpad[b,i,s*a+p,s*c+q] * w[o,i,L-1-p,M-1-q] + bias[o]``;
    ``w`` has shape (C_out, C_in, L, M).
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d input {x.shape} incompatible with kernel {w.shape}")
    kh, kw = w.shape[2:]
    if padding == "same" and (kh % 2 == 0 or kw % 2 == 0):
        raise ShapeError("SAME padding needs odd kernel dimensions")
    in_hw = x.shape[2:]
    out_hw = tuple(conv_out_size(n, k, stride, padding) for n, k in zip(in_hw, (kh, kw)))
    pads = _pads(in_hw, (kh, kw), stride, padding)
    wf = w.data[:, :, ::-1, ::-1]
    y, win = _conv_fwd(x.data, wf, stride, pads, out_hw)
    parents = (x, w)
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data[None, :, None, None]
        parents = (x, w, bias)

    def bw(g):
        gx = _conv_adj(g, wf, stride, pads, in_hw) if x.requires_grad else None
        gw = None
        if w.requires_grad:
            gwf = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # (O, C, L, M)
            gw = np.ascontiguousarray(gwf[:, :, ::-1, ::-1])
        out = [gx, gw]
        if bias is not None:
            out.append(g.sum(axis=(0, 2, 3)))
        return out

    return _node(y, parents, bw)


def conv_transpose_out_size(size, k, s, padding):
    """SAME: ``size * s`` (equivalently padding (k-1)/2 with output_padding s-1)."""
    if padding == "same":
        return size * s
    return (size - 1) * s + k


def conv2d_transpose(x, w, bias=None, stride=1, padding="same"):
    """Transposed convolution: the exact adjoint of :func:`conv2d`.

    ``w`` has shape (C_out, C_in, L, M) for this layer's own channels; the
    forward convolution it transposes maps C_out channels to C_in with
    kernel ``w.transpose(1, 0, 2, 3)``.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d_transpose input {x.shape} incompatible with kernel {w.shape}")
    kh, kw = w.shape[2:]
    if padding == "same" and (kh % 2 == 0 or kw % 2 == 0):
        raise ShapeError("SAME padding needs odd kernel dimensions")
    in_hw = x.shape[2:]
    out_hw = tuple(conv_transpose_out_size(n, k, stride, padding) for n, k in zip(in_hw, (kh, kw)))
    pads = _pads(out_hw, (kh, kw), stride, padding)
    # forward conv (C_out -> C_in) kernel, flipped, is w.T[:, :, ::-1, ::-1]
    wf = w.data.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    y = _conv_adj(x.data, wf, stride, pads, out_hw)
    parents = (x, w)
    if bias is not None:
        bias = as_tensor(bias)
        y = y + bias.data[None, :, None, None]
        parents = (x, w, bias)

    def bw(g):
        gx, gw = None, None
        if x.requires_grad or w.requires_grad:
            gx, win = _conv_fwd(g, wf, stride, pads, in_hw)
        if w.requires_grad:
            # d/dwf[i, o, p, q] = sum x[b, i, a, c] * gpad_window[b, o, a, c, p, q]
            gwf = np.tensordot(x.data, win, axes=([0, 2, 3], [0, 2, 3]))  # (C_in, C_out, L, M)
            gw = np.ascontiguousarray(gwf[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        out = [gx if x.requires_grad else None, gw]
        if bias is not None:
            out.append(g.sum(axis=(0, 2, 3)))
        return out

    return _node(y, parents, bw)


def check_finite(t, what="loss"):
    if not np.all(np.isfinite(t.data)):
        raise DivergenceError(f"non-finite {what}")
    return t
