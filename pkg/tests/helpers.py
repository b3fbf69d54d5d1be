import numpy as np

from romforge.nn import tensor as T


def numeric_grad(f, arr, h=1e-6):
    """Central differences of the scalar ``f()`` with respect to ``arr`` (perturbed in place)."""
    out = np.zeros_like(arr)
    for i in np.ndindex(arr.shape):
        keep = arr[i]
        arr[i] = keep + h
        up = f()
        arr[i] = keep - h
        down = f()
        arr[i] = keep
        out[i] = (up - down) / (2 * h)
    return out


def rel_err(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return np.linalg.norm(a - b) / scale


def gradcheck(forward, leaves, seed=0, h=1e-6):
    """Worst relative error between tape and finite-difference gradients.

    ``forward()`` must rebuild the graph from the current ``leaves`` data.
    The loss is a fixed random projection of the output.
    """
    out = forward()
    weights = np.random.default_rng(seed).standard_normal(out.shape)

    def loss():
        return T.tsum(forward() * weights)

    for leaf in leaves:
        leaf.requires_grad = True
    value = loss()
    T.backward(value, leaves)
    worst = 0.0
    for leaf in leaves:
        num = numeric_grad(lambda: float(loss().data), leaf.data, h)
        worst = max(worst, rel_err(num, leaf.grad))
    return worst
