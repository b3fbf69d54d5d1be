"""Dense matrix helpers and the thin SVD used by POD.

Dense matrices are plain C-ordered ``float64`` numpy arrays.
"""
from typing import NamedTuple

import numpy as np

from romforge import kernels
from romforge.errors import ShapeError, SvdConvergenceError

MAX_SWEEPS = 60


class ThinSvd(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def as_matrix(a, name="matrix"):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def matmul(a, b):
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _complete_orthonormal(q, good):
    """Replace columns of ``q`` not flagged in ``good`` by an orthonormal completion."""
    m = q.shape[0]
    basis = [q[:, j] for j in range(q.shape[1]) if good[j]]
    candidates = iter(range(m))
    for j in range(q.shape[1]):
        if good[j]:
            continue
        while True:
            e = np.zeros(m)
            e[next(candidates)] = 1.0
            for _ in range(2):  # twice is enough (Kahan)
                for b in basis:
                    e -= (b @ e) * b
            nrm = np.linalg.norm(e)
            if nrm > 0.5:
                e /= nrm
                break
        q[:, j] = e
        basis.append(e)
    return q


def thin_svd(a, tol=None, max_sweeps=MAX_SWEEPS):
    """Thin SVD ``a = u @ diag(s) @ vt`` by one-sided (Hestenes) Jacobi.

    Rotations run on the thinner orientation, so the work is
    ``O(min(m, n)^2 * max(m, n))`` per sweep. Singular values come back in
    descending order and each left singular vector is signed so that its
    largest-magnitude entry is positive.
    """
    a = as_matrix(a, "SVD input")
    m, n = a.shape
    if m == 0 or n == 0:
        raise ShapeError("SVD input is empty")
    transposed = m < n
    g = a.T if transposed else a  # tall: rows >= columns
    rows, k = g.shape
    h = np.array(g.T, order="C")  # one row per column of g; copy, rotated in place
    q = np.eye(k)
    if tol is None:
        tol = rows * np.finfo(float).eps
    sweeps, off = kernels.jacobi_sweeps(h, q, float(tol), int(max_sweeps))
    if off > tol and sweeps >= max_sweeps:
        raise SvdConvergenceError(off, sweeps)

    s = np.sqrt(np.einsum("ij,ij->i", h, h))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    w = h[order].T  # rows x k, orthogonal columns
    v = q[order].T  # k x k orthogonal
    cutoff = s[0] * rows * np.finfo(float).eps if s[0] > 0 else 0.0
    good = s > cutoff
    s = np.where(good, s, 0.0)
    left = np.zeros_like(w)
    left[:, good] = w[:, good] / s[good]
    left = _complete_orthonormal(left, good)

    if transposed:
        u, vt = v, left.T  # a = g.T = v diag(s) left.T
    else:
        u, vt = left, v.T
    u = np.array(u)
    vt = np.array(vt)
    pivots = np.argmax(np.abs(u), axis=0)
    flip = u[pivots, np.arange(k)] < 0
    u[:, flip] *= -1.0
    vt[flip, :] *= -1.0
    return ThinSvd(np.ascontiguousarray(u), s, np.ascontiguousarray(vt))
