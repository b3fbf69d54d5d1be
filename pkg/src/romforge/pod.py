"""Linear baseline: POD basis, projection, and the Burgers POD-Galerkin ROM.

``POD1`` checkpoint layout (all little-endian)::

    b"POD1" | u64 x5: N, n_f, n, n_sv, centering | center f64[N*n_f]
            | singular values f64[n_sv] | U_n f64[N*n_f, n] row-major

With ``ic`` centering the stored center is the Burgers initial state
template; its node 0 is replaced by each sample's inflow value mu1.
"""
import struct
from dataclasses import dataclass

import numpy as np

from romforge.dataset import flatten_samples, unflatten_samples
from romforge.errors import BlowUpError, ConfigError, FormatError, ShapeError
from romforge.fom import BurgersConfig, initial_state, source_term
from romforge.linalg import thin_svd

POD_MAGIC = b"POD1"
CENTERINGS = ("ic", "none")


@dataclass(eq=False)
class PodBasis:
    u_n: np.ndarray  # (N * n_f, n)
    singular_values: np.ndarray
    center: np.ndarray  # (N * n_f,) template, see module docstring
    centering: str = "ic"
    n_nodes: int = 0
    n_features: int = 1

    @property
    def n(self):
        return self.u_n.shape[1]

    def truncate(self, n):
        if n > self.n:
            raise ConfigError(f"basis has only {self.n} modes")
        return PodBasis(self.u_n[:, :n].copy(), self.singular_values, self.center,
                        self.centering, self.n_nodes, self.n_features)

    def centers(self, params):
        """Per-sample centering vectors, shape (B, N * n_f)."""
        params = np.atleast_2d(params)
        c = np.repeat(self.center[None, :], params.shape[0], axis=0)
        if self.centering == "ic":
            c[:, 0] = params[:, 1]
        return c


def pod_fit(train, n, centering="ic"):
    """Leading ``n`` left singular vectors of the centred snapshot matrix."""
    if centering not in CENTERINGS:
        raise ConfigError(f"unknown centering {centering!r}; use one of {CENTERINGS}")
    n_s, n_nodes, n_f = train.snaps.shape
    if not 0 <= n <= min(n_nodes * n_f, n_s):
        raise ConfigError(f"n={n} exceeds min(N, N_t) = {min(n_nodes * n_f, n_s)}")
    if centering == "ic" and n_f != 1:
        raise ConfigError("initial-condition centering is defined for the scalar Burgers field")
    template = np.ones(n_nodes * n_f) if centering == "ic" else np.zeros(n_nodes * n_f)
    basis = PodBasis(np.zeros((n_nodes * n_f, 0)), np.zeros(0), template, centering, n_nodes, n_f)
    x = flatten_samples(train.snaps) - basis.centers(train.params)
    svd = thin_svd(x.T)  # snapshot matrix, one column per sample
    basis.u_n = np.ascontiguousarray(svd.u[:, :n])
    basis.singular_values = svd.s
    return basis


def pod_compress(basis, snaps, params):
    """Project onto ``center + span(U_n)`` and expand back; returns (B, N, n_f)."""
    snaps = np.asarray(snaps, dtype=np.float64)
    if snaps.shape[1:] != (basis.n_nodes, basis.n_features):
        raise ShapeError(f"snapshots {snaps.shape[1:]} do not match basis "
                         f"({basis.n_nodes}, {basis.n_features})")
    c = basis.centers(params)
    x = flatten_samples(snaps) - c
    u = basis.u_n
    rec = c + (x @ u) @ u.T
    return unflatten_samples(rec, basis.n_nodes, basis.n_features)


def write_pod(basis, path):
    code = CENTERINGS.index(basis.centering)
    try:
        with open(path, "wb") as fh:
            fh.write(POD_MAGIC)
            fh.write(struct.pack("<5Q", basis.n_nodes, basis.n_features, basis.n,
                                 basis.singular_values.size, code))
            for arr in (basis.center, basis.singular_values, basis.u_n):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc


def read_pod(path):
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != POD_MAGIC:
                raise FormatError(f"{path}: bad magic {magic!r}, expected {POD_MAGIC!r}")
            head = fh.read(40)
            if len(head) != 40:
                raise FormatError(f"{path}: truncated header")
            n_nodes, n_f, n, n_sv, code = struct.unpack("<5Q", head)
            body = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    dim = n_nodes * n_f
    if len(body) != 8 * (dim + n_sv + dim * n) or code >= len(CENTERINGS):
        raise FormatError(f"{path}: body does not match header")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    center, sv, u = np.split(flat, [dim, dim + n_sv])
    return PodBasis(u.reshape(dim, n), sv, center, CENTERINGS[code], n_nodes, n_f)


# -- Burgers POD-Galerkin ---------------------------------------------------


def difference_matrix(n_nodes, dx):
    """Bidiagonal backward difference with a zero first row."""
    d = np.zeros((n_nodes, n_nodes))
    i = np.arange(1, n_nodes)
    d[i, i] = 1.0 / dx
    d[i, i - 1] = -1.0 / dx
    return d


@dataclass(eq=False)
class BurgersGalerkinRom:
    a_vec: np.ndarray
    b_mat: np.ndarray
    c_tens: np.ndarray
    forcing: np.ndarray
    basis: PodBasis
    w0: np.ndarray
    cfg: BurgersConfig

    @property
    def dt(self):
        return self.cfg.dt

    @property
    def dx(self):
        return self.cfg.dx


def quadratic_tensor(u, dx_mat):
    """``C[c, j, k] = sum_i (U^T D_x)[c, i] U[i, j] U[i, k]``."""
    n_nodes, n = u.shape
    proj = u.T @ dx_mat
    outer = (u[:, :, None] * u[:, None, :]).reshape(n_nodes, n * n)
    return (proj @ outer).reshape(n, n, n)


def build_galerkin(basis, cfg, c_tens=None):
    """Precompute the reduced operators for the parameter ``cfg.mu``.

    ``c_tens`` depends only on the basis and grid and may be passed in to
    share it across parameters.
    """
    if basis.n_features != 1 or basis.n_nodes != cfg.n_nodes:
        raise ShapeError("basis was not built on this Burgers grid")
    if basis.centering != "ic":
        raise ConfigError("the Galerkin ROM expands about the initial condition; refit with centering='ic'")
    u = basis.u_n
    d = difference_matrix(cfg.n_nodes, cfg.dx)
    w0 = initial_state(cfg)
    proj = u.T @ d
    a_vec = proj @ (w0 * w0)
    b_mat = 2.0 * proj @ (w0[:, None] * u)
    if c_tens is None:
        c_tens = quadratic_tensor(u, d)
    # the Dirichlet node carries no source, matching the full-order update
    forcing = u.T @ source_term(cfg)
    return BurgersGalerkinRom(a_vec, b_mat, c_tens, forcing, basis, w0, cfg)


def galerkin_rhs(rom, w_hat):
    quad = np.einsum("cjk,j,k->c", rom.c_tens, w_hat, w_hat)
    return rom.forcing - 0.5 * (rom.a_vec + rom.b_mat @ w_hat + quad)


def galerkin_step(rom, w_hat, step=None):
    out = w_hat + rom.dt * galerkin_rhs(rom, w_hat)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(step if step is not None else 0)
    return out


def galerkin_solve(rom, n_steps=None):
    """Reduced states for steps 0..n_steps, starting from zero."""
    n_steps = rom.cfg.n_steps if n_steps is None else n_steps
    out = np.zeros((n_steps + 1, rom.basis.n))
    for k in range(1, n_steps + 1):
        out[k] = galerkin_step(rom, out[k - 1], step=k)
    return out


def reconstruct(rom, w_hat):
    """Full states ``w0 + U_n w_hat`` with the inflow value re-imposed."""
    w = rom.w0 + np.atleast_2d(w_hat) @ rom.basis.u_n.T
    w[:, 0] = rom.cfg.mu[0]
    return w


def galerkin_trajectory(basis, cfg, c_tens=None):
    rom = build_galerkin(basis, cfg, c_tens)
    w_hat = galerkin_solve(rom)
    return np.arange(w_hat.shape[0]) * cfg.dt, reconstruct(rom, w_hat)


def galerkin_predict(basis, params, cfg=None):
    """POD-ROM prediction at parameter rows ``(t, mu1, mu2)``; returns (B, N, 1)."""
    cfg = cfg or BurgersConfig(n_nodes=basis.n_nodes)
    params = np.atleast_2d(params)
    d = difference_matrix(cfg.n_nodes, cfg.dx)
    c_tens = quadratic_tensor(basis.u_n, d)
    out = np.empty((params.shape[0], cfg.n_nodes))
    cache = {}
    for row, (t, mu1, mu2) in enumerate(params[:, :3]):
        key = (mu1, mu2)
        if key not in cache:
            cache[key] = galerkin_trajectory(basis, cfg.with_mu(key), c_tens)[1]
        k = int(round(t / cfg.dt))
        out[row] = cache[key][k]
    return out[:, :, None]
