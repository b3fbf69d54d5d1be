"""Full-order model: 1-D inviscid Burgers with exponential source.

    w_t + (w^2 / 2)_x = 0.02 exp(mu2 x),  w(a, t) = mu1,  w(x, 0) = 1

discretised with first-order upwind differences in space and forward
Euler in time on ``x_i = a + i dx``, ``dx = (b - a) / N``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from romforge.errors import BlowUpError, ConfigError

SOURCE_COEFF = 0.02

TRAIN_MU = [(2.0 + 0.5 * i, 0.015 + 0.005 * j) for i in range(3) for j in range(4)]
VALIDATION_MU = [(2.25 + 0.5 * i, 0.0175 + 0.005 * j) for i in range(2) for j in range(3)]


@dataclass(frozen=True)
class BurgersConfig:
    a: float = 0.0
    b: float = 100.0
    n_nodes: int = 256
    t_end: float = 10.0
    dt: float = 0.1
    mu: tuple = (2.0, 0.015)
    source: float = SOURCE_COEFF

    def __post_init__(self):
        if not self.b > self.a:
            raise ConfigError(f"domain [{self.a}, {self.b}] is empty")
        if self.n_nodes < 2:
            raise ConfigError("need at least 2 nodes")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.t_end < self.dt:
            raise ConfigError("t_end must be at least dt")

    @property
    def dx(self):
        return (self.b - self.a) / self.n_nodes

    @property
    def x(self):
        return self.a + np.arange(self.n_nodes) * self.dx

    @property
    def n_steps(self):
        return int(round(self.t_end / self.dt))

    def with_mu(self, mu):
        return replace(self, mu=(float(mu[0]), float(mu[1])))


class Trajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray  # (len(times), N)


def initial_state(cfg):
    w = np.ones(cfg.n_nodes)
    w[0] = cfg.mu[0]
    return w


def source_term(cfg):
    """Forcing at each node; zero at the Dirichlet node."""
    s = cfg.source * np.exp(cfg.mu[1] * cfg.x)
    s[0] = 0.0
    return s


def burgers_step(w, cfg, source=None, step=None):
    w = np.asarray(w, dtype=np.float64)
    if source is None:
        source = source_term(cfg)
    out = np.empty_like(w)
    with np.errstate(over="ignore", invalid="ignore"):
        w2 = w * w
        out[1:] = w[1:] - (cfg.dt / (2.0 * cfg.dx)) * (w2[1:] - w2[:-1]) + cfg.dt * source[1:]
    out[0] = cfg.mu[0]
    if not np.all(np.isfinite(out)):
        raise BlowUpError(step if step is not None else 0)
    return out


def solve_burgers(cfg, sample_every=1):
    """Integrate to ``t_end``; keep the initial state and every ``sample_every``-th step."""
    if sample_every < 1:
        raise ConfigError("sample_every must be >= 1")
    source = source_term(cfg)
    w = initial_state(cfg)
    times, states = [0.0], [w]
    for k in range(1, cfg.n_steps + 1):
        w = burgers_step(w, cfg, source, step=k)
        if k % sample_every == 0:
            times.append(k * cfg.dt)
            states.append(w)
    return Trajectory(np.array(times), np.array(states))


def lattice_mu(train):
    return TRAIN_MU if train else VALIDATION_MU


def lattice_snapshots(train=True, cfg=None, sample_every=1, store_t0=False, threads=1):
    """Snapshot set over the training or validation parameter lattice.

    Parameter rows are ``(t, mu1, mu2)``; trajectories are laid out in
    lattice order whatever order the workers finish in.
    """
    from romforge.dataset import SnapshotSet

    cfg = cfg or BurgersConfig()
    mus = lattice_mu(train)

    def run(mu):
        return solve_burgers(cfg.with_mu(mu), sample_every)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(run, mus))
    else:
        trajs = [run(mu) for mu in mus]

    params, snaps = [], []
    for mu, traj in zip(mus, trajs):
        start = 0 if store_t0 else 1
        for t, w in zip(traj.times[start:], traj.states[start:]):
            params.append((t, mu[0], mu[1]))
            snaps.append(w)
    snaps = np.array(snaps)[:, :, None]
    return SnapshotSet(np.array(params), snaps, "train" if train else "validation")
