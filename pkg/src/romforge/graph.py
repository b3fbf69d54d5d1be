"""Graphs and the normalised operators consumed by graph convolutions.

Adjacency is held in CSR form with sorted column indices so that every
iteration over it happens in the same order.
"""
from collections import deque
from dataclasses import dataclass

import numpy as np

from romforge import kernels
from romforge.errors import ConfigError, FormatError, ShapeError


@dataclass(frozen=True, eq=False)
class Csr:
    """Square sparse matrix in CSR layout."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @classmethod
    def from_triplets(cls, n, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            # merge duplicate (row, col) pairs by summation
            key = rows * n + cols
            uniq, start = np.unique(key, return_index=True)
            vals = np.add.reduceat(vals, start)
            rows, cols = uniq // n, uniq % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(n, indptr, cols.astype(np.int64), vals.astype(np.float64))

    def triplets(self):
        rows = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        return rows, self.indices.copy(), self.data.copy()

    def todense(self):
        out = np.zeros((self.n, self.n))
        rows, cols, vals = self.triplets()
        out[rows, cols] = vals
        return out

    def matmat(self, x):
        """``A @ x`` for dense ``x`` of shape (n, k) or (n,)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise ShapeError(f"sparse operand has {self.n} rows, dense has {x.shape[0]}")
        flat = np.ascontiguousarray(x.reshape(self.n, -1))
        out = kernels.csr_matmat(self.indptr, self.indices, self.data, flat)
        return out.reshape(x.shape)

    def row_sums(self):
        rows, _, vals = self.triplets()
        out = np.zeros(self.n)
        np.add.at(out, rows, vals)
        return out


@dataclass(frozen=True, eq=False)
class Graph:
    n_nodes: int
    adjacency: Csr
    degrees: np.ndarray

    @property
    def edges(self):
        """Undirected edges ``(i, j, w)`` with ``i < j``."""
        rows, cols, vals = self.adjacency.triplets()
        keep = rows < cols
        return list(zip(rows[keep].tolist(), cols[keep].tolist(), vals[keep].tolist()))

    def __eq__(self, other):
        if not isinstance(other, Graph) or other.n_nodes != self.n_nodes:
            return NotImplemented if not isinstance(other, Graph) else False
        return np.array_equal(self.adjacency.todense(), other.adjacency.todense())


def from_edges(n_nodes, edges):
    """Build a graph from undirected weighted edges ``(i, j, w)``."""
    if n_nodes < 1:
        raise ConfigError("graph needs at least one node")
    rows, cols, vals = [], [], []
    for i, j, w in edges:
        i, j, w = int(i), int(j), float(w)
        if not (0 <= i < n_nodes and 0 <= j < n_nodes):
            raise ShapeError(f"edge ({i}, {j}) out of range for {n_nodes} nodes")
        if i == j:
            raise ConfigError(f"self-loop at node {i}; adjacency must have a zero diagonal")
        if w < 0 or not np.isfinite(w):
            raise ConfigError(f"edge ({i}, {j}) has invalid weight {w}")
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
    adj = Csr.from_triplets(n_nodes, rows, cols, vals)
    degrees = np.zeros(n_nodes)
    r, _, v = adj.triplets()
    np.add.at(degrees, r, v)
    return Graph(n_nodes, adj, degrees)


def path_graph(n):
    if n < 1:
        raise ConfigError("path graph needs n >= 1")
    return from_edges(n, [(i, i + 1, 1.0) for i in range(n - 1)])


def chain_graph(n, hops=1):
    """Path graph with extra unit edges up to ``hops`` apart."""
    if n < 1:
        raise ConfigError("chain graph needs n >= 1")
    return from_edges(n, [(i, i + h, 1.0) for h in range(1, hops + 1) for i in range(n - h)])


def grid_graph(rows, cols):
    """4-neighbour lattice, node id ``r * cols + c``."""
    if rows < 1 or cols < 1:
        raise ConfigError("grid needs positive dimensions")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1, 1.0))
            if r + 1 < rows:
                edges.append((v, v + cols, 1.0))
    return from_edges(rows * cols, edges)


def combinatorial_laplacian(g):
    """``L = D - A`` as a :class:`Csr`."""
    rows, cols, vals = g.adjacency.triplets()
    diag = np.arange(g.n_nodes)
    return Csr.from_triplets(
        g.n_nodes,
        np.concatenate([rows, diag]),
        np.concatenate([cols, diag]),
        np.concatenate([-vals, g.degrees]),
    )


def propagation_matrix(g):
    """Self-looped symmetric normalisation ``(D+I)^-1/2 (A+I) (D+I)^-1/2``."""
    inv_sqrt = 1.0 / np.sqrt(g.degrees + 1.0)
    rows, cols, vals = g.adjacency.triplets()
    diag = np.arange(g.n_nodes)
    rows = np.concatenate([rows, diag])
    cols = np.concatenate([cols, diag])
    vals = np.concatenate([vals, np.ones(g.n_nodes)])
    return Csr.from_triplets(g.n_nodes, rows, cols, inv_sqrt[rows] * vals * inv_sqrt[cols])


def k_hop_neighborhood(g, v, k):
    if not 0 <= v < g.n_nodes:
        raise ShapeError(f"node {v} not in graph with {g.n_nodes} nodes")
    dist = {v: 0}
    queue = deque([v])
    adj = g.adjacency
    while queue:
        u = queue.popleft()
        if dist[u] == k:
            continue
        for e in range(adj.indptr[u], adj.indptr[u + 1]):
            w = int(adj.indices[e])
            if w not in dist and adj.data[e] != 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return set(dist)


def permute(g, perm):
    """Relabel node ``i`` as ``perm[i]``."""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (g.n_nodes,) or not np.array_equal(np.sort(perm), np.arange(g.n_nodes)):
        raise ConfigError("perm is not a bijection on the node ids")
    return from_edges(g.n_nodes, [(perm[i], perm[j], w) for i, j, w in g.edges])


def write_edge_list(g, path):
    try:
        with open(path, "w") as fh:
            fh.write(f"nodes {g.n_nodes}\n")
            for i, j, w in g.edges:
                fh.write(f"{i} {j} {w!r}\n")
    except OSError as exc:
        raise FormatError(f"cannot write edge list {path}: {exc}") from exc


def read_edge_list(path):
    """Read ``nodes <n>`` followed by ``i j w`` lines (``w`` optional, default 1)."""
    try:
        with open(path) as fh:
            lines = [ln.split("#", 1)[0].strip() for ln in fh]
    except OSError as exc:
        raise FormatError(f"cannot read edge list {path}: {exc}") from exc
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].startswith("nodes"):
        raise FormatError(f"{path}: missing 'nodes <n>' header")
    try:
        n = int(lines[0].split()[1])
        edges = []
        for ln in lines[1:]:
            parts = ln.split()
            w = float(parts[2]) if len(parts) > 2 else 1.0
            edges.append((int(parts[0]), int(parts[1]), w))
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed edge list ({exc})") from exc
    return from_edges(n, edges)
