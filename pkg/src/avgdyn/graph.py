"""Weighted undirected graphs, partitions, volume regularity and lumpability.

Vertices are the integers ``0..n-1``. Weights live in a symmetric CSR
matrix; a self-loop ``{u, u}`` is a single diagonal entry and therefore
counts once in the volume of ``u``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

DEFAULT_TOL = 1e-9
STOCHASTIC_TOL = 1e-10


class GraphError(ValueError):
    """Invalid graph input (bad vertex, negative weight, duplicate edge...)."""


class NotVolumeRegularError(ValueError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class WeightedGraph:
    """Undirected graph with nonnegative edge weights.

    Parameters
    ----------
    n : int
        Number of vertices.
    edges : iterable of (u, v, w)
        Each unordered pair may appear once. ``u == v`` is a self-loop.
    """

    __slots__ = ("n", "_adj", "_volumes")

    def __init__(self, n: int, edges: Iterable[tuple[int, int, float]] = ()):
        n = int(n)
        if n < 1:
            raise GraphError("graph needs at least one vertex")
        rows, cols, vals = [], [], []
        seen = set()
        for u, v, w in edges:
            u, v, w = int(u), int(v), float(w)
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
            if not np.isfinite(w) or w < 0:
                raise GraphError(f"edge ({u}, {v}) has invalid weight {w!r}")
            key = (u, v) if u <= v else (v, u)
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            if w == 0.0:
                continue
            rows.append(u)
            cols.append(v)
            vals.append(w)
            if u != v:
                rows.append(v)
                cols.append(u)
                vals.append(w)
        adj = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=float)
        self._init_from_csr(n, adj)

    def _init_from_csr(self, n, adj):
        adj.sort_indices()
        self.n = n
        self._adj = adj
        self._volumes = _readonly(np.asarray(adj.sum(axis=1)).ravel())

    @classmethod
    def from_dense(cls, weights) -> "WeightedGraph":
        """Build from a dense symmetric weight matrix (diagonal = self-loops)."""
        w = np.asarray(weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError("weight matrix must be square")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise GraphError("weights must be finite and nonnegative")
        if not np.array_equal(w, w.T):
            raise GraphError("weight matrix must be exactly symmetric")
        g = cls.__new__(cls)
        g._init_from_csr(w.shape[0], sp.csr_matrix(w))
        return g

    @classmethod
    def from_csr(cls, adj) -> "WeightedGraph":
        adj = sp.csr_matrix(adj, dtype=float)
        if adj.shape[0] != adj.shape[1]:
            raise GraphError("weight matrix must be square")
        if (adj != adj.T).nnz:
            raise GraphError("weight matrix must be exactly symmetric")
        if adj.nnz and adj.data.min() < 0:
            raise GraphError("weights must be nonnegative")
        adj.eliminate_zeros()
        g = cls.__new__(cls)
        g._init_from_csr(adj.shape[0], adj)
        return g

    @property
    def adjacency(self) -> sp.csr_matrix:
        return self._adj

    @property
    def volumes(self) -> np.ndarray:
        return self._volumes

    @property
    def num_edges(self) -> int:
        return int((self._adj.nnz + self._adj.diagonal().astype(bool).sum()) // 2)

    def weight(self, u: int, v: int) -> float:
        self._check_vertex(u)
        self._check_vertex(v)
        return float(self._adj[u, v])

    def neighbors(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """(neighbor indices, weights) of ``u``; includes ``u`` if it has a self-loop."""
        self._check_vertex(u)
        lo, hi = self._adj.indptr[u], self._adj.indptr[u + 1]
        return self._adj.indices[lo:hi], self._adj.data[lo:hi]

    def edges(self):
        """Yield ``(u, v, w)`` with ``u <= v`` in lexicographic order."""
        coo = sp.triu(self._adj).tocoo()
        order = np.lexsort((coo.col, coo.row))
        for i in order:
            yield int(coo.row[i]), int(coo.col[i]), float(coo.data[i])

    def dense(self) -> np.ndarray:
        return self._adj.toarray()

    def scaled(self, factor: float) -> "WeightedGraph":
        return WeightedGraph.from_csr(self._adj * float(factor))

    def _check_vertex(self, u):
        if not 0 <= u < self.n:
            raise IndexError(f"vertex {u} out of range for n={self.n}")

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph) or other.n != self.n:
            return NotImplemented
        return (self._adj != other._adj).nnz == 0

    def __repr__(self):
        return f"WeightedGraph(n={self.n}, m={self.num_edges})"


@dataclass(frozen=True)
class Partition:
    """k-way labeling of the vertices; every block nonempty."""

    assignment: np.ndarray
    k: int

    def __init__(self, assignment: Sequence[int], k: int | None = None):
        a = np.asarray(assignment, dtype=np.int64).copy()
        if a.ndim != 1 or a.size == 0:
            raise ValueError("assignment must be a nonempty 1-d sequence")
        if a.min() < 0:
            raise ValueError("block indices must be nonnegative")
        k = int(a.max()) + 1 if k is None else int(k)
        if a.max() >= k:
            raise ValueError(f"block index {a.max()} out of range for k={k}")
        sizes = np.bincount(a, minlength=k)
        if np.any(sizes == 0):
            raise ValueError(f"empty block(s): {np.flatnonzero(sizes == 0).tolist()}")
        object.__setattr__(self, "assignment", _readonly(a))
        object.__setattr__(self, "k", k)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "Partition":
        return cls(np.repeat(np.arange(len(sizes)), sizes), len(sizes))

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls(np.zeros(n, dtype=np.int64), 1)

    @property
    def n(self) -> int:
        return self.assignment.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    @property
    def n_min(self) -> int:
        return int(self.sizes.min())

    @property
    def n_max(self) -> int:
        return int(self.sizes.max())

    def blocks(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignment == i) for i in range(self.k)]

    def indicators(self) -> np.ndarray:
        """n x k 0/1 matrix whose columns are the block indicator vectors."""
        ind = np.zeros((self.n, self.k))
        ind[np.arange(self.n), self.assignment] = 1.0
        return ind

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.assignment, other.assignment)

    def __hash__(self):
        return hash((self.k, self.assignment.tobytes()))


@dataclass(frozen=True)
class Witness:
    """A violation of block-constancy: ratio toward ``target`` differs for u, v in ``block``."""

    block: int
    target: int
    u: int
    v: int
    ratio_u: float
    ratio_v: float


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    witness: Witness | None = None

    def __bool__(self):
        return self.ok


def volume(graph: WeightedGraph, u: int) -> float:
    graph._check_vertex(u)
    return float(graph.volumes[u])


def block_volume(graph: WeightedGraph, partition: Partition, u: int, j: int) -> float:
    """Total weight from ``u`` into block ``j``."""
    graph._check_vertex(u)
    if not 0 <= j < partition.k:
        raise IndexError(f"block {j} out of range for k={partition.k}")
    nbrs, w = graph.neighbors(u)
    return float(w[partition.assignment[nbrs] == j].sum())


def block_volume_matrix(graph: WeightedGraph, partition: Partition) -> np.ndarray:
    """n x k matrix of block volumes delta_j(u)."""
    _check_sizes(graph, partition)
    return np.asarray(graph.adjacency @ partition.indicators())


def _check_sizes(graph, partition):
    if partition.n != graph.n:
        raise ValueError(f"partition covers {partition.n} vertices, graph has {graph.n}")


def _block_constancy(ratios: np.ndarray, partition: Partition, tol: float) -> CheckResult:
    # Cross-block targets are scanned before the block itself; for k = 2 the
    # own-block ratio is the complement of the cross one anyway.
    for i, members in enumerate(partition.blocks()):
        ref = members[0]
        targets = [j for j in range(partition.k) if j != i] + [i]
        for j in targets:
            col = ratios[members, j]
            bad = np.flatnonzero(np.abs(col - col[0]) > tol)
            if bad.size:
                v = int(members[bad[0]])
                return CheckResult(False, Witness(i, j, int(ref), v, float(col[0]), float(col[bad[0]])))
    return CheckResult(True)


def is_volume_regular(graph: WeightedGraph, partition: Partition, tol: float = DEFAULT_TOL) -> CheckResult:
    """Check that delta_j(u)/delta(u) depends only on the block of u (within ``tol``)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    vol = graph.volumes
    if np.any(vol <= 0):
        raise GraphError(f"zero-volume vertex {int(np.flatnonzero(vol <= 0)[0])}")
    ratios = block_volume_matrix(graph, partition) / vol[:, None]
    return _block_constancy(ratios, partition, tol)


def is_ordinary_lumpable(transition, partition: Partition, tol: float = DEFAULT_TOL) -> CheckResult:
    """Check that block-to-block transition mass is constant within each source block."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    P = transition if sp.issparse(transition) else np.asarray(transition, dtype=float)
    if P.shape != (partition.n, partition.n):
        raise ValueError(f"transition matrix shape {P.shape} does not match partition size {partition.n}")
    rows = np.asarray(P.sum(axis=1)).ravel()
    if np.any(np.abs(rows - 1.0) > STOCHASTIC_TOL):
        bad = int(np.argmax(np.abs(rows - 1.0)))
        raise ValueError(f"row {bad} sums to {rows[bad]!r}, matrix is not stochastic")
    if (P.min() if sp.issparse(P) else P.min()) < 0:
        raise ValueError("transition matrix has negative entries")
    return _block_constancy(np.asarray(P @ partition.indicators()), partition, tol)


def transition_matrix(graph: WeightedGraph) -> sp.csr_matrix:
    """P = D^-1 W as a sparse matrix."""
    vol = graph.volumes
    if np.any(vol <= 0):
        raise GraphError("transition matrix undefined: zero-volume vertex")
    return sp.csr_matrix(sp.diags(1.0 / vol) @ graph.adjacency)


def lumped_matrix(graph: WeightedGraph, partition: Partition, tol: float = DEFAULT_TOL) -> np.ndarray:
    """k x k matrix whose row j holds the transition mass from block j to each block."""
    check = is_volume_regular(graph, partition, tol)
    if not check:
        raise NotVolumeRegularError(f"graph is not volume regular: {check.witness}")
    ratios = block_volume_matrix(graph, partition) / graph.volumes[:, None]
    first = [int(b[0]) for b in partition.blocks()]
    return _readonly(ratios[first].copy())


def apply_transition(graph: WeightedGraph, state) -> np.ndarray:
    """One averaging round: each vertex takes the weighted mean of its neighbours."""
    x = np.asarray(state, dtype=float)
    if x.shape != (graph.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({graph.n},)")
    return (graph.adjacency @ x) / graph.volumes


def weighted_average(graph: WeightedGraph, state) -> float:
    vol = graph.volumes
    return float(vol @ np.asarray(state, dtype=float) / vol.sum())


def normalize_min_volume(graph: WeightedGraph) -> WeightedGraph:
    """Rescale all weights so that the smallest volume is exactly 1."""
    vmin = graph.volumes.min()
    if vmin <= 0:
        raise GraphError("cannot normalize: zero-volume vertex")
    if vmin == 1.0:
        return graph
    return graph.scaled(1.0 / vmin)


def volume_spread(graph: WeightedGraph) -> float:
    """Max volume after min-volume normalization."""
    return float(graph.volumes.max() / graph.volumes.min())


def is_connected(graph: WeightedGraph) -> bool:
    ncomp, _ = connected_components(graph.adjacency, directed=False)
    return ncomp == 1


def two_coloring(graph: WeightedGraph) -> np.ndarray | None:
    """BFS 2-coloring as a 0/1 array, or None when the graph has an odd cycle."""
    adj = graph.adjacency
    color = np.full(graph.n, -1, dtype=np.int64)
    for start in range(graph.n):
        if color[start] >= 0:
            continue
        color[start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj.indices[adj.indptr[u]:adj.indptr[u + 1]]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    return None
    return color


def two_step_graph(graph: WeightedGraph) -> WeightedGraph:
    """Graph whose random walk is P^2 (weights W D^-1 W, same volumes)."""
    W = graph.adjacency
    W2 = sp.csr_matrix(W @ sp.diags(1.0 / graph.volumes) @ W)
    W2 = (W2 + W2.T) * 0.5
    return WeightedGraph.from_csr(W2)


def stationary_distribution(transition) -> np.ndarray:
    P = transition.toarray() if sp.issparse(transition) else np.asarray(transition, dtype=float)
    vals, vecs = np.linalg.eig(P.T)
    pi = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return pi / pi.sum()


def graph_from_reversible_chain(transition, tol: float = 1e-10) -> WeightedGraph:
    """Weighted graph with w(u, v) = pi(u) P(u, v); the walk on it is the chain."""
    P = transition.toarray() if sp.issparse(transition) else np.asarray(transition, dtype=float)
    pi = stationary_distribution(P)
    flow = pi[:, None] * P
    if np.abs(flow - flow.T).max() > tol:
        raise ValueError("chain is not reversible")
    return WeightedGraph.from_dense((flow + flow.T) * 0.5)
