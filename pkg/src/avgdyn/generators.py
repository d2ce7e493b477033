"""Graphs with a planted partition and known spectral structure.

All block constructions are exactly volume regular with respect to the
planted partition, so the lumped chain and its eigenvalues are available
in closed form and can be checked against the dense oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._rng import make_rng
from .graph import Partition, WeightedGraph, is_connected, is_volume_regular, two_coloring

MAX_ATTEMPTS = 20


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class BlockSpec:
    """Block sizes plus a symmetric k x k coupling matrix of base weights."""

    sizes: tuple[int, ...]
    coupling: np.ndarray

    def __init__(self, sizes: Sequence[int], coupling):
        sizes = tuple(int(s) for s in sizes)
        C = np.array(coupling, dtype=float, ndmin=2)
        k = len(sizes)
        if k == 0 or any(s < 1 for s in sizes):
            raise GeneratorError("block sizes must be positive")
        if C.shape != (k, k):
            raise GeneratorError(f"coupling must be {k}x{k}, got {C.shape}")
        if not np.all(np.isfinite(C)) or np.any(C < 0):
            raise GeneratorError("coupling entries must be finite and nonnegative")
        if not np.array_equal(C, C.T):
            raise GeneratorError("coupling matrix must be symmetric")
        if np.any(C.max(axis=1) <= 0):
            raise GeneratorError("every block needs a positive coupling")
        C.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "coupling", C)

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def partition(self) -> Partition:
        return Partition.from_sizes(self.sizes)


@dataclass
class GeneratorReport:
    graph: WeightedGraph
    partition: Partition
    kind: str
    seed: int | None
    predicted_stepwise: np.ndarray
    # Closed-form non-stepwise eigenvalues, when the construction has them.
    predicted_rest: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def predicted_rest_bound(self) -> float | None:
        """Largest |lambda| outside the stepwise part, if known."""
        if self.predicted_rest is None:
            return None
        return float(np.abs(self.predicted_rest).max()) if self.predicted_rest.size else 0.0

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "seed": self.seed,
            "n": self.graph.n,
            "m": self.graph.num_edges,
            "k": self.partition.k,
            "sizes": [int(s) for s in self.partition.sizes],
            "predicted_stepwise_eigenvalues": [float(x) for x in self.predicted_stepwise],
            "predicted_rest_eigenvalues": None if self.predicted_rest is None
            else sorted({round(float(x), 15) for x in self.predicted_rest}, reverse=True),
            "predicted_rest_bound": self.predicted_rest_bound,
        }
        out.update(self.params)
        return out


def _sorted_eigs(M: np.ndarray) -> np.ndarray:
    # The lumped matrix is similar to a symmetric one, so its spectrum is real.
    return np.sort(np.real(np.linalg.eigvals(M)))[::-1]


def _finish(graph, partition, kind, seed, stepwise, rest=None, params=None, check_regular=True):
    if np.any(graph.volumes <= 0):
        raise GeneratorError("generated graph has a zero-volume vertex")
    if not is_connected(graph):
        raise GeneratorError("generated graph is disconnected")
    if check_regular:
        check = is_volume_regular(graph, partition, 1e-9)
        if not check:  # pragma: no cover - constructions are exact
            raise GeneratorError(f"construction is not volume regular: {check.witness}")
    return GeneratorReport(graph, partition, kind, seed, stepwise, rest, params or {})


def generate_homogeneous_blocks(spec: BlockSpec) -> GeneratorReport:
    """Complete block-weighted graph: w(u, v) = C[i, j] for u in V_i, v in V_j, u != v.

    Every vertex of block i has volume ``d_i = sum_j C[i, j] (n_j - [i == j])``.
    The stepwise eigenvalues are those of the lumped matrix; each block with
    n_i >= 2 contributes eigenvalue ``-C[i, i] / d_i`` with multiplicity n_i - 1.
    """
    sizes = np.array(spec.sizes)
    C = spec.coupling
    partition = spec.partition()
    b = partition.assignment
    W = C[np.ix_(b, b)].copy()
    np.fill_diagonal(W, 0.0)

    counts = sizes[None, :] - np.eye(spec.k)
    block_vol = (C * counts).sum(axis=1)
    if np.any(block_vol <= 0):
        raise GeneratorError(f"block(s) {np.flatnonzero(block_vol <= 0).tolist()} have zero volume")
    lumped = C * counts / block_vol[:, None]
    rest = np.concatenate([np.full(s - 1, -C[i, i] / block_vol[i]) for i, s in enumerate(spec.sizes)])
    params = {"coupling": C.tolist(), "block_volumes": block_vol.tolist()}
    return _finish(WeightedGraph.from_dense(W), partition, "homogeneous", None,
                   _sorted_eigs(lumped), np.sort(rest)[::-1], params)


def generate_scaled_blocks(spec: BlockSpec, node_scales) -> GeneratorReport:
    """Volume-regular graph with heterogeneous degrees.

    ``w(u, v) = C[i, j] a(u) a(v)`` across blocks and a self-loop
    ``w(u, u) = C[i, i] a(u) A_i`` inside block i (``A_i`` = total scale of
    block i), so that ``delta_j(u) / delta(u) = C[i, j] A_j / sum_l C[i, l] A_l``.
    """
    a = np.asarray(node_scales, dtype=float)
    if a.shape != (spec.n,):
        raise GeneratorError(f"need {spec.n} node scales, got {a.shape}")
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise GeneratorError("node scales must be positive")
    C = spec.coupling
    partition = spec.partition()
    b = partition.assignment
    A = np.bincount(b, weights=a, minlength=spec.k)

    W = C[np.ix_(b, b)] * np.outer(a, a)
    W[b[:, None] == b[None, :]] = 0.0
    W[np.diag_indices(spec.n)] = C[b, b] * a * A[b]
    W = (W + W.T) * 0.5

    mass = C * A[None, :]
    lumped = mass / mass.sum(axis=1, keepdims=True)
    rest = np.concatenate([np.full(s - 1, lumped[i, i]) for i, s in enumerate(spec.sizes)])
    params = {"coupling": C.tolist(), "node_scales": a.tolist()}
    return _finish(WeightedGraph.from_dense(W), partition, "scaled", None,
                   _sorted_eigs(lumped), np.sort(rest)[::-1], params)


def _circulant_edges(size, d):
    edges = set()
    for i in range(size):
        for r in range(1, d // 2 + 1):
            j = (i + r) % size
            edges.add((min(i, j), max(i, j)))
        if d % 2:
            j = (i + size // 2) % size
            edges.add((min(i, j), max(i, j)))
    return edges


def _random_regular_edges(size, d, rng):
    """Simple d-regular graph by stub pairing with rejection; None on failure."""
    stubs = np.repeat(np.arange(size), d)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    edges = set()
    for u, v in pairs:
        if u == v:
            return None
        e = (int(min(u, v)), int(max(u, v)))
        if e in edges:
            return None
        edges.add(e)
    return edges


def _random_biregular_edges(size, d, rng):
    """d disjoint random perfect matchings between two equal-size sides."""
    edges = set()
    for _ in range(d):
        perm = rng.permutation(size)
        new = {(i, int(perm[i])) for i in range(size)}
        if edges & new:
            return None
        edges |= new
    return edges


def _regular_layout(k, size, d_in, d_out, rng):
    intra, cross = [], {}
    for _ in range(k):
        e = None
        for _attempt in range(MAX_ATTEMPTS if rng is not None else 0):
            e = _random_regular_edges(size, d_in, rng)
            if e is not None:
                break
        intra.append(e if e is not None else _circulant_edges(size, d_in))
    for a in range(k):
        for b in range(a + 1, k):
            e = None
            for _attempt in range(MAX_ATTEMPTS if rng is not None else 0):
                e = _random_biregular_edges(size, d_out, rng)
                if e is not None:
                    break
            cross[a, b] = e if e is not None else {(i, (i + r) % size) for i in range(size) for r in range(d_out)}
    edges = []
    for c, block in enumerate(intra):
        edges.extend((c * size + u, c * size + v, 1.0) for u, v in block)
    for (a, b), block in cross.items():
        edges.extend((a * size + u, b * size + v, 1.0) for u, v in block)
    return WeightedGraph(k * size, edges)


def generate_regular_clustered(k: int, community_size: int, d_in: int, d_out: int,
                               seed: int | None = None, method: str = "random") -> GeneratorReport:
    """k equal communities; d_in neighbours inside, d_out in each other community.

    ``method="random"`` samples stub pairings / random matchings (falling back
    to a circulant layout after repeated rejections); ``"circulant"`` is fully
    deterministic.
    """
    if k < 1 or community_size < 1:
        raise GeneratorError("need k >= 1 and community_size >= 1")
    if not 0 <= d_in < community_size:
        raise GeneratorError("d_in must be in [0, community_size)")
    if (community_size * d_in) % 2:
        raise GeneratorError("community_size * d_in must be even")
    if d_in % 2 and community_size % 2:
        raise GeneratorError("odd d_in needs an even community size")
    if not 0 <= d_out <= community_size:
        raise GeneratorError("d_out must be in [0, community_size]")
    if d_in + (k - 1) * d_out == 0:
        raise GeneratorError("degree parameters give isolated vertices")
    if method not in ("random", "circulant"):
        raise GeneratorError(f"unknown method {method!r}")
    if method == "random" and seed is None:
        raise GeneratorError("random layout needs a seed")

    partition = Partition.from_sizes([community_size] * k)
    graph = None
    for attempt in range(MAX_ATTEMPTS if method == "random" else 1):
        rng = make_rng(seed, "regular", attempt) if method == "random" else None
        graph = _regular_layout(k, community_size, d_in, d_out, rng)
        if is_connected(graph):
            break
    else:
        graph = _regular_layout(k, community_size, d_in, d_out, None)
    if not is_connected(graph):
        raise GeneratorError(f"disconnected result after {MAX_ATTEMPTS} attempts")

    d = d_in + (k - 1) * d_out
    lumped = (d_in * np.eye(k) + d_out * (np.ones((k, k)) - np.eye(k))) / d
    params = {"d_in": d_in, "d_out": d_out, "method": method}
    return _finish(graph, partition, "regular", seed, _sorted_eigs(lumped), None, params)


def generate_bipartite(n1: int, n2: int, density: float, weighted: bool = False,
                       seed: int = 0) -> GeneratorReport:
    """Random connected bipartite graph: a random spanning tree across the sides
    plus every remaining cross pair independently with probability ``density``.
    Weights are 1, or uniform on [0.5, 1.5] when ``weighted``.
    """
    if n1 < 1 or n2 < 1:
        raise GeneratorError("both sides need at least one vertex")
    if not 0.0 < density <= 1.0:
        raise GeneratorError("density must be in (0, 1]")
    rng = make_rng(seed, "bipartite")
    left = list(rng.permutation(n1))
    right = [n1 + int(v) for v in rng.permutation(n2)]
    tree = {(int(left[0]), right[0])}
    placed = [[int(left[0])], [right[0]]]
    rest = [(0, int(u)) for u in left[1:]] + [(1, v) for v in right[1:]]
    for idx in rng.permutation(len(rest)):
        side, u = rest[idx]
        other = placed[1 - side]
        v = other[int(rng.integers(len(other)))]
        tree.add((u, v) if side == 0 else (v, u))
        placed[side].append(u)

    keep = rng.random((n1, n2)) < density
    weights = rng.uniform(0.5, 1.5, size=(n1, n2)) if weighted else np.ones((n1, n2))
    edges = []
    for u in range(n1):
        for j in range(n2):
            v = n1 + j
            if keep[u, j] or (u, v) in tree:
                edges.append((u, v, float(weights[u, j])))
    graph = WeightedGraph(n1 + n2, edges)
    partition = Partition.from_sizes([n1, n2])
    if two_coloring(graph) is None:  # pragma: no cover - only cross edges are added
        raise GeneratorError("generated graph is not bipartite")
    params = {"density": density, "weighted": weighted}
    # Spectrum of a bipartite walk is symmetric; only +-1 are forced.
    return _finish(graph, partition, "bipartite", seed, np.array([1.0, -1.0]), None, params,
                   check_regular=False)
