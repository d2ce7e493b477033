"""Dense spectral oracle for the random walk P = D^-1 W.

Everything here is verification machinery: the dynamics never needs an
eigenvector, but the checks on stepwise structure, the labeling window and
the per-round bounds all do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedGraphError, EmptyWindowError, InvariantViolation
from .graph import (NotVolumeRegularError, Partition, WeightedGraph, is_connected,
                    is_volume_regular, volume_spread)
from .jacobi import jacobi_eigh

DENSE_LIMIT = 4096
JACOBI_LIMIT = 256
MULTIPLET_TOL = 1e-7
STEPWISE_TOL = 1e-6
# |lambda_2 - lambda_k| below this is treated as lambda_k == lambda_2.
EQUAL_TOL = 1e-10


@dataclass(frozen=True)
class SpectralSummary:
    """Eigenpairs of N = D^-1/2 W D^-1/2, eigenvalues in descending order.

    ``n_vectors[:, i]`` is the unit N-eigenvector w_i; the matching
    P-eigenvector is ``D^-1/2 w_i`` (see :attr:`p_vectors`).
    """

    eigenvalues: np.ndarray
    n_vectors: np.ndarray
    volumes: np.ndarray
    method: str

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def p_vectors(self) -> np.ndarray:
        return self.n_vectors / np.sqrt(self.volumes)[:, None]

    def lam(self, i: int) -> float:
        """1-based eigenvalue accessor; ``lam(1) == 1`` on a connected graph."""
        return float(self.eigenvalues[i - 1])

    def residuals(self, graph: WeightedGraph) -> np.ndarray:
        """||N w_i - lambda_i w_i|| for every i."""
        N = normalized_adjacency(graph)
        return np.linalg.norm(N @ self.n_vectors - self.n_vectors * self.eigenvalues, axis=0)

    def p_residuals(self, graph: WeightedGraph) -> np.ndarray:
        """||P v_i - lambda_i v_i|| / ||v_i|| computed with P applied directly."""
        V = self.p_vectors
        PV = (graph.adjacency @ V) / graph.volumes[:, None]
        return np.linalg.norm(PV - V * self.eigenvalues, axis=0) / np.linalg.norm(V, axis=0)

    def gram_residual(self) -> float:
        W = self.n_vectors
        return float(np.abs(W.T @ W - np.eye(self.n)).max())

    def to_dict(self) -> dict:
        return {"method": self.method, "eigenvalues": [float(x) for x in self.eigenvalues]}


def normalized_adjacency(graph: WeightedGraph) -> np.ndarray:
    s = 1.0 / np.sqrt(graph.volumes)
    N = graph.adjacency.toarray() * s[:, None] * s[None, :]
    return (N + N.T) * 0.5


def decompose(graph: WeightedGraph, method: str = "auto", dense_limit: int = DENSE_LIMIT,
              jacobi_limit: int = JACOBI_LIMIT) -> SpectralSummary:
    """Full eigendecomposition of N.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    ``jacobi_limit`` vertices, LAPACK above).
    """
    if graph.n > dense_limit:
        raise ValueError(f"graph has {graph.n} vertices, dense limit is {dense_limit}")
    if not is_connected(graph):
        raise DisconnectedGraphError("spectral oracle needs a connected graph")
    if method == "auto":
        method = "jacobi" if graph.n <= jacobi_limit else "lapack"
    N = normalized_adjacency(graph)
    if method == "jacobi":
        vals, vecs, _ = jacobi_eigh(N)
    elif method == "lapack":
        vals, vecs = np.linalg.eigh(N)
    else:
        raise ValueError(f"unknown method {method!r}")
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    # Deterministic signs: the largest-magnitude entry of each vector is positive.
    pivot = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    vecs = vecs * signs
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralSummary(vals, vecs, graph.volumes, method)


def multiplets(eigenvalues: np.ndarray, tol: float = MULTIPLET_TOL) -> list[np.ndarray]:
    """Group indices of (descending) eigenvalues whose consecutive gaps are <= tol."""
    groups, start = [], 0
    for i in range(1, eigenvalues.size + 1):
        if i == eigenvalues.size or eigenvalues[i - 1] - eigenvalues[i] > tol:
            groups.append(np.arange(start, i))
            start = i
    return groups


def _indicator_frame(volumes, partition: Partition) -> np.ndarray:
    """Orthonormal columns D^1/2 1_{V_i} / sqrt(vol(V_i))."""
    ind = partition.indicators()
    Q = ind * np.sqrt(volumes)[:, None]
    return Q / np.linalg.norm(Q, axis=0)


@dataclass(frozen=True)
class AdaptedBasis:
    """Eigenbasis rotated inside each multiplet so stepwise directions come first."""

    n_vectors: np.ndarray
    eigenvalues: np.ndarray
    groups: list = field(repr=False)


def adapted_basis(summary: SpectralSummary, partition: Partition,
                  multiplet_tol: float = MULTIPLET_TOL) -> AdaptedBasis:
    if partition.n != summary.n:
        raise ValueError("partition size does not match the spectrum")
    Q = _indicator_frame(summary.volumes, partition)
    W = np.array(summary.n_vectors)
    lam = np.array(summary.eigenvalues)
    groups = multiplets(summary.eigenvalues, multiplet_tol)
    for g in groups:
        if g.size < 2:
            continue
        # Principal vectors of span(W_g) w.r.t. the indicator span, most aligned first.
        U, _, _ = np.linalg.svd(W[:, g].T @ Q, full_matrices=True)
        W[:, g] = W[:, g] @ U
        lam[g] = (summary.eigenvalues[g][:, None] * U ** 2).sum(axis=0)
    return AdaptedBasis(W, lam, groups)


def _block_deviation(v: np.ndarray, partition: Partition) -> float:
    sizes = partition.sizes
    means = np.bincount(partition.assignment, weights=v, minlength=partition.k) / sizes
    return float(np.abs(v - means[partition.assignment]).max())


def stepwise_flags(summary: SpectralSummary, partition: Partition, tol: float = STEPWISE_TOL,
                   basis: AdaptedBasis | None = None) -> np.ndarray:
    """Per-eigenvector flag: constant on blocks up to ``tol * max|v|``.

    Inside a degenerate multiplet the flags refer to the adapted basis, so
    the number of flags there equals the dimension of the stepwise part of
    the eigenspace regardless of the solver's choice of basis.
    """
    basis = adapted_basis(summary, partition) if basis is None else basis
    V = basis.n_vectors / np.sqrt(summary.volumes)[:, None]
    flags = np.zeros(summary.n, dtype=bool)
    for i in range(summary.n):
        v = V[:, i]
        flags[i] = _block_deviation(v, partition) <= tol * np.abs(v).max()
    return flags


def indicator_projection_residual(summary: SpectralSummary, partition: Partition,
                                  indices, basis: AdaptedBasis | None = None) -> np.ndarray:
    """Distance of each normalized D^1/2 1_{V_i} from the span of the given basis vectors."""
    basis = adapted_basis(summary, partition) if basis is None else basis
    Q = _indicator_frame(summary.volumes, partition)
    B = basis.n_vectors[:, np.asarray(indices, dtype=int)]
    return np.linalg.norm(Q - B @ (B.T @ Q), axis=0)


@dataclass(frozen=True)
class StepwiseStructure:
    ok: bool
    stepwise_indices: np.ndarray
    stepwise_eigenvalues: np.ndarray
    residuals: np.ndarray

    def __bool__(self):
        return self.ok


def stepwise_structure(summary: SpectralSummary, partition: Partition,
                       tol: float = STEPWISE_TOL) -> StepwiseStructure:
    """All stepwise eigen-directions and how well they span the indicator vectors."""
    basis = adapted_basis(summary, partition)
    flags = stepwise_flags(summary, partition, tol, basis)
    idx = np.flatnonzero(flags)
    res = indicator_projection_residual(summary, partition, idx, basis)
    ok = idx.size >= partition.k and bool(res.max() <= tol)
    return StepwiseStructure(ok, idx, basis.eigenvalues[idx], res)


def is_clustered_volume_regular(graph: WeightedGraph, partition: Partition,
                                summary: SpectralSummary | None = None,
                                tol: float = STEPWISE_TOL, vr_tol: float = 1e-9) -> StepwiseStructure:
    """Volume-regular graph whose k stepwise eigenvectors carry the k largest eigenvalues."""
    check = is_volume_regular(graph, partition, vr_tol)
    if not check:
        raise NotVolumeRegularError(f"graph is not volume regular: {check.witness}")
    summary = decompose(graph) if summary is None else summary
    k = partition.k
    basis = adapted_basis(summary, partition)
    flags = stepwise_flags(summary, partition, tol, basis)
    top = np.arange(k)
    res = indicator_projection_residual(summary, partition, top, basis)
    ok = bool(flags[:k].all() and res.max() <= tol)
    idx = np.flatnonzero(flags)
    return StepwiseStructure(ok, idx, basis.eigenvalues[idx], res)


# --- labeling window -------------------------------------------------------

@dataclass(frozen=True)
class Hypothesis:
    holds: bool
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        """rhs - lhs (positive means slack for <=-type conditions)."""
        return self.rhs - self.lhs


@dataclass(frozen=True)
class HypothesisReport:
    n: int
    k: int
    n_min: int
    n_max: int
    delta: float
    lambda_2: float
    lambda_k: float
    lambda_k1: float
    rho: float
    checks: dict
    t1: float
    t2: float
    scale_factor: float = 1.0
    clustered: bool | None = None

    @property
    def gap_applicable(self) -> bool:
        """True when lambda_{k+1} > 0 and dominates the rest of the spectrum in modulus."""
        return self.lambda_k1 > 0 and math.isclose(self.lambda_k1, self.rho, rel_tol=0, abs_tol=1e-12)

    @property
    def all_hold(self) -> bool:
        return all(h.holds for h in self.checks.values())

    @property
    def window_nonempty(self) -> bool:
        return math.isfinite(self.t1) and self.t1 <= self.t2

    @property
    def equal_top(self) -> bool:
        return abs(self.lambda_2 - self.lambda_k) <= EQUAL_TOL

    def window_rounds(self) -> tuple[int, float]:
        """First and last integer round in (T1, T2]; the last may be ``inf``."""
        if not math.isfinite(self.t1):
            raise EmptyWindowError("T1 is undefined or infinite")
        first = math.floor(self.t1) + 1
        last = math.floor(self.t2) if math.isfinite(self.t2) else math.inf
        if first > last:
            raise EmptyWindowError(f"no integer round in ({self.t1:.4g}, {self.t2:.4g}]")
        return first, last

    def auto_round(self) -> int:
        """Midpoint of the window; for an unbounded window, twice its first round."""
        first, last = self.window_rounds()
        if math.isinf(last):
            return 2 * first
        return int(min(max(math.ceil((self.t1 + self.t2) / 2), first), last))

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else (
                str(x) if isinstance(x, float) and math.isinf(x) else x)
        return {
            "n": self.n, "k": self.k, "n_min": self.n_min, "n_max": self.n_max,
            "delta": self.delta, "scale_factor": self.scale_factor,
            "lambda_2": self.lambda_2, "lambda_k": self.lambda_k,
            "lambda_k_plus_1": num(self.lambda_k1), "rest_spectral_radius": self.rho,
            "gap_applicable": self.gap_applicable, "clustered": self.clustered,
            "checks": {name: {"holds": h.holds, "lhs": num(h.lhs), "rhs": num(h.rhs)}
                       for name, h in self.checks.items()},
            "all_hold": self.all_hold,
            "T1": num(self.t1), "T2": num(self.t2), "window_nonempty": self.window_nonempty,
        }


def window_bounds(lambda_2: float, lambda_k: float, rho: float, delta: float, n: int) -> tuple[float, float]:
    """(T1, T2) with |y(u)| floored at 1/(delta n) and T2 = lambda_k / (2 (1 - lambda_2)).

    ``rho`` stands for lambda_{k+1}; callers pass the largest modulus among
    the non-top-k eigenvalues. T2 is infinite when lambda_k == lambda_2.
    """
    if abs(lambda_2 - lambda_k) <= EQUAL_TOL:
        t2 = math.inf
    else:
        t2 = lambda_k / (2.0 * (1.0 - lambda_2))
    if lambda_k <= 0 or lambda_2 >= 1:
        return math.nan, t2
    y_floor = 1.0 / (delta * n)
    num = math.log(2.0 * math.sqrt(delta * n) / ((1.0 - lambda_2) * y_floor))
    if rho <= 0:
        return 0.0, t2
    if lambda_k <= rho:
        return math.inf, t2
    return num / math.log(lambda_k / rho), t2


def evaluate_hypotheses(n: int, k: int, n_min: int, n_max: int, delta: float,
                        lambda_2: float, lambda_k: float, lambda_k1: float, rho: float | None = None,
                        connected: bool = True, clustered: bool | None = None,
                        scale_factor: float = 1.0) -> HypothesisReport:
    """Evaluate every window hypothesis on concrete numbers."""
    rho = abs(lambda_k1) if rho is None else rho
    checks = {"connected": Hypothesis(bool(connected), float(connected), 1.0)}
    if clustered is not None:
        checks["clustered"] = Hypothesis(bool(clustered), float(clustered), 1.0)
    rhs = math.sqrt(n_min) / 25.0
    checks["max_volume"] = Hypothesis(delta <= rhs, delta, rhs)
    lhs = 2.0 * delta * n_max / n_min
    checks["volume_balance"] = Hypothesis(lhs < k, lhs, float(k))
    checks["block_count"] = Hypothesis(k <= math.sqrt(n), float(k), math.sqrt(n))
    if lambda_k > 0 and rho > 0 and lambda_k > rho:
        rhs = lambda_k * math.log(lambda_k / rho) / (7.0 * math.log(2.0 * delta * n))
    elif lambda_k > 0 and rho == 0:
        rhs = math.inf
    else:
        rhs = -math.inf
    checks["spectral_gap"] = Hypothesis(1.0 - lambda_2 <= rhs, 1.0 - lambda_2, rhs)
    rhs = (7.0 * lambda_2 - 5.0) / 2.0
    checks["lambda_k_floor"] = Hypothesis(lambda_k >= rhs, rhs, lambda_k)
    t1, t2 = window_bounds(lambda_2, lambda_k, rho, delta, n)
    return HypothesisReport(n, k, n_min, n_max, delta, lambda_2, lambda_k, lambda_k1, rho,
                            checks, t1, t2, scale_factor, clustered)


def check_hypotheses(graph: WeightedGraph, partition: Partition,
                     summary: SpectralSummary | None = None) -> HypothesisReport:
    """Window hypotheses and the (T1, T2) window for a concrete instance.

    Volumes are measured after min-volume normalization; the factor that
    normalization divides by is reported as ``scale_factor``.
    """
    summary = decompose(graph) if summary is None else summary
    k = partition.k
    lam = summary.eigenvalues
    if k < 2 or summary.n <= k:
        raise ValueError("need 2 <= k < n to talk about lambda_2, lambda_k, lambda_{k+1}")
    try:
        clustered = bool(is_clustered_volume_regular(graph, partition, summary))
    except NotVolumeRegularError:
        clustered = False
    return evaluate_hypotheses(
        n=graph.n, k=k, n_min=partition.n_min, n_max=partition.n_max,
        delta=volume_spread(graph), lambda_2=float(lam[1]), lambda_k=float(lam[k - 1]),
        lambda_k1=float(lam[k]), rho=float(np.abs(lam[k:]).max()),
        connected=is_connected(graph), clustered=clustered,
        scale_factor=float(graph.volumes.min()))


def cheeger_floor(summary: SpectralSummary, graph: WeightedGraph) -> float:
    """Return 1/(2 Delta^2 n^2) and check that the spectral gap 1 - lambda_2 is at least that."""
    delta = volume_spread(graph)
    floor = 1.0 / (2.0 * delta ** 2 * graph.n ** 2)
    if summary.n >= 2 and 1.0 - summary.lam(2) < floor:
        raise InvariantViolation(f"1 - lambda_2 = {1 - summary.lam(2):.3e} below Cheeger floor {floor:.3e}")
    return floor


# --- generalized Fiedler vectors ------------------------------------------

@dataclass(frozen=True)
class ChiBasis:
    """Stepwise vectors chi_i = sqrt(mh_i/m_i) 1_{V_i} - sqrt(m_i/mh_i) 1_{V_{>i}}, i < k.

    Together with the all-ones vector they are mutually orthogonal in the
    D-inner product, so the top stepwise component of a state ``x`` is
    ``y = sum_i gamma_i chi_i`` with ``gamma_i = x^T D chi_i / ||D^1/2 chi_i||^2``.
    """

    vectors: np.ndarray
    volumes: np.ndarray

    @property
    def norms_sq(self) -> np.ndarray:
        return (self.vectors ** 2 * self.volumes).sum(axis=1)

    def gammas(self, x) -> np.ndarray:
        """Coefficients for a state (n,) or a batch of states (trials, n)."""
        x = np.asarray(x, dtype=float)
        return (x * self.volumes) @ self.vectors.T / self.norms_sq

    def y(self, x) -> np.ndarray:
        return self.gammas(x) @ self.vectors


def chi_basis(graph: WeightedGraph, partition: Partition, tol: float = 1e-9) -> ChiBasis:
    k = partition.k
    if k < 2:
        raise ValueError("chi vectors need k >= 2")
    if partition.n != graph.n:
        raise ValueError("partition size does not match graph")
    vol = graph.volumes
    m = np.bincount(partition.assignment, weights=vol, minlength=k)
    suffix = np.cumsum(m[::-1])[::-1]
    chis = np.zeros((k - 1, graph.n))
    for i in range(k - 1):
        m_hat = suffix[i + 1]
        if m_hat <= 0:
            raise ValueError(f"blocks after {i} have zero volume")
        chis[i, partition.assignment == i] = math.sqrt(m_hat / m[i])
        chis[i, partition.assignment > i] = -math.sqrt(m[i] / m_hat)
    basis = ChiBasis(chis, vol)
    frame = np.vstack([np.ones(graph.n), chis]) * np.sqrt(vol)
    gram = frame @ frame.T
    norms = np.sqrt(np.diag(gram))
    off = np.abs(gram - np.diag(np.diag(gram))) / np.outer(norms, norms)
    if off.max() > tol:
        raise InvariantViolation(f"chi vectors not D-orthogonal (max cosine {off.max():.2e})")
    return basis
