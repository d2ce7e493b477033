"""Ensembles of runs: signatures, Hamming clustering and empirical (eps, delta)."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ._rng import derive_seed, make_rng
from .dynamics import TransitionOperator, canonical_variant, run
from .graph import Partition, WeightedGraph, volume_spread
from .spectral import SpectralSummary, check_hypotheses, chi_basis

DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 0.4
PAIR_CAP = 100
Z95 = 1.959963984540054

# A labeling strategy maps (graph, seed) to one Boolean label per node.
Strategy = Callable[[WeightedGraph, int], np.ndarray]


def default_ell(n: int) -> int:
    return max(1, math.ceil(4 * math.log2(max(n, 2))))


def constant_labels(graph: WeightedGraph, seed: int) -> np.ndarray:
    """Every node outputs 1; agrees on every pair."""
    return np.ones(graph.n, dtype=bool)


def coin_labels(graph: WeightedGraph, seed: int) -> np.ndarray:
    """Independent fair coin per node."""
    return make_rng(seed, "coin").integers(0, 2, graph.n).astype(bool)


def auto_round(graph: WeightedGraph, partition: Partition, variant: str = "standard",
               summary: SpectralSummary | None = None) -> int:
    """Middle of the labeling window; even-labeled variants move to the next even round."""
    t = check_hypotheses(graph, partition, summary).auto_round()
    if canonical_variant(variant) != "standard" and t % 2:
        t += 1
    return t


class _Labeler:
    """Callable (seed) -> labels at a fixed round for a dynamics variant or a strategy."""

    def __init__(self, graph, variant, t):
        self.graph = graph
        self.t = t
        if callable(variant):
            self.strategy = variant
            self.name = getattr(variant, "__name__", "custom")
        else:
            self.strategy = None
            self.name = canonical_variant(variant)
            self.op = TransitionOperator(graph)

    def __call__(self, seed: int) -> np.ndarray:
        if self.strategy is not None:
            return np.asarray(self.strategy(self.graph, seed), dtype=bool)
        tr = run(self.graph, self.t, seed, self.name, history_cap=0, operator=self.op,
                 check_connected=False)
        return tr.label(self.t)


def _collect(labeler: _Labeler, seeds, workers: int | None) -> np.ndarray:
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cols = list(pool.map(labeler, seeds))
    else:
        cols = [labeler(s) for s in seeds]
    return np.column_stack(cols)


def _resolve_round(graph, partition, variant, round_selector, summary):
    if round_selector == "auto":
        if partition is None:
            raise ValueError("automatic round selection needs the partition")
        if callable(variant):
            return 0
        return auto_round(graph, partition, variant, summary)
    t = int(round_selector)
    if t < 1 and not callable(variant):
        raise ValueError("round must be >= 1")
    return t


@dataclass(frozen=True)
class SignatureMatrix:
    """n x ell Boolean signatures; column j comes from run j at ``rounds[j]``."""

    bits: np.ndarray
    rounds: np.ndarray
    seeds: np.ndarray

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.shape[1] < 1:
            raise ValueError("need an n x ell matrix with ell >= 1")

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    @property
    def ell(self) -> int:
        return self.bits.shape[1]


def build_signatures(graph: WeightedGraph, variant="standard", round_selector="auto", ell: int | None = None,
                     seed: int = 0, partition: Partition | None = None, summary: SpectralSummary | None = None,
                     seeds=None, workers: int | None = None) -> SignatureMatrix:
    """Run ``ell`` independent labelings; run j uses a seed derived from (seed, j).

    ``seeds`` overrides the derived per-run seeds (and fixes ``ell``).
    """
    if seeds is None:
        ell = default_ell(graph.n) if ell is None else ell
        if ell < 1:
            raise ValueError("ell must be >= 1")
        seeds = [derive_seed(seed, "signature", j) for j in range(ell)]
    seeds = [int(s) for s in seeds]
    t = _resolve_round(graph, partition, variant, round_selector, summary)
    bits = _collect(_Labeler(graph, variant, t), seeds, workers)
    return SignatureMatrix(bits, np.full(len(seeds), t), np.array(seeds, dtype=np.int64))


def hamming_matrix(signatures) -> np.ndarray:
    """h(u, v) = number of columns where the rows of u and v differ."""
    S = signatures.bits if isinstance(signatures, SignatureMatrix) else np.asarray(signatures)
    S = S.astype(np.int64)
    h = S @ (1 - S).T
    return h + h.T


@dataclass(frozen=True)
class ClusterResult:
    assignment: np.ndarray
    num_clusters: int
    consistent: bool


def threshold_cluster(hamming, alpha: float, beta: float, ell: int) -> ClusterResult:
    """Components of the graph {h < alpha ell}; inconsistent if some component holds a pair with h >= beta ell."""
    if not 0 <= alpha <= beta <= 1:
        raise ValueError("need 0 <= alpha <= beta <= 1")
    h = np.asarray(hamming)
    close = h < alpha * ell
    np.fill_diagonal(close, False)
    k, labels = connected_components(csr_matrix(close), directed=False)
    same = labels[:, None] == labels[None, :]
    consistent = not bool((same & (h >= beta * ell)).any())
    return ClusterResult(labels, int(k), consistent)


def accuracy(predicted, truth) -> float:
    """Fraction of nodes on the best one-to-one matching of predicted to true clusters."""
    p = np.unique(np.asarray(predicted), return_inverse=True)[1]
    q = np.unique(np.asarray(truth), return_inverse=True)[1]
    table = np.zeros((p.max() + 1, q.max() + 1), dtype=np.int64)
    np.add.at(table, (p, q), 1)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / p.size)


def same_partition(predicted, truth) -> bool:
    """Equal as set partitions (labels may be permuted)."""
    p = np.unique(np.asarray(predicted), return_inverse=True)[1]
    q = np.unique(np.asarray(truth), return_inverse=True)[1]
    pairs = np.unique(np.stack([p, q]), axis=1)
    return pairs.shape[1] == p.max() + 1 == q.max() + 1


def _pair_extremes(h_frac: np.ndarray, truth: np.ndarray):
    same = truth[:, None] == truth[None, :]
    np.fill_diagonal(same, False)
    cross = truth[:, None] != truth[None, :]
    eps = float(h_frac[same].max()) if same.any() else 0.0
    delta = float((1.0 - h_frac)[cross].max()) if cross.any() else 0.0
    return eps, delta


@dataclass
class EvalReport:
    eps_hat: float
    delta_hat: float
    alpha: float
    beta: float
    ell: int
    round: int
    assignment: np.ndarray
    num_clusters: int
    consistent: bool
    accuracy: float
    exact: bool
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "eps_hat": self.eps_hat, "delta_hat": self.delta_hat,
            "alpha": self.alpha, "beta": self.beta, "ell": self.ell, "round": self.round,
            "num_clusters": self.num_clusters, "consistent": self.consistent,
            "accuracy": self.accuracy, "exact_recovery": self.exact,
            "assignment": [int(a) for a in self.assignment], **self.params,
        }


def evaluate(graph: WeightedGraph, partition: Partition, variant="standard", round_selector="auto",
             ell: int | None = None, seed: int = 0, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
             summary: SpectralSummary | None = None, workers: int | None = None) -> EvalReport:
    sig = build_signatures(graph, variant, round_selector, ell, seed, partition, summary, workers=workers)
    h = hamming_matrix(sig)
    eps, delta = _pair_extremes(h / sig.ell, partition.assignment)
    cl = threshold_cluster(h, alpha, beta, sig.ell)
    return EvalReport(eps, delta, alpha, beta, sig.ell, int(sig.rounds[0]), cl.assignment,
                      cl.num_clusters, cl.consistent, accuracy(cl.assignment, partition.assignment),
                      same_partition(cl.assignment, partition.assignment),
                      {"variant": variant if isinstance(variant, str) else getattr(variant, "__name__", "custom"),
                       "seed": seed})


@dataclass(frozen=True)
class EpsDelta:
    eps: float
    delta: float
    eps_radius: float
    delta_radius: float
    trials: int
    eps_pair: tuple | None
    delta_pair: tuple | None

    def to_dict(self) -> dict:
        return {"eps_hat": self.eps, "delta_hat": self.delta, "eps_radius": self.eps_radius,
                "delta_radius": self.delta_radius, "trials": self.trials,
                "eps_pair": self.eps_pair, "delta_pair": self.delta_pair, "confidence": 0.95}


def _radius(p: float, trials: int) -> float:
    return Z95 * math.sqrt(p * (1.0 - p) / trials)


def estimate_epsilon_delta(graph: WeightedGraph, partition: Partition, variant="standard", round_selector="auto",
                           trials: int = 500, seed: int = 0, summary: SpectralSummary | None = None,
                           workers: int | None = None) -> EpsDelta:
    """Worst same-community disagreement and worst cross-community agreement over ``trials`` runs.

    Radii are 95% normal-approximation half-widths of the two frequencies.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    seeds = [derive_seed(seed, "trial", j) for j in range(trials)]
    t = _resolve_round(graph, partition, variant, round_selector, summary)
    L = _collect(_Labeler(graph, variant, t), seeds, workers).astype(np.int64)
    agree = (L @ L.T + (1 - L) @ (1 - L).T) / trials
    truth = partition.assignment
    same = truth[:, None] == truth[None, :]
    np.fill_diagonal(same, False)
    cross = ~(truth[:, None] == truth[None, :])
    eps = delta = 0.0
    eps_pair = delta_pair = None
    if same.any():
        dis = np.where(same, 1.0 - agree, -1.0)
        u, v = np.unravel_index(np.argmax(dis), dis.shape)
        eps, eps_pair = float(dis[u, v]), (int(min(u, v)), int(max(u, v)))
    if cross.any():
        ag = np.where(cross, agree, -1.0)
        u, v = np.unravel_index(np.argmax(ag), ag.shape)
        delta, delta_pair = float(ag[u, v]), (int(min(u, v)), int(max(u, v)))
    return EpsDelta(eps, delta, _radius(eps, trials), _radius(delta, trials), trials, eps_pair, delta_pair)


# --- Monte-Carlo checks on the stepwise projection y -----------------------

def _sample_y(graph, partition, trials, seed):
    chi = chi_basis(graph, partition)
    rng = make_rng(seed, "mc-init")
    X = rng.integers(0, 2, (trials, graph.n)) * 2.0 - 1.0
    return chi.gammas(X) @ chi.vectors


@dataclass(frozen=True)
class ProjectionFloor:
    frequency: np.ndarray
    y_floor: float
    trials: int
    max_block_deviation: float

    @property
    def min_frequency(self) -> float:
        return float(self.frequency.min())


def mc_projection_floor(graph: WeightedGraph, partition: Partition, trials: int = 1000,
                        seed: int = 0) -> ProjectionFloor:
    """Per-node frequency of |y(u)| >= 1/(Delta n) over Rademacher initial states."""
    if trials < 500:
        raise ValueError("need at least 500 trials")
    Y = _sample_y(graph, partition, trials, seed)
    floor = 1.0 / (volume_spread(graph) * graph.n)
    freq = (np.abs(Y) >= floor).mean(axis=0)
    # y is block-constant by construction; record how far from that the numbers are.
    dev = 0.0
    for b in partition.blocks():
        dev = max(dev, float(np.abs(Y[:, b] - Y[:, b[:1]]).max()))
    return ProjectionFloor(freq, floor, trials, dev)


@dataclass(frozen=True)
class SignSeparation:
    pairs: np.ndarray
    frequency: np.ndarray
    same_pairs: np.ndarray
    same_frequency: np.ndarray
    trials: int

    @property
    def min_frequency(self) -> float:
        return float(self.frequency.min())


def _sample_pairs(mask, cap, rng):
    u, v = np.nonzero(np.triu(mask, 1))
    pairs = np.column_stack([u, v])
    if len(pairs) > cap:
        pairs = pairs[np.sort(rng.choice(len(pairs), cap, replace=False))]
    return pairs


def mc_sign_separation(graph: WeightedGraph, partition: Partition, trials: int = 1000, seed: int = 0,
                       pair_cap: int = PAIR_CAP) -> SignSeparation:
    """Frequency of sgn y(u) != sgn y(v) for up to ``pair_cap`` cross pairs (and as many same pairs)."""
    Y = _sample_y(graph, partition, trials, seed)
    S = np.sign(np.where(np.abs(Y) <= 1e-12, 0.0, Y))
    truth = partition.assignment
    rng = make_rng(seed, "mc-pairs")
    cross = _sample_pairs(truth[:, None] != truth[None, :], pair_cap, rng)
    same = _sample_pairs(truth[:, None] == truth[None, :], pair_cap, rng)

    def freq(pairs):
        if len(pairs) == 0:
            return np.empty(0)
        return (S[:, pairs[:, 0]] != S[:, pairs[:, 1]]).mean(axis=0)

    return SignSeparation(cross, freq(cross), same, freq(same), trials)
