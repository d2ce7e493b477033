"""Averaging dynamics, its even-round and bipartite variants, and run diagnostics."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import fresh_seed, rademacher
from .errors import DisconnectedGraphError, InvariantViolation
from .graph import Partition, WeightedGraph, is_connected, volume_spread
from .spectral import ChiBasis, HypothesisReport, SpectralSummary, chi_basis

VARIANTS = ("standard", "even", "avg-bip")
_ALIASES = {"even-round": "even", "bip": "avg-bip", "avg_bip": "avg-bip"}
HISTORY_CAP = 512
UNLABELED = -1
DEGENERATE_Y = 1e-12


def canonical_variant(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return name


class TransitionOperator:
    """x -> P x, using a dense matrix when the graph is dense enough for BLAS to win."""

    def __init__(self, graph: WeightedGraph, dense_threshold: float = 0.125):
        self.n = graph.n
        adj = graph.adjacency
        if graph.n <= 4096 and adj.nnz >= dense_threshold * graph.n ** 2:
            self._mat = adj.toarray() / graph.volumes[:, None]
        else:
            self._mat = (adj.multiply(1.0 / graph.volumes[:, None])).tocsr()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._mat @ x


@dataclass
class Trajectory:
    """States and labels of one run.

    ``labels[t]`` holds 1/0 where round ``t`` carries a label and -1
    elsewhere. States are stored for every round unless the run exceeded the
    history cap, in which case only the final two are kept.
    """

    variant: str
    seed: int | None
    rounds: int
    states: np.ndarray
    first_stored: int
    labels: np.ndarray
    averages: np.ndarray

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def full_history(self) -> bool:
        return self.first_stored == 0

    @property
    def x0(self) -> np.ndarray:
        return self.state(0)

    def state(self, t: int) -> np.ndarray:
        if not self.first_stored <= t <= self.rounds:
            raise IndexError(f"round {t} not stored (have {self.first_stored}..{self.rounds})")
        return self.states[t - self.first_stored]

    def label(self, t: int) -> np.ndarray:
        if not 0 <= t <= self.rounds:
            raise IndexError(f"round {t} outside 0..{self.rounds}")
        row = self.labels[t]
        if row[0] == UNLABELED:
            raise ValueError(f"round {t} carries no label in the {self.variant} variant")
        return row.astype(bool)

    def labeled_rounds(self) -> np.ndarray:
        return np.flatnonzero(self.labels[:, 0] != UNLABELED)

    def to_csv(self) -> str:
        """Rows ``t,node,x,label`` for every stored round; unlabeled rounds leave label empty."""
        out = io.StringIO()
        out.write("t,node,x,label\n")
        for t in range(self.first_stored, self.rounds + 1):
            x = self.state(t)
            lab = self.labels[t]
            for u in range(self.n):
                lbl = "" if lab[u] == UNLABELED else str(int(lab[u]))
                out.write(f"{t},{u},{float(x[u])!r},{lbl}\n")
        return out.getvalue()


def run(graph: WeightedGraph, rounds: int, seed: int | None = None, variant: str = "standard",
        init=None, history_cap: int = HISTORY_CAP, operator: TransitionOperator | None = None,
        check_connected: bool = True) -> Trajectory:
    """Run the averaging dynamics for ``rounds`` rounds.

    The initial state is Rademacher from ``seed`` unless ``init`` is given.
    Labels: standard compares x^t with x^(t-1) at every t >= 1; ``even``
    compares x^t with x^(t-2) at even t >= 2; ``avg-bip`` compares x^t with
    x^(t-1) at even t >= 2. Ties give label 1.
    """
    variant = canonical_variant(variant)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if check_connected and not is_connected(graph):
        raise DisconnectedGraphError("dynamics requires a connected graph")
    n = graph.n
    if init is None:
        if seed is None:
            seed = fresh_seed()
        x = rademacher(n, seed)
    else:
        x = np.array(init, dtype=float)
        if x.shape != (n,):
            raise ValueError(f"init must have length {n}")
    P = operator or TransitionOperator(graph)
    vol = graph.volumes
    total = vol.sum()

    keep_all = rounds <= history_cap
    history = [x] if keep_all else None
    labels = np.full((rounds + 1, n), UNLABELED, dtype=np.int8)
    averages = np.empty(rounds + 1)
    averages[0] = vol @ x / total
    prev2, prev = None, x
    for t in range(1, rounds + 1):
        cur = P(prev)
        if variant == "standard":
            labels[t] = cur >= prev
        elif t % 2 == 0:
            labels[t] = cur >= (prev2 if variant == "even" else prev)
        averages[t] = vol @ cur / total
        if keep_all:
            history.append(cur)
        prev2, prev = prev, cur
    if keep_all:
        states, first = np.vstack(history), 0
    else:
        states, first = np.vstack([prev2, prev]), rounds - 1
    return Trajectory(variant, seed, rounds, states, first, labels, averages)


def run_standard(graph, rounds, seed=None, **kw) -> Trajectory:
    return run(graph, rounds, seed, "standard", **kw)


def run_even(graph, rounds, seed=None, **kw) -> Trajectory:
    return run(graph, rounds, seed, "even", **kw)


def run_bip(graph, rounds, seed=None, **kw) -> Trajectory:
    return run(graph, rounds, seed, "avg-bip", **kw)


# --- spectral view of a run ------------------------------------------------

@dataclass
class Decomposition:
    """Expansion x^(t) = sum_i lambda_i^t alpha_i v_i of one initial state.

    ``vectors[:, 0]`` is the all-ones vector (so ``alpha[0]`` is the weighted
    average); the other columns have unit D-norm.
    """

    k: int
    eigenvalues: np.ndarray
    vectors: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    y: np.ndarray
    z: np.ndarray
    reconstruction_error: float = 0.0
    span_residual: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.y.size

    def _partial(self, t: int, idx: slice) -> np.ndarray:
        coef = self.eigenvalues[idx] ** t * self.alpha[idx]
        return self.vectors[:, idx] @ coef

    def core(self, t: int) -> np.ndarray:
        """c^(t): contribution of eigenvalues 2..k."""
        return self._partial(t, slice(1, self.k))

    def error(self, t: int) -> np.ndarray:
        """e^(t): contribution of eigenvalues k+1..n."""
        return self._partial(t, slice(self.k, None))

    def spectral_state(self, t: int) -> np.ndarray:
        return self._partial(t, slice(None))

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "alpha": [float(a) for a in self.alpha],
            "gamma": [float(g) for g in self.gamma],
            "reconstruction_error": self.reconstruction_error,
            "span_residual": self.span_residual,
            **self.extras,
        }


def decompose_state(summary: SpectralSummary, partition: Partition, x0,
                    chi: ChiBasis | None = None, graph: WeightedGraph | None = None) -> Decomposition:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (summary.n,) or partition.n != summary.n:
        raise ValueError("state, partition and spectrum sizes differ")
    k = partition.k
    vol = summary.volumes
    V = np.array(summary.p_vectors)
    V[:, 0] = 1.0
    alpha = (x0 * vol) @ V
    alpha[0] /= vol.sum()
    z = V[:, :k] @ alpha[:k]
    if k >= 2:
        if chi is None:
            if graph is None:
                raise ValueError("need the graph or a chi basis for k >= 2")
            chi = chi_basis(graph, partition)
        gamma = chi.gammas(x0)
        y = gamma @ chi.vectors
    else:
        gamma = np.empty(0)
        y = np.zeros_like(x0)
    span = float(np.abs(y - (z - alpha[0])).max())
    return Decomposition(k, summary.eigenvalues, V, alpha, gamma, y, z, span_residual=span)


def decompose_run(graph: WeightedGraph, partition: Partition, summary: SpectralSummary,
                  trajectory: Trajectory, t_max: int | None = None, tol: float = 1e-8,
                  chi: ChiBasis | None = None) -> Decomposition:
    """Spectral expansion of a run, checked against the stored states.

    Raises :class:`InvariantViolation` if any stored round up to ``t_max``
    differs from the spectral sum by more than ``tol`` (sup norm).
    """
    if graph.n != summary.n or trajectory.n != graph.n:
        raise ValueError("graph, spectrum and trajectory sizes differ")
    if not trajectory.full_history:
        raise ValueError("trajectory must keep its full history (raise history_cap)")
    dec = decompose_state(summary, partition, trajectory.x0, chi, graph)
    t_max = trajectory.rounds if t_max is None else min(t_max, trajectory.rounds)
    worst = 0.0
    for t in range(t_max + 1):
        worst = max(worst, float(np.abs(trajectory.state(t) - dec.spectral_state(t)).max()))
    dec.reconstruction_error = worst
    if worst > tol:
        raise InvariantViolation(f"power iteration and spectral sum differ by {worst:.3e}")
    return dec


# --- bound checks ----------------------------------------------------------

@dataclass
class BoundReport:
    asserted: bool
    error_violations: int = 0
    core_violations: int = 0
    sign_violations: int = 0
    first_error_violation: tuple | None = None
    first_core_violation: tuple | None = None
    min_error_margin: float = math.inf
    min_core_margin: float = math.inf
    rounds_checked: int = 0
    core_rounds: int = 0
    mode: str = ""

    @property
    def ok(self) -> bool:
        return self.error_violations == 0 and self.core_violations == 0

    def to_dict(self) -> dict:
        def fin(x):
            return x if math.isfinite(x) else None
        return {
            "asserted": self.asserted, "ok": self.ok, "mode": self.mode,
            "rounds_checked": self.rounds_checked, "core_rounds": self.core_rounds,
            "error_violations": self.error_violations, "core_violations": self.core_violations,
            "core_sign_violations": self.sign_violations,
            "first_error_violation": self.first_error_violation,
            "first_core_violation": self.first_core_violation,
            "min_error_margin": fin(self.min_error_margin), "min_core_margin": fin(self.min_core_margin),
        }


def verify_bounds(dec: Decomposition, hyp: HypothesisReport, t_max: int,
                  equality_tol: float = 1e-9, slack: float = 1e-9) -> BoundReport:
    """Per-round error and core bounds on one decomposed run.

    Error: |e^t(u)| <= rho^t sqrt(Delta n) with rho the largest modulus
    outside the top k. Core, for t <= min(T2, t_max) and y(u) != 0:
    c^t(u) - c^(t+1)(u) has the sign of y(u) and modulus at least
    lambda_k^t (1 - lambda_2) |y(u)|; when lambda_k == lambda_2 the
    difference must equal that quantity. With k >= 3 and lambda_k < lambda_2
    the modulus bound can fail by a hair even though the sign holds, so sign
    failures are also counted on their own. Bounds are only *asserted* when the
    hypotheses hold; otherwise the counts are informational.
    """
    rep = BoundReport(asserted=hyp.all_hold)
    root = math.sqrt(hyp.delta * hyp.n)
    for t in range(t_max + 1):
        margin = hyp.rho ** t * root + slack - np.abs(dec.error(t))
        rep.min_error_margin = min(rep.min_error_margin, float(margin.min()))
        bad = np.flatnonzero(margin < 0)
        if bad.size:
            rep.error_violations += bad.size
            rep.first_error_violation = rep.first_error_violation or (int(bad[0]), t)
    rep.rounds_checked = t_max + 1

    live = np.abs(dec.y) > DEGENERATE_Y
    core_last = t_max if math.isinf(hyp.t2) else min(t_max, math.floor(hyp.t2))
    rep.mode = "equality" if hyp.equal_top else "inequality"
    lam2, lamk = hyp.lambda_2, hyp.lambda_k
    for t in range(core_last + 1):
        diff = dec.core(t) - dec.core(t + 1)
        target = lamk ** t * (1.0 - lam2) * dec.y
        if hyp.equal_top:
            dev = np.abs(diff - target)
            margin = equality_tol - dev
            bad = np.flatnonzero(margin < 0)
        else:
            wrong_sign = live & (np.sign(diff) != np.sign(dec.y))
            rep.sign_violations += int(wrong_sign.sum())
            margin = diff * np.sign(dec.y) - np.abs(target) + slack
            bad = np.flatnonzero(wrong_sign | (live & (margin < 0)))
        if live.any():
            rep.min_core_margin = min(rep.min_core_margin, float(margin[live].min()))
        if bad.size:
            rep.core_violations += bad.size
            rep.first_core_violation = rep.first_core_violation or (int(bad[0]), t)
    rep.core_rounds = core_last + 1
    return rep


@dataclass(frozen=True)
class SignWindowResult:
    degenerate: bool
    ok: bool
    rounds: tuple
    first_violation: tuple | None = None


def check_sign_window(trajectory: Trajectory, dec: Decomposition, hyp: HypothesisReport,
                      y_floor: float | None = None) -> SignWindowResult:
    """sgn(x^t(u) - x^(t+1)(u)) == sgn(y(u)) for every u and integer t in (T1, T2].

    A run is degenerate (and not checked) when min |y(u)| < 1/(Delta n).
    Unbounded windows are checked up to the last stored round.
    """
    y_floor = 1.0 / (hyp.delta * hyp.n) if y_floor is None else y_floor
    if np.abs(dec.y).min() < y_floor:
        return SignWindowResult(True, True, ())
    first, last = hyp.window_rounds()
    last = min(trajectory.rounds - 1, last)
    sy = np.sign(dec.y)
    for t in range(first, int(last) + 1):
        d = trajectory.state(t) - trajectory.state(t + 1)
        bad = np.flatnonzero(np.sign(d) != sy)
        if bad.size:
            return SignWindowResult(False, False, (first, int(last)), (int(bad[0]), t))
    return SignWindowResult(False, True, (first, int(last)))


# --- bipartite helpers -----------------------------------------------------

def bipartite_alpha(graph: WeightedGraph, coloring, x) -> tuple[float, float]:
    """(alpha_1, alpha_n) for the +-1 coloring vector chi of a bipartite graph."""
    chi = np.where(np.asarray(coloring) == 0, 1.0, -1.0)
    vol = graph.volumes
    total = vol.sum()
    x = np.asarray(x, dtype=float)
    return float(vol @ x / total), float((vol * chi) @ x / total)


def bip_detection_time(lambda_2: float, delta: float, n: int, alpha_n: float) -> float:
    """T = log(sqrt(Delta n)/|alpha_n|) / (2 log(1/lambda_2)); 0 when lambda_2 <= 0."""
    if alpha_n == 0:
        return math.inf
    if lambda_2 <= 0:
        return 0.0
    if lambda_2 >= 1:
        return math.inf
    return max(0.0, math.log(math.sqrt(delta * n) / abs(alpha_n)) / (2.0 * math.log(1.0 / lambda_2)))


def bip_detection_round(lambda_2: float, delta: float, n: int, alpha_n: float) -> int:
    """Even round 2*ceil(T) + 2 at which Avg-Bip labels are read."""
    T = bip_detection_time(lambda_2, delta, n, alpha_n)
    if math.isinf(T):
        raise ValueError("alpha_n is zero: the initial state carries no bipartite component")
    return 2 * math.ceil(T) + 2


def bipartite_residuals(graph: WeightedGraph, trajectory: Trajectory, coloring) -> np.ndarray:
    """||x^t - (alpha_1 +- alpha_n chi)|| per stored round (+ on even t, - on odd t)."""
    chi = np.where(np.asarray(coloring) == 0, 1.0, -1.0)
    a1, an = bipartite_alpha(graph, coloring, trajectory.x0)
    out = []
    for t in range(trajectory.first_stored, trajectory.rounds + 1):
        target = a1 + (an if t % 2 == 0 else -an) * chi
        out.append(np.linalg.norm(trajectory.state(t) - target))
    return np.array(out)


def matches_partition_up_to_flip(labels, truth) -> bool:
    """Boolean labels equal a 2-way ground truth, or its complement."""
    labels = np.asarray(labels, dtype=bool)
    truth = np.asarray(truth) != 0
    return bool(np.array_equal(labels, truth) or np.array_equal(labels, ~truth))


def detect_bipartition(graph: WeightedGraph, seed: int, lambda_2: float | None = None,
                       coloring=None):
    """Run Avg-Bip to the detection round and return (labels, round, alpha_n)."""
    from .spectral import decompose
    x = rademacher(graph.n, seed)
    if coloring is None:
        from .graph import two_coloring
        coloring = two_coloring(graph)
        if coloring is None:
            raise ValueError("graph is not bipartite")
    if lambda_2 is None:
        lambda_2 = decompose(graph).lam(2)
    _, an = bipartite_alpha(graph, coloring, x)
    t = bip_detection_round(lambda_2, volume_spread(graph), graph.n, an)
    traj = run(graph, t, seed, "avg-bip", init=x, history_cap=0)
    return traj.label(t), t, an
