import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from avgdyn.errors import DisconnectedGraphError, InvariantViolation
from avgdyn.generators import BlockSpec, generate_bipartite, generate_homogeneous_blocks
from avgdyn.graph import NotVolumeRegularError, Partition, WeightedGraph
from avgdyn.spectral import (check_hypotheses, cheeger_floor, chi_basis, decompose, evaluate_hypotheses,
                             is_clustered_volume_regular, multiplets, stepwise_flags, stepwise_structure,
                             window_bounds)

from .helpers import complete, cycle, parts, path, triangle, unit_graph


def k22():
    return unit_graph(4, [(0, 2), (0, 3), (1, 2), (1, 3)])


# --- decompose -------------------------------------------------------------------

@pytest.mark.parametrize("graph, expected", [
    (k22(), [1, 0, 0, -1]),
    (triangle(), [1, -0.5, -0.5]),
    (cycle(4), [1, 0, 0, -1]),
])
def test_decompose_examples(graph, expected):
    np.testing.assert_allclose(decompose(graph).eigenvalues, expected, atol=1e-12)


def test_decompose_rejects_disconnected():
    with pytest.raises(DisconnectedGraphError):
        decompose(WeightedGraph(4, [(0, 1, 1.0), (2, 3, 1.0)]))


def test_decompose_size_limit():
    with pytest.raises(ValueError):
        decompose(path(10), dense_limit=8)


def test_jacobi_and_lapack_agree():
    rep = generate_homogeneous_blocks(BlockSpec([5, 7, 6], [[1, .2, .1], [.2, .8, .3], [.1, .3, .5]]))
    a = decompose(rep.graph, method="jacobi")
    b = decompose(rep.graph, method="lapack")
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-12)
    for s in (a, b):
        assert s.residuals(rep.graph).max() < 1e-12


@st.composite
def connected_graphs(draw):
    n = draw(st.integers(2, 30))
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    W = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < 0.4)
    W = np.triu(W, 1)
    for i in range(n - 1):
        W[i, i + 1] += 0.2
    if draw(st.booleans()):
        W += np.diag(rng.uniform(0, 1, n))
    return WeightedGraph.from_dense(W + np.triu(W, 1).T)


@settings(max_examples=40, deadline=None)
@given(connected_graphs())
def test_decomposition_invariants(g):
    s = decompose(g)
    assert s.lam(1) == pytest.approx(1, abs=1e-9)
    v1 = s.p_vectors[:, 0]
    np.testing.assert_allclose(v1 / v1[0], 1, atol=1e-9)
    assert np.all(np.abs(s.eigenvalues) <= 1 + 1e-9)
    assert np.all(np.diff(s.eigenvalues) <= 1e-15)
    assert s.residuals(g).max() <= 1e-8
    assert s.p_residuals(g).max() <= 1e-7
    assert s.gram_residual() <= 1e-8


def test_non_bipartite_lambda_n_above_minus_one():
    assert decompose(triangle()).eigenvalues[-1] > -1 + 1e-9
    assert decompose(cycle(6)).eigenvalues[-1] == pytest.approx(-1, abs=1e-9)


# --- stepwise ----------------------------------------------------------------

def test_stepwise_k22():
    s = decompose(k22())
    flags = stepwise_flags(s, parts([0, 1], [2, 3]))
    assert flags[0] and flags[-1]
    v = s.p_vectors[:, -1]
    np.testing.assert_allclose(np.abs(v / v[0]), 1)


def test_stepwise_triangle():
    s = decompose(triangle())
    p = parts([0], [1, 2])
    flags = stepwise_flags(s, p)
    assert flags.sum() == 2
    st_ = stepwise_structure(s, p)
    lam = st_.stepwise_eigenvalues
    assert sorted(lam) == pytest.approx([-0.5, 1])
    # the stepwise vector at -1/2 has steps proportional to (1, -1/2)
    from avgdyn.spectral import adapted_basis
    b = adapted_basis(s, p)
    i = [j for j in st_.stepwise_indices if abs(b.eigenvalues[j] + 0.5) < 1e-9][0]
    v = b.n_vectors[:, i] / np.sqrt(s.volumes)
    assert v[1] / v[0] == pytest.approx(-0.5)
    assert v[2] == pytest.approx(v[1])


def test_stepwise_cycle_adjacent_split():
    # {0,1}|{2,3} on C4 is volume regular: (1,1,-1,-1) is stepwise at eigenvalue 0.
    s = decompose(cycle(4))
    assert stepwise_flags(s, parts([0, 1], [2, 3])).sum() == 2


def test_stepwise_path_not_regular():
    s = decompose(path(4))
    assert stepwise_flags(s, parts([0, 1], [2, 3])).sum() < 2


def test_multiplets():
    groups = multiplets(np.array([1.0, 0.5, 0.5 - 1e-9, 0.2, -0.3, -0.3]))
    assert [g.tolist() for g in groups] == [[0], [1, 2], [3], [4, 5]]


def test_degenerate_multiplet_basis_independent():
    # Two blocks with identical intra structure: the -c/d eigenvalue is highly degenerate,
    # and the stepwise eigenvalue sits alone; counts do not depend on the solver's basis.
    rep = generate_homogeneous_blocks(BlockSpec([6, 6], [[1, 1], [1, 1]]))
    for method in ("jacobi", "lapack"):
        s = decompose(rep.graph, method=method)
        assert stepwise_structure(s, rep.partition).ok


# --- clustered ---------------------------------------------------------------

def test_clustered_examples():
    rep = generate_homogeneous_blocks(BlockSpec([8, 8], [[1, 0.05], [0.05, 1]]))
    res = is_clustered_volume_regular(rep.graph, rep.partition)
    assert res and list(res.stepwise_indices) == [0, 1]
    res = is_clustered_volume_regular(k22(), parts([0, 1], [2, 3]))
    assert not res and list(res.stepwise_indices) == [0, 3]
    assert is_clustered_volume_regular(path(5), Partition.trivial(5))


def test_clustered_requires_volume_regular():
    with pytest.raises(NotVolumeRegularError):
        is_clustered_volume_regular(path(4), parts([0, 1], [2, 3]))


# --- hypotheses and window -----------------------------------------------------

def test_t1_formula_example():
    h = evaluate_hypotheses(n=100, k=2, n_min=50, n_max=50, delta=2.0,
                            lambda_2=0.95, lambda_k=0.9, lambda_k1=0.5)
    assert h.t1 == pytest.approx(math.log(2 * math.sqrt(200) / (0.05 * 0.005)) / math.log(1.8), rel=1e-12)
    assert h.t2 == pytest.approx(0.9 / (2 * 0.05))


def test_equal_top_gives_infinite_t2():
    t1, t2 = window_bounds(0.9, 0.9, 0.3, 1.0, 100)
    assert math.isinf(t2) and math.isfinite(t1)


def test_max_volume_boundary():
    kw = dict(n=2500, k=3, n_max=624, delta=1.0, lambda_2=0.9, lambda_k=0.9, lambda_k1=0.01)
    assert not evaluate_hypotheses(n_min=624, **kw).checks["max_volume"].holds
    assert evaluate_hypotheses(n_min=625, **kw).checks["max_volume"].holds


def test_nonpositive_lambda_k1_uses_modulus():
    h = evaluate_hypotheses(100, 2, 50, 50, 1.0, 0.9, 0.9, -0.2)
    assert not h.gap_applicable
    assert h.rho == 0.2
    assert math.isfinite(h.t1)


def test_window_rounds_and_auto_round():
    h = evaluate_hypotheses(100, 2, 50, 50, 1.0, 0.95, 0.94, 0.01)
    first, last = h.window_rounds()
    assert first == math.floor(h.t1) + 1 and last == math.floor(h.t2)
    assert first <= h.auto_round() <= last


@st.composite
def hypothesis_inputs(draw):
    """Parameters that land inside the theorem's region most of the time."""
    k = draw(st.integers(3, 6))
    delta = draw(st.floats(1.0, 1.3))
    n_min = draw(st.integers(int(625 * delta ** 2) + 1, 20000))
    n = k * n_min
    gap = draw(st.floats(1e-6, 0.05))
    lam2 = 1 - gap
    lamk = lam2 - draw(st.floats(0, 1)) * 2.5 * gap
    lamk1 = lamk * draw(st.floats(1e-4, 0.5))
    return n, k, n_min, delta, lam2, lamk, lamk1


@settings(max_examples=300, deadline=None)
@given(hypothesis_inputs())
def test_hypotheses_imply_nonempty_window(params):
    n, k, n_min, delta, lam2, lamk, lamk1 = params
    h = evaluate_hypotheses(n, k, n_min, n_min, delta, lam2, lamk, lamk1)
    assume(h.all_hold)
    assert h.t1 <= h.t2


def test_check_hypotheses_on_generated_instance():
    rep = generate_homogeneous_blocks(BlockSpec([30, 30], [[1, 0.01], [0.01, 1]]))
    h = check_hypotheses(rep.graph, rep.partition)
    assert h.clustered
    assert h.checks["connected"].holds
    assert h.lambda_2 == pytest.approx(rep.predicted_stepwise[1])
    assert h.rho == pytest.approx(rep.predicted_rest_bound)
    assert h.to_dict()["T2"] == "inf" or math.isfinite(h.t2)


# --- Cheeger -------------------------------------------------------------------

def test_cheeger_examples():
    assert cheeger_floor(decompose(complete(4)), complete(4)) == pytest.approx(1 / 32)
    assert 1 - decompose(complete(4)).lam(2) == pytest.approx(4 / 3)
    assert cheeger_floor(decompose(path(2)), path(2)) == pytest.approx(1 / 8)


@settings(max_examples=30, deadline=None)
@given(connected_graphs())
def test_cheeger_holds(g):
    cheeger_floor(decompose(g), g)


def test_cheeger_violation_raises():
    s = decompose(path(3))
    fake = type(s)(np.array([1.0, 1.0, 0.0]), s.n_vectors, s.volumes, s.method)
    with pytest.raises(InvariantViolation):
        cheeger_floor(fake, path(3))


# --- chi basis -------------------------------------------------------------------

def test_chi_equal_volumes():
    chi = chi_basis(cycle(4), parts([0, 1], [2, 3]))
    np.testing.assert_allclose(chi.vectors[0], [1, 1, -1, -1])


def test_chi_unequal_volumes():
    chi = chi_basis(path(3), parts([0], [1, 2]))
    np.testing.assert_allclose(chi.vectors[0], [math.sqrt(3), -1 / math.sqrt(3), -1 / math.sqrt(3)])
    assert chi.norms_sq[0] == pytest.approx(4)


def test_chi_three_singletons():
    g = triangle().scaled(0.5)
    chi = chi_basis(g, parts([0], [1], [2]))
    r2 = math.sqrt(2)
    np.testing.assert_allclose(chi.vectors, [[r2, -1 / r2, -1 / r2], [0, 1, -1]], atol=1e-15)
    assert chi.vectors[0] @ (g.volumes * chi.vectors[1]) == pytest.approx(0, abs=1e-15)


def test_chi_needs_two_blocks():
    with pytest.raises(ValueError):
        chi_basis(path(3), Partition.trivial(3))


# --- bipartite symmetry ----------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_bipartite_sign_flip_eigenvectors(seed):
    rep = generate_bipartite(9, 14, 0.3, weighted=True, seed=seed)
    g = rep.graph
    s = decompose(g)
    lam = np.sort(s.eigenvalues)
    np.testing.assert_allclose(lam, -lam[::-1], atol=1e-8)
    side = np.where(rep.partition.assignment == 0, 1.0, -1.0)
    P = g.adjacency / g.volumes[:, None]
    for i in range(g.n):
        v = s.p_vectors[:, i] * side
        r = np.linalg.norm(P @ v + s.eigenvalues[i] * v) / np.linalg.norm(v)
        assert r <= 1e-7
