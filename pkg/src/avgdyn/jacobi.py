"""Cyclic Jacobi eigensolver for dense symmetric matrices.

Rotations are applied in round-robin (tournament) order: each round pairs
every index with exactly one partner, the n/2 rotations commute, and the
whole round is applied as a handful of vectorised row operations.
"""

from __future__ import annotations

import numpy as np

EPS = np.finfo(float).eps


def round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """m - 1 rounds of disjoint (p, q) pairs covering every pair once; m even."""
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(idx[: m // 2])
        q = np.array(idx[::-1][: m // 2])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        idx = [idx[0], idx[-1]] + idx[1:-1]
    return rounds


def off_norm(A: np.ndarray) -> float:
    return float(np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2)))


def _rotate_rows(M, p, q, c, s):
    Mp = M[p]
    Mq = M[q]
    M[p] = c * Mp - s * Mq
    M[q] = s * Mp + c * Mq


def jacobi_eigh(A, tol: float | None = None, max_sweeps: int = 100):
    """Eigen-decomposition of a real symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues in
    ascending order and orthonormal eigenvectors as columns. ``tol`` is the
    target ratio between the off-diagonal and full Frobenius norms; the
    default sits just above the rounding floor (``n * eps``).
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    n = A.shape[0]
    if n == 0:
        return np.empty(0), np.empty((0, 0)), 0
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix must be symmetric")
    A = (A + A.T) * 0.5
    if tol is None:
        tol = max(n, 10) * EPS

    # Odd sizes get a decoupled dummy index; its rotations are all identities.
    m = n + n % 2
    if m != n:
        padded = np.zeros((m, m))
        padded[:n, :n] = A
        A = padded
    Vt = np.eye(m)
    scale = np.linalg.norm(A)
    schedule = round_robin(m) if m > 1 else []

    sweeps = 0
    while off_norm(A) > tol * scale:
        if sweeps == max_sweeps:
            raise RuntimeError(f"Jacobi did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p, q in schedule:
            apq = A[p, q]
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(apq == 0.0, 0.0, np.where(theta == 0.0, 1.0, t))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = (t * c)[:, None]
            c = c[:, None]
            # A <- J^T A J done as two row passes; A stays symmetric.
            _rotate_rows(A, p, q, c, s)
            A = np.ascontiguousarray(A.T)
            _rotate_rows(A, p, q, c, s)
            _rotate_rows(Vt, p, q, c, s)

    vals = np.diag(A)[:n].copy()
    vecs = Vt[:n, :n].T.copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order], sweeps
