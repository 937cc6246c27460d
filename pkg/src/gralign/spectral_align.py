"""Spectral alignment of correlated Wigner matrices by leading eigenvectors.

The aligner sorts the entries of the two leading eigenvectors, builds the
order-preserving and order-reversing permutations, and keeps whichever
maximizes the quadratic overlap objective sum_ij A1(i,j) A2(pi(i),pi(j)).
The eigenvector-perturbation diagnostic measures the orthogonal component
of the noisy leading eigenvector, whose magnitude scales like
sigma * n^(1/6) in the small-noise regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._rng import make_rng
from .graph_models import Permutation, SymMatrix


class EigenConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"Lanczos did not reach tolerance after {iterations} iterations "
            f"(best residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class LeadingEig:
    value: float
    vector: np.ndarray
    gap: float  # value minus the second Ritz value
    iterations: int
    degenerate: bool  # gap below 10 * tol

    def residual(self, a: SymMatrix) -> float:
        return float(np.linalg.norm(a.entries @ self.vector - self.value * self.vector))


def leading_eigenvector(a: SymMatrix, tol: float = 1e-10, max_iters: Optional[int] = None) -> LeadingEig:
    """Largest eigenvalue and eigenvector by Lanczos with full reorthogonalization.

    The iteration runs on the shifted matrix a + c I with c the max row
    1-norm, so the target eigenvalue is the largest in magnitude.  The
    spectral gap at the Wigner edge is ~n^(-2/3), hence the full
    reorthogonalization (plain power iteration would crawl).  The sign is
    fixed by making the largest-magnitude entry positive.
    """
    m = a.entries
    n = a.n
    if n < 2:
        raise ValueError("need n >= 2")
    if max_iters is None:
        max_iters = 10 * n
    shift = float(np.max(np.sum(np.abs(m), axis=1)))

    rng = make_rng(0x1A2C205)  # fixed start vector; output does not depend on it
    q = rng.random(n) - 0.5
    q /= np.linalg.norm(q)

    basis = np.zeros((max(2, min(n, max_iters)), n))
    alphas: list = []
    betas: list = []  # beta[k] joins step k and k+1; 0.0 marks a restart
    k = 0
    best_res = math.inf
    while True:
        basis[k] = q
        u = m @ q + shift * q
        alpha = float(q @ u)
        alphas.append(alpha)
        r = u - alpha * q
        if k > 0 and betas[k - 1] != 0.0:
            r -= betas[k - 1] * basis[k - 1]
        # full reorthogonalization, twice for safety
        r -= basis[: k + 1].T @ (basis[: k + 1] @ r)
        r -= basis[: k + 1].T @ (basis[: k + 1] @ r)
        k += 1

        check_now = k >= 2 or k == n
        if check_now:
            theta, y = _top_ritz(alphas, betas)
            v = basis[:k].T @ y
            v /= np.linalg.norm(v)
            res = float(np.linalg.norm(m @ v - (theta[0] - shift) * v))
            best_res = min(best_res, res)
            if (res <= tol and len(theta) >= 2) or k >= min(n, max_iters):
                if res > tol:
                    raise EigenConvergenceError(res, k)
                gap = float(theta[0] - theta[1]) if len(theta) >= 2 else 0.0
                imax = int(np.argmax(np.abs(v)))
                if v[imax] < 0:
                    v = -v
                return LeadingEig(
                    value=float(theta[0] - shift),
                    vector=v,
                    gap=gap,
                    iterations=k,
                    degenerate=gap < 10 * tol,
                )

        beta = float(np.linalg.norm(r))
        if beta > 1e-13 * max(shift, 1.0):
            betas.append(beta)
            q = r / beta
        else:
            # invariant subspace found: restart in the orthogonal complement
            restart = None
            for _ in range(4):
                cand = rng.random(n) - 0.5
                cand -= basis[:k].T @ (basis[:k] @ cand)
                norm = np.linalg.norm(cand)
                if norm > 1e-8:
                    restart = cand / norm
                    break
            if restart is None or k >= n:
                # space exhausted; pad a duplicate Ritz estimate if needed
                theta, y = _top_ritz(alphas, betas)
                v = basis[:k].T @ y
                v /= np.linalg.norm(v)
                imax = int(np.argmax(np.abs(v)))
                if v[imax] < 0:
                    v = -v
                gap = float(theta[0] - theta[1]) if len(theta) >= 2 else 0.0
                return LeadingEig(
                    value=float(theta[0] - shift),
                    vector=v,
                    gap=gap,
                    iterations=k,
                    degenerate=gap < 10 * tol,
                )
            betas.append(0.0)
            q = restart
        if k >= basis.shape[0]:
            basis = np.vstack([basis, np.zeros_like(basis)])


def _top_ritz(alphas: list, betas: list):
    """Top Ritz values and leading Ritz vector of the (block) tridiagonal."""
    k = len(alphas)
    t = np.diag(np.asarray(alphas))
    for i, b in enumerate(betas[: k - 1]):
        t[i, i + 1] = t[i + 1, i] = b
    vals, vecs = np.linalg.eigh(t)
    order = np.argsort(vals)[::-1]
    theta = vals[order]
    return theta, vecs[:, order[0]]


# ---------------------------------------------------------------------------
# EIG1
# ---------------------------------------------------------------------------


def quadratic_objective(a1: SymMatrix, a2: SymMatrix, pi: Permutation) -> float:
    """sum_ij A1(i, j) * A2(pi(i), pi(j)), the alignment overlap objective."""
    if a1.n != a2.n or pi.n != a1.n:
        raise ValueError("dimension mismatch")
    p = pi.mapping
    return float(np.sum(a1.entries * a2.entries[np.ix_(p, p)]))


def eig1_align(a1: SymMatrix, a2: SymMatrix, tol: float = 1e-10) -> Permutation:
    """Align by sorting leading-eigenvector entries.

    Returns the estimate of the hidden relabeling pi with
    a2[i, j] ~ a2_prime[pi(i), pi(j)]: ranks of a2's eigenvector entries
    are matched to ranks of a1's, in the same and in the reversed order
    (the eigenvector sign is only defined up to a flip), and the candidate
    with the larger quadratic objective wins; ties prefer the
    order-preserving candidate.  Sort ties break by index (probability
    zero for Gaussian data).
    """
    if a1.n != a2.n:
        raise ValueError("dimension mismatch")
    n = a1.n
    v1 = leading_eigenvector(a1, tol=tol).vector
    v2 = leading_eigenvector(a2, tol=tol).vector
    tau1 = np.argsort(-v1, kind="stable")
    tau2 = np.argsort(-v2, kind="stable")
    plus = np.empty(n, dtype=np.int64)
    minus = np.empty(n, dtype=np.int64)
    plus[tau2] = tau1
    minus[tau2] = tau1[::-1]
    pi_plus, pi_minus = Permutation(plus), Permutation(minus)
    if quadratic_objective(a2, a1, pi_plus) >= quadratic_objective(a2, a1, pi_minus):
        return pi_plus
    return pi_minus


# ---------------------------------------------------------------------------
# perturbation diagnostic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PerturbStats:
    sigma: float
    s_magnitude: float  # norm of the orthogonal component, rescaled
    alignment: float  # |<v1, v2'>|
    degenerate: bool


def perturbation_stats(
    a1: SymMatrix, a2prime: SymMatrix, sigma: float = math.nan, tol: float = 1e-10
) -> PerturbStats:
    """Decompose the noisy leading eigenvector against the clean one.

    ``a2prime`` must be the unscrambled noisy matrix (a1 + sigma Z); use
    ``CorrelatedWignerPair.a2_unscrambled``.  Writing v2' = c (v1 + S w)
    with w unit and orthogonal to v1, returns S and |c| = alignment.
    """
    e1 = leading_eigenvector(a1, tol=tol)
    e2 = leading_eigenvector(a2prime, tol=tol)
    inner = float(e1.vector @ e2.vector)
    ortho = e2.vector - inner * e1.vector
    alignment = abs(inner)
    s_mag = float(np.linalg.norm(ortho)) / alignment if alignment > 0 else math.inf
    return PerturbStats(
        sigma=sigma,
        s_magnitude=s_mag,
        alignment=alignment,
        degenerate=e1.degenerate or e2.degenerate,
    )
