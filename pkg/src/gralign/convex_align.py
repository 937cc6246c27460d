"""Birkhoff-polytope relaxation of alignment, solved by Frank-Wolfe.

Minimizes ||X A1 - A2 X||_F^2 over doubly stochastic matrices.  The
linear minimization oracle over the polytope is an exact linear
assignment solve (the vertices are permutation matrices), the step size
comes from exact line search (the objective is quadratic along a
segment), and the reported Frank-Wolfe gap upper-bounds the suboptimality
at termination.  Rounding to a permutation is either a per-row argmax or
a maximum-weight assignment on X itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph_models import Permutation, SymMatrix


@dataclass(frozen=True)
class DoublyStochastic:
    """Nonnegative matrix with unit row and column sums (tol 1e-8)."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("entries must be square")
        if a.min() < -1e-12:
            raise ValueError(f"negative entry {a.min():.3e}")
        a = np.clip(a, 0.0, None)
        rows = np.abs(a.sum(axis=1) - 1.0).max()
        cols = np.abs(a.sum(axis=0) - 1.0).max()
        if rows > 1e-8 or cols > 1e-8:
            raise ValueError(f"row/col sums off by {max(rows, cols):.3e}")
        object.__setattr__(self, "entries", a)
        self.entries.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @staticmethod
    def flat(n: int) -> "DoublyStochastic":
        return DoublyStochastic(np.full((n, n), 1.0 / n))

    @staticmethod
    def from_permutation(pi: Permutation) -> "DoublyStochastic":
        m = np.zeros((pi.n, pi.n))
        m[np.arange(pi.n), pi.mapping] = 1.0
        return DoublyStochastic(m)


@dataclass(frozen=True)
class SolveReport:
    x: DoublyStochastic
    objective: float  # ||X A1 - A2 X||_F^2 at the returned iterate
    fw_gap: float
    iterations: int


def lap_solve(cost: np.ndarray, sense: str = "minimize") -> Permutation:
    """Exact linear assignment via scipy's O(n^3) augmenting-path solver.

    Deterministic on ties (the solver scans rows in order, so constant
    matrices map to the identity).
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError("cost must be square")
    if not np.isfinite(cost).all():
        raise ValueError("cost entries must be finite")
    if sense not in ("minimize", "maximize"):
        raise ValueError("sense must be 'minimize' or 'maximize'")
    _, cols = linear_sum_assignment(cost, maximize=sense == "maximize")
    return Permutation(cols.astype(np.int64))


def fw_birkhoff(
    a1: SymMatrix,
    a2: SymMatrix,
    max_iters: int = 2000,
    gap_tol: Optional[float] = None,
) -> SolveReport:
    """Frank-Wolfe on the Birkhoff polytope from the flat start J/n.

    gap_tol defaults to 1e-6 * n (scales with the problem).  Iterates stay
    feasible by convexity; the objective is nonincreasing thanks to the
    exact line search.
    """
    if a1.n != a2.n:
        raise ValueError("dimension mismatch")
    n = a1.n
    if gap_tol is None:
        gap_tol = 1e-6 * n
    m1, m2 = a1.entries, a2.entries
    x = np.full((n, n), 1.0 / n)
    r = x @ m1 - m2 @ x
    obj = float(np.sum(r * r))
    it = 0
    gap = np.inf
    while it < max_iters:
        grad = 2.0 * (r @ m1 - m2 @ r)  # uses symmetry of a1, a2
        target = lap_solve(grad, "minimize")
        gap = float(np.sum(grad * x) - grad[np.arange(n), target.mapping].sum())
        if gap <= gap_tol:
            break
        d = -x
        d[np.arange(n), target.mapping] += 1.0
        rd = d @ m1 - m2 @ d
        aa = float(np.sum(rd * rd))
        bb = 2.0 * float(np.sum(r * rd))
        if aa <= 0.0:
            break  # flat direction; gap <= 0 would have exited already
        gamma = min(1.0, max(0.0, -bb / (2.0 * aa)))
        if gamma == 0.0:
            break
        x = x + gamma * d
        r = r + gamma * rd
        obj = float(np.sum(r * r))
        it += 1
    # re-normalize away accumulated rounding before validation
    x = np.clip(x, 0.0, None)
    return SolveReport(
        x=DoublyStochastic(x), objective=obj, fw_gap=max(gap, 0.0), iterations=it
    )


def round_argmax(x: DoublyStochastic) -> np.ndarray:
    """Per-row argmax as a mapping [n] -> [n]; may fail to be a bijection.

    Ties resolve to the smallest column index (numpy argmax convention).
    """
    return np.argmax(x.entries, axis=1).astype(np.int64)


def round_lap(x: DoublyStochastic) -> Permutation:
    """Maximum-weight assignment on X, the refined rounding."""
    return lap_solve(x.entries, "maximize")


def frobenius_gap(x: DoublyStochastic, truth: Permutation) -> float:
    """Exact squared Frobenius distance to the truth permutation matrix."""
    if x.n != truth.n:
        raise ValueError("dimension mismatch")
    diff = x.entries.copy()
    diff[np.arange(x.n), truth.mapping] -= 1.0
    return float(np.sum(diff * diff))
