"""Input validation helpers shared by the estimator classes."""

from __future__ import annotations

import numpy as np

from .graph_models import SparseGraph, SymMatrix


def check_matrix_pair(a1, a2) -> tuple:
    """Coerce to a pair of SymMatrix of equal dimension."""
    out = []
    for a in (a1, a2):
        if isinstance(a, SymMatrix):
            out.append(a)
            continue
        arr = np.asarray(a, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("expected a square matrix")
        if not np.allclose(arr, arr.T):
            raise ValueError("matrix is not symmetric")
        out.append(SymMatrix(0.5 * (arr + arr.T)))
    if out[0].n != out[1].n:
        raise ValueError(f"dimension mismatch: {out[0].n} vs {out[1].n}")
    return tuple(out)


def check_graph_pair(g1, g2) -> tuple:
    for g in (g1, g2):
        if not isinstance(g, SparseGraph):
            raise TypeError("expected SparseGraph inputs (see SparseGraph.from_edges)")
    if g1.n != g2.n:
        raise ValueError(f"vertex count mismatch: {g1.n} vs {g2.n}")
    return g1, g2


def check_fitted(estimator, attr: str) -> None:
    if not hasattr(estimator, attr):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )
