"""Estimator-style interfaces to the three aligners.

Thin scikit-learn-flavored wrappers: constructor parameters are stored
verbatim (so ``get_params`` / ``set_params`` and grid tooling work),
``fit`` consumes the observed pair and exposes trailing-underscore
attributes, and ``score`` compares against a known truth permutation.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from . import convex_align, mp_align, spectral_align
from ._validation import check_fitted, check_graph_pair, check_matrix_pair
from .bench_cli import overlap
from .graph_models import Permutation
from .tree_likelihood import LikelihoodParams


class MPAlign(BaseEstimator):
    """Message-passing aligner for sparse correlated graph pairs.

    fit(g1, g2) computes the message table at the configured depth and the
    matched-pair collection (not forced to be a bijection).

    Attributes after fit: ``matches_`` (tuple of (i, u) pairs),
    ``message_table_``, ``n_matched_``.
    """

    def __init__(self, mean_degree: float = 3.0, correlation: float = 0.9,
                 depth: int = 2, tau: float = 1.0,
                 prune_factor: Optional[float] = mp_align.DEFAULT_PRUNE_FACTOR,
                 degree_cap: int = 16):
        self.mean_degree = mean_degree
        self.correlation = correlation
        self.depth = depth
        self.tau = tau
        self.prune_factor = prune_factor
        self.degree_cap = degree_cap

    def fit(self, g1, g2):
        g1, g2 = check_graph_pair(g1, g2)
        params = LikelihoodParams(lam=self.mean_degree, s=self.correlation, d=self.depth)
        self.message_table_ = mp_align.compute_messages(
            g1, g2, params, prune_factor=self.prune_factor, degree_cap=self.degree_cap
        )
        match_set = mp_align.match_vertices(g1, g2, self.message_table_, tau=self.tau)
        self.matches_ = match_set.pairs
        self.n_matched_ = len(match_set.pairs)
        self._match_set = match_set
        return self

    def score(self, truth: Permutation) -> float:
        """Precision of the matched pairs against the hidden truth."""
        check_fitted(self, "matches_")
        if not self.matches_:
            return 0.0
        n_correct, n_incorrect = mp_align.score_matches(self._match_set, truth)
        return n_correct / (n_correct + n_incorrect)


class Eig1Align(BaseEstimator):
    """Leading-eigenvector aligner for correlated symmetric matrix pairs.

    Attributes after fit: ``permutation_`` (Permutation estimating the
    hidden relabeling).
    """

    def __init__(self, tol: float = 1e-10):
        self.tol = tol

    def fit(self, a1, a2):
        a1, a2 = check_matrix_pair(a1, a2)
        self.permutation_ = spectral_align.eig1_align(a1, a2, tol=self.tol)
        return self

    def fit_predict(self, a1, a2) -> np.ndarray:
        return self.fit(a1, a2).permutation_.mapping

    def score(self, truth: Permutation) -> float:
        check_fitted(self, "permutation_")
        return overlap(self.permutation_, truth)


class BirkhoffAlign(BaseEstimator):
    """Doubly stochastic relaxation aligner with LAP rounding.

    Attributes after fit: ``x_`` (DoublyStochastic iterate), ``report_``
    (objective / gap / iterations), ``permutation_`` (LAP rounding of x_).
    """

    def __init__(self, max_iters: int = 2000, gap_tol: Optional[float] = None):
        self.max_iters = max_iters
        self.gap_tol = gap_tol

    def fit(self, a1, a2):
        a1, a2 = check_matrix_pair(a1, a2)
        self.report_ = convex_align.fw_birkhoff(
            a1, a2, max_iters=self.max_iters, gap_tol=self.gap_tol
        )
        self.x_ = self.report_.x
        self.permutation_ = convex_align.round_lap(self.x_)
        return self

    def fit_predict(self, a1, a2) -> np.ndarray:
        return self.fit(a1, a2).permutation_.mapping

    def score(self, truth: Permutation) -> float:
        check_fitted(self, "permutation_")
        return overlap(self.permutation_, truth)
