"""Local-limit diagnostics for the correlated graph model.

The depth-d neighborhoods of matched vertex pairs in a sparse correlated
pair converge to the correlated tree-pair law, and neighborhoods of
independently chosen vertices converge to the independent tree-pair law.
This module measures the total-variation distance between the empirical
neighborhood-pair law of a sampled graph pair and the law estimated from
tree-pair samples, restricted to small pairs.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from ._rng import derive_seed, make_rng
from .graph_models import (
    CorrelatedErPair,
    neighborhood,
    sample_correlated_er,
    sample_correlated_tree_pair,
    sample_gw_tree,
)
from .tree_enum import canonical_form


def _pair_key(t, tprime, max_total):
    """Canonical key of a neighborhood pair, None when too large or absent."""
    if t is None or tprime is None:
        return None
    if t.n_vertices + tprime.n_vertices > max_total:
        return None
    return (canonical_form(t).code, canonical_form(tprime).code)


def matched_neighborhood_counts(pair: CorrelatedErPair, d: int, max_total: int = 8) -> tuple:
    """Counts of canonical (B1(i, d), B2(truth(i), d)) pairs, plus #samples.

    Pairs with a non-tree side or more than ``max_total`` vertices in
    total land outside the restricted support and are only counted in the
    sample total.
    """
    counts: Counter = Counter()
    for i in range(pair.g1.n):
        key = _pair_key(
            neighborhood(pair.g1, i, d),
            neighborhood(pair.g2, pair.truth(i), d),
            max_total,
        )
        if key is not None:
            counts[key] += 1
    return counts, pair.g1.n


def unmatched_neighborhood_counts(
    pair: CorrelatedErPair, d: int, n_samples: int, seed: int, max_total: int = 8
) -> tuple:
    """Counts over independently drawn vertex pairs (i, u)."""
    rng = make_rng(derive_seed(seed, "unmatched"))
    counts: Counter = Counter()
    for _ in range(n_samples):
        i = int(rng.integers(pair.g1.n))
        u = int(rng.integers(pair.g2.n))
        key = _pair_key(
            neighborhood(pair.g1, i, d), neighborhood(pair.g2, u, d), max_total
        )
        if key is not None:
            counts[key] += 1
    return counts, n_samples


def correlated_tree_counts(
    lam: float, s: float, d: int, n_samples: int, seed: int, max_total: int = 8
) -> tuple:
    rng = make_rng(derive_seed(seed, "tree_pairs"))
    counts: Counter = Counter()
    for _ in range(n_samples):
        tp = sample_correlated_tree_pair(lam, s, d, rng)
        key = _pair_key(tp.t, tp.tprime, max_total)
        if key is not None:
            counts[key] += 1
    return counts, n_samples


def independent_tree_counts(
    lam: float, d: int, n_samples: int, seed: int, max_total: int = 8
) -> tuple:
    rng = make_rng(derive_seed(seed, "tree_indep"))
    counts: Counter = Counter()
    for _ in range(n_samples):
        t = sample_gw_tree(lam, d, rng)
        tp = sample_gw_tree(lam, d, rng)
        key = _pair_key(t, tp, max_total)
        if key is not None:
            counts[key] += 1
    return counts, n_samples


def tv_distance(counts_a: Counter, n_a: int, counts_b: Counter, n_b: int) -> float:
    """Total variation between two empirical sub-distributions.

    Each counter is normalized by its own sample total; mass outside the
    restricted support (dropped pairs) is excluded on both sides, so this
    is the TV distance between the restricted (defective) laws.
    """
    keys = set(counts_a) | set(counts_b)
    return 0.5 * sum(abs(counts_a[k] / n_a - counts_b[k] / n_b) for k in keys)


@dataclass(frozen=True)
class LocalLimitReport:
    tv_matched: float
    tv_unmatched: float
    n_graph: int
    n_tree_samples: int
    support_matched: int
    support_unmatched: int


def check_local_limit(
    n: int,
    lam: float,
    s: float,
    d: int,
    n_tree_samples: int,
    seed: int,
    max_total: int = 8,
) -> LocalLimitReport:
    """TV distance between graph neighborhood-pair laws and tree-pair laws.

    Matched pairs are compared against the correlated tree-pair law,
    unmatched (independent) pairs against the independent GW pair law.
    """
    pair = sample_correlated_er(n, lam, s, derive_seed(seed, "graph"))
    mc, mn = matched_neighborhood_counts(pair, d, max_total)
    uc, un = unmatched_neighborhood_counts(pair, d, n, seed, max_total)
    tc, tn = correlated_tree_counts(lam, s, d, n_tree_samples, seed, max_total)
    ic, inn = independent_tree_counts(lam, d, n_tree_samples, seed, max_total)
    return LocalLimitReport(
        tv_matched=tv_distance(mc, mn, tc, tn),
        tv_unmatched=tv_distance(uc, un, ic, inn),
        n_graph=n,
        n_tree_samples=n_tree_samples,
        support_matched=len(set(mc) | set(tc)),
        support_unmatched=len(set(uc) | set(ic)),
    )
