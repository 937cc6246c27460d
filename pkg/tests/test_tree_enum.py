import itertools
import math

import numpy as np
import pytest

from gralign._rng import make_rng
from gralign.graph_models import RootedTree, sample_gw_tree
from gralign import tree_enum as te


# ---------------------------------------------------------------------------
# canonical forms
# ---------------------------------------------------------------------------


def test_canonical_shuffle_invariant():
    rng = make_rng(3)
    for seed in range(10):
        t = sample_gw_tree(2.5, 3, seed=seed)
        c0 = te.canonical_form(t)
        c1 = te.canonical_form(t.shuffled(rng))
        assert c0.code == c1.code
        assert c0.size == t.n_vertices
        assert c0.depth == t.depth


def test_canonical_distinguishes_path_and_star():
    path = RootedTree.from_children([[1], [2], []])
    star = RootedTree.from_children([[1, 2], [], []])
    assert te.canonical_form(path).code != te.canonical_form(star).code


def test_canonical_idempotent_via_representative():
    for seed in range(10):
        t = sample_gw_tree(2.0, 3, seed=100 + seed)
        c = te.canonical_form(t)
        again = te.canonical_form(c.to_tree())
        assert again.code == c.code
        assert again.size == c.size
        assert again.depth == c.depth


def prufer_rooted_trees(n):
    """All n^(n-1) rooted labeled trees on n vertices, via Prufer sequences."""
    import heapq

    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for v in seq:
            degree[v] += 1
        heap = [v for v in range(n) if degree[v] == 1]
        heapq.heapify(heap)
        edges = []
        for v in seq:
            leaf = heapq.heappop(heap)
            edges.append((leaf, v))
            degree[leaf] -= 1
            degree[v] -= 1
            if degree[v] == 1:
                heapq.heappush(heap, v)
        edges.append((heapq.heappop(heap), heapq.heappop(heap)))
        for root in range(n):
            yield edges, root


def _tree_from_edges(edges, root, n):
    adj = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    children = [[] for _ in range(n)]
    order = [root]
    seen = {root}
    remap = {root: 0}
    nodes = [[]]
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v in sorted(adj[u]):
            if v not in seen:
                seen.add(v)
                remap[v] = len(nodes)
                nodes.append([])
                nodes[remap[u]].append(remap[v])
                order.append(v)
    return RootedTree.from_children(nodes)


def test_labeled_trees_on_five_vertices_give_nine_classes():
    # independent oracle: 5^3 Prufer sequences x 5 roots = 625 labeled
    # rooted trees; the number of distinct canonical codes must be A_5 = 9
    codes = set()
    count = 0
    for edges, root in prufer_rooted_trees(5):
        t = _tree_from_edges(edges, root, 5)
        codes.add(te.canonical_form(t).code)
        count += 1
    assert count == 5**3 * 5
    assert len(codes) == 9


# ---------------------------------------------------------------------------
# enumeration and the phi recursion
# ---------------------------------------------------------------------------


def test_enumerate_small_counts():
    assert te.enumerate_rooted_trees(6) == [1, 1, 2, 4, 9, 20]
    assert te.enumerate_rooted_trees(1) == [1]
    assert te.enumerate_rooted_trees(4, max_depth=2) == [1, 1, 2, 3]


def test_enumerate_guard():
    with pytest.raises(ValueError):
        te.enumerate_rooted_trees(21)


def test_phi_one_is_geometric():
    phi1 = te.phi_step(te.TruncatedSeries.one(10))
    assert all(abs(c - 1.0) < 1e-12 for c in phi1.coeffs)


def test_phi_two_counts_partitions():
    phi1 = te.phi_step(te.TruncatedSeries.one(10))
    phi2 = te.phi_step(phi1)
    assert [round(c) for c in phi2.coeffs[:6]] == [1, 1, 2, 3, 5, 7]


def test_phi_requires_unit_constant_term():
    with pytest.raises(ValueError):
        te.phi_step(te.TruncatedSeries((0.5, 0.0), 1))


def test_recursion_matches_enumeration_depth_restricted():
    # oracle equivalence on a small window (the acceptance suite does n <= 12)
    for d in range(0, 8):
        oracle = te.enumerate_rooted_trees(9, max_depth=d)
        table = te.TreeCountTable.from_recursion(d, 9)
        assert list(table.counts) == oracle


def test_recursion_stabilizes_to_unrestricted_counts():
    oracle = te.enumerate_rooted_trees(9)
    for n in range(1, 10):
        table = te.TreeCountTable.from_recursion(n - 1, n)
        assert table.counts[n - 1] == oracle[n - 1]


def test_count_table_invariants():
    tables = [te.TreeCountTable.from_recursion(d, 12) for d in range(12)]
    for t in tables:
        assert t.counts[0] == 1
    for a, b in zip(tables, tables[1:]):
        assert all(x <= y for x, y in zip(a.counts, b.counts))  # nondecreasing in d


# ---------------------------------------------------------------------------
# KL series values
# ---------------------------------------------------------------------------


def test_kl_infinity_depth_one_closed_form():
    got = te.kl_infinity(1, 0.5)
    assert abs(got.value - 0.5 * math.log(1 / (1 - 0.25))) < 1e-12
    assert not got.tail_flag


def test_kl_infinity_zero_correlation():
    for d in (0, 3, 10):
        assert te.kl_infinity(d, 0.0).value == 0.0


def test_kl_dichotomy_window():
    profile62 = te.kl_profile(0.62, 20, 400)
    assert max(profile62) > 10.0
    profile55 = te.kl_profile(0.55, 20, 400)
    inc = np.diff(profile55)
    assert (inc[10:] < inc[9:-1]).all()  # decaying increments
    assert inc[-1] < 0.01


def test_kl_monotone_in_d_and_s():
    values_d = [te.kl_infinity(d, 0.5).value for d in range(8)]
    assert all(b >= a for a, b in zip(values_d, values_d[1:]))
    values_s = [te.kl_infinity(5, s).value for s in (0.1, 0.3, 0.5, 0.7)]
    assert all(b >= a for a, b in zip(values_s, values_s[1:]))


def test_gaussian_sum_trivial_cases():
    assert te.kl_gaussian_sum(4, 0.0) == 0.0
    assert abs(te.kl_gaussian_sum(0, 0.5) - 0.14384103622589042) < 1e-10


def test_gaussian_sum_matches_next_depth():
    # series identity: sum_n A(d,n) * (-1/2) ln(1 - s^(2n)) = kl_infinity(d+1, s)
    for d in (0, 2, 4):
        for s in (0.2, 0.4, 0.55):
            lhs = te.kl_gaussian_sum(d, s, truncation=400)
            rhs = te.kl_infinity(d + 1, s, truncation=400)
            assert not rhs.tail_flag
            assert abs(lhs - rhs.value) < 1e-9


# ---------------------------------------------------------------------------
# Otter estimate and the threshold locator
# ---------------------------------------------------------------------------


def test_otter_estimate_bracket():
    assert 0.331 <= te.otter_estimate(40) <= 0.345


def test_otter_plain_ratio_preasymptotic():
    assert te.otter_estimate(2, corrected=False) == 1.0


def test_otter_ratios_monotone():
    counts = te.stabilized_counts(40)
    ratios = [counts[n - 2] / counts[n - 1] for n in range(10, 41)]
    assert all(b <= a for a, b in zip(ratios, ratios[1:]))


def test_threshold_locator_degenerate_tol():
    assert te.threshold_locator(tol=1.0) == 0.5


def test_divergence_monotone_in_s():
    flags = [te.diverges(s, d_max=24, truncation=600) for s in np.linspace(0.4, 0.8, 9)]
    # once divergent, stays divergent
    first = flags.index(True)
    assert all(flags[first:])


def test_threshold_locator_near_sqrt_otter():
    got = te.threshold_locator(d_max=24, truncation=600, tol=0.005)
    assert abs(got - math.sqrt(te.OTTER_CONSTANT)) < 0.02
