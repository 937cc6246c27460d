import math

import numpy as np
import pytest

from gralign._rng import make_rng
from gralign.graph_models import (
    ParameterError,
    Permutation,
    RootedTree,
    SparseGraph,
    neighborhood,
    oriented_neighborhood,
    read_edge_list,
    read_matrix,
    sample_correlated_er,
    sample_correlated_tree_pair,
    sample_correlated_wigner,
    sample_gw_tree,
    write_edge_list,
    write_matrix,
)
from gralign.spectral_align import leading_eigenvector
from gralign.tree_enum import canonical_form


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------


def test_permutation_bijection_enforced():
    Permutation(np.array([2, 0, 1]))
    with pytest.raises(ParameterError):
        Permutation(np.array([0, 0, 1]))
    with pytest.raises(ParameterError):
        Permutation(np.array([0, 3, 1]))


def test_permutation_inverse_compose():
    rng = make_rng(1)
    p = Permutation.random(50, rng)
    q = p.inverse()
    assert np.array_equal(p.compose(q).mapping, np.arange(50))
    assert np.array_equal(q.compose(p).mapping, np.arange(50))


# ---------------------------------------------------------------------------
# correlated Erdos-Renyi
# ---------------------------------------------------------------------------


def test_er_lambda_zero_edgeless():
    pair = sample_correlated_er(4, 0.0, 0.5, seed=1)
    assert pair.g1.n_edges == 0
    assert pair.g2.n_edges == 0


def test_er_precondition_rejected():
    # p = 0.9, s = 0.1: p * (2 - s) = 1.71 > 1
    with pytest.raises(ParameterError):
        sample_correlated_er(3, 2.7, 0.1, seed=1)
    with pytest.raises(ParameterError):
        sample_correlated_er(10, -1.0, 0.5, seed=1)


def test_er_edge_counts_large():
    # binomial confidence-interval oracle on 1e5 vertices
    n, lam, s = 10**5, 2.0, 0.8
    pair = sample_correlated_er(n, lam, s, seed=7)
    p = lam / n
    n_pairs = n * (n - 1) / 2
    mean = n_pairs * p
    sd = math.sqrt(n_pairs * p * (1 - p))
    assert abs(pair.g1.n_edges - mean) < 4 * sd
    assert abs(pair.g2.n_edges - mean) < 4 * sd
    # intersection edges, pre-scramble, have density p * s
    g2prime = pair.g2.relabel(pair.truth)
    e1 = {tuple(e) for e in pair.g1.edges()}
    e2 = {tuple(e) for e in g2prime.edges()}
    inter = len(e1 & e2)
    mean_i = n_pairs * p * s
    sd_i = math.sqrt(n_pairs * p * s)
    assert abs(inter - mean_i) < 4 * sd_i


def test_er_relabel_round_trip():
    pair = sample_correlated_er(200, 3.0, 0.6, seed=3)
    g2prime = pair.g2.relabel(pair.truth)
    back = g2prime.relabel(pair.truth.inverse())
    assert np.array_equal(back.indptr, pair.g2.indptr)
    assert np.array_equal(back.indices, pair.g2.indices)


def test_er_matched_vertices_share_neighborhood_stats():
    # vertex truth(i) of g2 is the copy of g1's vertex i: degrees correlate
    pair = sample_correlated_er(5000, 2.0, 0.9, seed=11)
    d1 = np.diff(pair.g1.indptr)
    d2 = np.diff(pair.g2.indptr)
    matched = np.corrcoef(d1, d2[pair.truth.mapping])[0, 1]
    shuffled = np.corrcoef(d1, d2)[0, 1]
    assert matched > 0.5
    assert abs(shuffled) < 0.1


def test_graph_invariants():
    pair = sample_correlated_er(500, 3.0, 0.5, seed=5)
    g = pair.g1
    for i in range(g.n):
        nbrs = g.neighbors(i)
        assert (np.diff(nbrs) > 0).all()  # strictly sorted
        assert i not in nbrs  # no self-loops
        for j in nbrs:
            assert g.has_edge(int(j), i)  # symmetric


# ---------------------------------------------------------------------------
# correlated Wigner
# ---------------------------------------------------------------------------


def test_wigner_sigma_zero_is_exact_relabel():
    pair = sample_correlated_wigner(300, 0.0, seed=2)
    p = pair.truth.mapping
    assert np.array_equal(pair.a2.entries, pair.a1.entries[np.ix_(p, p)])


def test_wigner_spectral_norm_near_two():
    pair = sample_correlated_wigner(2000, 0.3, seed=9)
    top = leading_eigenvector(pair.a1).value
    bottom = -leading_eigenvector(
        type(pair.a1)(-pair.a1.entries)
    ).value
    norm = max(abs(top), abs(bottom))
    assert 1.9 <= norm <= 2.1


def test_wigner_moments():
    n = 1000
    pair = sample_correlated_wigner(n, 0.5, seed=13)
    a = pair.a1.entries
    assert np.array_equal(a, a.T)
    iu = np.triu_indices(n, k=1)
    off = a[iu]
    assert abs(off.var() - 1.0 / n) < 0.1 / n
    assert abs(off.mean()) < 4.0 * math.sqrt(1.0 / n / off.size)
    assert abs(np.diag(a).var() - 2.0 / n) < 0.25 / n


# ---------------------------------------------------------------------------
# Galton-Watson trees
# ---------------------------------------------------------------------------


def test_gw_degenerate_cases():
    assert sample_gw_tree(0.0, 5, seed=1).n_vertices == 1
    assert sample_gw_tree(3.0, 0, seed=1).n_vertices == 1


@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_gw_mean_size(lam):
    # branching-process mean: sum of lam^h over levels h <= d
    d = 2
    expected = 1 + lam + lam**2
    rng = make_rng(42)
    total = 0
    n_samples = 10**5
    for _ in range(n_samples):
        total += sample_gw_tree(lam, d, rng).n_vertices
    assert abs(total / n_samples - expected) < 0.02 * expected


def test_gw_depth_bound():
    for seed in range(20):
        t = sample_gw_tree(3.0, 3, seed=seed)
        assert t.depth <= 3


# ---------------------------------------------------------------------------
# correlated tree pairs
# ---------------------------------------------------------------------------


def test_tree_pair_s_one_isomorphic():
    for seed in range(10):
        tp = sample_correlated_tree_pair(2.0, 1.0, 3, seed=seed)
        assert canonical_form(tp.t).code == canonical_form(tp.tprime).code


def test_tree_pair_s_zero_independent_sizes():
    rng = make_rng(8)
    sizes = np.array(
        [
            (tp.t.n_vertices, tp.tprime.n_vertices)
            for tp in (sample_correlated_tree_pair(2.0, 0.0, 3, rng) for _ in range(4000))
        ]
    )
    corr = np.corrcoef(sizes[:, 0], sizes[:, 1])[0, 1]
    assert abs(corr) < 0.05


def test_tree_pair_marginal_root_degree_poisson():
    # chi-square against Poisson(2) at the 1% level, depth-1 pairs
    lam, s = 2.0, 0.6
    rng = make_rng(123)
    n_samples = 10**5
    counts = np.zeros(12, dtype=np.int64)
    for _ in range(n_samples):
        tp = sample_correlated_tree_pair(lam, s, 1, rng)
        counts[min(len(tp.t.children[0]), 11)] += 1
    probs = np.array([math.exp(-lam) * lam**k / math.factorial(k) for k in range(11)])
    probs = np.append(probs, 1.0 - probs.sum())
    expected = probs * n_samples
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    from scipy.stats import chi2 as chi2_dist

    assert chi2_dist.sf(chi2, df=len(counts) - 1) > 0.01


def test_tree_pair_correlated_root_degrees():
    rng = make_rng(5)
    degs = np.array(
        [
            (len(tp.t.children[0]), len(tp.tprime.children[0]))
            for tp in (sample_correlated_tree_pair(3.0, 0.8, 1, rng) for _ in range(4000))
        ]
    )
    assert np.corrcoef(degs[:, 0], degs[:, 1])[0, 1] > 0.5


# ---------------------------------------------------------------------------
# neighborhoods
# ---------------------------------------------------------------------------


def path_graph(k):
    return SparseGraph.from_edges(k, [(i, i + 1) for i in range(k - 1)])


def test_neighborhood_path():
    t = neighborhood(path_graph(3), 1, 1)
    assert t.n_vertices == 3
    assert len(t.children[0]) == 2


def test_neighborhood_triangle_marker():
    tri = SparseGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert neighborhood(tri, 0, 1) is None


def test_neighborhood_star():
    star = SparseGraph.from_edges(5, [(0, i) for i in range(1, 5)])
    t = neighborhood(star, 0, 2)
    assert t.n_vertices == 5
    assert len(t.children[0]) == 4
    assert t.depth == 1


def test_oriented_neighborhood_path():
    t = oriented_neighborhood(path_graph(3), 1, 0, 2)
    assert t.n_vertices == 2
    assert len(t.children[0]) == 1


def test_oriented_neighborhood_single_edge():
    g = SparseGraph.from_edges(2, [(0, 1)])
    t = oriented_neighborhood(g, 1, 0, 4)
    assert t.n_vertices == 1


def test_oriented_neighborhood_cycle_broken():
    cyc = SparseGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    t = oriented_neighborhood(cyc, 1, 0, 3)
    assert t is not None
    assert t.n_vertices == 4
    assert t.depth == 3


def test_oriented_neighborhood_requires_edge():
    with pytest.raises(ParameterError):
        oriented_neighborhood(path_graph(3), 0, 2, 1)


def test_neighborhood_children_sorted_by_vertex_id():
    g = SparseGraph.from_edges(6, [(2, 5), (2, 0), (2, 4), (4, 1)])
    t = neighborhood(g, 2, 2)
    # contract: BFS numbering follows ascending original vertex ids
    assert t.children[0] == (1, 2, 3)


# ---------------------------------------------------------------------------
# interchange formats
# ---------------------------------------------------------------------------


def test_edge_list_round_trip(tmp_path):
    pair = sample_correlated_er(100, 2.5, 0.7, seed=21)
    path = tmp_path / "g.edges"
    write_edge_list(pair.g1, path)
    back = read_edge_list(path)
    assert back.n == pair.g1.n
    assert np.array_equal(back.indices, pair.g1.indices)
    header = path.read_text().splitlines()[0]
    assert header == "n 100"


def test_matrix_round_trip(tmp_path):
    pair = sample_correlated_wigner(40, 0.2, seed=22)
    path = tmp_path / "a.mat"
    write_matrix(pair.a1, path)
    back = read_matrix(path)
    assert np.array_equal(back.entries, pair.a1.entries)
    assert path.stat().st_size == 8 + 8 * 40 * 40


def test_determinism_same_seed():
    a = sample_correlated_er(500, 2.0, 0.8, seed=99)
    b = sample_correlated_er(500, 2.0, 0.8, seed=99)
    assert np.array_equal(a.g1.indices, b.g1.indices)
    assert np.array_equal(a.truth.mapping, b.truth.mapping)
    c = sample_correlated_er(500, 2.0, 0.8, seed=100)
    assert not np.array_equal(a.truth.mapping, c.truth.mapping)
