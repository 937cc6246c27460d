"""Random objects of the alignment models.

Samplers for correlated Erdos-Renyi graph pairs, correlated Gaussian
Wigner matrix pairs, Galton-Watson trees and correlated tree pairs, plus
extraction of (oriented) tree neighborhoods from sparse graphs.

Conventions
-----------
* Wigner matrices use variance 1/n off the diagonal and 2/n on the
  diagonal, so the spectral norm concentrates at 2.
* Edge pairs of the correlated Erdos-Renyi model follow the four-outcome
  table: both graphs share an edge with probability ``p*s``, each carries a
  private edge with probability ``p*(1-s)``, and neither with probability
  ``1 - p*(2-s)``, where ``p = lambda/n``.
* The second object of a correlated pair is always the relabeled one:
  ``a2[i, j] = a2_prime[truth[i], truth[j]]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._rng import as_rng, polar_normal


class ParameterError(ValueError):
    """Raised when a sampler parameter is outside its model domain."""


# ---------------------------------------------------------------------------
# permutations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Permutation:
    """A bijection on [0, n), stored as the image array ``mapping``."""

    mapping: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        object.__setattr__(self, "mapping", m)
        if m.ndim != 1:
            raise ParameterError("permutation mapping must be 1-d")
        n = m.size
        seen = np.zeros(n, dtype=bool)
        if n and (m.min() < 0 or m.max() >= n):
            raise ParameterError("permutation entries out of range")
        seen[m] = True
        if not seen.all():
            raise ParameterError("mapping is not a bijection")
        self.mapping.setflags(write=False)

    @property
    def n(self) -> int:
        return self.mapping.size

    def __call__(self, i: int) -> int:
        return int(self.mapping[i])

    def inverse(self) -> "Permutation":
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.mapping] = np.arange(self.n, dtype=np.int64)
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """Return self o other, i.e. i -> self(other(i))."""
        return Permutation(self.mapping[other.mapping])

    @staticmethod
    def identity(n: int) -> "Permutation":
        return Permutation(np.arange(n, dtype=np.int64))

    @staticmethod
    def random(n: int, seed_or_rng) -> "Permutation":
        rng = as_rng(seed_or_rng)
        return Permutation(rng.permutation(n).astype(np.int64))


# ---------------------------------------------------------------------------
# sparse graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparseGraph:
    """Undirected simple graph in CSR form with sorted neighbor lists."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        if self.indptr.size != self.n + 1:
            raise ParameterError("indptr size must be n + 1")
        self.indptr.setflags(write=False)
        self.indices.setflags(write=False)

    @staticmethod
    def from_edges(n: int, edges: np.ndarray) -> "SparseGraph":
        """Build from an (m, 2) array of undirected edges."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ParameterError("edge endpoint out of range")
            if (edges[:, 0] == edges[:, 1]).any():
                raise ParameterError("self-loops are not allowed")
        both = np.concatenate([edges, edges[:, ::-1]], axis=0)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        if both.shape[0] > 1:
            dup = (np.diff(both[:, 0]) == 0) & (np.diff(both[:, 1]) == 0)
            if dup.any():
                raise ParameterError("duplicate edges")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, both[:, 0] + 1, 1)
        np.cumsum(indptr, out=indptr)
        return SparseGraph(n=n, indptr=indptr, indices=both[:, 1].copy())

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    def degree(self, i: int) -> int:
        return int(self.indptr[i + 1] - self.indptr[i])

    @property
    def n_edges(self) -> int:
        return self.indices.size // 2

    def has_edge(self, i: int, j: int) -> bool:
        nbrs = self.neighbors(i)
        k = np.searchsorted(nbrs, j)
        return k < nbrs.size and nbrs[k] == j

    def edges(self) -> np.ndarray:
        """(m, 2) array with i < j per row, lexicographically sorted."""
        src = np.repeat(np.arange(self.n), np.diff(self.indptr))
        mask = src < self.indices
        return np.stack([src[mask], self.indices[mask]], axis=1)

    def relabel(self, perm: Permutation) -> "SparseGraph":
        """Graph with edge (i, j) iff self has edge (perm(i), perm(j))."""
        inv = perm.inverse().mapping
        e = self.edges()
        return SparseGraph.from_edges(self.n, np.stack([inv[e[:, 0]], inv[e[:, 1]]], axis=1))


@dataclass(frozen=True)
class CorrelatedErPair:
    """Correlated graph pair; ``truth`` maps g1 vertices to g2 vertices.

    Vertex ``truth(i)`` of g2 is the relabeled copy of g1's vertex i, so
    the matched neighborhood pairs are (B1(i, d), B2(truth(i), d)).
    """

    g1: SparseGraph
    g2: SparseGraph
    truth: Permutation
    lam: float
    s: float


# ---------------------------------------------------------------------------
# symmetric matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymMatrix:
    """Dense symmetric n x n real matrix (symmetry is exact)."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=np.float64)
        object.__setattr__(self, "entries", a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ParameterError("entries must be square")
        if not np.array_equal(a, a.T):
            raise ParameterError("entries must be exactly symmetric")
        self.entries.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def relabel(self, perm: Permutation) -> "SymMatrix":
        """Matrix b with b[i, j] = self[perm(i), perm(j)]."""
        p = perm.mapping
        return SymMatrix(self.entries[np.ix_(p, p)])


@dataclass(frozen=True)
class CorrelatedWignerPair:
    """Correlated matrix pair with a2[i, j] = (a1 + sigma Z)[truth(i), truth(j)].

    With this indexing the permutation matrix of ``truth`` is the exact
    minimizer of ||X a1 - a2 X||_F in the noiseless case, and the
    spectral and convex aligners both estimate ``truth`` directly.
    """

    a1: SymMatrix
    a2: SymMatrix
    truth: Permutation
    sigma: float

    def a2_unscrambled(self) -> SymMatrix:
        """Undo the hidden relabeling: returns a1 + sigma * Z."""
        return self.a2.relabel(self.truth.inverse())


# ---------------------------------------------------------------------------
# rooted trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RootedTree:
    """Finite rooted tree; node 0 is the root, children keep their order."""

    parents: tuple
    children: tuple

    @staticmethod
    def from_children(children: Sequence[Sequence[int]]) -> "RootedTree":
        parents: list = [None] * len(children)
        for u, kids in enumerate(children):
            for v in kids:
                parents[v] = u
        return RootedTree(
            parents=tuple(parents),
            children=tuple(tuple(k) for k in children),
        )

    @property
    def n_vertices(self) -> int:
        return len(self.parents)

    def depths(self) -> list:
        d = [0] * self.n_vertices
        for u in range(1, self.n_vertices):
            d[u] = d[self.parents[u]] + 1
        return d

    @property
    def depth(self) -> int:
        return max(self.depths()) if self.n_vertices else 0

    def truncated(self, d: int) -> "RootedTree":
        """Subtree of all vertices at depth <= d, vertices renumbered."""
        depths = self.depths()
        keep = [u for u in range(self.n_vertices) if depths[u] <= d]
        remap = {u: k for k, u in enumerate(keep)}
        kids = [
            [remap[v] for v in self.children[u] if depths[v] <= d] for u in keep
        ]
        return RootedTree.from_children(kids)

    def shuffled(self, seed_or_rng) -> "RootedTree":
        """Uniformly permute the order of every vertex's children."""
        rng = as_rng(seed_or_rng)
        kids = []
        for u in range(self.n_vertices):
            c = list(self.children[u])
            if len(c) > 1:
                c = [c[k] for k in rng.permutation(len(c))]
            kids.append(c)
        return RootedTree.from_children(kids)


@dataclass(frozen=True)
class TreePair:
    t: RootedTree
    tprime: RootedTree
    lam: float
    s: float
    d: int


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def sample_correlated_er(n: int, lam: float, s: float, seed) -> CorrelatedErPair:
    """Sample a correlated Erdos-Renyi pair with hidden uniform truth.

    Every unordered pair {i, j} is drawn once from the four-outcome table
    with p = lam / n.  Pairs where anything happens (probability
    ``p*(2-s)``) are located by geometric skipping over the C(n, 2) pair
    sequence, then assigned an outcome class, which reproduces the per-pair
    law in O(m) time.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    if lam < 0:
        raise ParameterError("lambda must be >= 0")
    if not 0.0 <= s <= 1.0:
        raise ParameterError("s must lie in [0, 1]")
    p = lam / n
    if p * (2.0 - s) > 1.0:
        raise ParameterError(f"p*(2-s) = {p * (2.0 - s):.6g} exceeds 1")
    rng = as_rng(seed)

    total_pairs = n * (n - 1) // 2
    q = p * (2.0 - s)
    hits = _skip_sample(rng, total_pairs, q)

    # outcome classes for the hit pairs: both / g1 only / g2' only
    if q > 0 and hits.size:
        u = rng.random(hits.size)
        c_both = p * s / q
        c_one = (p * s + p * (1.0 - s)) / q
        both = hits[u < c_both]
        only1 = hits[(u >= c_both) & (u < c_one)]
        only2 = hits[u >= c_one]
    else:
        both = only1 = only2 = np.empty(0, dtype=np.int64)

    ij_both = _unrank_pairs(n, both)
    e1 = np.concatenate([ij_both, _unrank_pairs(n, only1)], axis=0)
    e2p = np.concatenate([ij_both, _unrank_pairs(n, only2)], axis=0)

    truth = Permutation.random(n, rng)
    g1 = SparseGraph.from_edges(n, e1)
    g2prime = SparseGraph.from_edges(n, e2p)
    g2 = g2prime.relabel(truth.inverse())
    return CorrelatedErPair(g1=g1, g2=g2, truth=truth, lam=lam, s=s)


def _skip_sample(rng, total: int, q: float) -> np.ndarray:
    """Indices in [0, total) hit independently with probability q."""
    if q <= 0.0 or total == 0:
        return np.empty(0, dtype=np.int64)
    if q >= 1.0:
        return np.arange(total, dtype=np.int64)
    out = []
    pos = -1
    log1mq = np.log1p(-q)
    expected = int(total * q) + 1
    while pos < total:
        batch = max(1024, int(expected * 0.1) + 16)
        u = rng.random(batch)
        gaps = np.floor(np.log(u) / log1mq).astype(np.int64) + 1
        steps = pos + np.cumsum(gaps)
        out.append(steps)
        pos = int(steps[-1])
    hits = np.concatenate(out)
    return hits[hits < total]


def _unrank_pairs(n: int, t: np.ndarray) -> np.ndarray:
    """Map lexicographic pair ranks to (i, j) with i < j."""
    if t.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    rows = np.arange(n, dtype=np.int64)
    starts = rows * n - rows * (rows + 1) // 2  # rank of first pair (i, i+1)
    i = np.searchsorted(starts, t, side="right") - 1
    j = t - starts[i] + i + 1
    return np.stack([i, j], axis=1)


def sample_correlated_wigner(n: int, sigma: float, seed) -> CorrelatedWignerPair:
    """Sample (A1, A2) with A2 the hidden relabeling of A1 + sigma * Z."""
    if n < 2:
        raise ParameterError("n must be >= 2")
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    rng = as_rng(seed)
    a1 = _wigner(rng, n)
    z = _wigner(rng, n)
    truth = Permutation.random(n, rng)
    a2prime = SymMatrix(a1.entries + sigma * z.entries)
    return CorrelatedWignerPair(a1=a1, a2=a2prime.relabel(truth), truth=truth, sigma=sigma)


def _wigner(rng, n: int) -> SymMatrix:
    """GOE-normalized draw: var 1/n off-diagonal, 2/n on the diagonal."""
    m = n * (n - 1) // 2
    off = polar_normal(rng, m) / np.sqrt(n)
    diag = polar_normal(rng, n) * np.sqrt(2.0 / n)
    a = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    a[iu] = off
    a = a + a.T
    a[np.diag_indices(n)] = diag
    return SymMatrix(a)


def sample_gw_tree(lam: float, d: int, seed) -> RootedTree:
    """Depth-d Galton-Watson tree with Poisson(lam) offspring."""
    if lam < 0:
        raise ParameterError("lambda must be >= 0")
    if d < 0:
        raise ParameterError("depth must be >= 0")
    rng = as_rng(seed)
    children = _gw_children(rng, lam, d)
    return RootedTree.from_children(children)


def _gw_children(rng, lam: float, d: int) -> list:
    """Children lists of a GW tree, nodes in BFS order."""
    children: list = [[]]
    level = [0]
    for _ in range(d):
        if not level:
            break
        counts = rng.poisson(lam, size=len(level))
        nxt = []
        for u, k in zip(level, counts):
            kids = list(range(len(children), len(children) + int(k)))
            children[u] = kids
            children.extend([[] for _ in range(int(k))])
            nxt.extend(kids)
        level = nxt
    return children


def sample_correlated_tree_pair(lam: float, s: float, d: int, seed) -> TreePair:
    """Sample a correlated tree pair.

    An intersection tree is drawn from GW(lam * s) of depth d; each output
    tree is an independent augmentation of it (extra Poisson(lam*(1-s))
    children per vertex, each carrying a fresh GW(lam) descendance of the
    complementary depth) followed by a uniform shuffle of children orders.
    Marginally each tree is GW(lam) of depth d.
    """
    if lam < 0 or not 0.0 <= s <= 1.0 or d < 0:
        raise ParameterError("require lam >= 0, s in [0, 1], d >= 0")
    rng = as_rng(seed)
    inter = _gw_children(rng, lam * s, d)
    t = _augment(rng, inter, lam, s, d)
    tp = _augment(rng, inter, lam, s, d)
    return TreePair(t=t, tprime=tp, lam=lam, s=s, d=d)


def _augment(rng, inter: list, lam: float, s: float, d: int) -> RootedTree:
    children = [list(k) for k in inter]
    n_inter = len(inter)
    depth = [0] * n_inter
    for u in range(n_inter):  # BFS order: parents precede children
        for v in inter[u]:
            depth[v] = depth[u] + 1
    # Only intersection-tree vertices receive extra children; each extra
    # child carries a complete GW(lam) descendance of complementary depth.
    for u in range(n_inter):
        h = depth[u]
        if h >= d:
            continue
        extra = int(rng.poisson(lam * (1.0 - s)))
        for _ in range(extra):
            v = len(children)
            children.append([])
            children[u].append(v)
            sub = _gw_children(rng, lam, d - h - 1)
            if len(sub) > 1:
                offset = len(children)
                children[v] = [k + offset - 1 for k in sub[0]]
                for w in range(1, len(sub)):
                    children.append([k + offset - 1 for k in sub[w]])
    tree = RootedTree.from_children(children)
    return tree.shuffled(rng)


# ---------------------------------------------------------------------------
# neighborhoods
# ---------------------------------------------------------------------------


def neighborhood(g: SparseGraph, i: int, d: int) -> Optional[RootedTree]:
    """BFS ball of radius d rooted at i, or None when it is not a tree.

    Children are ordered by ascending vertex id.
    """
    return _ball_tree(g, i, d, skip=None)


def oriented_neighborhood(g: SparseGraph, j: int, i: int, d: int) -> Optional[RootedTree]:
    """Ball of radius d around j in g minus edge (i, j), rooted at j.

    Returns None when the induced ball is not a tree.  Raises if (i, j) is
    not an edge of g.
    """
    if not g.has_edge(i, j):
        raise ParameterError(f"({i}, {j}) is not an edge")
    return _ball_tree(g, j, d, skip=i)


def _ball_tree(g: SparseGraph, root: int, d: int, skip: Optional[int]) -> Optional[RootedTree]:
    depth = {root: 0}
    parent = {root: -1}
    order = [root]
    head = 0
    while head < len(order):
        u = order[head]
        head += 1
        for v in g.neighbors(u):
            v = int(v)
            if skip is not None and {u, v} == {root, skip}:
                continue  # the removed oriented edge, in either direction
            if v == parent[u]:
                continue
            if v in depth:
                return None  # extra edge between two ball vertices: cycle
            if depth[u] < d:
                depth[v] = depth[u] + 1
                parent[v] = u
                order.append(v)
            # depth[u] == d and v outside the ball: ignore
    remap = {u: k for k, u in enumerate(order)}
    children: list = [[] for _ in order]
    for u in order:
        if parent[u] >= 0:
            children[remap[parent[u]]].append(remap[u])
    # BFS order plus sorted adjacency already yields ascending-id children
    return RootedTree.from_children(children)


# ---------------------------------------------------------------------------
# interchange formats
# ---------------------------------------------------------------------------


def write_edge_list(g: SparseGraph, path) -> None:
    """Text format: header line ``n <count>`` then one ``u v`` per edge."""
    with open(path, "w") as fh:
        fh.write(f"n {g.n}\n")
        for u, v in g.edges():
            fh.write(f"{u} {v}\n")


def read_edge_list(path) -> SparseGraph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "n":
            raise ValueError(f"{path}: bad edge-list header")
        n = int(header[1])
        edges = []
        for line in fh:
            if line.strip():
                u, v = line.split()
                edges.append((int(u), int(v)))
    return SparseGraph.from_edges(n, np.asarray(edges, dtype=np.int64).reshape(-1, 2))


def write_matrix(m: SymMatrix, path) -> None:
    """Binary format: 8-byte little-endian dimension, then row-major f64."""
    with open(path, "wb") as fh:
        fh.write(np.uint64(m.n).tobytes())
        fh.write(np.ascontiguousarray(m.entries, dtype="<f8").tobytes())


def read_matrix(path) -> SymMatrix:
    with open(path, "rb") as fh:
        n = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        data = np.frombuffer(fh.read(8 * n * n), dtype="<f8")
    return SymMatrix(data.reshape(n, n).copy())
