"""Message-passing graph alignment.

Messages live on pairs of oriented edges: the value at ((j -> i), (v -> u))
and depth delta is the log likelihood ratio of the two oriented
depth-delta neighborhoods under the correlated vs independent tree-pair
laws.  Neighborhoods that are not trees are skipped.  Vertices i and u are
matched when their (d+1)-balls are trees and three distinct neighbors on
each side can be matched one-to-one with every matched oriented-edge pair
exceeding the threshold tau * (lambda * s)^d.

Implementation notes.  The likelihood is invariant under relabeling, so a
message depends only on the canonical isomorphism classes of the two
neighborhoods.  We intern, per depth, the class of every oriented edge
(level-synchronous hashing of child classes) and store one value matrix
over class pairs instead of a flat (edge x edge) table; lookups go through
the class ids.  The bipartite matching sums are evaluated for all class
pairs at once, grouped by child counts, with a subset DP running in
shifted linear space (all terms are positive, so no cancellation).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .graph_models import SparseGraph, Permutation
from .tree_likelihood import DEFAULT_DEGREE_CAP, DEFAULT_TAU, LikelihoodParams, log_psi

DEFAULT_PRUNE_FACTOR = 10.0


def validate_depth(n: int, lam: float, s: float, d: int) -> bool:
    """True iff d * ln(lambda * (2 - s)) < ln(n) / 2 (local-limit regime)."""
    if d == 0:
        return True
    base = lam * (2.0 - s)
    if base <= 0.0:
        return True
    return d * math.log(base) < 0.5 * math.log(n)


# ---------------------------------------------------------------------------
# oriented-edge structure of one graph
# ---------------------------------------------------------------------------


class _OrientedEdges:
    """Oriented edge (j -> i) sits at CSR position p of (j, i)."""

    def __init__(self, g: SparseGraph):
        self.g = g
        self.src = np.repeat(np.arange(g.n, dtype=np.int64), np.diff(g.indptr))
        self.dst = g.indices
        self.m2 = self.dst.size
        # reverse position of each oriented edge
        rev = np.empty(self.m2, dtype=np.int64)
        for p in range(self.m2):
            j, i = self.src[p], self.dst[p]
            row = g.indices[g.indptr[i] : g.indptr[i + 1]]
            rev[p] = g.indptr[i] + np.searchsorted(row, j)
        self.rev = rev

    def eid(self, j: int, i: int) -> int:
        row = self.g.indices[self.g.indptr[j] : self.g.indptr[j + 1]]
        k = np.searchsorted(row, i)
        if k >= row.size or row[k] != i:
            raise ValueError(f"({j}, {i}) is not an oriented edge")
        return int(self.g.indptr[j] + k)

    def child_eids(self, p: int) -> list:
        """Oriented edges (k -> j) for k a neighbor of j other than i."""
        j = int(self.src[p])
        lo, hi = int(self.g.indptr[j]), int(self.g.indptr[j + 1])
        return [int(self.rev[q]) for q in range(lo, hi) if q != p]


def _nontree_radius_edges(g: SparseGraph, oe: _OrientedEdges, dmax: int) -> np.ndarray:
    """Per oriented edge: smallest radius whose ball is not a tree (or dmax+1)."""
    out = np.empty(oe.m2, dtype=np.int64)
    for p in range(oe.m2):
        out[p] = _nontree_radius(g, int(oe.src[p]), int(oe.dst[p]), dmax)
    return out


def _nontree_radius_vertices(g: SparseGraph, dmax: int) -> np.ndarray:
    out = np.empty(g.n, dtype=np.int64)
    for i in range(g.n):
        out[i] = _nontree_radius(g, i, None, dmax)
    return out


def _nontree_radius(g: SparseGraph, root: int, skip: Optional[int], dmax: int) -> int:
    """Smallest r <= dmax with a cycle inside the radius-r ball, else dmax + 1.

    With ``skip`` set, the edge (root, skip) is removed first (oriented
    neighborhood of root away from skip).
    """
    depth = {root: 0}
    parent = {root: -1}
    queue = [root]
    head = 0
    bad = dmax + 1
    while head < len(queue):
        u = queue[head]
        head += 1
        du = depth[u]
        if du >= bad:
            break
        for v in g.neighbors(u):
            v = int(v)
            if skip is not None and (u == root and v == skip or u == skip and v == root):
                continue
            if v == parent[u]:
                continue
            dv = depth.get(v)
            if dv is not None:
                bad = min(bad, max(du, dv))
            elif du < dmax:
                depth[v] = du + 1
                parent[v] = u
                queue.append(v)
    return bad


# ---------------------------------------------------------------------------
# canonical classes per depth
# ---------------------------------------------------------------------------


class _DepthClasses:
    """Interned isomorphism classes of one graph's oriented balls at one depth.

    ``ids`` maps oriented-edge position -> class id (for the unfolded view;
    validity against cycles is tracked separately).  ``children[c]`` is the
    sorted tuple of depth-(delta-1) class ids below class c; ``code[c]`` is
    the full AHU code used for deterministic tie-breaking.
    """

    def __init__(self):
        self.ids: np.ndarray = np.empty(0, dtype=np.int64)
        self.children: list = []
        self.code: list = []


def _intern_depth(oe: _OrientedEdges, prev: Optional[_DepthClasses]) -> _DepthClasses:
    cur = _DepthClasses()
    table: dict = {}
    ids = np.empty(oe.m2, dtype=np.int64)
    for p in range(oe.m2):
        if prev is None:
            key = ()
        else:
            key = tuple(sorted(int(prev.ids[q]) for q in oe.child_eids(p)))
        cid = table.get(key)
        if cid is None:
            cid = len(cur.children)
            table[key] = cid
            cur.children.append(key)
            if prev is None:
                cur.code.append(())
            else:
                cur.code.append(tuple(sorted(prev.code[c] for c in key)))
        ids[p] = cid
    cur.ids = ids
    return cur


# ---------------------------------------------------------------------------
# vectorized matching-sum evaluation over class pairs
# ---------------------------------------------------------------------------

_mask_cache: dict = {}


def _mask_tables(m: int):
    if m not in _mask_cache:
        idx = np.arange(1 << m, dtype=np.int64)
        pop = np.zeros(1 << m, dtype=np.int64)
        for j in range(m):
            pop += (idx >> j) & 1
        without = []
        for j in range(m):
            w = idx[((idx >> j) & 1) == 0]
            without.append((w, w | (1 << j)))
        groups = [np.nonzero(pop == k)[0] for k in range(m + 1)]
        _mask_cache[m] = (without, groups)
    return _mask_cache[m]


def _pair_values(w: np.ndarray, c: int, cp: int, lam: float, s: float) -> np.ndarray:
    """Log likelihood ratios for a batch of class pairs.

    ``w`` has shape (B, c, cp): log child-pair messages, -inf for pruned
    children.  Rows are the smaller side (c <= cp).  The subset DP runs in
    linear space after subtracting a per-pair shift; every term is a
    product of positive weights so the sums are cancellation-free.
    """
    b = w.shape[0]
    without, groups = _mask_tables(c)
    finite = np.isfinite(w)
    shift = np.where(finite.any(axis=(1, 2)), np.max(np.where(finite, w, -np.inf), axis=(1, 2)), 0.0)
    ew = np.exp(w - shift[:, None, None])
    ew[~finite] = 0.0

    f = np.zeros((b, 1 << c))
    f[:, 0] = 1.0
    for i in range(cp):
        nf = f.copy()
        col = ew[:, :, i]
        for j in range(c):
            src, dst = without[j]
            nf[:, dst] += f[:, src] * col[:, j : j + 1]
        f = nf

    lg = math.lgamma
    out = np.full(b, -np.inf)
    with np.errstate(divide="ignore"):
        for k in range(c + 1):
            mk = f[:, groups[k]].sum(axis=1)
            log_mk = np.where(mk > 0.0, np.log(np.maximum(mk, 1e-300)), -np.inf) + k * shift
            coef = (
                log_psi(k, c, cp, lam, s)
                + lg(k + 1)
                - (lg(c + 1) - lg(c - k + 1))
                - (lg(cp + 1) - lg(cp - k + 1))
            )
            out = np.logaddexp(out, coef + log_mk)
    return out


def _capped_children(cls: _DepthClasses, prev: _DepthClasses, cid: int, cap: int) -> tuple:
    kids = cls.children[cid]
    order = sorted(kids, key=lambda c: (len(prev.children[c]), prev.code[c]))
    return tuple(order[:cap])


# ---------------------------------------------------------------------------
# the message table
# ---------------------------------------------------------------------------


@dataclass
class MessageTable:
    """Per-depth log likelihood messages over oriented edge pairs.

    ``value_matrices[delta]`` is indexed by the class ids of the two
    oriented neighborhoods; pruned and non-tree pairs read as absent.
    The nominal content is the map (oriented edge of g1, oriented edge of
    g2) -> log message; :meth:`get` and :meth:`items` expose that view.
    """

    depth: int
    params: LikelihoodParams
    prune_factor: Optional[float]
    capped: bool
    depth_warning: bool
    _oe1: _OrientedEdges
    _oe2: _OrientedEdges
    _classes1: list
    _classes2: list
    _tree_until1: np.ndarray
    _tree_until2: np.ndarray
    value_matrices: list = field(default_factory=list)

    def _lookup(self, p1: int, p2: int, delta: int) -> Optional[float]:
        if delta == 0:
            return 0.0
        if self._tree_until1[p1] <= delta or self._tree_until2[p2] <= delta:
            return None
        v = self.value_matrices[delta][
            self._classes1[delta].ids[p1], self._classes2[delta].ids[p2]
        ]
        return float(v) if np.isfinite(v) else None

    def get(self, edge1: tuple, edge2: tuple, delta: Optional[int] = None) -> Optional[float]:
        """Message for oriented edges (j -> i) of g1 and (v -> u) of g2.

        Returns None for pairs that are absent (non-tree neighborhood or
        pruned below the propagation floor).
        """
        delta = self.depth if delta is None else delta
        p1 = self._oe1.eid(*edge1)
        p2 = self._oe2.eid(*edge2)
        return self._lookup(p1, p2, delta)

    def items(self, delta: Optional[int] = None):
        """Iterate ((j, i), (v, u)) -> value; intended for small graphs."""
        delta = self.depth if delta is None else delta
        for p1 in range(self._oe1.m2):
            for p2 in range(self._oe2.m2):
                v = self._lookup(p1, p2, delta)
                if v is not None:
                    yield (
                        (int(self._oe1.src[p1]), int(self._oe1.dst[p1])),
                        (int(self._oe2.src[p2]), int(self._oe2.dst[p2])),
                        v,
                    )


def compute_messages(
    g1: SparseGraph,
    g2: SparseGraph,
    params: LikelihoodParams,
    prune_factor: Optional[float] = DEFAULT_PRUNE_FACTOR,
    degree_cap: int = DEFAULT_DEGREE_CAP,
    memory_budget: int = 2**31,
    _chunk: int = 1 << 18,
) -> MessageTable:
    """Depth-iterate the likelihood messages for all oriented edge pairs.

    Pairs whose value falls below ``-prune_factor * (lambda*s)^delta`` are
    dropped from further propagation (``prune_factor=None`` disables).
    Raises MemoryError when the estimated table size exceeds the budget.
    """
    d = params.d
    depth_ok = validate_depth(g1.n, params.lam, params.s, d)
    if not depth_ok:
        warnings.warn(
            f"depth d={d} violates d*ln(lambda*(2-s)) < ln(n)/2; "
            "local tree approximation may be poor",
            stacklevel=2,
        )
    oe1, oe2 = _OrientedEdges(g1), _OrientedEdges(g2)
    tree1 = _nontree_radius_edges(g1, oe1, d)
    tree2 = _nontree_radius_edges(g2, oe2, d)

    classes1: list = [_intern_depth(oe1, None)]
    classes2: list = [_intern_depth(oe2, None)]
    values: list = [None]
    lam, s = params.lam, params.s
    capped_any = False

    for delta in range(1, d + 1):
        cls1 = _intern_depth(oe1, classes1[-1])
        cls2 = _intern_depth(oe2, classes2[-1])
        classes1.append(cls1)
        classes2.append(cls2)
        k1, k2 = len(cls1.children), len(cls2.children)
        if 8 * k1 * k2 > memory_budget:
            raise MemoryError(
                f"message table at depth {delta} needs {8 * k1 * k2} bytes "
                f"for {k1} x {k2} classes, over budget {memory_budget}"
            )
        dmat = np.empty((k1, k2))
        # at delta = 1 the single depth-0 class pair has message ln 1 = 0
        prev = values[delta - 1] if delta > 1 else np.zeros((1, 1))
        prev1, prev2 = classes1[delta - 1], classes2[delta - 1]

        len1 = np.array([len(t) for t in cls1.children], dtype=np.int64)
        len2 = np.array([len(t) for t in cls2.children], dtype=np.int64)
        by_len1: dict = {}
        by_len2: dict = {}
        for a, ln in enumerate(len1):
            by_len1.setdefault(int(ln), []).append(a)
        for b, ln in enumerate(len2):
            by_len2.setdefault(int(ln), []).append(b)

        for ca, a_list in by_len1.items():
            ch_a = np.array([cls1.children[a] for a in a_list], dtype=np.int64).reshape(len(a_list), ca)
            for cb, b_list in by_len2.items():
                b_arr = np.array(b_list, dtype=np.int64)
                if min(ca, cb) == 0:
                    sub = np.full(
                        (len(a_list), len(b_list)), log_psi(0, ca, cb, lam, s)
                    )
                    dmat[np.ix_(a_list, b_list)] = sub
                    continue
                if min(ca, cb) > degree_cap:
                    capped_any = True
                    dmat[np.ix_(a_list, b_list)] = _capped_block(
                        prev, prev1, prev2, cls1, cls2, a_list, b_list, degree_cap, lam, s
                    )
                    continue
                ch_b = np.array([cls2.children[b] for b in b_list], dtype=np.int64).reshape(len(b_list), cb)
                c, cp = min(ca, cb), max(ca, cb)
                # chunk rows so the DP working set stays near _chunk floats
                per_pair = max(ca * cb, 1 << c)
                rows_per = max(1, _chunk // max(1, len(b_list) * per_pair))
                out = np.empty((len(a_list), len(b_list)))
                for lo in range(0, len(a_list), rows_per):
                    hi = min(lo + rows_per, len(a_list))
                    w = prev[ch_a[lo:hi, None, :, None], ch_b[None, :, None, :]]
                    w = w.reshape((hi - lo) * len(b_list), ca, cb)
                    if ca > cb:
                        w = np.swapaxes(w, 1, 2)
                    out[lo:hi] = _pair_values(w, c, cp, lam, s).reshape(hi - lo, len(b_list))
                dmat[np.ix_(a_list, b_list)] = out

        if prune_factor is not None:
            floor = -prune_factor * (lam * s) ** delta
            dmat[dmat < floor] = -np.inf
        values.append(dmat)

    return MessageTable(
        depth=d,
        params=params,
        prune_factor=prune_factor,
        capped=capped_any,
        depth_warning=not depth_ok,
        _oe1=oe1,
        _oe2=oe2,
        _classes1=classes1,
        _classes2=classes2,
        _tree_until1=tree1,
        _tree_until2=tree2,
        value_matrices=values,
    )


def _capped_block(prev, prev1, prev2, cls1, cls2, a_list, b_list, cap, lam, s):
    """Slow path for pairs above the degree cap (rare in sparse graphs)."""
    out = np.empty((len(a_list), len(b_list)))
    for x, a in enumerate(a_list):
        ka = _capped_children(cls1, prev1, a, cap)
        for y, b in enumerate(b_list):
            kb = _capped_children(cls2, prev2, b, cap)
            w = prev[np.ix_(list(ka), list(kb))]
            if len(ka) > len(kb):
                w = w.T
            out[x, y] = _pair_values(w[None, :, :], min(len(ka), len(kb)), max(len(ka), len(kb)), lam, s)[0]
    return out


# ---------------------------------------------------------------------------
# vertex matching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatchSet:
    """Raw collection of matched vertex pairs; injectivity is not forced."""

    pairs: tuple
    lam: float
    s: float
    d: int
    tau: float


def match_vertices(
    g1: SparseGraph,
    g2: SparseGraph,
    msgs: MessageTable,
    tau: float = DEFAULT_TAU,
    d: Optional[int] = None,
) -> MatchSet:
    """Match (i, u) when three neighbor pairs clear the message threshold.

    Requires the radius-(d+1) balls of i and u to be trees and an exact
    3-matching (maximum bipartite matching, not greedy) in the thresholded
    neighbor-pair graph.
    """
    d = msgs.depth if d is None else d
    if d != msgs.depth:
        raise ValueError("messages were computed at a different depth")
    params = msgs.params
    theta = tau * (params.lam * params.s) ** d
    dmat = msgs.value_matrices[d] if d > 0 else None

    vt1 = _nontree_radius_vertices(g1, d + 1)
    vt2 = _nontree_radius_vertices(g2, d + 1)

    oe1, oe2 = msgs._oe1, msgs._oe2
    cls1, cls2 = msgs._classes1[d], msgs._classes2[d]
    t1, t2 = msgs._tree_until1, msgs._tree_until2

    # incoming class ids per vertex: classes of (j -> i) for j ~ i
    def incoming(g, oe, cls, tflags):
        out = []
        for i in range(g.n):
            lo, hi = int(g.indptr[i]), int(g.indptr[i + 1])
            ids = []
            for q in range(lo, hi):
                p = int(oe.rev[q])  # (j -> i)
                ids.append(int(cls.ids[p]) if tflags[p] > d else -1)
            out.append(ids)
        return out

    inc1 = incoming(g1, oe1, cls1, t1)
    inc2 = incoming(g2, oe2, cls2, t2)

    if d == 0:
        ok = 0.0 >= theta  # all-zero message table
        thresh = None
    else:
        thresh = dmat >= theta  # (k1, k2) boolean

    # vertices of g2 reachable from each g1-side class id
    if d > 0:
        us_by_class: list = [[] for _ in range(thresh.shape[1])]
        for u in range(g2.n):
            if vt2[u] <= d + 1 or g2.degree(u) < 3:
                continue
            for b in set(x for x in inc2[u] if x >= 0):
                us_by_class[b].append(u)
        good_b = [np.nonzero(thresh[a])[0] for a in range(thresh.shape[0])]

    pairs = []
    for i in range(g1.n):
        if g1.degree(i) < 3 or vt1[i] <= d + 1:
            continue
        a_ids = [a for a in inc1[i] if a >= 0]
        if len(a_ids) < 3:
            continue
        if d == 0:
            if not ok:
                continue
            cands = [u for u in range(g2.n) if g2.degree(u) >= 3 and vt2[u] > d + 1]
        else:
            counts: dict = {}
            for a in set(a_ids):
                seen: set = set()
                for b in good_b[a]:
                    seen.update(us_by_class[b])
                for u in seen:
                    counts[u] = counts.get(u, 0) + 1
            cands = [u for u, k in counts.items() if k >= 1]
        for u in sorted(cands):
            b_ids = [b for b in inc2[u] if b >= 0]
            if len(b_ids) < 3:
                continue
            if d == 0:
                adj = [[True] * len(b_ids) for _ in a_ids]
            else:
                adj = [[bool(thresh[a, b]) for b in b_ids] for a in a_ids]
            if _max_matching_at_least(adj, 3):
                pairs.append((i, u))
    return MatchSet(pairs=tuple(sorted(pairs)), lam=params.lam, s=params.s, d=d, tau=tau)


def _max_matching_at_least(adj: list, k: int) -> bool:
    """Kuhn's augmenting-path matching with early exit at size k."""
    n_left = len(adj)
    n_right = len(adj[0]) if adj else 0
    match_r = [-1] * n_right
    size = 0
    for a in range(n_left):
        seen = [False] * n_right
        if _try_augment(adj, a, seen, match_r):
            size += 1
            if size >= k:
                return True
    return False


def _try_augment(adj, a, seen, match_r):
    for b in range(len(seen)):
        if adj[a][b] and not seen[b]:
            seen[b] = True
            if match_r[b] == -1 or _try_augment(adj, match_r[b], seen, match_r):
                match_r[b] = a
                return True
    return False


def score_matches(matches: MatchSet, truth: Permutation) -> tuple:
    """(n_correct, n_incorrect) against the hidden permutation."""
    n_correct = sum(1 for i, u in matches.pairs if truth(i) == u)
    return n_correct, len(matches.pairs) - n_correct
