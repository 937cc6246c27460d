"""Rooted unlabeled trees: canonical forms, counting, and KL series.

``A(d, n)`` denotes the number of rooted unlabeled trees with n vertices
and depth at most d; ``A(n)`` is the unrestricted count (OEIS A000081).
The counts are carried by the generating function

    phi_d(x) = sum_n A(d, n) x^(n-1),

which satisfies phi_{d+1}(x) = exp( sum_{j>=1} x^j / j * phi_d(x^j) ).

Two independent routes to the counts coexist here: explicit generation of
canonical codes (:func:`enumerate_rooted_trees`, the oracle) and the series
recursion (:func:`phi_step`).  Tests require them to agree exactly.

The large-correlation behavior of tree correlation testing reduces to
whether sum_n A(d, n) (s^2)^(n-1) stays bounded as d grows, which happens
precisely for s^2 up to the inverse growth rate of A(n) -- Otter's
constant, about 0.3383.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

from .graph_models import RootedTree

OTTER_CONSTANT = 0.3383219  # growth base of A(n); alpha in the literature

_ENUM_LIMIT = 20  # memory guard: A(20) is already ~1.3e7 trees


# ---------------------------------------------------------------------------
# canonical forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalTree:
    """AHU-style canonical encoding of a rooted unlabeled tree.

    ``code`` is a nested tuple: a vertex's code is the sorted tuple of its
    children's codes.  Equal codes iff rooted-isomorphic.
    """

    code: tuple
    size: int
    depth: int

    def to_tree(self) -> RootedTree:
        """A labeled representative with children in code order."""
        children: list = []

        def build(code: tuple) -> int:
            u = len(children)
            children.append([])
            children[u] = [build(sub) for sub in code]
            return u

        build(self.code)
        return RootedTree.from_children(children)


def canonical_form(t: RootedTree) -> CanonicalTree:
    """Canonical code of a rooted tree; invariant under child reordering."""
    n = t.n_vertices
    codes: list = [None] * n
    depth: list = [0] * n
    # children always have larger BFS/constructor order than parents is not
    # guaranteed for arbitrary trees, so process by decreasing depth
    depths = t.depths()
    order = sorted(range(n), key=lambda u: -depths[u])
    for u in order:
        kid_codes = sorted(codes[v] for v in t.children[u])
        codes[u] = tuple(kid_codes)
        depth[u] = 1 + max((depth[v] for v in t.children[u]), default=-1)
    return CanonicalTree(code=codes[0], size=n, depth=depth[0])


def _code_size(code: tuple) -> int:
    return 1 + sum(_code_size(c) for c in code)


def _code_depth(code: tuple) -> int:
    return 1 + max((_code_depth(c) for c in code), default=-1)


# ---------------------------------------------------------------------------
# explicit enumeration (the oracle)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _codes_by_size(n_max: int) -> tuple:
    """All canonical codes with <= n_max vertices, grouped by size.

    Returns a tuple ``groups`` where groups[k] lists (code, height) for all
    rooted unlabeled trees with k vertices, k <= n_max.
    """
    groups: list = [None, [((), 0)]]  # size 1: the bare root
    # flat pool of (size, code, height), in generation order
    pool = [(1, (), 0)]
    for size in range(2, n_max + 1):
        found = []

        def extend(budget: int, start: int, acc: tuple, height: int):
            if budget == 0:
                found.append((acc, height + 1))
                return
            for idx in range(start, len(pool)):
                sz, code, h = pool[idx]
                if sz > budget:
                    continue
                extend(budget - sz, idx, acc + (code,), max(height, h))

        extend(size - 1, 0, (), 0)
        # the recursion picks child multisets in nondecreasing pool order;
        # sort each multiset into canonical order and dedupe
        seen = {}
        for acc, h in found:
            code = tuple(sorted(acc))
            if code not in seen:
                seen[code] = h
        group = sorted(seen.items())
        groups.append([(c, h) for c, h in group])
        pool.extend((size, c, h) for c, h in group)
    return tuple(tuple(g) if g else () for g in groups)


def enumerate_rooted_trees(n_max: int, max_depth: Optional[int] = None) -> list:
    """Exact counts [A_1, ..., A_{n_max}] by explicit generation.

    With ``max_depth=d`` counts only trees of depth at most d, i.e. the
    A(d, n) column.  Guarded at n_max <= 20.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if n_max > _ENUM_LIMIT:
        raise ValueError(f"n_max > {_ENUM_LIMIT} would need gigabytes; refusing")
    groups = _codes_by_size(n_max)
    counts = []
    for size in range(1, n_max + 1):
        g = groups[size]
        if max_depth is None:
            counts.append(len(g))
        else:
            counts.append(sum(1 for _, h in g if h <= max_depth))
    return counts


# ---------------------------------------------------------------------------
# the phi recursion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncatedSeries:
    """Coefficients a_0..a_N of a formal power series in x."""

    coeffs: tuple
    truncation: int

    def __post_init__(self):
        if len(self.coeffs) != self.truncation + 1:
            raise ValueError("need exactly truncation + 1 coefficients")

    def __call__(self, x: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * x + float(c)
        return acc

    @staticmethod
    def one(truncation: int, exact: bool = False) -> "TruncatedSeries":
        unit = Fraction(1) if exact else 1.0
        zero = Fraction(0) if exact else 0.0
        return TruncatedSeries((unit,) + (zero,) * truncation, truncation)


def phi_step(phi_d: TruncatedSeries, truncation: Optional[int] = None) -> TruncatedSeries:
    """One depth step: phi_{d+1} = exp( sum_j x^j / j * phi_d(x^j) ).

    The substitution x -> x^j reindexes coefficients; the exponential uses
    the first-order recurrence h_m = (1/m) sum_k k g_k h_{m-k}, exact to
    rounding (and exact over Fractions when the input is exact).
    """
    if float(phi_d.coeffs[0]) < 1.0:
        raise ValueError("phi series must have constant term >= 1")
    n = phi_d.truncation if truncation is None else truncation
    exact = isinstance(phi_d.coeffs[0], Fraction)
    zero = Fraction(0) if exact else 0.0

    g = [zero] * (n + 1)
    for j in range(1, n + 1):
        inv_j = Fraction(1, j) if exact else 1.0 / j
        for m in range(1, n // j + 1):  # coefficient of x^(j*m) gains A_{d,m}/j
            if m - 1 <= phi_d.truncation:
                g[j * m] += phi_d.coeffs[m - 1] * inv_j

    h = [zero] * (n + 1)
    h[0] = Fraction(1) if exact else 1.0
    for m in range(1, n + 1):
        acc = zero
        for k in range(1, m + 1):
            if g[k]:
                acc += k * g[k] * h[m - k]
        h[m] = acc / m
    return TruncatedSeries(tuple(h), n)


@lru_cache(maxsize=64)
def _phi_table(d: int, truncation: int, exact: bool) -> tuple:
    """phi_0 .. phi_d at the given truncation (cached; pure function)."""
    series = [TruncatedSeries.one(truncation, exact=exact)]
    for _ in range(d):
        series.append(phi_step(series[-1]))
    return tuple(series)


@dataclass(frozen=True)
class TreeCountTable:
    """Counts A(d, n) for n = 1..N at fixed depth bound d."""

    d: int
    counts: tuple

    @staticmethod
    def from_recursion(d: int, n_max: int, exact: bool = False) -> "TreeCountTable":
        phi = _phi_table(d, n_max - 1, exact)[d]
        counts = []
        for i in range(n_max):
            c = phi.coeffs[i]
            if exact:
                if c.denominator != 1:
                    raise ValueError(f"non-integer exact count at n={i + 1}")
                counts.append(int(c))
            else:
                r = round(c)
                if abs(c - r) > max(1e-6, 1e-9 * abs(c)):
                    raise ValueError(f"count at n={i + 1} is not near-integral: {c!r}")
                counts.append(int(r))
        return TreeCountTable(d=d, counts=tuple(counts))


# ---------------------------------------------------------------------------
# KL values of the large-correlation limit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesValue:
    value: float
    tail_flag: bool  # last retained term is not negligible


def kl_infinity(d: int, s: float, truncation: int = 400) -> SeriesValue:
    """0.5 * ln phi_d(s^2) from the truncated series.

    ``tail_flag`` is set when the last retained term exceeds 1e-12 of the
    partial sum, i.e. when the truncation is not safely negligible.
    """
    if not 0.0 <= s < 1.0:
        raise ValueError("s must lie in [0, 1)")
    phi = _phi_table(d, truncation, False)[d]
    x = s * s
    total = phi(x)
    last = float(phi.coeffs[-1]) * x ** phi.truncation
    return SeriesValue(value=0.5 * math.log(total), tail_flag=last > 1e-12 * total)


def kl_gaussian_sum(d: int, s: float, truncation: int = 400) -> float:
    """sum_n A(d, n) * (-1/2) ln(1 - s^(2n)), truncated at n <= N + 1."""
    if not 0.0 <= s < 1.0:
        raise ValueError("s must lie in [0, 1)")
    phi = _phi_table(d, truncation, False)[d]
    x = s * s
    total = 0.0
    xn = x  # s^(2n) for n = 1
    for c in phi.coeffs:
        total += float(c) * (-0.5) * math.log1p(-xn)
        xn *= x
    return total


def kl_profile(s: float, d_max: int, truncation: int = 400) -> list:
    """kl_infinity values for d = 0..d_max (shared series table)."""
    table = _phi_table(d_max, truncation, False)
    x = s * s
    return [0.5 * math.log(table[d](x)) for d in range(d_max + 1)]


def diverges(s: float, d_max: int = 24, truncation: int = 600) -> bool:
    """Divergence indicator for lim_d of the depth-d KL values.

    Divergent when the value exceeds 10 or the increments grow for three
    consecutive depths; otherwise convergent.  (Increments below 1e-6 are
    an immediate convergent call; at desk-scale depth bounds the shrinking
    geometric tail of the increments is accepted as convergent too.)
    """
    values = kl_profile(s, d_max, truncation)
    if values[-1] > 10.0:
        return True
    inc = [b - a for a, b in zip(values, values[1:])]
    if inc and inc[-1] < 1e-6:
        return False
    growing = 0
    for a, b in zip(inc, inc[1:]):
        growing = growing + 1 if b > a else 0
        if growing >= 3:
            return True
    return False


def threshold_locator(d_max: int = 24, truncation: int = 600, tol: float = 0.005) -> float:
    """Bisection on s of the divergence indicator; returns the midpoint."""
    lo, hi = 0.0, 1.0 - 1e-9
    if tol >= (hi - lo) / 2:
        return 0.5
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if diverges(mid, d_max=d_max, truncation=truncation):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def otter_estimate(n_max: int, corrected: bool = True) -> float:
    """Estimate Otter's constant from the tail ratio of exact counts.

    Returns A(n_max - 1) / A(n_max), by default multiplied by the
    first-order size correction ((n_max - 1) / n_max)^(3/2) implied by
    A(n) ~ C n^(-3/2) alpha^(-n).  Without the correction the plain ratio
    overshoots alpha by a factor 1 + 3/(2n); pass ``corrected=False`` for
    the raw (pre-asymptotic) ratio.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    table = TreeCountTable.from_recursion(n_max - 1, n_max, exact=True)
    ratio = table.counts[-2] / table.counts[-1]
    if corrected:
        ratio *= ((n_max - 1) / n_max) ** 1.5
    return ratio


def stabilized_counts(n_max: int) -> list:
    """Exact unrestricted counts A(1)..A(n_max) via the recursion."""
    return list(TreeCountTable.from_recursion(n_max - 1, n_max, exact=True).counts)
