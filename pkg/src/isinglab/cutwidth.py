"""Cut-width: exact solver, tree ordering bound, Galton-Watson statistics.

The exact solver runs a dynamic program over vertex subsets (the prefix of
an ordering only matters as a set), so it is limited to ~20 vertices.  For
trees, a recursive concatenation ordering gives a cheap upper bound; its
distribution over Poisson Galton-Watson trees is compared against a shifted
Poisson tail, with the shift constant calibrated empirically.  The module
also evaluates the closed-form relaxation/mixing bounds that cut-width
yields for the Gibbs sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import poisson

from .errors import SizeCapError
from .graphs import Graph
from .rng import stream
from .stats import fit_line, wilson_interval

CUTWIDTH_CAP = 20

__all__ = [
    "CutwidthResult",
    "cutwidth_exact",
    "tree_cutwidth_ordering",
    "ordering_cutwidth",
    "gw_cutwidth_stats",
    "gw_cutwidth_scan",
    "order_stat_bound_sample",
    "calibrate_domination_shift",
    "poisson_tail",
    "relaxation_bound",
    "mixing_bound_cutwidth",
    "CUTWIDTH_CAP",
]


@dataclass(frozen=True)
class CutwidthResult:
    """Cut-width value with a witnessing vertex ordering.

    kind "exact" certifies optimality; kind "tree_bound" only promises
    value >= the witness ordering's maximum prefix cut.
    """

    value: int
    ordering: tuple
    kind: str


def ordering_cutwidth(graph: Graph, ordering) -> int:
    """Maximum number of edges crossing a prefix of the given ordering."""
    pos = np.empty(graph.n, dtype=np.int64)
    for i, v in enumerate(ordering):
        pos[v] = i
    if graph.n <= 1 or graph.m == 0:
        return 0
    diff = np.zeros(graph.n, dtype=np.int64)
    for u, v in graph.edges():
        lo, hi = sorted((pos[u], pos[v]))
        diff[lo] += 1
        diff[hi] -= 1
    return int(np.max(np.cumsum(diff)[:-1]))


@njit(cache=True)
def _popcount(x):
    c = 0
    while x:
        x &= x - 1
        c += 1
    return c


@njit(cache=True)
def _cutwidth_dp(n, nbr_mask):
    size = 1 << n
    inf = 1 << 30
    f = np.empty(size, np.int32)
    cost = np.empty(size, np.int32)
    f[0] = 0
    cost[0] = 0
    deg = np.empty(n, np.int32)
    for v in range(n):
        deg[v] = _popcount(nbr_mask[v])
    for s in range(1, size):
        low = s & (-s)
        v = 0
        t = low
        while t > 1:
            t >>= 1
            v += 1
        prev = s & (s - 1)
        cost[s] = cost[prev] + deg[v] - 2 * _popcount(nbr_mask[v] & prev)
        best = inf
        t = s
        while t:
            b = t & (-t)
            fu = f[s ^ b]
            if fu < best:
                best = fu
            t ^= b
        f[s] = best if best > cost[s] else cost[s]
    return f, cost


def cutwidth_exact(graph: Graph, cap: int = CUTWIDTH_CAP) -> CutwidthResult:
    """Optimal cut-width with witness via subset DP (2^n states)."""
    n = graph.n
    if n > cap:
        raise SizeCapError(f"n={n} exceeds cut-width solver cap {cap}")
    if n == 0:
        return CutwidthResult(value=0, ordering=(), kind="exact")
    nbr_mask = np.zeros(n, dtype=np.int64)
    for u in range(n):
        for v in graph.neighbors(u):
            nbr_mask[u] |= np.int64(1) << np.int64(int(v))
    f, cost = _cutwidth_dp(n, nbr_mask)
    full = (1 << n) - 1
    # walk back: at prefix set S remove the vertex with minimal f(S \ v),
    # ties to the smallest index, producing the ordering in reverse
    order = []
    s = full
    while s:
        best_v, best_f = -1, 1 << 30
        for v in range(n):
            if s & (1 << v):
                fv = int(f[s ^ (1 << v)])
                if fv < best_f:
                    best_f, best_v = fv, v
        order.append(best_v)
        s ^= 1 << best_v
    order.reverse()
    result = CutwidthResult(value=int(f[full]), ordering=tuple(order), kind="exact")
    assert ordering_cutwidth(graph, result.ordering) == result.value
    return result


# ---------------------------------------------------------------------------
# Tree bound
# ---------------------------------------------------------------------------

def _tree_children(tree: Graph, root: int):
    children = [[] for _ in range(tree.n)]
    parent = np.full(tree.n, -2, dtype=np.int64)
    parent[root] = -1
    stack = [root]
    seen = 1
    while stack:
        u = stack.pop()
        for w in tree.neighbors(u):
            w = int(w)
            if parent[w] == -2:
                parent[w] = u
                children[u].append(w)
                stack.append(w)
                seen += 1
    if seen != tree.n:
        raise ValueError("input is not connected")
    return children


def tree_cutwidth_ordering(tree: Graph, root: int = 0) -> CutwidthResult:
    """Concatenation bound for trees: root first, then subtree blocks.

    With subtree bounds b_1..b_k placed in ascending order, the bound is
    max_i (b_i + k + 1 - i); ascending placement pairs the largest subtree
    bound with the smallest pending-edge penalty, which minimizes the max.
    """
    if tree.m != tree.n - 1:
        raise ValueError("input has a cycle (or is disconnected): not a tree")
    children = _tree_children(tree, root)
    bound = np.zeros(tree.n, dtype=np.int64)
    orders = [None] * tree.n
    # post-order without recursion
    stack = [(root, False)]
    while stack:
        u, ready = stack.pop()
        if not ready:
            stack.append((u, True))
            for c in children[u]:
                stack.append((c, False))
            continue
        kids = children[u]
        if not kids:
            bound[u] = 0
            orders[u] = [u]
            continue
        kids_sorted = sorted(kids, key=lambda c: (bound[c], c))
        k = len(kids_sorted)
        val = 0
        seq = [u]
        for i, c in enumerate(kids_sorted, start=1):
            val = max(val, int(bound[c]) + k + 1 - i)
            seq.extend(orders[c])
        bound[u] = val
        orders[u] = seq
    result = CutwidthResult(value=int(bound[root]), ordering=tuple(orders[root]),
                            kind="tree_bound")
    assert ordering_cutwidth(tree, result.ordering) <= result.value
    return result


# ---------------------------------------------------------------------------
# Galton-Watson cut-width statistics
# ---------------------------------------------------------------------------

@njit(cache=True)
def _level_bounds(counts, child_bounds):
    """Per-node tree bound given each node's child count and child bounds.

    Children of node i occupy the next contiguous slice of child_bounds;
    a node's bound is max over ascending-sorted child bounds b_1..b_k of
    b_i + k + 1 - i (0 for leaves).
    """
    out = np.zeros(len(counts), dtype=np.int64)
    start = 0
    for i in range(len(counts)):
        k = counts[i]
        if k == 0:
            continue
        seg = np.sort(child_bounds[start:start + k])
        best = 0
        for j in range(k):
            val = seg[j] + k - j  # (j+1)-th ascending: b + k + 1 - (j+1)
            if val > best:
                best = val
        out[i] = best
        start += k
    return out


@dataclass(frozen=True)
class GwCutwidthStats:
    """Empirical cut-width distribution of depth-ell Poisson(d) GW trees."""

    d: float
    depth: int
    samples: int
    values: np.ndarray        # tree bound per sample
    sizes: np.ndarray         # vertices per sample
    exact_values: dict        # sample index -> exact cut-width (small trees)

    def quantiles(self, qs=(0.5, 0.9, 0.99)) -> dict:
        return {q: float(np.quantile(self.values, q)) for q in qs}


def _sample_gw_levels(d: float, depth: int, samples: int, rng):
    """Offspring counts per level for a forest of GW trees, sample-major."""
    level_counts = []
    sample_of = np.arange(samples, dtype=np.int64)
    active = np.ones(samples, dtype=np.int64)  # nodes per sample at this level
    for _ in range(depth):
        total = int(active.sum())
        if total == 0:
            break
        counts = rng.poisson(d, size=total).astype(np.int64)
        level_counts.append((counts, sample_of.copy()))
        sample_of = np.repeat(sample_of, counts)
        active = np.bincount(sample_of, minlength=samples)
    return level_counts


def gw_cutwidth_stats(d: float, depth: int, samples: int, seed: int,
                      exact_cap: int = CUTWIDTH_CAP) -> GwCutwidthStats:
    """Sample GW trees and record the tree bound (exact too on small trees)."""
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = stream(seed, "gw-cutwidth", depth)
    level_counts = _sample_gw_levels(d, depth, samples, rng)

    sizes = np.ones(samples, dtype=np.int64)
    for counts, sample_of in level_counts:
        sizes += np.bincount(sample_of, minlength=samples,
                             weights=counts).astype(np.int64)

    # bottom-up bound aggregation; deepest recorded level has leaf children
    if level_counts:
        child_bounds = np.zeros(int(level_counts[-1][0].sum()), dtype=np.int64)
        for counts, _ in reversed(level_counts):
            child_bounds = _level_bounds(counts, child_bounds)
        values = child_bounds
    else:
        values = np.zeros(samples, dtype=np.int64)

    exact_values = {}
    small = np.nonzero(sizes <= exact_cap)[0] if exact_cap > 0 else []
    if len(small):
        for s in small.tolist():
            g = _rebuild_tree(level_counts, s)
            exact_values[s] = cutwidth_exact(g, cap=exact_cap).value
    return GwCutwidthStats(d=d, depth=depth, samples=samples,
                           values=np.asarray(values, dtype=np.int64),
                           sizes=sizes, exact_values=exact_values)


def _rebuild_tree(level_counts, s: int) -> Graph:
    """Reconstruct one sample's tree from the forest's level arrays."""
    edges = []
    prev_ids = [0]
    nxt = 1
    for counts, sample_of in level_counts:
        mask = sample_of == s
        my_counts = counts[mask]
        new_ids = []
        for parent, c in zip(prev_ids, my_counts):
            for _ in range(int(c)):
                edges.append((parent, nxt))
                new_ids.append(nxt)
                nxt += 1
        prev_ids = new_ids
        if not prev_ids:
            break
    return Graph.from_edges(nxt, edges)


def poisson_tail(q: int, d: float) -> float:
    """P(Po(d) >= q)."""
    return float(poisson.sf(q - 1, d))


def calibrate_domination_shift(values_by_depth: dict, d: float,
                               q_max: int = 15, per_level: bool = True,
                               shift_max: int = 60) -> int:
    """Smallest integer C such that P(value >= C*ell + q) <= P(Po(d) >= q) + 2 CI.

    ``values_by_depth`` maps ell >= 1 to sample arrays; CI is the Wilson
    95% half-width of the empirical tail.  With per_level=False the shift
    is a constant C (for the order-statistic variable W), i.e. ell == 1.
    """
    for shift in range(1, shift_max + 1):
        ok = True
        for ell, values in values_by_depth.items():
            values = np.asarray(values)
            n = len(values)
            offset = shift * ell if per_level else shift
            for q in range(q_max + 1):
                hits = int(np.count_nonzero(values >= offset + q))
                p_hat = hits / n
                lo, hi = wilson_interval(hits, n)
                half = (hi - lo) / 2.0
                if p_hat > poisson_tail(q, d) + 2.0 * half:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return shift
    raise RuntimeError(f"no shift up to {shift_max} passes the domination test")


def gw_cutwidth_scan(d: float, depths, samples: int, seed: int,
                     exact_cap: int = 0) -> dict:
    """Stats across depths plus the calibrated shift and mean-vs-depth fit."""
    per_depth = {}
    for ell in depths:
        per_depth[ell] = gw_cutwidth_stats(d, ell, samples, seed,
                                           exact_cap=exact_cap)
    means = {ell: float(st.values.mean()) for ell, st in per_depth.items()}
    fit = fit_line(list(means), list(means.values()))
    shift = calibrate_domination_shift(
        {ell: st.values for ell, st in per_depth.items() if ell >= 1}, d)
    return {"stats": per_depth, "means": means, "fit": fit,
            "calibrated_shift": shift}


def order_stat_bound_sample(d: float, samples: int, seed: int) -> np.ndarray:
    """Draw W = X + max_i (Y_(i) - i) with X, Y_i ~ Po(d), ascending order stats.

    The empty max (X = 0) is defined as 0, so W = 0 there.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = stream(seed, "order-stat", 0)
    xs = rng.poisson(d, size=samples).astype(np.int64)
    total = int(xs.sum())
    ys = rng.poisson(d, size=total).astype(np.int64)
    out = np.zeros(samples, dtype=np.int64)
    pos = 0
    for i in range(samples):
        x = int(xs[i])
        if x == 0:
            continue
        seg = np.sort(ys[pos:pos + x])
        pos += x
        out[i] = x + int(np.max(seg - np.arange(1, x + 1)))
    return out


# ---------------------------------------------------------------------------
# Gibbs-sampler bounds from cut-width
# ---------------------------------------------------------------------------

def relaxation_bound(n: int, beta: float, cut_width: float, d: float) -> float:
    """n^2 exp(4 beta (E + d)): discrete-time relaxation time upper bound."""
    if min(n, beta, cut_width, d) < 0:
        raise ValueError("arguments must be nonnegative")
    return float(n) ** 2 * math.exp(4.0 * beta * (cut_width + d))


def mixing_bound_cutwidth(n: int, beta: float, cut_width: float, d: float) -> float:
    """80 n^3 exp(5 beta (E + d)): continuous-time mixing time upper bound."""
    if min(n, beta, cut_width, d) < 0:
        raise ValueError("arguments must be nonnegative")
    return 80.0 * float(n) ** 3 * math.exp(5.0 * beta * (cut_width + d))
