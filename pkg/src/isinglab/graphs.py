"""Graphs, Ising instances, random generators and ball/volume statistics.

Everything downstream consumes the two value types defined here:

* :class:`Graph` -- a simple undirected graph stored in CSR form,
* :class:`IsingInstance` -- a graph with ferromagnetic couplings and
  per-vertex external fields, where a field of +/-inf freezes the vertex.

Graphs and instances are immutable after construction (their arrays are
marked read-only) and safe to share across worker threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InstanceFormatError, SizeCapError
from .rng import stream

__all__ = [
    "Graph",
    "IsingInstance",
    "Ball",
    "SpanningTree",
    "build_instance",
    "ball",
    "gen_erdos_renyi",
    "gen_random_regular",
    "gen_galton_watson_poisson",
    "spanning_tree_bfs",
    "induced_subgraph",
    "tree_excess",
    "read_instance",
    "write_instance",
]


# ---------------------------------------------------------------------------
# Core types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Graph:
    """Simple undirected graph in CSR form.

    ``indptr``/``indices`` give the sorted neighbor list of vertex v as
    ``indices[indptr[v]:indptr[v+1]]``.  ``m`` counts undirected edges.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    m: int

    @staticmethod
    def from_edges(n: int, edges) -> "Graph":
        """Build a graph from an iterable of (u, v) pairs.

        Rejects self-loops, duplicate edges and out-of-range indices.
        """
        pairs = []
        seen = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u},{v}) out of range for n={n}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            pairs.append(key)

        deg = np.zeros(n, dtype=np.int64)
        for u, v in pairs:
            deg[u] += 1
            deg[v] += 1
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        indices = np.zeros(2 * len(pairs), dtype=np.int32)
        cursor = indptr[:-1].copy()
        for u, v in pairs:
            indices[cursor[u]] = v
            cursor[u] += 1
            indices[cursor[v]] = u
            cursor[v] += 1
        for v in range(n):
            indices[indptr[v]:indptr[v + 1]].sort()
        g = Graph(n=n, indptr=indptr, indices=indices, m=len(pairs))
        g._freeze()
        return g

    def _freeze(self):
        self.indptr.flags.writeable = False
        self.indices.flags.writeable = False

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    def edges(self):
        """Yield undirected edges (u, v) with u < v, sorted."""
        for u in range(self.n):
            for v in self.neighbors(u):
                if u < v:
                    yield u, int(v)

    def has_edge(self, u: int, v: int) -> bool:
        nb = self.neighbors(u)
        i = np.searchsorted(nb, v)
        return i < len(nb) and nb[i] == v

    def check_invariants(self):
        """Assert simplicity and adjacency symmetry; used by generator tests."""
        assert int(self.indptr[-1]) == 2 * self.m
        for u in range(self.n):
            nb = self.neighbors(u)
            assert np.all(np.diff(nb) > 0), f"unsorted/duplicate neighbors at {u}"
            assert u not in nb, f"self-loop at {u}"
            for v in nb:
                assert self.has_edge(int(v), u), f"asymmetric edge ({u},{v})"


CLAMP_FREE = 0
CLAMP_PLUS = 1
CLAMP_MINUS = -1


@dataclass(frozen=True)
class IsingInstance:
    """Ferromagnetic Ising model on a graph.

    ``weights`` aligns with ``graph.indices``: the coupling of edge (v, u)
    sits at the CSR position of u in v's neighbor list (stored twice).
    Fields are split into a finite part ``h`` and a ``clamp`` code so no
    consumer ever does arithmetic on an infinite sentinel: clamp[v] is 0
    for a free vertex and +/-1 for a vertex frozen to that spin.
    """

    graph: Graph
    weights: np.ndarray
    h: np.ndarray
    clamp: np.ndarray
    beta_max: float

    def _freeze(self):
        self.weights.flags.writeable = False
        self.h.flags.writeable = False
        self.clamp.flags.writeable = False

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def free_vertices(self) -> np.ndarray:
        return np.nonzero(self.clamp == CLAMP_FREE)[0]

    @property
    def n_free(self) -> int:
        return int(np.count_nonzero(self.clamp == CLAMP_FREE))

    def coupling(self, u: int, v: int) -> float:
        nb = self.graph.neighbors(u)
        i = np.searchsorted(nb, v)
        if i >= len(nb) or nb[i] != v:
            raise KeyError(f"no edge ({u},{v})")
        return float(self.weights[self.graph.indptr[u] + i])

    def field_repr(self, v: int) -> str:
        if self.clamp[v] == CLAMP_PLUS:
            return "+inf"
        if self.clamp[v] == CLAMP_MINUS:
            return "-inf"
        return repr(float(self.h[v]))

    def effective_field(self, v: int) -> float:
        """Finite field at v plus contributions from clamped neighbors."""
        g = self.graph
        lo, hi = g.indptr[v], g.indptr[v + 1]
        nb = g.indices[lo:hi]
        return float(self.h[v] + np.sum(self.weights[lo:hi] * self.clamp[nb]))


def build_instance(edges, fields=(), n: int | None = None) -> IsingInstance:
    """Validated immutable instance from (u, v, beta) edges and (v, h) fields.

    beta must be nonnegative (ferromagnetic only); h may be +/-inf to freeze
    a vertex.  n defaults to 1 + max index mentioned.
    """
    edges = [(int(u), int(v), float(b)) for u, v, b in edges]
    fields = [(int(v), float(h)) for v, h in fields]
    if n is None:
        verts = [u for u, v, _ in edges] + [v for _, v, _ in edges] + [v for v, _ in fields]
        n = max(verts) + 1 if verts else 1
    for u, v, b in edges:
        if b < 0:
            raise ValueError(f"antiferromagnetic coupling {b} on edge ({u},{v})")
    graph = Graph.from_edges(n, [(u, v) for u, v, _ in edges])

    weights = np.zeros(2 * graph.m, dtype=np.float64)
    for u, v, b in edges:
        for a, c in ((u, v), (v, u)):
            nb = graph.neighbors(a)
            i = int(np.searchsorted(nb, c))
            weights[graph.indptr[a] + i] = b

    h = np.zeros(n, dtype=np.float64)
    clamp = np.zeros(n, dtype=np.int8)
    seen = set()
    for v, hv in fields:
        if v in seen:
            raise ValueError(f"duplicate field for vertex {v}")
        seen.add(v)
        if math.isinf(hv):
            clamp[v] = CLAMP_PLUS if hv > 0 else CLAMP_MINUS
        elif math.isnan(hv):
            raise ValueError(f"NaN field at vertex {v}")
        else:
            h[v] = hv

    beta_max = max((b for _, _, b in edges), default=0.0)
    inst = IsingInstance(graph=graph, weights=weights, h=h, clamp=clamp,
                         beta_max=float(beta_max))
    inst._freeze()
    return inst


def from_graph(graph: Graph, beta, fields=()) -> IsingInstance:
    """Instance with uniform coupling beta on every edge of an existing graph."""
    return build_instance([(u, v, beta) for u, v in graph.edges()], fields, n=graph.n)


# ---------------------------------------------------------------------------
# Balls, spheres, spanning trees
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ball:
    """BFS ball B(v, R) with its sphere S(v, R) = B(v,R) \\ B(v,R-1)."""

    center: int
    radius: int
    interior: frozenset    # B(v, R-1)
    boundary: frozenset    # S(v, R)
    volume: int            # |B(v, R)|
    tree_excess: int       # |E(B)| - |B| + 1
    layers: tuple = field(repr=False, default=())

    @property
    def vertices(self) -> tuple:
        return tuple(sorted(self.interior | self.boundary))


def _bfs_layers(graph: Graph, v: int, radius: int):
    dist = {v: 0}
    layers = [[v]]
    frontier = [v]
    for r in range(1, radius + 1):
        nxt = []
        for u in frontier:
            for w in graph.neighbors(u):
                w = int(w)
                if w not in dist:
                    dist[w] = r
                    nxt.append(w)
        if not nxt:
            break
        layers.append(sorted(nxt))
        frontier = nxt
    return layers, dist


def ball(instance, v: int, R: int) -> Ball:
    """The radius-R ball around v with volume and tree-excess statistics."""
    graph = instance.graph if isinstance(instance, IsingInstance) else instance
    if R < 1:
        raise ValueError("radius must be >= 1")
    layers, dist = _bfs_layers(graph, v, R)
    members = set(dist)
    boundary = frozenset(layers[R]) if len(layers) > R else frozenset()
    interior = frozenset(members - boundary)
    n_edges = sum(1 for a in members for b in graph.neighbors(a)
                  if int(b) in members and a < b)
    return Ball(center=v, radius=R, interior=interior, boundary=boundary,
                volume=len(members), tree_excess=n_edges - len(members) + 1,
                layers=tuple(tuple(l) for l in layers))


def tree_excess(graph: Graph) -> int:
    """|E| - |V| + 1: the number of independent cycles of a connected graph."""
    return graph.m - graph.n + 1


@dataclass(frozen=True)
class SpanningTree:
    """BFS spanning tree of a ball, with tree vertex i = order[i] in the host."""

    tree: Graph
    order: tuple
    unexplored_edges: int


def spanning_tree_bfs(instance, b: Ball) -> SpanningTree:
    """Ordered-BFS spanning tree of B(v,R); exploration order is ascending index.

    Every ball edge not used by the tree is counted as unexplored; the count
    equals the ball's tree excess.
    """
    graph = instance.graph if isinstance(instance, IsingInstance) else instance
    members = set(b.interior) | set(b.boundary)
    in_tree = {b.center}
    order = [b.center]
    tree_edges = []
    frontier = [b.center]
    # Expand sphere by sphere; interior vertices in ascending order, matching
    # the construction that attaches each explorer to all unseen neighbors.
    while frontier:
        nxt = []
        for u in sorted(frontier):
            for w in graph.neighbors(u):
                w = int(w)
                if w in members and w not in in_tree:
                    in_tree.add(w)
                    order.append(w)
                    tree_edges.append((u, w))
                    nxt.append(w)
        frontier = nxt
    index = {g: i for i, g in enumerate(order)}
    tree = Graph.from_edges(len(order), [(index[u], index[w]) for u, w in tree_edges])
    n_ball_edges = sum(1 for a in members for c in graph.neighbors(a)
                       if int(c) in members and a < c)
    return SpanningTree(tree=tree, order=tuple(order),
                        unexplored_edges=n_ball_edges - len(tree_edges))


def induced_subgraph(graph: Graph, vertices) -> tuple[Graph, list]:
    """Subgraph induced on ``vertices``; returns (graph, original labels)."""
    keep = sorted(set(int(v) for v in vertices))
    index = {g: i for i, g in enumerate(keep)}
    edges = [(index[u], index[v]) for u in keep for v in graph.neighbors(u)
             if int(v) in index and u < v]
    return Graph.from_edges(len(keep), edges), keep


def induced_subinstance(instance: IsingInstance, vertices,
                        extra_clamps: dict | None = None):
    """Instance induced on ``vertices`` keeping couplings, fields and clamps.

    ``extra_clamps`` maps original vertex ids to +-1 spins frozen on top of
    the instance's own clamps.  Returns (instance, original labels).
    """
    extra = extra_clamps or {}
    keep = sorted(set(int(v) for v in vertices))
    index = {g: i for i, g in enumerate(keep)}
    edges = []
    for u in keep:
        for t, w in enumerate(instance.graph.neighbors(u)):
            w = int(w)
            if w in index and u < w:
                edges.append((index[u], index[w],
                              float(instance.weights[instance.graph.indptr[u] + t])))
    fields = []
    for g in keep:
        if g in extra:
            fields.append((index[g], math.inf if extra[g] > 0 else -math.inf))
        elif instance.clamp[g] != CLAMP_FREE:
            fields.append((index[g], math.inf if instance.clamp[g] > 0 else -math.inf))
        elif instance.h[g] != 0.0:
            fields.append((index[g], float(instance.h[g])))
    return build_instance(edges, fields, n=len(keep)), keep


# ---------------------------------------------------------------------------
# Random generators
# ---------------------------------------------------------------------------

def gen_erdos_renyi(n: int, d: float, seed: int) -> Graph:
    """G(n, d/n): every pair present independently with probability d/n.

    Uses geometric skipping over the C(n,2) linearized pairs so memory is
    O(m).  Requires 0 < d <= n (d = n means p = 1, all edges present).
    """
    if not (0 < d <= n):
        raise ValueError(f"require 0 < d <= n, got d={d}, n={n}")
    p = d / n
    total = n * (n - 1) // 2
    if p >= 1.0:
        idx = np.arange(total, dtype=np.int64)
    else:
        rng = stream(seed, "er", 0)
        hits = []
        pos = -1
        while True:
            gaps = rng.geometric(p, size=1024)
            for g in gaps:
                pos += int(g)
                if pos >= total:
                    break
                hits.append(pos)
            if pos >= total:
                break
        idx = np.asarray(hits, dtype=np.int64)
    # Unrank linear pair index k -> (u, v), u < v, rows of the upper triangle.
    row_start = np.concatenate(([0], np.cumsum(np.arange(n - 1, -1, -1, dtype=np.int64))))
    us = np.searchsorted(row_start, idx, side="right") - 1
    vs = us + 1 + (idx - row_start[us])
    return Graph.from_edges(n, list(zip(us.tolist(), vs.tolist())))


def gen_random_regular(n: int, d: int, seed: int, max_attempts: int = 100000) -> Graph:
    """Uniform simple d-regular graph via the pairing model with full rejection."""
    if (n * d) % 2 != 0:
        raise ValueError(f"nd must be even, got n={n}, d={d}")
    if d >= n:
        raise ValueError(f"require d < n, got d={d}, n={n}")
    rng = stream(seed, "regular", 0)
    stubs = np.repeat(np.arange(n, dtype=np.int64), d)
    for _ in range(max_attempts):
        perm = rng.permutation(stubs)
        us, vs = perm[0::2], perm[1::2]
        if np.any(us == vs):
            continue
        lo, hi = np.minimum(us, vs), np.maximum(us, vs)
        keys = lo * n + hi
        if len(np.unique(keys)) != len(keys):
            continue
        return Graph.from_edges(n, list(zip(lo.tolist(), hi.tolist())))
    raise SizeCapError(f"pairing model failed to produce a simple graph "
                       f"in {max_attempts} attempts (n={n}, d={d})")


def gen_galton_watson_poisson(d: float, depth: int, seed: int,
                              node_cap: int = 1_000_000) -> Graph:
    """Rooted Galton-Watson tree, Poisson(d) offspring, at most ``depth`` levels.

    The root is vertex 0; vertices are numbered in BFS order.
    """
    if d <= 0:
        raise ValueError("offspring mean must be positive")
    if depth < 0:
        raise ValueError("depth must be >= 0")
    rng = stream(seed, "gw", 0)
    edges = []
    level = [0]
    n = 1
    for _ in range(depth):
        if not level:
            break
        counts = rng.poisson(d, size=len(level))
        nxt = []
        for parent, c in zip(level, counts):
            for _ in range(int(c)):
                edges.append((parent, n))
                nxt.append(n)
                n += 1
                if n > node_cap:
                    raise SizeCapError(f"GW tree exceeded node cap {node_cap}")
        level = nxt
    return Graph.from_edges(n, edges)


# ---------------------------------------------------------------------------
# Instance text format
# ---------------------------------------------------------------------------

MAGIC = "ising-instance v1"


def write_instance(instance: IsingInstance, path) -> None:
    """Write the line-oriented instance format (edges then nonzero fields)."""
    lines = [MAGIC, f"n {instance.n} m {instance.graph.m}"]
    for u, v in instance.graph.edges():
        lines.append(f"edge {u} {v} {instance.coupling(u, v)!r}")
    for v in range(instance.n):
        if instance.clamp[v] != CLAMP_FREE or instance.h[v] != 0.0:
            lines.append(f"field {v} {instance.field_repr(v)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path) -> IsingInstance:
    """Parse the instance format; '#' starts a comment."""
    with open(path) as fh:
        raw = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in raw if ln]
    if not lines or lines[0] != MAGIC:
        raise InstanceFormatError(f"missing '{MAGIC}' header")
    head = lines[1].split()
    if len(head) != 4 or head[0] != "n" or head[2] != "m":
        raise InstanceFormatError(f"bad size line: {lines[1]!r}")
    n, m = int(head[1]), int(head[3])
    edges, fields = [], []
    for ln in lines[2:]:
        parts = ln.split()
        if parts[0] == "edge":
            if len(parts) != 4:
                raise InstanceFormatError(f"bad edge line: {ln!r}")
            edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
        elif parts[0] == "field":
            if len(parts) != 3:
                raise InstanceFormatError(f"bad field line: {ln!r}")
            token = parts[2]
            if token == "+inf":
                hv = math.inf
            elif token == "-inf":
                hv = -math.inf
            else:
                hv = float(token)
            fields.append((int(parts[1]), hv))
        else:
            raise InstanceFormatError(f"unknown record: {ln!r}")
    if len(edges) != m:
        raise InstanceFormatError(f"declared m={m} but found {len(edges)} edges")
    return build_instance(edges, fields, n=n)
