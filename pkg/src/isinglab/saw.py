"""Trees of self-avoiding walks and spatial-mixing certificates.

The walk tree from a vertex v contains every self-avoiding walk out of v;
a walk that returns to a previously visited vertex ends in a leaf whose spin
is frozen by a fixed orientation rule, and the root marginal on the tree
then equals the conditional marginal on the original graph.  On top of the
exact marginal this module computes, per boundary vertex u of a ball, both
the walk-tree upper bound on the boundary influence a_u (a sum of tanh
products over walk copies of u) and the exact supremum, and aggregates the
bounds into a pass/fail certificate against the 1/4 budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SizeCapError
from .exact import conditional_marginal
from .graphs import (
    CLAMP_FREE,
    IsingInstance,
    ball,
    induced_subinstance,
)

NODE_CAP = 5_000_000
SM_BUDGET = 0.25

__all__ = [
    "SawTree",
    "SpatialMixingCert",
    "build_saw_tree",
    "saw_marginal",
    "spatial_bound_a_u",
    "exact_a_u",
    "NODE_CAP",
    "SM_BUDGET",
]

# node status codes
FREE = 0
CYCLE_PLUS = 1     # in A, frozen +
CYCLE_MINUS = 2    # in A, frozen -
FROZEN_PLUS = 3    # lifted clamp or conditioning, frozen +
FROZEN_MINUS = 4   # lifted clamp or conditioning, frozen -


@dataclass(frozen=True)
class SawTree:
    """Flat arrays describing the walk tree; node 0 is the root copy of v.

    ``origin[i]`` maps node i back to its graph vertex (the map phi),
    ``parent[i]``/``beta[i]`` give the tree edge, ``status[i]`` marks free
    nodes, cycle-closing leaves (the clamp set A) and lifted freezes.
    """

    root_vertex: int
    depth_limit: int
    origin: np.ndarray
    parent: np.ndarray
    beta: np.ndarray
    depth: np.ndarray
    status: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.origin)

    @property
    def clamp_set(self) -> np.ndarray:
        """Indices of cycle-closing leaves (the set A)."""
        return np.nonzero((self.status == CYCLE_PLUS) | (self.status == CYCLE_MINUS))[0]

    def clamp_spins(self) -> dict:
        """nu_A: frozen spin of every node in A."""
        return {int(i): (1 if self.status[i] == CYCLE_PLUS else -1)
                for i in self.clamp_set}

    def copies_of(self, u: int) -> np.ndarray:
        return np.nonzero(self.origin == u)[0]


def _grow(instance: IsingInstance, v: int, depth: int, stop_assign: dict,
          node_cap: int, stop_vertices=frozenset()):
    """DFS enumeration of self-avoiding walks from v.

    A walk ends when it (a) closes a cycle -- the terminal copy joins A with
    the orientation rule below, (b) reaches a vertex frozen by
    ``stop_assign``, (c) reaches a vertex in ``stop_vertices`` (recorded
    free, not expanded), or (d) hits the depth limit.

    Orientation rule for a cycle closed at w: the leaf freezes to + when the
    closing edge enters w through a higher-indexed neighbor than the edge
    through which the walk originally left w, and to - otherwise.
    """
    if v in stop_assign or instance.clamp[v] != CLAMP_FREE:
        raise ValueError(f"walk root {v} is frozen")
    g = instance.graph
    origin = [v]
    parent = [-1]
    beta = [0.0]
    depth_arr = [0]
    status = [FREE]

    on_path = np.zeros(g.n, dtype=bool)
    pos_in_path = np.zeros(g.n, dtype=np.int64)
    path_vertices = [v]
    path_nodes = [0]
    on_path[v] = True
    pos_in_path[v] = 0
    # stack of (tree node, child cursor) mirroring the current walk
    cursors = [0]

    while path_nodes:
        u = path_vertices[-1]
        ci = cursors[-1]
        nbrs = g.neighbors(u)
        if ci >= len(nbrs):
            leave = path_vertices.pop()
            path_nodes.pop()
            cursors.pop()
            on_path[leave] = False
            continue
        cursors[-1] += 1
        w = int(nbrs[ci])
        if len(path_vertices) > 1 and w == path_vertices[-2]:
            continue  # backtracking over the same edge is not a walk extension
        if len(origin) >= node_cap:
            raise SizeCapError(f"walk tree exceeded node cap {node_cap}")
        b = float(instance.weights[g.indptr[u] + ci])
        d_new = len(path_vertices)
        if on_path[w]:
            j = int(pos_in_path[w])
            exit_nbr = path_vertices[j + 1]
            st = CYCLE_PLUS if u > exit_nbr else CYCLE_MINUS
            origin.append(w)
            parent.append(path_nodes[-1])
            beta.append(b)
            depth_arr.append(d_new)
            status.append(st)
            continue
        frozen = stop_assign.get(w)
        if frozen is None and instance.clamp[w] != CLAMP_FREE:
            frozen = int(instance.clamp[w])
        node = len(origin)
        origin.append(w)
        parent.append(path_nodes[-1])
        beta.append(b)
        depth_arr.append(d_new)
        if frozen is not None:
            status.append(FROZEN_PLUS if frozen > 0 else FROZEN_MINUS)
            continue
        status.append(FREE)
        if w in stop_vertices or d_new >= depth:
            continue
        path_vertices.append(w)
        path_nodes.append(node)
        cursors.append(0)
        on_path[w] = True
        pos_in_path[w] = d_new

    return SawTree(root_vertex=v, depth_limit=depth,
                   origin=np.asarray(origin, dtype=np.int64),
                   parent=np.asarray(parent, dtype=np.int64),
                   beta=np.asarray(beta, dtype=np.float64),
                   depth=np.asarray(depth_arr, dtype=np.int64),
                   status=np.asarray(status, dtype=np.int8))


def build_saw_tree(instance: IsingInstance, v: int, depth: int,
                   node_cap: int = NODE_CAP) -> SawTree:
    """All self-avoiding walks from v up to ``depth``, cycle closers in A.

    Walks stop early at frozen vertices: spins beyond a frozen vertex cannot
    influence the root, so their subtrees are irrelevant to any marginal.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    return _grow(instance, v, depth, {}, node_cap)


def _root_log_ratio(tree: SawTree, instance: IsingInstance,
                    frozen_override: dict | None = None) -> float:
    """Leaf-to-root message passing in log-likelihood-ratio form.

    Children always follow parents in the flat arrays, so one reverse sweep
    folds each node's message log((e^{b+L}+e^{-b})/(e^{-b+L}+e^{b})) into its
    parent; a frozen child contributes +-2b directly.
    """
    override = frozen_override or {}
    L = np.zeros(tree.n_nodes)
    frozen = np.zeros(tree.n_nodes, dtype=np.int8)
    for i in range(tree.n_nodes):
        st = tree.status[i]
        if i in override:
            frozen[i] = override[i]
        elif st in (CYCLE_PLUS, FROZEN_PLUS):
            frozen[i] = 1
        elif st in (CYCLE_MINUS, FROZEN_MINUS):
            frozen[i] = -1
        else:
            L[i] = 2.0 * float(instance.h[tree.origin[i]])
    for i in range(tree.n_nodes - 1, 0, -1):
        p = tree.parent[i]
        b = tree.beta[i]
        if frozen[i] != 0:
            msg = 2.0 * b * frozen[i]
        else:
            li = L[i]
            msg = np.logaddexp(b + li, -b) - np.logaddexp(-b + li, b)
        L[p] += msg
    return float(L[0])


def saw_marginal(instance: IsingInstance, v: int, lam=(), eta=(),
                 node_cap: int = NODE_CAP) -> float:
    """P(sigma_v = + | sigma_Lambda = eta) computed on the walk tree.

    The conditioning configuration is lifted to every copy of a Lambda
    vertex outside A; cycle-closing leaves keep their fixed orientation
    spins.  Agrees with the enumeration engine to floating precision.
    """
    lam = [int(u) for u in lam]
    if v in lam:
        raise ValueError("conditioned vertex cannot be the target")
    assignment = {}
    for u, s in zip(lam, eta):
        c = int(instance.clamp[u])
        if c != CLAMP_FREE and c != int(s):
            raise ValueError(f"conditioning sigma_{u}={s} contradicts clamp {c}: "
                             "event has probability zero")
        assignment[u] = int(s)
    tree = _grow(instance, v, instance.n, assignment, node_cap)
    logit = _root_log_ratio(tree, instance)
    if logit >= 0:
        return 1.0 / (1.0 + math.exp(-logit))
    return math.exp(logit) / (1.0 + math.exp(logit))


# ---------------------------------------------------------------------------
# Spatial mixing quantities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialMixingCert:
    """Per-boundary-vertex influence bounds a_u for a ball, plus the verdict."""

    center: int
    radius: int
    a_u: dict
    copies: dict
    total: float
    passed: bool


def spatial_bound_a_u(instance: IsingInstance, v: int, R: int,
                      node_cap: int = NODE_CAP) -> SpatialMixingCert:
    """Walk-tree bound: a_u <= sum over walk copies of u of prod tanh(beta_e).

    Walks start at v, stay inside B(v,R-1) and are cut the first time they
    touch the sphere S(v,R); each first contact at u contributes the product
    of tanh over its walk edges (at uniform coupling, tanh(beta)^depth).
    Cycle-closing and frozen copies block influence and contribute nothing.

    When the ball is a tree or unicyclic, each boundary vertex is asserted
    to have at most two walk copies.
    """
    b = ball(instance, v, R)
    boundary = set(b.boundary)
    if not boundary:
        return SpatialMixingCert(center=v, radius=R, a_u={}, copies={},
                                 total=0.0, passed=True)
    interior = b.interior
    g = instance.graph

    a = {u: 0.0 for u in sorted(boundary)}
    copies = {u: 0 for u in sorted(boundary)}
    # DFS over walks restricted to the interior, tracking the tanh product
    on_path = np.zeros(g.n, dtype=bool)
    path = [v]
    on_path[v] = True
    prods = [1.0]
    cursors = [0]
    nodes = 1
    while path:
        u = path[-1]
        ci = cursors[-1]
        nbrs = g.neighbors(u)
        if ci >= len(nbrs):
            on_path[path.pop()] = False
            prods.pop()
            cursors.pop()
            continue
        cursors[-1] += 1
        w = int(nbrs[ci])
        if len(path) > 1 and w == path[-2]:
            continue
        if on_path[w]:
            continue  # cycle closes: frozen leaf, no influence on the root
        nodes += 1
        if nodes > node_cap:
            raise SizeCapError(f"walk tree exceeded node cap {node_cap}")
        prod = prods[-1] * math.tanh(float(instance.weights[g.indptr[u] + ci]))
        if w in boundary:
            a[w] += prod
            copies[w] += 1
            continue
        if instance.clamp[w] != CLAMP_FREE:
            continue  # frozen vertex blocks influence
        if w in interior:
            path.append(w)
            on_path[w] = True
            prods.append(prod)
            cursors.append(0)
    if b.tree_excess <= 1:
        assert max(copies.values(), default=0) <= 2, \
            "tree/unicyclic ball should give at most 2 walk copies per boundary vertex"
    total = float(sum(a.values()))
    return SpatialMixingCert(center=v, radius=R, a_u=a, copies=copies,
                             total=total, passed=total <= SM_BUDGET)


def exact_a_u(instance: IsingInstance, v: int, R: int, u: int,
              mode: str = "exhaustive", cap: int = 16,
              scan_cap: int = 14) -> float:
    """Exact sup over boundary pairs differing only at u of the marginal gap.

    ``exhaustive`` scans every configuration of the other sphere vertices;
    ``extremal`` only evaluates the all-+ and all-- backgrounds, which is a
    fast heuristic, not a proven reduction.  Conditioning on the full sphere
    makes everything outside the ball irrelevant, so the computation runs on
    the induced ball instance.
    """
    if mode not in ("exhaustive", "extremal"):
        raise ValueError(f"unknown mode {mode!r}")
    b = ball(instance, v, R)
    members = set(b.vertices) | {u}
    sub, labels = induced_subinstance(instance, members)
    index = {g: i for i, g in enumerate(labels)}
    free = set(int(x) for x in sub.free_vertices)
    boundary = sorted(set(b.boundary) | {u})
    lam = [index[x] for x in boundary if index[x] in free]
    target = index[v]
    iu = index[u]
    if iu not in lam:
        return 0.0  # u is frozen already; flipping it is not a valid pair
    others = [x for x in lam if x != iu]
    if mode == "exhaustive" and len(others) > scan_cap:
        raise SizeCapError(f"{len(others)} background spins exceed scan cap {scan_cap}")

    backgrounds = [()]
    if others:
        if mode == "extremal":
            backgrounds = [tuple([+1] * len(others)), tuple([-1] * len(others))]
        else:
            backgrounds = [tuple(1 if (s >> i) & 1 else -1 for i in range(len(others)))
                           for s in range(1 << len(others))]
    best = 0.0
    for bg in backgrounds:
        try:
            hi = conditional_marginal(sub, target, [iu, *others], [+1, *bg], cap=cap)
            lo = conditional_marginal(sub, target, [iu, *others], [-1, *bg], cap=cap)
        except ValueError:
            continue  # background contradicts a clamp: zero-probability event
        best = max(best, hi - lo)
    return best
