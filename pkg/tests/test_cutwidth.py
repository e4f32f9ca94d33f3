import functools
import itertools
import math

import numpy as np
import pytest

from isinglab.cutwidth import (
    calibrate_domination_shift,
    cutwidth_exact,
    gw_cutwidth_stats,
    mixing_bound_cutwidth,
    order_stat_bound_sample,
    ordering_cutwidth,
    poisson_tail,
    relaxation_bound,
    tree_cutwidth_ordering,
)
from isinglab.errors import SizeCapError
from isinglab.exact import continuous_mixing_time, enumerate_gibbs, transition_matrix
from isinglab.graphs import Graph, gen_erdos_renyi
from conftest import random_connected_instance, seeded


@functools.lru_cache(maxsize=None)
def _perms(n):
    p = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    return p, np.argsort(p, axis=1)


def perm_cutwidth_oracle(graph):
    """Exhaustive permutation search, independent of the subset DP."""
    n = graph.n
    if n <= 1 or graph.m == 0:
        return 0
    _, pos = _perms(n)
    cuts = np.zeros((pos.shape[0], n - 1), dtype=np.int64)
    idx = np.arange(n - 1)
    for u, v in graph.edges():
        lo = np.minimum(pos[:, u], pos[:, v])
        hi = np.maximum(pos[:, u], pos[:, v])
        cuts += (lo[:, None] <= idx) & (idx < hi[:, None])
    return int(cuts.max(axis=1).min())


def random_graph(rng, n):
    edges = [e for e in itertools.combinations(range(n), 2)
             if rng.random() < 0.45]
    return Graph.from_edges(n, edges)


def random_tree(rng, n):
    return Graph.from_edges(n, [(int(rng.integers(0, v)), v) for v in range(1, n)])


# ---------------------------------------------------------------------------
# exact solver
# ---------------------------------------------------------------------------

def test_paths_have_cutwidth_one():
    for n in range(2, 7):
        g = Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
        assert cutwidth_exact(g).value == 1


def test_star_k14():
    g = Graph.from_edges(5, [(0, i) for i in range(1, 5)])
    res = cutwidth_exact(g)
    assert res.value == 2 == perm_cutwidth_oracle(g)


def test_complete_graphs_middle_cut():
    for n in (4, 5):
        g = Graph.from_edges(n, list(itertools.combinations(range(n), 2)))
        assert cutwidth_exact(g).value == (n // 2) * ((n + 1) // 2)


def test_against_permutation_oracle():
    rng = seeded(20)
    for _ in range(60):
        n = int(rng.integers(2, 9))
        g = random_graph(rng, n)
        res = cutwidth_exact(g)
        assert res.value == perm_cutwidth_oracle(g)
        assert ordering_cutwidth(g, res.ordering) == res.value


def test_solver_cap():
    g = Graph.from_edges(25, [(i, i + 1) for i in range(24)])
    with pytest.raises(SizeCapError):
        cutwidth_exact(g)


# ---------------------------------------------------------------------------
# tree bound
# ---------------------------------------------------------------------------

def test_single_vertex_bound_zero():
    g = Graph.from_edges(1, [])
    res = tree_cutwidth_ordering(g)
    assert res.value == 0 and res.kind == "tree_bound"


def test_star_k13_bound():
    g = Graph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    res = tree_cutwidth_ordering(g)
    assert res.value == 3
    assert cutwidth_exact(g).value == 2  # bound is not tight here


def test_tree_bound_sound_on_random_trees():
    rng = seeded(21)
    for _ in range(50):
        n = int(rng.integers(2, 13))
        t = random_tree(rng, n)
        res = tree_cutwidth_ordering(t)
        exact = cutwidth_exact(t).value
        assert res.value >= exact
        assert ordering_cutwidth(t, res.ordering) <= res.value
        assert sorted(res.ordering) == list(range(n))


def test_tree_bound_rejects_cycles():
    g = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    with pytest.raises(ValueError, match="cycle"):
        tree_cutwidth_ordering(g)


# ---------------------------------------------------------------------------
# Galton-Watson statistics
# ---------------------------------------------------------------------------

def test_gw_depth_zero_all_zero():
    st = gw_cutwidth_stats(2.0, 0, 200, seed=1)
    assert (st.values == 0).all()
    assert (st.sizes == 1).all()


def test_gw_levelwise_bound_matches_tree_recursion():
    # the vectorized level computation must agree with the graph recursion
    st = gw_cutwidth_stats(1.6, 4, 300, seed=2, exact_cap=0)
    from isinglab.cutwidth import _rebuild_tree, _sample_gw_levels
    from isinglab.rng import stream
    rng = stream(2, "gw-cutwidth", 4)
    levels = _sample_gw_levels(1.6, 4, 300, rng)
    for s in (0, 17, 123, 299):
        g = _rebuild_tree(levels, s)
        assert g.n == st.sizes[s]
        assert tree_cutwidth_ordering(g).value == st.values[s]


def test_gw_exact_below_bound():
    st = gw_cutwidth_stats(1.5, 3, 400, seed=3, exact_cap=14)
    assert st.exact_values  # small trees exist at this d
    for s, exact in st.exact_values.items():
        assert exact <= st.values[s]


def test_order_stat_sampler():
    w = order_stat_bound_sample(3.0, 20000, seed=4)
    assert (w >= 0).all()
    assert np.isfinite(w.mean())
    # X = 0 occurs with probability e^-3 and forces W = 0
    assert np.count_nonzero(w == 0) > 0
    shift = calibrate_domination_shift({1: w}, 3.0, per_level=True)
    assert 1 <= shift <= 20


def test_poisson_tail_values():
    assert poisson_tail(0, 3.0) == pytest.approx(1.0)
    assert poisson_tail(1, 3.0) == pytest.approx(1 - math.exp(-3.0))


# ---------------------------------------------------------------------------
# sampler bounds
# ---------------------------------------------------------------------------

def test_bound_formulas():
    assert relaxation_bound(2, 0.0, 5, 3) == pytest.approx(4.0)
    assert relaxation_bound(3, 1.0, 1, 2) == pytest.approx(9 * math.exp(12.0))
    assert mixing_bound_cutwidth(1, 0.0, 0, 0) == pytest.approx(80.0)
    with pytest.raises(ValueError):
        relaxation_bound(-1, 0.1, 1, 2)


def test_bounds_monotone_in_arguments():
    base = mixing_bound_cutwidth(4, 0.5, 2, 3)
    assert mixing_bound_cutwidth(5, 0.5, 2, 3) >= base
    assert mixing_bound_cutwidth(4, 0.6, 2, 3) >= base
    assert mixing_bound_cutwidth(4, 0.5, 3, 3) >= base
    assert mixing_bound_cutwidth(4, 0.5, 2, 4) >= base


def test_bounds_dominate_exact_engine():
    rng = seeded(22)
    for _ in range(8):
        inst = random_connected_instance(rng, n_max=6, beta_hi=1.0, clamp_prob=0.1)
        dist = enumerate_gibbs(inst)
        spec = transition_matrix(inst, distribution=dist)
        cw = cutwidth_exact(inst.graph).value
        d = inst.graph.max_degree
        assert relaxation_bound(inst.n, inst.beta_max, cw, d) >= spec.relaxation_time
        t_cont = continuous_mixing_time(spec, dist)
        assert mixing_bound_cutwidth(inst.n, inst.beta_max, cw, d) >= t_cont
