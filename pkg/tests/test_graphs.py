import math

import numpy as np
import pytest

from isinglab.errors import InstanceFormatError
from isinglab.graphs import (
    Graph,
    ball,
    build_instance,
    from_graph,
    gen_erdos_renyi,
    gen_galton_watson_poisson,
    gen_random_regular,
    induced_subgraph,
    read_instance,
    spanning_tree_bfs,
    write_instance,
)
from conftest import seeded


def cycle_edges(n, beta=1.0):
    return [(i, (i + 1) % n, beta) for i in range(n)]


def path_edges(n, beta=1.0):
    return [(i, i + 1, beta) for i in range(n - 1)]


# ---------------------------------------------------------------------------
# build_instance
# ---------------------------------------------------------------------------

def test_build_instance_single_edge():
    inst = build_instance([(0, 1, 0.5)], [], n=2)
    assert inst.beta_max == 0.5
    assert inst.n == 2 and inst.graph.m == 1
    assert inst.coupling(0, 1) == 0.5 == inst.coupling(1, 0)


def test_build_instance_rejects_antiferromagnetic():
    with pytest.raises(ValueError, match="antiferromagnetic"):
        build_instance([(0, 1, -0.1)], [], n=2)


def test_build_instance_rejects_duplicates_and_loops():
    with pytest.raises(ValueError, match="duplicate"):
        build_instance([(0, 1, 0.5), (1, 0, 0.2)], [], n=2)
    with pytest.raises(ValueError, match="self-loop"):
        build_instance([(2, 2, 0.5)], [], n=3)


def test_clamp_semantics_on_cycle():
    inst = build_instance(cycle_edges(4), [(0, math.inf)], n=4)
    assert inst.clamp[0] == 1 and (inst.clamp[1:] == 0).all()
    assert inst.h[0] == 0.0
    assert list(inst.free_vertices) == [1, 2, 3]
    # clamped neighbor contributes its coupling as an effective field
    assert inst.effective_field(1) == pytest.approx(1.0)
    assert inst.effective_field(2) == pytest.approx(0.0)


# ---------------------------------------------------------------------------
# balls
# ---------------------------------------------------------------------------

def test_ball_on_path():
    inst = build_instance(path_edges(4), [], n=4)
    b = ball(inst, 0, 2)
    assert sorted(b.interior) == [0, 1]
    assert sorted(b.boundary) == [2]
    assert b.volume == 3


def test_ball_triangle_tree_excess():
    inst = build_instance(cycle_edges(3), [], n=3)
    b = ball(inst, 0, 1)
    assert b.volume == 3
    assert b.tree_excess == 1  # |E|-|V|+1 = 3-3+1


def test_ball_isolated_vertex():
    g = Graph.from_edges(1, [])
    b = ball(g, 0, 5)
    assert b.volume == 1
    assert b.boundary == frozenset()
    assert b.tree_excess == 0


def test_tree_excess_zero_iff_acyclic():
    # independent cycle detection: DFS back-edge search
    def has_cycle(g):
        seen = [False] * g.n
        for root in range(g.n):
            if seen[root]:
                continue
            stack = [(root, -1)]
            seen[root] = True
            while stack:
                u, parent = stack.pop()
                skipped_parent = False
                for w in g.neighbors(u):
                    w = int(w)
                    if w == parent and not skipped_parent:
                        skipped_parent = True
                        continue
                    if seen[w]:
                        return True
                    seen[w] = True
                    stack.append((w, u))
        return False

    rng = seeded(42)
    for _ in range(50):
        n = int(rng.integers(3, 9))
        g = gen_erdos_renyi(n, float(rng.uniform(0.5, n)), seed=int(rng.integers(1 << 30)))
        b = ball(g, 0, n)
        sub, _ = induced_subgraph(g, b.vertices)
        assert (b.tree_excess == 0) == (not has_cycle(sub) and sub.m == sub.n - 1) \
            or (b.tree_excess > 0) == has_cycle(sub)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def test_er_probability_one_boundary():
    g = gen_erdos_renyi(2, 2, seed=0)  # p = d/n = 1
    assert g.m == 1


def test_er_mean_edge_count():
    n, d, seeds = 1000, 3.0, 200
    ms = [gen_erdos_renyi(n, d, seed=s).m for s in range(seeds)]
    total_pairs = n * (n - 1) // 2
    p = d / n
    target = total_pairs * p
    sigma_mean = math.sqrt(total_pairs * p * (1 - p) / seeds)
    assert abs(np.mean(ms) - target) <= 3 * sigma_mean


def test_er_deterministic():
    a = gen_erdos_renyi(500, 2.5, seed=11)
    b = gen_erdos_renyi(500, 2.5, seed=11)
    assert a.m == b.m
    assert (a.indices == b.indices).all() and (a.indptr == b.indptr).all()


def test_er_output_simple_and_symmetric():
    for s in range(5):
        gen_erdos_renyi(200, 3, seed=s).check_invariants()


def test_regular_k4():
    g = gen_random_regular(4, 3, seed=5)
    assert g.m == 6  # K4 is the unique simple 3-regular graph on 4 vertices


def test_regular_rejects_odd_nd():
    with pytest.raises(ValueError):
        gen_random_regular(3, 3, seed=0)


def test_regular_degrees():
    g = gen_random_regular(100, 3, seed=2)
    g.check_invariants()
    assert (g.degrees == 3).all()


def test_gw_depth_zero():
    g = gen_galton_watson_poisson(2.0, 0, seed=1)
    assert g.n == 1 and g.m == 0


def test_gw_root_offspring_mean():
    d, samples = 2.0, 400
    counts = [gen_galton_watson_poisson(d, 1, seed=s).degree(0) for s in range(samples)]
    sigma_mean = math.sqrt(d / samples)
    assert abs(np.mean(counts) - d) <= 3 * sigma_mean


def test_gw_is_tree_within_depth():
    for s in range(10):
        depth = 4
        g = gen_galton_watson_poisson(1.5, depth, seed=100 + s)
        g.check_invariants()
        assert g.m == g.n - 1  # acyclic and connected
        b = ball(g, 0, depth + 1)
        assert b.volume == g.n  # nothing deeper than the depth cap


# ---------------------------------------------------------------------------
# BFS spanning trees
# ---------------------------------------------------------------------------

def test_spanning_tree_of_tree_ball_is_identity():
    inst = build_instance(path_edges(5), [], n=5)
    b = ball(inst, 0, 3)
    st = spanning_tree_bfs(inst, b)
    assert st.unexplored_edges == 0
    assert st.tree.n == b.volume and st.tree.m == b.volume - 1


def test_spanning_tree_triangle():
    inst = build_instance(cycle_edges(3), [], n=3)
    st = spanning_tree_bfs(inst, ball(inst, 0, 1))
    assert st.unexplored_edges == 1
    assert sorted(st.tree.degrees.tolist()) == [1, 1, 2]  # a path


def test_spanning_tree_four_cycle():
    # hand BFS from 0: attach 0-1, 0-3; then vertex 1 attaches 2; edge 2-3 unexplored
    inst = build_instance(cycle_edges(4), [], n=4)
    st = spanning_tree_bfs(inst, ball(inst, 0, 2))
    assert st.tree.n == 4
    assert st.unexplored_edges == 1
    assert st.order[0] == 0
    root_nbrs = sorted(st.order[int(w)] for w in st.tree.neighbors(0))
    assert root_nbrs == [1, 3]


# ---------------------------------------------------------------------------
# volume statistics
# ---------------------------------------------------------------------------

def test_er_ball_volume_bound():
    # |B(v,2)| <= d^R log n for every vertex, across 500 samples
    import scipy.sparse as sp

    n, d, R, samples = 2000, 3.0, 2, 500
    bound = d ** R * math.log(n)
    violations = 0
    for s in range(samples):
        g = gen_erdos_renyi(n, d, seed=10_000 + s)
        rows = np.repeat(np.arange(n), np.diff(g.indptr))
        a = sp.csr_matrix((np.ones(len(g.indices), dtype=np.int8),
                           (rows, g.indices)), shape=(n, n))
        reach = ((a @ a + a + sp.identity(n, dtype=np.int8, format="csr")) > 0)
        volumes = np.asarray(reach.sum(axis=1)).ravel()
        violations += int(np.count_nonzero(volumes > bound))
    assert violations == 0


def test_gw_volume_exponential_moment_bounded():
    # E[exp(Z_r d^-r)] stays bounded across depths (Z_r = total progeny,
    # sampled through the Poisson additivity shortcut)
    d, samples = 3.0, 3000
    rng = seeded(99)
    sups = []
    for depth in range(1, 7):
        vals = np.empty(samples)
        for i in range(samples):
            count, total = 1, 1
            for _ in range(depth):
                count = rng.poisson(d * count)
                total += count
                if count == 0:
                    break
            vals[i] = math.exp(total / d ** depth)
        sups.append(vals.mean())
    assert max(sups) < 50.0
    assert max(sups) / min(sups) < 4.0


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def test_instance_roundtrip(tmp_path):
    inst = build_instance(cycle_edges(4, 0.7), [(0, math.inf), (2, -1.25)], n=4)
    path = tmp_path / "x.ising"
    write_instance(inst, path)
    back = read_instance(path)
    assert back.n == inst.n and back.graph.m == inst.graph.m
    assert (back.clamp == inst.clamp).all()
    assert np.allclose(back.h, inst.h)
    assert np.allclose(back.weights, inst.weights)


def test_instance_format_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ising"
    p.write_text("not an instance\n")
    with pytest.raises(InstanceFormatError):
        read_instance(p)
    p.write_text("ising-instance v1\nn 2 m 1\nedge 0 1 0.5\nedge 0 1 0.5\n")
    with pytest.raises((InstanceFormatError, ValueError)):
        read_instance(p)


def test_graph_only_format(tmp_path):
    g = gen_erdos_renyi(30, 2.0, seed=3)
    inst = from_graph(g, 0.4)
    path = tmp_path / "g.ising"
    write_instance(inst, path)
    text = path.read_text()
    assert "field" not in text
    back = read_instance(path)
    assert back.graph.m == g.m and (back.h == 0).all()
