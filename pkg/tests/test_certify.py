import itertools
import math

import pytest

from isinglab.certify import (
    certified_bound,
    certify_instance,
    main_threshold_radius,
    theorem1_constants,
    threshold_check,
    verify_conditions,
)
from isinglab.errors import CertificationRefused
from isinglab.exact import (
    continuous_mixing_time,
    enumerate_gibbs,
    transition_matrix,
    worst_start_tv,
)
from isinglab.graphs import build_instance, from_graph, gen_random_regular


def cycle_instance(n, beta):
    return build_instance([(i, (i + 1) % n, beta) for i in range(n)], [], n=n)


# ---------------------------------------------------------------------------
# threshold predicates and constants
# ---------------------------------------------------------------------------

def test_threshold_examples():
    assert threshold_check(3, 0.5)       # 2 tanh 0.5 = 0.924
    assert not threshold_check(3, 0.6)   # 2 tanh 0.6 = 1.074
    assert threshold_check(7, 0.0)
    with pytest.raises(ValueError):
        threshold_check(1, 0.5)


def test_threshold_radius_values():
    assert main_threshold_radius(2, 0.5) == 4
    assert main_threshold_radius(2, 0.3) == 2
    # tiny beta: the R=1 term d tanh(beta)/(1-(d-1)tanh(beta)) is already small
    assert main_threshold_radius(3, 0.01) == 1
    with pytest.raises(ValueError, match="no radius"):
        main_threshold_radius(3, 0.6)


def test_theorem1_constants_d2():
    radius, x, t = theorem1_constants(2, 0.5)
    assert radius == 4
    assert x == 1 + 2 * 4
    assert t == pytest.approx(80 * 8 * 729 * math.exp(5 * 0.5 * 2 * 10))


def test_theorem1_x_lower_bound():
    for d, beta in ((2, 0.4), (3, 0.3), (4, 0.1)):
        _, x, t = theorem1_constants(d, beta)
        assert x >= d + 1
        assert math.isfinite(t)
    # the closed-form T overflows float range once X gets large
    _, _, t_huge = theorem1_constants(4, 0.2)
    assert t_huge == math.inf


# ---------------------------------------------------------------------------
# condition verification
# ---------------------------------------------------------------------------

def test_cycle_c8_all_conditions_pass():
    inst = cycle_instance(8, 0.3)
    radius = main_threshold_radius(2, 0.3)
    report = verify_conditions(inst, radius)
    assert report.all_pass
    assert all(p.sm_total <= 0.25 for p in report.per_vertex)


def test_zero_coupling_sm_trivial():
    inst = cycle_instance(6, 0.0)
    report = verify_conditions(inst, 1)
    assert all(p.sm_total == 0.0 and p.sm_ok for p in report.per_vertex)


def test_k5_hot_fails_sm_everywhere():
    edges = [(u, v, 2.0) for u, v in itertools.combinations(range(5), 2)]
    inst = build_instance(edges, [], n=5)
    report = verify_conditions(inst, 1, lm_mode="cutwidth_bound")
    assert all(not p.sm_ok for p in report.per_vertex)
    assert not report.all_pass
    with pytest.raises(CertificationRefused):
        certified_bound(report)


def test_cutwidth_lm_mode_dominates_exact():
    inst = cycle_instance(6, 0.25)
    ex = verify_conditions(inst, 2, lm_mode="exact")
    cw = verify_conditions(inst, 2, lm_mode="cutwidth_bound")
    for a, b in zip(ex.per_vertex, cw.per_vertex):
        assert b.lm_value >= a.lm_value


def test_extremal_boundary_mode_is_lower_bound():
    inst = cycle_instance(8, 0.3)
    full = verify_conditions(inst, 2, lm_boundary_mode="exhaustive")
    fast = verify_conditions(inst, 2, lm_boundary_mode="extremal")
    for a, b in zip(full.per_vertex, fast.per_vertex):
        assert b.lm_value <= a.lm_value + 1e-12


# ---------------------------------------------------------------------------
# certified bounds
# ---------------------------------------------------------------------------

def test_certificate_formula_values():
    # T=1, X=1, n=2: ceil(ln 8) = 3, factor (3 + log2 2) = 4
    from isinglab.certify import ConditionReport, PerVertexConditions
    row = PerVertexConditions(vertex=0, volume=1, vol_ok=True, lm_value=1.0,
                              lm_ok=True, sm_total=0.0, sm_ok=True)
    report = ConditionReport(radius=1, lm_mode="exact", per_vertex=(row,),
                             x_value=1, t_value=1.0, n_vertices=2, all_pass=True)
    cert = certified_bound(report)
    assert cert.continuous_bound == pytest.approx(12.0)
    assert cert.gap_bound == pytest.approx(math.log(2.0) / 3.0)
    assert cert.discrete_bound == 120  # ceil(5 * 12 * 2)


def test_certified_cycle_is_sound():
    inst = cycle_instance(8, 0.3)
    cert = certify_instance(inst)
    dist = enumerate_gibbs(inst)
    spec = transition_matrix(inst, distribution=dist)
    # worst-start TV at the certified continuous time is below 1/2e
    tv = worst_start_tv(spec, dist, cert.continuous_bound, continuous=True)
    assert tv <= 1.0 / (2 * math.e)
    # the exact continuous gap clears the certified lower bound
    assert spec.continuous_gap >= cert.gap_bound
    # and the continuous bound dominates the exact continuous mixing time
    assert cert.continuous_bound >= continuous_mixing_time(spec, dist)


def test_refusal_on_failed_conditions():
    edges = [(u, v, 2.0) for u, v in itertools.combinations(range(5), 2)]
    inst = build_instance(edges, [], n=5)
    with pytest.raises(CertificationRefused):
        certify_instance(inst, radius=1, lm_mode="cutwidth_bound")


def test_theorem1_pipeline_on_regular_graph():
    d, beta = 3, 0.25
    assert threshold_check(d, beta)
    radius, x, t = theorem1_constants(d, beta)
    g = gen_random_regular(10, d, seed=77)
    inst = from_graph(g, beta)
    report = verify_conditions(inst, radius, lm_mode="cutwidth_bound",
                               x_budget=x, t_budget=t)
    assert report.all_pass
    cert = certified_bound(report)
    assert cert.x_value == x and cert.t_value == t
    assert math.isfinite(cert.continuous_bound) and cert.discrete_bound >= 1
