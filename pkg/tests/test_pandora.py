import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from pandorabo.pandora import (
    FiniteSupport,
    FixedSequence,
    Gaussian,
    GittinsPolicy,
    InstanceTooLarge,
    PandoraBox,
    PandoraInstance,
    brute_force_solve,
    brute_force_value,
    budget_lambda,
    dump_instance,
    expected_improvement_dist,
    fair_price,
    gittins_index,
    gittins_policy_evaluation,
    instance_from_dict,
    instance_to_dict,
    lagrangian_value,
    load_instance,
    policy_value,
    random_instance,
    run_gittins_policy,
)
from pandorabo.verify import budget_instance, budget_suite, optimality_suite, tie_instance


def det(value):
    return FiniteSupport((value,), (1.0,))


def instance(*boxes, budget=None):
    return PandoraInstance(tuple(PandoraBox(i, d, c) for i, (d, c) in enumerate(boxes)), budget)


# Expected improvement


def test_ei_closed_form_examples():
    assert expected_improvement_dist(Gaussian(0.0, 1.0), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
    assert expected_improvement_dist(FiniteSupport((1.0, 0.0), (0.5, 0.5)), 0.0) == 0.5


def test_ei_gaussian_matches_monte_carlo():
    rng = np.random.default_rng(0)
    draws = np.maximum(rng.normal(0.3, 0.7, size=10_000_000) - 0.1, 0.0)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(expected_improvement_dist(Gaussian(0.3, 0.7), 0.1) - draws.mean()) <= 3 * se


def test_ei_far_tails():
    d = Gaussian(0.0, 1.0)
    assert expected_improvement_dist(d, -40.0) == pytest.approx(40.0, rel=1e-15)
    far = expected_improvement_dist(d, 30.0)
    assert 0.0 <= far < 1e-190


@settings(max_examples=60, deadline=None)
@given(m=st.floats(-5, 5), s=st.floats(0.01, 5), y1=st.floats(-10, 10), y2=st.floats(-10, 10))
def test_ei_gaussian_decreasing(m, s, y1, y2):
    lo, hi = min(y1, y2), max(y1, y2)
    d = Gaussian(m, s)
    assert expected_improvement_dist(d, lo) >= expected_improvement_dist(d, hi) >= 0.0


# Gittins index


def test_gittins_examples():
    assert gittins_index(PandoraBox(0, Gaussian(0.0, 1.0), norm.pdf(0.0))) == pytest.approx(0.0, abs=1e-12)
    assert gittins_index(PandoraBox(0, det(1.0), 0.3)) == pytest.approx(0.7, abs=1e-15)


def test_gittins_gaussian_cross_checked_by_monte_carlo():
    g = gittins_index(PandoraBox(0, Gaussian(0.0, 1.0), 0.1))
    rng = np.random.default_rng(1)
    draws = np.maximum(rng.normal(size=10_000_000) - g, 0.0)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - 0.1) <= 3 * se


def test_finite_index_below_support_uses_linear_tail():
    # EI(y) = E f - y below the support, so a cost above E f - min f lands there.
    d = FiniteSupport((1.0, 2.0), (0.5, 0.5))
    g = fair_price(d, 1.0)
    assert g == pytest.approx(0.5, abs=1e-15)
    assert g < min(d.values)


def test_fair_price_zero_cost_and_negative_cost():
    assert fair_price(FiniteSupport((0.5, 2.5), (0.5, 0.5)), 0.0) == 2.5
    with pytest.raises(ValueError):
        fair_price(Gaussian(0.0, 1.0), -0.1)


def _residual_ok(dist, c, g):
    return abs(expected_improvement_dist(dist, g) - c) <= 1e-10 * (1 + c)


@settings(max_examples=80, deadline=None)
@given(m=st.floats(-10, 10), s=st.floats(0.05, 10), c=st.floats(1e-6, 20))
def test_gaussian_index_residual(m, s, c):
    d = Gaussian(m, s)
    assert _residual_ok(d, c, fair_price(d, c))


@settings(max_examples=80, deadline=None)
@given(
    values=st.lists(st.floats(-5, 5), min_size=1, max_size=4),
    weights=st.lists(st.floats(0.05, 1), min_size=4, max_size=4),
    c=st.floats(1e-4, 10),
)
def test_finite_index_residual(values, weights, c):
    w = np.array(weights[: len(values)])
    d = FiniteSupport(tuple(values), tuple(w / w.sum()))
    assert _residual_ok(d, c, fair_price(d, c))


@settings(max_examples=60, deadline=None)
@given(m=st.floats(-5, 5), s=st.floats(0.05, 5), c1=st.floats(1e-4, 5), c2=st.floats(1e-4, 5))
def test_index_decreases_with_cost(m, s, c1, c2):
    lo, hi = sorted((c1, c2))
    if hi - lo < 1e-6 * hi:
        return
    d = Gaussian(m, s)
    assert fair_price(d, lo) > fair_price(d, hi)


@settings(max_examples=60, deadline=None)
@given(m=st.floats(-5, 5), s=st.floats(0.05, 5), c=st.floats(1e-3, 2), delta=st.floats(-10, 10))
def test_gaussian_index_translation_equivariant(m, s, c, delta):
    g = fair_price(Gaussian(m, s), c)
    assert fair_price(Gaussian(m + delta, s), c) == pytest.approx(g + delta, abs=1e-9 * (1 + abs(g) + abs(delta)))


@settings(max_examples=60, deadline=None)
@given(m=st.floats(-5, 5), s=st.floats(0.05, 5), c=st.floats(1e-3, 2), scale=st.floats(0.01, 100))
def test_gaussian_index_scale_equivariant(m, s, c, scale):
    g = fair_price(Gaussian(m, s), c)
    assert fair_price(Gaussian(scale * m, scale * s), scale * c) == pytest.approx(scale * g, rel=1e-9, abs=1e-10 * scale)


# Policies


def test_single_box_is_always_opened():
    inst = instance((det(0.2), 5.0))
    trace = run_gittins_policy(inst, rng=np.random.default_rng(0))
    assert trace.opened == [0] and trace.n_opened == 1
    assert trace.net_utility == pytest.approx(-4.8)


def test_two_deterministic_boxes():
    inst = instance((det(1.0), 0.3), (det(0.5), 0.1))
    policy = GittinsPolicy(inst)
    assert policy.indices[0] == pytest.approx(0.7) and policy.indices[1] == pytest.approx(0.4)
    trace = run_gittins_policy(inst, rng=np.random.default_rng(0))
    assert trace.opened == [0]
    assert trace.terminal_reward == 1.0 and trace.total_cost == 0.3
    assert trace.net_utility == pytest.approx(0.7)
    assert brute_force_value(inst) == pytest.approx(0.7)


def test_trace_invariants_and_order():
    rng = np.random.default_rng(4)
    for _ in range(50):
        inst = random_instance(rng, 4, 3)
        policy = GittinsPolicy(inst, "open-on-tie")
        trace = run_gittins_policy(inst, "open-on-tie", rng)
        assert trace.n_opened >= 1
        assert trace.total_cost == pytest.approx(sum(inst.box(i).cost for i in trace.opened))
        assert trace.terminal_reward == max(trace.rewards)
        idx = [policy.indices[i] for i in trace.opened]
        assert all(a >= b for a, b in zip(idx, idx[1:]))


def test_tie_rules_differ_on_exact_tie():
    # Box 1 (index 1.25) is opened first; a 0.75 draw equals box 0's index exactly.
    inst = instance((det(1.0), 0.25), (FiniteSupport((0.75, 1.75), (0.5, 0.5)), 0.25))
    g = GittinsPolicy(inst).indices
    assert g == {0: 0.75, 1: 1.25}
    early = run_gittins_policy(inst, "stop-early", rewards={0: 1.0, 1: 0.75})
    late = run_gittins_policy(inst, "open-on-tie", rewards={0: 1.0, 1: 0.75})
    assert early.opened == [1] and late.opened == [1, 0]
    assert early.net_utility == late.net_utility == 0.5
    ev_early = gittins_policy_evaluation(inst, "stop-early")
    ev_late = gittins_policy_evaluation(inst, "open-on-tie")
    assert ev_early.value == ev_late.value == brute_force_value(inst)
    assert ev_early.spend == 0.25 and ev_late.spend == 0.375


def _enumerated_value(inst, tie_rule):
    """Independent oracle: enumerate every joint realization and replay the policy."""
    supports = [b.reward.atoms() for b in inst.boxes]
    total = 0.0
    for combo in itertools.product(*supports):
        prob = math.prod(p for _, p in combo)
        rewards = {b.id: v for b, (v, _) in zip(inst.boxes, combo)}
        total += prob * run_gittins_policy(inst, tie_rule, rewards=rewards).net_utility
    return total


@pytest.mark.parametrize("tie_rule", ["stop-early", "open-on-tie"])
def test_exact_evaluation_matches_enumeration(tie_rule):
    rng = np.random.default_rng(7)
    for _ in range(20):
        inst = random_instance(rng, 3, 3)
        ev = gittins_policy_evaluation(inst, tie_rule)
        assert ev.value == pytest.approx(_enumerated_value(inst, tie_rule), abs=1e-12)
        assert ev.value == pytest.approx(ev.reward - ev.spend, abs=1e-15)


def test_policy_value_examples():
    assert policy_value(instance((det(1.0), 0.3)), FixedSequence([0])) == pytest.approx(0.7)
    assert policy_value(instance((FiniteSupport((2.0, 0.0), (0.5, 0.5)), 0.4)), FixedSequence([0])) == pytest.approx(0.6)


def test_policy_value_rejects_gaussian_and_bad_policies():
    with pytest.raises(TypeError):
        policy_value(instance((Gaussian(0.0, 1.0), 0.3)), FixedSequence([0]))
    with pytest.raises(ValueError):
        policy_value(instance((det(1.0), 0.3)), FixedSequence([]))
    with pytest.raises(ValueError):
        policy_value(instance((det(1.0), 0.3), (det(1.0), 0.3)), FixedSequence([0, 0]))


def test_gittins_equals_oracle_on_random_four_box_instances():
    rng = np.random.default_rng(5)
    for _ in range(30):
        inst = random_instance(rng, 4, 3)
        assert gittins_policy_evaluation(inst).value == pytest.approx(brute_force_value(inst), abs=1e-9)


# Oracle


def test_oracle_size_limits():
    rng = np.random.default_rng(0)
    with pytest.raises(InstanceTooLarge):
        brute_force_value(random_instance(rng, 7, 1))
    with pytest.raises(InstanceTooLarge):
        brute_force_value(random_instance(rng, 2, 5))
    with pytest.raises(TypeError):
        brute_force_value(instance((Gaussian(0.0, 1.0), 0.3)))


def test_oracle_single_box():
    assert brute_force_value(instance((det(1.0), 0.3))) == pytest.approx(0.7)


# Budget constraint


def test_instance_budget_validation():
    with pytest.raises(ValueError):
        instance((det(1.0), 1.0), (det(1.0), 2.0), budget=1.0)
    with pytest.raises(ValueError):
        instance((det(1.0), 1.0), (det(1.0), 2.0), budget=3.0)
    assert instance((det(1.0), 1.0), (det(1.0), 2.0), budget=1.5).budget == 1.5


def test_lagrangian_at_zero_is_expected_maximum():
    rng = np.random.default_rng(2)
    inst = random_instance(rng, 3, 2)
    exp_max = 0.0
    for combo in itertools.product(*(b.reward.atoms() for b in inst.boxes)):
        exp_max += math.prod(p for _, p in combo) * max(v for v, _ in combo)
    assert lagrangian_value(inst, 0.0, budget=1.0) == pytest.approx(exp_max, abs=1e-12)


def test_lagrangian_single_box_is_affine():
    d = FiniteSupport((0.0, 2.0), (0.25, 0.75))
    inst = instance((d, 0.8))
    for lam in (0.5, 3.0, 40.0):
        assert lagrangian_value(inst, lam, budget=0.3) == pytest.approx(d.mean - lam * (0.8 - 0.3), abs=1e-12)
    with pytest.raises(ValueError):
        lagrangian_value(inst, -1.0, budget=0.3)
    with pytest.raises(ValueError):
        lagrangian_value(inst, 1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), l1=st.floats(0, 5), l2=st.floats(0, 5))
def test_lagrangian_midpoint_convex(seed, l1, l2):
    inst = random_instance(np.random.default_rng(seed), 3, 2)
    B = float(inst.costs.mean())
    mid = lagrangian_value(inst, 0.5 * (l1 + l2), B)
    assert mid <= 0.5 * (lagrangian_value(inst, l1, B) + lagrangian_value(inst, l2, B)) + 1e-9


def test_lagrangian_derivative_is_budget_minus_spend():
    rng = np.random.default_rng(9)
    for _ in range(10):
        inst = budget_instance(rng)
        lam = float(rng.uniform(0.05, 1.0))
        h = 1e-6
        fd = (lagrangian_value(inst, lam + h) - lagrangian_value(inst, lam - h)) / (2 * h)
        spend = brute_force_solve(inst, lam)[1]
        assert fd == pytest.approx(inst.budget - spend, abs=1e-5)


def test_budget_two_identical_boxes():
    inst = instance((det(1.0), 1.0), (det(1.0), 1.0), budget=1.5)
    mix = budget_lambda(inst)
    # Opening the second identical box never helps, so the multiplier sits at zero.
    assert mix.lam == 0.0
    assert mix.spend_low == pytest.approx(1.0) and mix.spend_high == pytest.approx(2.0)
    assert mix.alpha == pytest.approx(0.5, abs=1e-12)
    assert mix.expected_spend == pytest.approx(1.5, abs=1e-12)


def test_budget_multiplier_decreases_with_budget():
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 5:
        inst = budget_instance(rng)
        lo = float(inst.costs.min())
        hi = brute_force_solve(inst, 0.0, "stop-early")[1]
        b1, b2 = lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo)
        l1 = budget_lambda(inst, b1).lam
        l2 = budget_lambda(inst, b2).lam
        assert l2 <= l1 + 1e-8
        checked += 1


def test_budget_mixture_properties():
    rng = np.random.default_rng(11)
    for _ in range(10):
        inst = budget_instance(rng)
        mix = budget_lambda(inst)
        assert mix.lam > 0
        assert 0.0 <= mix.alpha <= 1.0
        assert mix.spend_low <= inst.budget + 1e-6 <= mix.spend_high + 2e-6
        assert mix.expected_spend == pytest.approx(inst.budget, abs=1e-6)
        assert mix.expected_value == pytest.approx(mix.lagrangian_min, abs=1e-6)


def test_budget_inactive_constraint_rejected():
    inst = instance((det(1.0), 1.0), (det(2.0), 2.0))
    with pytest.raises(ValueError):
        budget_lambda(inst, 0.5)
    with pytest.raises(ValueError):
        budget_lambda(inst, 3.5)
    with pytest.raises(ValueError):
        budget_lambda(inst)


# Serialization


def test_json_round_trip(tmp_path):
    inst = instance((det(1.0), 1.0), (Gaussian(0.2, 0.5), 0.4), (FiniteSupport((0.0, 3.0), (0.25, 0.75)), 0.9), budget=1.2)
    assert instance_from_dict(json.loads(json.dumps(instance_to_dict(inst)))) == inst
    path = tmp_path / "inst.json"
    dump_instance(inst, path)
    assert load_instance(path) == inst
    with pytest.raises(ValueError):
        instance_from_dict({"boxes": [{"id": 0, "cost": 1.0, "reward": {"type": "poisson"}}]})


def test_distribution_validation():
    with pytest.raises(ValueError):
        Gaussian(0.0, 0.0)
    with pytest.raises(ValueError):
        FiniteSupport((1.0, 2.0), (0.5, 0.6))
    with pytest.raises(ValueError):
        FiniteSupport((1.0,), (-1.0,))
    with pytest.raises(ValueError):
        PandoraBox(0, det(1.0), 0.0)
    with pytest.raises(ValueError):
        PandoraInstance(())
    with pytest.raises(ValueError):
        PandoraInstance((PandoraBox(0, det(1.0), 1.0), PandoraBox(0, det(2.0), 1.0)))


# Verification suites


def test_tie_instances_hit_exact_ties():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(40):
        inst = tie_instance(rng, 3)
        idx = GittinsPolicy(inst).indices
        atoms = {v for b in inst.boxes for v in b.reward.values}
        hits += any(g in atoms for g in idx.values())
    assert hits == 40


def test_optimality_suite_small_run_passes():
    report = optimality_suite(40, seed=1)
    assert report.passed, report.failures()[:3]


def test_injected_fault_is_detected():
    report = optimality_suite(40, seed=1, inject_fault=True)
    assert not report.passed
    assert all(r.check.startswith("spend") for r in report.failures())


def test_budget_suite_small_run_passes():
    report = budget_suite(8, seed=2)
    assert report.passed, report.failures()[:3]
