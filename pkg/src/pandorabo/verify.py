"""Numerical verification suites for the discrete Pandora's Box solver.

The optimality suite compares the exact value of the index policy against
backward induction; on instances built with exact index ties it also compares
the expected spend of each tie rule against the oracle's spend for the same
rule, which is what makes a swapped tie rule detectable. The budget suite
checks the Lagrangian construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .pandora import (
    TIE_RULES,
    FiniteSupport,
    PandoraBox,
    PandoraInstance,
    brute_force_solve,
    budget_lambda,
    fair_price,
    gittins_policy_evaluation,
    lagrangian_value,
    random_instance,
)

VALUE_TOL = 1e-9
BUDGET_TOL = 1e-6


@dataclass
class Residual:
    instance: int
    check: str
    residual: float
    tol: float

    @property
    def ok(self):
        return self.residual <= self.tol


@dataclass
class SuiteReport:
    name: str
    residuals: list = field(default_factory=list)

    def add(self, instance, check, residual, tol):
        self.residuals.append(Residual(instance, check, float(residual), tol))

    @property
    def passed(self):
        return all(r.ok for r in self.residuals)

    def max_residual(self, check=None):
        vals = [r.residual for r in self.residuals if check is None or r.check == check]
        return max(vals) if vals else 0.0

    def failures(self):
        return [r for r in self.residuals if not r.ok]


def tie_instance(rng, n_boxes=3, max_tries=1000):
    """Instance whose index policy meets exact ties between the incumbent and the next index.

    Values lie on a quarter grid and probabilities are multiples of 1/4, so
    expected improvements are exact in floating point. Each box after the
    first gets the cost that puts its index exactly on an atom of an earlier
    box.
    """
    grid = np.arange(13) * 0.25
    for _ in range(max_tries):
        dists = []
        for _ in range(n_boxes):
            k = int(rng.integers(1, 4))
            values = rng.choice(grid, size=k, replace=False)
            counts = np.ones(k, dtype=int)
            for j in rng.integers(0, k, size=4 - k):
                counts[j] += 1
            dists.append(FiniteSupport(tuple(values), tuple(counts / 4.0)))
        first_cost = float(rng.choice([0.25, 0.5]))
        costs = [first_cost]
        for i in range(1, n_boxes):
            target = float(rng.choice(dists[int(rng.integers(0, i))].values))
            costs.append(float(dists[i].expected_improvement(target)))
        if min(costs) <= 0:
            continue
        boxes = tuple(PandoraBox(i, d, c) for i, (d, c) in enumerate(zip(dists, costs)))
        indices = [fair_price(b.reward, b.cost) for b in boxes]
        if len(set(indices)) < n_boxes:
            continue
        return PandoraInstance(boxes)
    raise RuntimeError("could not build a tie instance")


def optimality_suite(n_instances=200, seed=0, inject_fault=False, max_boxes=4, max_atoms=3):
    """Index-policy value versus the backward-induction optimum, for both tie rules.

    Every fourth instance is an exact-tie instance on which expected spends
    are compared as well. ``inject_fault`` makes the oracle use the opposite
    tie rule, a negative control that must fail.
    """
    rng = np.random.default_rng(seed)
    report = SuiteReport("optimality")
    for k in range(n_instances):
        tie = k % 4 == 3
        if tie:
            inst = tie_instance(rng, int(rng.integers(2, max_boxes + 1)))
        else:
            inst = random_instance(
                rng, int(rng.integers(1, max_boxes + 1)), int(rng.integers(1, max_atoms + 1))
            )
        for rule in TIE_RULES:
            oracle_rule = TIE_RULES[1 - TIE_RULES.index(rule)] if inject_fault else rule
            opt_value, opt_spend = brute_force_solve(inst, tie_rule=oracle_rule)
            ev = gittins_policy_evaluation(inst, rule)
            report.add(k, f"value[{rule}]", abs(ev.value - opt_value), VALUE_TOL)
            if tie:
                report.add(k, f"spend[{rule}]", abs(ev.spend - opt_spend), VALUE_TOL)
    return report


def budget_instance(rng, max_boxes=4, max_atoms=3, max_tries=1000):
    """Random instance with a budget strictly between the cheapest box and the
    smallest spend of any zero-cost optimal policy, so the multiplier is positive."""
    for _ in range(max_tries):
        inst = random_instance(rng, int(rng.integers(2, max_boxes + 1)), int(rng.integers(1, max_atoms + 1)))
        lo = float(inst.costs.min())
        hi = brute_force_solve(inst, 0.0, "stop-early")[1]
        if hi - lo > 1e-3:
            budget = float(rng.uniform(lo + 1e-4, hi - 1e-4))
            return PandoraInstance(inst.boxes, budget)
    raise RuntimeError("could not build a budget instance")


def budget_suite(n_instances=50, seed=0, n_probes=5):
    rng = np.random.default_rng(seed)
    report = SuiteReport("budget")
    for k in range(n_instances):
        inst = budget_instance(rng)
        mix = budget_lambda(inst)
        report.add(k, "lambda_positive", 0.0 if mix.lam > 0 else 1.0, 0.0)
        report.add(k, "spend", abs(mix.expected_spend - inst.budget), BUDGET_TOL)
        report.add(k, "value", abs(mix.expected_value - mix.lagrangian_min), BUDGET_TOL)
        bracket = max(0.0, mix.spend_low - inst.budget) + max(0.0, inst.budget - mix.spend_high)
        report.add(k, "bracket", bracket, BUDGET_TOL)
        top = 4.0 * max(mix.lam, 1e-3)
        for _ in range(n_probes):
            a, b = np.sort(rng.uniform(0.0, top, 2))
            mid = lagrangian_value(inst, 0.5 * (a + b))
            chord = 0.5 * (lagrangian_value(inst, a) + lagrangian_value(inst, b))
            report.add(k, "convexity", max(0.0, mid - chord), VALUE_TOL)
    return report
