"""Discrete Pandora's Box: Gittins indices, the index policy and exact oracles.

Rewards are independent across boxes and either Gaussian or finitely
supported. Exact values (expected terminal reward minus expected total cost)
are available for finite supports by enumerating reward realizations, and a
backward-induction solver over (opened set, best value) states provides the
optimal value independently of any index computation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ._roots import bisect_decreasing, finite_ei, gaussian_ei, gaussian_fair_price

TIE_RULES = ("stop-early", "open-on-tie")
MAX_ORACLE_BOXES = 6
MAX_ORACLE_ATOMS = 4


class InstanceTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("Gaussian reward needs std > 0")
        if not math.isfinite(self.mean):
            raise ValueError("Gaussian reward needs a finite mean")

    def expected_improvement(self, y):
        return gaussian_ei(self.mean, self.std, y)

    def sample(self, rng):
        return float(rng.normal(self.mean, self.std))


@dataclass(frozen=True)
class FiniteSupport:
    values: tuple
    probs: tuple

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        probs = tuple(float(p) for p in self.probs)
        if len(values) == 0 or len(values) != len(probs):
            raise ValueError("FiniteSupport needs matching, nonempty values and probs")
        if any(p < 0 for p in probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {sum(probs)!r}, not 1")
        if not all(math.isfinite(v) for v in values):
            raise ValueError("support values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @property
    def mean(self):
        return float(np.dot(self.values, self.probs))

    def atoms(self):
        return [(v, p) for v, p in zip(self.values, self.probs) if p > 0]

    def expected_improvement(self, y):
        return finite_ei(np.asarray(self.values), np.asarray(self.probs), y)

    def sample(self, rng):
        return float(self.values[rng.choice(len(self.values), p=self.probs)])


RewardDistribution = Union[Gaussian, FiniteSupport]


@dataclass(frozen=True)
class PandoraBox:
    id: int
    reward: RewardDistribution
    cost: float

    def __post_init__(self):
        if not self.cost > 0:
            raise ValueError(f"box {self.id}: cost must be positive")


@dataclass(frozen=True)
class PandoraInstance:
    boxes: tuple
    budget: Optional[float] = None

    def __post_init__(self):
        boxes = tuple(self.boxes)
        if not boxes:
            raise ValueError("an instance needs at least one box")
        ids = [b.id for b in boxes]
        if len(set(ids)) != len(ids):
            raise ValueError("box ids must be unique")
        object.__setattr__(self, "boxes", boxes)
        if self.budget is not None:
            costs = [b.cost for b in boxes]
            if not min(costs) < self.budget < sum(costs):
                raise ValueError(
                    f"budget {self.budget!r} must satisfy min cost < B < total cost "
                    f"({min(costs)!r}, {sum(costs)!r})"
                )

    def __len__(self):
        return len(self.boxes)

    @property
    def costs(self):
        return np.array([b.cost for b in self.boxes])

    @property
    def finite(self):
        return all(isinstance(b.reward, FiniteSupport) for b in self.boxes)

    def box(self, box_id):
        for b in self.boxes:
            if b.id == box_id:
                return b
        raise KeyError(box_id)


@dataclass
class PolicyTrace:
    opened: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    total_cost: float = 0.0

    @property
    def terminal_reward(self):
        return max(self.rewards)

    @property
    def n_opened(self):
        return len(self.opened)

    @property
    def net_utility(self):
        return self.terminal_reward - self.total_cost


@dataclass(frozen=True)
class PolicyEvaluation:
    """Exact expectations for a policy: ``value = reward - spend``."""

    value: float
    reward: float
    spend: float


def expected_improvement_dist(dist, y):
    return float(dist.expected_improvement(y))


def _finite_fair_price(dist, cost):
    values = np.asarray(dist.values)
    probs = np.asarray(dist.probs)
    top = float(values[probs > 0].max())
    if cost == 0:
        return top
    lo = float(values.min()) - 1.0
    g = float(bisect_decreasing(lambda y: finite_ei(values, probs, y), cost, lo, top))
    # EI is piecewise linear: snap onto the exact root of the active segment.
    above = values > g
    mass = probs[above].sum()
    if mass > 0:
        exact = (np.dot(probs[above], values[above]) - cost) / mass
        if abs(finite_ei(values, probs, exact) - cost) <= abs(finite_ei(values, probs, g) - cost):
            g = float(exact)
    return g


def fair_price(dist, cost):
    """Root ``g`` of ``EI_dist(g) = cost``; ``cost = 0`` gives the supremum of the support."""
    if cost < 0:
        raise ValueError("cost must be nonnegative")
    if isinstance(dist, Gaussian):
        return float(gaussian_fair_price(dist.mean, dist.std, cost))
    return _finite_fair_price(dist, cost)


def gittins_index(box, cost_scale=1.0):
    return fair_price(box.reward, cost_scale * box.cost)


def gittins_indices(instance, cost_scale=1.0):
    return {b.id: gittins_index(b, cost_scale) for b in instance.boxes}


class GittinsPolicy:
    """Open boxes in decreasing index order; stop once the best reward reaches the next index.

    Index ties are broken by box position in the instance. ``stop-early`` stops
    when ``f* >= index``; ``open-on-tie`` only when ``f* > index``.
    """

    def __init__(self, instance, tie_rule="stop-early", cost_scale=1.0):
        if tie_rule not in TIE_RULES:
            raise ValueError(f"tie_rule must be one of {TIE_RULES}")
        self.instance = instance
        self.tie_rule = tie_rule
        self.cost_scale = cost_scale
        self.indices = gittins_indices(instance, cost_scale)
        order = sorted(range(len(instance.boxes)), key=lambda i: -self.indices[instance.boxes[i].id])
        self.order = [instance.boxes[i].id for i in order]

    def __call__(self, opened, rewards):
        if len(opened) == len(self.order):
            return None
        nxt = self.order[len(opened)]
        if not opened:
            return nxt
        best, g = max(rewards), self.indices[nxt]
        stop = best >= g if self.tie_rule == "stop-early" else best > g
        return None if stop else nxt


class FixedSequence:
    """Open the listed boxes in order, then stop."""

    def __init__(self, ids):
        self.ids = list(ids)

    def __call__(self, opened, rewards):
        return self.ids[len(opened)] if len(opened) < len(self.ids) else None


def run_gittins_policy(instance, tie_rule="stop-early", rng=None, rewards=None, cost_scale=1.0):
    """Simulate the index policy once.

    Rewards come from ``rewards`` (a mapping from box id to realized value)
    when given, otherwise are drawn from ``rng`` as boxes are opened.
    """
    rng = np.random.default_rng() if rng is None else rng
    policy = GittinsPolicy(instance, tie_rule, cost_scale)
    trace = PolicyTrace()
    while True:
        nxt = policy(tuple(trace.opened), tuple(trace.rewards))
        if nxt is None:
            return trace
        box = instance.box(nxt)
        value = rewards[nxt] if rewards is not None else box.reward.sample(rng)
        trace.opened.append(nxt)
        trace.rewards.append(float(value))
        trace.total_cost += box.cost


def evaluate_policy(instance, policy):
    """Exact expected reward, spend and net value of a deterministic policy.

    ``policy(opened_ids, observed_rewards)`` returns the next box id or None to
    stop; it must open at least one box. Only finite-support rewards can be
    enumerated.
    """
    if not instance.finite:
        raise TypeError("exact evaluation needs finite-support rewards; use Monte-Carlo for Gaussian boxes")

    def recurse(opened, rewards):
        nxt = policy(opened, rewards)
        if nxt is None:
            if not opened:
                raise ValueError("policy stopped before opening any box")
            return max(rewards), 0.0
        if nxt in opened:
            raise ValueError(f"policy reopened box {nxt}")
        box = instance.box(nxt)
        reward = spend = 0.0
        for v, p in box.reward.atoms():
            r, s = recurse(opened + (nxt,), rewards + (v,))
            reward += p * r
            spend += p * s
        return reward, spend + box.cost

    reward, spend = recurse((), ())
    return PolicyEvaluation(value=reward - spend, reward=reward, spend=spend)


def policy_value(instance, policy):
    return evaluate_policy(instance, policy).value


def gittins_policy_evaluation(instance, tie_rule="stop-early", cost_scale=1.0):
    """Exact evaluation, under the true costs, of the index policy built with scaled costs."""
    return evaluate_policy(instance, GittinsPolicy(instance, tie_rule, cost_scale))


def _check_oracle_size(instance):
    if not instance.finite:
        raise TypeError("the brute-force oracle needs finite-support rewards")
    if len(instance) > MAX_ORACLE_BOXES:
        raise InstanceTooLarge(f"{len(instance)} boxes; the oracle handles at most {MAX_ORACLE_BOXES}")
    if any(len(b.reward.values) > MAX_ORACLE_ATOMS for b in instance.boxes):
        raise InstanceTooLarge(f"the oracle handles at most {MAX_ORACLE_ATOMS} atoms per box")


def brute_force_solve(instance, cost_scale=1.0, tie_rule="stop-early", tol=1e-12):
    """Backward induction over (opened set, best value so far).

    Returns the optimal expected net utility with costs ``cost_scale * c``,
    and the expected spend (under the unscaled costs ``c``) of the optimal policy
    selected by ``tie_rule``: among actions whose value is within ``tol`` of
    the best, ``stop-early`` keeps the one with the smallest expected spend,
    ``open-on-tie`` the largest.
    """
    _check_oracle_size(instance)
    if tie_rule not in TIE_RULES:
        raise ValueError(f"tie_rule must be one of {TIE_RULES}")
    boxes = instance.boxes
    n = len(boxes)
    costs = [b.cost for b in boxes]
    atoms = [b.reward.atoms() for b in boxes]
    prefer_low_spend = tie_rule == "stop-early"
    full = (1 << n) - 1

    @lru_cache(maxsize=None)
    def solve(mask, best):
        options = []
        if mask:
            options.append((best, 0.0))
        if mask != full:
            for i in range(n):
                if mask & (1 << i):
                    continue
                val = spend = 0.0
                for v, p in atoms[i]:
                    nb = v if best is None else max(best, v)
                    sv, ss = solve(mask | (1 << i), nb)
                    val += p * sv
                    spend += p * ss
                options.append((val - cost_scale * costs[i], spend + costs[i]))
        top = max(v for v, _ in options)
        tied = [o for o in options if o[0] >= top - tol * (1.0 + abs(top))]
        return (min if prefer_low_spend else max)(tied, key=lambda o: o[1])

    return solve(0, None)


def brute_force_value(instance, cost_scale=1.0):
    return brute_force_solve(instance, cost_scale)[0]


def _budget(instance, budget):
    B = instance.budget if budget is None else budget
    if B is None:
        raise ValueError("no budget given")
    costs = instance.costs
    if not costs.min() < B < costs.sum():
        raise ValueError(
            f"budget constraint inactive: need min cost {costs.min()!r} < B={B!r} < total cost {costs.sum()!r}"
        )
    return float(B)


def lagrangian_value(instance, lam, budget=None):
    """``A(lam) = V*(lam c) + lam B``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    B = instance.budget if budget is None else budget
    if B is None or not B > 0:
        raise ValueError("a positive budget is required")
    return brute_force_value(instance, lam) + lam * B


@dataclass(frozen=True)
class MixedBudgetPolicy:
    """Randomization between the two optimal index policies at ``lam``.

    ``spend_low`` / ``reward_low`` belong to the policy taken with probability
    ``alpha`` (built from ``lam`` approached from above: stops on ties),
    ``spend_high`` / ``reward_high`` to the one taken with probability
    ``1 - alpha`` (``lam`` approached from below: opens on ties).
    """

    lam: float
    alpha: float
    budget: float
    spend_low: float
    spend_high: float
    reward_low: float
    reward_high: float
    lagrangian_min: float

    @property
    def expected_spend(self):
        return self.alpha * self.spend_low + (1.0 - self.alpha) * self.spend_high

    @property
    def expected_value(self):
        """Expected terminal reward (no cost deduction) of the mixture."""
        return self.alpha * self.reward_low + (1.0 - self.alpha) * self.reward_high


def _golden_min(f, lo, hi, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def budget_lambda(instance, budget=None, tol=1e-10):
    """Lagrange multiplier of the expected budget constraint and its mixed policy.

    ``A`` is convex, so its minimizer is located by golden-section search on
    ``[0, lam_hi]``, where ``lam_hi`` doubles until ``A`` increases. The two
    one-sided optimal index policies at the minimizer bracket the budget and
    are mixed so that the expected spend equals ``B``.
    """
    B = _budget(instance, budget)
    if not instance.finite:
        raise TypeError("budget_lambda needs finite-support rewards")

    def A(lam):
        return brute_force_value(instance, lam) + lam * B

    hi = 1.0
    while A(hi) <= A(0.5 * hi):
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("Lagrangian does not increase; is the budget feasible?")
    lam = _golden_min(A, 0.0, hi, tol)
    eps = 1e-7 * max(1.0, lam)
    low = gittins_policy_evaluation(instance, "stop-early", lam + eps)
    high = gittins_policy_evaluation(instance, "open-on-tie", max(lam - eps, 0.0))
    if lam - eps <= 0.0 and A(0.0) <= A(lam):
        lam = 0.0
    gap = high.spend - low.spend
    alpha = 1.0 if gap <= 0 else min(1.0, max(0.0, (high.spend - B) / gap))
    return MixedBudgetPolicy(
        lam=lam,
        alpha=alpha,
        budget=B,
        spend_low=low.spend,
        spend_high=high.spend,
        reward_low=low.reward,
        reward_high=high.reward,
        lagrangian_min=A(lam),
    )


def random_instance(rng, n_boxes, n_atoms, cost_range=(0.05, 2.0), value_range=(0.0, 3.0)):
    """Random finite-support instance with ``n_atoms`` atoms per box and Dirichlet weights."""
    boxes = []
    for i in range(n_boxes):
        values = rng.uniform(*value_range, size=n_atoms)
        probs = rng.dirichlet(np.ones(n_atoms))
        probs[-1] = 1.0 - probs[:-1].sum()
        boxes.append(PandoraBox(i, FiniteSupport(tuple(values), tuple(probs)), float(rng.uniform(*cost_range))))
    return PandoraInstance(tuple(boxes))


def _dist_to_dict(dist):
    if isinstance(dist, Gaussian):
        return {"type": "gaussian", "mean": dist.mean, "std": dist.std}
    return {"type": "finite", "values": list(dist.values), "probs": list(dist.probs)}


def _dist_from_dict(d):
    kind = d.get("type")
    if kind == "gaussian":
        return Gaussian(float(d["mean"]), float(d["std"]))
    if kind == "finite":
        return FiniteSupport(tuple(d["values"]), tuple(d["probs"]))
    raise ValueError(f"unknown reward distribution type {kind!r}")


def instance_to_dict(instance):
    out = {
        "boxes": [
            {"id": b.id, "cost": b.cost, "reward": _dist_to_dict(b.reward)} for b in instance.boxes
        ]
    }
    if instance.budget is not None:
        out["budget"] = instance.budget
    return out


def instance_from_dict(d):
    boxes = tuple(
        PandoraBox(int(b["id"]), _dist_from_dict(b["reward"]), float(b["cost"])) for b in d["boxes"]
    )
    return PandoraInstance(boxes, d.get("budget"))


def dump_instance(instance, path):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2)
        fh.write("\n")


def load_instance(path):
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
