"""Experiment configuration: schema, validation and YAML/JSON loading.

A config is a key-value tree::

    objective: {tag: ackley}            # or bayes-prior-draw, levy, rosenbrock, bump-counterexample
    dim: 2
    kernel: {family: matern52, lengthscale: 0.1, amplitude: 1.0}
    cost: {type: linear}                # uniform (value), linear, bump, unknown (base: ...)
    policy: {name: pbgi, lam: 1.0e-4}   # ei, eipc, ucb, ts, pbgi, pbgi-d, pbgi-u
    budget: 100.0
    seeds: [0, 1, 2]

Optional keys: ``max_steps``, ``n_init``, ``standardize``, ``noise_variance``,
``n_features``, ``optimizer`` (``n_candidates``, ``n_restarts``), ``domain``
(``lower``, ``upper``) and, for the bump objective, ``bump`` (``lengthscale``,
``amplitude`` and ``cost`` sub-trees of ``baseline``/``height``/``width``).
Validation errors name the offending key.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import yaml

from .gp import KERNEL_FAMILIES, AmplitudeBump, KernelSpec

OBJECTIVES = ("bayes-prior-draw", "ackley", "levy", "rosenbrock", "bump-counterexample")
COST_TYPES = ("uniform", "linear", "bump", "unknown")
POLICIES = ("ei", "eipc", "ucb", "ts", "pbgi", "pbgi-d", "pbgi-u")


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"config key '{key}': {message}")
        self.key = key


@dataclass(frozen=True)
class PolicySpec:
    name: str
    lam: float = 1e-4
    beta: float = 0.5
    lam_initial: float = 0.1
    delta: float = 0.1


@dataclass(frozen=True)
class CostSpec:
    type: str
    value: float = 1.0
    base: Optional[str] = None
    bump: Optional[AmplitudeBump] = None


@dataclass(frozen=True)
class ExperimentConfig:
    objective: str
    dim: int
    kernel: KernelSpec
    cost: CostSpec
    policy: PolicySpec
    budget: float
    seeds: tuple
    max_steps: Optional[int] = None
    n_init: Optional[int] = None
    standardize: Optional[bool] = None
    noise_variance: float = 0.0
    n_features: int = 1024
    n_candidates: Optional[int] = None
    n_restarts: Optional[int] = None
    domain: Optional[tuple] = None
    bump_lengthscale: float = 1.0
    bump_amplitude: AmplitudeBump = AmplitudeBump(baseline=0.1, height=10.0, width=1.0)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def init_count(self):
        return 2 * (self.dim + 1) if self.n_init is None else self.n_init

    @property
    def standardize_outputs(self):
        if self.standardize is not None:
            return self.standardize
        return self.objective not in ("bayes-prior-draw", "bump-counterexample")

    def with_policy(self, name):
        return replace(self, policy=replace(self.policy, name=name))

    def with_seeds(self, seeds):
        return replace(self, seeds=tuple(seeds))

    def to_dict(self):
        d = asdict(self)
        d.pop("raw")
        return d


def _need(tree, key, where=""):
    if not isinstance(tree, dict) or key not in tree:
        raise ConfigError(where + key, "missing")
    return tree[key]


def _number(value, key, positive=True, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    value = float(value)
    if positive and not (value > 0 or (allow_zero and value == 0)):
        raise ConfigError(key, f"must be {'nonnegative' if allow_zero else 'positive'}, got {value!r}")
    return value


def _integer(value, key, minimum=1):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(key, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _bump(tree, key, default):
    if tree is None:
        return default
    if not isinstance(tree, dict):
        raise ConfigError(key, "expected a mapping")
    unknown = set(tree) - {"baseline", "height", "width"}
    if unknown:
        raise ConfigError(f"{key}.{sorted(unknown)[0]}", "unknown key")
    vals = asdict(default)
    for k in ("baseline", "height", "width"):
        if k in tree:
            vals[k] = _number(tree[k], f"{key}.{k}", allow_zero=(k == "height"))
    return AmplitudeBump(**vals)


def parse_config(tree):
    if not isinstance(tree, dict):
        raise ConfigError("<root>", "expected a mapping")
    known = {
        "objective", "dim", "kernel", "cost", "policy", "budget", "seeds", "max_steps", "n_init",
        "standardize", "noise_variance", "n_features", "optimizer", "domain", "bump",
    }
    for key in tree:
        if key not in known:
            raise ConfigError(key, "unknown key")

    obj = _need(tree, "objective")
    tag = obj.get("tag") if isinstance(obj, dict) else obj
    if tag not in OBJECTIVES:
        raise ConfigError("objective.tag", f"expected one of {OBJECTIVES}, got {tag!r}")

    dim = _integer(_need(tree, "dim"), "dim")
    if tag == "bump-counterexample" and dim != 1:
        raise ConfigError("dim", "the bump counterexample is one-dimensional")

    k = _need(tree, "kernel")
    if not isinstance(k, dict):
        raise ConfigError("kernel", "expected a mapping")
    family = k.get("family", "matern52")
    if family not in KERNEL_FAMILIES:
        raise ConfigError("kernel.family", f"expected one of {KERNEL_FAMILIES}, got {family!r}")
    kernel = KernelSpec(
        family,
        _number(_need(k, "lengthscale", "kernel."), "kernel.lengthscale"),
        _number(k.get("amplitude", 1.0), "kernel.amplitude"),
        _number(k.get("jitter", 1e-8), "kernel.jitter"),
    )

    c = _need(tree, "cost")
    if not isinstance(c, dict):
        raise ConfigError("cost", "expected a mapping")
    ctype = c.get("type")
    if ctype not in COST_TYPES:
        raise ConfigError("cost.type", f"expected one of {COST_TYPES}, got {ctype!r}")
    base = None
    if ctype == "unknown":
        base = c.get("base", "linear")
        if base not in ("uniform", "linear", "bump"):
            raise ConfigError("cost.base", f"expected uniform, linear or bump, got {base!r}")
    uses_bump = ctype == "bump" or base == "bump"
    cost = CostSpec(
        ctype,
        _number(c.get("value", 1.0), "cost.value"),
        base,
        _bump(c.get("bump"), "cost.bump", AmplitudeBump(1.0, 50.0, 1.0)) if uses_bump else None,
    )

    p = _need(tree, "policy")
    if isinstance(p, str):
        p = {"name": p}
    name = p.get("name")
    if name not in POLICIES:
        raise ConfigError("policy.name", f"expected one of {POLICIES}, got {name!r}")
    beta = _number(p.get("beta", 0.5), "policy.beta")
    if not beta < 1:
        raise ConfigError("policy.beta", "decay factor must be below 1")
    policy = PolicySpec(
        name,
        _number(p.get("lam", 1e-4), "policy.lam"),
        beta,
        _number(p.get("lam_initial", 0.1), "policy.lam_initial"),
        _number(p.get("delta", 0.1), "policy.delta"),
    )
    if name == "pbgi-u" and ctype != "unknown":
        raise ConfigError("cost.type", "policy pbgi-u needs cost type 'unknown'")

    budget = _number(_need(tree, "budget"), "budget")
    seeds = _need(tree, "seeds")
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "expected a nonempty list of integers")
    for s in seeds:
        _integer(s, "seeds", minimum=0)
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", "seeds must be distinct")

    opt = tree.get("optimizer", {}) or {}
    if not isinstance(opt, dict):
        raise ConfigError("optimizer", "expected a mapping")
    for key in opt:
        if key not in ("n_candidates", "n_restarts"):
            raise ConfigError(f"optimizer.{key}", "unknown key")

    domain = None
    if "domain" in tree:
        dom = tree["domain"]
        lo, hi = _need(dom, "lower", "domain."), _need(dom, "upper", "domain.")
        lo = [lo] * dim if not isinstance(lo, list) else lo
        hi = [hi] * dim if not isinstance(hi, list) else hi
        if len(lo) != dim or len(hi) != dim or any(not a < b for a, b in zip(lo, hi)):
            raise ConfigError("domain", f"need {dim} bounds with lower < upper")
        domain = (tuple(float(v) for v in lo), tuple(float(v) for v in hi))

    bump = tree.get("bump", {}) or {}
    if not isinstance(bump, dict):
        raise ConfigError("bump", "expected a mapping")
    for key in bump:
        if key not in ("lengthscale", "amplitude"):
            raise ConfigError(f"bump.{key}", "unknown key")

    standardize = tree.get("standardize")
    if standardize is not None and not isinstance(standardize, bool):
        raise ConfigError("standardize", "expected true or false")

    max_steps = tree.get("max_steps")
    n_init = tree.get("n_init")
    return ExperimentConfig(
        objective=tag,
        dim=dim,
        kernel=kernel,
        cost=cost,
        policy=policy,
        budget=budget,
        seeds=tuple(seeds),
        max_steps=None if max_steps is None else _integer(max_steps, "max_steps", minimum=0),
        n_init=None if n_init is None else _integer(n_init, "n_init"),
        standardize=standardize,
        noise_variance=_number(tree.get("noise_variance", 0.0), "noise_variance", allow_zero=True),
        n_features=_integer(tree.get("n_features", 1024), "n_features"),
        n_candidates=None if "n_candidates" not in opt else _integer(opt["n_candidates"], "optimizer.n_candidates"),
        n_restarts=None if "n_restarts" not in opt else _integer(opt["n_restarts"], "optimizer.n_restarts"),
        domain=domain,
        bump_lengthscale=_number(bump.get("lengthscale", 1.0), "bump.lengthscale"),
        bump_amplitude=_bump(bump.get("amplitude"), "bump.amplitude", AmplitudeBump(0.1, 10.0, 1.0)),
        raw=tree,
    )


def load_config(path):
    ext = os.path.splitext(path)[1].lower()
    try:
        with open(path) as fh:
            if ext == ".json":
                tree = json.load(fh)
            elif ext in (".yaml", ".yml"):
                tree = yaml.safe_load(fh)
            else:
                raise ConfigError("<file>", f"unsupported config extension {ext!r}; use .yaml, .yml or .json")
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError("<file>", f"could not parse {path}: {exc}") from None
    return parse_config(tree)
