"""Budgeted Bayesian optimization runs and their regret bookkeeping.

Each seed is an independent run: bind the objective, evaluate ``2(d+1)`` Sobol
points (charged against the budget), then repeat fit, maximize, evaluate and
charge until the next evaluation would overspend. All randomness derives from
the seed, so reruns are bit-identical.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import acquisition as acq
from .config import ExperimentConfig
from .gp import Dataset, GaussianProcess, fit_log_cost_posterior
from .objectives import (
    BumpSetup,
    ConstantCost,
    LinearCost,
    bayes_regret_objective,
    bump_counterexample,
    synthetic_objective,
)
from .optimize import DomainBox, maximize, sobol_candidates

CSV_HEADER = ("seed", "step", "cumulative_cost", "step_cost", "observed", "incumbent", "regret", "lambda_t")
SUMMARY_HEADER = ("policy", "cumulative_cost", "median", "q25", "q75", "n_seeds")


@dataclass(frozen=True)
class RegretRecord:
    """One evaluation step; step 0 summarizes the initial design."""

    seed: int
    step: int
    x: tuple
    observed: float
    step_cost: float
    cumulative_cost: float
    incumbent: float
    regret: float
    lam: float = float("nan")
    error: Optional[str] = None


def step_seed(seed, step, stream):
    return int(np.random.SeedSequence([seed, step, stream]).generate_state(1)[0])


def build_problem(config, seed):
    """Objective and true cost function for one seed."""
    if config.objective == "bump-counterexample":
        setup = BumpSetup(config.bump_lengthscale, config.bump_amplitude, config.cost.bump or BumpSetup().cost_bump)
        obj, _, _ = bump_counterexample(setup, seed, config.n_features)
        kernel = setup.kernel
    else:
        domain = None if config.domain is None else DomainBox(np.array(config.domain[0]), np.array(config.domain[1]))
        if config.objective == "bayes-prior-draw":
            obj = bayes_regret_objective(config.kernel, seed, config.dim, config.n_features, domain)
        else:
            obj = synthetic_objective(config.objective, config.dim, domain)
        kernel = config.kernel
    kind = config.cost.base if config.cost.type == "unknown" else config.cost.type
    if kind == "uniform":
        cost = ConstantCost(config.cost.value)
    elif kind == "linear":
        cost = LinearCost(obj.domain)
    else:
        cost = config.cost.bump or BumpSetup().cost_bump
    return obj, cost, kernel


def _cost_model(config, cost, kernel, X, costs):
    if config.cost.type == "unknown":
        log_kernel = type(kernel)(kernel.family, kernel.lengthscale, 1.0, kernel.jitter)
        return acq.UnknownCost(fit_log_cost_posterior(log_kernel, X, costs))
    if config.cost.type == "uniform":
        return acq.UniformCost(config.cost.value)
    return acq.KnownCost(cost, cost.gradient)


def _acquisition(name, ctx, gp, seed, t, n_features):
    if name == "ei":
        return acq.EIAcquisition(ctx)
    if name == "eipc":
        return acq.EIPCAcquisition(ctx)
    if name == "ucb":
        return acq.UCBAcquisition(ctx)
    if name == "ts":
        return acq.ThompsonAcquisition(gp.sample_path(n_features, step_seed(seed, t, 1)))
    return acq.PBGIAcquisition(ctx)


def run_seed(config, seed):
    """Run one seed; returns ``(records, points)``, ``points`` being every evaluated input."""
    obj, cost, kernel = build_problem(config, seed)
    domain = obj.domain
    name = config.policy.name
    decay = acq.PbgiDecayState(config.policy.lam_initial, config.policy.beta) if name == "pbgi-d" else None
    records, points = [], []

    X = sobol_candidates(domain, config.init_count, seed)
    y = obj(X)
    costs = cost(X)
    spent = float(np.sum(costs))
    if spent > config.budget:
        raise ValueError(f"initial design costs {spent!r}, above the budget {config.budget!r}")
    incumbent = float(np.max(y))
    records.append(RegretRecord(seed, 0, tuple(X[int(np.argmax(y))]), incumbent, spent, spent,
                                incumbent, obj.reference - incumbent))
    points.extend((seed, 0, tuple(x)) for x in X)

    t = 1
    while config.max_steps is None or t <= config.max_steps:
        lam = decay.lam if decay is not None else config.policy.lam
        try:
            gp = GaussianProcess(kernel, config.noise_variance, config.standardize_outputs).fit(X, y)
            ctx = acq.AcquisitionContext(
                gp, incumbent, _cost_model(config, cost, kernel, X, costs), lam, t, config.policy.delta
            )
            report = maximize(
                _acquisition(name, ctx, gp, seed, t, config.n_features),
                domain,
                step_seed(seed, t, 0),
                config.n_candidates,
                config.n_restarts,
            )
            x = report.x
            c = float(cost(x[None])[0])
            if spent + c > config.budget:
                break
            value = float(obj(x[None])[0])
            if not np.isfinite(value):
                raise FloatingPointError(f"objective returned {value!r}")
        except Exception as exc:  # recorded, then the seed is abandoned
            records.append(RegretRecord(seed, t, (), float("nan"), float("nan"), spent, incumbent,
                                        obj.reference - incumbent, lam, f"{type(exc).__name__}: {exc}"))
            break
        if decay is not None:
            decay = acq.pbgi_d_update(decay, report.value, incumbent)
        X = np.vstack([X, x])
        y = np.append(y, value)
        costs = np.append(costs, c)
        spent += c
        incumbent = max(incumbent, value)
        records.append(RegretRecord(seed, t, tuple(x), value, c, spent, incumbent, obj.reference - incumbent, lam))
        points.append((seed, t, tuple(x)))
        t += 1
    return records, points


def _run_seed_star(args):
    return run_seed(*args)


def run_experiment(config, jobs=1):
    """Run every seed of ``config``; returns ``{seed: (records, points)}`` in seed order."""
    if jobs > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed_star, [(config, s) for s in config.seeds]))
    else:
        results = [run_seed(config, s) for s in config.seeds]
    return dict(zip(config.seeds, results))


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def records_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for records, _ in results.values():
        for r in records:
            w.writerow([r.seed, r.step] + [_fmt(v) for v in (r.cumulative_cost, r.step_cost, r.observed,
                                                             r.incumbent, r.regret, r.lam)])
    return buf.getvalue()


def points_csv(results, dim):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["seed", "step"] + [f"x{i}" for i in range(dim)])
    for _, points in results.values():
        for seed, step, x in points:
            w.writerow([seed, step] + [_fmt(v) for v in x])
    return buf.getvalue()


def run_name(config):
    return f"{config.policy.name}__{config.objective}"


def write_results(config, results, out_dir):
    """Write the regret CSV, the evaluated-points CSV and a metadata file; returns the regret CSV path."""
    base = os.path.join(out_dir, run_name(config))
    _atomic_write(base + ".csv", records_csv(results))
    _atomic_write(base + ".points.csv", points_csv(results, config.dim))
    errors = {str(s): r[0][-1].error for s, r in results.items() if r[0][-1].error}
    meta = {
        "policy": config.policy.name,
        "objective": config.objective,
        "seeds": list(config.seeds),
        "reference_optimum": "exact" if config.objective in ("ackley", "levy", "rosenbrock")
        else "estimate: max over a 2^16-point Sobol grid refined by L-BFGS-B",
        "initial_design_charged_to_budget": True,
        "errors": errors,
        "config": config.to_dict(),
    }
    _atomic_write(base + ".meta.json", json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    return base + ".csv"


class AlignmentError(ValueError):
    pass


def read_records(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise AlignmentError(f"{path}: unexpected header {header}")
        rows = [(int(r[0]), int(r[1])) + tuple(float(v) for v in r[2:]) for r in reader]
    return rows


def locf(costs, values, grid):
    """Last observation carried forward of ``values`` (observed at ``costs``) onto ``grid``."""
    idx = np.searchsorted(costs, grid, side="right") - 1
    out = np.asarray(values, dtype=float)[np.maximum(idx, 0)]
    return np.where(idx >= 0, out, np.nan)


def summarize(paths, n_grid=101):
    """Median and quartile regret per policy on a shared cumulative-cost grid.

    ``paths`` maps policy name to its regret CSV. All policies must cover the
    same seeds. The grid runs from the latest first record over all seeds to
    the largest final cumulative cost.
    """
    per_policy = {}
    for policy, path in paths.items():
        seeds = {}
        for row in read_records(path):
            seed, _, cum, _, _, _, regret, _ = row
            if np.isnan(cum) or np.isnan(regret):
                continue
            seeds.setdefault(seed, ([], []))
            seeds[seed][0].append(cum)
            seeds[seed][1].append(regret)
        if not seeds:
            raise AlignmentError(f"{path}: no records")
        per_policy[policy] = seeds
    seed_sets = {p: sorted(s) for p, s in per_policy.items()}
    first = next(iter(seed_sets.values()))
    for p, s in seed_sets.items():
        if s != first:
            raise AlignmentError(f"policy {p!r} has seeds {s}, expected {first}")
    curves = [c for seeds in per_policy.values() for c in seeds.values()]
    lo = max(c[0][0] for c in curves)
    hi = max(c[0][-1] for c in curves)
    grid = np.linspace(lo, hi, n_grid) if hi > lo else np.array([lo])
    rows = []
    for policy, seeds in per_policy.items():
        mat = np.vstack([locf(np.array(c), np.array(r), grid) for c, r in (seeds[s] for s in first)])
        q25, med, q75 = np.percentile(mat, [25, 50, 75], axis=0)
        for g, m, a, b in zip(grid, med, q25, q75):
            rows.append((policy, g, m, a, b, len(first)))
    return rows


def summary_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for policy, g, m, a, b, n in rows:
        w.writerow([policy, _fmt(g), _fmt(m), _fmt(a), _fmt(b), n])
    return buf.getvalue()


def write_summary(rows, path):
    _atomic_write(path, summary_csv(rows))
    return path
