"""Objective and cost functions for the benchmark harness.

All objectives are exposed in a maximization convention; minimization
benchmarks are negated and their regret is unchanged by the sign flip.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import sindg

from .gp import AmplitudeBump, KernelSpec, sample_prior_path
from .optimize import DomainBox, sobol_candidates

N_FEATURES = 1024
REFERENCE_GRID_LOG2 = 16
REFERENCE_REFINE = 32


def _rows(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def ackley(x):
    X, single = _rows(x)
    d = X.shape[1]
    r = np.sqrt(np.sum(X**2, axis=1) / d)
    val = 20.0 - 20.0 * np.exp(-0.2 * r) - np.exp(np.sum(np.cos(2 * np.pi * X), axis=1) / d) + np.e
    val = np.maximum(val, 0.0)
    return float(val[0]) if single else val


def levy(x):
    X, single = _rows(x)
    w = 1.0 + (X - 1.0) / 4.0
    # Degree-based sine reduces the argument exactly, so sin(pi * 1) is exactly 0.
    s1 = sindg(180.0 * w[:, 0]) ** 2
    mid = np.sum((w[:, :-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(np.pi * w[:, :-1] + 1.0) ** 2), axis=1)
    last = (w[:, -1] - 1.0) ** 2 * (1.0 + np.sin(2.0 * np.pi * w[:, -1]) ** 2)
    val = s1 + mid + last
    return float(val[0]) if single else val


def rosenbrock(x):
    X, single = _rows(x)
    val = np.sum(100.0 * (X[:, 1:] - X[:, :-1] ** 2) ** 2 + (X[:, :-1] - 1.0) ** 2, axis=1)
    return float(val[0]) if single else val


SYNTHETIC = {
    "ackley": (ackley, (-1.0, 1.0)),
    "levy": (levy, (-10.0, 10.0)),
    "rosenbrock": (rosenbrock, (-5.0, 10.0)),
}


def linear_cost(x, domain):
    """``20 |S(x)|_1 + 1`` with ``S`` the affine map of ``domain`` onto the unit cube."""
    X, single = _rows(x)
    S = np.clip(domain.to_unit(X), 0.0, 1.0)
    val = 20.0 * np.sum(S, axis=1) + 1.0
    return float(val[0]) if single else val


class LinearCost:
    def __init__(self, domain):
        self.domain = domain

    def __call__(self, X):
        return linear_cost(np.atleast_2d(X), self.domain)

    def gradient(self, X):
        X = np.atleast_2d(X)
        return np.broadcast_to(20.0 / self.domain.width, X.shape).copy()


class ConstantCost:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, X):
        return np.full(np.atleast_2d(X).shape[0], self.value)

    def gradient(self, X):
        return np.zeros_like(np.atleast_2d(X), dtype=float)


@dataclass
class Objective:
    """Maximization-convention objective with a regret reference.

    ``reference`` is the known optimum when ``reference_exact`` is true and a
    grid-plus-refinement estimate otherwise.
    """

    func: Callable
    domain: DomainBox
    reference: float
    tag: str
    negated: bool = False
    reference_exact: bool = True
    gradient: Optional[Callable] = None

    def __call__(self, X):
        return self.func(np.atleast_2d(X))


def path_maximum(path, domain, seed=0, grid_log2=REFERENCE_GRID_LOG2, n_refine=REFERENCE_REFINE):
    """Estimate ``max path`` by a Sobol grid followed by L-BFGS-B from the best grid points."""
    grid = sobol_candidates(domain, 2**grid_log2, seed)
    vals = path(grid)
    top = np.argsort(vals)[::-1][:n_refine]
    best = float(vals[top[0]])
    bounds = list(zip(domain.lower, domain.upper))
    for i in top:
        res = minimize(
            lambda x: (-float(path(x[None])[0]), -path.gradient(x[None])[0]),
            grid[i],
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
        )
        x = np.clip(res.x, domain.lower, domain.upper)
        best = max(best, float(path(x[None])[0]))
    return best


@lru_cache(maxsize=256)
def _path_reference(kernel, seed, dim, n_features, lower, upper):
    domain = DomainBox(np.array(lower), np.array(upper))
    path = sample_prior_path(kernel, n_features, seed, dim)
    return path_maximum(path, domain, seed=seed)


def bayes_regret_objective(kernel, seed, dim=1, n_features=N_FEATURES, domain=None):
    """A random Fourier feature draw from the prior, on the unit cube by default.

    Objectives depend only on ``(kernel, seed, dim, n_features)``, so every
    policy run with the same seed faces the same function.
    """
    domain = DomainBox.cube(0.0, 1.0, dim) if domain is None else domain
    path = sample_prior_path(kernel, n_features, seed, dim)
    ref = _path_reference(kernel, seed, dim, n_features, tuple(domain.lower), tuple(domain.upper))
    return Objective(path, domain, ref, "bayes-prior-draw", reference_exact=False, gradient=path.gradient)


def synthetic_objective(name, dim, domain=None):
    func, (lo, hi) = SYNTHETIC[name]
    domain = DomainBox.cube(lo, hi, dim) if domain is None else domain
    return Objective(lambda X: -func(X), domain, 0.0, name, negated=True)


@dataclass(frozen=True)
class BumpSetup:
    """Prior scaled by an amplitude bump, paired with a bump-shaped cost, on ``[-500, 500]``."""

    lengthscale: float = 1.0
    amplitude_bump: AmplitudeBump = AmplitudeBump(baseline=0.1, height=10.0, width=1.0)
    cost_bump: AmplitudeBump = AmplitudeBump(baseline=1.0, height=50.0, width=1.0)
    half_width: float = 500.0

    @property
    def domain(self):
        return DomainBox.cube(-self.half_width, self.half_width, 1)

    @property
    def kernel(self):
        return KernelSpec("matern52", self.lengthscale, 1.0, scale=self.amplitude_bump)


def bump_counterexample(setup=None, seed=0, n_features=N_FEATURES):
    """Objective drawn from the bump-scaled prior, the bump cost and the prior kernel."""
    setup = BumpSetup() if setup is None else setup
    obj = bayes_regret_objective(setup.kernel, seed, 1, n_features, setup.domain)
    obj.tag = "bump-counterexample"
    return obj, setup.cost_bump, setup.kernel
