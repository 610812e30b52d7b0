"""Multi-start maximization of acquisition functions over a box.

A scrambled Sobol sweep is scored, restart points are drawn with Boltzmann
weights on the standardized scores, and the restarts are refined by
bound-constrained quasi-Newton ascent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc



@dataclass(frozen=True)
class DomainBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if np.any(~(lo < hi)):
            raise ValueError("every lower bound must be below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, lo, hi, dim):
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def width(self):
        return self.upper - self.lower

    def from_unit(self, U):
        return self.lower + np.asarray(U) * self.width

    def to_unit(self, X):
        return (np.asarray(X) - self.lower) / self.width

    def contains(self, X):
        X = np.atleast_2d(X)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)


@dataclass
class Restart:
    start: np.ndarray
    end: np.ndarray
    start_value: float
    value: float
    iterations: int
    converged: bool
    failed: bool = False


@dataclass
class OptimizeReport:
    x: np.ndarray
    value: float
    candidate_best: float
    n_candidates: int
    restarts: list = field(default_factory=list)
    fallback: bool = False


def sobol_candidates(domain, n, seed):
    if n < 1:
        raise ValueError("n must be at least 1")
    sampler = qmc.Sobol(domain.dim, scramble=True, seed=seed)
    with warnings.catch_warnings():
        # Balance warnings for non-power-of-two sizes are irrelevant here.
        warnings.simplefilter("ignore", UserWarning)
        U = sampler.random(n)
    return domain.from_unit(U)


def boltzmann_weights(values, temperature=1.0):
    """Normalized ``exp(eta * z)`` weights of standardized values; non-finite values get 0."""
    values = np.asarray(values, dtype=float)
    ok = np.isfinite(values)
    w = np.zeros_like(values)
    if not ok.any():
        return np.full_like(values, 1.0 / len(values))
    v = values[ok]
    sd = v.std()
    z = (v - v.mean()) / sd if sd > 0 else np.zeros_like(v)
    e = np.exp(temperature * (z - z.max()))
    w[ok] = e / e.sum()
    return w


def select_restarts(candidates, values, k, temperature=1.0, rng=None):
    """Indices of ``k`` distinct candidates: the best one plus ``k - 1`` Boltzmann draws."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if not 1 <= k <= n:
        raise ValueError(f"cannot select {k} restarts from {n} candidates")
    rng = np.random.default_rng(0) if rng is None else rng
    finite = np.where(np.isfinite(values), values, -np.inf)
    top = int(np.argmax(finite))
    if k == 1:
        return np.array([top])
    rest = np.delete(np.arange(n), top)
    w = boltzmann_weights(values, temperature)[rest]
    if w.sum() <= 0 or np.count_nonzero(w) < k - 1:
        w = np.where(w > 0, w, 1e-300) if np.count_nonzero(w) else np.ones_like(w)
    w = w / w.sum()
    picked = rng.choice(rest, size=k - 1, replace=False, p=w)
    return np.concatenate([[top], picked])


def _power_of_two_scale(values):
    """``2**floor(log2(std))`` of the finite values, or 1.

    Dividing by a power of two is exact, so acquisitions that differ by such a
    factor produce bitwise-identical refinements.
    """
    v = values[np.isfinite(values)]
    sd = float(np.std(v)) if len(v) > 1 else 0.0
    if not sd > 0 or not np.isfinite(sd):
        return 1.0
    return float(2.0 ** np.floor(np.log2(sd)))


def _ascend(acq, domain, U0, max_iter, gtol, scale=1.0):
    """Refine all restarts jointly with L-BFGS-B in unit-cube coordinates.

    The restarts are stacked into one vector and the summed acquisition is
    maximized; the objective is separable, so each block follows its own
    ascent while every iteration costs one vectorized acquisition call.
    Each restart keeps its starting point if refinement did not improve it.
    The objective is divided by ``scale`` so that ``gtol`` is scale-free.
    """
    width = domain.width
    k, d = U0.shape

    def evaluate(U):
        f, g = acq.value_and_grad(domain.from_unit(U))
        return np.asarray(f, dtype=float), np.asarray(g, dtype=float) * width

    f0, G0 = evaluate(U0)
    failed = ~np.all(np.isfinite(G0), axis=1) | ~np.isfinite(f0)
    live = np.flatnonzero(~failed)
    U, f = U0.copy(), f0.copy()
    nit, converged = 0, False
    if len(live):
        m = len(live)

        def objective(u):
            fv, gv = evaluate(u.reshape(m, d))
            # Isolated points with an undefined gradient contribute no direction.
            return -float(np.sum(fv)) / scale, -np.nan_to_num(gv, nan=0.0).ravel() / scale

        res = minimize(
            objective,
            U0[live].ravel(),
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * (m * d),
            options={"maxiter": max_iter, "gtol": gtol, "ftol": 0.0},
        )
        Ue = np.clip(res.x.reshape(m, d), 0.0, 1.0)
        fe = np.asarray(acq.value(domain.from_unit(Ue)), dtype=float)
        better = np.isfinite(fe) & (fe > f0[live])
        U[live[better]] = Ue[better]
        f[live[better]] = fe[better]
        nit, converged = int(res.nit), bool(res.success)
    iters = np.where(failed, 0, nit)
    conv = np.where(failed, False, converged)
    return U, f, f0, iters, conv, failed


def maximize(acq, domain, seed, n_candidates=None, n_restarts=None, temperature=1.0,
             max_iter=200, gtol=1e-8):
    """Maximize ``acq`` (an object with ``value`` and ``value_and_grad``) over ``domain``.

    Defaults: ``200 d`` Sobol candidates and ``10 d`` restarts. The result is the
    best of all candidate values and all refined restart values. The gradient
    tolerance applies to the acquisition divided by a power of two near the
    spread of the candidate values.
    """
    d = domain.dim
    n_candidates = 200 * d if n_candidates is None else n_candidates
    n_restarts = min(10 * d if n_restarts is None else n_restarts, n_candidates)
    cands = sobol_candidates(domain, n_candidates, seed)
    vals = np.asarray(acq.value(cands), dtype=float)
    finite = np.where(np.isfinite(vals), vals, -np.inf)
    best_i = int(np.argmax(finite))
    best_x, best_v = cands[best_i].copy(), float(finite[best_i])

    rng = np.random.default_rng([seed, 2])
    chosen = select_restarts(cands, vals, n_restarts, temperature, rng)
    U0 = domain.to_unit(cands[chosen])
    U, f, f0, iters, conv, failed = _ascend(acq, domain, U0, max_iter, gtol, _power_of_two_scale(vals))
    X = domain.from_unit(U)
    X = np.clip(X, domain.lower, domain.upper)
    restarts = [
        Restart(cands[c].copy(), X[i].copy(), float(f0[i]), float(f[i]), int(iters[i]), bool(conv[i]), bool(failed[i]))
        for i, c in enumerate(chosen)
    ]
    for r in restarts:
        if not r.failed and r.value > best_v:
            best_x, best_v = r.end.copy(), r.value
    return OptimizeReport(
        x=best_x,
        value=best_v,
        candidate_best=float(finite[best_i]),
        n_candidates=n_candidates,
        restarts=restarts,
        fallback=bool(np.all(failed)),
    )
