"""Acquisition functions over a Gaussian process posterior.

Every function accepts one point (1-D array, returns a float) or a batch of
rows (2-D array, returns an array). The ``*Acquisition`` classes bundle value
and gradient for the optimizer; rows whose gradient is undefined (posterior
standard deviation numerically zero) carry ``nan`` gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import erfcx

from ._roots import gaussian_ei, gaussian_fair_price, norm_cdf, norm_pdf

DEFAULT_LAMBDA = 1e-4
DEFAULT_DELTA = 0.1
UCB_SCALE_DOWN = 5.0


class UndefinedGradient(ArithmeticError):
    """The acquisition is not differentiable at the requested point."""


@dataclass(frozen=True)
class UniformCost:
    value: float = 1.0

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("uniform cost must be positive")

    def cost(self, X):
        return np.full(np.atleast_2d(X).shape[0], float(self.value))

    def cost_and_gradient(self, X):
        X = np.atleast_2d(X)
        return self.cost(X), np.zeros_like(X, dtype=float)


@dataclass(frozen=True)
class KnownCost:
    """Deterministic cost ``func(X) -> (n,)`` with gradient ``grad(X) -> (n, d)``."""

    func: Callable
    grad: Optional[Callable] = None

    def cost(self, X):
        c = np.asarray(self.func(np.atleast_2d(X)), dtype=float)
        if np.any(~(c > 0)):
            raise ValueError("cost function returned a nonpositive value")
        return c

    def cost_and_gradient(self, X):
        X = np.atleast_2d(X)
        if self.grad is None:
            raise UndefinedGradient("known cost model has no gradient")
        return self.cost(X), np.asarray(self.grad(X), dtype=float)


@dataclass(frozen=True)
class UnknownCost:
    """Log-cost GP; the effective cost is the log-normal mean ``exp(mu + sigma^2 / 2)``."""

    log_posterior: object

    def fields(self, X):
        return self.log_posterior.mean_std(np.atleast_2d(X))

    def cost(self, X):
        mu, sigma = self.fields(X)
        return np.exp(mu + 0.5 * sigma**2)

    def cost_and_gradient(self, X):
        mu, sigma, dmu, dsigma = self.log_posterior.mean_std_gradients(
            np.atleast_2d(X), return_values=True
        )
        c = np.exp(mu + 0.5 * sigma**2)
        # sigma * dsigma is half the variance gradient, which vanishes where sigma does.
        sds = np.where(sigma[:, None] > 0, sigma[:, None] * dsigma, 0.0)
        sds = np.nan_to_num(sds, nan=0.0)
        return c, c[:, None] * (dmu + sds)


def lognormal_mean(mu_lnc, sigma_lnc):
    return np.exp(np.asarray(mu_lnc) + 0.5 * np.square(sigma_lnc))


@dataclass(frozen=True)
class AcquisitionContext:
    """Everything an acquisition reads at one step."""

    posterior: object
    incumbent: float
    cost_model: object = UniformCost()
    lam: float = DEFAULT_LAMBDA
    t: int = 1
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.t < 1:
            raise ValueError("step index t starts at 1")

    def with_lambda(self, lam):
        return replace(self, lam=lam)


def _batch(x):
    x = np.asarray(x, dtype=float)
    return np.atleast_2d(x), x.ndim == 1


def _out(values, single):
    return float(values[0]) if single else values


def ei(ctx, x):
    X, single = _batch(x)
    mu, sigma = ctx.posterior.mean_std(X)
    return _out(gaussian_ei(mu, sigma, ctx.incumbent), single)


def eipc(ctx, x):
    X, single = _batch(x)
    mu, sigma = ctx.posterior.mean_std(X)
    cost = ctx.cost_model.cost(X)
    if np.any(~(cost > 0)):
        raise ValueError("EIPC needs strictly positive costs")
    return _out(gaussian_ei(mu, sigma, ctx.incumbent) / cost, single)


def ucb_beta(t, dim, delta=DEFAULT_DELTA):
    """``beta_t = 2 log(d t^2 pi^2 / (6 delta))``."""
    return 2.0 * math.log(dim * t**2 * math.pi**2 / (6.0 * delta))


def ucb_coefficient(t, dim, delta=DEFAULT_DELTA):
    return math.sqrt(ucb_beta(t, dim, delta) / UCB_SCALE_DOWN)


def ucb(ctx, x):
    X, single = _batch(x)
    mu, sigma = ctx.posterior.mean_std(X)
    return _out(mu + ucb_coefficient(ctx.t, X.shape[1], ctx.delta) * sigma, single)


def _pbgi_values(mu, sigma, lam_cost):
    return gaussian_fair_price(mu, sigma, lam_cost)


def pbgi(ctx, x):
    """Solve ``EI(x; g) = lam * cost(x)`` for ``g``; the incumbent is not used."""
    X, single = _batch(x)
    mu, sigma = ctx.posterior.mean_std(X)
    lam_cost = ctx.lam * ctx.cost_model.cost(X)
    return _out(_pbgi_values(mu, sigma, lam_cost), single)


def pbgi_u(ctx, x):
    if not isinstance(ctx.cost_model, UnknownCost):
        raise TypeError("pbgi_u needs an unknown (log-GP) cost model")
    return pbgi(ctx, x)


def _phi_over_Phi(z):
    # phi(z) / Phi(z) without underflow in the lower tail.
    z = np.asarray(z, dtype=float)
    return np.sqrt(2.0 / np.pi) / erfcx(-z / np.sqrt(2.0))


def _pbgi_value_and_grad(ctx, X):
    mu, sigma, dmu, dsigma = ctx.posterior.mean_std_gradients(X, return_values=True)
    cost, dcost = ctx.cost_model.cost_and_gradient(X)
    lam_cost = ctx.lam * cost
    g = _pbgi_values(mu, sigma, lam_cost)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (mu - g) / sigma
        ratio = _phi_over_Phi(z)
        inv_Phi = 1.0 / norm_cdf(z)
    grad = dmu + ratio[:, None] * dsigma - ctx.lam * inv_Phi[:, None] * dcost
    bad = ~(sigma > 0)
    grad[bad] = np.nan
    return g, grad


def pbgi_grad(ctx, x):
    """``grad mu + (phi(z) grad sigma - lam grad c) / Phi(z)`` with ``z = (mu - g) / sigma``."""
    X, single = _batch(x)
    _, grad = _pbgi_value_and_grad(ctx, X)
    if np.any(np.isnan(grad)):
        raise UndefinedGradient("PBGI gradient undefined where the posterior std is numerically zero")
    return grad[0] if single else grad


def thompson_objective(path, x):
    X, single = _batch(x)
    return _out(path(X), single)


@dataclass(frozen=True)
class PbgiDecayState:
    lam: float
    beta: float = 0.5
    lam_initial: Optional[float] = None
    n_triggers: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("decay factor must lie in (0, 1)")
        if self.lam_initial is None:
            object.__setattr__(self, "lam_initial", self.lam)


def pbgi_d_update(state, max_acq_value, incumbent):
    """Shrink lambda by ``beta`` when the stopping rule fires (``incumbent >= max acquisition``)."""
    if incumbent >= max_acq_value:
        return replace(state, lam=state.lam * state.beta, n_triggers=state.n_triggers + 1)
    return state


class EIAcquisition:
    def __init__(self, ctx):
        self.ctx = ctx

    def value(self, X):
        return ei(self.ctx, np.atleast_2d(X))

    def value_and_grad(self, X):
        X = np.atleast_2d(X)
        mu, sigma, dmu, dsigma = self.ctx.posterior.mean_std_gradients(X, return_values=True)
        vals = gaussian_ei(mu, sigma, self.ctx.incumbent)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (mu - self.ctx.incumbent) / sigma
        grad = norm_cdf(z)[:, None] * dmu + norm_pdf(z)[:, None] * dsigma
        grad[~(sigma > 0)] = np.nan
        return vals, grad


class EIPCAcquisition(EIAcquisition):
    def value(self, X):
        return eipc(self.ctx, np.atleast_2d(X))

    def value_and_grad(self, X):
        X = np.atleast_2d(X)
        e, de = super().value_and_grad(X)
        c, dc = self.ctx.cost_model.cost_and_gradient(X)
        return e / c, (de * c[:, None] - e[:, None] * dc) / c[:, None] ** 2


class UCBAcquisition:
    def __init__(self, ctx):
        self.ctx = ctx

    def value(self, X):
        return ucb(self.ctx, np.atleast_2d(X))

    def value_and_grad(self, X):
        X = np.atleast_2d(X)
        mu, sigma, dmu, dsigma = self.ctx.posterior.mean_std_gradients(X, return_values=True)
        coef = ucb_coefficient(self.ctx.t, X.shape[1], self.ctx.delta)
        return mu + coef * sigma, dmu + coef * dsigma


class PBGIAcquisition:
    """PBGI; with an ``UnknownCost`` model this is the unknown-cost variant."""

    def __init__(self, ctx):
        self.ctx = ctx

    def value(self, X):
        return pbgi(self.ctx, np.atleast_2d(X))

    def value_and_grad(self, X):
        return _pbgi_value_and_grad(self.ctx, np.atleast_2d(X))


class ThompsonAcquisition:
    def __init__(self, path):
        self.path = path

    def value(self, X):
        return self.path(np.atleast_2d(X))

    def value_and_grad(self, X):
        X = np.atleast_2d(X)
        return self.path(X), self.path.gradient(X)
