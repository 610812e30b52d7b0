"""Exact Gaussian process regression with fixed hyperparameters.

The surrogate follows the scikit-learn estimator conventions (``fit`` /
``predict`` / ``get_params``) and additionally exposes the posterior mean and
standard deviation together with their input gradients, which the acquisition
functions need. Random Fourier feature paths give cheap prior (and, through
pathwise conditioning, posterior) function draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

KERNEL_FAMILIES = ("matern32", "matern52", "squared-exponential")

# Smoothness parameter of each Matérn family; None for the Gaussian kernel.
_NU = {"matern32": 1.5, "matern52": 2.5, "squared-exponential": None}


class NumericalError(ArithmeticError):
    """Covariance factorization failed even after jitter escalation."""


@dataclass(frozen=True)
class AmplitudeBump:
    """Input-dependent amplitude ``s(x) = baseline + height * exp(-|x-c|^2 / 2w^2)``.

    Multiplying a stationary kernel by ``s(x) s(x')`` yields the non-stationary
    prior used by the bump counterexample.
    """

    baseline: float = 0.1
    height: float = 10.0
    width: float = 1.0
    center: float = 0.0

    def __post_init__(self):
        if self.baseline <= 0 or self.height < 0 or self.width <= 0:
            raise ValueError("AmplitudeBump needs baseline > 0, height >= 0, width > 0")

    def __call__(self, X):
        X = np.atleast_2d(X)
        sq = np.sum((X - self.center) ** 2, axis=1)
        return self.baseline + self.height * np.exp(-0.5 * sq / self.width**2)

    def gradient(self, X):
        X = np.atleast_2d(X)
        diff = X - self.center
        bump = self.height * np.exp(-0.5 * np.sum(diff**2, axis=1) / self.width**2)
        return -(bump / self.width**2)[:, None] * diff


@dataclass(frozen=True)
class KernelSpec:
    """Stationary covariance ``amplitude**2 * k(r / lengthscale)``.

    ``jitter`` is relative: ``jitter * amplitude**2`` is added to the diagonal
    of training covariances. ``scale`` optionally turns the kernel into
    ``s(x) s(x') k(x, x')``.
    """

    family: str = "matern52"
    lengthscale: float = 0.1
    amplitude: float = 1.0
    jitter: float = 1e-8
    scale: Optional[AmplitudeBump] = None

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {KERNEL_FAMILIES}")
        if not self.lengthscale > 0:
            raise ValueError("lengthscale must be positive")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if not self.jitter > 0:
            raise ValueError("jitter must be positive")

    @property
    def stationary(self) -> bool:
        return self.scale is None

    def _radial(self, r):
        ell = self.lengthscale
        if self.family == "matern52":
            u = np.sqrt(5.0) * r / ell
            return (1.0 + u + u**2 / 3.0) * np.exp(-u)
        if self.family == "matern32":
            u = np.sqrt(3.0) * r / ell
            return (1.0 + u) * np.exp(-u)
        return np.exp(-0.5 * (r / ell) ** 2)

    def _radial_slope(self, r):
        # (dk/dr) / r, finite at r = 0 for every supported family.
        ell = self.lengthscale
        if self.family == "matern52":
            u = np.sqrt(5.0) * r / ell
            return -(5.0 / (3.0 * ell**2)) * (1.0 + u) * np.exp(-u)
        if self.family == "matern32":
            u = np.sqrt(3.0) * r / ell
            return -(3.0 / ell**2) * np.exp(-u)
        return -np.exp(-0.5 * (r / ell) ** 2) / ell**2

    @staticmethod
    def _distances(X1, X2):
        sq = (
            np.sum(X1**2, axis=1)[:, None]
            + np.sum(X2**2, axis=1)[None, :]
            - 2.0 * X1 @ X2.T
        )
        return np.sqrt(np.maximum(sq, 0.0))

    def __call__(self, X1, X2=None):
        X1 = np.atleast_2d(np.asarray(X1, dtype=float))
        X2 = X1 if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
        K = self.amplitude**2 * self._radial(self._distances(X1, X2))
        if self.scale is not None:
            K = K * self.scale(X1)[:, None] * self.scale(X2)[None, :]
        return K

    def diag(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        v = np.full(X.shape[0], self.amplitude**2)
        if self.scale is not None:
            v = v * self.scale(X) ** 2
        return v

    def diag_gradient(self, X):
        """Gradient of the prior variance ``k(x, x)`` with respect to ``x``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.scale is None:
            return np.zeros_like(X)
        s = self.scale(X)
        return 2.0 * self.amplitude**2 * s[:, None] * self.scale.gradient(X)

    def gradient(self, X, Z):
        """Derivative of ``k(x_i, z_j)`` with respect to ``x_i``, shape ``(m, n, d)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        diff = X[:, None, :] - Z[None, :, :]
        r = np.sqrt(np.sum(diff**2, axis=2))
        dK = self.amplitude**2 * self._radial_slope(r)[:, :, None] * diff
        if self.scale is not None:
            sx, sz = self.scale(X), self.scale(Z)
            base = self.amplitude**2 * self._radial(r)
            dK = (
                dK * sx[:, None, None] * sz[None, :, None]
                + base[:, :, None] * self.scale.gradient(X)[:, None, :] * sz[None, :, None]
            )
        return dK

    def sample_frequencies(self, rng, n_features, dim):
        """Draw frequencies from the normalized spectral density.

        Squared-exponential: ``w ~ N(0, I / l^2)``. Matérn-nu: a multivariate
        Student-t with ``2 nu`` degrees of freedom and scale ``I / l^2``, drawn as
        ``z / l * sqrt(2 nu / g)`` with ``g ~ chi2(2 nu)``.
        """
        z = rng.standard_normal((n_features, dim))
        nu = _NU[self.family]
        if nu is None:
            return z / self.lengthscale
        g = rng.chisquare(2.0 * nu, size=(n_features, 1))
        return z / self.lengthscale * np.sqrt(2.0 * nu / g)


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    outputs: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.outputs, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(len(y), -1) if len(y) else X.reshape(0, max(X.size, 1))
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} outputs")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "outputs", y)

    @classmethod
    def empty(cls, dim, noise_variance=0.0):
        return cls(np.zeros((0, dim)), np.zeros(0), noise_variance)

    def __len__(self):
        return self.outputs.shape[0]


class GaussianProcess(RegressorMixin, BaseEstimator):
    """Zero-mean GP regressor with fixed kernel hyperparameters.

    Parameters
    ----------
    kernel : KernelSpec, default=None
        Covariance model; ``KernelSpec()`` (Matérn-5/2) when omitted.
    noise_variance : float, default=0.0
        Gaussian observation noise variance, on the (possibly standardized)
        output scale.
    standardize : bool, default=False
        Standardize outputs to zero mean and unit variance before conditioning.
    max_jitter : float, default=1e-4
        Largest relative jitter tried before giving up on the factorization.
    """

    def __init__(self, kernel=None, noise_variance=0.0, standardize=False, max_jitter=1e-4):
        self.kernel = kernel
        self.noise_variance = noise_variance
        self.standardize = standardize
        self.max_jitter = max_jitter

    def fit(self, X, y):
        X = check_array(X, ensure_min_samples=0, ensure_2d=True)
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} outputs")
        if not np.all(np.isfinite(y)):
            raise ValueError("outputs must be finite")
        kernel = KernelSpec() if self.kernel is None else self.kernel
        self.kernel_ = kernel
        self.n_features_in_ = X.shape[1]
        self.X_train_ = X
        self.y_train_ = y

        if self.standardize and len(y) > 0:
            self.y_mean_ = float(np.mean(y))
            std = float(np.std(y)) if len(y) > 1 else 0.0
            self.y_scale_ = std if std > 0 else 1.0
        else:
            self.y_mean_, self.y_scale_ = 0.0, 1.0

        n = X.shape[0]
        if n == 0:
            self.L_ = np.zeros((0, 0))
            self.alpha_ = np.zeros(0)
            self.jitter_ = kernel.jitter
            return self

        K = kernel(X)
        base = kernel.amplitude**2
        jitter = kernel.jitter
        while True:
            try:
                self.L_ = np.linalg.cholesky(
                    K + (self.noise_variance + jitter * base) * np.eye(n)
                )
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
                if jitter > self.max_jitter * (1 + 1e-9):
                    raise NumericalError(
                        f"covariance not positive definite with relative jitter up to {self.max_jitter:g}"
                    ) from None
        self.jitter_ = jitter
        resid = (y - self.y_mean_) / self.y_scale_
        self.alpha_ = cho_solve((self.L_, True), resid)
        return self

    def _check_fitted(self):
        if not hasattr(self, "alpha_"):
            raise NotFittedError("GaussianProcess is not fitted yet; call fit first")

    def _check_X(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def mean_std(self, X):
        """Posterior mean and standard deviation at the rows of ``X``."""
        self._check_fitted()
        X = self._check_X(X)
        k = self.kernel_
        prior_var = k.diag(X)
        if len(self.alpha_) == 0:
            mu = np.zeros(X.shape[0])
            var = prior_var
        else:
            Ks = k(X, self.X_train_)
            mu = Ks @ self.alpha_
            V = solve_triangular(self.L_, Ks.T, lower=True)
            var = prior_var - np.sum(V**2, axis=0)
        sigma = np.sqrt(np.maximum(var, 0.0))
        return self.y_mean_ + self.y_scale_ * mu, self.y_scale_ * sigma

    def predict(self, X, return_std=False):
        mu, sigma = self.mean_std(X)
        return (mu, sigma) if return_std else mu

    def mean_std_gradients(self, X, return_values=False):
        """Input gradients of the posterior mean and standard deviation.

        Rows where the posterior variance is numerically zero (at most
        ``1e-12`` times the prior variance) get ``nan`` standard-deviation
        gradients: the square root is not differentiable there.
        """
        self._check_fitted()
        X = self._check_X(X)
        k = self.kernel_
        prior_var = k.diag(X)
        dprior = k.diag_gradient(X)
        if len(self.alpha_) == 0:
            mu = np.zeros(X.shape[0])
            var = prior_var
            dmu = np.zeros_like(X)
            dvar = dprior
        else:
            Ks = k(X, self.X_train_)
            dK = k.gradient(X, self.X_train_)
            mu = Ks @ self.alpha_
            dmu = np.einsum("mnd,n->md", dK, self.alpha_)
            V = solve_triangular(self.L_, Ks.T, lower=True)
            var = prior_var - np.sum(V**2, axis=0)
            W = solve_triangular(self.L_.T, V, lower=False)
            dvar = dprior - 2.0 * np.einsum("mnd,nm->md", dK, W)
        var = np.maximum(var, 0.0)
        sigma = np.sqrt(var)
        degenerate = var <= 1e-12 * prior_var
        with np.errstate(divide="ignore", invalid="ignore"):
            dsigma = dvar / (2.0 * sigma[:, None])
        dsigma[degenerate] = np.nan
        s = self.y_scale_
        if return_values:
            return self.y_mean_ + s * mu, s * sigma, s * dmu, s * dsigma
        return s * dmu, s * dsigma

    def sample_path(self, n_features, seed):
        """Posterior function draw by pathwise conditioning of an RFF prior path."""
        self._check_fitted()
        prior = sample_prior_path(self.kernel_, n_features, seed, self.n_features_in_)
        return ConditionedPath(prior, self, seed)


def fit_posterior(kernel, data, standardize=False):
    """Condition ``kernel`` on ``data``; an empty dataset gives the prior."""
    return GaussianProcess(
        kernel=kernel, noise_variance=data.noise_variance, standardize=standardize
    ).fit(data.inputs, data.outputs)


def mean_std(posterior, x):
    mu, sigma = posterior.mean_std(np.atleast_2d(x))
    return float(mu[0]), float(sigma[0])


def mean_std_gradients(posterior, x):
    dmu, dsigma = posterior.mean_std_gradients(np.atleast_2d(x))
    return dmu[0], dsigma[0]


def fit_log_cost_posterior(kernel, inputs, costs, noise_variance=0.0):
    """GP over log-costs; the returned model's fields are ``mu_lnc``, ``sigma_lnc``."""
    costs = np.asarray(costs, dtype=float).ravel()
    if np.any(~(costs > 0)):
        raise ValueError("observed costs must be strictly positive to take logarithms")
    inputs = np.asarray(inputs, dtype=float)
    if inputs.size == 0:
        inputs = inputs.reshape(0, inputs.shape[-1] if inputs.ndim == 2 else 1)
    return fit_posterior(kernel, Dataset(inputs, np.log(costs), noise_variance))


@dataclass(frozen=True)
class FourierFeaturePath:
    """``f(x) = a s(x) sqrt(2/m) sum_i w_i cos(omega_i . x + b_i)``."""

    frequencies: np.ndarray
    phases: np.ndarray
    weights: np.ndarray
    amplitude: float
    scale: Optional[AmplitudeBump] = None

    @property
    def n_features(self):
        return self.phases.shape[0]

    def _coef(self):
        return self.amplitude * np.sqrt(2.0 / self.n_features) * self.weights

    def __call__(self, X, chunk=8192):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        coef = self._coef()
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], chunk):
            proj = X[start:start + chunk] @ self.frequencies.T + self.phases
            out[start:start + chunk] = np.cos(proj) @ coef
        if self.scale is not None:
            out = out * self.scale(X)
        return out

    def gradient(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        coef = self._coef()
        proj = X @ self.frequencies.T + self.phases
        grad = -(np.sin(proj) * coef) @ self.frequencies
        if self.scale is not None:
            base = np.cos(proj) @ coef
            grad = grad * self.scale(X)[:, None] + base[:, None] * self.scale.gradient(X)
        return grad


def sample_prior_path(kernel, n_features, seed, dim=1):
    if n_features < 1:
        raise ValueError("n_features must be at least 1")
    rng = np.random.default_rng(seed)
    return FourierFeaturePath(
        frequencies=kernel.sample_frequencies(rng, n_features, dim),
        phases=rng.uniform(0.0, 2.0 * np.pi, n_features),
        weights=rng.standard_normal(n_features),
        amplitude=kernel.amplitude,
        scale=kernel.scale,
    )


@dataclass(frozen=True)
class ConditionedPath:
    """Prior path corrected by ``k(x, X) K^-1 (y - f(X) - eps)``."""

    prior: FourierFeaturePath
    posterior: GaussianProcess
    seed: int = 0
    _update: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gp = self.posterior
        if len(gp.alpha_) == 0:
            update = np.zeros(0)
        else:
            rng = np.random.default_rng([self.seed, 1])
            noise = np.sqrt(gp.noise_variance) * rng.standard_normal(len(gp.y_train_))
            resid = (gp.y_train_ - gp.y_mean_) / gp.y_scale_ - self.prior(gp.X_train_) - noise
            update = cho_solve((gp.L_, True), resid)
        object.__setattr__(self, "_update", update)

    def __call__(self, X):
        gp = self.posterior
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f = self.prior(X)
        if len(self._update):
            f = f + gp.kernel_(X, gp.X_train_) @ self._update
        return gp.y_mean_ + gp.y_scale_ * f

    def gradient(self, X):
        gp = self.posterior
        X = np.atleast_2d(np.asarray(X, dtype=float))
        g = self.prior.gradient(X)
        if len(self._update):
            g = g + np.einsum("mnd,n->md", gp.kernel_.gradient(X, gp.X_train_), self._update)
        return gp.y_scale_ * g
