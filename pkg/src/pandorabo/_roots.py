"""Expected improvement primitives and the bisection solver for fair prices.

Both the discrete Gittins index and the PBGI acquisition solve
``EI(g) = cost`` for ``g`` with the routines in this module.
"""

import numpy as np
from scipy.special import erfcx, ndtr

_SQRT_HALF_PI = np.sqrt(0.5 * np.pi)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

N_BISECTION = 100


def norm_pdf(z):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(z))


def norm_cdf(z):
    return ndtr(z)


def h(z):
    """Standardized expected improvement ``phi(z) + z Phi(z)``.

    For negative ``z`` the Mills-ratio form ``phi(z) (1 - |z| R(|z|))`` is used,
    which keeps relative accuracy deep in the lower tail.
    """
    z = np.asarray(z, dtype=float)
    zn = np.minimum(z, 0.0)
    neg = norm_pdf(zn) * (1.0 + zn * _SQRT_HALF_PI * erfcx(-zn / np.sqrt(2.0)))
    pos = norm_pdf(z) + z * ndtr(z)
    return np.maximum(np.where(z < 0, neg, pos), 0.0)


def gaussian_ei(mu, sigma, y):
    """``E max(0, N(mu, sigma^2) - y)``, with the ``sigma = 0`` limit ``max(0, mu - y)``."""
    mu, sigma, y = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma, y)))
    shape = mu.shape
    mu, sigma, y = mu.ravel(), sigma.ravel(), y.ravel()
    out = np.maximum(mu - y, 0.0)
    pos = sigma > 0
    if np.any(pos):
        s = sigma[pos]
        out[pos] = s * h((mu[pos] - y[pos]) / s)
    return out.reshape(shape)


def finite_ei(values, probs, y):
    """``sum_i p_i max(0, v_i - y)`` for every entry of ``y``."""
    y = np.asarray(y, dtype=float)
    return np.sum(probs * np.maximum(values - y[..., None], 0.0), axis=-1)


def bisect_decreasing(func, target, lo, hi, n_iter=N_BISECTION):
    """Solve ``func(g) = target`` elementwise for strictly decreasing ``func``.

    ``[lo, hi]`` is an initial guess; each side is pushed outward, doubling the
    step, until ``func(lo) >= target >= func(hi)``. Then ``n_iter`` bisection
    halvings are applied.
    """
    target = np.asarray(target, dtype=float)
    lo = np.array(np.broadcast_to(lo, target.shape), dtype=float)
    hi = np.array(np.broadcast_to(hi, target.shape), dtype=float)
    step = np.maximum(hi - lo, 1e-12 * np.maximum(1.0, np.abs(lo)))
    for _ in range(2000):
        bad = func(lo) < target
        if not bad.any():
            break
        lo = np.where(bad, lo - step, lo)
        step = np.where(bad, 2.0 * step, step)
    else:
        raise ArithmeticError("failed to bracket the root from below")
    step = np.maximum(hi - lo, 1e-12 * np.maximum(1.0, np.abs(hi)))
    for _ in range(2000):
        bad = func(hi) > target
        if not bad.any():
            break
        hi = np.where(bad, hi + step, hi)
        step = np.where(bad, 2.0 * step, step)
    else:
        raise ArithmeticError("failed to bracket the root from above")
    for i in range(n_iter):
        mid = 0.5 * (lo + hi)
        # Once no bracket can shrink further, the remaining halvings are no-ops.
        if i % 8 == 7 and np.all((mid == lo) | (mid == hi)):
            break
        above = func(mid) > target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return 0.5 * (lo + hi)


def gaussian_fair_price(mu, sigma, cost, n_iter=N_BISECTION):
    """Solve ``EI_{N(mu, sigma^2)}(g) = cost`` for ``g`` (elementwise).

    ``sigma = 0`` uses the exact linear tail ``g = mu - cost``; ``cost = 0``
    gives ``+inf`` when ``sigma > 0``.
    """
    mu, sigma, cost = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu, sigma, cost)))
    shape = mu.shape
    mu, sigma, cost = mu.ravel(), sigma.ravel(), cost.ravel()
    out = mu - cost
    pos = sigma > 0
    if np.any(pos):
        m, s, c = mu[pos], sigma[pos], cost[pos]
        g = np.full(m.shape, np.inf)
        live = c > 0
        if np.any(live):
            m, s, c = m[live], s[live], c[live]
            # EI(g) = s h((m - g) / s): bisect on z = (m - g) / s, then map back.
            z = bisect_decreasing(lambda u: -h(u), -c / s, -1.0, 1.0, n_iter=n_iter)
            g[live] = m - s * z
        out[pos] = g
    return out.reshape(shape)
