"""Exact conditional laws used to check the proxy.

For i.i.d. exponentials given ``X_1 + ... + X_n = s`` the vector
``(X_1, ..., X_n) / s`` is uniform on the simplex, so ``X_1 / s`` is
``Beta(1, n - 1)`` and runs are spacings of sorted uniforms. For i.i.d.
``N(mu, sigma2)`` given the sum ``u``, ``X_1..X_k`` is multivariate normal
with mean ``u / n`` and covariance ``sigma2 (I - J / n)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

__all__ = [
    "exponential_x1_logpdf",
    "exponential_x1_cdf",
    "exponential_conditional_sample",
    "normal_conditional_loglik",
    "normal_conditional_sample",
    "empirical_tv",
    "exponential_x1_max_rel_error",
    "random_tilts",
    "cumulant_crosscheck",
]


def exponential_x1_logpdf(x, s, n):
    """``log[(n - 1) (1 - x/s)^(n - 2) / s]`` on ``0 < x < s``."""
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < s)
    xs = np.where(inside, x, 0.5 * s)
    lp = np.log(n - 1.0) + (n - 2.0) * np.log1p(-xs / s) - np.log(s)
    return np.where(inside, lp, -np.inf)


def exponential_x1_cdf(x, s, n):
    x = np.clip(np.asarray(x, dtype=float), 0.0, s)
    with np.errstate(divide="ignore"):
        return -np.expm1((n - 1.0) * np.log1p(-x / s))


def exponential_conditional_sample(s, n, k, rng, size=None):
    """Exact draws of ``X_1..X_k`` given ``sum X_i = s``: scaled spacings of sorted uniforms."""
    count = 1 if size is None else size
    u = np.sort(rng.random((count, n - 1)), axis=1)
    edges = np.concatenate([np.zeros((count, 1)), u, np.ones((count, 1))], axis=1)
    out = s * np.diff(edges, axis=1)[:, :k]
    return out[0] if size is None else out


def normal_conditional_loglik(x, u_total, n, var):
    """Exact log-density of ``X_1..X_k`` given the sum of ``n`` i.i.d. normals with variance ``var``."""
    x = np.asarray(x, dtype=float)
    k = x.shape[-1]
    cov = var * (np.eye(k) - np.full((k, k), 1.0 / n))
    return stats.multivariate_normal(mean=np.full(k, u_total / n), cov=cov).logpdf(x)


def normal_conditional_sample(u_total, n, k, var, rng, size=None):
    """Exact draws by centring a full normal sample and shifting it to the required sum."""
    count = 1 if size is None else size
    z = rng.normal(0.0, np.sqrt(var), size=(count, n))
    z = z - z.mean(axis=1, keepdims=True) + u_total / n
    out = z[:, :k]
    return out[0] if size is None else out


def empirical_tv(a, b, bins=10, cdf=None):
    """Total variation between two samples after binning into equiprobable cells.

    Cell edges are quantiles of ``cdf`` (a frozen distribution's ``ppf``
    is used if given via ``cdf.ppf``) or, by default, of the pooled sample.
    With ``N`` draws per sample the estimate has a noise floor of order
    ``sqrt(bins / N)``, which is why the cell count is kept small.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    q = np.linspace(0.0, 1.0, bins + 1)[1:-1]
    edges = cdf.ppf(q) if cdf is not None else np.quantile(np.concatenate([a, b]), q)
    ia = np.bincount(np.searchsorted(edges, a), minlength=bins) / a.size
    ib = np.bincount(np.searchsorted(edges, b), minlength=bins) / b.size
    return 0.5 * float(np.abs(ia - ib).sum())


def exponential_x1_max_rel_error(n, s=None, central=0.9, points=201, family=None):
    """Largest relative error of the proxy density of ``X_1`` against the exact one.

    Evaluated on ``points`` quantiles of the exact law spanning its central
    ``central`` probability region; ``s`` defaults to ``n``.
    """
    from .families import Exponential
    from .proxy import log_proxy_likelihood

    s = float(n) if s is None else float(s)
    fam = Exponential(1.0) if family is None else family
    tail = 0.5 * (1.0 - central)
    x = s * stats.beta(1, n - 1).ppf(np.linspace(tail, 1.0 - tail, points))
    proxy = np.array([log_proxy_likelihood(fam, s, n, [xi]) for xi in x])
    return float(np.max(np.abs(np.expm1(proxy - exponential_x1_logpdf(x, s, n)))))


def random_tilts(family, rng, size=20):
    """Tilt values spread over a working part of the MGF domain.

    The width is measured in units of ``1 / sd(u)``; finite domain ends are
    kept at a margin of half a unit (or half the distance to 0).
    """
    lo, hi = family.mgf_domain()
    r = 1.0 / float(np.sqrt(family.cumulants(0.0)[1]))
    v = rng.random(size)
    if math.isfinite(hi):
        top = hi - 0.5 * min(r, abs(hi))
        bottom = max(hi - 3.0 * r, lo + 0.5 * r) if math.isfinite(lo) else hi - 3.0 * r
        return bottom + (top - bottom) * v
    if math.isfinite(lo):
        bottom = lo + 0.5 * min(r, abs(lo))
        return bottom + (lo + 3.0 * r - bottom) * v
    return r * (4.0 * v - 2.0)


def cumulant_crosscheck(family, t_values):
    """Worst error of the analytic cumulants against finite differences of ``K_U``.

    The error of the ``j``-th cumulant is measured relative to
    ``max(|analytic|, s2(t)^(j/2))``, so that vanishing cumulants (normal
    third cumulant) are compared on their natural scale.
    """
    from .numerics import differentiate

    worst = 0.0
    for t in t_values:
        m, s2, mu3 = (float(v) for v in family.cumulants(t))
        for order, exact in ((1, m), (2, s2), (3, mu3)):
            fd = differentiate(lambda z: float(family.log_mgf(z)), float(t), order=order)
            scale = max(abs(exact), s2 ** (order / 2.0))
            worst = max(worst, abs(fd - exact) / scale)
    return worst
