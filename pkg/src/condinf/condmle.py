"""Estimation of the interest parameter from the proxy conditional likelihood.

For each candidate interest value the nuisance is first fitted by
Newton-Raphson at that value; the fitted member only serves as the
dominating density of the proxy, and since the conditioning statistic is
sufficient for the nuisance the resulting conditional log-likelihood does
not depend on it. The plug-in unconditional log-likelihood is reported next
to it for comparison; that one does depend on which likelihood root was
found.

Everything here is a deterministic function of the observed data.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .exceptions import CondInfError, FlatProfile, NewtonDiverged, NumericalError
from .families import mle_nuisance
from .proxy import log_proxy_likelihood

__all__ = ["ProfilePoint", "conditional_log_likelihood", "conditional_profile", "conditional_mle",
           "profile_to_csv"]


@dataclass(frozen=True)
class ProfilePoint:
    """One point of a profile; ``theta`` is the interest parameter in classical units."""

    theta: float
    eta_hat: float
    log_cond_lik: float
    log_uncond_lik: float
    nr_start: float
    flags: str = ""


def conditional_log_likelihood(model, data, k, theta, eta, **proxy_options) -> float:
    """Sum over the model's independent parts of the proxy log-likelihood of their first ``k`` coordinates.

    ``theta`` and ``eta`` are canonical; ``eta`` only fixes the dominating
    density.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    total = 0.0
    for fam, part in zip(model.conditional_parts(theta, eta), model.split(data)):
        u_total = float(np.sum(fam.statistic(part)))
        total += log_proxy_likelihood(fam, u_total, n, part[:k], **proxy_options)
    return total


def _check_k(k, n):
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n - 1, got k={k}, n={n}")


def _point(model, data, k, interest, nr_start, proxy_options):
    theta = model.interest_to_theta(interest)
    flags = []
    if getattr(model, "has_nuisance", True):
        try:
            eta = mle_nuisance(model, theta, data, nr_start)
        except NewtonDiverged:
            eta = math.nan
            flags.append("nuisance_mle_failed")
    else:
        eta = 0.0 if nr_start is None else float(nr_start)
    start = math.nan if nr_start is None else float(nr_start)
    if math.isnan(eta):
        return ProfilePoint(float(interest), eta, math.nan, math.nan, start, ";".join(flags))
    try:
        lc = conditional_log_likelihood(model, data, k, theta, eta, **proxy_options)
    except NumericalError as exc:
        lc = math.nan
        flags.append(type(exc).__name__)
    lu = model.loglik(theta, eta, data)
    if not math.isfinite(lu):
        flags.append("uncond_nonfinite")
    return ProfilePoint(float(interest), float(eta), float(lc), float(lu), start, ";".join(flags))


def conditional_profile(model, data, k, theta_grid, nr_start=None, **proxy_options) -> list[ProfilePoint]:
    """Conditional and plug-in unconditional log-likelihood over a grid of interest values.

    Parameters
    ----------
    model
        Two-parameter model, or one without nuisance (``has_nuisance = False``).
    data : array_like
        Observed sample.
    k : int
        Number of leading coordinates entering the proxy (``1 <= k <= n - 1``).
    theta_grid : sequence of float
        Interest values in classical units (for example the Gamma shape or
        the parabola variance).
    nr_start : float, optional
        Newton-Raphson start for the nuisance MLE at every grid point.

    Returns
    -------
    list of ProfilePoint
        In grid order. Points where the nuisance fit failed carry the flag
        ``"nuisance_mle_failed"`` and NaN likelihoods; the sweep continues.
    """
    data = np.asarray(data, dtype=float)
    _check_k(k, data.shape[0])
    if len(theta_grid) == 0:
        raise ValueError("theta_grid must be nonempty")
    return [_point(model, data, k, th, nr_start, proxy_options) for th in theta_grid]


def conditional_mle(model, data, k, search_interval, nr_start=None, grid_size=41, noise_tol=1e-8,
                    xtol=1e-6, **proxy_options):
    """Maximiser of the proxy conditional log-likelihood.

    The grid argmax over ``grid_size`` equispaced points of
    ``search_interval`` is refined by golden-section search on the
    bracket formed by its neighbours.

    Returns
    -------
    theta_hat : float
    profile : list of ProfilePoint
        The grid profile.

    Raises
    ------
    FlatProfile
        If the conditional log-likelihood varies by less than
        ``noise_tol * max(1, |median|)`` over the grid, i.e. the interest
        parameter does not enter the conditional law.
    """
    lo, hi = map(float, search_interval)
    if not lo < hi:
        raise ValueError("search_interval must satisfy lo < hi")
    grid = np.linspace(lo, hi, grid_size)
    profile = conditional_profile(model, data, k, grid, nr_start, **proxy_options)
    vals = np.array([p.log_cond_lik for p in profile])
    good = np.isfinite(vals)
    if good.sum() < 3:
        raise CondInfError("fewer than three finite profile values")
    spread = float(np.max(vals[good]) - np.min(vals[good]))
    if spread < noise_tol * max(1.0, abs(float(np.median(vals[good])))):
        raise FlatProfile(f"conditional profile varies by only {spread:.3g}; the interest parameter is "
                          "not identified by the conditional law")
    j = int(np.nanargmax(np.where(good, vals, -np.inf)))
    if j == 0 or j == grid_size - 1:
        return float(grid[j]), profile
    data = np.asarray(data, dtype=float)
    point_cache = {}

    def neg(th):
        p = point_cache.get(th)
        if p is None:
            p = point_cache[th] = _point(model, data, k, th, nr_start, proxy_options)
        return -p.log_cond_lik if math.isfinite(p.log_cond_lik) else math.inf

    res = optimize.minimize_scalar(neg, bracket=(grid[j - 1], grid[j], grid[j + 1]), method="golden",
                                   options={"xtol": xtol})
    theta_hat = float(res.x) if -res.fun >= vals[j] else float(grid[j])
    return theta_hat, profile


def profile_to_csv(profile) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "eta_hat", "log_cond_lik", "log_uncond_lik", "flags"])
    for p in profile:
        w.writerow([f"{p.theta:.16e}", f"{p.eta_hat:.16e}", f"{p.log_cond_lik:.16e}", f"{p.log_uncond_lik:.16e}",
                    p.flags])
    return buf.getvalue()
