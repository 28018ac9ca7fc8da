"""Rao-Blackwellisation by averaging an estimator over co-sufficient samples.

Given an estimator ``theta_hat(X_1..X_k)`` and the observed value of a
sufficient statistic ``U_{1,n}``, :func:`rao_blackwellise` returns the Monte
Carlo estimate of ``E[theta_hat | U_{1,n}]`` obtained from runs drawn from
the proxy. :func:`run_variance_study` compares the spread of the raw and
averaged estimators across simulated datasets for several run lengths.
"""

from __future__ import annotations

import csv
import functools
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .families import TiltableFamily
from .proxy import sample_proxy

__all__ = [
    "EstimatorSpec",
    "RBRow",
    "RBStudyReport",
    "rao_blackwellise",
    "run_variance_study",
    "mean_estimator",
    "MeanEstimatorFamily",
    "jackknife_variance_se",
]


@dataclass(frozen=True)
class EstimatorSpec:
    """An estimator of arity ``k``.

    ``fn`` maps an array whose last axis has length ``k`` to an array of
    estimates over the leading axes.
    """

    arity: int
    fn: Callable[[np.ndarray], np.ndarray]
    label: str = ""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.arity:
            raise ValueError(f"estimator {self.label!r} expects {self.arity} coordinates, got {x.shape[-1]}")
        return self.fn(x)


@dataclass(frozen=True)
class _ScaledMean:
    k: int
    divisor: float

    def __call__(self, x):
        return np.sum(x, axis=-1) / (self.k * self.divisor)


def mean_estimator(k: int, divisor: float = 1.0) -> EstimatorSpec:
    """``(x_1 + ... + x_k) / (k * divisor)``; with ``divisor = r_T`` an unbiased scale estimate for Gamma(r_T, theta)."""
    return EstimatorSpec(k, _ScaledMean(k, float(divisor)), f"mean{k}")


@dataclass(frozen=True)
class MeanEstimatorFamily:
    """Picklable ``k -> mean_estimator(k, divisor)``."""

    divisor: float = 1.0

    def __call__(self, k):
        return mean_estimator(k, self.divisor)


def _shifted_mean(v, axis=-1):
    # Anchored at the first entry: exact for constant inputs and more
    # accurate than a plain mean when |mean| is large relative to the spread.
    v = np.asarray(v, dtype=float)
    ref = np.take(v, [0], axis=axis)
    return np.squeeze(ref, axis=axis) + np.mean(v - ref, axis=axis)


def rao_blackwellise(est: EstimatorSpec, family: TiltableFamily, u_total: float, n: int, inner_reps: int, rng,
                     return_aborts: bool = False, **proxy_options):
    """Monte Carlo estimate of ``E[est(X_1..X_k) | U_{1,n} = u_total]``.

    Parameters
    ----------
    est : EstimatorSpec
    family : TiltableFamily
        Dominating density ``p_{X, theta*}`` of the proxy.
    u_total : float
    n : int
    inner_reps : int
        Number of proxy runs averaged, at least 1.
    rng : numpy.random.Generator
    return_aborts : bool
        Also return the number of runs that had to be redrawn.
    **proxy_options
        Forwarded to :func:`condinf.proxy.sample_proxy`.
    """
    if inner_reps < 1:
        raise ValueError("inner_reps must be at least 1")
    draw = sample_proxy(family, u_total, n, est.arity, rng, size=inner_reps, **proxy_options)
    value = float(_shifted_mean(est(draw.paths)))
    return (value, draw.aborts) if return_aborts else value


def jackknife_variance_se(v, axis=0):
    """Sample variance along ``axis`` plus its jackknife standard error.

    Leave-one-out variances are computed in closed form from the deviations,
    so the cost is linear in the sample size.
    """
    v = np.moveaxis(np.asarray(v, dtype=float), axis, 0)
    m = v.shape[0]
    if m < 3:
        nan = np.full(v.shape[1:], np.nan)
        return (np.var(v, axis=0, ddof=1) if m == 2 else nan), nan
    d = v - v.mean(axis=0)
    ss = np.sum(d * d, axis=0)
    var = ss / (m - 1)
    # removing entry j: SS_j = SS - d_j^2 * m / (m - 1)
    loo = (ss - d * d * m / (m - 1)) / (m - 2)
    se = np.sqrt((m - 1) / m * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return var, se


@dataclass(frozen=True)
class RBRow:
    k: int
    var_raw: float
    var_rb: float
    se_raw: float
    se_rb: float
    outer_reps: int
    inner_reps: int
    aborts: int
    flag: str = "ok"

    @property
    def joint_se(self) -> float:
        """``sqrt(se_raw^2 + se_rb^2)``."""
        return math.hypot(self.se_raw, self.se_rb)


@dataclass
class RBStudyReport:
    rows: list[RBRow]
    raw_estimates: np.ndarray | None = field(default=None, repr=False)
    rb_estimates: np.ndarray | None = field(default=None, repr=False)

    CSV_COLUMNS = ("k", "var_raw", "var_rb", "se_raw", "se_rb", "outer_reps", "inner_reps", "aborts")

    def ordering_holds(self, n_se: float = 2.0) -> list[bool]:
        """Per row: ``var_rb <= var_raw + n_se * joint_se``."""
        return [r.var_rb <= r.var_raw + n_se * r.joint_se for r in self.rows]

    def constancy(self):
        """``(max - min of var_rb, joint SE of the two extreme rows)``."""
        ok = [r for r in self.rows if r.flag == "ok"]
        hi = max(ok, key=lambda r: r.var_rb)
        lo = min(ok, key=lambda r: r.var_rb)
        return hi.var_rb - lo.var_rb, math.hypot(hi.se_rb, lo.se_rb)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.k, f"{r.var_raw:.16e}", f"{r.var_rb:.16e}", f"{r.se_raw:.16e}", f"{r.se_rb:.16e}",
                        r.outer_reps, r.inner_reps, r.aborts])
        return buf.getvalue()


def _replicate(j, family, estimator_for, ks, n, inner_reps, streams, plug_in, proxy_options):
    """Raw and averaged estimates for outer replicate ``j``; also the abort count."""
    g = streams(j)
    data = np.asarray(family.sample(g, size=n), dtype=float)
    u_total = float(np.sum(family.statistic(data)))
    dom = family.tilted_to_mean(u_total / n) if plug_in else family
    draw = sample_proxy(dom, u_total, n, ks[-1], g, size=inner_reps, **proxy_options)
    raw = np.empty(len(ks))
    rb = np.empty(len(ks))
    for c, k in enumerate(ks):
        est = estimator_for(k)
        raw[c] = float(est(data[:k]))
        rb[c] = float(_shifted_mean(est(draw.paths[:, :k])))
    return raw, rb, draw.aborts


class _SharedStream:
    def __init__(self, rng):
        self.rng = rng

    def __call__(self, j):
        return self.rng


def run_variance_study(family: TiltableFamily, estimator_for: Callable[[int], EstimatorSpec], n: int, k_grid,
                       outer_reps: int, inner_reps: int, rng=None, streams=None, plug_in: bool = True,
                       map_fn=map, **proxy_options) -> RBStudyReport:
    """Variance of raw and Rao-Blackwellised estimators across simulated datasets.

    Each outer replicate draws ``n`` observations from ``family`` (the true
    parameters), computes the raw estimator on the first ``k`` of them and
    its Rao-Blackwellised version from ``inner_reps`` proxy runs. One run of
    length ``max(k_grid)`` serves every ``k``: the first ``k`` coordinates of
    a proxy run are themselves a proxy run of length ``k``.

    Parameters
    ----------
    family : TiltableFamily
        Data-generating member. With ``plug_in`` (the default) each
        replicate uses the member tilted to its own sample mean of ``u`` as
        the dominating density, otherwise ``family`` itself.
    estimator_for : callable
        ``k -> EstimatorSpec`` of arity ``k``.
    n : int
    k_grid : sequence of int
        Each in ``[1, n - 1]``.
    outer_reps, inner_reps : int
    rng : numpy.random.Generator, optional
        Shared by all replicates in turn when ``streams`` is not given.
    streams : callable, optional
        ``index -> Generator``; replicate ``j`` uses ``streams(j)`` for both
        its dataset and its proxy runs, which makes the result independent
        of the evaluation order.
    map_fn : callable
        ``map``-like function used to evaluate the replicates, for example
        the ``map`` of a process pool. Must preserve order.

    Returns
    -------
    RBStudyReport
        Rows sorted by ``k``. With fewer than two outer replicates the
        variances are undefined and every row is flagged ``"undefined"``.
    """
    ks = sorted(int(k) for k in k_grid)
    if not ks or ks[0] < 1 or ks[-1] > n - 1:
        raise ValueError(f"k_grid must lie in [1, {n - 1}]")
    if streams is None:
        if rng is None:
            raise ValueError("provide rng or streams")
        streams, map_fn = _SharedStream(rng), map
    job = functools.partial(_replicate, family=family, estimator_for=estimator_for, ks=ks, n=n,
                            inner_reps=inner_reps, streams=streams, plug_in=plug_in, proxy_options=proxy_options)
    results = list(map_fn(job, range(outer_reps)))
    raw = np.array([r[0] for r in results]).reshape(outer_reps, len(ks))
    rb = np.array([r[1] for r in results]).reshape(outer_reps, len(ks))
    aborts = int(sum(r[2] for r in results))
    var_raw, se_raw = jackknife_variance_se(raw)
    var_rb, se_rb = jackknife_variance_se(rb)
    flag = "ok" if outer_reps >= 2 else "undefined"
    rows = [RBRow(k, float(var_raw[c]), float(var_rb[c]), float(se_raw[c]), float(se_rb[c]), outer_reps,
                  inner_reps, aborts, flag) for c, k in enumerate(ks)]
    return RBStudyReport(rows, raw, rb)
