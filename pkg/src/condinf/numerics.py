"""Scalar root finding, adaptive quadrature and finite differences.

Everything here is a pure function of its arguments. The root finder and
the finite-difference routines are written out by hand; quadrature is
delegated to QUADPACK (``scipy.integrate.quad``) after mapping half-infinite
pieces onto ``(0, 1)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .exceptions import MaxIterations, NoSignChange, NonFinite

_EPS = np.finfo(float).eps

__all__ = [
    "Bracket",
    "QuadratureResult",
    "find_root_monotone",
    "expand_bracket",
    "integrate_adaptive",
    "differentiate",
]


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket requires lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int
    converged: bool = True


def find_root_monotone(
    f: Callable[[float], float],
    bracket: Bracket,
    rel_tol: float = 1e-12,
    fprime: Callable[[float], float] | None = None,
    f_scale: float = 1.0,
    max_iter: int = 200,
) -> float:
    """Root of a continuous monotone function on a bracket.

    Newton steps (or false-position steps when ``fprime`` is not given) are
    taken while they stay inside the current bracket and shrink it fast
    enough; otherwise the bracket is bisected.

    Parameters
    ----------
    f : callable
        Continuous, strictly monotone on ``bracket``.
    bracket : Bracket
        Interval with ``f(lo) * f(hi) <= 0``.
    rel_tol : float
        Stop when ``|f(t)| <= rel_tol * f_scale`` or the bracket width is
        below ``rel_tol * |t|``.
    fprime : callable, optional
        Derivative of ``f``.
    f_scale : float
        Magnitude against which residuals are judged.
    max_iter : int
        Iteration cap.

    Raises
    ------
    NoSignChange
        If ``f`` has the same strict sign at both ends.
    MaxIterations
        If the cap is reached before convergence.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    lo, hi = float(bracket.lo), float(bracket.hi)
    flo, fhi = f(lo), f(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise NonFinite(f"f is not finite at the bracket ends: f({lo})={flo}, f({hi})={fhi}")
    ftol = rel_tol * abs(f_scale)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise NoSignChange(f"f({lo})={flo} and f({hi})={fhi} have the same sign")

    t = 0.5 * (lo + hi)
    for _ in range(max_iter):
        ft = f(t)
        if not math.isfinite(ft):
            raise NonFinite(f"f({t}) = {ft}")
        if abs(ft) <= ftol:
            return t
        if (ft < 0) == (flo < 0):
            lo, flo = t, ft
        else:
            hi, fhi = t, ft
        width = hi - lo
        if width <= rel_tol * abs(t) + 4 * _EPS * abs(t) + 1e-300:
            return t

        candidate = math.nan
        if fprime is not None:
            d = fprime(t)
            if d != 0 and math.isfinite(d):
                candidate = t - ft / d
        else:
            candidate = lo - flo * (hi - lo) / (fhi - flo)
        # Accept the fast step only if it lands strictly inside and is not
        # glued to an end of the bracket.
        margin = 0.01 * width
        if not (lo + margin < candidate < hi - margin) and fprime is None:
            candidate = math.nan
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi)
        t = candidate
    raise MaxIterations(f"no convergence after {max_iter} iterations (bracket [{lo}, {hi}])")


def expand_bracket(
    f: Callable[[float], float],
    domain: tuple[float, float],
    start: float = 0.0,
    step: float = 0.1,
    margin: float = 1e-10,
    max_expansions: int = 2000,
) -> Bracket:
    """Grow an interval from ``start`` until an increasing ``f`` changes sign.

    The step doubles at each expansion and the interval is capped at the
    domain boundary minus ``margin`` (relative to the boundary magnitude).

    Raises
    ------
    NoSignChange
        If no sign change is found before hitting the domain boundary.
    """
    dlo, dhi = domain
    cap_hi = dhi - margin * max(1.0, abs(dhi)) if math.isfinite(dhi) else math.inf
    cap_lo = dlo + margin * max(1.0, abs(dlo)) if math.isfinite(dlo) else -math.inf
    f0 = f(start)
    if f0 == 0.0:
        return Bracket(max(cap_lo, start - step), min(cap_hi, start + step))
    direction = 1.0 if f0 < 0 else -1.0
    prev, h = start, step
    for _ in range(max_expansions):
        t = start + direction * h
        if direction > 0 and t >= cap_hi:
            t = cap_hi
        elif direction < 0 and t <= cap_lo:
            t = cap_lo
        ft = f(t)
        if math.isfinite(ft) and (ft > 0) == (direction > 0) or ft == 0.0:
            return Bracket(min(prev, t), max(prev, t))
        if t in (cap_hi, cap_lo):
            break
        prev, h = t, 2.0 * h
    raise NoSignChange(f"no sign change of f found from {start} toward the domain boundary")


def _to_unit(f, a, b):
    """Return (g, 0, 1) such that the integral of f over (a, b) equals that of g over (0, 1)."""
    if math.isfinite(a) and not math.isfinite(b):
        def g(v):
            w = 1.0 - v
            return f(a + v / w) / (w * w)
        return g
    if not math.isfinite(a) and math.isfinite(b):
        def g(v):
            w = 1.0 - v
            return f(b - v / w) / (w * w)
        return g
    raise ValueError("only half-infinite intervals are mapped")


def integrate_adaptive(
    f: Callable[[float], float],
    support: tuple[float, float],
    rel_tol: float = 1e-8,
    center: float | None = None,
    scale: float | None = None,
    abs_tol: float = 0.0,
) -> QuadratureResult:
    """Integrate a nonnegative function over a possibly infinite interval.

    The interval is split around ``center`` into a bulk piece of half-width
    ``12 * scale`` and up to two tail pieces; half-infinite tails are mapped
    onto ``(0, 1)`` by ``x = a + v / (1 - v)``. Each piece is handled by
    adaptive Gauss-Kronrod quadrature.

    Returns
    -------
    QuadratureResult
        ``converged`` is False when the estimated error exceeds the
        requested tolerance; the best estimate is still returned.

    Raises
    ------
    NonFinite
        If ``f`` returns NaN or infinity at an evaluation point.
    """
    lo, hi = float(support[0]), float(support[1])
    if not lo < hi:
        raise ValueError("empty support")

    bad = []

    def checked(x):
        y = f(x)
        if not math.isfinite(y):
            bad.append((x, y))
            return 0.0
        return y

    if center is None:
        center = 0.0 if not (math.isfinite(lo) or math.isfinite(hi)) else (
            (lo + hi) / 2 if math.isfinite(lo) and math.isfinite(hi)
            else (lo + 1.0 if math.isfinite(lo) else hi - 1.0))
    if scale is None or not scale > 0:
        scale = 1.0
    a = max(lo, center - 12.0 * scale)
    b = min(hi, center + 12.0 * scale)
    pieces = []
    if a > lo:
        pieces.append((lo, a))
    pieces.append((a, b))
    if b < hi:
        pieces.append((b, hi))

    value, err, nev, ok = 0.0, 0.0, 0, True
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for p, q in pieces:
            if math.isfinite(p) and math.isfinite(q):
                g, gp, gq = checked, p, q
            elif not math.isfinite(p) and not math.isfinite(q):
                g, gp, gq = checked, p, q
            else:
                g, gp, gq = _to_unit(checked, p, q), 0.0, 1.0
            try:
                v, e, info = integrate.quad(g, gp, gq, epsabs=abs_tol, epsrel=rel_tol,
                                            limit=200, full_output=1)[:3]
            except integrate.IntegrationWarning:
                ok = False
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", integrate.IntegrationWarning)
                    v, e, info = integrate.quad(g, gp, gq, epsabs=abs_tol, epsrel=rel_tol,
                                                limit=200, full_output=1)[:3]
            value += v
            err += e
            nev += int(info["neval"])
    if bad:
        x, y = bad[0]
        raise NonFinite(f"integrand returned {y} at x={x}")
    if err > max(rel_tol * abs(value), abs_tol):
        ok = False
    return QuadratureResult(value=value, abs_error_estimate=err, evaluations=max(nev, 1), converged=ok)


def differentiate(f: Callable, t: float, order: int = 1, h: float | None = None) -> float:
    """Central finite-difference derivative of order 1, 2 or 3 with one Richardson step.

    The base step is ``eps ** (1 / (order + 4)) * max(1, |t|)`` unless ``h``
    is given. Intended as an independent cross-check of analytic cumulants.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if h is None:
        h = _EPS ** (1.0 / (order + 4)) * max(1.0, abs(t))

    def fin(x):
        y = f(x)
        if not np.all(np.isfinite(y)):
            raise NonFinite(f"f({x}) = {y}")
        return y

    def stencil(hh):
        if order == 1:
            return (fin(t + hh) - fin(t - hh)) / (2 * hh)
        if order == 2:
            return (fin(t + hh) - 2 * fin(t) + fin(t - hh)) / (hh * hh)
        return (fin(t + 2 * hh) - 2 * fin(t + hh) + 2 * fin(t - hh) - fin(t - 2 * hh)) / (2 * hh ** 3)

    d1, d2 = stencil(h), stencil(h / 2)
    return (4 * d2 - d1) / 3
