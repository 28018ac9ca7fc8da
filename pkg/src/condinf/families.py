"""Distribution families with a tiltable statistic, and two-parameter models.

A :class:`TiltableFamily` couples a density ``p_X`` with a real statistic
``u`` whose cumulant generating function ``K_U(t) = log E exp(t u(X))`` and
first three derivatives are available in closed form. Tilting by ``t``
gives the density ``exp(t u(x) - K_U(t)) p_X(x)``; for every built-in family
the tilted density is again a member of the same family, so tilting is a
parameter map rather than a numerical object.

Family parameters may be numpy arrays. A family with array parameters
represents a batch of members and all methods broadcast over it; this is
what lets the proxy sampler run many chains at once.

The second half of the module holds the models used for inference with a
nuisance parameter: canonical two-parameter exponential families
``exp[theta t(x) + eta u(x) - K(theta, eta)] h(x)`` and the curved normal
parabola model, together with :func:`mle_nuisance`.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import ClassVar

import numpy as np
from scipy import special

from .exceptions import AlphaOutOfRange, NewtonDiverged, OutOfDomain
from .numerics import expand_bracket, find_root_monotone

__all__ = [
    "TiltableFamily",
    "Exponential",
    "Gamma",
    "Normal",
    "InverseGaussian",
    "tilt",
    "cumulants_at",
    "base_sample",
    "inv_digamma",
    "TwoParamExpFamily",
    "GammaShapeModel",
    "GammaScaleModel",
    "NormalVarianceModel",
    "NormalParabola",
    "NormalLocationModel",
    "mle_nuisance",
    "make_family",
    "make_model",
]

_LOG_2PI = math.log(2.0 * math.pi)


def inv_digamma(y):
    """Inverse of the digamma function, elementwise.

    Newton iterations from the initial point of Minka (2000); converges to
    full double precision in a handful of steps for every real ``y``.
    """
    y = np.asarray(y, dtype=float)
    x = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y - special.digamma(1.0)))
    for _ in range(50):
        dx = (special.digamma(x) - y) / special.polygamma(1, x)
        x = x - dx
        if np.all(np.abs(dx) <= 4e-16 * np.abs(x)):
            break
    return x


class TiltableFamily(ABC):
    """A density on the line together with a statistic that can be tilted.

    Subclasses are frozen dataclasses whose numeric fields are the
    parameters.
    """

    name: ClassVar[str]

    @abstractmethod
    def log_pdf(self, x): ...

    @abstractmethod
    def statistic(self, x): ...

    @abstractmethod
    def log_mgf(self, t):
        """``K_U(t)``, the cumulant generating function of ``u(X)``."""

    @abstractmethod
    def cumulants(self, t=0.0):
        """First three derivatives of ``K_U`` at ``t`` as ``(m, s2, mu3)``."""

    @abstractmethod
    def mgf_domain(self):
        """Open interval ``(lo, hi)`` on which ``K_U`` is finite."""

    @abstractmethod
    def support(self): ...

    @abstractmethod
    def stat_range(self):
        """Open interval of attainable values of ``m(t)`` (steepness)."""

    @abstractmethod
    def tilted(self, t):
        """The tilted member ``exp(t u(x) - K_U(t)) p_X(x)``."""

    @abstractmethod
    def tilted_to_mean(self, m):
        """The tilted member whose statistic has mean ``m``.

        Implemented directly from ``m`` (not through the tilt parameter) so
        that parameters for which ``u`` is sufficient drop out exactly.
        """

    @abstractmethod
    def sample(self, rng, size=None): ...

    @abstractmethod
    def location_scale(self):
        """Rough centre and spread of ``X`` itself; used as quadrature hints."""

    def fourth_cumulant(self, t=0.0):
        """Fourth derivative of ``K_U``; not used by any procedure."""
        raise NotImplementedError

    def solve_tilt(self, alpha):
        """Tilt parameter ``t`` such that ``m(t) = alpha``, for a scalar ``alpha``.

        Raises
        ------
        AlphaOutOfRange
            If ``alpha`` is outside the open statistic range.
        """
        alpha = float(alpha)
        lo, hi = self.stat_range()
        if not lo < alpha < hi:
            raise AlphaOutOfRange(f"alpha={alpha} outside the statistic range ({lo}, {hi})")
        return float(self.tilt_parameter(alpha))

    def tilt_parameter(self, m):
        """Elementwise tilt parameter for targets ``m`` assumed inside the range.

        Built-in families override this with a closed form or a vectorised
        Newton iteration; the fallback brackets and solves each entry.
        """
        return np.vectorize(self._solve_tilt_numeric, otypes=[float])(m)

    def _solve_tilt_numeric(self, alpha):
        def f(t):
            return float(self.cumulants(t)[0]) - alpha

        def fp(t):
            return float(self.cumulants(t)[1])

        br = expand_bracket(f, self.mgf_domain(), start=0.0, step=0.1 / math.sqrt(float(self.cumulants(0.0)[1])))
        return find_root_monotone(f, br, rel_tol=1e-14, fprime=fp, f_scale=max(abs(alpha), 1e-300))

    def log_gaussian_factor_mean(self, centre, beta):
        """``log E exp(-(u(X) - centre)^2 / (2 beta))`` if available in closed form, else None."""
        return None

    def take(self, index):
        """Member(s) selected from array-valued parameters."""
        changes = {}
        for fld in dataclasses.fields(self):
            v = getattr(self, fld.name)
            if isinstance(v, np.ndarray) and v.ndim > 0:
                changes[fld.name] = v[index]
        return dataclasses.replace(self, **changes)

    def stat_mean_var(self):
        m, s2, _ = self.cumulants(0.0)
        return m, s2

    def pdf(self, x):
        return np.exp(self.log_pdf(x))


@functools.lru_cache(maxsize=256)
def _genlaguerre(shape, order=96):
    nodes, weights = special.roots_genlaguerre(order, shape - 1.0)
    return nodes, weights


def _arr(v):
    if isinstance(v, np.ndarray):
        return float(v) if v.ndim == 0 else v
    return float(v)


def _positive_part(x):
    return np.where(np.asarray(x) > 0, x, 1.0)


@dataclass(frozen=True)
class Exponential(TiltableFamily):
    """Exponential law with the given rate; statistic ``u(x) = x``."""

    rate: float = 1.0
    name: ClassVar[str] = "exponential"

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, np.log(self.rate) - self.rate * x, -np.inf)

    def statistic(self, x):
        return np.asarray(x, dtype=float)

    def log_mgf(self, t):
        return np.log(self.rate) - np.log(self.rate - np.asarray(t, dtype=float))

    def cumulants(self, t=0.0):
        d = self.rate - np.asarray(t, dtype=float)
        return 1.0 / d, 1.0 / d ** 2, 2.0 / d ** 3

    def fourth_cumulant(self, t=0.0):
        return 6.0 / (self.rate - np.asarray(t, dtype=float)) ** 4

    def mgf_domain(self):
        return -math.inf, self.rate

    def support(self):
        return 0.0, math.inf

    def stat_range(self):
        return 0.0, math.inf

    def tilted(self, t):
        return Exponential(_arr(self.rate - np.asarray(t, dtype=float)))

    def tilted_to_mean(self, m):
        return Exponential(_arr(1.0 / np.asarray(m, dtype=float)))

    def tilt_parameter(self, m):
        return self.rate - 1.0 / np.asarray(m, dtype=float)

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / np.asarray(self.rate), size=size)

    def location_scale(self):
        return 1.0 / self.rate, 1.0 / self.rate

    def log_gaussian_factor_mean(self, centre, beta):
        # rate * int exp(-rate x - (x - c)^2 / (2 beta)) dx over x > 0
        lam = self.rate
        sb = np.sqrt(beta)
        return (np.log(lam) + 0.5 * np.log(2 * np.pi * beta) - lam * centre + 0.5 * lam ** 2 * beta
                + special.log_ndtr((centre - lam * beta) / sb))


@dataclass(frozen=True)
class Gamma(TiltableFamily):
    """Gamma law with density ``x^(shape-1) exp(-x/scale) / (Gamma(shape) scale^shape)``.

    ``statistic`` selects the tilted coordinate: ``"x"`` (sufficient for the
    scale when the shape is known) or ``"log"`` (sufficient for the shape
    when the scale is known).
    """

    shape: float = 1.0
    scale: float = 1.0
    statistic_kind: str = "x"
    name: ClassVar[str] = "gamma"

    def __post_init__(self):
        if self.statistic_kind not in ("x", "log"):
            raise ValueError("statistic_kind must be 'x' or 'log'")

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        xs = _positive_part(x)
        lp = ((self.shape - 1.0) * np.log(xs) - xs / self.scale
              - special.gammaln(self.shape) - self.shape * np.log(self.scale))
        return np.where(x > 0, lp, -np.inf)

    def statistic(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.statistic_kind == "x" else np.log(x)

    def log_mgf(self, t):
        t = np.asarray(t, dtype=float)
        if self.statistic_kind == "x":
            return -self.shape * np.log1p(-self.scale * t)
        return special.gammaln(self.shape + t) - special.gammaln(self.shape) + t * np.log(self.scale)

    def cumulants(self, t=0.0):
        t = np.asarray(t, dtype=float)
        if self.statistic_kind == "x":
            q = self.scale / (1.0 - self.scale * t)
            return self.shape * q, self.shape * q ** 2, 2.0 * self.shape * q ** 3
        a = self.shape + t
        return (special.digamma(a) + np.log(self.scale), special.polygamma(1, a),
                special.polygamma(2, a))

    def fourth_cumulant(self, t=0.0):
        t = np.asarray(t, dtype=float)
        if self.statistic_kind == "x":
            q = self.scale / (1.0 - self.scale * t)
            return 6.0 * self.shape * q ** 4
        return special.polygamma(3, self.shape + t)

    def mgf_domain(self):
        if self.statistic_kind == "x":
            return -math.inf, 1.0 / self.scale
        return -self.shape, math.inf

    def support(self):
        return 0.0, math.inf

    def stat_range(self):
        return (0.0, math.inf) if self.statistic_kind == "x" else (-math.inf, math.inf)

    def tilted(self, t):
        t = np.asarray(t, dtype=float)
        if self.statistic_kind == "x":
            return Gamma(self.shape, _arr(self.scale / (1.0 - self.scale * t)), "x")
        return Gamma(_arr(self.shape + t), self.scale, "log")

    def tilted_to_mean(self, m):
        m = np.asarray(m, dtype=float)
        if self.statistic_kind == "x":
            return Gamma(self.shape, _arr(m / self.shape), "x")
        return Gamma(_arr(inv_digamma(m - np.log(self.scale))), self.scale, "log")

    def tilt_parameter(self, m):
        m = np.asarray(m, dtype=float)
        if self.statistic_kind == "x":
            return 1.0 / self.scale - self.shape / m
        return inv_digamma(m - np.log(self.scale)) - self.shape

    def sample(self, rng, size=None):
        return rng.gamma(self.shape, self.scale, size=size)

    def location_scale(self):
        return self.shape * self.scale, math.sqrt(self.shape) * self.scale

    def log_gaussian_factor_mean(self, centre, beta):
        # Generalised Gauss-Laguerre rule for the weight x^(shape-1) e^(-x).
        # It is accurate only while the Gaussian factor is smooth on the scale
        # of the nodes: at least as wide as the law and centred within its
        # bulk. Outside that regime the caller falls back to quadrature.
        if self.statistic_kind != "x" or np.ndim(self.shape) != 0:
            return None
        scale = np.asarray(self.scale, dtype=float)[..., None]
        c = np.asarray(centre, dtype=float)[..., None]
        b = np.asarray(beta, dtype=float)[..., None]
        var = self.shape * scale ** 2
        if np.any(b < var) or np.any(np.abs(c - self.shape * scale) > 6.0 * np.sqrt(var)):
            return None
        nodes, weights = _genlaguerre(float(self.shape))
        expo = -(scale * nodes - c) ** 2 / (2.0 * b)
        top = np.max(expo, axis=-1, keepdims=True)
        val = np.log(np.sum(weights * np.exp(expo - top), axis=-1)) + top[..., 0] - special.gammaln(self.shape)
        return val if val.ndim else float(val)

    def as_statistic(self, kind):
        return Gamma(self.shape, self.scale, kind)


@dataclass(frozen=True)
class Normal(TiltableFamily):
    """Normal law ``N(mean, var)`` with statistic ``u(x) = x``."""

    mean: float = 0.0
    var: float = 1.0
    name: ClassVar[str] = "normal"

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * (_LOG_2PI + np.log(self.var)) - (x - self.mean) ** 2 / (2.0 * self.var)

    def statistic(self, x):
        return np.asarray(x, dtype=float)

    def log_mgf(self, t):
        t = np.asarray(t, dtype=float)
        return self.mean * t + 0.5 * self.var * t * t

    def cumulants(self, t=0.0):
        t = np.asarray(t, dtype=float)
        return self.mean + self.var * t, self.var + 0.0 * t, 0.0 * t

    def fourth_cumulant(self, t=0.0):
        return 0.0 * np.asarray(t, dtype=float)

    def mgf_domain(self):
        return -math.inf, math.inf

    def support(self):
        return -math.inf, math.inf

    def stat_range(self):
        return -math.inf, math.inf

    def tilted(self, t):
        return Normal(_arr(self.mean + self.var * np.asarray(t, dtype=float)), self.var)

    def tilted_to_mean(self, m):
        return Normal(_arr(np.asarray(m, dtype=float)), self.var)

    def tilt_parameter(self, m):
        return (np.asarray(m, dtype=float) - self.mean) / self.var

    def sample(self, rng, size=None):
        return rng.normal(self.mean, np.sqrt(self.var), size=size)

    def location_scale(self):
        return self.mean, math.sqrt(self.var)

    def log_gaussian_factor_mean(self, centre, beta):
        v = beta + self.var
        return 0.5 * np.log(beta / v) - (self.mean - centre) ** 2 / (2.0 * v)


@dataclass(frozen=True)
class InverseGaussian(TiltableFamily):
    """Inverse Gaussian law with mean ``mean`` and shape ``shape`` (lambda).

    ``statistic_kind="x"`` tilts along ``u(x) = x`` (sufficient for the mean
    at fixed shape); ``"inv"`` tilts along ``u(x) = 1/x``. Both cumulant
    generating functions are closed form:

    * ``x``: ``K(t) = (lam/mu) (1 - sqrt(1 - 2 mu^2 t / lam))``, ``t < lam / (2 mu^2)``
    * ``inv``: ``K(t) = log(lam / w) / 2 + (lam - sqrt(lam w)) / mu``, ``w = lam - 2t``, ``t < lam / 2``
    """

    mean: float = 1.0
    shape: float = 1.0
    statistic_kind: str = "x"
    name: ClassVar[str] = "inverse_gaussian"

    def __post_init__(self):
        if self.statistic_kind not in ("x", "inv"):
            raise ValueError("statistic_kind must be 'x' or 'inv'")

    def log_pdf(self, x):
        x = np.asarray(x, dtype=float)
        xs = _positive_part(x)
        mu, lam = self.mean, self.shape
        lp = 0.5 * (np.log(lam) - _LOG_2PI - 3.0 * np.log(xs)) - lam * (xs - mu) ** 2 / (2.0 * mu * mu * xs)
        return np.where(x > 0, lp, -np.inf)

    def statistic(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.statistic_kind == "x" else 1.0 / x

    def log_mgf(self, t):
        t = np.asarray(t, dtype=float)
        mu, lam = self.mean, self.shape
        if self.statistic_kind == "x":
            return (lam / mu) * (1.0 - np.sqrt(1.0 - 2.0 * mu * mu * t / lam))
        w = lam - 2.0 * t
        return 0.5 * np.log(lam / w) + (lam - np.sqrt(lam * w)) / mu

    def cumulants(self, t=0.0):
        t = np.asarray(t, dtype=float)
        mu, lam = self.mean, self.shape
        if self.statistic_kind == "x":
            q = 1.0 - 2.0 * mu * mu * t / lam
            return mu * q ** -0.5, mu ** 3 / lam * q ** -1.5, 3.0 * mu ** 5 / lam ** 2 * q ** -2.5
        w = lam - 2.0 * t
        b = np.sqrt(lam) / mu
        return (1.0 / w + b * w ** -0.5, 2.0 / w ** 2 + b * w ** -1.5,
                8.0 / w ** 3 + 3.0 * b * w ** -2.5)

    def fourth_cumulant(self, t=0.0):
        t = np.asarray(t, dtype=float)
        mu, lam = self.mean, self.shape
        if self.statistic_kind == "x":
            q = 1.0 - 2.0 * mu * mu * t / lam
            return 15.0 * mu ** 7 / lam ** 3 * q ** -3.5
        w = lam - 2.0 * t
        return 48.0 / w ** 4 + 15.0 * np.sqrt(lam) / mu * w ** -3.5

    def mgf_domain(self):
        if self.statistic_kind == "x":
            return -math.inf, self.shape / (2.0 * self.mean ** 2)
        return -math.inf, self.shape / 2.0

    def support(self):
        return 0.0, math.inf

    def stat_range(self):
        return 0.0, math.inf

    def tilted(self, t):
        t = np.asarray(t, dtype=float)
        mu, lam = self.mean, self.shape
        if self.statistic_kind == "x":
            return InverseGaussian(_arr(mu / np.sqrt(1.0 - 2.0 * mu * mu * t / lam)), lam, "x")
        w = lam - 2.0 * t
        return InverseGaussian(_arr(mu * np.sqrt(w / lam)), _arr(w), "inv")

    def tilted_to_mean(self, m):
        m = np.asarray(m, dtype=float)
        if self.statistic_kind == "x":
            return InverseGaussian(_arr(m), self.shape, "x")
        # m = z^2 + b z with z = w^(-1/2) and b = sqrt(lam)/mu invariant under tilting
        b = math.sqrt(self.shape) / self.mean if np.ndim(self.shape) == 0 and np.ndim(self.mean) == 0 \
            else np.sqrt(self.shape) / self.mean
        z = 2.0 * m / (b + np.sqrt(b * b + 4.0 * m))
        return InverseGaussian(_arr(1.0 / (b * z)), _arr(1.0 / (z * z)), "inv")

    def tilt_parameter(self, m):
        m = np.asarray(m, dtype=float)
        mu, lam = self.mean, self.shape
        if self.statistic_kind == "x":
            return lam * (1.0 - (mu / m) ** 2) / (2.0 * mu * mu)
        b = np.sqrt(lam) / mu
        z = 2.0 * m / (b + np.sqrt(b * b + 4.0 * m))
        return 0.5 * (lam - 1.0 / (z * z))

    def sample(self, rng, size=None):
        # numpy's Wald generator is the Michael-Schucany-Haas transformation
        return rng.wald(self.mean, self.shape, size=size)

    def location_scale(self):
        return self.mean, math.sqrt(self.mean ** 3 / self.shape)


def tilt(family: TiltableFamily, alpha: float) -> TiltableFamily:
    """Closed-form tilted member of ``family`` whose statistic has mean ``alpha``.

    Raises
    ------
    AlphaOutOfRange
        If ``alpha`` is not in the interior of the statistic's range.
    """
    lo, hi = family.stat_range()
    if not (lo < alpha < hi and math.isfinite(alpha)):
        raise AlphaOutOfRange(f"alpha={alpha} outside the statistic range ({lo}, {hi})")
    return family.tilted_to_mean(alpha)


def cumulants_at(family: TiltableFamily, t: float):
    """Analytic ``(m, s2, mu3)`` of the statistic at tilt ``t``.

    Raises
    ------
    OutOfDomain
        If ``t`` is outside the open MGF domain.
    """
    lo, hi = family.mgf_domain()
    if not lo < t < hi:
        raise OutOfDomain(f"t={t} outside the MGF domain ({lo}, {hi})")
    m, s2, mu3 = family.cumulants(t)
    return float(m), float(s2), float(mu3)


def base_sample(family: TiltableFamily, rng, size=None):
    """Exact draws from ``family`` itself."""
    return family.sample(rng, size=size)


# ---------------------------------------------------------------------------
# Two-parameter models


class TwoParamExpFamily(ABC):
    """Canonical family ``exp[theta t(x) + eta u(x) - K(theta, eta)] h(x)``.

    ``theta`` is the parameter of interest and ``eta`` the nuisance one.
    Conditioning on ``sum u(X_i)`` removes ``eta``; under a fixed ``theta``
    the one-parameter family in ``eta`` is a :class:`TiltableFamily` along
    ``u`` (see :meth:`conditional_family`).
    """

    name: ClassVar[str]
    n_parts: ClassVar[int] = 1

    @abstractmethod
    def t_stat(self, x): ...

    @abstractmethod
    def u_stat(self, x): ...

    @abstractmethod
    def log_h(self, x): ...

    @abstractmethod
    def log_K(self, theta, eta): ...

    @abstractmethod
    def dK_deta(self, theta, eta, order=1): ...

    @abstractmethod
    def in_domain(self, theta, eta) -> bool: ...

    @abstractmethod
    def conditional_family(self, theta, eta) -> TiltableFamily: ...

    @abstractmethod
    def sample(self, theta, eta, rng, size=None): ...

    @abstractmethod
    def to_canonical(self, interest, nuisance):
        """Map classical parameters to ``(theta, eta)``."""

    @abstractmethod
    def to_classical(self, theta, eta): ...

    @abstractmethod
    def default_nr_start(self, theta, data): ...

    def log_pdf(self, x, theta, eta):
        return theta * self.t_stat(x) + eta * self.u_stat(x) - self.log_K(theta, eta) + self.log_h(x)

    def loglik(self, theta, eta, data):
        return float(np.sum(self.log_pdf(np.asarray(data, dtype=float), theta, eta)))

    def nuisance_in_domain(self, theta, eta):
        return self.in_domain(theta, eta)

    def nuisance_loglik(self, theta, eta, data):
        data = np.asarray(data, dtype=float)
        return float(eta * np.sum(self.u_stat(data)) - data.shape[0] * self.log_K(theta, eta))

    def nuisance_score(self, theta, eta, data):
        data = np.asarray(data, dtype=float)
        return float(np.sum(self.u_stat(data)) - data.shape[0] * self.dK_deta(theta, eta, 1))

    def nuisance_hessian(self, theta, eta, data):
        return float(-np.asarray(data).shape[0] * self.dK_deta(theta, eta, 2))

    # interface used by the Monte Carlo tests and the conditional likelihood

    def split(self, data):
        return [np.asarray(data, dtype=float)]

    def conditional_parts(self, theta, eta):
        return [self.conditional_family(theta, eta)]

    def test_statistic(self, parts, centres=None):
        """Sum of the interest statistic ``t`` over the last axis."""
        return np.sum(self.t_stat(parts[0]), axis=-1)


class GammaShapeModel(TwoParamExpFamily):
    """Gamma(a, b) with the shape ``a`` of interest and the scale ``b`` as nuisance.

    Canonical coordinates: ``theta = a - 1`` with ``t(x) = log x``;
    ``eta = -1/b`` with ``u(x) = x``.
    """

    name = "gamma_shape"

    def t_stat(self, x):
        return np.log(x)

    def u_stat(self, x):
        return np.asarray(x, dtype=float)

    def log_h(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def log_K(self, theta, eta):
        return special.gammaln(theta + 1.0) - (theta + 1.0) * np.log(-eta)

    def dK_deta(self, theta, eta, order=1):
        a = theta + 1.0
        return {1: -a / eta, 2: a / eta ** 2, 3: -2.0 * a / eta ** 3}[order]

    def in_domain(self, theta, eta):
        return theta > -1.0 and eta < 0.0

    def conditional_family(self, theta, eta):
        return Gamma(theta + 1.0, -1.0 / eta, "x")

    def sample(self, theta, eta, rng, size=None):
        return rng.gamma(theta + 1.0, -1.0 / eta, size=size)

    def to_canonical(self, interest, nuisance):
        return interest - 1.0, -1.0 / nuisance

    def to_classical(self, theta, eta):
        return theta + 1.0, -1.0 / eta

    def default_nr_start(self, theta, data):
        return -1.0 / float(np.mean(data))

    def interest_to_theta(self, a):
        return a - 1.0

    def theta_to_interest(self, theta):
        return theta + 1.0


class GammaScaleModel(TwoParamExpFamily):
    """Gamma(a, b) with the scale ``b`` of interest and the shape ``a`` as nuisance.

    Canonical coordinates: ``theta = -1/b`` with ``t(x) = x``;
    ``eta = a - 1`` with ``u(x) = log x``.
    """

    name = "gamma_scale"

    def t_stat(self, x):
        return np.asarray(x, dtype=float)

    def u_stat(self, x):
        return np.log(x)

    def log_h(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def log_K(self, theta, eta):
        return special.gammaln(eta + 1.0) - (eta + 1.0) * np.log(-theta)

    def dK_deta(self, theta, eta, order=1):
        if order == 1:
            return special.digamma(eta + 1.0) - np.log(-theta)
        return special.polygamma(order - 1, eta + 1.0)

    def in_domain(self, theta, eta):
        return theta < 0.0 and eta > -1.0

    def conditional_family(self, theta, eta):
        return Gamma(eta + 1.0, -1.0 / theta, "log")

    def sample(self, theta, eta, rng, size=None):
        return rng.gamma(eta + 1.0, -1.0 / theta, size=size)

    def to_canonical(self, interest, nuisance):
        return -1.0 / interest, nuisance - 1.0

    def to_classical(self, theta, eta):
        return -1.0 / theta, eta + 1.0

    def default_nr_start(self, theta, data):
        return 0.0

    def interest_to_theta(self, b):
        return -1.0 / b

    def theta_to_interest(self, theta):
        return -1.0 / theta


class NormalVarianceModel(TwoParamExpFamily):
    """N(mu, sigma2) with the variance of interest and the mean as nuisance.

    Canonical coordinates: ``theta = -1/(2 sigma2)`` with ``t(x) = x^2``;
    ``eta = mu / sigma2`` with ``u(x) = x``.
    """

    name = "normal_variance"

    def t_stat(self, x):
        return np.asarray(x, dtype=float) ** 2

    def u_stat(self, x):
        return np.asarray(x, dtype=float)

    def log_h(self, x):
        return np.full_like(np.asarray(x, dtype=float), -0.5 * _LOG_2PI)

    def log_K(self, theta, eta):
        return -eta * eta / (4.0 * theta) - 0.5 * np.log(-2.0 * theta)

    def dK_deta(self, theta, eta, order=1):
        return {1: -eta / (2.0 * theta), 2: -1.0 / (2.0 * theta), 3: 0.0}[order]

    def in_domain(self, theta, eta):
        return theta < 0.0 and math.isfinite(eta)

    def conditional_family(self, theta, eta):
        return Normal(-eta / (2.0 * theta), -1.0 / (2.0 * theta))

    def sample(self, theta, eta, rng, size=None):
        return rng.normal(-eta / (2.0 * theta), math.sqrt(-1.0 / (2.0 * theta)), size=size)

    def to_canonical(self, interest, nuisance):
        return -1.0 / (2.0 * interest), nuisance / interest

    def to_classical(self, theta, eta):
        return -1.0 / (2.0 * theta), -eta / (2.0 * theta)

    def default_nr_start(self, theta, data):
        return -2.0 * theta * float(np.mean(data))

    def interest_to_theta(self, sigma2):
        return -1.0 / (2.0 * sigma2)

    def theta_to_interest(self, theta):
        return -1.0 / (2.0 * theta)


class NormalParabola:
    """Pairs ``(X, Y)`` of independent normals ``N(psi, sigma2)`` and ``N(psi^2, sigma2)``.

    The variance ``sigma2`` is the parameter of interest (``theta``) and the
    mean ``psi`` the nuisance (``eta``). Data are arrays of shape ``(n, 2)``.
    The likelihood in ``psi`` is bimodal; the score uses sample means,

        (xbar - psi) + 2 psi (ybar - psi^2) = 0,

    up to the positive factor ``n / sigma2``.
    """

    name = "normal_parabola"
    n_parts = 2

    def log_pdf(self, xy, theta, eta):
        xy = np.asarray(xy, dtype=float)
        return (Normal(eta, theta).log_pdf(xy[..., 0]) + Normal(eta * eta, theta).log_pdf(xy[..., 1]))

    def loglik(self, theta, eta, data):
        return float(np.sum(self.log_pdf(data, theta, eta)))

    def in_domain(self, theta, eta):
        return theta > 0.0 and math.isfinite(eta)

    def nuisance_in_domain(self, theta, eta):
        return self.in_domain(theta, eta)

    def nuisance_loglik(self, theta, eta, data):
        data = np.asarray(data, dtype=float)
        n = data.shape[0]
        xbar, ybar = data.mean(axis=0)
        return float(-n / (2.0 * theta) * ((xbar - eta) ** 2 + (ybar - eta * eta) ** 2))

    def nuisance_score(self, theta, eta, data):
        data = np.asarray(data, dtype=float)
        n = data.shape[0]
        xbar, ybar = data.mean(axis=0)
        return float(n / theta * ((xbar - eta) + 2.0 * eta * (ybar - eta * eta)))

    def nuisance_hessian(self, theta, eta, data):
        data = np.asarray(data, dtype=float)
        n = data.shape[0]
        ybar = data[:, 1].mean()
        return float(n / theta * (-1.0 + 2.0 * ybar - 6.0 * eta * eta))

    def score_roots(self, data):
        """Real roots in ``psi`` of the score equation, sorted."""
        xbar, ybar = np.asarray(data, dtype=float).mean(axis=0)
        r = np.roots([-2.0, 0.0, 2.0 * ybar - 1.0, xbar])
        return np.sort(r[np.abs(r.imag) < 1e-9].real)

    def sample(self, theta, eta, rng, size=None):
        n = 1 if size is None else size
        sd = math.sqrt(theta)
        out = np.column_stack([rng.normal(eta, sd, size=n), rng.normal(eta * eta, sd, size=n)])
        return out[0] if size is None else out

    def default_nr_start(self, theta, data):
        return float(np.mean(np.asarray(data)[:, 0]))

    def to_canonical(self, interest, nuisance):
        return interest, nuisance

    def to_classical(self, theta, eta):
        return theta, eta

    def interest_to_theta(self, sigma2):
        return sigma2

    def theta_to_interest(self, theta):
        return theta

    def split(self, data):
        data = np.asarray(data, dtype=float)
        return [data[..., 0], data[..., 1]]

    def conditional_parts(self, theta, eta):
        return [Normal(eta, theta), Normal(eta * eta, theta)]

    def test_statistic(self, parts, centres):
        """Squared deviations from the conditioning means, summed over both coordinates."""
        return sum(np.sum((p - c) ** 2, axis=-1) for p, c in zip(parts, centres))


class NormalLocationModel:
    """``N(mu, var)`` with known variance and the mean of interest; there is no nuisance.

    Conditioning on ``sum X_i`` removes the interest parameter itself, so
    conditional inference about ``mu`` carries no information. Used to
    exercise the flat-profile diagnostics.
    """

    name = "normal_location"
    n_parts = 1
    has_nuisance = False

    def __init__(self, var=1.0):
        self.var = float(var)

    def loglik(self, theta, eta, data):
        return float(np.sum(Normal(theta, self.var).log_pdf(data)))

    def sample(self, theta, eta, rng, size=None):
        return rng.normal(theta, math.sqrt(self.var), size=size)

    def interest_to_theta(self, mu):
        return mu

    def theta_to_interest(self, theta):
        return theta

    def split(self, data):
        return [np.asarray(data, dtype=float)]

    def conditional_parts(self, theta, eta):
        return [Normal(theta, self.var)]

    def test_statistic(self, parts, centres=None):
        return np.sum(parts[0], axis=-1)


def mle_nuisance(model, theta0, data, nr_start=None, max_iter=100):
    """Nuisance MLE at fixed interest parameter by damped Newton-Raphson.

    The start point matters: for multimodal likelihoods (the normal
    parabola) the iteration ends in the basin of ``nr_start``. Damping only
    halves the step when the likelihood would decrease, it never changes
    the basin.

    Raises
    ------
    NewtonDiverged
        If an iterate leaves the parameter space or 100 steps are exceeded.
    """
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n == 0:
        raise ValueError("data must be nonempty")
    eta = float(model.default_nr_start(theta0, data) if nr_start is None else nr_start)
    if not model.nuisance_in_domain(theta0, eta):
        raise NewtonDiverged(f"start {eta} outside the parameter space")
    ll = model.nuisance_loglik(theta0, eta, data)
    gtol = 1e-10 * n
    for _ in range(max_iter):
        g = model.nuisance_score(theta0, eta, data)
        if abs(g) <= gtol:
            return eta
        h = model.nuisance_hessian(theta0, eta, data)
        # ascent direction even where the likelihood is locally convex
        step = -g / h if h < 0 else (g / abs(h) if h != 0 else g)
        lam = 1.0
        for _ in range(80):
            cand = eta + lam * step
            if model.nuisance_in_domain(theta0, cand):
                llc = model.nuisance_loglik(theta0, cand, data)
                if llc >= ll - 1e-13 * abs(ll):
                    break
            lam *= 0.5
        else:
            raise NewtonDiverged(f"no ascent step from eta={eta}")
        if cand == eta:
            return eta
        eta, ll = cand, llc
    raise NewtonDiverged(f"no convergence in {max_iter} Newton-Raphson steps (eta={eta})")


_FAMILIES = {
    "exponential": (Exponential, {"rate"}),
    "gamma": (Gamma, {"shape", "scale", "statistic"}),
    "normal": (Normal, {"mean", "var"}),
    "inverse_gaussian": (InverseGaussian, {"mean", "shape", "statistic"}),
}

_MODELS = {
    "gamma_shape": GammaShapeModel,
    "gamma_scale": GammaScaleModel,
    "normal_variance": NormalVarianceModel,
    "normal_parabola": NormalParabola,
    "normal_location": NormalLocationModel,
}


def make_family(name, **params) -> TiltableFamily:
    """Build a family from its string identifier and named parameters."""
    try:
        cls, allowed = _FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; expected one of {sorted(_FAMILIES)}") from None
    unknown = set(params) - allowed
    if unknown:
        raise ValueError(f"unknown parameters for {name}: {sorted(unknown)}")
    if "statistic" in params:
        params["statistic_kind"] = params.pop("statistic")
    return cls(**params)


def make_model(name):
    try:
        return _MODELS[name]()
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(_MODELS)}") from None
