r"""Recursive proxy of the conditional density of a run given a sum statistic.

Given ``U_{1,n} = u(X_1) + ... + u(X_n) = u_total`` the density of the
first ``k`` coordinates is approximated by

    g(x_1^k) = pi^{m_0}(x_1) * prod_{i=1}^{k-1} g(x_{i+1} | x_1^i)

where ``m_i = (u_total - u_{1,i}) / (n - i)``, ``pi^{m}`` is the member of
the family tilted so that ``E u(X) = m``, and each factor is

    g(x | x_1^i) = C_i p_X(x) n(mu_i, beta_i, u(x)),
    beta_i = s_i^2 (n - i - 1),
    alpha_i = t_i + mu3_i / (2 s_i^4 (n - i - 1)).

``t_i`` solves ``m(t_i) = m_i`` and ``s_i^2``, ``mu3_i`` are the second and
third cumulants of ``pi^{m_i}``.  Two centrings of the Gaussian factor are
available:

``"recentred"`` (default)
    ``mu_i = m_i + alpha_i beta_i``. This is what a first-order Edgeworth
    expansion of the density of the remaining ``n - i - 1`` terms gives; for
    normal samples every factor with ``i >= 1`` is then the exact
    conditional density.
``"literal"``
    ``mu_i = alpha_i beta_i``. Shrinks the conditional mean of each step by
    a factor ``(n - i - 1) / (n - i)`` in the normal case.

Internally every factor is written relative to ``pi^{m_i}``:

    g(x | x_1^i) = pi^{m_i}(x) exp(delta_i u - (u - m_i)^2 / (2 beta_i)) / Z_i

with ``delta_i = alpha_i - t_i`` (minus ``m_i / beta_i`` in the literal
centring). Parameters for which the statistic is sufficient enter only
through ``pi^{m_i}``, which is computed directly from ``m_i``; they drop out
of the proxy exactly, not just up to rounding of ``t_i``.

Sampling uses acceptance-rejection. The default proposal is
``pi^{m_i}`` tilted further by ``delta_i``, for which the acceptance
probability is ``exp(-(u - m_i)^2 / (2 beta_i))`` and the rate is close to
one. ``proposal="base"`` uses the family itself (``p_{X, theta*}``) with
envelope constant ``1 / sqrt(2 pi beta_i)``; its acceptance rate degrades
when ``theta*`` is far from the data.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import AlphaOutOfRange, EnvelopeViolated, QuadratureFailure
from .families import TiltableFamily
from .numerics import integrate_adaptive

__all__ = [
    "StepRecord",
    "TypicalityReport",
    "ProxyChain",
    "ProxySample",
    "step_density",
    "log_proxy_likelihood",
    "sample_proxy",
    "check_typicality",
    "default_k",
    "CENTRINGS",
    "PROPOSALS",
]

log = logging.getLogger(__name__)

CENTRINGS = ("recentred", "literal")
PROPOSALS = ("tilted", "base")

_LOG_2PI = math.log(2.0 * math.pi)
_ENVELOPE_SLACK = math.log1p(1e-9)
_QUAD_RTOL = 1e-10


def default_k(n: int) -> int:
    """``n - ceil(sqrt(n))``: long runs with ``n - k`` still growing."""
    return n - math.ceil(math.sqrt(n))


@dataclass(frozen=True)
class StepRecord:
    """Quantities of one factor ``g(x_{i+1} | x_1^i)``, ``i >= 1``.

    ``log_Ci`` is the log normalising constant in the form
    ``C_i p_X(x) n(mu_i, beta_i, u(x))``.
    """

    i: int
    m_i: float
    t_i: float
    s2_i: float
    mu3_i: float
    beta: float
    alpha_shift: float
    log_Ci: float


@dataclass(frozen=True)
class TypicalityReport:
    lil_ratio: float
    flag: str

    @property
    def ok(self) -> bool:
        return self.flag == "ok"


def check_typicality(family: TiltableFamily, u_total: float, n: int, threshold: float = 3.0) -> TypicalityReport:
    """Compare ``u_total`` with the iterated-logarithm scale of its fluctuations.

    The ratio is ``|u_total - n E u(X)| / (sd u(X) sqrt(2 n log log n))``
    under ``family``; values above ``threshold`` are flagged ``"atypical"``.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    mean, var = family.stat_mean_var()
    ratio = abs(u_total - n * float(mean)) / (math.sqrt(float(var)) * math.sqrt(2.0 * n * math.log(math.log(n))))
    return TypicalityReport(lil_ratio=ratio, flag="ok" if ratio <= threshold else "atypical")


def _check_centring(centring):
    if centring not in CENTRINGS:
        raise ValueError(f"centring must be one of {CENTRINGS}, got {centring!r}")


def _step_terms(family, m, remaining, centring):
    """Tilted member, beta and delta for steps with ``remaining = n - i`` (>= 2)."""
    ft = family.tilted_to_mean(m)
    _, s2, mu3 = ft.cumulants(0.0)
    nrest = remaining - 1
    beta = s2 * nrest
    delta = mu3 / (2.0 * s2 * s2 * nrest)
    if centring == "literal":
        delta = delta - m / beta
    return ft, s2, mu3, beta, delta


def _proposal_shift(ft, delta):
    """Extra tilt applied to ``pi^{m_i}`` for the proposal: ``delta`` when admissible, else 0."""
    lo, hi = ft.mgf_domain()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    span = np.where(np.isfinite(hi), np.abs(hi), 1.0)
    inside = (delta > lo) & (delta < hi - 1e-8 * span)
    return np.where(inside, delta, 0.0)


@functools.lru_cache(maxsize=8192)
def _log_gauss_expectation(prop, centre, beta):
    """``log E_prop exp(-(u - centre)^2 / (2 beta))`` for a scalar proposal by quadrature.

    Memoized: the proxy depends on the dominating density only through the
    tilted members, so sweeps over sufficient parameters hit the cache.
    """
    loc, scale = prop.location_scale()

    def integrand(x):
        u = float(prop.statistic(x))
        return math.exp(float(prop.log_pdf(x)) - (u - centre) ** 2 / (2.0 * beta))

    res = integrate_adaptive(integrand, prop.support(), rel_tol=_QUAD_RTOL, center=loc, scale=scale)
    if not res.value > 0:
        raise QuadratureFailure(f"step normaliser integral is {res.value}")
    return math.log(res.value)


def _log_normaliser(ft, beta, delta, m):
    """``log Z_i`` elementwise; closed form when the family provides one, else quadrature per entry."""
    tau = _proposal_shift(ft, delta)
    prop = ft.tilted(tau)
    d = delta - tau
    centre = m + d * beta
    head = ft.log_mgf(tau) + d * m + 0.5 * d * d * beta
    closed = prop.log_gaussian_factor_mean(centre, beta)
    if closed is not None:
        return head + closed
    centre = np.atleast_1d(centre)
    beta_a = np.broadcast_to(beta, centre.shape)
    out = np.empty(centre.shape)
    for j in range(centre.shape[0]):
        out[j] = _log_gauss_expectation(prop.take(j), float(centre[j]), float(beta_a[j]))
    return head + (out if np.ndim(m) else out[0])


@dataclass
class ProxyChain:
    """Sequential state of the proxy for one path.

    ``u_running`` is the sum of the statistic over the coordinates
    accepted so far and ``i`` their number. Use :meth:`log_density` to
    evaluate the next factor and :meth:`advance` to append a coordinate.
    """

    family: TiltableFamily
    n: int
    k: int
    u_total: float
    centring: str = "recentred"
    u_running: float = 0.0
    i: int = 0
    steps: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        _check_centring(self.centring)
        if not 1 <= self.k <= self.n - 1:
            raise ValueError(f"need 1 <= k <= n - 1, got k={self.k}, n={self.n}")

    @property
    def m_current(self) -> float:
        return (self.u_total - self.u_running) / (self.n - self.i)

    def _terms(self):
        if self.i in self._cache:
            return self._cache[self.i]
        if self.i >= self.k:
            raise ValueError("chain already holds k coordinates")
        m = self.m_current
        lo, hi = self.family.stat_range()
        if not lo < m < hi:
            raise AlphaOutOfRange(f"conditioning mean {m} left the statistic range at step {self.i}", step=self.i)
        if self.i == 0:
            terms = (self.family.tilted_to_mean(m), None)
        else:
            ft, s2, mu3, beta, delta = _step_terms(self.family, m, self.n - self.i, self.centring)
            log_z = float(_log_normaliser(ft, beta, delta, m))
            terms = (ft, (float(s2), float(mu3), float(beta), float(delta), log_z))
        self._cache = {self.i: terms}
        return terms

    def record(self) -> StepRecord:
        """Parameters of the current factor (``i >= 1``)."""
        ft, rest = self._terms()
        if rest is None:
            raise ValueError("step 0 is the tilted density itself and has no Gaussian factor")
        s2, mu3, beta, delta, log_z = rest
        m = self.m_current
        t = float(self.family.tilt_parameter(m))
        alpha = t + mu3 / (2.0 * s2 * s2 * (self.n - self.i - 1))
        mu_g = m + alpha * beta if self.centring == "recentred" else alpha * beta
        log_ci = (-log_z - float(self.family.log_mgf(t)) + 0.5 * math.log(2 * math.pi * beta)
                  + (mu_g * mu_g - m * m) / (2.0 * beta))
        return StepRecord(self.i, m, t, s2, mu3, beta, alpha, log_ci)

    def log_density(self, x):
        """Log of the current factor at ``x`` (scalar or array)."""
        ft, rest = self._terms()
        lp = ft.log_pdf(x)
        if rest is None:
            return lp
        _, _, beta, delta, log_z = rest
        u = ft.statistic(x)
        m = self.m_current
        return lp + delta * u - (u - m) ** 2 / (2.0 * beta) - log_z

    def advance(self, x):
        if self.i >= self.k:
            raise ValueError("chain already holds k coordinates")
        if self.i >= 1:
            self.steps.append(self.record())
        self.u_running += float(self.family.statistic(x))
        self.i += 1


def step_density(chain: ProxyChain, x_next):
    """Log-density of the next coordinate given the chain state."""
    return chain.log_density(x_next)


def log_proxy_likelihood(family: TiltableFamily, u_total: float, n: int, x, centring: str = "recentred",
                         per_step: bool = False):
    """Log of the proxy density of ``x_1..x_k`` given ``U_{1,n} = u_total``.

    All factors are evaluated at once; normalising constants come from the
    family's closed form when it has one and from adaptive quadrature
    otherwise.

    Parameters
    ----------
    family : TiltableFamily
        Plays the role of ``p_{X, theta*}``; parameters for which the
        statistic is sufficient do not affect the result.
    u_total : float
        Observed value of the sum statistic over all ``n`` coordinates.
    n : int
        Full sample size.
    x : array_like, length k with ``1 <= k <= n - 1``
    centring : {"recentred", "literal"}
    per_step : bool
        Return the array of log-factors instead of their sum.

    Raises
    ------
    AlphaOutOfRange
        With ``.step`` set to the index where ``m_i`` left the range.
    """
    _check_centring(centring)
    x = np.asarray(x, dtype=float)
    k = x.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n - 1, got k={k}, n={n}")
    u = np.asarray(family.statistic(x), dtype=float)
    u_run = np.concatenate(([0.0], np.cumsum(u)[:-1]))
    idx = np.arange(k)
    m = (u_total - u_run) / (n - idx)
    lo, hi = family.stat_range()
    bad = np.flatnonzero(~((m > lo) & (m < hi)))
    if bad.size:
        j = int(bad[0])
        raise AlphaOutOfRange(f"conditioning mean {m[j]} left the statistic range at step {j}", step=j)
    out = np.empty(k)
    out[0] = family.tilted_to_mean(m[0]).log_pdf(x[0])
    if k > 1:
        ms = m[1:]
        ft, _, _, beta, delta = _step_terms(family, ms, n - idx[1:], centring)
        try:
            log_z = _log_normaliser(ft, beta, delta, ms)
        except QuadratureFailure as exc:
            raise QuadratureFailure(f"{exc} (steps 1..{k - 1})") from exc
        uu = u[1:]
        out[1:] = ft.log_pdf(x[1:]) + delta * uu - (uu - ms) ** 2 / (2.0 * beta) - log_z
    return out if per_step else float(np.sum(out))


@dataclass
class ProxySample:
    """Draws from the proxy plus acceptance-rejection diagnostics."""

    paths: np.ndarray
    proposals: int
    accepted: int
    aborts: int
    max_log_envelope_ratio: float
    typicality: TypicalityReport | None = None

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 1.0


def _envelope_log_ratio(family, x, u, m, t, delta, beta, tau_abs, prop):
    """Independent evaluation of target / (M * proposal) from the defining formula."""
    mu_g = m + (t + delta) * beta
    log_target = family.log_pdf(x) - 0.5 * (_LOG_2PI + np.log(beta)) - (u - mu_g) ** 2 / (2.0 * beta)
    log_m = (family.log_mgf(tau_abs) - 0.5 * (_LOG_2PI + np.log(beta)) - tau_abs * mu_g
             + 0.5 * tau_abs * tau_abs * beta)
    return log_target - prop.log_pdf(x) - log_m


def _run_chains(family, u_total, n, k, rng, size, centring, proposal, check_envelope, max_tries, prefix=None):
    paths = np.empty((size, k))
    alive = np.ones(size, dtype=bool)
    u_run = np.zeros(size)
    n_prop = n_acc = 0
    worst = -math.inf
    lo, hi = family.stat_range()

    if prefix is None:
        m0 = u_total / n
        paths[:, 0] = family.tilted_to_mean(m0).sample(rng, size=size)
        n_prop += size
        n_acc += size
        start = 1
    else:
        start = prefix.size
        paths[:, :start] = prefix
    u_run += np.sum(family.statistic(paths[:, :start]), axis=1)

    for i in range(start, k):
        m_all = (u_total - u_run) / (n - i)
        alive &= (m_all > lo) & (m_all < hi)
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        m = m_all[act]
        ft, _, _, beta, delta = _step_terms(family, m, n - i, centring)
        beta = np.broadcast_to(beta, m.shape)
        delta = np.broadcast_to(delta, m.shape)
        need_t = check_envelope or proposal == "base"
        t = family.tilt_parameter(m) if need_t else None
        if proposal == "tilted":
            tau = _proposal_shift(ft, delta)
            prop_all = ft.tilted(tau)
            tau_abs = t + tau if need_t else None
        else:
            tau = -t
            prop_all = None
            tau_abs = np.zeros_like(m)
        centre = m + (delta - tau) * beta

        x = np.empty(act.size)
        pending = np.arange(act.size)
        for _ in range(max_tries):
            prop = family if prop_all is None else prop_all.take(pending)
            draw = np.asarray(prop.sample(rng, size=pending.size) if prop_all is None else prop.sample(rng))
            uu = np.asarray(family.statistic(draw), dtype=float)
            b = beta[pending]
            log_acc = -(uu - centre[pending]) ** 2 / (2.0 * b)
            if check_envelope:
                lr = _envelope_log_ratio(family, draw, uu, m[pending], t[pending], delta[pending], b,
                                         tau_abs[pending], prop)
                top = float(np.max(lr))
                worst = max(worst, top)
                if top > _ENVELOPE_SLACK:
                    raise EnvelopeViolated(f"acceptance ratio exp({top}) exceeds 1 at step {i}")
            ok = np.log(rng.random(pending.size)) < log_acc
            n_prop += pending.size
            n_acc += int(ok.sum())
            x[pending[ok]] = draw[ok]
            pending = pending[~ok]
            if pending.size == 0:
                break
        else:
            raise EnvelopeViolated(f"acceptance-rejection did not finish within {max_tries} rounds at step {i}")
        paths[act, i] = x
        u_run[act] += family.statistic(x)
    return paths, alive, n_prop, n_acc, worst


def sample_proxy(family: TiltableFamily, u_total: float, n: int, k: int, rng, size: int | None = None,
                 centring: str = "recentred", proposal: str = "tilted", check_envelope: bool = True,
                 max_tries: int = 100_000, max_aborts: int | None = None, prefix=None) -> ProxySample:
    """Draw runs ``X_1..X_k`` from the proxy conditioned on ``U_{1,n} = u_total``.

    Each chain is built coordinate by coordinate with acceptance-rejection;
    ``size`` chains are advanced together. A chain whose conditioning mean
    leaves the statistic range is discarded entirely and redrawn (the count
    is reported in ``aborts``).

    Parameters
    ----------
    family : TiltableFamily
        The dominating density ``p_{X, theta*}``.
    u_total, n, k
        Conditioning value, full sample size and run length
        (``1 <= k <= n - 1``).
    rng : numpy.random.Generator
    size : int, optional
        Number of independent runs; ``paths`` has shape ``(size, k)``, or
        ``(k,)`` when omitted.
    centring : {"recentred", "literal"}
    proposal : {"tilted", "base"}
    check_envelope : bool
        Recompute every acceptance ratio from the defining formula and raise
        :class:`EnvelopeViolated` if one exceeds 1 by more than ``1e-9``.
    prefix : array_like, optional
        Observed first coordinates ``x_1..x_j`` (``1 <= j < k``). Every run
        starts with them and continues from the chain state they define;
        ``paths`` includes them.

    Raises
    ------
    AlphaOutOfRange
        If ``u_total / n`` is outside the statistic range, or too many
        chains had to be redrawn.
    """
    _check_centring(centring)
    if proposal not in PROPOSALS:
        raise ValueError(f"proposal must be one of {PROPOSALS}")
    if not 1 <= k <= n - 1:
        raise ValueError(f"need 1 <= k <= n - 1, got k={k}, n={n}")
    lo, hi = family.stat_range()
    if not lo < u_total / n < hi:
        raise AlphaOutOfRange(f"u_total / n = {u_total / n} outside the statistic range ({lo}, {hi})", step=0)
    if prefix is not None:
        prefix = np.asarray(prefix, dtype=float).ravel()
        if not 1 <= prefix.size < k:
            raise ValueError(f"prefix length must lie in [1, k - 1], got {prefix.size}")
        u_pre = np.cumsum(family.statistic(prefix))
        m_pre = (u_total - u_pre) / (n - np.arange(1, prefix.size + 1))
        bad = np.flatnonzero(~((m_pre > lo) & (m_pre < hi)))
        if bad.size:
            raise AlphaOutOfRange(f"prefix drives the conditioning mean out of range at step {bad[0] + 1}",
                                  step=int(bad[0]) + 1)
    report = check_typicality(family, u_total, n) if n >= 3 else None
    if report is not None and not report.ok:
        log.debug("conditioning value is atypical (LIL ratio %.2f)", report.lil_ratio)

    count = 1 if size is None else int(size)
    if max_aborts is None:
        max_aborts = 100 * count + 100
    out = np.empty((count, k))
    todo = np.arange(count)
    aborts = n_prop = n_acc = 0
    worst = -math.inf
    while todo.size:
        paths, alive, p, a, w = _run_chains(family, u_total, n, k, rng, todo.size, centring, proposal,
                                            check_envelope, max_tries, prefix)
        n_prop += p
        n_acc += a
        worst = max(worst, w)
        out[todo[alive]] = paths[alive]
        todo = todo[~alive]
        aborts += todo.size
        if aborts > max_aborts:
            raise AlphaOutOfRange(f"{aborts} chains left the statistic range; conditioning value too extreme")
    return ProxySample(paths=out[0] if size is None else out, proposals=n_prop, accepted=n_acc,
                       aborts=aborts, max_log_envelope_ratio=worst, typicality=report)
