r"""Monte Carlo tests of ``H0: theta = theta0`` with a nuisance parameter.

Two ways of calibrating the same statistic are provided.

Conditional
    The nuisance ``eta`` is removed by conditioning on its sufficient
    statistic ``U_{1,n}``. The ``L - 1`` reference statistics are computed
    on runs of length ``k`` drawn from the proxy of the conditional density
    under ``(theta0, eta_hat)``; since ``U`` is sufficient for ``eta`` the
    plug-in value is immaterial.
Bootstrap
    The reference runs are i.i.d. draws from the fitted model
    ``P_{theta0, eta_hat}``, so the outcome depends on which root of the
    likelihood equation the Newton-Raphson iteration found.

The observed statistic is computed on the first ``k`` data coordinates and
``H0`` is rejected at level ``M / L`` when its rank among the ``L`` values
is at most ``M``; ties are broken uniformly at random.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import NewtonDiverged, NuisanceMleFailed
from .families import mle_nuisance
from .proxy import default_k, sample_proxy

__all__ = [
    "McTestSpec",
    "McTestReport",
    "PowerRow",
    "PowerCurve",
    "run_conditional_test",
    "run_bootstrap_test",
    "run_test",
    "mc_p_value",
    "power_curve",
    "METHODS",
]

METHODS = ("conditional", "bootstrap")
ALTERNATIVES = ("greater", "less", "two-sided")


@dataclass(frozen=True)
class McTestSpec:
    """Configuration of one Monte Carlo test.

    Parameters
    ----------
    model
        A two-parameter model (see :mod:`condinf.families`).
    theta0 : float
        Interest parameter under ``H0`` in canonical coordinates.
    L : int
        Total number of statistics, observed one included (at least 20).
    k : int or None
        Run length; defaults to ``n - ceil(sqrt(n))``.
    method : {"conditional", "bootstrap"}
    nr_start : float or None
        Newton-Raphson start for the nuisance MLE; ``None`` uses the model's
        default.
    alternative : {"greater", "less", "two-sided"}
        Direction of extreme values of the statistic.
    proxy_options : dict
        Forwarded to :func:`condinf.proxy.sample_proxy`.
    """

    model: object
    theta0: float
    L: int = 100
    k: int | None = None
    method: str = "conditional"
    nr_start: float | None = None
    alternative: str = "greater"
    proxy_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.L < 20:
            raise ValueError("L must be at least 20")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.alternative not in ALTERNATIVES:
            raise ValueError(f"alternative must be one of {ALTERNATIVES}")

    def run_length(self, n: int) -> int:
        k = default_k(n) if self.k is None else int(self.k)
        if not 2 <= k <= n - 2:
            raise ValueError(f"need 2 <= k <= n - 2, got k={k}, n={n}")
        return k


@dataclass
class McTestReport:
    t_obs: float
    simulated: np.ndarray
    rank_of_obs: int
    p_value: float
    method: str
    aborts: int = 0
    eta_hat: float = float("nan")
    acceptance_rate: float = 1.0

    def rejects(self, alpha: float) -> bool:
        return self.p_value <= alpha + 1e-12

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "t_obs", "rank_of_obs", "p_value", "L", "eta_hat", "aborts"])
        w.writerow([self.method, f"{self.t_obs:.16e}", self.rank_of_obs, f"{self.p_value:.16e}",
                    self.simulated.size + 1, f"{self.eta_hat:.16e}", self.aborts])
        w.writerow([])
        w.writerow(["l", "t_l"])
        for i, v in enumerate(self.simulated, start=2):
            w.writerow([i, f"{v:.16e}"])
        return buf.getvalue()


def mc_p_value(t_obs: float, simulated, rng, alternative: str = "greater"):
    """Rank of ``t_obs`` among the ``L`` statistics and the p-value ``rank / L``.

    The rank counts values at least as extreme as ``t_obs``, the observed
    one included. Ties with ``t_obs`` are resolved by placing it at a
    uniformly random position among them, so that under exchangeability the
    rank is exactly uniform on ``{1, ..., L}``. For the two-sided version
    the p-value is twice the smaller one-sided p-value, capped at 1.
    """
    sim = np.asarray(simulated, dtype=float)
    L = sim.size + 1
    if alternative == "two-sided":
        r_hi, _ = mc_p_value(t_obs, sim, rng, "greater")
        r_lo = L + 1 - r_hi
        rank = min(r_hi, r_lo)
        return rank, min(1.0, 2.0 * rank / L)
    if alternative == "greater":
        beyond = int(np.sum(sim > t_obs))
    else:
        beyond = int(np.sum(sim < t_obs))
    ties = int(np.sum(sim == t_obs))
    rank = 1 + beyond + (int(rng.integers(0, ties + 1)) if ties else 0)
    return rank, rank / L


def _fit_nuisance(spec, data, eta_override):
    if eta_override is not None:
        return float(eta_override)
    try:
        return mle_nuisance(spec.model, spec.theta0, data, spec.nr_start)
    except NewtonDiverged as exc:
        raise NuisanceMleFailed(str(exc)) from exc


def _observed(spec, data):
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    k = spec.run_length(n)
    parts = spec.model.split(data)
    return n, k, parts


def run_conditional_test(spec: McTestSpec, data, rng, eta_override: float | None = None) -> McTestReport:
    """Monte Carlo test calibrated by co-sufficient runs from the proxy.

    Parameters
    ----------
    spec : McTestSpec
    data : array_like
        Observed sample (shape ``(n,)``, or ``(n, 2)`` for the parabola).
    rng : numpy.random.Generator
    eta_override : float, optional
        Use this nuisance value for the dominating density instead of the
        constrained MLE.

    Raises
    ------
    NuisanceMleFailed
    """
    spec = replace(spec, method="conditional")
    n, k, parts = _observed(spec, data)
    eta = _fit_nuisance(spec, data, eta_override)
    fams = spec.model.conditional_parts(spec.theta0, eta)
    sims, centres = [], []
    aborts = props = accs = 0
    for fam, part in zip(fams, parts):
        u_total = float(np.sum(fam.statistic(part)))
        centres.append(u_total / n)
        draw = sample_proxy(fam, u_total, n, k, rng, size=spec.L - 1, **spec.proxy_options)
        sims.append(draw.paths)
        aborts += draw.aborts
        props += draw.proposals
        accs += draw.accepted
    simulated = np.asarray(spec.model.test_statistic(sims, centres), dtype=float)
    t_obs = float(spec.model.test_statistic([p[:k] for p in parts], centres))
    rank, p = mc_p_value(t_obs, simulated, rng, spec.alternative)
    return McTestReport(t_obs, simulated, rank, p, "conditional", aborts, eta, accs / props if props else 1.0)


def run_bootstrap_test(spec: McTestSpec, data, rng) -> McTestReport:
    """Monte Carlo test calibrated by i.i.d. runs from the model fitted under ``H0``.

    The statistic, its centring and the run length are those of
    :func:`run_conditional_test`; only the reference distribution differs.
    """
    spec = replace(spec, method="bootstrap")
    n, k, parts = _observed(spec, data)
    eta = _fit_nuisance(spec, data, None)
    fams = spec.model.conditional_parts(spec.theta0, eta)
    sims, centres = [], []
    for fam, part in zip(fams, parts):
        centres.append(float(np.sum(fam.statistic(part))) / n)
        sims.append(np.asarray(fam.sample(rng, size=(spec.L - 1, k)), dtype=float))
    simulated = np.asarray(spec.model.test_statistic(sims, centres), dtype=float)
    t_obs = float(spec.model.test_statistic([p[:k] for p in parts], centres))
    rank, p = mc_p_value(t_obs, simulated, rng, spec.alternative)
    return McTestReport(t_obs, simulated, rank, p, "bootstrap", 0, eta)


def run_test(spec: McTestSpec, data, rng) -> McTestReport:
    if spec.method == "conditional":
        return run_conditional_test(spec, data, rng)
    return run_bootstrap_test(spec, data, rng)


@dataclass(frozen=True)
class PowerRow:
    theta: float
    alpha: float
    power: float
    reps: int
    method: str
    seed: int
    failures: int = 0


@dataclass
class PowerCurve:
    rows: list[PowerRow]
    p_values: dict = field(default_factory=dict, repr=False)

    CSV_COLUMNS = ("theta", "alpha", "power", "reps", "method", "seed")

    def power(self, theta, alpha):
        for r in self.rows:
            if r.theta == theta and r.alpha == alpha:
                return r.power
        raise KeyError((theta, alpha))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in sorted(self.rows, key=lambda r: (r.method, r.theta, r.alpha)):
            w.writerow([f"{r.theta:.16e}", f"{r.alpha:.16e}", f"{r.power:.16e}", r.reps, r.method, r.seed])
        return buf.getvalue()


def power_curve(spec: McTestSpec, theta_grid, alpha_grid, datasets_per_theta: int, n: int, eta_true: float,
                data_stream, test_stream, seed: int = 0) -> PowerCurve:
    """Rejection frequencies of the test of ``H0: theta = spec.theta0``.

    For each ``theta`` in the grid, ``datasets_per_theta`` samples of size
    ``n`` are drawn under ``(theta, eta_true)`` and tested.

    Parameters
    ----------
    spec : McTestSpec
    theta_grid, alpha_grid : sequence of float
        Canonical interest values and test levels.
    datasets_per_theta, n : int
    eta_true : float
        Canonical nuisance value used to generate the data.
    data_stream, test_stream : callable
        ``(i_theta, j) -> Generator`` for the data and for the test's own
        draws. Using stream factories that ignore ``spec.method`` pairs the
        conditional and bootstrap tests on the same datasets and streams.
    seed : int
        Echoed in the rows.

    Notes
    -----
    A dataset whose nuisance MLE fails counts as a non-rejection; the
    number of such datasets is kept in ``PowerRow.failures``.
    """
    if not len(theta_grid) or not len(alpha_grid):
        raise ValueError("grids must be nonempty")
    rows, pvals = [], {}
    for i, theta in enumerate(theta_grid):
        ps = np.ones(datasets_per_theta)
        fails = 0
        for j in range(datasets_per_theta):
            data = spec.model.sample(theta, eta_true, data_stream(i, j), size=n)
            try:
                ps[j] = run_test(spec, data, test_stream(i, j)).p_value
            except NuisanceMleFailed:
                fails += 1
        pvals[float(theta)] = ps
        for a in alpha_grid:
            rows.append(PowerRow(float(theta), float(a), float(np.mean(ps <= a + 1e-12)), datasets_per_theta,
                                 spec.method, seed, fails))
    return PowerCurve(rows, pvals)
