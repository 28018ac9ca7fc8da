import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from condinf.exceptions import AlphaOutOfRange, NewtonDiverged, OutOfDomain
from condinf.families import (Exponential, Gamma, GammaScaleModel, GammaShapeModel, InverseGaussian, Normal,
                              NormalParabola, NormalVarianceModel, base_sample, cumulants_at, inv_digamma,
                              make_family, make_model, mle_nuisance, tilt)
from condinf.oracles import cumulant_crosscheck, random_tilts

FAMILIES = [
    Exponential(1.0),
    Exponential(2.5),
    Gamma(2.0, 1.0, "x"),
    Gamma(0.7, 3.0, "x"),
    Gamma(2.0, 1.0, "log"),
    Gamma(5.0, 0.5, "log"),
    Normal(0.0, 1.0),
    Normal(-1.0, 4.0),
    InverseGaussian(1.0, 1.0, "x"),
    InverseGaussian(2.0, 3.0, "x"),
    InverseGaussian(1.0, 1.0, "inv"),
    InverseGaussian(0.5, 2.0, "inv"),
]
IDS = [f"{f.name}-{getattr(f, 'statistic_kind', 'x')}-{i}" for i, f in enumerate(FAMILIES)]


def _integral(fam, g):
    lo, hi = fam.support()
    loc, scale = fam.location_scale()
    pts = [loc] if lo < loc < hi else None
    return integrate.quad(lambda x: g(x) * math.exp(fam.log_pdf(x)), lo, hi, points=pts if math.isfinite(lo)
                          and math.isfinite(hi) else None, limit=400, epsabs=0, epsrel=1e-11)[0]


class TestTilt:
    def test_exponential(self):
        f = tilt(Exponential(1.0), 2.0)
        assert f == Exponential(0.5)
        assert Exponential(1.0).solve_tilt(2.0) == pytest.approx(0.5, abs=1e-15)
        assert _integral(f, lambda x: 1.0) == pytest.approx(1.0, abs=1e-9)
        assert _integral(f, lambda x: x) == pytest.approx(2.0, abs=1e-8)

    def test_gamma_scale(self):
        f = tilt(Gamma(2.0, 1.0), 4.0)
        assert (f.shape, f.scale) == (2.0, 2.0)
        assert Gamma(2.0, 1.0).solve_tilt(4.0) == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("fam", FAMILIES, ids=IDS)
    def test_identity_tilt(self, fam):
        m = float(fam.cumulants(0.0)[0])
        assert fam.solve_tilt(m) == pytest.approx(0.0, abs=1e-10)
        back = tilt(fam, m)
        x = np.linspace(0.2, 3.0, 7)
        np.testing.assert_allclose(back.log_pdf(x), fam.log_pdf(x), rtol=1e-10, atol=1e-10)

    @pytest.mark.parametrize("fam", FAMILIES, ids=IDS)
    def test_tilted_mean_by_quadrature(self, fam):
        rng = np.random.default_rng(7)
        for t in random_tilts(fam, rng, 20):
            alpha = float(fam.cumulants(t)[0])
            ft = tilt(fam, alpha)
            assert _integral(ft, lambda x: float(ft.statistic(x))) == pytest.approx(alpha, abs=1e-6 * max(1, abs(alpha)))

    @pytest.mark.parametrize("fam", FAMILIES, ids=IDS)
    def test_tilt_parameter_matches_numeric_solver(self, fam):
        rng = np.random.default_rng(3)
        ts = random_tilts(fam, rng, 10)
        ms = np.asarray(fam.cumulants(ts)[0])
        closed = fam.tilt_parameter(ms)
        numeric = np.array([fam._solve_tilt_numeric(float(m)) for m in ms])
        np.testing.assert_allclose(closed, ts, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(numeric, ts, rtol=1e-8, atol=1e-8)

    @pytest.mark.parametrize("fam", FAMILIES, ids=IDS)
    def test_tilted_and_tilted_to_mean_agree(self, fam):
        t = float(random_tilts(fam, np.random.default_rng(1), 1)[0])
        a = fam.tilted(t)
        b = fam.tilted_to_mean(float(fam.cumulants(t)[0]))
        x = np.linspace(0.1, 4.0, 9)
        np.testing.assert_allclose(a.log_pdf(x), b.log_pdf(x), rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(a.log_pdf(x), fam.log_pdf(x) + t * fam.statistic(x) - fam.log_mgf(t),
                                   rtol=1e-9, atol=1e-9)

    def test_out_of_range(self):
        with pytest.raises(AlphaOutOfRange):
            tilt(Exponential(1.0), -1.0)
        with pytest.raises(AlphaOutOfRange):
            tilt(InverseGaussian(1.0, 1.0, "inv"), 0.0)
        with pytest.raises(AlphaOutOfRange):
            Gamma(2.0, 1.0).solve_tilt(math.inf)


class TestCumulants:
    def test_normal(self):
        assert cumulants_at(Normal(1.5, 2.0), 0.7) == pytest.approx((1.5 + 1.4, 2.0, 0.0))

    def test_exponential(self):
        assert cumulants_at(Exponential(1.0), 0.0) == pytest.approx((1.0, 1.0, 2.0))

    def test_gamma(self):
        assert cumulants_at(Gamma(2.0, 1.0), 0.0) == pytest.approx((2.0, 2.0, 4.0))

    def test_frozen_values(self):
        # digamma, trigamma, tetragamma at 2; moments of 1/X for IG(1, 1)
        assert cumulants_at(Gamma(2.0, 1.0, "log"), 0.0) == pytest.approx(
            (0.42278433509846713, 0.6449340668482264, -0.4041138063191885), rel=1e-14)
        assert cumulants_at(InverseGaussian(1.0, 1.0, "inv"), 0.0) == pytest.approx((2.0, 3.0, 11.0), rel=1e-14)
        assert cumulants_at(InverseGaussian(2.0, 3.0, "x"), 0.0) == pytest.approx((2.0, 8 / 3, 32 / 3), rel=1e-14)

    def test_out_of_domain(self):
        with pytest.raises(OutOfDomain):
            cumulants_at(Exponential(1.0), 1.0)
        with pytest.raises(OutOfDomain):
            cumulants_at(Gamma(2.0, 1.0, "log"), -2.5)

    @pytest.mark.parametrize("fam", FAMILIES, ids=IDS)
    def test_against_finite_differences(self, fam):
        rng = np.random.default_rng(11)
        assert cumulant_crosscheck(fam, random_tilts(fam, rng, 20)) <= 1e-4

    @pytest.mark.parametrize("fam", FAMILIES, ids=IDS)
    def test_invariants(self, fam):
        ts = random_tilts(fam, np.random.default_rng(5), 20)
        m, s2, _ = fam.cumulants(ts)
        assert np.all(s2 > 0)
        order = np.argsort(ts)
        assert np.all(np.diff(np.asarray(m)[order]) > 0)
        assert float(fam.log_mgf(0.0)) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("fam", FAMILIES, ids=IDS)
    def test_fourth_cumulant(self, fam):
        from condinf.numerics import differentiate
        t = float(random_tilts(fam, np.random.default_rng(2), 1)[0])
        d3 = lambda z: float(fam.cumulants(z)[2])
        assert float(fam.fourth_cumulant(t)) == pytest.approx(differentiate(d3, t, 1), rel=1e-5, abs=1e-6)


class TestDensities:
    @pytest.mark.parametrize("fam", FAMILIES, ids=IDS)
    def test_integrates_to_one(self, fam):
        assert _integral(fam, lambda x: 1.0) == pytest.approx(1.0, abs=1e-6)

    def test_against_scipy(self):
        x = np.linspace(0.1, 5, 11)
        np.testing.assert_allclose(Gamma(2.5, 1.5).log_pdf(x), stats.gamma(2.5, scale=1.5).logpdf(x), rtol=1e-12)
        np.testing.assert_allclose(InverseGaussian(2.0, 3.0).log_pdf(x),
                                   stats.invgauss(2.0 / 3.0, scale=3.0).logpdf(x), rtol=1e-10)
        np.testing.assert_allclose(Normal(1.0, 4.0).log_pdf(x), stats.norm(1.0, 2.0).logpdf(x), rtol=1e-12)
        assert np.isneginf(Exponential(1.0).log_pdf(-1.0))

    def test_closed_form_gaussian_factor_means(self):
        cases = [(Exponential(1.7), 0.5, 3.0), (Exponential(1.7), 2.0, 0.7), (Exponential(1.7), -1.0, 10.0),
                 (Normal(0.4, 2.0), 0.5, 3.0), (Normal(0.4, 2.0), -1.0, 10.0), (Gamma(2.0, 1.5, "x"), 3.0, 4.5),
                 (Gamma(2.0, 1.5, "x"), 10.0, 40.0), (Gamma(0.6, 1.0, "x"), 0.6, 0.6), (Gamma(0.6, 1.0, "x"), 5.0, 1.8)]
        for fam, c, beta in cases:
            lo, hi = fam.support()
            f = lambda x: math.exp(fam.log_pdf(x) - (float(fam.statistic(x)) - c) ** 2 / (2 * beta))
            if lo == 0:
                exact = (integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-13, limit=400)[0]
                         + integrate.quad(f, 1, math.inf, epsabs=0, epsrel=1e-13, limit=400)[0])
            else:
                exact = integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13, limit=400)[0]
            assert fam.log_gaussian_factor_mean(c, beta) == pytest.approx(math.log(exact), abs=1e-8)

    def test_quadrature_rule_declines_narrow_factors(self):
        assert Gamma(2.0, 1.5, "x").log_gaussian_factor_mean(2.0, 0.7) is None
        assert Gamma(2.0, 1.0, "x").log_gaussian_factor_mean(30.0, 5.0) is None
        assert Gamma(2.0, 1.0, "log").log_gaussian_factor_mean(0.0, 5.0) is None


class TestSampling:
    def test_means(self):
        rng = np.random.default_rng(0)
        assert base_sample(Exponential(1.0), rng, 100_000).mean() == pytest.approx(1.0, abs=0.02)
        assert base_sample(Gamma(2.0, 1.0), rng, 100_000).mean() == pytest.approx(2.0, abs=0.03)
        assert base_sample(InverseGaussian(1.0, 1.0), rng, 100_000).mean() == pytest.approx(1.0, abs=0.03)

    def test_inverse_gaussian_law(self):
        x = base_sample(InverseGaussian(2.0, 3.0), np.random.default_rng(1), 20_000)
        assert stats.kstest(x, stats.invgauss(2.0 / 3.0, scale=3.0).cdf).pvalue > 0.01

    def test_array_parameters_broadcast(self):
        fam = Exponential(1.0).tilted_to_mean(np.array([1.0, 2.0, 4.0]))
        assert fam.sample(np.random.default_rng(0)).shape == (3,)
        assert fam.take(np.array([2])).rate[0] == 0.25


class TestInvDigamma:
    @settings(max_examples=60, deadline=None)
    @given(st.floats(-30.0, 30.0))
    def test_inverse(self, y):
        x = float(inv_digamma(y))
        assert special.digamma(x) == pytest.approx(y, abs=1e-11 * max(1.0, abs(y)))


class TestNuisanceMle:
    def test_gamma_scale_mle(self):
        data = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        model = GammaShapeModel()
        eta = mle_nuisance(model, model.interest_to_theta(1.5), data, nr_start=-1.0)
        assert model.to_classical(0.5, eta)[1] == pytest.approx(2.0, rel=1e-10)
        grid = np.linspace(1.0, 3.0, 2001)
        ll = [np.sum(stats.gamma(1.5, scale=b).logpdf(data)) for b in grid]
        assert grid[int(np.argmax(ll))] == pytest.approx(2.0, abs=1e-3)

    @pytest.mark.parametrize("model,interest,nuisance", [
        (GammaShapeModel(), 2.0, 1.5), (GammaScaleModel(), 1.5, 2.0), (NormalVarianceModel(), 2.0, 0.7)])
    def test_stationary(self, model, interest, nuisance):
        rng = np.random.default_rng(4)
        theta, eta = model.to_canonical(interest, nuisance)
        data = model.sample(theta, eta, rng, size=200)
        eh = mle_nuisance(model, theta, data)
        assert abs(model.nuisance_score(theta, eh, data)) <= 1e-8 * data.size
        assert model.to_classical(*model.to_canonical(interest, nuisance)) == pytest.approx((interest, nuisance))

    def test_parabola_basins(self):
        model = NormalParabola()
        data = model.sample(1.0, 2.0, np.random.default_rng(8), size=100)
        roots = model.score_roots(data)
        assert roots.size >= 2
        good = mle_nuisance(model, 1.0, data, 1.5)
        bad = mle_nuisance(model, 1.0, data, -1.5)
        assert good == pytest.approx(2.0, abs=0.1)
        assert -2.2 < bad < -1.4
        for r in (good, bad):
            assert abs(model.nuisance_score(1.0, r, data)) <= 1e-8 * 100
            assert np.min(np.abs(roots - r)) < 1e-8

    def test_parabola_bimodal_over_seeds(self):
        model = NormalParabola()
        counts = [model.score_roots(model.sample(1.0, 2.0, np.random.default_rng(s), size=100)).size
                  for s in range(20)]
        assert min(counts) >= 2

    def test_diverged(self):
        with pytest.raises(NewtonDiverged):
            mle_nuisance(GammaShapeModel(), 1.0, np.array([1.0, 2.0]), nr_start=0.5)
        with pytest.raises(NewtonDiverged):
            mle_nuisance(GammaShapeModel(), 1.0, np.array([1.0, 2.0]), nr_start=-50.0, max_iter=1)


def test_registries():
    assert make_family("gamma", shape=2.0, scale=1.0, statistic="log") == Gamma(2.0, 1.0, "log")
    assert make_family("inverse_gaussian", mean=1.0, shape=2.0).statistic_kind == "x"
    with pytest.raises(ValueError):
        make_family("cauchy")
    with pytest.raises(ValueError):
        make_family("normal", mean=0.0, sd=1.0)
    assert isinstance(make_model("normal_parabola"), NormalParabola)
    with pytest.raises(ValueError):
        make_model("beta")
