import numpy as np
import pytest
from scipy import stats

from condinf.exceptions import NuisanceMleFailed
from condinf.families import GammaShapeModel, NormalParabola
from condinf.mctest import (McTestSpec, mc_p_value, power_curve, run_bootstrap_test, run_conditional_test,
                            run_test)
from condinf.streams import stream


class TestPValue:
    def test_largest_observed(self, rng):
        sim = np.arange(19.0)
        assert mc_p_value(100.0, sim, rng) == (1, 1 / 20)
        assert mc_p_value(-1.0, sim, rng) == (20, 1.0)
        assert mc_p_value(-1.0, sim, rng, "less") == (1, 1 / 20)

    def test_two_sided(self, rng):
        sim = np.arange(19.0)
        assert mc_p_value(100.0, sim, rng, "two-sided") == (1, 0.1)
        assert mc_p_value(9.5, sim, rng, "two-sided")[1] == 1.0

    def test_ties_give_uniform_rank(self):
        rng = np.random.default_rng(0)
        ranks = [mc_p_value(1.0, np.ones(19), rng)[0] for _ in range(4000)]
        counts = np.bincount(ranks, minlength=21)[1:]
        assert counts.sum() == 4000
        assert stats.chisquare(counts).pvalue > 0.01

    def test_partial_ties(self):
        rng = np.random.default_rng(1)
        sim = np.array([5.0] * 3 + [1.0] * 16)
        ranks = {mc_p_value(5.0, sim, rng)[0] for _ in range(200)}
        assert ranks == {1, 2, 3, 4}


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            McTestSpec(GammaShapeModel(), 1.0, L=19)
        with pytest.raises(ValueError):
            McTestSpec(GammaShapeModel(), 1.0, method="exact")
        with pytest.raises(ValueError):
            McTestSpec(GammaShapeModel(), 1.0, alternative="both")
        spec = McTestSpec(GammaShapeModel(), 1.0, k=99)
        with pytest.raises(ValueError):
            spec.run_length(100)
        assert McTestSpec(GammaShapeModel(), 1.0).run_length(100) == 90


def _gamma_data(seed, n=100):
    model = GammaShapeModel()
    theta, eta = model.to_canonical(2.0, 1.0)
    return model, theta, model.sample(theta, eta, np.random.default_rng(seed), size=n)


class TestConditional:
    def test_report(self):
        model, theta, data = _gamma_data(0)
        spec = McTestSpec(model, theta, L=50, k=80)
        rep = run_conditional_test(spec, data, np.random.default_rng(1))
        assert rep.simulated.shape == (49,)
        assert rep.method == "conditional"
        assert 1 <= rep.rank_of_obs <= 50 and rep.p_value == rep.rank_of_obs / 50
        assert rep.acceptance_rate > 0.1
        assert rep.t_obs == pytest.approx(float(np.sum(np.log(data[:80]))))
        lines = rep.to_csv().splitlines()
        assert lines[0] == "method,t_obs,rank_of_obs,p_value,L,eta_hat,aborts"
        assert len(lines) == 3 + 1 + 49

    def test_plug_in_nuisance_is_immaterial(self):
        # the proxy depends on the nuisance only through members tilted to fixed means
        unchanged = 0
        for seed in range(100):
            model, theta, data = _gamma_data(seed, n=40)
            spec = McTestSpec(model, theta, L=20, k=30)
            a = run_conditional_test(spec, data, np.random.default_rng(seed), eta_override=-0.3)
            b = run_conditional_test(spec, data, np.random.default_rng(seed), eta_override=-4.0)
            unchanged += a.rank_of_obs == b.rank_of_obs
        assert unchanged >= 99

    def test_parabola_starts_agree(self):
        model = NormalParabola()
        data = model.sample(1.0, 2.0, np.random.default_rng(3), size=100)
        good = McTestSpec(model, 1.0, L=40, nr_start=1.5)
        bad = McTestSpec(model, 1.0, L=40, nr_start=-1.5)
        a = run_conditional_test(good, data, np.random.default_rng(4))
        b = run_conditional_test(bad, data, np.random.default_rng(4))
        assert a.eta_hat == pytest.approx(2.0, abs=0.1) and b.eta_hat < -1.4
        np.testing.assert_array_equal(a.simulated, b.simulated)
        assert a.p_value == b.p_value

    def test_nuisance_failure(self):
        model, theta, data = _gamma_data(5)
        spec = McTestSpec(model, theta, L=20, nr_start=1.0)
        with pytest.raises(NuisanceMleFailed):
            run_conditional_test(spec, data, np.random.default_rng(0))
        with pytest.raises(NuisanceMleFailed):
            run_bootstrap_test(spec, data, np.random.default_rng(0))


class TestBootstrap:
    def test_depends_on_start(self):
        model = NormalParabola()
        data = model.sample(1.0, 2.0, np.random.default_rng(3), size=100)
        a = run_bootstrap_test(McTestSpec(model, 1.0, L=40, nr_start=1.5), data, np.random.default_rng(4))
        b = run_bootstrap_test(McTestSpec(model, 1.0, L=40, nr_start=-1.5), data, np.random.default_rng(4))
        assert a.method == "bootstrap"
        assert a.t_obs == b.t_obs
        # the reference law under the bad root sits far above the observed statistic
        assert np.median(b.simulated) > 2 * np.median(a.simulated)
        assert b.p_value == 1.0

    def test_run_test_dispatch(self):
        model, theta, data = _gamma_data(2)
        spec = McTestSpec(model, theta, L=20, method="bootstrap")
        assert run_test(spec, data, np.random.default_rng(0)).method == "bootstrap"


def test_power_curve_pairs_streams():
    model, theta, _ = _gamma_data(0)
    eta = model.to_canonical(2.0, 1.0)[1]
    ds = lambda i, j: stream(3, "data", 10 * i + j)
    ts = lambda i, j: stream(3, "sim", 10 * i + j)
    args = dict(theta_grid=[theta, theta + 1.0], alpha_grid=[0.05, 0.2], datasets_per_theta=6, n=40,
                eta_true=eta, data_stream=ds, test_stream=ts, seed=3)
    a = power_curve(McTestSpec(model, theta, L=20, k=30), **args)
    b = power_curve(McTestSpec(model, theta, L=20, k=30), **args)
    assert a.to_csv() == b.to_csv()
    assert a.power(theta, 0.05) <= a.power(theta, 0.2)
    assert len(a.rows) == 4 and all(r.reps == 6 for r in a.rows)
    with pytest.raises(KeyError):
        a.power(0.123, 0.05)
    # both methods see the same datasets
    c = power_curve(McTestSpec(model, theta, L=20, k=30, method="bootstrap"), **args)
    assert set(c.p_values) == set(a.p_values)
    with pytest.raises(ValueError):
        power_curve(McTestSpec(model, theta), [], [0.05], 1, 10, eta, ds, ts)
