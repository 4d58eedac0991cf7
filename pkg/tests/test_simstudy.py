import numpy as np
import pytest

from modalsimex import rng
from modalsimex.estimators import Dataset, lse_fit
from modalsimex.kernel import phi
from modalsimex.model import exponential_model
from modalsimex.simstudy import (
    METHODS,
    ErrorMixture,
    Scenario,
    emit_table,
    generate_replication,
    parse_scenario_text,
    run_scenario,
    sample_mixture,
    simex_config_for,
    study_from_keys,
)


def kde_mode(samples, h=0.05, grid=None):
    """Gaussian-KDE argmax on a grid, chunked so n = 1e6 stays cheap."""
    if grid is None:
        grid = np.linspace(0.5, 1.5, 201)
    dens = np.zeros_like(grid)
    for start in range(0, samples.size, 100_000):
        chunk = samples[start : start + 100_000]
        dens += phi((grid[:, None] - chunk[None, :]) / h).sum(axis=1)
    return grid[np.argmax(dens)]


class TestErrorMixture:
    def test_default_constants(self):
        mix = ErrorMixture()
        assert mix.mode == 1.0
        assert mix.median == 0.67
        weights = [c[0] for c in mix.components]
        assert sum(weights) == pytest.approx(1.0)

    def test_rejects_bad_weights(self):
        with pytest.raises(ValueError):
            ErrorMixture(components=((0.5, 0.0, 1.0), (0.4, 0.0, 1.0)))
        with pytest.raises(ValueError):
            ErrorMixture(components=((1.0, 0.0, -1.0),))

    def test_sample_moments(self):
        mix = ErrorMixture()
        draws = sample_mixture(mix, 1_000_000, rng.stream(7, 0))
        assert abs(draws.mean()) < 0.01
        assert np.median(draws) == pytest.approx(0.67, abs=0.01)
        assert kde_mode(draws) == pytest.approx(1.0, abs=0.05)

    def test_sampling_deterministic(self):
        mix = ErrorMixture()
        a = sample_mixture(mix, 100, rng.stream(3, 1))
        b = sample_mixture(mix, 100, rng.stream(3, 1))
        np.testing.assert_array_equal(a, b)


class TestGenerateReplication:
    def test_noise_free_case_recovers_truth(self):
        sc = Scenario(n=100, sigma_u2=1e-12, gamma=0.0, reps=1)
        y, x_true, w = generate_replication(sc, 0, 5)
        np.testing.assert_allclose(y, np.exp(x_true), rtol=1e-12)
        res = lse_fit(exponential_model(), Dataset(y, x_true))
        np.testing.assert_allclose(res.theta_hat, [1.0, 1.0], atol=1e-8)

    def test_deterministic(self):
        sc = Scenario(n=50)
        a = generate_replication(sc, 3, 11)
        b = generate_replication(sc, 3, 11)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u, v)
        c = generate_replication(sc, 4, 11)
        assert np.any(a[0] != c[0])

    def test_covariate_and_error_shapes(self):
        sc = Scenario(n=500, sigma_u2=0.04)
        y, x_true, w = generate_replication(sc, 0, 13)
        assert np.all((x_true >= 0) & (x_true <= 1))
        # Var(X) = 1/12 for U(0,1), so sigma_u2 = 0.04 is ~50% noise-to-signal.
        assert x_true.var() == pytest.approx(1 / 12, abs=0.02)
        assert (w - x_true).std() == pytest.approx(0.2, abs=0.03)


class TestScenarioTargets:
    def test_method_targets(self):
        sc = Scenario()
        np.testing.assert_allclose(sc.target("N-Mean"), [1.0, 1.0])
        np.testing.assert_allclose(sc.target("S-Mean"), [1.0, 1.0])
        np.testing.assert_allclose(sc.target("S-Huber"), [1.0, 1.0])
        np.testing.assert_allclose(sc.target("S-Median"), [1.67, 1.0])
        np.testing.assert_allclose(sc.target("S-Modal"), [2.0, 1.0])
        np.testing.assert_allclose(sc.target("N-Modal"), [2.0, 1.0])

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            Scenario().target("S-Mode")


def micro_scenario(**kw):
    defaults = dict(n=60, sigma_u2=1e-12, gamma=0.0, reps=2)
    defaults.update(kw)
    sc = Scenario(**defaults)
    config = simex_config_for(sc, lambda_points=5, n_pseudo=4, seed=17)
    return sc, config


class TestRunScenario:
    def test_near_noiseless_mean_methods_recover_truth(self):
        sc, config = micro_scenario(reps=1)
        res = run_scenario(sc, ["N-Mean", "S-Mean", "S-Huber"], config)
        for m in res.methods:
            np.testing.assert_allclose(res.mean[m], [1.0, 1.0], atol=1e-4)
            assert res.failed[m] == 0

    def test_bias_and_mse_identities(self):
        sc, config = micro_scenario(sigma_u2=0.01, gamma=1.0, reps=6)
        res = run_scenario(sc, ["N-Mean", "S-Mean"], config)
        for m in res.methods:
            est = res.estimates[m]
            ok = np.all(np.isfinite(est), axis=1)
            kept = est[ok]
            np.testing.assert_allclose(
                res.bias[m], res.mean[m] - res.targets[m], atol=1e-12
            )
            pop_var = kept.var(axis=0)  # population form
            np.testing.assert_allclose(
                res.mse[m], res.bias[m] ** 2 + pop_var, atol=1e-10
            )
            assert np.all(res.mse[m] >= res.bias[m] ** 2 - 1e-12)

    def test_method_order_irrelevant(self):
        sc, config = micro_scenario(sigma_u2=0.02, gamma=1.0, reps=3)
        a = run_scenario(sc, ["S-Mean", "N-Mean"], config)
        b = run_scenario(sc, ["N-Mean", "S-Mean"], config)
        assert a.methods == b.methods
        for m in a.methods:
            np.testing.assert_array_equal(a.estimates[m], b.estimates[m])

    def test_more_reps_extend_prefix(self):
        sc2, config = micro_scenario(sigma_u2=0.02, gamma=1.0, reps=2)
        sc4, _ = micro_scenario(sigma_u2=0.02, gamma=1.0, reps=4)
        a = run_scenario(sc2, ["N-Mean"], config)
        b = run_scenario(sc4, ["N-Mean"], config)
        np.testing.assert_array_equal(
            a.estimates["N-Mean"], b.estimates["N-Mean"][:2]
        )

    def test_threads_do_not_change_results(self):
        sc, config = micro_scenario(sigma_u2=0.02, gamma=1.0, reps=4)
        a = run_scenario(sc, ["N-Mean", "S-Mean"], config, threads=1)
        b = run_scenario(sc, ["N-Mean", "S-Mean"], config, threads=4)
        for m in a.methods:
            np.testing.assert_array_equal(a.estimates[m], b.estimates[m])

    def test_config_mismatch_rejected(self):
        sc, _ = micro_scenario()
        other = Scenario(n=60, sigma_u2=0.5)
        bad_config = simex_config_for(other, lambda_points=5, n_pseudo=4)
        with pytest.raises(ValueError):
            run_scenario(sc, ["S-Mean"], bad_config)


class TestEmitTable:
    def _result(self, methods=("S-Modal",), reps=3):
        sc = Scenario(n=60, sigma_u2=0.01, reps=reps)
        config = simex_config_for(sc, lambda_points=4, n_pseudo=2, seed=23)
        return run_scenario(sc, list(methods), config)

    def test_csv_contract(self):
        res = self._result(methods=("N-Mean",), reps=2)
        res.mean["N-Mean"] = np.array([1.0, 1.0])
        res.bias["N-Mean"] = np.array([0.0, 0.0])
        res.mse["N-Mean"] = np.array([0.01, 0.01])
        text = emit_table(res, "csv")
        lines = text.splitlines()
        assert lines[0] == "parameter,statistic,method,value"
        assert "alpha,mean,N-Mean,1.0" in lines
        assert "alpha,mse,N-Mean,0.01" in lines
        assert len(lines) == 1 + 2 * 3  # two parameters, three statistics

    def test_statistics_arithmetic(self):
        target = 1.0
        for estimates, mean, bias, mse in [
            (np.array([1.0, 1.0, 1.0]), 1.0, 0.0, 0.0),
            (np.array([0.9, 1.1]), 1.0, 0.0, 0.01),
        ]:
            m = estimates.mean()
            assert m == pytest.approx(mean)
            assert m - target == pytest.approx(bias)
            assert np.mean((estimates - target) ** 2) == pytest.approx(mse)

    def test_text_layout(self):
        res = self._result(methods=("N-Mean", "S-Mean"), reps=2)
        text = emit_table(res, "text")
        lines = text.splitlines()
        assert "N-Mean" in lines[0] and "S-Mean" in lines[0]
        assert lines[1].startswith("alpha Mean")
        assert lines[4].startswith("beta  Mean")

    def test_unknown_format_rejected(self):
        res = self._result(methods=("N-Mean",), reps=2)
        with pytest.raises(ValueError):
            emit_table(res, "yaml")


class TestScenarioFiles:
    def test_parse_round_trip(self):
        text = """
        # comment line
        n = 120
        sigma_u2 = 0.02
        bandwidth_c = 1.0
        reps = 7
        lambda_points = 6
        lambda_max = 1.5
        B = 9
        extrapolant = rational
        seed = 99
        methods = N-Mean, S-Modal
        """
        keys = parse_scenario_text(text)
        scenario, config, methods = study_from_keys(keys)
        assert scenario.n == 120 and scenario.reps == 7
        assert scenario.sigma_u2 == 0.02 and scenario.bandwidth_c == 1.0
        assert config.n_pseudo == 9 and config.extrapolant == "rational"
        assert config.lambda_grid.size == 6 and config.lambda_grid[-1] == 1.5
        assert config.seed == 99
        assert methods == ("N-Mean", "S-Modal")

    def test_defaults_match_study(self):
        keys = parse_scenario_text("")
        scenario, config, methods = study_from_keys(keys)
        assert scenario.n == 200 and scenario.reps == 100
        assert scenario.bandwidth_c == 0.8
        assert config.n_pseudo == 50 and config.lambda_grid.size == 10
        assert methods == METHODS

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_scenario_text("bandwidth = 3")

    def test_bad_value_rejected(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_scenario_text("n = twenty")

    def test_unknown_method_rejected(self):
        with pytest.raises(ValueError):
            study_from_keys(parse_scenario_text("methods = S-Mode"))
