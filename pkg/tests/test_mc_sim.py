import numpy as np
import pytest
from conftest import scale_controller

from msstab.lti_core import Polynomial, RationalTF, fir_ss, ss_from_tf
from msstab.mc_sim import (
    SimConfig,
    covariance_decay,
    estimate_variance,
    simulate_path,
)
from msstab.ms_analysis import (
    VarianceTrace,
    analysis_horizon,
    analyze,
    recursion_kernels,
    variance_recursion,
)


@pytest.fixture(scope="module")
def toy_loop(example_channel):
    """P = z^-1 with static gain K = 0.5: first steps enumerable by hand."""
    P = ss_from_tf(RationalTF(Polynomial([0.0, 1.0]), Polynomial([1.0])))
    K = fir_ss(Polynomial([0.5]))
    return P, K, example_channel


class TestSimConfig:
    def test_rejects_biproper_plant(self, example_channel):
        P = fir_ss(Polynomial([1.0, 0.5]))
        with pytest.raises(ValueError, match="strictly proper"):
            SimConfig(P=P, K=fir_ss(Polynomial([0.5])), spec=example_channel,
                      horizon=10, trials=10, seed=0)

    def test_rejects_bad_mode(self, toy_loop):
        P, K, spec = toy_loop
        with pytest.raises(ValueError, match="input_mode"):
            SimConfig(P=P, K=K, spec=spec, horizon=10, trials=10, seed=0,
                      input_mode="impulse")

    def test_rejects_wrong_cov_shape(self, toy_loop):
        P, K, spec = toy_loop
        with pytest.raises(ValueError, match="initial_cov"):
            SimConfig(P=P, K=K, spec=spec, horizon=10, trials=10, seed=0,
                      input_mode="zero_input", initial_cov=np.eye(3))

    def test_rejects_asymmetric_cov(self, example_plant, example_channel):
        K = fir_ss(Polynomial([0.0]))
        with pytest.raises(ValueError, match="symmetric"):
            SimConfig(P=example_plant, K=K, spec=example_channel, horizon=10,
                      trials=10, seed=0, input_mode="zero_input",
                      initial_cov=[[1.0, 0.5], [0.0, 1.0]])

    def test_rejects_nonpositive_sizes(self, toy_loop):
        P, K, spec = toy_loop
        with pytest.raises(ValueError):
            SimConfig(P=P, K=K, spec=spec, horizon=0, trials=10, seed=0)


class TestReproducibility:
    def test_same_seed_bitwise_identical(self, toy_loop):
        P, K, spec = toy_loop
        cfg = SimConfig(P=P, K=K, spec=spec, horizon=30, trials=500, seed=42)
        r1 = estimate_variance(cfg)
        r2 = estimate_variance(cfg)
        assert np.array_equal(r1.var_u.sigma_sq, r2.var_u.sigma_sq)
        assert np.array_equal(r1.mean_u, r2.mean_u)
        assert np.array_equal(r1.stderr_u, r2.stderr_u)

    def test_different_seed_differs(self, toy_loop):
        P, K, spec = toy_loop
        a = estimate_variance(SimConfig(P=P, K=K, spec=spec, horizon=30,
                                        trials=500, seed=1))
        b = estimate_variance(SimConfig(P=P, K=K, spec=spec, horizon=30,
                                        trials=500, seed=2))
        assert not np.array_equal(a.var_u.sigma_sq, b.var_u.sigma_sq)

    def test_batch_estimator_matches_per_trial_paths(self, toy_loop):
        # fixed-order accumulation: moments equal those recomputed from the
        # individual trial trajectories
        P, K, spec = toy_loop
        cfg = SimConfig(P=P, K=K, spec=spec, horizon=20, trials=7, seed=5)
        res = estimate_variance(cfg)
        paths = np.stack([simulate_path(cfg, t) for t in range(7)])
        mean = paths.mean(axis=0)
        var = (paths ** 2).mean(axis=0) - mean ** 2
        np.testing.assert_allclose(res.mean_u, mean, atol=1e-12)
        np.testing.assert_allclose(res.var_u.sigma_sq, np.maximum(var, 0.0),
                                   atol=1e-12)


class TestEnumerationOracle:
    def test_first_steps_match_hand_computation(self, toy_loop):
        # u(1) = 0.5 v(0)            => E u^2(1) = 0.25
        # u(2) = 0.5 (v(1) - 0.3 X v(0)), X ~ Bernoulli(0.6)
        #                            => E u^2(2) = 0.25 (1 + 0.09 * 0.6)
        P, K, spec = toy_loop
        cfg = SimConfig(P=P, K=K, spec=spec, horizon=4, trials=200_000, seed=3)
        res = estimate_variance(cfg)
        assert res.var_u.sigma_sq[0] == 0.0
        for k, expected in ((1, 0.25), (2, 0.25 * (1.0 + 0.09 * 0.6))):
            band = 4.0 * res.stderr_u[k]
            assert abs(res.var_u.sigma_sq[k] - expected) <= band

    def test_zero_noise_gives_identically_zero(self, toy_loop):
        P, K, spec = toy_loop
        cfg = SimConfig(P=P, K=K, spec=spec, horizon=15, trials=50,
                        seed=0, sigma_v_sq=0.0)
        res = estimate_variance(cfg)
        np.testing.assert_array_equal(res.var_u.sigma_sq, 0.0)
        np.testing.assert_array_equal(res.mean_u, 0.0)


class TestAgainstRecursion:
    def test_benchmark_variance_trace_within_bands(
            self, example_plant, example_channel, optimal_design):
        rep = analyze(example_plant, optimal_design.K, example_channel, 1.0)
        n = 40
        kernels = recursion_kernels(rep.G, example_channel, n)
        predicted = variance_recursion(
            kernels, VarianceTrace(np.ones(n + 1), "formula")).sigma_sq
        cfg = SimConfig(P=example_plant, K=optimal_design.K,
                        spec=example_channel, horizon=n + 1, trials=20_000,
                        seed=11)
        res = estimate_variance(cfg)
        for k in range(1, n + 1):
            band = 4.0 * res.stderr_u[k]
            assert abs(res.var_u.sigma_sq[k] - predicted[k]) <= band

    def test_toy_loop_variance_trace_within_bands(self, toy_loop):
        P, K, spec = toy_loop
        rep = analyze(P, K, spec, 1.0)
        assert rep.ms_stable
        n = 30
        kernels = recursion_kernels(rep.G, spec, n)
        predicted = variance_recursion(
            kernels, VarianceTrace(np.ones(n + 1), "formula")).sigma_sq
        cfg = SimConfig(P=P, K=K, spec=spec, horizon=n + 1, trials=40_000,
                        seed=21)
        res = estimate_variance(cfg)
        for k in range(1, n + 1):
            assert abs(res.var_u.sigma_sq[k] - predicted[k]) <= 4.0 * res.stderr_u[k]


class TestCovarianceDecay:
    def test_stable_loop_decays(self, example_plant, example_channel,
                                optimal_design):
        n = example_plant.n_states + optimal_design.K.n_states
        cfg = SimConfig(P=example_plant, K=optimal_design.K,
                        spec=example_channel, horizon=250, trials=2000,
                        seed=7, input_mode="zero_input", initial_cov=np.eye(n))
        verdict, trace = covariance_decay(cfg)
        assert verdict == "decaying"
        assert trace[-1] < trace[0]

    def test_overdriven_loop_diverges(self, example_plant, example_channel,
                                      optimal_design):
        K = scale_controller(optimal_design.K, 2.2)
        n = example_plant.n_states + K.n_states
        cfg = SimConfig(P=example_plant, K=K, spec=example_channel,
                        horizon=120, trials=500, seed=7,
                        input_mode="zero_input", initial_cov=np.eye(n))
        verdict, trace = covariance_decay(cfg)
        assert verdict == "diverging"

    def test_requires_zero_input_mode(self, toy_loop):
        P, K, spec = toy_loop
        cfg = SimConfig(P=P, K=K, spec=spec, horizon=10, trials=10, seed=0)
        with pytest.raises(ValueError, match="zero_input"):
            covariance_decay(cfg)


class TestSimResultCsv:
    def test_csv_shape_and_parse(self, toy_loop):
        P, K, spec = toy_loop
        cfg = SimConfig(P=P, K=K, spec=spec, horizon=5, trials=20, seed=1)
        res = estimate_variance(cfg)
        lines = res.to_csv().splitlines()
        assert lines[0] == "k,mean_u,var_u,stderr_u"
        assert len(lines) == 6
        fields = lines[2].split(",")
        assert fields[0] == "1"
        assert all(np.isfinite(float(f)) for f in fields[1:])
