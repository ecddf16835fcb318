import numpy as np
import pytest
from conftest import random_channel

from msstab.delay_channel import (
    AutoCorr,
    ChannelSpec,
    MarginalFactorizationError,
    autocorrelation,
    mean_channel,
    sample_delay,
    spectral_density,
    spectral_factor,
)


class TestChannelSpec:
    def test_pmf_must_sum_to_one(self):
        with pytest.raises(ValueError, match="renormalization refused"):
            ChannelSpec([0.5, 0.4], [1.0, 1.0])

    def test_negative_probability_rejected(self):
        with pytest.raises(ValueError):
            ChannelSpec([1.5, -0.5], [1.0, 1.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ChannelSpec([1.0], [1.0, 0.0])

    def test_tau(self, example_channel):
        assert example_channel.tau == 2

    def test_dict_roundtrip(self, example_channel):
        assert ChannelSpec.from_dict(example_channel.to_dict()) == example_channel


class TestMeanChannel:
    def test_example_coefficients_exact(self, example_channel):
        assert mean_channel(example_channel).coeffs == (0.36, 0.12, 0.0)

    def test_identity_channel(self):
        assert mean_channel(ChannelSpec([1.0], [1.0])).coeffs == (1.0,)

    def test_deterministic_unit_delay(self):
        assert mean_channel(ChannelSpec([0.0, 1.0], [1.0, 1.0])).coeffs == (0.0, 1.0)


class TestAutocorrelation:
    def test_example_channel(self, example_channel):
        r = autocorrelation(example_channel).r
        np.testing.assert_allclose(r, [0.12, -0.0432, 0.0], atol=1e-15)

    def test_deterministic_channel_vanishes(self):
        assert autocorrelation(ChannelSpec([1.0], [0.7])).r == (0.0,)

    def test_uniform_two_tap(self):
        r = autocorrelation(ChannelSpec([0.5, 0.5], [1.0, 1.0])).r
        np.testing.assert_allclose(r, [0.5, -0.25], atol=1e-15)

    def test_negative_r0_rejected(self):
        with pytest.raises(ValueError):
            AutoCorr([-0.1])


class TestSpectralDensity:
    def test_example_table(self, example_channel):
        table = spectral_density(example_channel)
        assert table[0] == pytest.approx(0.12)
        assert table[1] == pytest.approx(-0.0432)
        assert table[-1] == pytest.approx(-0.0432)
        assert table[2] == 0.0 and table[-2] == 0.0

    def test_deterministic_all_zero(self):
        table = spectral_density(ChannelSpec([1.0], [2.0]))
        assert all(v == 0.0 for v in table.values())

    def test_uniform_two_tap_touches_zero_at_dc(self):
        # S(e^{j0}) = 0.5 - 2*0.25 = 0
        spec = ChannelSpec([0.5, 0.5], [1.0, 1.0])
        r = autocorrelation(spec).r
        assert r[0] + 2.0 * r[1] == pytest.approx(0.0, abs=1e-15)
        spectral_density(spec)  # grid check must still pass


class TestSpectralFactor:
    def test_example_channel_matches_reference_values(self, example_channel):
        phi = spectral_factor(example_channel).phi
        assert phi.coeffs[0] == pytest.approx(0.3188, abs=5e-5)
        assert phi.coeffs[1] == pytest.approx(-0.1355, abs=5e-5)

    def test_roundtrip_example(self, example_channel):
        phi = spectral_factor(example_channel).phi
        conv = np.convolve(phi.coeffs, phi.coeffs[::-1])
        r = autocorrelation(example_channel).r
        expected = np.array([r[1], r[0], r[1]])
        np.testing.assert_allclose(conv, expected, atol=1e-10)

    def test_deterministic_degenerate(self):
        sf = spectral_factor(ChannelSpec([1.0], [0.3]))
        assert sf.degenerate
        assert sf.phi.is_zero()

    def test_marginal_factorization_rejected(self):
        with pytest.raises(MarginalFactorizationError):
            spectral_factor(ChannelSpec([0.5, 0.5], [1.0, 1.0]))

    def test_leading_coefficient_positive(self, example_channel):
        assert spectral_factor(example_channel).phi.coeffs[0] > 0.0


class TestFactorizationProperties:
    def test_zero_sum_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            spec = random_channel(rng)
            r = np.asarray(autocorrelation(spec).r)
            lhs = r[0] + 2.0 * np.sum(r[1:])
            p = np.asarray(spec.pmf)
            a = np.asarray(spec.weights)
            quad = 0.5 * np.sum(
                (a[:, None] - a[None, :]) ** 2 * p[:, None] * p[None, :]
            )
            assert lhs == pytest.approx(quad, abs=1e-10)
            try:
                sf = spectral_factor(spec)
            except MarginalFactorizationError:
                continue
            phi1 = float(np.sum(sf.phi.coeffs))
            assert phi1 ** 2 == pytest.approx(lhs, abs=1e-10)

    def test_random_roundtrip_and_minimum_phase(self):
        rng = np.random.default_rng(12)
        checked = 0
        attempts = 0
        while checked < 1000 and attempts < 5000:
            attempts += 1
            spec = random_channel(rng)
            r = np.asarray(autocorrelation(spec).r)
            try:
                sf = spectral_factor(spec)
            except MarginalFactorizationError:
                continue
            if sf.degenerate:
                continue
            phi = np.asarray(sf.phi.coeffs)
            conv = np.convolve(phi, phi[::-1])
            mid = len(phi) - 1
            table = np.zeros(2 * len(r) - 1)
            table[len(r) - 1] = r[0]
            for l in range(1, len(r)):
                table[len(r) - 1 + l] = r[l]
                table[len(r) - 1 - l] = r[l]
            padded = np.zeros_like(table)
            lo = len(r) - 1 - mid
            padded[lo: lo + len(conv)] = conv
            np.testing.assert_allclose(padded, table, atol=1e-10)
            roots = np.roots(phi)
            if len(roots):
                assert np.max(np.abs(roots)) < 1.0 - 1e-8
            checked += 1
        assert checked == 1000


class TestSampleDelay:
    def test_deterministic_channels(self):
        rng = np.random.default_rng(0)
        assert all(sample_delay(ChannelSpec([1.0], [1.0]), rng) == 0 for _ in range(50))
        assert all(sample_delay(ChannelSpec([0.0, 1.0], [1.0, 1.0]), rng) == 1
                   for _ in range(50))

    def test_empirical_frequencies(self, example_channel):
        rng = np.random.default_rng(2024)
        n = 10 ** 6
        draws = np.array([sample_delay(example_channel, rng) for _ in range(n)])
        for i, p in enumerate(example_channel.pmf):
            freq = np.mean(draws == i)
            band = 3.0 * np.sqrt(p * (1.0 - p) / n)
            assert abs(freq - p) <= band

    def test_uncertainty_impulse_statistics(self, example_channel):
        # mean and variance of alpha_i*(delta(tau - i) - p_i) over many draws
        rng = np.random.default_rng(77)
        n = 10 ** 6
        draws = np.array([sample_delay(example_channel, rng) for _ in range(n)])
        for i in (0, 1):
            a = example_channel.weights[i]
            p = example_channel.pmf[i]
            omega = a * ((draws == i).astype(float) - p)
            se_mean = omega.std() / np.sqrt(n)
            assert abs(omega.mean()) <= 4.0 * se_mean
            var = omega.var()
            m4 = np.mean((omega - omega.mean()) ** 4)
            se_var = np.sqrt(max(m4 - var ** 2, 0.0) / n)
            assert abs(var - a ** 2 * p * (1.0 - p)) <= 4.0 * se_var
