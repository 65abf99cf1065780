import numpy as np
import pytest

from wirelessfl.errors import DegenerateDesign
from wirelessfl.ota import (OtaDesign, ota_alpha, ota_alpha_max, ota_gamma_max,
                            ota_indicator, ota_round, ota_variance_bound)
from wirelessfl.rng import stream
from wirelessfl.wireless import draw_channels


def make_design(gamma, gains, g_max=2.0, dim=20, energy=1.0):
    return OtaDesign(gamma=np.asarray(gamma, dtype=float), g_max=g_max, dim=dim,
                     gains=np.asarray(gains, dtype=float), energy_per_symbol=energy)


def random_gradients(rng, n, dim, g_max):
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g * (rng.uniform(0.3, 0.95, size=(n, 1)) * g_max / norms)


class TestIndicator:
    def test_threshold_is_inclusive(self):
        g_max, gamma, dim, energy = 2.0, 0.7, 16, 0.5
        threshold = g_max * gamma / np.sqrt(dim * energy)
        assert ota_indicator(threshold + 0j, gamma, g_max, dim, energy)
        assert not ota_indicator((threshold * (1 - 1e-12)) + 0j, gamma, g_max,
                                 dim, energy)

    def test_vanishing_gamma_always_transmits(self):
        rng = stream(0, purpose="channel")
        h = draw_channels(np.full(1000, 1e-9), rng)
        assert ota_indicator(h, 0.0, 5.0, 10, 1e-9).all()

    def test_participation_probability(self):
        """E[chi] = exp(-gamma^2 G^2 / (d Lambda E_s)) = alpha_m / gamma_m."""
        g_max, dim, energy, lam, gamma = 2.0, 20, 1.0, 0.8, 1.5
        rng = stream(1, purpose="channel")
        h = draw_channels(np.full(100_000, lam), rng)
        frac = float(np.mean(ota_indicator(h, gamma, g_max, dim, energy)))
        expected = np.exp(-gamma ** 2 * g_max ** 2 / (dim * lam * energy))
        assert abs(frac - expected) < 0.005
        assert expected == pytest.approx(
            ota_alpha(np.array([gamma]), g_max, dim, np.array([lam]), energy)[0]
            / gamma, rel=1e-12)


class TestRound:
    def test_forced_noiseless_round_is_convex_combination(self):
        design = make_design([0.5, 0.8, 1.1], [0.5, 1.0, 2.0])
        rng = stream(2, purpose="channel")
        grads = random_gradients(stream(3, purpose="data"), 3, design.dim,
                                 design.g_max)
        h = draw_channels(design.gains, rng)
        out = ota_round(grads, design, h, None, noise_psd=1e-9, bandwidth_hz=1e6,
                        force_participation=True, disable_noise=True)
        expected = (design.gamma[:, None] * grads).sum(axis=0) / design.alpha
        np.testing.assert_allclose(out.g_hat, expected, rtol=1e-12)
        np.testing.assert_allclose(out.g_tilde, design.participation @ grads,
                                   rtol=1e-12)
        assert out.latency_s == design.dim / 1e6

    def test_single_device_unconditional_mean(self):
        """Over channel draws, E[g_hat] = g: truncation loss and the
        post-scaler cancel exactly."""
        design = make_design([0.9], [1.2])
        grads = random_gradients(stream(4, purpose="data"), 1, design.dim,
                                 design.g_max)
        m_draws = 100_000
        h = draw_channels(np.full(m_draws, design.gains[0]),
                          stream(5, purpose="channel"))
        chi = ota_indicator(h, design.gamma[0], design.g_max, design.dim,
                            design.energy_per_symbol)
        estimates = np.where(chi[:, None], design.gamma[0] * grads[0] / design.alpha,
                             0.0)
        mean = estimates.mean(axis=0)
        rms = float(np.sqrt(np.mean(np.sum((estimates - mean) ** 2, axis=1))))
        assert np.linalg.norm(mean - grads[0]) <= 4 * rms / np.sqrt(m_draws)

    def test_energy_constraint_never_violated(self):
        design = make_design([0.5, 1.0], [0.05, 0.4], g_max=3.0, dim=8, energy=0.7)
        grads = random_gradients(stream(6, purpose="data"), 2, design.dim,
                                 design.g_max)
        budget = design.dim * design.energy_per_symbol
        rng = stream(7, purpose="channel")
        noise = stream(8, purpose="noise")
        for _ in range(2000):
            h = draw_channels(design.gains, rng)
            out = ota_round(grads, design, h, noise, noise_psd=1e-6,
                            bandwidth_hz=1e6)
            assert (out.tx_energy <= budget * (1 + 1e-12)).all()
            assert (out.tx_energy[~out.chi] == 0.0).all()

    def test_degenerate_design_rejected(self):
        # underflowed amplitudes: positive gammas, zero alpha
        design = make_design([1e-3, 1e-3], [1e-250, 1e-250], g_max=1e3,
                             dim=4, energy=1e-9)
        grads = np.zeros((2, 4))
        with pytest.raises(DegenerateDesign):
            ota_round(grads, design, np.array([1 + 0j, 1 + 0j]),
                      stream(9, purpose="noise"), noise_psd=1e-9, bandwidth_hz=1e6)


class TestVarianceBound:
    def test_noise_only_limit(self):
        """With sigma = 0 and no truncation, only the noise term remains."""
        design = make_design([1e-6, 1e-6], [1.0, 1.0])  # alpha_m ~ gamma_m
        zeta = ota_variance_bound(design, np.zeros(2), noise_psd=1e-3)
        noise_term = design.dim * 1e-3 / design.alpha ** 2
        assert zeta == pytest.approx(noise_term, rel=1e-6)

    def test_alpha_max_at_gamma_max(self):
        gains = np.array([0.3, 1.7])
        g_max, dim, energy = 2.5, 12, 0.8
        gamma_star = ota_gamma_max(g_max, dim, gains, energy)
        alpha = ota_alpha(gamma_star, g_max, dim, gains, energy)
        np.testing.assert_allclose(
            alpha, np.sqrt(dim * gains * energy / (2 * np.e * g_max ** 2)),
            rtol=1e-12)
        np.testing.assert_allclose(alpha, ota_alpha_max(g_max, dim, gains, energy),
                                   rtol=1e-12)

    def test_quasi_concavity_of_alpha(self):
        gains = np.array([0.9])
        g_max, dim, energy = 2.0, 10, 1.0
        gamma_star = float(ota_gamma_max(g_max, dim, gains, energy)[0])
        grid = np.linspace(1e-6, 3 * gamma_star, 1000)
        alpha = ota_alpha(grid, g_max, dim, np.full(1000, gains[0]), energy)
        rising = grid <= gamma_star
        assert (np.diff(alpha[rising]) > 0).all()
        assert (np.diff(alpha[~rising]) < 0).all()

    def test_monte_carlo_variance_dominated(self):
        """Empirical var(g_hat | w) <= zeta^A on random designs (sigma = 0)."""
        rng = np.random.default_rng(11)
        n, dim, g_max, energy, n0 = 5, 20, 2.0, 1.0, 1e-4
        m_rounds = 10_000
        for trial in range(20):
            gains = 10 ** rng.uniform(-2, 1, size=n)
            gamma_cap = ota_gamma_max(g_max, dim, gains, energy)
            design = OtaDesign(gamma=rng.uniform(0.2, 1.0, size=n) * gamma_cap,
                               g_max=g_max, dim=dim, gains=gains,
                               energy_per_symbol=energy)
            grads = random_gradients(np.random.default_rng(100 + trial), n, dim,
                                     g_max)
            h = draw_channels(np.tile(gains, (m_rounds, 1)),
                              np.random.default_rng(200 + trial))
            chi = np.abs(h) >= design.thresholds
            noise = np.sqrt(n0) * np.random.default_rng(300 + trial).standard_normal(
                (m_rounds, dim))
            estimates = ((chi * design.gamma) @ grads + noise) / design.alpha
            dev = estimates - estimates.mean(axis=0)
            empirical = float(np.mean(np.sum(dev ** 2, axis=1)))
            zeta = ota_variance_bound(design, np.zeros(n), n0)
            assert empirical <= zeta

    def test_unconditional_unbiasedness_for_g_tilde(self):
        design = make_design([0.4, 0.9, 0.6], [0.2, 0.9, 3.0])
        grads = random_gradients(stream(12, purpose="data"), 3, design.dim,
                                 design.g_max)
        m_rounds = 100_000
        h = draw_channels(np.tile(design.gains, (m_rounds, 1)),
                          np.random.default_rng(13))
        chi = np.abs(h) >= design.thresholds
        noise = np.sqrt(1e-4) * np.random.default_rng(14).standard_normal(
            (m_rounds, design.dim))
        estimates = ((chi * design.gamma) @ grads + noise) / design.alpha
        mean = estimates.mean(axis=0)
        target = design.participation @ grads
        rms = float(np.sqrt(np.mean(np.sum((estimates - mean) ** 2, axis=1))))
        assert np.linalg.norm(mean - target) <= 4 * rms / np.sqrt(m_rounds)
