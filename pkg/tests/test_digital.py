import numpy as np
import pytest

from wirelessfl.digital import (DigitalDesign, DigitalRoundTranscript,
                                QuantizedGradient, decode_payload,
                                dequantize, digital_round,
                                digital_variance_bound, dithered_quantize,
                                encode_payload, expected_round_latency,
                                payload_bits)
from wirelessfl.errors import CorruptPayload, DegenerateRate
from wirelessfl.rng import stream
from wirelessfl.wireless import draw_channels


def make_design(beta, r_bits, gains, dim=20, n0=1e-9, energy=1e-6, p=None,
                min_rate=1e-6):
    """Feasible design from target participation probabilities beta."""
    beta = np.asarray(beta, dtype=float)
    n = len(beta)
    p = np.full(n, 1.0 / n) if p is None else np.asarray(p, dtype=float)
    rho = np.sqrt(-np.asarray(gains) * np.log(beta))
    return DigitalDesign(rho=rho, nu=beta / p, r_bits=np.asarray(r_bits, dtype=int),
                         gains=np.asarray(gains, dtype=float), dim=dim,
                         noise_psd=n0, energy_per_symbol=energy, min_rate=min_rate)


class TestQuantizer:
    def test_one_bit_grid_points_exact(self):
        g = np.array([3.0, -3.0, 3.0, -3.0])
        q = dithered_quantize(g, 1, stream(0, purpose="dither"))
        np.testing.assert_array_equal(np.sort(np.unique(q.levels)), [0, 1])
        np.testing.assert_allclose(dequantize(q, 1), g, rtol=0)

    def test_exact_grid_rounds_deterministically(self):
        # r=2 grid on [-1,1]: {-1, -1/3, 1/3, 1}; feed exact grid values
        g = np.array([-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0]) * 2.0
        for trial in range(5):
            q = dithered_quantize(g, 2, stream(trial, purpose="dither"))
            np.testing.assert_allclose(dequantize(q, 2), g, atol=1e-15)

    def test_unbiasedness(self):
        rng = np.random.default_rng(1)
        g = rng.standard_normal(16)
        m = 100_000
        dither = stream(2, purpose="dither")
        recon = np.array([dequantize(dithered_quantize(g, 2, dither), 2)
                          for _ in range(m)])
        mean = recon.mean(axis=0)
        std = recon.std(axis=0)
        # 1e-11 absolute slack: accumulation error of the empirical mean itself
        assert (np.abs(mean - g) <= 4 * std / np.sqrt(m) + 1e-11).all()

    def test_variance_bound(self):
        rng = np.random.default_rng(3)
        g = rng.standard_normal(16)
        sup = np.max(np.abs(g))
        for r in (1, 2, 4, 8):
            dither = stream(r, purpose="dither")
            sq = [float(np.sum((dequantize(dithered_quantize(g, r, dither), r)
                                - g) ** 2)) for _ in range(20_000)]
            assert np.mean(sq) <= 16 * sup ** 2 / (2 ** r - 1) ** 2

    def test_zero_vector(self):
        q = dithered_quantize(np.zeros(5), 3, stream(4, purpose="dither"))
        assert q.sup_norm == 0.0
        np.testing.assert_array_equal(dequantize(q, 3), np.zeros(5))

    def test_high_rate_step_bound(self):
        rng = np.random.default_rng(5)
        g = rng.standard_normal(64)
        q = dithered_quantize(g, 16, stream(6, purpose="dither"))
        err = np.abs(dequantize(q, 16) - g)
        assert (err <= 2 * np.max(np.abs(g)) / (2 ** 16 - 1) + 1e-15).all()

    def test_out_of_range_levels_rejected(self):
        with pytest.raises(CorruptPayload):
            dequantize(QuantizedGradient(levels=np.array([0, 4]), sup_norm=1.0), 2)


class TestPayloadCodec:
    def test_round_trip_and_length(self):
        rng = np.random.default_rng(7)
        for r in (1, 2, 3, 8, 11):
            g = rng.standard_normal(33)
            q = dithered_quantize(g, r, stream(r, purpose="dither"))
            blob = encode_payload(q, r)
            assert len(blob) * 8 == 64 + ((33 * r + 7) // 8) * 8
            assert payload_bits(33, r) == 64 + 33 * r
            back = decode_payload(blob, 33, r)
            assert back.sup_norm == q.sup_norm
            np.testing.assert_array_equal(back.levels, q.levels)

    def test_wrong_length_rejected(self):
        q = dithered_quantize(np.ones(8), 2, stream(9, purpose="dither"))
        blob = encode_payload(q, 2)
        with pytest.raises(CorruptPayload):
            decode_payload(blob + b"\x00", 8, 2)


class TestRound:
    def test_forced_uniform_high_rate_is_average(self):
        """nu = N beta in the beta -> 1 limit, chi forced on: the estimate is
        the plain average up to quantizer resolution."""
        gains = np.full(4, 1e-6)
        design = make_design(beta=np.full(4, 1.0 - 1e-12), r_bits=np.full(4, 16),
                             gains=gains, min_rate=0.0)
        grads = np.random.default_rng(10).standard_normal((4, design.dim))
        out = digital_round(grads, design, np.zeros(4), stream(11, purpose="dither"),
                            bandwidth_hz=1e6, force_participation=True)
        step = 2 * np.abs(grads).max() / (2 ** 16 - 1)
        assert np.abs(out.g_hat - grads.mean(axis=0)).max() <= 4 * step + 1e-9

    def test_unbiased_for_participation_weights(self):
        gains = np.array([1e-6, 5e-6, 2e-5])
        design = make_design(beta=np.array([0.3, 0.6, 0.9]),
                             r_bits=np.array([2, 3, 4]), gains=gains, dim=8)
        grads = np.random.default_rng(12).standard_normal((3, 8))
        m = 100_000
        h = draw_channels(np.tile(gains, (m, 1)), np.random.default_rng(13))
        chi = np.abs(h) >= design.rho
        dither = np.random.default_rng(14)
        samples = np.empty((m, 8))
        for i in range(m):
            g_hat = np.zeros(8)
            for dev in range(3):
                if chi[i, dev]:
                    q = dithered_quantize(grads[dev], int(design.r_bits[dev]), dither)
                    g_hat += dequantize(q, int(design.r_bits[dev])) / design.nu[dev]
            samples[i] = g_hat
        mean = samples.mean(axis=0)
        target = design.participation @ grads
        rms = float(np.sqrt(np.mean(np.sum((samples - mean) ** 2, axis=1))))
        assert np.linalg.norm(mean - target) <= 4 * rms / np.sqrt(m)

    def test_outage_freeness_and_payload_accounting(self):
        gains = np.array([1e-6, 4e-6])
        design = make_design(beta=np.array([0.4, 0.7]), r_bits=np.array([3, 5]),
                             gains=gains, dim=6)
        grads = np.random.default_rng(15).standard_normal((2, 6))
        rng_h = stream(16, purpose="channel")
        dither = stream(17, purpose="dither")
        for _ in range(3000):
            h = draw_channels(gains, rng_h)
            out = digital_round(grads, design, h, dither, bandwidth_hz=1e6)
            assert (out.chi == (np.abs(h) >= design.rho)).all()
            expected_bits = np.where(out.chi, 64 + 6 * design.r_bits, 0)
            np.testing.assert_array_equal(out.bits_sent, expected_bits)
            assert (out.latencies_s[~out.chi] == 0.0).all()

    def test_expected_latency_matches_formula(self):
        gains = np.array([1e-6, 3e-6, 9e-6])
        design = make_design(beta=np.array([0.25, 0.5, 0.8]),
                             r_bits=np.array([2, 4, 6]), gains=gains, dim=16)
        bandwidth = 1e6
        m = 100_000
        h = draw_channels(np.tile(gains, (m, 1)), np.random.default_rng(18))
        chi = np.abs(h) >= design.rho
        slot = design.payload / (bandwidth * design.rate)
        realized = (chi * slot).sum(axis=1)
        expected = expected_round_latency(design, bandwidth)
        assert abs(realized.mean() - expected) <= 0.01 * expected


class TestVarianceBound:
    def test_quantization_only_case(self):
        """sigma = 0, N = 1, p = beta = 1 limit: zeta = G^2 d / (2^r - 1)^2."""
        design = DigitalDesign(rho=np.array([1e-12]), nu=np.array([1.0]),
                               r_bits=np.array([4]), gains=np.array([1.0]),
                               dim=10, noise_psd=1e-9, energy_per_symbol=1.0,
                               min_rate=0.0)
        g_max = 3.0
        zeta = digital_variance_bound(design, g_max, np.zeros(1))
        assert zeta == pytest.approx(g_max ** 2 * 10 / (2 ** 4 - 1) ** 2, rel=1e-9)

    def test_fine_quantization_limit(self):
        design = make_design(beta=np.array([1.0 - 1e-12, 1.0 - 1e-12]),
                             r_bits=np.array([30, 30]),
                             gains=np.array([1e-6, 1e-6]), dim=4, min_rate=0.0)
        sigmas = np.array([0.5, 0.7])
        zeta = digital_variance_bound(design, 2.0, sigmas)
        assert zeta == pytest.approx(float(np.sum(0.25 * sigmas ** 2)), rel=1e-6)

    def test_monte_carlo_variance_dominated(self):
        rng = np.random.default_rng(20)
        n, dim, g_max = 5, 20, 2.0
        m_rounds = 10_000
        for trial in range(20):
            gains = 10 ** rng.uniform(-7, -5, size=n)
            beta = rng.uniform(0.2, 0.95, size=n)
            r_bits = rng.integers(1, 9, size=n)
            design = make_design(beta=beta, r_bits=r_bits, gains=gains, dim=dim)
            g = rng.standard_normal((n, dim))
            g *= (rng.uniform(0.3, 0.95, size=(n, 1)) * g_max
                  / np.linalg.norm(g, axis=1, keepdims=True))
            h = draw_channels(np.tile(gains, (m_rounds, 1)),
                              np.random.default_rng(40 + trial))
            chi = np.abs(h) >= design.rho
            dither = np.random.default_rng(60 + trial)
            samples = np.zeros((m_rounds, dim))
            for dev in range(n):
                r = int(design.r_bits[dev])
                sup = np.max(np.abs(g[dev]))
                step = 2.0 / (2 ** r - 1)
                position = np.clip((g[dev] / sup + 1.0) / step, 0, 2 ** r - 1)
                lower = np.floor(position)
                frac = position - lower
                bump = dither.random((m_rounds, dim)) < frac
                recon = ((lower + bump) * step - 1.0) * sup
                samples += np.where(chi[:, dev, None], recon / design.nu[dev], 0.0)
            dev_ = samples - samples.mean(axis=0)
            empirical = float(np.mean(np.sum(dev_ ** 2, axis=1)))
            zeta = digital_variance_bound(design, g_max, np.zeros(n))
            assert empirical <= zeta


class TestLatencyFormula:
    def test_single_device_substitution(self):
        # beta = 0.5, L = 64 + d, R = 1, B = 1 -> latency = 0.5 (64 + d)
        lam = 1.0
        rho = np.sqrt(-lam * np.log(0.5))
        n0, energy = 1.0, 1.0 / rho ** 2  # R = log2(1 + 1) = 1
        design = DigitalDesign(rho=np.array([rho]), nu=np.array([0.5]),
                               r_bits=np.array([1]), gains=np.array([lam]),
                               dim=12, noise_psd=n0, energy_per_symbol=energy,
                               min_rate=0.0)
        assert expected_round_latency(design, 1.0) == pytest.approx(
            0.5 * (64 + 12), rel=1e-12)

    def test_monotone_in_bits_and_threshold(self):
        gains = np.full(1, 1e-6)
        lat_by_r = [expected_round_latency(
            make_design(np.array([0.5]), np.array([r]), gains), 1e6)
            for r in range(1, 10)]
        assert (np.diff(lat_by_r) > 0).all()
        # larger rho means smaller beta: participation factor decreases
        betas = np.linspace(0.9, 0.1, 9)
        factors = [make_design(np.array([b]), np.array([4]), gains).beta[0]
                   for b in betas]
        assert (np.diff(factors) < 0).all()

    def test_degenerate_rate_rejected(self):
        with pytest.raises(DegenerateRate):
            DigitalDesign(rho=np.array([0.0]), nu=np.array([1.0]),
                          r_bits=np.array([1]), gains=np.array([1.0]),
                          dim=4, noise_psd=1e-9, energy_per_symbol=1e-6,
                          min_rate=0.05)
