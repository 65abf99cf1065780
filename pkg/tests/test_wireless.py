import numpy as np
import pytest

from wirelessfl.rng import stream
from wirelessfl.wireless import (DeviceProfile, RadioConfig, dbm_to_watt,
                                 draw_channels, gain_vector, place_devices)


class TestRadioConfig:
    def test_noise_psd_conversion_bit_exact(self):
        radio = RadioConfig(noise_psd_dbm_per_hz=-161.0)
        assert radio.noise_psd_w_per_hz == 10.0 ** ((-161.0 - 30.0) / 10.0)

    def test_energy_per_symbol_default(self):
        radio = RadioConfig(tx_power_dbm=0.0, bandwidth_hz=1e6)
        assert radio.energy_per_symbol_j == pytest.approx(
            dbm_to_watt(0.0) / 1e6, rel=1e-15)

    def test_energy_per_symbol_override(self):
        radio = RadioConfig(energy_per_symbol_j=3.5e-9)
        assert radio.energy_per_symbol_j == 3.5e-9


class TestPathLoss:
    def test_reference_distance(self):
        radio = RadioConfig(pathloss_ref_db=50.0, pathloss_exponent=2.2)
        assert radio.pathloss_gain(1.0) == pytest.approx(1e-5, rel=1e-12)

    def test_ten_meters(self):
        radio = RadioConfig(pathloss_ref_db=50.0, pathloss_exponent=2.2)
        assert radio.pathloss_gain(10.0) == pytest.approx(10 ** (-7.2), rel=1e-12)

    def test_deterministic_given_distance(self):
        radio = RadioConfig()
        d = np.array([5.0, 50.0, 500.0])
        np.testing.assert_array_equal(radio.pathloss_gain(d), radio.pathloss_gain(d))


class TestPlacement:
    def test_squared_distance_is_uniform(self):
        """Empirical CDF of r^2 vs uniform on [0, R^2]: KS statistic < 0.02."""
        radio = RadioConfig(cell_radius_m=100.0)
        profiles = place_devices(100_000, radio, stream(1, purpose="placement"))
        r2 = np.sort(np.array([p.distance_m for p in profiles]) ** 2)
        cdf = r2 / radio.cell_radius_m ** 2
        n = len(cdf)
        grid = np.arange(1, n + 1) / n
        ks = max(np.abs(grid - cdf).max(), np.abs(cdf - (grid - 1 / n)).max())
        assert ks < 0.02

    def test_gain_matches_pathloss(self):
        radio = RadioConfig()
        profiles = place_devices(50, radio, stream(2, purpose="placement"))
        for p in profiles:
            assert p.gain_mean == pytest.approx(radio.pathloss_gain(p.distance_m),
                                                rel=1e-12)

    def test_zero_gain_rejected(self):
        with pytest.raises(ValueError):
            DeviceProfile(device_id=0, distance_m=1.0, gain_mean=0.0)


class TestChannels:
    def test_second_moment(self):
        gains = np.array([0.5])
        rng = stream(3, purpose="channel")
        draws = np.abs(draw_channels(np.repeat(gains, 100_000), rng)) ** 2
        assert abs(draws.mean() - 0.5) <= 3.0 * 0.5 / np.sqrt(100_000)

    def test_exponential_tail(self):
        """P(|h| >= sqrt(Lambda ln 2)) = 1/2 for exponential |h|^2."""
        lam = 2.0e-7
        rng = stream(4, purpose="channel")
        h = draw_channels(np.full(100_000, lam), rng)
        frac = np.mean(np.abs(h) >= np.sqrt(lam * np.log(2.0)))
        assert abs(frac - 0.5) < 0.01

    def test_rounds_independent(self):
        """Lag-1 autocorrelation of |h|^2 across rounds stays within +-0.02."""
        gains = np.array([1.0e-6])
        seq = np.array([np.abs(draw_channels(gains, stream(5, 0, t, "channel")))[0] ** 2
                        for t in range(100_000)])
        centered = seq - seq.mean()
        corr = float((centered[:-1] @ centered[1:]) / (centered @ centered))
        assert abs(corr) < 0.02

    def test_shape_and_dtype(self):
        h = draw_channels(np.array([1e-6, 1e-8]), stream(6, purpose="channel"))
        assert h.shape == (2,) and np.iscomplexobj(h)
