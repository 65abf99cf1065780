"""Wireless environment: device placement, log-distance path loss, and the
Rayleigh block-fading channel shared by both transmission schemes.

Channel coefficients are complex Gaussian h ~ CN(0, Lambda) per device,
drawn i.i.d. across rounds and constant within a round.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class RadioConfig:
    """Physical-layer constants. Powers are configured in dBm and converted
    once; energy per transmitted symbol defaults to tx_power / bandwidth."""

    bandwidth_hz: float = 1e6
    noise_psd_dbm_per_hz: float = -161.0
    tx_power_dbm: float = 0.0
    carrier_freq_hz: float = 2.4e9          # provenance only, enters no formula
    pathloss_exponent: float = 2.2
    pathloss_ref_db: float = 50.0
    cell_radius_m: float = 3000.0
    energy_per_symbol_j: float | None = None

    def __post_init__(self):
        if self.bandwidth_hz <= 0 or self.cell_radius_m <= 0:
            raise ValueError("bandwidth and cell radius must be positive")
        if self.pathloss_ref_db <= 0:
            raise ValueError("reference path loss must be positive (dB)")
        if self.energy_per_symbol_j is None:
            self.energy_per_symbol_j = self.tx_power_w / self.bandwidth_hz

    @property
    def noise_psd_w_per_hz(self) -> float:
        return dbm_to_watt(self.noise_psd_dbm_per_hz)

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watt(self.tx_power_dbm)

    def pathloss_gain(self, distance_m: float | np.ndarray) -> float | np.ndarray:
        """Average squared channel gain at the given distance (>= 1 m model)."""
        loss_db = self.pathloss_ref_db + 10.0 * self.pathloss_exponent * np.log10(distance_m)
        return 10.0 ** (-loss_db / 10.0)


@dataclass
class DeviceProfile:
    """Per-device large-scale state: distance, mean squared channel gain,
    and the device's mini-batch gradient variance bound."""

    device_id: int
    distance_m: float
    gain_mean: float                         # Lambda_m
    sigma: float = 0.0

    def __post_init__(self):
        if self.gain_mean <= 0:
            raise ValueError("mean channel gain must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def place_devices(n: int, radio: RadioConfig, rng: np.random.Generator,
                  sigmas: np.ndarray | None = None) -> list[DeviceProfile]:
    """Drop n devices area-uniformly in the cell and derive their gains.

    Distances use r = R * sqrt(U) so density is uniform over the disk.
    """
    if n < 1:
        raise ValueError("need at least one device")
    u = rng.uniform(0.0, 1.0, size=n)
    distances = radio.cell_radius_m * np.sqrt(u)
    distances = np.maximum(distances, 1.0)   # path-loss model is referenced at 1 m
    gains = radio.pathloss_gain(distances)
    if sigmas is None:
        sigmas = np.zeros(n)
    return [DeviceProfile(m, float(distances[m]), float(gains[m]), float(sigmas[m]))
            for m in range(n)]


def gain_vector(profiles: list[DeviceProfile]) -> np.ndarray:
    return np.array([p.gain_mean for p in profiles])


def sigma_vector(profiles: list[DeviceProfile]) -> np.ndarray:
    return np.array([p.sigma for p in profiles])


def draw_channels(gains: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One block-fading realization h_m ~ CN(0, Lambda_m) per device.

    |h_m|^2 is then exponential with mean Lambda_m.
    """
    gains = np.asarray(gains, dtype=float)
    scale = np.sqrt(gains / 2.0)
    return scale * (rng.standard_normal(gains.shape)
                    + 1j * rng.standard_normal(gains.shape))
