"""Biased over-the-air FL round: truncated channel inversion, superposed
reception, post-scaled gradient estimate, and its variance bound.

A device transmits x = (gamma / h) g only when |h| clears a threshold that
caps the per-round transmit energy at d * E_s; the server divides the
superposed signal by the post-scaler alpha. Conditioned on the gradients,
the estimate is unbiased for the participation-weighted combination
sum_m p_m g_m with p_m = alpha_m / alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesign


def ota_alpha(gamma: np.ndarray, g_max: float, dim: int, gains: np.ndarray,
              energy_per_symbol: float) -> np.ndarray:
    """Mean effective amplitude alpha_m = gamma_m E[chi_m]."""
    gamma = np.asarray(gamma, dtype=float)
    return gamma * np.exp(-(gamma ** 2) * g_max ** 2
                          / (dim * np.asarray(gains) * energy_per_symbol))


def ota_gamma_max(g_max: float, dim: int, gains: np.ndarray,
                  energy_per_symbol: float) -> np.ndarray:
    """Pre-scaler maximizing alpha_m; larger gammas only lose amplitude."""
    return np.sqrt(dim * np.asarray(gains) * energy_per_symbol / (2.0 * g_max ** 2))


def ota_alpha_max(g_max: float, dim: int, gains: np.ndarray,
                  energy_per_symbol: float) -> np.ndarray:
    """Peak of alpha_m over gamma: sqrt(d Lambda E_s / (2 e G^2))."""
    return np.sqrt(dim * np.asarray(gains) * energy_per_symbol
                   / (2.0 * np.e * g_max ** 2))


@dataclass
class OtaDesign:
    """Pre-scalers plus the propagation constants that fix their effect."""

    gamma: np.ndarray
    g_max: float
    dim: int
    gains: np.ndarray                       # Lambda_m
    energy_per_symbol: float                # E_s

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.gains = np.asarray(self.gains, dtype=float)
        if self.gamma.shape != self.gains.shape:
            raise ValueError("one gamma per device")
        if (self.gamma < 0).any():
            raise ValueError("pre-scalers must be non-negative")
        if (self.gains <= 0).any() or self.g_max <= 0 or self.energy_per_symbol <= 0:
            raise ValueError("gains, g_max, and symbol energy must be positive")

    @property
    def n_devices(self) -> int:
        return len(self.gamma)

    @property
    def alpha_m(self) -> np.ndarray:
        return ota_alpha(self.gamma, self.g_max, self.dim, self.gains,
                         self.energy_per_symbol)

    @property
    def alpha(self) -> float:
        return float(self.alpha_m.sum())

    @property
    def participation(self) -> np.ndarray:
        """p_m = alpha_m / alpha; sums to one by construction."""
        alpha = self.alpha
        if alpha <= 0.0:
            raise DegenerateDesign("all effective amplitudes vanish")
        return self.alpha_m / alpha

    @property
    def thresholds(self) -> np.ndarray:
        """Channel-magnitude cutoffs below which a device stays silent."""
        return self.g_max * self.gamma / np.sqrt(self.dim * self.energy_per_symbol)


def ota_indicator(h: complex | np.ndarray, gamma, g_max: float, dim: int,
                  energy_per_symbol: float):
    """Transmission indicator: 1 iff |h| >= G gamma / sqrt(d E_s) (inclusive)."""
    threshold = g_max * np.asarray(gamma, dtype=float) / np.sqrt(dim * energy_per_symbol)
    return np.abs(h) >= threshold


@dataclass
class OtaRoundTranscript:
    """Everything one OTA round realizes."""

    chi: np.ndarray                         # participation indicators
    tx_energy: np.ndarray                   # ||x_m||^2 per device (J)
    g_hat: np.ndarray                       # post-scaled gradient estimate
    g_tilde: np.ndarray                     # sum_m p_m g_m, for attribution
    latency_s: float


def ota_round(grads: np.ndarray, design: OtaDesign, channels: np.ndarray,
              noise_rng: np.random.Generator | None, noise_psd: float,
              bandwidth_hz: float, *, force_participation: bool = False,
              disable_noise: bool = False) -> OtaRoundTranscript:
    """Execute one over-the-air aggregation round.

    grads: (N, d) local mini-batch gradients; channels: (N,) complex draws.
    The noise entering the estimate is a real d-vector with per-component
    variance N_0 applied after post-scaling, matching the variance bound's
    noise term d N_0 / alpha^2 exactly. The test hooks expose the
    deterministic convex-combination path.
    """
    grads = np.asarray(grads, dtype=float)
    n, dim = grads.shape
    if dim != design.dim or n != design.n_devices:
        raise ValueError("gradient array inconsistent with design")
    alpha = design.alpha
    if alpha <= 0.0:
        raise DegenerateDesign("post-scaler alpha is zero")

    if force_participation:
        chi = np.ones(n, dtype=bool)
    else:
        chi = ota_indicator(channels, design.gamma, design.g_max, design.dim,
                            design.energy_per_symbol)

    weights = np.where(chi, design.gamma, 0.0)
    received = (weights[:, None] * grads).sum(axis=0)
    if not disable_noise:
        received = received + np.sqrt(noise_psd) * noise_rng.standard_normal(dim)
    g_hat = received / alpha

    sq_norms = np.einsum("md,md->m", grads, grads)
    gain = np.abs(np.asarray(channels)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        tx_energy = np.where(chi, design.gamma ** 2 * sq_norms / gain, 0.0)
    tx_energy = np.nan_to_num(tx_energy, nan=0.0, posinf=0.0)

    g_tilde = design.participation @ grads
    return OtaRoundTranscript(chi=chi, tx_energy=tx_energy, g_hat=g_hat,
                              g_tilde=g_tilde, latency_s=design.dim / bandwidth_hz)


def ota_variance_bound(design: OtaDesign, sigmas: np.ndarray,
                       noise_psd: float) -> float:
    """Closed-form bound on var(g_hat | w): transmission + mini-batch + noise."""
    p = design.participation
    alpha_m = design.alpha_m
    sigmas = np.asarray(sigmas, dtype=float)
    transmission = float(np.sum(p ** 2 * design.g_max ** 2
                                * (design.gamma / alpha_m - 1.0)))
    minibatch = float(np.sum(p ** 2 * sigmas ** 2))
    noise = design.dim * noise_psd / design.alpha ** 2
    return transmission + minibatch + noise
