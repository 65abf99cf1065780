"""Biased digital FL round: threshold-gated participation, dithered
stochastic uniform quantization, TDMA latency accounting, post-scaled
estimation, and the matching variance bound.

Each participating device normalizes its gradient by the sup-norm,
stochastically rounds every entry onto a 2^r-level uniform grid on [-1, 1],
and uploads the levels plus the norm (64 bits) in its time slot. The server
rescales slot m by 1/nu_m, so conditioned on the gradients the estimate is
unbiased for sum_m p_m g_m with p_m = beta_m / nu_m.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptPayload, DegenerateRate

NORM_BITS = 64  # sup-norm side information: one IEEE-754 double


@dataclass
class QuantizedGradient:
    """Grid-level indices plus the sup-norm needed to reconstruct."""

    levels: np.ndarray                      # int levels in [0, 2^r - 1]
    sup_norm: float


def dithered_quantize(g: np.ndarray, r_bits: int,
                      rng: np.random.Generator) -> QuantizedGradient:
    """Stochastically round g / ||g||_inf onto the 2^r-level grid on [-1, 1].

    Entries land on the adjacent lower/upper level with probability equal to
    proximity, so reconstruction is unbiased with per-entry variance at most
    (step/2)^2; exact grid values round deterministically.
    """
    if r_bits < 1:
        raise ValueError("need at least one quantization bit")
    g = np.asarray(g, dtype=float)
    sup = float(np.max(np.abs(g))) if g.size else 0.0
    if sup == 0.0:
        return QuantizedGradient(levels=np.zeros(g.shape, dtype=np.int64),
                                 sup_norm=0.0)
    v = g / sup
    n_levels = 2 ** r_bits
    step = 2.0 / (n_levels - 1)
    position = np.clip((v + 1.0) / step, 0.0, n_levels - 1.0)
    lower = np.floor(position)
    frac = position - lower
    bump = rng.random(g.shape) < frac
    levels = lower.astype(np.int64) + bump
    return QuantizedGradient(levels=levels, sup_norm=sup)


def dequantize(q: QuantizedGradient, r_bits: int) -> np.ndarray:
    """Map level indices back to values: (-1 + level * step) * sup_norm."""
    levels = np.asarray(q.levels)
    n_levels = 2 ** r_bits
    if levels.min(initial=0) < 0 or levels.max(initial=0) > n_levels - 1:
        raise CorruptPayload(f"level index outside [0, {n_levels - 1}]")
    if q.sup_norm == 0.0:
        return np.zeros(levels.shape, dtype=float)
    step = 2.0 / (n_levels - 1)
    return (levels * step - 1.0) * q.sup_norm


def payload_bits(dim: int, r_bits: int) -> int:
    """Uplink payload size in bits: 64-bit norm plus d packed level indices."""
    return NORM_BITS + dim * r_bits


def encode_payload(q: QuantizedGradient, r_bits: int) -> bytes:
    """Wire format: big-endian float64 sup-norm, then level indices packed
    r bits each, MSB first, zero-padded to a byte boundary."""
    levels = np.asarray(q.levels, dtype=np.int64)
    if levels.min(initial=0) < 0 or levels.max(initial=0) > 2 ** r_bits - 1:
        raise CorruptPayload("level index does not fit the bit width")
    header = struct.pack(">d", q.sup_norm)
    shifts = np.arange(r_bits - 1, -1, -1)
    bits = ((levels[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return header + np.packbits(bits, bitorder="big").tobytes()


def decode_payload(blob: bytes, dim: int, r_bits: int) -> QuantizedGradient:
    expected = 8 + (dim * r_bits + 7) // 8
    if len(blob) != expected:
        raise CorruptPayload(f"payload is {len(blob)} bytes, expected {expected}")
    (sup,) = struct.unpack(">d", blob[:8])
    bits = np.unpackbits(np.frombuffer(blob[8:], dtype=np.uint8), bitorder="big")
    bits = bits[: dim * r_bits].reshape(dim, r_bits).astype(np.int64)
    weights = 1 << np.arange(r_bits - 1, -1, -1)
    levels = bits @ weights
    if levels.max(initial=0) > 2 ** r_bits - 1:
        raise CorruptPayload("decoded level out of range")
    return QuantizedGradient(levels=levels, sup_norm=float(sup))


@dataclass
class DigitalDesign:
    """Thresholds, post-scalers, and bit widths plus their derived quantities."""

    rho: np.ndarray                          # channel-magnitude thresholds
    nu: np.ndarray                           # server post-scalers
    r_bits: np.ndarray                       # quantization bits, integer >= 1
    gains: np.ndarray                        # Lambda_m
    dim: int
    noise_psd: float                         # N_0 (W/Hz)
    energy_per_symbol: float                 # E_s (J)
    min_rate: float = 0.05                   # spectral-efficiency floor (bps/Hz)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float)
        self.r_bits = np.asarray(self.r_bits, dtype=int)
        self.gains = np.asarray(self.gains, dtype=float)
        n = len(self.rho)
        if not (len(self.nu) == len(self.r_bits) == len(self.gains) == n):
            raise ValueError("per-device arrays must share a length")
        if (self.rho < 0).any() or (self.nu <= 0).any() or (self.gains <= 0).any():
            raise ValueError("thresholds, post-scalers, gains must be positive")
        if (self.r_bits < 1).any():
            raise ValueError("quantization bit counts must be integers >= 1")
        rates = self.rate
        if (rates < self.min_rate).any():
            raise DegenerateRate(
                f"spectral efficiency below the {self.min_rate} bps/Hz floor")
        p = self.participation
        if (p < 0).any() or (p > 1 + 1e-9).any() or abs(float(p.sum()) - 1.0) > 1e-6:
            raise ValueError("participation levels must form a simplex point")

    @property
    def n_devices(self) -> int:
        return len(self.rho)

    @property
    def beta(self) -> np.ndarray:
        """Participation probability beta_m = exp(-rho^2 / Lambda)."""
        return np.exp(-self.rho ** 2 / self.gains)

    @property
    def participation(self) -> np.ndarray:
        return self.beta / self.nu

    @property
    def rate(self) -> np.ndarray:
        """Spectral efficiency log2(1 + E_s rho^2 / N_0), bps/Hz."""
        return np.log2(1.0 + self.energy_per_symbol * self.rho ** 2 / self.noise_psd)

    @property
    def payload(self) -> np.ndarray:
        return NORM_BITS + self.dim * self.r_bits


@dataclass
class DigitalRoundTranscript:
    chi: np.ndarray
    latencies_s: np.ndarray                  # per-device slot time, zero if silent
    bits_sent: np.ndarray
    g_hat: np.ndarray
    g_tilde: np.ndarray
    round_latency_s: float


def digital_round(grads: np.ndarray, design: DigitalDesign, channels: np.ndarray,
                  dither_rngs, bandwidth_hz: float, *,
                  force_participation: bool = False) -> DigitalRoundTranscript:
    """Execute one TDMA round: gate, quantize, upload, rescale, account time.

    dither_rngs is either one Generator (shared sequentially) or one per
    device, matching the per-(device, round) stream discipline.
    """
    grads = np.asarray(grads, dtype=float)
    n, dim = grads.shape
    if dim != design.dim or n != design.n_devices:
        raise ValueError("gradient array inconsistent with design")
    if isinstance(dither_rngs, np.random.Generator):
        dither_rngs = [dither_rngs] * n

    if force_participation:
        chi = np.ones(n, dtype=bool)
    else:
        chi = np.abs(np.asarray(channels)) >= design.rho

    g_hat = np.zeros(dim)
    bits = np.zeros(n, dtype=np.int64)
    for m in range(n):
        if not chi[m]:
            continue
        q = dithered_quantize(grads[m], int(design.r_bits[m]), dither_rngs[m])
        g_hat += dequantize(q, int(design.r_bits[m])) / design.nu[m]
        bits[m] = payload_bits(dim, int(design.r_bits[m]))

    latencies = np.where(chi, design.payload / (bandwidth_hz * design.rate), 0.0)
    g_tilde = design.participation @ grads
    return DigitalRoundTranscript(chi=chi, latencies_s=latencies, bits_sent=bits,
                                  g_hat=g_hat, g_tilde=g_tilde,
                                  round_latency_s=float(latencies.sum()))


def digital_variance_bound(design: DigitalDesign, g_max: float,
                           sigmas: np.ndarray) -> float:
    """Closed-form bound on var(g_hat | w): transmission + mini-batch +
    quantization noise."""
    p = design.participation
    beta = design.beta
    sigmas = np.asarray(sigmas, dtype=float)
    transmission = float(np.sum(p ** 2 * g_max ** 2 * (1.0 / beta - 1.0)))
    minibatch = float(np.sum(p ** 2 * sigmas ** 2))
    quantization = float(np.sum(p ** 2 * g_max ** 2 * design.dim
                                / (beta * (2.0 ** design.r_bits - 1.0) ** 2)))
    return transmission + minibatch + quantization


def expected_round_latency(design: DigitalDesign, bandwidth_hz: float) -> float:
    """Mean TDMA round time: sum_m beta_m L_m / (B R_m)."""
    rates = design.rate
    if (rates <= 0).any():
        raise DegenerateRate("zero spectral efficiency gives unbounded latency")
    return float(np.sum(design.beta * design.payload / (bandwidth_hz * rates)))
