"""Frequency branch: pre-emphasis, learnable sinc band-pass bank, adaptive
max pooling to 32 steps, batch norm, SELU and a per-step projection.

Feature maps are kept time-major, (N, T', F), like every other tensor here.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import ConfigError, InputError

log = logging.getLogger(__name__)

POOLED_STEPS = 32


def pre_emphasis(samples, coef=0.97):
    """``y[0] = x[0]``, ``y[n] = x[n] - coef * x[n-1]`` along the last axis."""
    if not 0.0 <= coef <= 1.0:
        raise ConfigError(f"pre-emphasis coefficient must lie in [0, 1], got {coef}")
    x = np.asarray(samples, dtype=np.float64)
    y = x.copy()
    y[..., 1:] -= coef * x[..., :-1]
    return y


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10 ** (np.asarray(mel) / 2595.0) - 1.0)


def hamming(K):
    n = np.arange(K)
    return 0.54 - 0.46 * np.cos(2 * np.pi * n / (K - 1)) if K > 1 else np.ones(1)


def sinc_kernels(f_low, f_high, K, sample_rate):
    """Hamming-windowed band-pass kernels (K, F) from cutoffs in Hz.

    ``h[n] = 2 f2 sinc(2 pi f2 n) - 2 f1 sinc(2 pi f1 n)`` with normalized
    frequencies, i.e. ``(sin(2 pi f2 n) - sin(2 pi f1 n)) / (pi n)`` and
    ``2 (f2 - f1)`` at ``n = 0``.
    """
    f_low, f_high = dc.as_tensor(f_low), dc.as_tensor(f_high)
    n = (np.arange(K) - (K - 1) / 2)[:, None]
    win = hamming(K)[:, None]
    f1 = f_low.data[None, :] / sample_rate
    f2 = f_high.data[None, :] / sample_rate
    centre = n == 0
    safe_n = np.where(centre, 1.0, n)

    def band_edge(f):
        return np.where(centre, 2.0 * f, np.sin(2 * np.pi * f * n) / (np.pi * safe_n))

    h = win * (band_edge(f2) - band_edge(f1))
    d1 = -win * 2.0 * np.cos(2 * np.pi * f1 * n) / sample_rate
    d2 = win * 2.0 * np.cos(2 * np.pi * f2 * n) / sample_rate

    def backward(g):
        return (g * d1).sum(axis=0), (g * d2).sum(axis=0)

    return dc.custom_op("sinc_kernels", h, (f_low, f_high), backward)


@dataclass
class SincBank:
    """Trainable cutoffs, reparameterized so ``0 <= f_low < f_high <= Nyquist``.

    ``f_low = clip(|low_raw|, 0, nyq - min_band)`` and
    ``f_high = min(f_low + min_band + |band_raw|, nyq)``.
    """

    low_raw: dc.Tensor
    band_raw: dc.Tensor
    kernel_size: int = 65
    stride: int = 160
    sample_rate: int = 16000
    min_band_hz: float = 50.0

    def __post_init__(self):
        if self.kernel_size % 2 != 1:
            raise ConfigError(f"sinc kernel length must be odd, got {self.kernel_size}")
        if self.low_raw.shape != self.band_raw.shape or self.low_raw.ndim != 1:
            raise ConfigError("sinc cutoff parameters must be matching 1-D arrays")

    @property
    def nyquist(self):
        return self.sample_rate / 2.0

    @property
    def n_filters(self):
        return self.low_raw.shape[0]

    @classmethod
    def mel_init(cls, n_filters, kernel_size=65, stride=160, sample_rate=16000,
                 min_low_hz=30.0, min_band_hz=50.0):
        nyq = sample_rate / 2.0
        mel = np.linspace(_hz_to_mel(min_low_hz), _hz_to_mel(nyq - min_band_hz), n_filters + 1)
        hz = _mel_to_hz(mel)
        low = hz[:-1]
        band = np.diff(hz) - min_band_hz
        return cls(dc.Tensor(low, requires_grad=True), dc.Tensor(np.abs(band), requires_grad=True),
                   kernel_size, stride, sample_rate, min_band_hz)

    @classmethod
    def from_cutoffs(cls, lows, highs, kernel_size=65, stride=160, sample_rate=16000, min_band_hz=50.0):
        lows, highs = np.asarray(lows, float), np.asarray(highs, float)
        if np.any(lows < 0) or np.any(highs > sample_rate / 2) or np.any(highs - lows < min_band_hz):
            raise ConfigError("cutoffs must satisfy 0 <= low, high <= Nyquist, high - low >= min band")
        return cls(dc.Tensor(lows, requires_grad=True),
                   dc.Tensor(highs - lows - min_band_hz, requires_grad=True),
                   kernel_size, stride, sample_rate, min_band_hz)

    def parameters(self):
        return {"low_raw": self.low_raw, "band_raw": self.band_raw}

    def cutoffs(self):
        nyq = self.nyquist
        f_low = dc.clip(dc.absolute(self.low_raw), 0.0, nyq - self.min_band_hz)
        f_high = dc.clip(dc.add(dc.add(f_low, self.min_band_hz), dc.absolute(self.band_raw)), None, nyq)
        return f_low, f_high

    def kernels(self):
        f_low, f_high = self.cutoffs()
        return sinc_kernels(f_low, f_high, self.kernel_size, self.sample_rate)

    def enforce_constraints(self):
        """Fold raw parameters back into range after an optimizer step."""
        nyq = self.nyquist
        low = np.abs(self.low_raw.data)
        over_low = low > nyq - self.min_band_hz
        low = np.minimum(low, nyq - self.min_band_hz)
        band = np.abs(self.band_raw.data)
        over = low + self.min_band_hz + band > nyq
        if over.any() or over_low.any():
            log.warning("sinc cutoffs clamped to Nyquist for filters %s",
                        np.flatnonzero(over | over_low).tolist())
        band = np.minimum(band, nyq - self.min_band_hz - low)
        self.low_raw.data = low
        self.band_raw.data = band


def sinc_filterbank(wave, bank):
    """Valid convolution of (N, S) waveforms with the bank at its stride -> (N, T', F)."""
    wave = dc.as_tensor(wave)
    if wave.ndim == 1:
        wave = dc.reshape(wave, (1, -1))
    N, S = wave.shape
    frames = dc.unfold(dc.reshape(wave, (N, S, 1)), bank.kernel_size, bank.stride)
    return dc.matmul(frames, bank.kernels())


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, channels):
        return cls(np.zeros(channels), np.ones(channels))


def pool_norm_project(fmap, gamma, beta, bn_state, proj_w, proj_b, training,
                      steps=POOLED_STEPS):
    """Adaptive max pool to ``steps`` bins, batch norm, SELU, affine F -> D."""
    fmap = dc.as_tensor(fmap)
    if fmap.shape[1] < steps:
        raise InputError(
            f"frequency map has {fmap.shape[1]} steps, fewer than {steps}; waveform too short for this stride"
        )
    pooled = dc.adaptive_max_pool(fmap, steps)
    normed = dc.batch_norm(pooled, gamma, beta, bn_state.running_mean, bn_state.running_var,
                           training, bn_state.momentum, bn_state.eps)
    return dc.affine(dc.selu(normed), proj_w, proj_b)
