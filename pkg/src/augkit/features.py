"""Log-Mel filterbank front-end."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .audio_dsp import Waveform
from .errors import ConfigError, TooShortError


@dataclass(frozen=True)
class FeatureConfig:
    frame_length_ms: float = 25.0
    frame_shift_ms: float = 10.0
    fft_size: int = 512
    mel_bins: int = 64
    fmin_hz: float = 20.0
    fmax_hz: float = 7600.0
    dither: float = 0.0
    log_floor: float = 1e-10
    cmn: bool = True
    sample_rate_hz: int = 16000

    def __post_init__(self):
        if self.frame_shift_ms <= 0 or self.frame_shift_ms > self.frame_length_ms:
            raise ConfigError("need 0 < frame_shift_ms <= frame_length_ms")
        if self.frame_length_samples > self.fft_size:
            raise ConfigError(f"frame of {self.frame_length_samples} samples does not fit fft_size {self.fft_size}")
        if self.mel_bins < 2:
            raise ConfigError("mel_bins must be >= 2")
        if not 0 <= self.fmin_hz < self.fmax_hz <= self.sample_rate_hz / 2:
            raise ConfigError("need 0 <= fmin_hz < fmax_hz <= Nyquist")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")
        if self.dither < 0:
            raise ConfigError("dither must be non-negative")

    @property
    def frame_length_samples(self) -> int:
        return int(round(self.frame_length_ms * self.sample_rate_hz / 1000))

    @property
    def frame_shift_samples(self) -> int:
        return int(round(self.frame_shift_ms * self.sample_rate_hz / 1000))

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray  # (T, D)
    fingerprint: str = ""

    @property
    def shape(self):
        return self.frames.shape


def num_frames(n_samples: int, config: FeatureConfig) -> int:
    flen, fshift = config.frame_length_samples, config.frame_shift_samples
    if n_samples < flen:
        return 0
    return 1 + (n_samples - flen) // fshift


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def stft_power(wave_: Waveform, config: FeatureConfig = FeatureConfig(), seed: int = 0) -> np.ndarray:
    """Hann-windowed power spectrum per frame, shape (T, fft_size/2 + 1)."""
    flen, fshift = config.frame_length_samples, config.frame_shift_samples
    if len(wave_) < flen:
        raise TooShortError(f"{len(wave_)} samples is shorter than one {flen}-sample frame")
    x = wave_.samples
    if config.dither > 0:
        x = x + config.dither * np.random.default_rng(seed).standard_normal(x.size)
    frames = np.lib.stride_tricks.sliding_window_view(x, flen)[::fshift]
    # periodic Hann
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(flen) / flen)
    spec = np.fft.rfft(frames * window, n=config.fft_size, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def mel_filterbank(config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Triangular mel filters, each row scaled so its peak weight is 1."""
    return _filterbank(config).copy()


@lru_cache(maxsize=8)
def _filterbank(config: FeatureConfig) -> np.ndarray:
    n_bins = config.fft_size // 2 + 1
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(config.fmin_hz), hz_to_mel(config.fmax_hz), config.mel_bins + 2))
    if np.any(np.diff(edges_hz) <= 0):
        raise ConfigError("duplicate mel band edges")
    freqs = np.arange(n_bins) * config.sample_rate_hz / config.fft_size
    lower, center, upper = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    rising = (freqs - lower) / (center - lower)
    falling = (upper - freqs) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peaks = fb.max(axis=1)
    if np.any(peaks <= 0):
        bad = int(np.argmin(peaks))
        raise ConfigError(f"mel filter {bad} covers no FFT bin; lower mel_bins or raise fft_size")
    fb = fb / peaks[:, None]
    fb.setflags(write=False)
    return fb


def cmn(frames: np.ndarray) -> np.ndarray:
    """Per-dimension mean subtraction over time."""
    # Shift by the first frame so constant columns come out as exact zeros.
    centered = frames - frames[:1]
    return centered - centered.mean(axis=0, keepdims=True)


def log_mel(wave_: Waveform, config: FeatureConfig = FeatureConfig(), seed: int = 0) -> FeatureMatrix:
    power = stft_power(wave_, config, seed)
    mel = power @ _filterbank(config).T
    feats = np.log(np.maximum(mel, config.log_floor))
    if config.cmn:
        feats = cmn(feats)
    return FeatureMatrix(feats, config.fingerprint())
