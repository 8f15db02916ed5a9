"""Waveform I/O and resampling-based speed perturbation.

Speed perturbation follows the SoX ``speed`` effect: the signal is resampled
by a ratio of ``1/factor`` and the result is played back at the original rate,
so duration scales by ``1/factor`` and every frequency by ``factor``.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError, FormatError, TooShortError, UnsupportedFormatError

CANONICAL_RATE = 16000
DEFAULT_SPEED_FACTORS = (0.9, 1.1)
MIN_FACTOR, MAX_FACTOR = 0.5, 2.0

KAISER_BETA = 8.6
ZERO_CROSSINGS = 32
MAX_DENOMINATOR = 1000
_CHUNK = 1 << 15


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = CANONICAL_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise DomainError("waveform must be mono (1-D samples)")
        if self.sample_rate_hz <= 0:
            raise DomainError(f"sample rate must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2))) if len(self) else 0.0


def read_wav(path, expected_rate: int | None = CANONICAL_RATE) -> Waveform:
    """Load a 16-bit PCM mono WAV file, scaling samples by 1/32768.

    ``expected_rate`` guards the canonical rate; pass ``None`` to accept any.
    Stereo or non-16-bit files are rejected rather than converted.
    """
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: malformed WAV ({exc})") from exc
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels} channels, only mono is supported")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: {8 * width}-bit samples, only 16-bit PCM is supported")
    if expected_rate is not None and rate != expected_rate:
        raise UnsupportedFormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if len(raw) % 2:
        raise FormatError(f"{path}: truncated sample data")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def quantize(samples) -> np.ndarray:
    """Map amplitudes to int16, clamping instead of wrapping."""
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(wave_: Waveform, path) -> None:
    if len(wave_) == 0:
        raise DomainError("refusing to write an empty waveform")
    pcm = quantize(wave_.samples)
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(wave_.sample_rate_hz)
        fh.writeframes(pcm.tobytes())


def synth_tone(freq_hz: float, duration_s: float, sample_rate_hz: int = CANONICAL_RATE,
               amplitude: float = 0.5) -> Waveform:
    if freq_hz < 0 or duration_s <= 0:
        raise DomainError("frequency must be >= 0 and duration > 0")
    if freq_hz >= sample_rate_hz / 2:
        raise DomainError(f"{freq_hz} Hz is at or above Nyquist for {sample_rate_hz} Hz")
    n = np.arange(int(round(duration_s * sample_rate_hz)))
    return Waveform(amplitude * np.sin(2 * np.pi * freq_hz * n / sample_rate_hz), sample_rate_hz)


def rational_factor(factor: float) -> Fraction:
    """Exact rational used for the polyphase tables (denominator <= 1000)."""
    return Fraction(factor).limit_denominator(MAX_DENOMINATOR)


def perturbed_length(n: int, factor: float) -> int:
    """round(n / factor), half-up, computed on the rational factor."""
    ratio = Fraction(n) / rational_factor(factor)
    return int((ratio + Fraction(1, 2)).__floor__())


@lru_cache(maxsize=32)
def _phase_table(num: int, den: int) -> tuple[np.ndarray, int]:
    # Output sample k sits at input position k*num/den; den distinct fractional phases.
    cutoff = min(1.0, den / num)
    half_width = ZERO_CROSSINGS / cutoff
    reach = int(np.ceil(half_width))
    offsets = np.arange(-reach, reach + 1, dtype=np.float64)
    phases = np.arange(den, dtype=np.float64) / den
    x = offsets[None, :] - phases[:, None]
    window = np.zeros_like(x)
    inside = np.abs(x) <= half_width
    window[inside] = np.i0(KAISER_BETA * np.sqrt(1.0 - (x[inside] / half_width) ** 2)) / np.i0(KAISER_BETA)
    taps = cutoff * np.sinc(cutoff * x) * window
    taps.setflags(write=False)
    return taps, reach


def speed_perturb(wave_: Waveform, factor: float, force: bool = False) -> Waveform:
    """Resample so that pitch and tempo both scale by ``factor``.

    ``factor == 1.0`` is only accepted with ``force=True`` (augmentation
    outputs must differ from their source).
    """
    if not (MIN_FACTOR <= factor <= MAX_FACTOR):
        raise DomainError(f"speed factor {factor} outside [{MIN_FACTOR}, {MAX_FACTOR}]")
    if factor == 1.0 and not force:
        raise DomainError("speed factor 1.0 is an identity; pass force=True to allow it")
    if len(wave_) == 0:
        raise TooShortError("cannot perturb an empty waveform")
    frac = rational_factor(factor)
    num, den = frac.numerator, frac.denominator
    taps, reach = _phase_table(num, den)
    n_out = perturbed_length(len(wave_), factor)
    padded = np.concatenate([np.zeros(reach), wave_.samples, np.zeros(reach + num // den + 2)])
    span = np.arange(2 * reach + 1)
    out = np.empty(n_out)
    for start in range(0, n_out, _CHUNK):
        k = np.arange(start, min(start + _CHUNK, n_out), dtype=np.int64)
        base, phase = np.divmod(k * num, den)
        idx = base[:, None] + span[None, :]
        out[start:start + k.size] = np.einsum("ij,ij->i", padded[idx], taps[phase])
    return Waveform(out, wave_.sample_rate_hz)


def dominant_frequency(wave_: Waveform, n_fft: int = 8192) -> float:
    """Frequency of the largest magnitude bin of a Hann-windowed FFT."""
    x = wave_.samples[:n_fft]
    spectrum = np.abs(np.fft.rfft(x * np.hanning(x.size), n=n_fft))
    return float(np.argmax(spectrum) * wave_.sample_rate_hz / n_fft)
