import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from augkit.audio_dsp import Waveform, synth_tone
from augkit.errors import ConfigError, TooShortError
from augkit.features import (FeatureConfig, cmn, hz_to_mel, log_mel, mel_filterbank, num_frames, stft_power)

RAW = FeatureConfig(cmn=False)


def test_zero_power():
    assert not np.any(stft_power(Waveform(np.zeros(4000))))


def test_frame_count_one_second():
    assert stft_power(Waveform(np.zeros(16000))).shape == (98, 257)


def test_tone_bin():
    power = stft_power(synth_tone(1000, 0.5))
    assert np.all(np.argmax(power, axis=1) == round(1000 * 512 / 16000))


def test_mel_700():
    assert hz_to_mel(700) == pytest.approx(2595 * math.log10(2))
    assert hz_to_mel(700) == pytest.approx(781.17, abs=5e-3)


def test_filterbank_rows():
    fb = mel_filterbank()
    assert fb.shape == (64, 257)
    assert np.all((fb > 0).sum(axis=1) >= 1)
    first = [int(np.flatnonzero(r)[0]) for r in fb]
    last = [int(np.flatnonzero(r)[-1]) for r in fb]
    assert first == sorted(first) and last == sorted(last)
    # neighbouring supports overlap
    assert all(last[i] >= first[i + 1] for i in range(63))


def test_filterbank_copy_is_independent():
    fb = mel_filterbank()
    fb[:] = 0
    assert mel_filterbank().any()


def test_silence_after_cmn_is_exact_zero():
    feats = log_mel(Waveform(np.zeros(16000))).frames
    assert np.all(feats == 0.0)


def test_silence_before_cmn_is_floor():
    feats = log_mel(Waveform(np.zeros(16000)), RAW).frames
    assert np.all(feats == np.log(1e-10))


def test_random_shape_and_mean(rng):
    feats = log_mel(Waveform(rng.uniform(-0.5, 0.5, 16000))).frames
    assert feats.shape == (98, 64)
    assert np.all(np.isfinite(feats))
    assert np.max(np.abs(feats.mean(axis=0))) <= 1e-9


def test_too_short():
    with pytest.raises(TooShortError):
        stft_power(Waveform(np.zeros(399)))


@pytest.mark.parametrize("kw", [{"frame_shift_ms": 0}, {"frame_length_ms": 40}, {"mel_bins": 1},
                                {"fmax_hz": 9000}, {"log_floor": 0}])
def test_bad_config(kw):
    with pytest.raises(ConfigError):
        FeatureConfig(**kw)


def test_fingerprint_tracks_config():
    assert FeatureConfig().fingerprint() != FeatureConfig(mel_bins=40).fingerprint()
    assert log_mel(synth_tone(300, 0.1)).fingerprint == FeatureConfig().fingerprint()


@given(n=st.integers(400, 6000))
def test_shape_law(n):
    t = stft_power(Waveform(np.zeros(n))).shape[0]
    assert t == 1 + (n - 400) // 160 == num_frames(n, FeatureConfig())


@given(seed=st.integers(0, 2 ** 32 - 1))
def test_cmn_idempotent(seed):
    x = np.random.default_rng(seed).normal(0, 3, (20, 8))
    once = cmn(x)
    assert np.max(np.abs(cmn(once) - once)) <= 1e-12


@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(0.05, 1.0))
def test_scale_covariance(seed, c):
    x = np.random.default_rng(seed).uniform(-0.5, 0.5, 3200)
    base = log_mel(Waveform(x), RAW).frames
    scaled = log_mel(Waveform(c * x), RAW).frames
    floor = math.log(1e-10)
    above = (base > floor + 1) & (scaled > floor + 1)
    assert np.allclose((scaled - base)[above], 2 * math.log(c), atol=1e-9)
    post = log_mel(Waveform(x)).frames
    assert np.max(np.abs(log_mel(Waveform(c * x)).frames - post)) <= 1e-9
