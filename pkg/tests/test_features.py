import math

import numpy as np
import pytest

from spoofcm.audio import Waveform
from spoofcm.errors import AudioError
from spoofcm.features import (
    FbankConfig,
    fbank,
    fix_duration,
    load_features,
    mean_normalize,
    mel_filterbank,
    save_features,
    utterance_features,
)

SR = 16000


def noise_wave(n, seed=0, scale=0.5):
    rng = np.random.default_rng(seed)
    return Waveform(rng.uniform(-scale, scale, n), SR)


class TestFixDuration:
    def test_truncates_keeping_start(self):
        w = noise_wave(10 * SR)
        out = fix_duration(w, 8.0)
        assert len(out) == 128000
        assert np.array_equal(out.samples, w.samples[:128000])

    def test_repeats_then_truncates(self):
        w = noise_wave(3 * SR)
        out = fix_duration(w, 8.0)
        assert len(out) == 128000
        assert np.array_equal(out.samples[: 3 * SR], w.samples)
        assert np.array_equal(out.samples[3 * SR : 6 * SR], w.samples)

    def test_exact_length_is_identity(self):
        w = noise_wave(8 * SR)
        out = fix_duration(w, 8.0)
        assert np.array_equal(out.samples, w.samples)

    def test_empty_waveform_rejected(self):
        with pytest.raises(AudioError):
            fix_duration(Waveform(np.array([]), SR), 1.0)


class TestFbank:
    def test_8s_frame_count(self):
        # 1 + (128000 - 1024) / 128 = 993
        feat = fbank(noise_wave(128000))
        assert feat.values.shape == (993, 80)

    def test_5s_frame_count(self):
        # 1 + (80000 - 1024) / 128 = 618
        feat = fbank(noise_wave(80000))
        assert feat.values.shape == (618, 80)

    def test_zero_input_hits_log_floor(self):
        cfg = FbankConfig()
        feat = fbank(Waveform(np.zeros(4096), SR), cfg)
        assert np.allclose(feat.values, math.log(cfg.log_floor))

    def test_too_short_input_rejected(self):
        with pytest.raises(AudioError, match="shorter than one window"):
            fbank(noise_wave(512))

    def test_amplitude_doubling_adds_log4(self):
        w = noise_wave(8000, seed=1)
        w2 = Waveform(2.0 * w.samples, SR)
        f1, f2 = fbank(w), fbank(w2)
        assert np.allclose(f2.values - f1.values, math.log(4.0), atol=1e-9)

    def test_hop_shift_moves_one_frame(self):
        cfg = FbankConfig()
        w = noise_wave(8000, seed=2)
        shifted = Waveform(w.samples[cfg.hop :], SR)
        f1 = fbank(w, cfg).values
        f2 = fbank(shifted, cfg).values
        common = min(len(f1) - 1, len(f2))
        assert np.allclose(f1[1 : 1 + common], f2[:common], rtol=1e-6, atol=1e-12)

    def test_deterministic(self):
        w = noise_wave(4096, seed=3)
        assert np.array_equal(fbank(w).values, fbank(w).values)

    def test_mean_normalize_zeroes_column_means(self):
        feat = fbank(noise_wave(8000, seed=4))
        normed = mean_normalize(feat)
        assert np.allclose(normed.values.mean(axis=0), 0.0, atol=1e-12)

    def test_utterance_features_applies_toggle(self):
        w = noise_wave(8000, seed=5)
        on = utterance_features(w, FbankConfig(mean_norm=True))
        off = utterance_features(w, FbankConfig(mean_norm=False))
        assert np.allclose(on.values.mean(axis=0), 0.0, atol=1e-12)
        assert not np.allclose(off.values.mean(axis=0), 0.0, atol=1e-3)


class TestMelFilterbank:
    def test_shape_and_nonnegativity(self):
        fb = mel_filterbank(80, 1024, SR)
        assert fb.shape == (80, 513)
        assert np.all(fb >= 0.0)

    def test_every_filter_has_support(self):
        fb = mel_filterbank(80, 1024, SR)
        assert np.all(fb.sum(axis=1) > 0.0)

    def test_filters_cover_zero_to_nyquist(self):
        fb = mel_filterbank(80, 1024, SR)
        support = fb.sum(axis=0)
        assert support[1] > 0.0  # first nonzero bin inside the lowest triangle
        assert support[-2] > 0.0


class TestFeatureCache:
    def test_round_trip(self, tmp_path):
        feat = fbank(noise_wave(4096, seed=6))
        path = tmp_path / "utt.fbank"
        save_features(path, feat)
        loaded = load_features(path)
        assert loaded.values.shape == feat.values.shape
        assert loaded.frame_rate == feat.frame_rate
        assert np.allclose(loaded.values, feat.values, atol=1e-6)  # float32 payload

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.fbank"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(AudioError, match="magic"):
            load_features(path)
