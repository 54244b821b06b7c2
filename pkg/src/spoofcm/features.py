"""Log mel-filterbank (FBANK) front-end.

Framing convention: no center padding, no pre-emphasis, no dither. A signal
of N samples yields ``1 + (N - fft_size) // hop`` frames; each frame is
Blackman-windowed, power-spectrum'd via real FFT, projected on 80 triangular
mel filters spanning 0 Hz to Nyquist, and floored before the natural log.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform
from .errors import AudioError, ConfigError

CACHE_MAGIC = b"FBNK"
CACHE_VERSION = 1


@dataclass(frozen=True)
class FbankConfig:
    fft_size: int = 1024
    hop: int = 128
    n_mels: int = 80
    log_floor: float = 1e-10
    mean_norm: bool = True  # applied by utterance_features, not by fbank itself

    def __post_init__(self):
        if self.hop <= 0 or self.fft_size <= 0:
            raise ConfigError("fft_size and hop must be positive")
        if self.hop > self.fft_size:
            raise ConfigError(f"hop {self.hop} exceeds fft_size {self.fft_size}")
        if self.n_mels < 1:
            raise ConfigError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")

    def n_frames(self, n_samples: int) -> int:
        return 1 + (n_samples - self.fft_size) // self.hop


def fix_duration(w: Waveform, target_seconds: float) -> Waveform:
    """Truncate or tile a waveform to exactly round(target_seconds * rate) samples.

    Longer inputs keep their first samples; shorter inputs are repeated whole
    and then truncated.
    """
    if len(w) == 0:
        raise AudioError("cannot fix duration of an empty waveform")
    if target_seconds <= 0:
        raise ConfigError(f"target_seconds must be positive, got {target_seconds}")
    n_target = round(target_seconds * w.sample_rate)
    if len(w) >= n_target:
        samples = w.samples[:n_target].copy()
    else:
        reps = -(-n_target // len(w))  # ceil
        samples = np.tile(w.samples, reps)[:n_target]
    return Waveform(samples, w.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters (n_mels x fft_size//2+1), HTK mel scale, 0..Nyquist."""
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)

    fb = np.zeros((n_mels, len(bin_freqs)))
    for m in range(n_mels):
        low, center, high = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        rising = (bin_freqs - low) / (center - low)
        falling = (high - bin_freqs) / (high - center)
        fb[m] = np.maximum(0.0, np.minimum(rising, falling))
    return fb


@dataclass
class FeatureMatrix:
    """Frames x n_mels log filterbank energies."""

    values: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise AudioError(f"feature matrix must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise AudioError("feature matrix contains non-finite entries")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_mels(self) -> int:
        return self.values.shape[1]


def fbank(w: Waveform, cfg: FbankConfig = FbankConfig()) -> FeatureMatrix:
    """Raw (un-normalized) log mel-filterbank energies."""
    n = len(w)
    if n < cfg.fft_size:
        raise AudioError(f"input of {n} samples is shorter than one window ({cfg.fft_size})")
    n_frames = cfg.n_frames(n)
    idx = np.arange(cfg.fft_size)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = w.samples[idx] * np.blackman(cfg.fft_size)[None, :]
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    fb = mel_filterbank(cfg.n_mels, cfg.fft_size, w.sample_rate)
    energies = power @ fb.T
    values = np.log(np.maximum(energies, cfg.log_floor))
    return FeatureMatrix(values, frame_rate=w.sample_rate / cfg.hop)


def mean_normalize(feat: FeatureMatrix) -> FeatureMatrix:
    """Subtract the per-utterance temporal mean of each mel bin."""
    return FeatureMatrix(feat.values - feat.values.mean(axis=0, keepdims=True), feat.frame_rate)


def utterance_features(w: Waveform, cfg: FbankConfig = FbankConfig()) -> FeatureMatrix:
    """FBANK plus the configured per-utterance normalization."""
    feat = fbank(w, cfg)
    if cfg.mean_norm:
        feat = mean_normalize(feat)
    return feat


def save_features(path, feat: FeatureMatrix) -> None:
    """Cache file: magic, version, frames, n_mels, frame rate, float32 LE payload."""
    path = Path(path)
    header = struct.pack(
        "<4sIIId", CACHE_MAGIC, CACHE_VERSION, feat.n_frames, feat.n_mels, feat.frame_rate
    )
    payload = feat.values.astype("<f4").tobytes()
    path.write_bytes(header + payload)


def load_features(path) -> FeatureMatrix:
    path = Path(path)
    blob = path.read_bytes()
    header_size = struct.calcsize("<4sIIId")
    if len(blob) < header_size:
        raise AudioError(f"{path}: truncated feature cache file")
    magic, version, n_frames, n_mels, frame_rate = struct.unpack("<4sIIId", blob[:header_size])
    if magic != CACHE_MAGIC:
        raise AudioError(f"{path}: not a feature cache file (bad magic {magic!r})")
    if version != CACHE_VERSION:
        raise AudioError(f"{path}: unsupported cache version {version}")
    values = np.frombuffer(blob[header_size:], dtype="<f4")
    if values.size != n_frames * n_mels:
        raise AudioError(f"{path}: payload size does not match header dims")
    return FeatureMatrix(values.reshape(n_frames, n_mels).astype(np.float64), frame_rate)
