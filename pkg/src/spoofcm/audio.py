"""Waveform container and 16-bit PCM WAV file I/O.

All audio in this package is mono float64 in [-1, 1]; files on disk are
16 kHz (or whatever the corpus spec says) 16-bit linear PCM WAV.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import AudioError


@dataclass
class Waveform:
    """Mono audio signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise AudioError(f"expected mono 1-D samples, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioError("waveform contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def float_to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Quantize float samples in [-1, 1] to int16 (round-to-nearest)."""
    clipped = np.clip(samples, -1.0, 1.0)
    return np.round(clipped * 32767.0).astype(np.int16)


def pcm16_to_float(data: np.ndarray) -> np.ndarray:
    return data.astype(np.float64) / 32767.0


def write_wav(path, w: Waveform) -> None:
    path = Path(path)
    try:
        wavfile.write(path, w.sample_rate, float_to_pcm16(w.samples))
    except OSError as exc:
        raise AudioError(f"cannot write {path}: {exc}") from exc


def read_wav(path) -> Waveform:
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise AudioError(f"cannot read {path}: {exc}") from exc
    if data.ndim != 1:
        raise AudioError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = pcm16_to_float(data)
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, int(rate))
