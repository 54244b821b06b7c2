"""On-the-fly waveform augmentation: additive noise at a requested SNR,
room-impulse-response convolution, and speed perturbation.

Randomness is owned by the caller: every stochastic entry point takes a
``numpy.random.Generator``, so data loading stays reproducible and can be
parallelized with per-item derived seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, resample_poly

from .audio import Waveform, read_wav
from .errors import AudioError, ConfigError

NOISE_CATEGORIES = ("environment", "music", "babble")


@dataclass(frozen=True)
class AugmentConfig:
    noise_dirs: dict[str, str] = field(default_factory=dict)  # category -> directory
    rir_dir: str | None = None
    snr_range_db: tuple[float, float] = (0.0, 20.0)
    minibatch_fraction: float = 2.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.snr_range_db
        if lo > hi:
            raise ConfigError(f"snr_range_db low {lo} exceeds high {hi}")
        if not 0.0 <= self.minibatch_fraction <= 1.0:
            raise ConfigError(f"minibatch_fraction must be in [0, 1], got {self.minibatch_fraction}")
        unknown = set(self.noise_dirs) - set(NOISE_CATEGORIES)
        if unknown:
            raise ConfigError(f"unknown noise categories: {sorted(unknown)}")


def _tile_to_length(x: np.ndarray, n: int) -> np.ndarray:
    if len(x) >= n:
        return x[:n]
    reps = -(-n // len(x))
    return np.tile(x, reps)[:n]


def mix_noise(clean: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Add noise scaled so the clean/noise power ratio equals snr_db.

    The noise is tiled or cropped to the clean length first. If the mixture
    would clip, the whole mixture is rescaled (which preserves the SNR).
    """
    if noise.sample_rate != clean.sample_rate:
        raise AudioError(
            f"sample rate mismatch: clean {clean.sample_rate}, noise {noise.sample_rate}"
        )
    n = _tile_to_length(noise.samples, len(clean))
    p_clean = np.mean(clean.samples**2)
    p_noise = np.mean(n**2)
    if p_noise == 0.0:
        raise AudioError("noise signal is silent")
    gain = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixed = clean.samples + gain * n
    peak = np.max(np.abs(mixed))
    if peak > 1.0:
        mixed = mixed / peak
    return Waveform(mixed, clean.sample_rate)


def convolve_rir(clean: Waveform, rir: Waveform) -> Waveform:
    """Full convolution with a room impulse response, truncated to the clean
    length and rescaled to the clean signal's RMS."""
    if rir.sample_rate != clean.sample_rate:
        raise AudioError(
            f"sample rate mismatch: clean {clean.sample_rate}, rir {rir.sample_rate}"
        )
    if len(rir) == 0 or not np.any(rir.samples):
        raise AudioError("RIR is empty or all-zero")
    out = fftconvolve(clean.samples, rir.samples, mode="full")[: len(clean)]
    rms_clean = np.sqrt(np.mean(clean.samples**2))
    rms_out = np.sqrt(np.mean(out**2))
    if rms_out > 0.0:
        out = out * (rms_clean / rms_out)
    return Waveform(out, clean.sample_rate)


def speed_perturb(w: Waveform, factor: float) -> Waveform:
    """Resampling-based tempo/pitch change; output has round(N / factor) samples."""
    if factor <= 0:
        raise ConfigError(f"speed factor must be positive, got {factor}")
    n_target = round(len(w) / factor)
    if factor == 1.0:
        return Waveform(w.samples.copy(), w.sample_rate)
    frac = Fraction(factor).limit_denominator(100)
    up, down = frac.denominator, frac.numerator
    out = resample_poly(w.samples, up, down)
    if len(out) >= n_target:
        out = out[:n_target]
    else:
        out = np.pad(out, (0, n_target - len(out)))
    return Waveform(out, w.sample_rate)


def _scan_wavs(directory) -> list[Path]:
    return sorted(Path(directory).glob("*.wav"))


class Augmenter:
    """Directory-backed noise/RIR pools plus the per-minibatch policy:
    a fixed fraction of each batch gets one method, drawn uniformly from
    {additive noise, reverberation}."""

    def __init__(self, cfg: AugmentConfig):
        self.cfg = cfg
        self.noise_pools = {
            cat: _scan_wavs(d) for cat, d in sorted(cfg.noise_dirs.items())
        }
        for cat, pool in self.noise_pools.items():
            if not pool:
                raise ConfigError(f"noise directory for {cat!r} contains no WAV files")
        self.rir_pool = _scan_wavs(cfg.rir_dir) if cfg.rir_dir else []
        if cfg.rir_dir and not self.rir_pool:
            raise ConfigError(f"RIR directory {cfg.rir_dir!r} contains no WAV files")
        self.methods = []
        if self.noise_pools:
            self.methods.append("noise")
        if self.rir_pool:
            self.methods.append("reverb")
        if not self.methods:
            raise ConfigError("augmentation enabled but no noise or RIR pool configured")

    def augment_one(self, w: Waveform, rng: np.random.Generator) -> Waveform:
        method = self.methods[rng.integers(len(self.methods))]
        if method == "noise":
            categories = sorted(self.noise_pools)
            cat = categories[rng.integers(len(categories))]
            pool = self.noise_pools[cat]
            noise = read_wav(pool[rng.integers(len(pool))])
            snr = rng.uniform(*self.cfg.snr_range_db)
            return mix_noise(w, noise, snr)
        rir = read_wav(self.rir_pool[rng.integers(len(self.rir_pool))])
        return convolve_rir(w, rir)

    def augment_batch(self, batch: list[Waveform], rng: np.random.Generator) -> list[Waveform]:
        """Augment exactly round(fraction * B) items; the rest pass through untouched."""
        n = len(batch)
        n_aug = round(self.cfg.minibatch_fraction * n)
        chosen = set(rng.choice(n, size=n_aug, replace=False).tolist()) if n_aug else set()
        return [
            self.augment_one(w, rng) if i in chosen else w
            for i, w in enumerate(batch)
        ]


def augment_batch(
    batch: list[Waveform], augmenter: Augmenter, rng: np.random.Generator
) -> list[Waveform]:
    return augmenter.augment_batch(batch, rng)
