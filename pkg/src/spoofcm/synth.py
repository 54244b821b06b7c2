"""Deterministic synthetic spoofing corpus for desk-scale experiments.

Bona fide trials are harmonic sources (randomized f0 with vibrato, parallel
formant resonators, a dash of pink noise). Each spoof generator applies one
deterministic vocoder-style artifact to such a source, so "attack" tags map
to reproducible, physically distinct signal defects. Tags S01/S02 default to
the seen split and S03/S04 to the unseen split; S05/S06 are spares.

Generation is bit-deterministic given the spec seed: every utterance draws
from its own ``SeedSequence([seed, subset, class, index])`` stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import lfilter, resample_poly, stft, istft

from .audio import Waveform, write_wav
from .errors import ConfigError
from .manifest import UtteranceRecord, save_manifest

SUBSET_CODES = {"train": 0, "dev": 1, "eval": 2}


@dataclass(frozen=True)
class SynthCorpusSpec:
    sample_rate: int = 16000
    n_train: int = 400  # per class
    n_dev: int = 80
    n_eval: int = 120
    duration_range: tuple[float, float] = (1.5, 2.5)
    seen_generators: tuple[str, ...] = ("S01", "S02")
    unseen_generators: tuple[str, ...] = ("S03", "S04")
    seed: int = 0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if min(self.n_train, self.n_dev, self.n_eval) < 1:
            raise ConfigError("per-class counts must be >= 1")
        if not self.seen_generators or not self.unseen_generators:
            raise ConfigError("need at least one seen and one unseen spoof generator")
        overlap = set(self.seen_generators) & set(self.unseen_generators)
        if overlap:
            raise ConfigError(f"generators assigned to both splits: {sorted(overlap)}")
        unknown = (set(self.seen_generators) | set(self.unseen_generators)) - set(ARTIFACTS)
        if unknown:
            raise ConfigError(f"unknown spoof generators: {sorted(unknown)}")


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.arange(len(spec), dtype=np.float64)
    freqs[0] = 1.0
    pink = np.fft.irfft(spec / np.sqrt(freqs), n=n)
    return pink / (np.std(pink) + 1e-12)


def _formant_filter(x: np.ndarray, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.array([500.0, 1500.0, 2500.0]) + rng.uniform(-1, 1, 3) * np.array([150.0, 300.0, 500.0])
    bandwidths = np.array([90.0, 140.0, 220.0])
    gains = np.array([1.0, 0.6, 0.35])
    out = np.zeros_like(x)
    for f0, bw, g in zip(centers, bandwidths, gains):
        r = np.exp(-np.pi * bw / sample_rate)
        a = [1.0, -2.0 * r * np.cos(2.0 * np.pi * f0 / sample_rate), r * r]
        out += g * lfilter([1.0 - r], a, x)
    return out


def synth_bonafide(
    rng: np.random.Generator,
    sample_rate: int = 16000,
    duration_range: tuple[float, float] = (1.5, 2.5),
) -> np.ndarray:
    """One harmonic 'genuine' utterance: vibrato f0, formant coloring, pink noise."""
    duration = rng.uniform(*duration_range)
    n = round(duration * sample_rate)
    t = np.arange(n) / sample_rate

    f0 = rng.uniform(100.0, 300.0)
    vib_rate = rng.uniform(4.0, 7.0)
    vib_depth = rng.uniform(0.005, 0.02)
    inst_f = f0 * (1.0 + vib_depth * np.sin(2.0 * np.pi * vib_rate * t))
    phase = 2.0 * np.pi * np.cumsum(inst_f) / sample_rate

    n_harm = min(30, int(0.45 * sample_rate / (f0 * (1.0 + vib_depth))))
    k = np.arange(1, n_harm + 1)
    amps = rng.uniform(0.5, 1.0, n_harm) / k
    phases0 = rng.uniform(0.0, 2.0 * np.pi, n_harm)
    source = np.sin(np.outer(phase, k) + phases0) @ amps

    voiced = _formant_filter(source, sample_rate, rng)
    voiced /= np.max(np.abs(voiced)) + 1e-12

    # syllable-ish amplitude modulation plus edge fades
    am = 0.75 + 0.25 * np.sin(2.0 * np.pi * rng.uniform(2.0, 4.0) * t + rng.uniform(0, 2 * np.pi))
    fade = min(int(0.01 * sample_rate), n // 4)
    env = np.ones(n)
    env[:fade] = np.linspace(0.0, 1.0, fade)
    env[-fade:] = np.linspace(1.0, 0.0, fade)

    x = voiced * am * env
    x += rng.uniform(0.02, 0.05) * np.std(x) * _pink_noise(rng, n)
    return x / (np.max(np.abs(x)) + 1e-12) * rng.uniform(0.5, 0.85)


def _match_length(y: np.ndarray, n: int) -> np.ndarray:
    if len(y) >= n:
        return y[:n]
    return np.pad(y, (0, n - len(y)))


def _artifact_zero_phase(x: np.ndarray, sample_rate: int) -> np.ndarray:
    _, _, spec = stft(x, nperseg=512, noverlap=256)
    _, y = istft(np.abs(spec), nperseg=512, noverlap=256)
    return _match_length(y, len(x))


def _artifact_quantize(x: np.ndarray, sample_rate: int) -> np.ndarray:
    step = 1.0 / 6.0  # 12 amplitude levels over [-1, 1]
    return np.round(x / step) * step


def _artifact_envelope_smooth(x: np.ndarray, sample_rate: int) -> np.ndarray:
    _, _, spec = stft(x, nperseg=512, noverlap=256)
    mag = uniform_filter1d(np.abs(spec), size=15, axis=0, mode="nearest")
    _, y = istft(mag * np.exp(1j * np.angle(spec)), nperseg=512, noverlap=256)
    return _match_length(y, len(x))


def _artifact_frame_hold(x: np.ndarray, sample_rate: int) -> np.ndarray:
    _, _, spec = stft(x, nperseg=512, noverlap=256)
    cols = np.arange(spec.shape[1])
    held = spec[:, cols - (cols % 2)]
    _, y = istft(held, nperseg=512, noverlap=256)
    return _match_length(y, len(x))


def _artifact_clip(x: np.ndarray, sample_rate: int) -> np.ndarray:
    peak = np.max(np.abs(x)) + 1e-12
    c = 0.3 * peak
    return np.clip(x, -c, c) * (peak / c)


def _artifact_bandlimit(x: np.ndarray, sample_rate: int) -> np.ndarray:
    y = resample_poly(resample_poly(x, 1, 2), 2, 1)
    return _match_length(y, len(x))


ARTIFACTS = {
    "S01": _artifact_zero_phase,       # STFT resynthesis with phase zeroed
    "S02": _artifact_quantize,         # coarse amplitude quantization
    "S03": _artifact_envelope_smooth,  # spectral-envelope smoothing
    "S04": _artifact_frame_hold,       # fixed-frame OLA with held frames
    "S05": _artifact_clip,             # hard saturation
    "S06": _artifact_bandlimit,        # half-band resample round trip
}


def apply_artifact(tag: str, x: np.ndarray, sample_rate: int) -> np.ndarray:
    if tag not in ARTIFACTS:
        raise ConfigError(f"unknown spoof generator {tag!r}")
    y = ARTIFACTS[tag](np.asarray(x, dtype=np.float64), sample_rate)
    peak = np.max(np.abs(y))
    if peak > 1.0:
        y = y / peak
    return y


def _utt_rng(spec: SynthCorpusSpec, subset: str, class_idx: int, i: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([spec.seed, SUBSET_CODES[subset], class_idx, i])
    )


def generate_synthetic_corpus(spec: SynthCorpusSpec, out_dir) -> list[UtteranceRecord]:
    """Write WAV files plus a canonical manifest; returns the records.

    Train/dev spoofs cycle over the seen generators only; the eval subset
    cycles over seen followed by unseen generators, so unseen tags never
    leak into training material.
    """
    out_dir = Path(out_dir)
    records = []
    counts = {"train": spec.n_train, "dev": spec.n_dev, "eval": spec.n_eval}
    for subset, n_per_class in counts.items():
        audio_dir = out_dir / "audio" / subset
        audio_dir.mkdir(parents=True, exist_ok=True)
        if subset == "eval":
            tags = list(spec.seen_generators) + list(spec.unseen_generators)
        else:
            tags = list(spec.seen_generators)

        for i in range(n_per_class):
            utt_id = f"{subset}_b{i:05d}"
            rng = _utt_rng(spec, subset, 0, i)
            x = synth_bonafide(rng, spec.sample_rate, spec.duration_range)
            rel = f"audio/{subset}/{utt_id}.wav"
            write_wav(out_dir / rel, Waveform(x, spec.sample_rate))
            records.append(UtteranceRecord(utt_id, rel, "bonafide", "-", subset))

        for i in range(n_per_class):
            tag = tags[i % len(tags)]
            utt_id = f"{subset}_s{i:05d}"
            rng = _utt_rng(spec, subset, 1, i)
            source = synth_bonafide(rng, spec.sample_rate, spec.duration_range)
            x = apply_artifact(tag, source, spec.sample_rate)
            rel = f"audio/{subset}/{utt_id}.wav"
            write_wav(out_dir / rel, Waveform(x, spec.sample_rate))
            records.append(UtteranceRecord(utt_id, rel, "spoof", tag, subset))

    save_manifest(out_dir / "manifest.tsv", records)
    return records


def generate_augmentation_pools(
    out_dir,
    seed: int = 0,
    n_per_category: int = 6,
    duration_s: float = 3.0,
    sample_rate: int = 16000,
) -> dict[str, str]:
    """Small synthetic MUSAN/RIR stand-ins: noise WAV pools per category plus
    a pool of sparse-reflection impulse responses. Returns the directory map
    expected by AugmentConfig."""
    out_dir = Path(out_dir)
    n = round(duration_s * sample_rate)
    t = np.arange(n) / sample_rate
    dirs = {}

    def _save(category: str, idx: int, x: np.ndarray):
        d = out_dir / "noise" / category
        d.mkdir(parents=True, exist_ok=True)
        x = x / (np.max(np.abs(x)) + 1e-12) * 0.8
        write_wav(d / f"{category}{idx:03d}.wav", Waveform(x, sample_rate))
        dirs[category] = str(d)

    for i in range(n_per_category):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 100, i]))
        am = 1.0 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.2, 1.0) * t)
        _save("environment", i, _pink_noise(rng, n) * am)

        rng = np.random.default_rng(np.random.SeedSequence([seed, 101, i]))
        chord = np.zeros(n)
        for root in rng.uniform(110.0, 440.0, 3):
            for mult in (1.0, 1.25, 1.5):
                chord += np.sin(2 * np.pi * root * mult * t + rng.uniform(0, 2 * np.pi))
        _save("music", i, chord)

        rng = np.random.default_rng(np.random.SeedSequence([seed, 102, i]))
        babble = np.zeros(n)
        for _ in range(6):
            v = synth_bonafide(rng, sample_rate, (duration_s, duration_s))
            babble += v[:n]
        _save("babble", i, babble)

    rir_dir = out_dir / "rirs"
    rir_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n_per_category):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 103, i]))
        t60 = rng.uniform(0.15, 0.5)
        n_rir = round(t60 * sample_rate)
        h = np.zeros(n_rir)
        h[0] = 1.0
        for _ in range(rng.integers(3, 8)):
            d = rng.integers(int(0.005 * sample_rate), int(0.04 * sample_rate))
            h[d] += rng.uniform(0.2, 0.6) * rng.choice([-1.0, 1.0])
        tail = rng.standard_normal(n_rir) * np.exp(-6.9 * np.arange(n_rir) / n_rir)
        h += 0.3 * tail
        write_wav(rir_dir / f"rir{i:03d}.wav", Waveform(h / np.max(np.abs(h)), sample_rate))

    return {"noise_dirs": dirs, "rir_dir": str(rir_dir)}
