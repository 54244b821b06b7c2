"""Shared fixtures and independent oracle helpers."""

from __future__ import annotations

from math import inf

import numpy as np
import pytest
import torch

from spoofcm.encoder import EncoderConfig
from spoofcm.synth import SynthCorpusSpec, generate_augmentation_pools, generate_synthetic_corpus

TOY_ENCODER = dict(
    input_dim=80, d_model=32, n_heads=2, n_blocks=2, ffn_dim=128, conv_kernel=15, dropout=0.1
)
TINY_ENCODER = dict(
    input_dim=8, d_model=8, n_heads=2, n_blocks=1, ffn_dim=16, conv_kernel=3, dropout=0.0
)


def toy_encoder_config(**overrides) -> EncoderConfig:
    return EncoderConfig(**{**TOY_ENCODER, **overrides})


def tiny_encoder_config(**overrides) -> EncoderConfig:
    return EncoderConfig(**{**TINY_ENCODER, **overrides})


def fd_gradient_check(fn, x: torch.Tensor, h: float = 1e-4, probe_seed: int = 7) -> float:
    """Max relative deviation between autograd and central finite differences
    of a random-cotangent functional of fn, at double precision.

    The random weighting keeps the functional sensitive even where a plain
    sum would collapse (for example through a default-initialized layernorm).
    """
    gen = torch.Generator().manual_seed(probe_seed)
    probe = {}

    def functional(t):
        out = fn(t)
        if "w" not in probe:
            probe["w"] = torch.randn(out.shape, generator=gen, dtype=out.dtype)
        return (out * probe["w"]).sum()

    xg = x.clone().requires_grad_(True)
    functional(xg).backward()
    analytic = xg.grad.clone()

    fd = torch.zeros_like(x)
    work = x.clone()
    flat = work.reshape(-1)
    fd_flat = fd.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        up = functional(work).item()
        flat[i] = orig - h
        down = functional(work).item()
        flat[i] = orig
        fd_flat[i] = (up - down) / (2.0 * h)
    denom = max(analytic.abs().max().item(), 1e-12)
    return float((fd - analytic).abs().max().item() / denom)


def oracle_eer(bona, spoof) -> float:
    """Exhaustive-threshold brute-force EER: plain Python counting at every
    candidate threshold, then linear interpolation at the crossing."""
    bona = [float(v) for v in bona]
    spoof = [float(v) for v in spoof]
    uniq = sorted(set(bona) | set(spoof))
    thresholds = [-inf] + [(a + b) / 2.0 for a, b in zip(uniq[:-1], uniq[1:])] + [inf]
    ops = []
    for t in thresholds:
        far = sum(1 for s in spoof if s >= t) / len(spoof)
        frr = sum(1 for s in bona if s < t) / len(bona)
        ops.append((far, frr))
    for k in range(len(ops) - 1):
        f0, r0 = ops[k]
        f1, r1 = ops[k + 1]
        d0, d1 = f0 - r0, f1 - r1
        if d0 >= 0.0 and d1 <= 0.0:
            if d0 == d1:
                return f0
            alpha = d0 / (d0 - d1)
            return f0 + alpha * (f1 - f0)
    raise AssertionError("no FAR/FRR crossing found")


def direct_convolution(x, h):
    """O(N*M) textbook convolution for small oracle cases."""
    x = list(map(float, x))
    h = list(map(float, h))
    out = [0.0] * (len(x) + len(h) - 1)
    for i, xi in enumerate(x):
        for j, hj in enumerate(h):
            out[i + j] += xi * hj
    return np.array(out)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Session-wide miniature corpus: 24/8/12 trials per class, 1.0-1.6 s."""
    root = tmp_path_factory.mktemp("corpus")
    spec = SynthCorpusSpec(
        n_train=24, n_dev=8, n_eval=12, duration_range=(1.0, 1.6), seed=7
    )
    records = generate_synthetic_corpus(spec, root)
    return root, spec, records


@pytest.fixture(scope="session")
def aug_pools(tmp_path_factory):
    root = tmp_path_factory.mktemp("aug")
    layout = generate_augmentation_pools(root, seed=3, n_per_category=2, duration_s=1.5)
    return layout
