"""Conformer encoder with per-block output taps.

Block structure (pre-norm residual sandwich):

    x  <- x + 1/2 FFN(x)
    x  <- x + MHSA(x)          # multi-head self-attention, relative positions
    x  <- x + Conv(x)          # pointwise/GLU/depthwise/batchnorm/Swish stack
    y  <- Layernorm(x + 1/2 FFN(x))

The encoder front-end subsamples the feature sequence by 4 (two stride-2
convolutions) before the block stack. Every block's output is returned so a
multi-scale head can aggregate them.

State-dict naming is a stable contract used by checkpoint I/O:
``subsample.{conv1,conv2,proj}.*`` and
``block{00..NN}.{ffn1,mhsa,conv,ffn2,final_norm}.*``
(prefixed with ``encoder.`` inside the full model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int = 80
    d_model: int = 176
    n_heads: int = 4
    n_blocks: int = 16
    ffn_dim: int = 704
    conv_kernel: int = 31
    dropout: float = 0.1
    subsample_factor: int = 4

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.conv_kernel % 2 == 0:
            raise ConfigError(f"conv_kernel must be odd, got {self.conv_kernel}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.subsample_factor != 4:
            raise ConfigError("only the 1/4 subsampling front-end (two stride-2 stages) is implemented")
        if min(self.input_dim, self.d_model, self.n_blocks, self.ffn_dim) < 1:
            raise ConfigError("dimensions must be positive")


def subsampled_length(n_frames: int) -> int:
    """ceil(ceil(T/2)/2): output length of the two stride-2 convolutions."""
    return -(-(-(-n_frames // 2)) // 2)


class ConvSubsample(nn.Module):
    """Two stride-2 3x3 convolutions over (time, mel) followed by a linear
    projection of the flattened channel/mel axes to d_model."""

    def __init__(self, input_dim: int, d_model: int):
        super().__init__()
        self.conv1 = nn.Conv2d(1, d_model, kernel_size=3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(d_model, d_model, kernel_size=3, stride=2, padding=1)
        freq_out = subsampled_length(input_dim)
        self.proj = nn.Linear(d_model * freq_out, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (batch, frames, input_dim)
        if x.shape[1] < 4:
            raise ValueError(f"subsampling needs >= 4 input frames, got {x.shape[1]}")
        y = F.relu(self.conv1(x.unsqueeze(1)))
        y = F.relu(self.conv2(y))
        b, c, t, f = y.shape
        y = y.transpose(1, 2).reshape(b, t, c * f)
        return self.proj(y)


class FeedForward(nn.Module):
    """Pre-norm FFN: layernorm, expand, Swish, dropout, contract, dropout.
    The block applies the 1/2 scaling and the residual."""

    def __init__(self, d_model: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.norm = nn.LayerNorm(d_model)
        self.linear1 = nn.Linear(d_model, ffn_dim)
        self.linear2 = nn.Linear(ffn_dim, d_model)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.dropout(F.silu(self.linear1(self.norm(x))))
        return self.dropout(self.linear2(y))


class RelPosAttention(nn.Module):
    """Multi-head self-attention with Transformer-XL relative positions.

    Attention logits decompose into a content term (q + u)k' and a position
    term (q + v)p', where u and v are learned global bias vectors and p is a
    sinusoidal encoding of the relative distance, recomputed per sequence
    length (no maximum distance).
    """

    def __init__(self, d_model: int, n_heads: int, dropout: float):
        super().__init__()
        if d_model % n_heads != 0:
            raise ConfigError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.norm = nn.LayerNorm(d_model)
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.pos_proj = nn.Linear(d_model, d_model, bias=False)
        self.out_proj = nn.Linear(d_model, d_model)
        self.pos_bias_u = nn.Parameter(torch.empty(n_heads, self.head_dim))
        self.pos_bias_v = nn.Parameter(torch.empty(n_heads, self.head_dim))
        nn.init.xavier_uniform_(self.pos_bias_u)
        nn.init.xavier_uniform_(self.pos_bias_v)
        self.dropout = nn.Dropout(dropout)

    def _pos_table(self, n: int, dtype, device) -> torch.Tensor:
        """Sinusoidal encodings for relative positions -(n-1)..(n-1); row m
        holds position m - (n - 1)."""
        d_model = self.n_heads * self.head_dim
        rel = torch.arange(-(n - 1), n, dtype=dtype, device=device)
        inv = torch.exp(
            torch.arange(0, d_model, 2, dtype=dtype, device=device) * (-math.log(10000.0) / d_model)
        )
        ang = rel[:, None] * inv[None, :]
        table = torch.zeros(2 * n - 1, d_model, dtype=dtype, device=device)
        table[:, 0::2] = torch.sin(ang)
        table[:, 1::2] = torch.cos(ang)
        return table

    def _logits_and_values(self, xn: torch.Tensor):
        b, t, d = xn.shape
        h, dh = self.n_heads, self.head_dim
        q = self.q_proj(xn).view(b, t, h, dh).transpose(1, 2)
        k = self.k_proj(xn).view(b, t, h, dh).transpose(1, 2)
        v = self.v_proj(xn).view(b, t, h, dh).transpose(1, 2)

        pos = self.pos_proj(self._pos_table(t, xn.dtype, xn.device))
        pos = pos.view(2 * t - 1, h, dh).permute(1, 2, 0)  # (h, dh, 2t-1)

        content = torch.matmul(q + self.pos_bias_u[:, None, :], k.transpose(-2, -1))
        position_full = torch.matmul(q + self.pos_bias_v[:, None, :], pos.unsqueeze(0))
        # gather relative distance i - j out of the (2t-1)-wide position axis
        ar = torch.arange(t, device=xn.device)
        idx = (ar[:, None] - ar[None, :]) + (t - 1)
        position = torch.take_along_dim(
            position_full, idx.view(1, 1, t, t).expand(b, h, t, t), dim=3
        )
        return (content + position) / math.sqrt(dh), v

    def attention_logits(self, x: torch.Tensor) -> torch.Tensor:
        return self._logits_and_values(self.norm(x))[0]

    def attention_weights(self, x: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.attention_logits(x), dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        logits, v = self._logits_and_values(self.norm(x))
        weights = torch.softmax(logits, dim=-1)
        out = torch.matmul(weights, v).transpose(1, 2).reshape(b, t, d)
        return self.dropout(self.out_proj(out))


class ConvolutionModule(nn.Module):
    """Pointwise conv to 2d, GLU gate, depthwise conv, batchnorm, Swish,
    pointwise conv back to d. Batch statistics in training mode, running
    statistics in inference mode."""

    def __init__(self, d_model: int, kernel: int, dropout: float):
        super().__init__()
        if kernel % 2 == 0:
            raise ConfigError(f"depthwise kernel must be odd, got {kernel}")
        self.norm = nn.LayerNorm(d_model)
        self.pointwise1 = nn.Conv1d(d_model, 2 * d_model, kernel_size=1)
        self.depthwise = nn.Conv1d(
            d_model, d_model, kernel_size=kernel, padding=(kernel - 1) // 2, groups=d_model
        )
        self.batch_norm = nn.BatchNorm1d(d_model)
        self.pointwise2 = nn.Conv1d(d_model, d_model, kernel_size=1)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.norm(x).transpose(1, 2)
        y = F.glu(self.pointwise1(y), dim=1)
        y = F.silu(self.batch_norm(self.depthwise(y)))
        y = self.pointwise2(y)
        return self.dropout(y.transpose(1, 2))


class ConformerBlock(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.ffn1 = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout)
        self.mhsa = RelPosAttention(cfg.d_model, cfg.n_heads, cfg.dropout)
        self.conv = ConvolutionModule(cfg.d_model, cfg.conv_kernel, cfg.dropout)
        self.ffn2 = FeedForward(cfg.d_model, cfg.ffn_dim, cfg.dropout)
        self.final_norm = nn.LayerNorm(cfg.d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + 0.5 * self.ffn1(x)
        x = x + self.mhsa(x)
        x = x + self.conv(x)
        return self.final_norm(x + 0.5 * self.ffn2(x))


class ConformerEncoder(nn.Module):
    """Subsampling front-end plus a block stack; forward returns every
    block's output (oldest first) for multi-scale aggregation."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.subsample = ConvSubsample(cfg.input_dim, cfg.d_model)
        self.block_names = [f"block{i:02d}" for i in range(cfg.n_blocks)]
        for name in self.block_names:
            self.add_module(name, ConformerBlock(cfg))

    def blocks(self):
        return [getattr(self, name) for name in self.block_names]

    def forward(self, feats: torch.Tensor) -> list[torch.Tensor]:
        x = self.subsample(feats)
        outputs = []
        for block in self.blocks():
            x = block(x)
            outputs.append(x)
        return outputs


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
