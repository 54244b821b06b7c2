"""Classification head: multi-scale concatenation of block outputs,
attentive statistics pooling, FC embedding, linear two-class classifier,
with loss and scalar detection score helpers.

Class order is [spoof, bonafide]; the detection score is the bonafide logit
minus the spoof logit, so higher means more genuine.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .encoder import ConformerEncoder, EncoderConfig
from .errors import ConfigError

LABEL_INDEX = {"spoof": 0, "bonafide": 1}
ASP_VAR_FLOOR = 1e-7


@dataclass(frozen=True)
class HeadConfig:
    n_blocks: int
    d_model: int
    asp_hidden: int = 128
    emb_dim: int = 192
    dropout_fc: float = 0.1
    n_classes: int = 2

    def __post_init__(self):
        if min(self.n_blocks, self.d_model, self.asp_hidden, self.emb_dim, self.n_classes) < 1:
            raise ConfigError("head dimensions must be positive")
        if not 0.0 <= self.dropout_fc < 1.0:
            raise ConfigError(f"dropout_fc must be in [0, 1), got {self.dropout_fc}")

    @property
    def concat_dim(self) -> int:
        return self.n_blocks * self.d_model


def mfa_concat(acts: list[torch.Tensor]) -> torch.Tensor:
    """Frame-wise concatenation of per-block outputs, in block order."""
    if not acts:
        raise ValueError("need at least one block output")
    shape = acts[0].shape
    for i, a in enumerate(acts):
        if a.shape != shape:
            raise ValueError(f"block {i} output shape {tuple(a.shape)} != {tuple(shape)}")
    return torch.cat(acts, dim=-1)


class AttentiveStatsPool(nn.Module):
    """Per-frame scalar attention e_t = v.tanh(W h_t + b); pooled output is
    the attention-weighted mean and standard deviation, width 2D."""

    def __init__(self, in_dim: int, hidden: int):
        super().__init__()
        self.attn_fc = nn.Linear(in_dim, hidden)
        self.attn_vec = nn.Linear(hidden, 1, bias=False)

    def attention(self, h: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.attn_vec(torch.tanh(self.attn_fc(h))), dim=1)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        w = self.attention(h)
        mu = (w * h).sum(dim=1)
        var = (w * h * h).sum(dim=1) - mu * mu
        sigma = torch.sqrt(torch.clamp(var, min=ASP_VAR_FLOOR))
        return torch.cat([mu, sigma], dim=-1)


class MfaHead(nn.Module):
    def __init__(self, cfg: HeadConfig):
        super().__init__()
        self.cfg = cfg
        self.mfa_norm = nn.LayerNorm(cfg.concat_dim)
        self.asp = AttentiveStatsPool(cfg.concat_dim, cfg.asp_hidden)
        self.fc = nn.Linear(2 * cfg.concat_dim, cfg.emb_dim)
        self.dropout = nn.Dropout(cfg.dropout_fc)
        self.classifier = nn.Linear(cfg.emb_dim, cfg.n_classes)

    def aggregate(self, acts: list[torch.Tensor]) -> torch.Tensor:
        if len(acts) != self.cfg.n_blocks:
            raise ValueError(f"expected {self.cfg.n_blocks} block outputs, got {len(acts)}")
        return self.mfa_norm(mfa_concat(acts))

    def classify(self, pooled: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.dropout(F.relu(self.fc(pooled))))

    def forward(self, acts: list[torch.Tensor]) -> torch.Tensor:
        return self.classify(self.asp(self.aggregate(acts)))


class CmModel(nn.Module):
    """Full countermeasure model: Conformer encoder feeding the MFA head."""

    def __init__(
        self,
        encoder_cfg: EncoderConfig,
        asp_hidden: int = 128,
        emb_dim: int = 192,
        dropout_fc: float = 0.1,
    ):
        super().__init__()
        self.encoder = ConformerEncoder(encoder_cfg)
        self.head = MfaHead(
            HeadConfig(
                n_blocks=encoder_cfg.n_blocks,
                d_model=encoder_cfg.d_model,
                asp_hidden=asp_hidden,
                emb_dim=emb_dim,
                dropout_fc=dropout_fc,
            )
        )

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return self.head(self.encoder(feats))


def ce_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross entropy; labels are class indices per LABEL_INDEX."""
    return F.cross_entropy(logits, labels)


def score_trial(logits: torch.Tensor) -> torch.Tensor:
    """Scalar detection score: bonafide logit minus spoof logit."""
    return logits[..., LABEL_INDEX["bonafide"]] - logits[..., LABEL_INDEX["spoof"]]
