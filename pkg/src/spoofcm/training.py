"""Fine-tuning harness: freeze-then-joint schedule, AdamW with linear
warmup and cosine annealing, per-epoch dev loss/EER tracking, epoch
selection by dev loss, and a toy pretext pretraining routine that exports
an importable encoder checkpoint.

The frozen phase disables gradients for every encoder *parameter*; batchnorm
running statistics are buffers and keep updating. The learning-rate schedule
is evaluated at the 1-based step count, so the very first optimizer step
already moves parameters.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace, asdict
from pathlib import Path

import numpy as np
import torch

from .audio import Waveform, read_wav
from .augment import Augmenter, speed_perturb
from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    model_arrays,
    load_model_arrays,
    optimizer_arrays,
    restore_optimizer_state,
    save_checkpoint,
)
from .encoder import ConformerEncoder
from .errors import ConfigError, MetricError, TrainingError
from .features import FbankConfig, fix_duration, utterance_features
from .head import LABEL_INDEX, CmModel, ce_loss, score_trial
from .manifest import UtteranceRecord
from .metrics import ScoreEntry, compute_eer
from .synth import synth_bonafide

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    preset: str = "fad-like"
    duration_s: float = 8.0
    batch_size: int = 256
    lr: float = 1e-3
    warmup_steps: int = 4000
    epochs: int = 100
    frozen_epochs: int = 2
    dropout_fc: float = 0.1
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    lr_min: float = 1e-7
    augment: bool = True
    seed: int = 0
    total_steps: int | None = None

    def __post_init__(self):
        if self.preset not in ("fad-like", "asvspoof-like"):
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.frozen_epochs < 0 or self.frozen_epochs >= self.epochs:
            raise ConfigError("need 0 <= frozen_epochs < epochs")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")


def fad_like(**overrides) -> TrainConfig:
    """FAD-style recipe: 8 s crops, batch 256, lr 1e-3, augmentation on."""
    base = dict(preset="fad-like", duration_s=8.0, batch_size=256, lr=1e-3,
                dropout_fc=0.1, augment=True)
    base.update(overrides)
    return TrainConfig(**base)


def asvspoof_like(**overrides) -> TrainConfig:
    """ASVspoof-style recipe: 5 s crops, batch 64, lr 1e-4, FC dropout up
    50% (0.15), no augmentation."""
    base = dict(preset="asvspoof-like", duration_s=5.0, batch_size=64, lr=1e-4,
                dropout_fc=0.15, augment=False)
    base.update(overrides)
    return TrainConfig(**base)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to cfg.lr over warmup_steps, then cosine annealing to
    lr_min at cfg.total_steps."""
    if step < 0:
        raise ConfigError(f"step must be >= 0, got {step}")
    if step < cfg.warmup_steps:
        return cfg.lr * step / cfg.warmup_steps
    if cfg.total_steps is None:
        raise ConfigError("total_steps must be set before the post-warmup schedule is queried")
    span = max(cfg.total_steps - cfg.warmup_steps, 1)
    progress = min(max((step - cfg.warmup_steps) / span, 0.0), 1.0)
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + math.cos(math.pi * progress))


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    dev_eer: float
    ckpt_path: str


def append_epoch_log(path, rec: EpochRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(f"{rec.epoch}\t{rec.train_loss!r}\t{rec.dev_loss!r}\t{rec.dev_eer!r}\t{rec.ckpt_path}\n")


def load_epoch_log(path) -> list[EpochRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            e, tl, dl, de, cp = line.split("\t")
            records.append(EpochRecord(int(e), float(tl), float(dl), float(de), cp))
    return records


def select_top3(records: list[EpochRecord]) -> list[EpochRecord]:
    """Three lowest dev-loss epochs, ties broken by earlier epoch index.
    With fewer than three records, all are returned with a warning."""
    if len(records) < 3:
        warnings.warn(f"only {len(records)} epoch records available; returning all")
    return sorted(records, key=lambda r: (r.dev_loss, r.epoch))[: min(3, len(records))]


def _features_tensor(waveforms: list[Waveform], fbank_cfg: FbankConfig) -> torch.Tensor:
    mats = [utterance_features(w, fbank_cfg).values for w in waveforms]
    return torch.from_numpy(np.stack(mats)).float()


class TrialLoader:
    """Reads manifest trials from a corpus root and fixes their duration."""

    def __init__(self, root, duration_s: float, fbank_cfg: FbankConfig):
        self.root = Path(root)
        self.duration_s = duration_s
        self.fbank_cfg = fbank_cfg

    def waveform(self, rec: UtteranceRecord) -> Waveform:
        return fix_duration(read_wav(self.root / rec.audio_path), self.duration_s)

    def batch_features(self, recs: list[UtteranceRecord],
                       augmenter: Augmenter | None = None,
                       rng: np.random.Generator | None = None) -> torch.Tensor:
        wavs = [self.waveform(r) for r in recs]
        if augmenter is not None:
            wavs = augmenter.augment_batch(wavs, rng)
        return _features_tensor(wavs, self.fbank_cfg)

    def labels(self, recs: list[UtteranceRecord]) -> torch.Tensor:
        return torch.tensor([LABEL_INDEX[r.label] for r in recs], dtype=torch.long)


def _set_encoder_frozen(model: CmModel, frozen: bool) -> None:
    for p in model.encoder.parameters():
        p.requires_grad_(not frozen)


def score_records(model: CmModel, loader: TrialLoader, recs: list[UtteranceRecord],
                  batch_size: int, device: str = "cpu") -> tuple[float, list[ScoreEntry]]:
    """Mean CE loss and per-trial scores over a record list (eval mode)."""
    model.eval()
    total_loss, total_n = 0.0, 0
    entries = []
    with torch.no_grad():
        for start in range(0, len(recs), batch_size):
            chunk = recs[start:start + batch_size]
            feats = loader.batch_features(chunk).to(device)
            logits = model(feats)
            labels = loader.labels(chunk).to(device)
            total_loss += ce_loss(logits, labels).item() * len(chunk)
            total_n += len(chunk)
            for rec, s in zip(chunk, score_trial(logits).tolist()):
                entries.append(ScoreEntry(rec.utt_id, float(s), rec.label, rec.algorithm))
    return total_loss / max(total_n, 1), entries


def train(
    model: CmModel,
    records: list[UtteranceRecord],
    corpus_root,
    cfg: TrainConfig,
    run_dir,
    fbank_cfg: FbankConfig | None = None,
    augmenter: Augmenter | None = None,
    device: str = "cpu",
    resume_from=None,
) -> list[EpochRecord]:
    """Run the freeze-then-joint fine-tuning schedule over the manifest's
    train subset, validating on its dev subset. Writes one checkpoint and one
    epoch-log line per epoch under run_dir; returns the epoch records."""
    fbank_cfg = fbank_cfg or FbankConfig()
    run_dir = Path(run_dir)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    train_recs = [r for r in records if r.subset == "train"]
    dev_recs = [r for r in records if r.subset == "dev"]
    if not train_recs or not dev_recs:
        raise TrainingError("need non-empty train and dev subsets")
    labels_present = {r.label for r in train_recs}
    if labels_present != {"bonafide", "spoof"}:
        raise TrainingError(f"train subset must contain both classes, found {sorted(labels_present)}")
    if cfg.augment and augmenter is None:
        raise TrainingError("cfg.augment is set but no augmenter was provided")

    steps_per_epoch = math.ceil(len(train_recs) / cfg.batch_size)
    sched_cfg = cfg if cfg.total_steps is not None else replace(
        cfg, total_steps=cfg.epochs * steps_per_epoch
    )

    model.to(device)
    torch.manual_seed(cfg.seed)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay
    )
    loader = TrialLoader(corpus_root, cfg.duration_s, fbank_cfg)

    start_epoch, global_step = 0, 0
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        load_model_arrays(model, ckpt.arrays, prefix_filter=None)
        restore_optimizer_state(model, optimizer, ckpt.arrays)
        start_epoch = int(ckpt.metadata["epoch"]) + 1
        global_step = int(ckpt.metadata["global_step"])
        logger.info("resumed from %s at epoch %d, step %d", resume_from, start_epoch, global_step)

    log_path = run_dir / "epochs.tsv"
    epoch_records = []
    for epoch in range(start_epoch, cfg.epochs):
        frozen = epoch < cfg.frozen_epochs
        _set_encoder_frozen(model, frozen)
        model.train()

        order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch, 0]))
        aug_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, epoch, 1]))
        order = order_rng.permutation(len(train_recs))

        running_loss, running_n = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            chunk = [train_recs[i] for i in order[start:start + cfg.batch_size]]
            feats = loader.batch_features(
                chunk, augmenter=augmenter if cfg.augment else None, rng=aug_rng
            ).to(device)
            labels = loader.labels(chunk).to(device)

            optimizer.zero_grad(set_to_none=True)
            loss = ce_loss(model(feats), labels)
            if not math.isfinite(loss.item()):
                raise TrainingError(
                    f"non-finite train loss {loss.item()} at epoch {epoch}, step {global_step}"
                )
            loss.backward()
            lr = lr_at(global_step + 1, sched_cfg)  # 1-based schedule step
            for group in optimizer.param_groups:
                group["lr"] = lr
            optimizer.step()
            global_step += 1
            running_loss += loss.item() * len(chunk)
            running_n += len(chunk)

        train_loss = running_loss / running_n
        dev_loss, dev_entries = score_records(model, loader, dev_recs, cfg.batch_size, device)
        try:
            dev_eer = compute_eer(dev_entries)[0]
        except MetricError:
            dev_eer = float("nan")

        ckpt_path = ckpt_dir / f"epoch_{epoch:03d}.ckpt"
        arrays = model_arrays(model)
        arrays.update(optimizer_arrays(model, optimizer))
        save_checkpoint(
            ckpt_path,
            arrays,
            config={"encoder": asdict(model.encoder.cfg), "train": asdict(sched_cfg)},
            metadata={
                "epoch": epoch,
                "global_step": global_step,
                "train_loss": train_loss,
                "dev_loss": dev_loss,
                "dev_eer": dev_eer,
                "frozen": frozen,
                "source_task": "cm-finetune",
            },
        )
        rec = EpochRecord(epoch, train_loss, dev_loss, dev_eer, str(ckpt_path))
        append_epoch_log(log_path, rec)
        epoch_records.append(rec)
        logger.info(
            "epoch %d%s: train loss %.4f, dev loss %.4f, dev EER %.2f%%",
            epoch, " (frozen)" if frozen else "", train_loss, dev_loss, 100 * dev_eer,
        )

    return epoch_records


# ---------------------------------------------------------------------------
# toy pretext pretraining


PRETEXT_FILTER_BANDS = (
    (400.0, 2200.0),
    (800.0, 1600.0),
    (1200.0, 3200.0),
    (600.0, 2800.0),
    (1000.0, 2000.0),
    (1400.0, 2400.0),
)


@dataclass(frozen=True)
class PretextTaskSpec:
    """Classify which fixed resonator pair shaped a synthetic harmonic
    source; sources are expanded with 0.9x/1.1x speed-perturbed copies."""

    n_filters: int = 4
    n_train_per_class: int = 24
    n_dev_per_class: int = 8
    duration_s: float = 2.0
    sample_rate: int = 16000
    speed_factors: tuple[float, ...] = (0.9, 1.0, 1.1)
    epochs: int = 8
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.n_filters <= len(PRETEXT_FILTER_BANDS):
            raise ConfigError(f"n_filters must be in [2, {len(PRETEXT_FILTER_BANDS)}]")


def _pretext_filter(x: np.ndarray, sample_rate: int, class_idx: int) -> np.ndarray:
    from scipy.signal import lfilter

    out = np.zeros_like(x)
    for f0 in PRETEXT_FILTER_BANDS[class_idx]:
        r = np.exp(-np.pi * 120.0 / sample_rate)
        a = [1.0, -2.0 * r * np.cos(2.0 * np.pi * f0 / sample_rate), r * r]
        out += lfilter([1.0 - r], a, x)
    peak = np.max(np.abs(out)) + 1e-12
    return out / peak * 0.8


def _pretext_dataset(spec: PretextTaskSpec, split: str, fbank_cfg: FbankConfig):
    n_per = spec.n_train_per_class if split == "train" else spec.n_dev_per_class
    split_code = 0 if split == "train" else 1
    feats, labels = [], []
    for cls in range(spec.n_filters):
        for i in range(n_per):
            rng = np.random.default_rng(
                np.random.SeedSequence([spec.seed, 300 + split_code, cls, i])
            )
            src = synth_bonafide(rng, spec.sample_rate, (spec.duration_s, spec.duration_s))
            shaped = Waveform(_pretext_filter(src, spec.sample_rate, cls), spec.sample_rate)
            for factor in spec.speed_factors:
                w = fix_duration(speed_perturb(shaped, factor), spec.duration_s)
                feats.append(utterance_features(w, fbank_cfg).values)
                labels.append(cls)
    x = torch.from_numpy(np.stack(feats)).float()
    y = torch.tensor(labels, dtype=torch.long)
    return x, y


class PretextClassifier(torch.nn.Module):
    """Encoder plus a throwaway mean-pool linear head over the last block."""

    def __init__(self, encoder: ConformerEncoder, n_classes: int):
        super().__init__()
        self.encoder = encoder
        self.pretext_head = torch.nn.Linear(encoder.cfg.d_model, n_classes)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return self.pretext_head(self.encoder(feats)[-1].mean(dim=1))


@dataclass
class PretrainResult:
    ckpt_path: str
    dev_accuracy: float
    final_train_loss: float


def pretrain_toy(encoder: ConformerEncoder, spec: PretextTaskSpec, out_path,
                 fbank_cfg: FbankConfig | None = None, device: str = "cpu") -> PretrainResult:
    """Train encoder + pretext head on the filter-identification task and
    export an encoder-only checkpoint tagged with the pretext task."""
    fbank_cfg = fbank_cfg or FbankConfig()
    torch.manual_seed(spec.seed)
    model = PretextClassifier(encoder, spec.n_filters).to(device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=spec.lr, weight_decay=0.01)

    x_train, y_train = _pretext_dataset(spec, "train", fbank_cfg)
    x_dev, y_dev = _pretext_dataset(spec, "dev", fbank_cfg)
    n = len(y_train)

    final_loss = float("nan")
    for epoch in range(spec.epochs):
        model.train()
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 400, epoch]))
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, spec.batch_size):
            idx = torch.from_numpy(order[start:start + spec.batch_size].copy())
            optimizer.zero_grad(set_to_none=True)
            loss = ce_loss(model(x_train[idx].to(device)), y_train[idx].to(device))
            if not math.isfinite(loss.item()):
                raise TrainingError(f"non-finite pretext loss at epoch {epoch}")
            loss.backward()
            optimizer.step()
            losses.append(loss.item())
        final_loss = float(np.mean(losses))
        logger.info("pretext epoch %d: train loss %.4f", epoch, final_loss)

    model.eval()
    with torch.no_grad():
        preds = []
        for start in range(0, len(y_dev), spec.batch_size):
            preds.append(model(x_dev[start:start + spec.batch_size].to(device)).argmax(dim=1))
        accuracy = float((torch.cat(preds) == y_dev).float().mean())

    arrays = {k: v for k, v in model_arrays(model).items() if k.startswith("encoder.")}
    save_checkpoint(
        out_path,
        arrays,
        config={"encoder": asdict(encoder.cfg)},
        metadata={
            "source_task": "pretext-filter-id",
            "n_filters": spec.n_filters,
            "dev_accuracy": accuracy,
            "final_train_loss": final_loss,
        },
    )
    return PretrainResult(str(out_path), accuracy, final_loss)


def load_pretrained_encoder(path) -> Checkpoint:
    return load_checkpoint(path)
