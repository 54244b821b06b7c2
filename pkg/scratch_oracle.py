"""Scratch calibration run for desk-scale thresholds (not part of the package)."""
import time
import tempfile
from pathlib import Path

import numpy as np
import torch

from spoofcm.encoder import EncoderConfig, ConformerEncoder
from spoofcm.head import CmModel
from spoofcm.manifest import SeenPartition
from spoofcm.metrics import grouped_eer
from spoofcm.synth import SynthCorpusSpec, generate_synthetic_corpus
from spoofcm.training import (
    TrainConfig, TrialLoader, FbankConfig, train, score_records,
    PretextTaskSpec, pretrain_toy, select_top3,
)
from spoofcm.checkpoint import load_checkpoint, import_encoder

ENC = dict(input_dim=80, d_model=32, n_heads=2, n_blocks=2, ffn_dim=128, conv_kernel=15, dropout=0.1)

t0 = time.time()
root = Path(tempfile.mkdtemp(prefix="oracle_"))
print("root:", root)

spec = SynthCorpusSpec(n_train=400, n_dev=80, n_eval=120, seed=0)
records = generate_synthetic_corpus(spec, root / "corpus")
print(f"corpus generated in {time.time()-t0:.1f}s: {len(records)} trials")

cfg = TrainConfig(preset="asvspoof-like", duration_s=2.0, batch_size=32, lr=1e-3,
                  warmup_steps=100, epochs=12, frozen_epochs=0, dropout_fc=0.1,
                  augment=False, seed=0)
torch.manual_seed(0)
model = CmModel(EncoderConfig(**ENC))
t1 = time.time()
recs = train(model, records, root / "corpus", cfg, root / "run")
print(f"train 12 epochs in {time.time()-t1:.1f}s")
for r in recs:
    print(f"  epoch {r.epoch}: train {r.train_loss:.4f} dev {r.dev_loss:.4f} dev_eer {100*r.dev_eer:.2f}%")

# eval with best epoch
best = select_top3(recs)[0]
ck = load_checkpoint(best.ckpt_path)
model2 = CmModel(EncoderConfig(**ck.config["encoder"]))
from spoofcm.checkpoint import load_model_arrays
load_model_arrays(model2, ck.arrays, prefix_filter="encoder.")
load_model_arrays(model2, ck.arrays, prefix_filter="head.")
loader = TrialLoader(root / "corpus", 2.0, FbankConfig())
eval_recs = [r for r in records if r.subset == "eval"]
_, entries = score_records(model2, loader, eval_recs, 64)
part = SeenPartition(seen=frozenset(spec.seen_generators), unseen=frozenset(spec.unseen_generators))
g = grouped_eer(entries, part)
print(f"eval: pooled {100*g.pooled:.2f}% seen {100*g.seen:.2f}% unseen {100*g.unseen:.2f}%")

# ---- transfer experiment ----
t2 = time.time()
ptx = PretextTaskSpec(n_filters=4, n_train_per_class=24, n_dev_per_class=8,
                      duration_s=2.0, epochs=6, batch_size=32, lr=1e-3, seed=0)
torch.manual_seed(100)
enc = ConformerEncoder(EncoderConfig(**ENC))
res = pretrain_toy(enc, ptx, root / "pretext.ckpt")
print(f"pretext in {time.time()-t2:.1f}s: dev acc {res.dev_accuracy:.3f} loss {res.final_train_loss:.3f}")

def epochs_to_dev(records, target=0.2):
    for r in records:
        if r.dev_loss <= target:
            return r.epoch + 1
    return None

small_cfg = TrainConfig(preset="asvspoof-like", duration_s=2.0, batch_size=32, lr=1e-3,
                        warmup_steps=100, epochs=10, frozen_epochs=1, dropout_fc=0.1,
                        augment=False, seed=0)
ckpt = load_checkpoint(root / "pretext.ckpt")
for seed in (11, 12, 13):
    t3 = time.time()
    torch.manual_seed(seed)
    m_rand = CmModel(EncoderConfig(**ENC))
    cfg_s = TrainConfig(**{**small_cfg.__dict__, "seed": seed, "frozen_epochs": 0})
    r_rand = train(m_rand, records, root / "corpus", cfg_s, root / f"rand{seed}")

    torch.manual_seed(seed)
    m_pre = CmModel(EncoderConfig(**ENC))
    import_encoder(ckpt, m_pre)
    cfg_p = TrainConfig(**{**small_cfg.__dict__, "seed": seed, "frozen_epochs": 1})
    r_pre = train(m_pre, records, root / "corpus", cfg_p, root / f"pre{seed}")
    print(f"seed {seed}: random -> {epochs_to_dev(r_rand)} epochs, pretext -> {epochs_to_dev(r_pre)} epochs ({time.time()-t3:.1f}s)")
    print("   rand dev:", [f"{r.dev_loss:.3f}" for r in r_rand])
    print("   pre  dev:", [f"{r.dev_loss:.3f}" for r in r_pre])

print(f"total {time.time()-t0:.1f}s")
