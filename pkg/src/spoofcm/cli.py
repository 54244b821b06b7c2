"""Command-line interface.

Subcommands: gen-corpus, train, eval, fuse, plot-et. Every command echoes
its effective configuration into its output directory and is reproducible
given --seed. Exit codes: 0 success, 2 usage/configuration error, 1 runtime
failure.

Relative output paths are resolved against $SPOOFCM_RUN_ROOT when that is
set.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

import torch

from . import checkpoint as ckpt_io
from . import metrics as M
from . import report as R
from . import synth
from . import training as T
from .encoder import EncoderConfig
from .errors import ConfigError, SpoofCmError
from .head import CmModel
from .manifest import SeenPartition, load_manifest
from .augment import AugmentConfig, Augmenter

logger = logging.getLogger(__name__)

RUN_ROOT_ENV = "SPOOFCM_RUN_ROOT"

# name -> (type, default source); config-file keys and CLI flags share names.
_TRAIN_KEYS = {
    "epochs": int, "batch_size": int, "lr": float, "duration_s": float,
    "frozen_epochs": int, "warmup_steps": int, "dropout_fc": float,
    "seed": int, "augment": bool, "weight_decay": float,
    "n_blocks": int, "d_model": int, "ffn_dim": int, "n_heads": int,
    "conv_kernel": int, "dropout": float, "asp_hidden": int, "emb_dim": int,
}
_ENCODER_KEYS = ("n_blocks", "d_model", "ffn_dim", "n_heads", "conv_kernel", "dropout")
_HEAD_KEYS = ("asp_hidden", "emb_dim", "dropout_fc")


def _resolve(path_str: str) -> Path:
    p = Path(path_str)
    if p.is_absolute():
        return p
    return Path(os.environ.get(RUN_ROOT_ENV, ".")) / p


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean value {text!r}")


def _read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path} line {lineno}: expected key=value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _TRAIN_KEYS:
                raise ConfigError(f"{path} line {lineno}: unknown config key {key!r}")
            typ = _TRAIN_KEYS[key]
            values[key] = _parse_bool(val) if typ is bool else typ(val)
    return values


def _echo_config(directory: Path, pairs: dict) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={pairs[k]}" for k in sorted(pairs)]
    (directory / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _tags(arg: str | None) -> frozenset[str]:
    if not arg:
        return frozenset()
    return frozenset(t.strip() for t in arg.split(",") if t.strip())


def cmd_gen_corpus(args) -> int:
    out = _resolve(args.out)
    spec = synth.SynthCorpusSpec(
        sample_rate=args.sample_rate,
        n_train=args.n_train, n_dev=args.n_dev, n_eval=args.n_eval,
        seen_generators=tuple(sorted(_tags(args.seen))) or ("S01", "S02"),
        unseen_generators=tuple(sorted(_tags(args.unseen))) or ("S03", "S04"),
        seed=args.seed,
    )
    records = synth.generate_synthetic_corpus(spec, out)
    pairs = asdict(spec)
    pairs["out"] = str(out)
    if args.with_aug_pools:
        pools = synth.generate_augmentation_pools(out / "aug", seed=args.seed)
        pairs["aug_pools"] = str(out / "aug")
        logger.info("augmentation pools: %s", pools)
    _echo_config(out, pairs)
    print(f"wrote {len(records)} trials under {out}")
    return 0


def _merge_train_config(args) -> dict:
    preset_cfg = T.fad_like() if args.preset == "fad-like" else T.asvspoof_like()
    merged = {k: v for k, v in asdict(preset_cfg).items() if k in _TRAIN_KEYS}
    enc_defaults = EncoderConfig()
    for k in _ENCODER_KEYS:
        merged[k] = getattr(enc_defaults, k)
    merged["asp_hidden"] = 128
    merged["emb_dim"] = 192
    if args.config:
        merged.update(_read_config_file(args.config))
    for key in _TRAIN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _build_model(merged: dict) -> CmModel:
    enc_cfg = EncoderConfig(**{k: merged[k] for k in _ENCODER_KEYS})
    torch.manual_seed(merged["seed"])
    return CmModel(
        enc_cfg,
        asp_hidden=merged["asp_hidden"],
        emb_dim=merged["emb_dim"],
        dropout_fc=merged["dropout_fc"],
    )


def _augmenter_from_dir(aug_dir: Path, seed: int) -> Augmenter:
    noise_root = aug_dir / "noise"
    noise_dirs = {
        cat: str(noise_root / cat)
        for cat in ("environment", "music", "babble")
        if (noise_root / cat).is_dir()
    }
    rir_dir = aug_dir / "rirs"
    cfg = AugmentConfig(
        noise_dirs=noise_dirs,
        rir_dir=str(rir_dir) if rir_dir.is_dir() else None,
        seed=seed,
    )
    return Augmenter(cfg)


def cmd_train(args) -> int:
    data = _resolve(args.data)
    run_dir = _resolve(args.run_dir)
    merged = _merge_train_config(args)

    train_fields = {k: merged[k] for k in merged if k in T.TrainConfig.__dataclass_fields__}
    cfg = T.TrainConfig(preset=args.preset, **train_fields)

    records = load_manifest(data / "manifest.tsv")
    model = _build_model(merged)

    if args.pretrained:
        ckpt = ckpt_io.load_checkpoint(_resolve(args.pretrained))
        rep = ckpt_io.import_encoder(ckpt, model)
        logger.info("imported %d encoder keys (%d ignored)", len(rep.loaded), len(rep.ignored))

    augmenter = None
    if cfg.augment:
        aug_dir = Path(args.aug_dir) if args.aug_dir else data / "aug"
        if not aug_dir.is_dir():
            raise ConfigError(
                f"augmentation enabled but no pool directory at {aug_dir}; "
                "pass --aug-dir or --augment off"
            )
        augmenter = _augmenter_from_dir(aug_dir, cfg.seed)

    resume_from = None
    if args.resume:
        existing = sorted((run_dir / "checkpoints").glob("epoch_*.ckpt"))
        if existing:
            resume_from = existing[-1]
        else:
            warnings.warn("--resume requested but no checkpoint found; starting fresh")

    pairs = dict(merged)
    pairs.update(preset=args.preset, data=str(data), run_dir=str(run_dir),
                 pretrained=args.pretrained or "", resume=bool(resume_from))
    _echo_config(run_dir, pairs)

    records_out = T.train(
        model, records, data, cfg, run_dir,
        augmenter=augmenter, resume_from=resume_from,
    )
    if cfg.frozen_epochs == 0:
        logger.info("joint training from step 0 (no frozen phase)")
    print(f"trained {len(records_out)} epoch(s); log at {run_dir / 'epochs.tsv'}")
    return 0


def _derive_partition(records, seen_arg, unseen_arg, partial_arg) -> SeenPartition:
    seen, unseen, partial = _tags(seen_arg), _tags(unseen_arg), _tags(partial_arg)
    if seen or unseen or partial:
        return SeenPartition(seen=seen, unseen=unseen, partial=partial)
    train_tags = {r.algorithm for r in records if r.subset == "train" and not r.is_bonafide}
    eval_tags = {r.algorithm for r in records if r.subset == "eval" and not r.is_bonafide}
    return SeenPartition(seen=frozenset(train_tags), unseen=frozenset(eval_tags - train_tags))


def _rebuild_model(ckpt: ckpt_io.Checkpoint) -> tuple[CmModel, float]:
    enc_cfg = EncoderConfig(**ckpt.config["encoder"])
    head_cfg = ckpt.config.get("head", {})
    model = CmModel(
        enc_cfg,
        asp_hidden=head_cfg.get("asp_hidden", 128),
        emb_dim=head_cfg.get("emb_dim", 192),
        dropout_fc=head_cfg.get("dropout_fc", 0.1),
    )
    ckpt_io.load_model_arrays(model, ckpt.arrays, prefix_filter="encoder.")
    ckpt_io.load_model_arrays(model, ckpt.arrays, prefix_filter="head.")
    duration_s = float(ckpt.config.get("train", {}).get("duration_s", 8.0))
    return model, duration_s


def _ckpt_path_of(rec: T.EpochRecord, run_dir: Path) -> Path:
    p = Path(rec.ckpt_path)
    if p.exists():
        return p
    return run_dir / "checkpoints" / p.name


def cmd_eval(args) -> int:
    run_dir = _resolve(args.run_dir)
    data = _resolve(args.data)
    out_dir = _resolve(args.out) if args.out else run_dir / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)

    records = load_manifest(data / "manifest.tsv")
    eval_recs = [r for r in records if r.subset == "eval"]
    if not eval_recs:
        raise ConfigError("manifest has no eval subset")
    partition = _derive_partition(records, args.seen, args.unseen, args.partial)

    log = T.load_epoch_log(run_dir / "epochs.tsv")
    selected = T.select_top3(log)

    per_epoch_pooled = {}
    grouped_by_epoch = {}
    entries_best = None
    for rank, rec in enumerate(selected):
        ckpt = ckpt_io.load_checkpoint(_ckpt_path_of(rec, run_dir))
        model, duration_s = _rebuild_model(ckpt)
        loader = T.TrialLoader(data, duration_s, T.FbankConfig())
        _, entries = T.score_records(model, loader, eval_recs, batch_size=64)
        M.write_score_file(out_dir / f"scores_epoch_{rec.epoch:03d}.tsv", entries)
        grouped = M.grouped_eer(entries, partition)
        per_epoch_pooled[rec.epoch] = grouped.pooled
        grouped_by_epoch[rec.epoch] = grouped
        if rank == 0:
            entries_best = entries

    best = selected[0]
    grouped_best = grouped_by_epoch[best.epoch]
    report = R.EvalReport(
        pooled_eer=grouped_best.pooled,
        seen_eer=grouped_best.seen,
        unseen_eer=grouped_best.unseen,
        partial_eer=grouped_best.partial,
        top3=M.top3_summary([100.0 * v for v in per_epoch_pooled.values()]),
        per_epoch_pooled=per_epoch_pooled,
    )
    if args.breakdown:
        report.breakdown = M.breakdown_eer(entries_best)
        report.et = M.compute_et(report.breakdown)
    R.save_report(report, out_dir)

    _echo_config(out_dir, {
        "run_dir": str(run_dir), "data": str(data), "breakdown": args.breakdown,
        "seen": ",".join(sorted(partition.seen)),
        "unseen": ",".join(sorted(partition.unseen)),
        "partial": ",".join(sorted(partition.partial)),
        "epochs": ",".join(str(r.epoch) for r in selected),
    })
    print(report.to_text())
    return 0


def cmd_fuse(args) -> int:
    out_dir = _resolve(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = load_manifest(_resolve(args.manifest))
    systems = [M.join_scores(M.read_score_file(_resolve(p)), records) for p in args.scores]
    weights = [float(w) for w in args.weights.split(",")] if args.weights else None
    fused = M.fuse_scores(systems, weights)
    M.write_score_file(out_dir / "fused_scores.tsv", fused)

    report = R.EvalReport(pooled_eer=M.compute_eer(fused)[0])
    if args.breakdown:
        report.breakdown = M.breakdown_eer(fused)
        report.et = M.compute_et(report.breakdown)
    R.save_report(report, out_dir)
    _echo_config(out_dir, {
        "scores": ",".join(args.scores), "manifest": args.manifest,
        "weights": args.weights or "equal", "breakdown": args.breakdown,
    })
    print(report.to_text())
    return 0


def cmd_plot_et(args) -> int:
    image = _resolve(args.out_image)
    sidecar = _resolve(args.out_data)
    image.parent.mkdir(parents=True, exist_ok=True)
    sidecar.parent.mkdir(parents=True, exist_ok=True)
    merged = R.plot_et_curves([_resolve(p) for p in args.reports], image, sidecar)
    _echo_config(image.parent, {
        "reports": ",".join(args.reports),
        "out_image": str(image), "out_data": str(sidecar),
        "systems": ",".join(merged),
    })
    print(f"plotted {len(merged)} system(s) to {image}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spoofcm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate the synthetic spoofing corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-train", type=int, default=400, help="train trials per class")
    p.add_argument("--n-dev", type=int, default=80)
    p.add_argument("--n-eval", type=int, default=120)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--seen", help="comma list of seen spoof generators (default S01,S02)")
    p.add_argument("--unseen", help="comma list of unseen spoof generators (default S03,S04)")
    p.add_argument("--with-aug-pools", action="store_true",
                   help="also generate synthetic noise/RIR pools under <out>/aug")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("train", help="fine-tune a countermeasure model")
    p.add_argument("--data", required=True, help="corpus directory (contains manifest.tsv)")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--preset", choices=("fad-like", "asvspoof-like"), default="fad-like")
    p.add_argument("--pretrained", help="encoder checkpoint to import before training")
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--aug-dir", help="noise/RIR pool directory (default <data>/aug)")
    p.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    for key, typ in _TRAIN_KEYS.items():
        flag = "--" + key.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, type=_parse_bool, default=None, metavar="on|off")
        else:
            p.add_argument(flag, type=typ, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score the eval subset with the top-3 epochs")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="output directory (default <run-dir>/eval)")
    p.add_argument("--breakdown", action="store_true",
                   help="add per-algorithm EER breakdown and ET export")
    p.add_argument("--seen", help="override seen algorithm tags (comma list)")
    p.add_argument("--unseen", help="override unseen algorithm tags")
    p.add_argument("--partial", help="override partial-seen algorithm tags")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse", help="z-norm score fusion of multiple systems")
    p.add_argument("--scores", nargs="+", required=True, help="score files to fuse")
    p.add_argument("--manifest", required=True, help="manifest providing labels/tags")
    p.add_argument("--out", required=True)
    p.add_argument("--weights", help="comma list of fusion weights (default equal)")
    p.add_argument("--breakdown", action="store_true")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("plot-et", help="line plot of ET curves from report CSVs")
    p.add_argument("--reports", nargs="+", required=True, help="ET CSV files")
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-data", required=True, help="plain-data sidecar CSV")
    p.set_defaults(func=cmd_plot_et)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpoofCmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # keep runtime failures at exit 1 with a message
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
