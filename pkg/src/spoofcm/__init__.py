"""Conformer-based speech anti-spoofing countermeasure toolkit."""

__version__ = "0.1.0"

from .audio import Waveform, read_wav, write_wav
from .encoder import ConformerEncoder, EncoderConfig, count_parameters
from .features import FbankConfig, FeatureMatrix, fbank, fix_duration, utterance_features
from .head import CmModel, HeadConfig, MfaHead, ce_loss, score_trial
from .manifest import (
    LA19_PARTITION,
    SeenPartition,
    UtteranceRecord,
    load_manifest,
    parse_asvspoof_protocol,
    parse_manifest,
    partition_seen_unseen,
    summarize,
)
from .metrics import (
    ScoreEntry,
    breakdown_eer,
    compute_eer,
    compute_et,
    fuse_scores,
    grouped_eer,
    top3_summary,
)
from .synth import SynthCorpusSpec, generate_synthetic_corpus
from .training import TrainConfig, lr_at, select_top3, train

__all__ = [
    "Waveform", "read_wav", "write_wav",
    "ConformerEncoder", "EncoderConfig", "count_parameters",
    "FbankConfig", "FeatureMatrix", "fbank", "fix_duration", "utterance_features",
    "CmModel", "HeadConfig", "MfaHead", "ce_loss", "score_trial",
    "LA19_PARTITION", "SeenPartition", "UtteranceRecord", "load_manifest",
    "parse_asvspoof_protocol", "parse_manifest", "partition_seen_unseen", "summarize",
    "ScoreEntry", "breakdown_eer", "compute_eer", "compute_et", "fuse_scores",
    "grouped_eer", "top3_summary",
    "SynthCorpusSpec", "generate_synthetic_corpus",
    "TrainConfig", "lr_at", "select_top3", "train",
]
