"""Trial manifests: canonical 5-column format, ASVspoof protocol adapter,
and seen/unseen partitioning of spoofing algorithms.

Canonical manifest line (UTF-8, tab separated, ``#`` starts a comment):

    utt_id<TAB>audio_path<TAB>label<TAB>algorithm<TAB>subset

``label`` is ``bonafide`` or ``spoof``; ``algorithm`` is ``-`` for bona fide
trials and a tag such as ``A07`` or ``S01`` otherwise; ``subset`` is one of
``train``, ``dev``, ``eval``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .errors import ManifestError

LABELS = ("bonafide", "spoof")
SUBSETS = ("train", "dev", "eval")
BONAFIDE_TAG = "-"


@dataclass(frozen=True)
class UtteranceRecord:
    """One audio trial: identity, location, class, spoofing tag, subset."""

    utt_id: str
    audio_path: str
    label: str
    algorithm: str
    subset: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ManifestError(f"{self.utt_id}: unknown label {self.label!r}")
        if self.subset not in SUBSETS:
            raise ManifestError(f"{self.utt_id}: unknown subset {self.subset!r}")
        if (self.label == "bonafide") != (self.algorithm == BONAFIDE_TAG):
            raise ManifestError(
                f"{self.utt_id}: label {self.label!r} inconsistent with "
                f"algorithm tag {self.algorithm!r}"
            )

    @property
    def is_bonafide(self) -> bool:
        return self.label == "bonafide"


def parse_manifest(text: str) -> list[UtteranceRecord]:
    """Parse canonical manifest text into records, preserving line order."""
    records = []
    seen_ids = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 5:
            raise ManifestError(f"line {lineno}: expected 5 tab-separated fields, got {len(fields)}")
        utt_id, audio_path, label, algorithm, subset = fields
        try:
            rec = UtteranceRecord(utt_id, audio_path, label, algorithm, subset)
        except ManifestError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from exc
        if rec.utt_id in seen_ids:
            raise ManifestError(f"line {lineno}: duplicate utt_id {rec.utt_id!r}")
        seen_ids.add(rec.utt_id)
        records.append(rec)
    return records


def format_manifest(records: list[UtteranceRecord]) -> str:
    """Inverse of parse_manifest for canonical (comment-free) manifests."""
    lines = [
        "\t".join((r.utt_id, r.audio_path, r.label, r.algorithm, r.subset))
        for r in records
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def load_manifest(path) -> list[UtteranceRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read())


def save_manifest(path, records: list[UtteranceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_manifest(records))


def summarize(records: list[UtteranceRecord]) -> dict[tuple[str, str], int]:
    """Trial counts keyed by (label, subset)."""
    return dict(Counter((r.label, r.subset) for r in records))


def parse_asvspoof_protocol(
    text: str,
    subset: str = "eval",
    audio_dir: str = "flac",
    audio_ext: str = ".flac",
) -> list[UtteranceRecord]:
    """Adapter for the public ASVspoof CM protocol format.

    Each line has 5 whitespace-separated fields:
    ``speaker utterance - system_id key`` with key ``bonafide`` or ``spoof``.
    The protocol carries no subset or audio location, so those are supplied
    by the caller.
    """
    records = []
    seen_ids = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 5:
            raise ManifestError(
                f"line {lineno}: expected 5 whitespace-separated fields, got {len(fields)}"
            )
        _speaker, utt_id, _dash, system_id, key = fields
        if key == "bonafide":
            label, algorithm = "bonafide", BONAFIDE_TAG
        elif key == "spoof":
            label, algorithm = "spoof", system_id
        else:
            raise ManifestError(f"line {lineno}: unknown key token {key!r}")
        if utt_id in seen_ids:
            raise ManifestError(f"line {lineno}: duplicate utt_id {utt_id!r}")
        seen_ids.add(utt_id)
        records.append(
            UtteranceRecord(utt_id, f"{audio_dir}/{utt_id}{audio_ext}", label, algorithm, subset)
        )
    return records


@dataclass(frozen=True)
class SeenPartition:
    """Disjoint assignment of spoofing-algorithm tags to exposure categories."""

    seen: frozenset[str]
    unseen: frozenset[str]
    partial: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "seen", frozenset(self.seen))
        object.__setattr__(self, "unseen", frozenset(self.unseen))
        object.__setattr__(self, "partial", frozenset(self.partial))
        overlap = (self.seen & self.unseen) | (self.seen & self.partial) | (self.unseen & self.partial)
        if overlap:
            raise ManifestError(f"partition sets overlap on {sorted(overlap)}")

    def category_of(self, tag: str) -> str:
        if tag in self.seen:
            return "seen"
        if tag in self.unseen:
            return "unseen"
        if tag in self.partial:
            return "partial"
        raise ManifestError(f"algorithm tag {tag!r} not assigned to any partition set")


# ASVspoof 2019 LA evaluation-set exposure categories.
LA19_PARTITION = SeenPartition(
    seen=frozenset({"A16", "A19"}),
    unseen=frozenset({"A10", "A11", "A12", "A13", "A14", "A15", "A18"}),
    partial=frozenset({"A07", "A08", "A09", "A17"}),
)


def partition_seen_unseen(
    records: list[UtteranceRecord], partition: SeenPartition
) -> dict[str, list[UtteranceRecord]]:
    """Split trials into seen/unseen/partial buckets.

    Every bucket contains all bona fide trials; each spoof trial lands in
    exactly the bucket its algorithm tag is assigned to.
    """
    tags = {r.algorithm for r in records if not r.is_bonafide}
    assigned = partition.seen | partition.unseen | partition.partial
    missing = sorted(tags - assigned)
    if missing:
        raise ManifestError(f"algorithm tags not assigned to any partition set: {missing}")

    bonafide = [r for r in records if r.is_bonafide]
    buckets = {cat: list(bonafide) for cat in ("seen", "unseen", "partial")}
    for r in records:
        if not r.is_bonafide:
            buckets[partition.category_of(r.algorithm)].append(r)
    return buckets
