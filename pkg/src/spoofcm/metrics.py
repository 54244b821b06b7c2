"""Detection metrics over per-trial scores.

EER convention: a trial is accepted (called bona fide) when its score is at
or above the threshold. Candidate thresholds are the midpoints of adjacent
sorted unique scores plus -inf/+inf; the EER is read off at the FAR = FRR
crossing with linear interpolation between the two bracketing operating
points. EER values are fractions in [0, 1]; the reporting layer converts to
percent.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import MetricError
from .manifest import SeenPartition, UtteranceRecord


@dataclass(frozen=True)
class ScoreEntry:
    utt_id: str
    score: float
    label: str
    algorithm: str


ScoreSet = list[ScoreEntry]


def write_score_file(path, entries: ScoreSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(f"{e.utt_id}\t{e.score!r}\n")


def read_score_file(path) -> dict[str, float]:
    scores = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise MetricError(f"{path} line {lineno}: expected 'utt_id<TAB>score'")
            scores[fields[0]] = float(fields[1])
    return scores


def join_scores(scores: dict[str, float], records: list[UtteranceRecord]) -> ScoreSet:
    """Attach labels and algorithm tags from a manifest to raw scores."""
    by_id = {r.utt_id: r for r in records}
    missing = sorted(set(scores) - set(by_id))
    if missing:
        raise MetricError(f"scored trials not present in manifest: {missing[:5]}"
                          + (" ..." if len(missing) > 5 else ""))
    return [
        ScoreEntry(uid, val, by_id[uid].label, by_id[uid].algorithm)
        for uid, val in scores.items()
    ]


def _split_by_class(entries: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    bona = np.array([e.score for e in entries if e.label == "bonafide"], dtype=np.float64)
    spoof = np.array([e.score for e in entries if e.label == "spoof"], dtype=np.float64)
    if len(bona) == 0 or len(spoof) == 0:
        raise MetricError("EER needs at least one bona fide and one spoof trial")
    if not (np.all(np.isfinite(bona)) and np.all(np.isfinite(spoof))):
        raise MetricError("scores contain non-finite values")
    return bona, spoof


def compute_eer(entries: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold (accept when score >= threshold)."""
    bona, spoof = _split_by_class(entries)
    uniq = np.unique(np.concatenate([bona, spoof]))
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    ths = np.concatenate([[-np.inf], mids, [np.inf]])

    bona_sorted = np.sort(bona)
    spoof_sorted = np.sort(spoof)
    far = (len(spoof) - np.searchsorted(spoof_sorted, ths, side="left")) / len(spoof)
    frr = np.searchsorted(bona_sorted, ths, side="left") / len(bona)

    diff = far - frr  # nonincreasing, from +1 at -inf to -1 at +inf
    k = int(np.argmax(diff <= 0.0))  # first operating point past the crossing; k >= 1
    f0, r0, t0 = far[k - 1], frr[k - 1], ths[k - 1]
    f1, r1, t1 = far[k], frr[k], ths[k]
    alpha = (f0 - r0) / ((f0 - r0) - (f1 - r1))
    eer = f0 + alpha * (f1 - f0)

    if np.isfinite(t0) and np.isfinite(t1):
        threshold = t0 + alpha * (t1 - t0)
    elif np.isfinite(t1):
        threshold = float(t1)
    elif np.isfinite(t0):
        threshold = float(t0)
    else:
        threshold = float(uniq[0])  # single unique score
    return float(eer), float(threshold)


def breakdown_eer(entries: ScoreSet, algorithms: list[str] | None = None) -> dict[str, float]:
    """Per-algorithm EER: each tag's spoof trials against all bona fide
    trials. Tags with no spoof trials are omitted with a warning."""
    bona = [e for e in entries if e.label == "bonafide"]
    if algorithms is None:
        algorithms = sorted({e.algorithm for e in entries if e.label == "spoof"})
    result = {}
    for tag in algorithms:
        spoof_t = [e for e in entries if e.label == "spoof" and e.algorithm == tag]
        if not spoof_t:
            warnings.warn(f"algorithm {tag!r} has no spoof trials; omitted from breakdown")
            continue
        result[tag] = compute_eer(bona + spoof_t)[0]
    return result


def compute_et(breakdown: dict[str, float]) -> dict[str, float]:
    """Error-prone tendency: min-max normalization of the breakdown EERs.
    If all values are equal the whole vector maps to zero."""
    if len(breakdown) < 2:
        raise MetricError("ET needs at least two algorithm tags")
    vals = np.array(list(breakdown.values()), dtype=np.float64)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        et = np.zeros_like(vals)
    else:
        et = (vals - lo) / (hi - lo)
    return dict(zip(breakdown.keys(), et.tolist()))


@dataclass(frozen=True)
class GroupedEer:
    pooled: float
    seen: float | None
    unseen: float | None
    partial: float | None


def grouped_eer(entries: ScoreSet, partition: SeenPartition) -> GroupedEer:
    """Pooled EER plus seen/unseen/partial EERs; every group reuses the full
    bona fide trial set. Groups without spoof trials are reported as None."""
    tags = {e.algorithm for e in entries if e.label == "spoof"}
    assigned = partition.seen | partition.unseen | partition.partial
    unassigned = sorted(tags - assigned)
    if unassigned:
        raise MetricError(f"algorithm tags not assigned to any partition set: {unassigned}")

    bona = [e for e in entries if e.label == "bonafide"]
    pooled = compute_eer(entries)[0]

    def group(tag_set) -> float | None:
        spoof_g = [e for e in entries if e.label == "spoof" and e.algorithm in tag_set]
        if not spoof_g:
            return None
        return compute_eer(bona + spoof_g)[0]

    return GroupedEer(
        pooled=pooled,
        seen=group(partition.seen),
        unseen=group(partition.unseen),
        partial=group(partition.partial),
    )


def top3_summary(eers_percent) -> str:
    """Table-style "average(best)" cell from the selected epochs' EERs,
    which are given in percent."""
    vals = [float(v) for v in eers_percent]
    if not vals:
        raise MetricError("top3_summary needs at least one EER")
    return f"{np.mean(vals):.2f}({np.min(vals):.2f})"


def fuse_scores(systems: list[ScoreSet], weights: list[float] | None = None) -> ScoreSet:
    """Z-normalize each system's scores, then take the weighted mean per
    trial. All systems must score the identical trial set."""
    if not systems:
        raise MetricError("no systems to fuse")
    if weights is None:
        weights = [1.0] * len(systems)
    if len(weights) != len(systems):
        raise MetricError(f"{len(systems)} systems but {len(weights)} weights")

    base = {e.utt_id: e for e in systems[0]}
    for i, sys_entries in enumerate(systems[1:], start=1):
        ids = {e.utt_id for e in sys_entries}
        diff = sorted(set(base) ^ ids)
        if diff:
            raise MetricError(f"system 0 and system {i} disagree on trial ids: {diff[:5]}"
                              + (" ..." if len(diff) > 5 else ""))
        for e in sys_entries:
            ref = base[e.utt_id]
            if (e.label, e.algorithm) != (ref.label, ref.algorithm):
                raise MetricError(f"trial {e.utt_id!r}: label/tag mismatch across systems")

    normalized = []
    for i, sys_entries in enumerate(systems):
        vals = np.array([e.score for e in sys_entries], dtype=np.float64)
        std = vals.std()
        if std == 0.0:
            raise MetricError(f"system {i} has zero score variance; cannot z-normalize")
        normalized.append({e.utt_id: (e.score - vals.mean()) / std for e in sys_entries})

    total_w = float(sum(weights))
    fused = []
    for e in systems[0]:
        z = sum(w * norm[e.utt_id] for w, norm in zip(weights, normalized)) / total_w
        fused.append(ScoreEntry(e.utt_id, float(z), e.label, e.algorithm))
    return fused
