"""Evaluation reports: human-readable text, machine-readable key=value
lines, per-algorithm breakdown and ET exports, and the ET line plot.

Internally EERs are fractions; every rendered surface shows percent.
The plot is a pure view of its CSV sidecar, which tests parse instead of
pixels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import MetricError


def _pct(v: float | None) -> str:
    return "absent" if v is None else f"{100.0 * v:.4f}"


@dataclass
class EvalReport:
    pooled_eer: float
    seen_eer: float | None = None
    unseen_eer: float | None = None
    partial_eer: float | None = None
    breakdown: dict[str, float] = field(default_factory=dict)
    et: dict[str, float] = field(default_factory=dict)
    top3: str = ""
    per_epoch_pooled: dict[int, float] = field(default_factory=dict)

    def to_kv_lines(self) -> list[str]:
        lines = [
            f"pooled_eer_pct={_pct(self.pooled_eer)}",
            f"seen_eer_pct={_pct(self.seen_eer)}",
            f"unseen_eer_pct={_pct(self.unseen_eer)}",
            f"partial_eer_pct={_pct(self.partial_eer)}",
            f"top3_pooled={self.top3}",
        ]
        for epoch, eer in sorted(self.per_epoch_pooled.items()):
            lines.append(f"epoch{epoch:03d}_pooled_eer_pct={_pct(eer)}")
        for tag in self.breakdown:
            lines.append(f"breakdown_{tag}_eer_pct={_pct(self.breakdown[tag])}")
        for tag in self.et:
            lines.append(f"et_{tag}={self.et[tag]:.6f}")
        return lines

    def to_text(self) -> str:
        out = ["evaluation report", "-----------------"]
        out.append(f"pooled EER   : {_pct(self.pooled_eer)} %")
        out.append(f"seen EER     : {_pct(self.seen_eer)} %")
        out.append(f"unseen EER   : {_pct(self.unseen_eer)} %")
        out.append(f"partial EER  : {_pct(self.partial_eer)} %")
        if self.top3:
            out.append(f"top-3 pooled : {self.top3}  [average(best), %]")
        if self.per_epoch_pooled:
            pairs = ", ".join(
                f"epoch {e}: {_pct(v)} %" for e, v in sorted(self.per_epoch_pooled.items())
            )
            out.append(f"selected     : {pairs}")
        if self.breakdown:
            out.append("per-algorithm breakdown (EER % / ET):")
            for tag in self.breakdown:
                et = f"{self.et[tag]:.3f}" if tag in self.et else "-"
                out.append(f"  {tag}: {_pct(self.breakdown[tag])} / {et}")
        return "\n".join(out) + "\n"


def save_report(report: EvalReport, out_dir, name: str = "report") -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.txt").write_text(report.to_text(), encoding="utf-8")
    (out_dir / f"{name}.kv").write_text("\n".join(report.to_kv_lines()) + "\n", encoding="utf-8")
    if report.breakdown:
        with open(out_dir / "breakdown.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["tag", "eer_pct"])
            for tag, v in report.breakdown.items():
                w.writerow([tag, f"{100.0 * v:.6f}"])
    if report.et:
        write_et_csv(out_dir / "et.csv", list(report.et.keys()), {"system": report.et})


def write_et_csv(path, tag_order: list[str], et_by_system: dict[str, dict[str, float]]) -> None:
    """Columns: tag, then one ET column per system, rows in tag order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tag"] + list(et_by_system.keys()))
        for tag in tag_order:
            w.writerow([tag] + [f"{et_by_system[s][tag]:.6f}" for s in et_by_system])


def read_et_csv(path) -> tuple[list[str], dict[str, dict[str, float]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["tag"]:
        raise MetricError(f"{path}: not an ET CSV (expected 'tag' header column)")
    systems = rows[0][1:]
    tags = []
    data: dict[str, dict[str, float]] = {s: {} for s in systems}
    for row in rows[1:]:
        if not row:
            continue
        tag = row[0]
        tags.append(tag)
        for s, v in zip(systems, row[1:]):
            data[s][tag] = float(v)
    return tags, data


def plot_et_curves(csv_paths: list, image_path, sidecar_path) -> dict[str, dict[str, float]]:
    """Merge ET CSVs (tag order taken from the first), emit one polyline per
    system plus a sidecar CSV holding exactly the plotted values."""
    if not csv_paths:
        raise MetricError("no ET CSV inputs")
    tag_order, merged = read_et_csv(csv_paths[0])
    for p in csv_paths[1:]:
        tags, data = read_et_csv(p)
        if set(tags) != set(tag_order):
            raise MetricError(f"{p}: tag set differs from {csv_paths[0]}")
        for system, values in data.items():
            name = system if system not in merged else f"{Path(p).stem}:{system}"
            merged[name] = values

    write_et_csv(sidecar_path, tag_order, merged)

    fig, ax = plt.subplots(figsize=(8, 4))
    for system, values in merged.items():
        ax.plot(tag_order, [values[t] for t in tag_order], marker="o", label=system)
    ax.set_xlabel("spoofing algorithm")
    ax.set_ylabel("error-prone tendency")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(image_path, dpi=120)
    plt.close(fig)
    return merged
