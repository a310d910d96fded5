"""Micro and macro F1 evaluation with per-segment breakdowns.

Predictions and labels are sets of class ranks.  Counts are accumulated per
class, then micro F1 is computed over any class subset, which is what makes
the per-segment columns of the report cheap: each is the micro F1 of the
counts restricted to that segment's ranks.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .segmenter import Segmentation


class MetricsError(ValueError):
    """Raised for misaligned predictions and labels."""


def confusion_counts(preds, labels, class_ranks) -> dict:
    """Per-class (TP, FP, FN) over aligned lists of rank sets."""
    if len(preds) != len(labels):
        raise MetricsError("predictions and labels must have the same length")
    counts = {r: [0, 0, 0] for r in class_ranks}
    for pred, label in zip(preds, labels):
        for r in pred:
            row = counts.get(r)
            if row is None:
                continue
            if r in label:
                row[0] += 1
            else:
                row[1] += 1
        for r in label:
            row = counts.get(r)
            if row is not None and r not in pred:
                row[2] += 1
    return {r: (row[0], row[1], row[2]) for r, row in counts.items()}


def micro_f1(counts: dict) -> float:
    """2*TP / (2*TP + FP + FN) over the summed counts; 0 when undefined."""
    tp = sum(v[0] for v in counts.values())
    fp = sum(v[1] for v in counts.values())
    fn = sum(v[2] for v in counts.values())
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def _prf(tp: int, fp: int, fn: int) -> tuple:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return precision, recall, f1, tp + fn


def segment_names(num_segments: int) -> list:
    """Head, Body 1..k, Tail; a single segment is just All."""
    if num_segments == 1:
        return ["All"]
    names = ["Head"]
    names.extend(f"Body {i}" for i in range(1, num_segments - 1))
    names.append("Tail")
    return names


@dataclass
class MetricsReport:
    """Total, per-segment, and per-class scores plus the raw counts."""

    total_micro_f1: float
    macro_f1: float
    per_segment: list  # (segment name, micro F1), head first
    per_class: dict  # rank -> (precision, recall, f1, support)
    counts: dict  # rank -> (tp, fp, fn)


def segmentwise_report(preds, labels, seg: Segmentation) -> MetricsReport:
    """Micro F1 per segment and in total, with per-class detail."""
    ranks = range(1, seg.num_classes + 1)
    counts = confusion_counts(preds, labels, ranks)
    per_class = {r: _prf(*counts[r]) for r in ranks}
    per_segment = []
    for name, (start, end) in zip(segment_names(seg.num_segments), seg.segments):
        sub = {r: counts[r] for r in range(start, end + 1)}
        per_segment.append((name, micro_f1(sub)))
    macro = sum(v[2] for v in per_class.values()) / len(per_class)
    return MetricsReport(
        total_micro_f1=micro_f1(counts),
        macro_f1=macro,
        per_segment=per_segment,
        per_class=per_class,
        counts=counts,
    )


def render_report_text(report: MetricsReport, class_names: dict | None = None) -> str:
    """Aligned text table: the segment columns, then per-class rows."""
    headers = ["Total"] + [name for name, _ in report.per_segment]
    values = [report.total_micro_f1] + [f1 for _, f1 in report.per_segment]
    widths = [max(len(h), 6) for h in headers]
    head_line = "  ".join(h.rjust(w) for h, w in zip(headers, widths))
    value_line = "  ".join(f"{v:.4f}".rjust(w) for v, w in zip(values, widths))
    lines = [head_line, value_line, "", f"macro F1 {report.macro_f1:.4f}", ""]
    lines.append("rank  class        tp    fp    fn  precision  recall      f1  support")
    for rank in sorted(report.per_class):
        tp, fp, fn = report.counts[rank]
        precision, recall, f1, support = report.per_class[rank]
        name = class_names.get(rank, "") if class_names else ""
        lines.append(
            f"{rank:>4}  {name:<10} {tp:>5} {fp:>5} {fn:>5}  "
            f"{precision:>9.4f} {recall:>7.4f} {f1:>7.4f}  {support:>7}"
        )
    return "\n".join(lines) + "\n"


def write_report_csv(report: MetricsReport, path, class_names: dict | None = None) -> None:
    """Flat machine-readable rows: one total row, segment rows, class rows."""
    lines = ["row_type,name,rank,tp,fp,fn,precision,recall,f1,support"]
    lines.append(f"total,,,,,,,,{report.total_micro_f1!r},")
    lines.append(f"macro,,,,,,,,{report.macro_f1!r},")
    for name, f1 in report.per_segment:
        lines.append(f"segment,{name},,,,,,,{f1!r},")
    for rank in sorted(report.per_class):
        tp, fp, fn = report.counts[rank]
        precision, recall, f1, support = report.per_class[rank]
        name = class_names.get(rank, "") if class_names else ""
        lines.append(
            f"class,{name},{rank},{tp},{fp},{fn},{precision!r},{recall!r},{f1!r},{support}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
