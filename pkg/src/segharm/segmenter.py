"""Frequency segmentation and per-segment occurrence rates.

The sorted class-frequency list is cut into contiguous segments whose
frequency standard deviation stays within eta times the segment's smallest
frequency.  The cut point of the tail is found by binary search, and the
full partition by repeatedly stripping the tail off the remaining head.
Occurrence rates between segments supply the per-sample weights used by the
rate-modulated losses.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SegmentationError(ValueError):
    """Raised for invalid frequency lists or degenerate rate tables."""


def _check_freqs(freqs) -> np.ndarray:
    F = np.asarray(freqs, dtype=np.float64)
    if F.ndim != 1 or F.size == 0:
        raise SegmentationError("frequency list must be a non-empty vector")
    if np.any(F < 1):
        raise SegmentationError("frequencies must be >= 1")
    if np.any(F[:-1] < F[1:]):
        raise SegmentationError("frequency list must be sorted non-increasing")
    return F


def _check_eta(eta: float) -> None:
    if not 0.0 < eta <= 1.0:
        raise SegmentationError("eta must lie in (0, 1]")


def segment_tail(freqs, eta: float) -> int:
    """Start index of the tail segment of a sorted frequency list.

    Binary search for the leftmost index whose suffix has population
    standard deviation at most eta times the smallest frequency.  Equality
    counts as acceptable, so the search always narrows; a single element has
    sigma 0 and is always acceptable.
    """
    F = _check_freqs(freqs)
    _check_eta(eta)
    allowed = eta * F[-1]
    left, right = 0, F.size - 1
    while left < right:
        mid = (left + right) // 2
        # np.std is the population sigma (ddof 0), so a flat suffix gives 0
        if np.std(F[mid:]) > allowed:
            left = mid + 1
        else:
            right = mid
    return int(left)


@dataclass
class Segmentation:
    """A head-first partition of ranks 1..C into contiguous segments."""

    eta: float
    segments: list  # (start_rank, end_rank), 1-based inclusive
    sigma: list  # per-segment population standard deviation of frequencies

    @property
    def num_segments(self) -> int:
        return len(self.segments)

    @property
    def num_classes(self) -> int:
        return self.segments[-1][1]

    @property
    def class_counts(self) -> list:
        return [end - start + 1 for start, end in self.segments]

    @property
    def offsets(self) -> list:
        """Cumulative class count before each segment."""
        out = [0]
        for count in self.class_counts[:-1]:
            out.append(out[-1] + count)
        return out

    def rank_to_segment(self) -> np.ndarray:
        """Array mapping 1-based rank to 0-based segment index; slot 0 is -1."""
        arr = np.full(self.num_classes + 1, -1, dtype=np.int64)
        for idx, (start, end) in enumerate(self.segments):
            arr[start : end + 1] = idx
        return arr


def segment_all(freqs, eta: float) -> Segmentation:
    """Partition a sorted frequency list into segments, head first.

    The tail is stripped repeatedly from the remaining prefix.  Each strip
    removes at least one class, so the loop always terminates.
    """
    F = _check_freqs(freqs)
    _check_eta(eta)
    cuts = []
    end = F.size
    while end > 0:
        start = segment_tail(F[:end], eta)
        cuts.append((start, end))
        end = start
    cuts.reverse()
    segments = [(start + 1, end) for start, end in cuts]
    sigma = [float(np.std(F[start:end])) for start, end in cuts]
    return Segmentation(eta=float(eta), segments=segments, sigma=sigma)


@dataclass
class SegmentLabel:
    """A full label restricted to one segment's classes."""

    segment_index: int
    bits: np.ndarray


def project_label(y, seg: Segmentation, r: int) -> SegmentLabel:
    """Restrict a full binary label over ranks 1..C to segment r.

    An all-zero result is valid: such samples act as negatives for the
    segment's classifier.
    """
    if not 0 <= r < seg.num_segments:
        raise SegmentationError(f"segment index {r} out of range")
    y = np.asarray(y)
    if y.shape != (seg.num_classes,):
        raise SegmentationError(f"label must have length {seg.num_classes}, found {y.shape}")
    start, end = seg.segments[r]
    return SegmentLabel(segment_index=r, bits=y[start - 1 : end].astype(np.int8))


@dataclass
class RateTable:
    """Per-segment positive-record counts and their pairwise ratios."""

    positive_counts: np.ndarray  # (S,)
    rates: np.ndarray  # (S, S) with rates[i, r] = counts[i] / counts[r]


def positive_counts(dataset, seg: Segmentation, rank_of: dict) -> RateTable:
    """Count, per segment, the records with at least one positive class there.

    A record counts once for every segment its codes touch.  A segment no
    record touches would make the rate table degenerate, so that raises.
    """
    seg_of = seg.rank_to_segment()
    counts = np.zeros(seg.num_segments, dtype=np.int64)
    for rec in dataset.records:
        touched = set()
        for code in rec.codes:
            rank = rank_of.get(code)
            if rank is None:
                raise SegmentationError(f"code {code!r} has no rank in the frequency table")
            touched.add(int(seg_of[rank]))
        for idx in touched:
            counts[idx] += 1
    if np.any(counts == 0):
        empty = int(np.argmin(counts))
        raise SegmentationError(f"segment {empty} has no positive records; the training setup is degenerate")
    rates = counts[:, None].astype(np.float64) / counts[None, :].astype(np.float64)
    return RateTable(positive_counts=counts, rates=rates)


def positives_per_segment(y, seg: Segmentation) -> np.ndarray:
    """Count the positive bits of a full label inside each segment."""
    y = np.asarray(y)
    if y.shape != (seg.num_classes,):
        raise SegmentationError(f"label must have length {seg.num_classes}, found {y.shape}")
    return np.array([int(np.sum(y[start - 1 : end])) for start, end in seg.segments], dtype=np.int64)


def beta_sh_from_counts(n, rates_matrix: np.ndarray, r: int) -> float:
    """Harmonic-mean rate of the segments holding a sample's positives.

    n[i] is how many of the sample's positive classes fall in segment i; the
    result is sum(n) / sum(n_i / rate[i, r]) over segments with n_i > 0.
    With every positive in one segment this reduces to that segment's rate,
    and rate[r, r] = 1 covers the sample's own segment.
    """
    n = np.asarray(n, dtype=np.float64)
    total = float(n.sum())
    if total <= 0:
        raise SegmentationError("label has no positive classes")
    mask = n > 0
    return float(total / np.sum(n[mask] / rates_matrix[mask, r]))


def beta_sh(y, seg: Segmentation, rates: RateTable, r: int) -> float:
    """Harmonic-mean occurrence rate for a full label, relative to segment r."""
    if not 0 <= r < seg.num_segments:
        raise SegmentationError(f"segment index {r} out of range")
    return beta_sh_from_counts(positives_per_segment(y, seg), rates.rates, r)


def write_segmentation(seg: Segmentation, freqs, path) -> None:
    """One line per segment: start rank, end rank, class count, min frequency, sigma."""
    F = np.asarray(freqs, dtype=np.float64)
    lines = [f"# eta {seg.eta!r}", "start_rank\tend_rank\tclass_count\tmin_frequency\tsigma"]
    for (start, end), sig in zip(seg.segments, seg.sigma):
        min_freq = F[end - 1]
        lines.append(f"{start}\t{end}\t{end - start + 1}\t{min_freq:g}\t{sig!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_segmentation(path) -> Segmentation:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 3 or not lines[0].startswith("# eta "):
        raise SegmentationError(f"{path}: not a segmentation file")
    eta = float(lines[0][len("# eta ") :])
    segments = []
    sigma = []
    for line in lines[2:]:
        if not line:
            continue
        start, end, _, _, sig = line.split("\t")
        segments.append((int(start), int(end)))
        sigma.append(float(sig))
    return Segmentation(eta=eta, segments=segments, sigma=sigma)


def write_rate_table(rates: RateTable, path) -> None:
    """Counts plus the full rate matrix, one row per segment."""
    S = len(rates.positive_counts)
    header = "segment,positive_count," + ",".join(f"rate_vs_{r}" for r in range(S))
    lines = [header]
    for i in range(S):
        row = ",".join(repr(float(v)) for v in rates.rates[i])
        lines.append(f"{i},{int(rates.positive_counts[i])},{row}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_rate_table(path) -> RateTable:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("segment,positive_count,"):
        raise SegmentationError(f"{path}: not a rate table file")
    counts = []
    for line in lines[1:]:
        if not line:
            continue
        parts = line.split(",")
        counts.append(int(parts[1]))
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0 or np.any(counts <= 0):
        raise SegmentationError(f"{path}: rate table needs positive counts")
    # the matrix is rebuilt from the integer counts, which is exact
    rates = counts[:, None].astype(np.float64) / counts[None, :].astype(np.float64)
    return RateTable(positive_counts=counts, rates=rates)
