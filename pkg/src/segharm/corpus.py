"""Record ingestion, note preprocessing, and class-frequency accounting.

Datasets arrive as line-delimited JSON, one record per line with an ``id``,
a set of label ``codes``, and either a raw note ``text`` or a dense feature
vector.  This module parses and validates those records, builds the
section-restricted model input for text notes, and maintains the sorted
class-frequency table that segmentation and training run on.
"""

from __future__ import annotations

import bisect
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_MAX_LEN = 512
DEFAULT_MIN_COUNT = 200
PAD_TOKEN = "<pad>"


class CorpusError(ValueError):
    """Raised for malformed input records or inconsistent datasets."""


@dataclass
class Record:
    """One labeled sample: a note or a feature vector plus its code set."""

    id: str
    codes: set
    text: str | None = None
    features: np.ndarray | None = None

    def copy_with_codes(self, codes) -> "Record":
        return Record(id=self.id, codes=set(codes), text=self.text, features=self.features)


@dataclass
class Dataset:
    """An ordered collection of records and the set of codes they use."""

    records: list
    class_universe: set

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class IngestReport:
    """Counts and rejects collected while parsing a record stream."""

    total_lines: int = 0
    accepted: int = 0
    rejected_empty_codes: list = field(default_factory=list)

    @property
    def rejected(self) -> int:
        return len(self.rejected_empty_codes)

    def to_dict(self) -> dict:
        return {
            "total_lines": self.total_lines,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejected_empty_codes": list(self.rejected_empty_codes),
        }

    def to_text(self) -> str:
        lines = [
            f"lines read      {self.total_lines}",
            f"records kept    {self.accepted}",
            f"records dropped {self.rejected} (empty code list)",
        ]
        for rid in self.rejected_empty_codes:
            lines.append(f"  dropped {rid}")
        return "\n".join(lines) + "\n"


def parse_records(lines) -> tuple[Dataset, IngestReport]:
    """Parse line-delimited JSON records into a dataset.

    Records with an empty code list are rejected and tallied in the report
    rather than raising.  Malformed lines, duplicate ids, and records with
    neither text nor features raise :class:`CorpusError` naming the line.
    """
    records = []
    seen_ids = set()
    universe = set()
    report = IngestReport()
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        report.total_lines += 1
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {lineno}: malformed record: {exc}") from exc
        if not isinstance(obj, dict):
            raise CorpusError(f"line {lineno}: expected an object, got {type(obj).__name__}")
        if "id" not in obj or "codes" not in obj:
            raise CorpusError(f"line {lineno}: record needs both 'id' and 'codes'")
        rid = obj["id"]
        if not isinstance(rid, str) or not rid:
            raise CorpusError(f"line {lineno}: id must be a non-empty string")
        if rid in seen_ids:
            raise CorpusError(f"line {lineno}: duplicate record id {rid!r}")
        seen_ids.add(rid)
        codes = obj["codes"]
        if not isinstance(codes, list) or not all(isinstance(c, str) and c for c in codes):
            raise CorpusError(f"line {lineno}: codes must be an array of non-empty strings")
        text = obj.get("text")
        if text is not None and not isinstance(text, str):
            raise CorpusError(f"line {lineno}: text must be a string")
        features = obj.get("features")
        if text is None and features is None:
            raise CorpusError(f"line {lineno}: record {rid!r} has neither text nor features")
        if features is not None:
            features = np.asarray(features, dtype=np.float64)
            if features.ndim != 1 or features.size == 0 or not np.all(np.isfinite(features)):
                raise CorpusError(f"line {lineno}: features must be a non-empty finite vector")
        if not codes:
            report.rejected_empty_codes.append(rid)
            continue
        codeset = set(codes)
        records.append(Record(id=rid, codes=codeset, text=text, features=features))
        universe.update(codeset)
        report.accepted += 1
    return Dataset(records=records, class_universe=universe), report


def load_dataset(path) -> tuple[Dataset, IngestReport]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_records(fh)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to line-delimited JSON in a canonical form.

    Codes are sorted and key order is fixed, so saving the same dataset
    twice produces identical bytes.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dataset.records:
            obj = {"id": rec.id}
            if rec.text is not None:
                obj["text"] = rec.text
            if rec.features is not None:
                obj["features"] = [float(v) for v in rec.features]
            obj["codes"] = sorted(rec.codes)
            fh.write(json.dumps(obj) + "\n")


# A free-standing heading: a short capitalized phrase (up to five words,
# letters only) ending in a colon.  Used to find where a section body stops
# when the next configured header is not the next heading in the note.
_GENERIC_HEADING = re.compile(r"(?<![A-Za-z])[A-Z][A-Za-z-]*(?:[ \t]+[A-Za-z-]+){0,4}[ \t]*:")


def extract_sections(note: str, section_headers) -> str:
    """Concatenate the bodies of the configured sections, in note order.

    Header matching is case-insensitive and tolerates a trailing colon.  A
    section body runs from the end of its header to the next recognized
    heading, either another configured header or a capitalized phrase ending
    in a colon.  Returns an empty string when no configured header occurs.
    """
    if not note:
        return ""
    starts = []
    boundaries = set()
    for header in section_headers:
        if not header:
            raise CorpusError("section headers must be non-empty")
        pat = re.compile(
            r"(?<![A-Za-z])" + re.escape(header) + r"(?![A-Za-z])[ \t]*:?",
            re.IGNORECASE,
        )
        for m in pat.finditer(note):
            starts.append((m.end(), m.start()))
            boundaries.add(m.start())
    if not starts:
        return ""
    for m in _GENERIC_HEADING.finditer(note):
        boundaries.add(m.start())
    starts.sort()
    bounds = sorted(boundaries)
    chunks = []
    for span_start, _ in starts:
        idx = bisect.bisect_left(bounds, span_start)
        end = bounds[idx] if idx < len(bounds) else len(note)
        chunk = note[span_start:end].strip()
        if chunk:
            chunks.append(chunk)
    return " ".join(chunks)


def expand_abbreviations(text: str, dictionary: dict) -> str:
    """Replace whole-word abbreviations with their expansions.

    Longer keys win over shorter ones, matching is case-insensitive, and the
    replacement is single-pass: expansions are never re-scanned, so a key
    appearing inside another key's expansion stays as written.
    """
    if not dictionary:
        return text
    for key in dictionary:
        if not key:
            raise CorpusError("abbreviation keys must be non-empty")
    keys = sorted(dictionary, key=len, reverse=True)
    lookup = {k.casefold(): v for k, v in dictionary.items()}
    pattern = re.compile(
        r"\b(?:" + "|".join(re.escape(k) for k in keys) + r")\b", re.IGNORECASE
    )
    return pattern.sub(lambda m: lookup[m.group(0).casefold()], text)


@dataclass
class TokenSequence:
    """A tokenized note fitted to a fixed length."""

    tokens: list
    length: int
    pad_token: str


def tokenize_and_fit(text: str, max_len: int = DEFAULT_MAX_LEN, pad: str = PAD_TOKEN) -> TokenSequence:
    """Lowercase whitespace tokenization, truncated or padded to max_len."""
    if max_len < 1:
        raise CorpusError("max_len must be >= 1")
    tokens = text.lower().split()
    if len(tokens) > max_len:
        tokens = tokens[:max_len]
    else:
        tokens = tokens + [pad] * (max_len - len(tokens))
    return TokenSequence(tokens=tokens, length=max_len, pad_token=pad)


@dataclass
class ClassFrequencyTable:
    """Classes sorted by frequency, with the class-to-rank mapping."""

    entries: list  # (class id, frequency), frequency non-increasing
    rank_of: dict  # class id -> 1-based rank

    def frequencies(self) -> list:
        return [f for _, f in self.entries]

    def class_at(self, rank: int) -> str:
        return self.entries[rank - 1][0]

    def __len__(self) -> int:
        return len(self.entries)


def build_frequency_table(dataset: Dataset) -> ClassFrequencyTable:
    """Count how many records carry each code and rank codes by count.

    Ties are broken by ascending class id so the ranking is deterministic.
    """
    if not dataset.records:
        raise CorpusError("cannot build a frequency table from an empty dataset")
    counts = Counter()
    for rec in dataset.records:
        counts.update(rec.codes)
    entries = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    rank_of = {cid: rank for rank, (cid, _) in enumerate(entries, start=1)}
    return ClassFrequencyTable(entries=entries, rank_of=rank_of)


def write_frequency_table(table: ClassFrequencyTable, path) -> None:
    lines = ["class_id,frequency"]
    for cid, freq in table.entries:
        lines.append(f"{cid},{freq}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_frequency_table(path) -> ClassFrequencyTable:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "class_id,frequency":
        raise CorpusError(f"{path}: not a frequency table file")
    entries = []
    for line in lines[1:]:
        if not line:
            continue
        cid, _, freq = line.rpartition(",")
        entries.append((cid, int(freq)))
    rank_of = {cid: rank for rank, (cid, _) in enumerate(entries, start=1)}
    return ClassFrequencyTable(entries=entries, rank_of=rank_of)


@dataclass
class ThresholdReport:
    """What a frequency-threshold pass removed."""

    removed_classes: list  # (class id, frequency below the threshold)
    dropped_records: list  # ids of records left with no codes
    passes: int = 1

    def to_dict(self) -> dict:
        return {
            "removed_classes": [[c, f] for c, f in self.removed_classes],
            "dropped_records": list(self.dropped_records),
            "passes": self.passes,
        }

    def to_text(self) -> str:
        lines = [
            f"classes removed {len(self.removed_classes)}",
            f"records dropped {len(self.dropped_records)}",
            f"passes          {self.passes}",
        ]
        return "\n".join(lines) + "\n"


def apply_frequency_threshold(
    dataset: Dataset, min_count: int = DEFAULT_MIN_COUNT, iterate: bool = False
) -> tuple[Dataset, ThresholdReport]:
    """Remove codes rarer than min_count, then records left with no codes.

    One pass by default.  Dropping emptied records can push surviving codes
    below min_count, so the result is not necessarily a fixpoint; pass
    iterate=True to repeat the pass until it is.
    """
    if min_count < 1:
        raise CorpusError("min_count must be >= 1")
    current = dataset
    removed_all = []
    dropped_all = []
    passes = 0
    while True:
        passes += 1
        counts = Counter()
        for rec in current.records:
            counts.update(rec.codes)
        removed = sorted((c, f) for c, f in counts.items() if f < min_count)
        if not removed:
            break
        removed_all.extend(removed)
        removed_ids = {c for c, _ in removed}
        kept_records = []
        for rec in current.records:
            codes = rec.codes - removed_ids
            if codes:
                kept_records.append(rec.copy_with_codes(codes))
            else:
                dropped_all.append(rec.id)
        universe = set()
        for rec in kept_records:
            universe.update(rec.codes)
        current = Dataset(records=kept_records, class_universe=universe)
        if not iterate:
            break
    report = ThresholdReport(removed_classes=removed_all, dropped_records=dropped_all, passes=passes)
    return current, report
