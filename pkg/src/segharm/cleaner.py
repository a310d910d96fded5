"""Label cleaning by pooled-embedding cosine similarity.

A note's 512 hidden-state rows are pooled twice, into 64 means of 8
consecutive rows and 32 means of 16, and each candidate code is scored by
the best cosine between its description embedding and any pooled row.  Codes
scoring at or below the threshold are removed from the record.  Embedding
files store 32-bit floats; all arithmetic runs in 64-bit so scores are
reproducible across platforms.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Record

EMBEDDING_MAGIC = b"SGHE"
EMBEDDING_VERSION = 1
_HEADER_BYTES = 24  # magic + u32 version + u64 rows + u64 dim
NOTE_ROWS = 512
GROUP_A = 8
GROUP_B = 16
DEFAULT_THRESHOLD = 0.55


class EmbeddingError(ValueError):
    """Raised for malformed embedding matrices or files."""


@dataclass
class EmbeddingMatrix:
    """A row-major matrix of embeddings, stored as 32-bit floats."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise EmbeddingError("embedding matrix must be 2-d with at least one row and column")
        if not np.all(np.isfinite(arr)):
            raise EmbeddingError("embedding matrix contains non-finite values")
        self.values = arr

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def as_float64(self) -> np.ndarray:
        return self.values.astype(np.float64)


def write_embeddings(matrix: EmbeddingMatrix, path) -> None:
    """Write an embedding matrix in the binary SGHE layout.

    Magic "SGHE", u32 version, u64 rows, u64 dim, all little-endian, then
    rows x dim IEEE-754 binary32 values in row-major order.
    """
    header = EMBEDDING_MAGIC + struct.pack("<IQQ", EMBEDDING_VERSION, matrix.rows, matrix.dim)
    Path(path).write_bytes(header + matrix.values.astype("<f4").tobytes(order="C"))


def read_embeddings(path) -> EmbeddingMatrix:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER_BYTES or blob[:4] != EMBEDDING_MAGIC:
        raise EmbeddingError(f"{path}: not an embedding file (bad magic)")
    version, rows, dim = struct.unpack_from("<IQQ", blob, 4)
    if version != EMBEDDING_VERSION:
        raise EmbeddingError(f"{path}: unsupported embedding file version {version}")
    expected = _HEADER_BYTES + rows * dim * 4
    if len(blob) != expected:
        raise EmbeddingError(f"{path}: expected {expected} bytes, found {len(blob)}")
    values = np.frombuffer(blob, dtype="<f4", offset=_HEADER_BYTES).reshape(rows, dim)
    return EmbeddingMatrix(values=values.copy())


def cosine(u, v) -> float:
    """Cosine similarity between two vectors, computed in 64-bit."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise EmbeddingError("cosine needs two vectors of equal dimension")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise EmbeddingError("cosine is undefined for a zero-norm vector")
    return float(np.dot(u, v) / (nu * nv))


def pool_groups(hidden: EmbeddingMatrix, group_size: int) -> EmbeddingMatrix:
    """Mean-pool consecutive row groups of the given size."""
    if group_size < 1 or hidden.rows % group_size != 0:
        raise EmbeddingError(f"{hidden.rows} rows do not divide into groups of {group_size}")
    values = hidden.as_float64().reshape(hidden.rows // group_size, group_size, hidden.dim)
    return EmbeddingMatrix(values=values.mean(axis=1))


@dataclass
class PooledSets:
    """The two pooled views of one note: 64 means of 8 and 32 means of 16."""

    set_a: EmbeddingMatrix
    set_b: EmbeddingMatrix


def build_pooled_sets(note_hidden: EmbeddingMatrix) -> PooledSets:
    if note_hidden.rows != NOTE_ROWS:
        raise EmbeddingError(f"note embedding must have {NOTE_ROWS} rows, found {note_hidden.rows}")
    return PooledSets(
        set_a=pool_groups(note_hidden, GROUP_A),
        set_b=pool_groups(note_hidden, GROUP_B),
    )


def description_embedding(desc: EmbeddingMatrix) -> np.ndarray:
    """Mean of a description's embedding rows.

    Under cosine scoring the mean and the sum give identical results, since
    they differ by a positive scale.
    """
    return desc.as_float64().mean(axis=0)


def similarity_score(pooled: PooledSets, desc_vec) -> float:
    """Best cosine between the description vector and any pooled row."""
    desc = np.asarray(desc_vec, dtype=np.float64)
    rows = np.vstack([pooled.set_a.as_float64(), pooled.set_b.as_float64()])
    if desc.ndim != 1 or rows.shape[1] != desc.shape[0]:
        raise EmbeddingError("description vector dimension does not match the pooled rows")
    dn = np.linalg.norm(desc)
    rn = np.linalg.norm(rows, axis=1)
    if dn == 0.0 or np.any(rn == 0.0):
        raise EmbeddingError("cosine is undefined for a zero-norm vector")
    return float(np.max(rows @ desc / (rn * dn)))


@dataclass
class CleanReport:
    """Per-code similarity scores and keep decisions for one record."""

    record_id: str
    rows: list  # (class id, score, kept)

    def kept_codes(self) -> set:
        return {code for code, _, kept in self.rows if kept}


def clean_labels(
    record: Record,
    note_hidden: EmbeddingMatrix,
    code_desc_embeddings: dict,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[Record, CleanReport]:
    """Keep only the record's codes scoring strictly above the threshold.

    Every code needs a description embedding; a missing one raises
    :class:`EmbeddingError` naming the code.  Codes are scored in sorted
    order so the report layout is deterministic.
    """
    pooled = build_pooled_sets(note_hidden)
    rows = []
    kept = set()
    for code in sorted(record.codes):
        desc = code_desc_embeddings.get(code)
        if desc is None:
            raise EmbeddingError(f"no description embedding for code {code!r}")
        score = similarity_score(pooled, description_embedding(desc))
        keep = score > threshold
        rows.append((code, score, keep))
        if keep:
            kept.add(code)
    return record.copy_with_codes(kept), CleanReport(record_id=record.id, rows=rows)


def read_embedding_manifest(path) -> tuple[dict, dict]:
    """Load a JSON manifest mapping record ids and class ids to SGHE files.

    Layout: {"notes": {record_id: path}, "codes": {class_id: path}}.
    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise EmbeddingError(f"{path}: malformed manifest: {exc}") from exc
    if not isinstance(data, dict):
        raise EmbeddingError(f"{path}: manifest must be a JSON object")
    base = path.parent

    def resolve(mapping):
        out = {}
        for key, rel in mapping.items():
            p = Path(rel)
            out[key] = str(p if p.is_absolute() else base / p)
        return out

    return resolve(data.get("notes", {})), resolve(data.get("codes", {}))
