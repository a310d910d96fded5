"""Deterministic synthetic long-tailed multi-label datasets.

Class marginals follow a power law over the class index, features are noisy
unit-norm mixtures of fixed class prototype directions, and every draw flows
from one seeded PCG64 stream, so the same spec always regenerates the same
bytes.  PCG64 is pinned by name because its output is defined independently
of platform and numpy build.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, Record

MAX_ATTEMPTS = 20


class SynthError(ValueError):
    """Raised for infeasible generator specs."""


def exponent_for_ratio(num_classes: int, head_tail_ratio: float) -> float:
    """Power-law exponent putting the target ratio between the extreme marginals.

    With weights c**-a for c = 1..C, the first-to-last ratio is C**a, so
    a = log(ratio) / log(C).
    """
    if num_classes < 2:
        raise SynthError("need at least two classes")
    if head_tail_ratio < 1.0:
        raise SynthError("head_tail_ratio must be >= 1")
    return math.log(head_tail_ratio) / math.log(num_classes)


@dataclass
class SynthSpec:
    """Shape of one synthetic dataset; equal specs generate equal bytes."""

    num_classes: int
    num_samples: int
    feature_dim: int = 32
    head_tail_ratio: float = 100.0
    power_exponent: float | None = None  # derived from head_tail_ratio when None
    labels_per_sample: float = 2.0
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise SynthError("num_classes must be >= 2")
        if self.num_samples < self.num_classes:
            raise SynthError("num_samples must be >= num_classes so every class can occur")
        if self.feature_dim < 1:
            raise SynthError("feature_dim must be >= 1")
        if self.labels_per_sample < 1.0:
            raise SynthError("labels_per_sample must be >= 1")
        if self.noise_std < 0.0:
            raise SynthError("noise_std must be >= 0")
        if self.power_exponent is None:
            self.power_exponent = exponent_for_ratio(self.num_classes, self.head_tail_ratio)
        if self.power_exponent <= 0.0:
            raise SynthError("power_exponent must be > 0")


def class_ids(num_classes: int) -> list:
    width = max(3, len(str(num_classes)))
    return [f"C{c:0{width}d}" for c in range(1, num_classes + 1)]


def generate(spec: SynthSpec) -> Dataset:
    """Generate a dataset in which every class occurs at least once.

    If a draw leaves some class unused, the whole dataset is regenerated
    from the next derived seed (seed + 1, seed + 2, ...), so the output is
    still a pure function of the spec.
    """
    for attempt in range(MAX_ATTEMPTS):
        dataset = _generate_once(spec, spec.seed + attempt)
        counts = Counter()
        for rec in dataset.records:
            counts.update(rec.codes)
        if len(counts) == spec.num_classes:
            return dataset
    raise SynthError(
        "could not cover every class in "
        f"{MAX_ATTEMPTS} attempts; raise num_samples or lower head_tail_ratio"
    )


def _generate_once(spec: SynthSpec, seed: int) -> Dataset:
    rng = np.random.Generator(np.random.PCG64(seed))
    C, N, d = spec.num_classes, spec.num_samples, spec.feature_dim

    prototypes = rng.normal(size=(C, d))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)

    weights = np.arange(1, C + 1, dtype=np.float64) ** -spec.power_exponent
    marginals = weights / weights.sum()

    ids = class_ids(C)
    rec_width = max(6, len(str(N)))
    lam = spec.labels_per_sample - 1.0
    records = []
    universe = set()
    for k in range(N):
        count = min(1 + int(rng.poisson(lam)), C)
        chosen = rng.choice(C, size=count, replace=False, p=marginals, shuffle=False)
        direction = prototypes[chosen].sum(axis=0)
        norm = np.linalg.norm(direction)
        if norm > 0.0:
            direction = direction / norm
        features = direction
        if spec.noise_std > 0.0:
            features = features + rng.normal(scale=spec.noise_std, size=d)
        codes = {ids[int(c)] for c in chosen}
        universe.update(codes)
        records.append(Record(id=f"R{k:0{rec_width}d}", codes=codes, features=features))
    return Dataset(records=records, class_universe=universe)
