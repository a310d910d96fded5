"""Tests for the synthetic long-tailed dataset generator."""

import math

import numpy as np
import pytest

from segharm.corpus import build_frequency_table
from segharm.synth import (
    SynthError,
    SynthSpec,
    _generate_once,
    class_ids,
    exponent_for_ratio,
    generate,
)


class TestExponentForRatio:
    def test_known_value(self):
        assert exponent_for_ratio(60, 100.0) == pytest.approx(
            math.log(100.0) / math.log(60.0), abs=1e-15
        )

    def test_ratio_is_recovered(self):
        """C**a reproduces the requested first-to-last marginal ratio."""
        for C, ratio in [(10, 5.0), (60, 100.0), (500, 1000.0)]:
            a = exponent_for_ratio(C, ratio)
            assert C**a == pytest.approx(ratio, rel=1e-12)

    def test_too_few_classes(self):
        with pytest.raises(SynthError, match="two classes"):
            exponent_for_ratio(1, 100.0)

    def test_ratio_below_one(self):
        with pytest.raises(SynthError, match=">= 1"):
            exponent_for_ratio(10, 0.5)


class TestSynthSpec:
    def test_exponent_derived_from_ratio(self):
        spec = SynthSpec(num_classes=60, num_samples=5000)
        assert spec.power_exponent == exponent_for_ratio(60, 100.0)

    def test_explicit_exponent_kept(self):
        spec = SynthSpec(num_classes=10, num_samples=100, power_exponent=1.25)
        assert spec.power_exponent == 1.25

    def test_uniform_ratio_rejected(self):
        # ratio 1 derives exponent 0, which degenerates to a flat profile
        with pytest.raises(SynthError, match="power_exponent"):
            SynthSpec(num_classes=10, num_samples=100, head_tail_ratio=1.0)

    def test_validation_errors(self):
        with pytest.raises(SynthError, match="num_classes"):
            SynthSpec(num_classes=1, num_samples=100)
        with pytest.raises(SynthError, match="num_samples"):
            SynthSpec(num_classes=10, num_samples=9)
        with pytest.raises(SynthError, match="feature_dim"):
            SynthSpec(num_classes=10, num_samples=100, feature_dim=0)
        with pytest.raises(SynthError, match="labels_per_sample"):
            SynthSpec(num_classes=10, num_samples=100, labels_per_sample=0.5)
        with pytest.raises(SynthError, match="noise_std"):
            SynthSpec(num_classes=10, num_samples=100, noise_std=-0.1)
        with pytest.raises(SynthError, match="power_exponent"):
            SynthSpec(num_classes=10, num_samples=100, power_exponent=-2.0)


class TestClassIds:
    def test_width_three_minimum(self):
        assert class_ids(60)[0] == "C001"
        assert class_ids(60)[-1] == "C060"

    def test_width_grows_with_count(self):
        ids = class_ids(1000)
        assert ids[0] == "C0001"
        assert ids[-1] == "C1000"

    def test_ids_unique_and_sorted(self):
        ids = class_ids(250)
        assert len(set(ids)) == 250
        assert ids == sorted(ids)


class TestGenerate:
    def test_deterministic(self):
        """Equal specs produce identical records, codes, and feature bytes."""
        a = generate(SynthSpec(num_classes=12, num_samples=200, seed=7))
        b = generate(SynthSpec(num_classes=12, num_samples=200, seed=7))
        assert len(a.records) == len(b.records)
        assert a.class_universe == b.class_universe
        for ra, rb in zip(a.records, b.records):
            assert ra.id == rb.id
            assert ra.codes == rb.codes
            assert np.array_equal(ra.features, rb.features)

    def test_seed_changes_output(self):
        a = generate(SynthSpec(num_classes=12, num_samples=200, seed=7))
        b = generate(SynthSpec(num_classes=12, num_samples=200, seed=8))
        assert not np.array_equal(a.records[0].features, b.records[0].features)

    def test_every_class_occurs(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            seed = int(rng.integers(0, 10_000))
            ds = generate(SynthSpec(num_classes=15, num_samples=400, seed=seed))
            seen = {c for rec in ds.records for c in rec.codes}
            assert seen == set(class_ids(15))
            assert ds.class_universe == seen

    def test_retry_recovers_missing_class(self):
        """A first draw that misses a class is retried from the next seed."""
        spec = SynthSpec(num_classes=8, num_samples=40, head_tail_ratio=30.0, seed=6)
        first = {c for rec in _generate_once(spec, spec.seed).records for c in rec.codes}
        assert len(first) < 8
        ds = generate(spec)
        seen = {c for rec in ds.records for c in rec.codes}
        assert seen == set(class_ids(8))

    def test_infeasible_spec_raises(self):
        spec = SynthSpec(num_classes=12, num_samples=12, head_tail_ratio=1e9, seed=0)
        with pytest.raises(SynthError, match="could not cover"):
            generate(spec)

    def test_record_shape(self):
        ds = generate(SynthSpec(num_classes=10, num_samples=120, feature_dim=16, seed=1))
        assert len(ds.records) == 120
        assert ds.records[0].id == "R000000"
        assert ds.records[-1].id == "R000119"
        for rec in ds.records:
            assert rec.features.shape == (16,)
            assert np.all(np.isfinite(rec.features))
            assert 1 <= len(rec.codes) <= 10
            assert rec.codes <= ds.class_universe

    def test_zero_noise_gives_unit_norm_features(self):
        ds = generate(SynthSpec(num_classes=8, num_samples=64, noise_std=0.0, seed=3))
        norms = np.array([np.linalg.norm(rec.features) for rec in ds.records])
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_label_cardinality_tracks_request(self):
        ds = generate(
            SynthSpec(num_classes=30, num_samples=3000, labels_per_sample=3.0, seed=5)
        )
        mean = sum(len(rec.codes) for rec in ds.records) / len(ds.records)
        assert abs(mean - 3.0) < 0.2

    def test_realized_imbalance_near_request(self):
        """The head-to-tail count ratio lands within 2x of the requested ratio."""
        ds = generate(SynthSpec(num_classes=60, num_samples=5000, seed=0))
        freqs = build_frequency_table(ds).frequencies()
        realized = freqs[0] / freqs[-1]
        assert 50.0 <= realized <= 200.0

    def test_frequency_profile_is_long_tailed(self):
        """Head classes dominate: the top decile outweighs the bottom half."""
        ds = generate(SynthSpec(num_classes=40, num_samples=2000, seed=9))
        freqs = build_frequency_table(ds).frequencies()
        top = sum(freqs[:4])
        bottom = sum(freqs[20:])
        assert top > bottom
