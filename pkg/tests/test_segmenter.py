"""Tests for frequency segmentation, label projection, and rate accounting."""

import numpy as np
import pytest

from segharm.corpus import Dataset, Record
from segharm.segmenter import (
    RateTable,
    Segmentation,
    SegmentationError,
    beta_sh,
    beta_sh_from_counts,
    positive_counts,
    positives_per_segment,
    project_label,
    read_rate_table,
    read_segmentation,
    segment_all,
    segment_tail,
    write_rate_table,
    write_segmentation,
)


def _power_law_freqs(rng, n, exponent=None):
    exponent = exponent if exponent is not None else float(rng.uniform(0.5, 2.0))
    base = float(rng.uniform(100, 5000))
    freqs = base * np.arange(1, n + 1, dtype=np.float64) ** (-exponent)
    freqs = np.floor(freqs) + 1.0
    return np.sort(freqs)[::-1]


class TestSegmentTail:
    def test_uniform_list_starts_at_zero(self):
        assert segment_tail([10, 10, 10], 0.5) == 0

    def test_head_excluded(self):
        # sigma of the full list is ~39.4 > 4 but sigma([10, 9, 8]) is ~0.82
        assert segment_tail([100, 10, 9, 8], 0.5) == 1

    def test_singleton(self):
        assert segment_tail([8], 0.5) == 0

    def test_returned_suffix_satisfies_the_bound(self):
        rng = np.random.default_rng(42)
        for trial in range(200):
            n = int(rng.integers(1, 200))
            freqs = _power_law_freqs(rng, n)
            for eta in (0.25, 0.5, 0.75, 1.0):
                i = segment_tail(freqs, eta)
                assert 0 <= i < n
                assert np.std(freqs[i:]) <= eta * freqs[-1] + 1e-12

    def test_empty_rejected(self):
        with pytest.raises(SegmentationError):
            segment_tail([], 0.5)

    def test_unsorted_rejected(self):
        with pytest.raises(SegmentationError):
            segment_tail([1, 5, 3], 0.5)

    def test_eta_out_of_range_rejected(self):
        for eta in (0.0, -0.5, 1.5):
            with pytest.raises(SegmentationError):
                segment_tail([5, 4], eta)


class TestSegmentAll:
    def test_two_segment_example(self):
        seg = segment_all([100, 10, 9, 8], 0.5)
        assert seg.segments == [(1, 1), (2, 4)]

    def test_uniform_gives_one_segment(self):
        seg = segment_all([7, 7, 7, 7], 0.5)
        assert seg.segments == [(1, 4)]

    def test_segments_cover_ranks_without_gaps(self):
        rng = np.random.default_rng(42)
        for trial in range(100):
            n = int(rng.integers(1, 300))
            freqs = _power_law_freqs(rng, n)
            seg = segment_all(freqs, float(rng.uniform(0.1, 1.0)))
            assert seg.segments[0][0] == 1
            assert seg.segments[-1][1] == n
            for (_, e0), (s1, _) in zip(seg.segments, seg.segments[1:]):
                assert s1 == e0 + 1
            assert sum(seg.class_counts) == n

    def test_every_segment_satisfies_the_sigma_bound(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            n = int(rng.integers(2, 300))
            freqs = _power_law_freqs(rng, n)
            eta = float(rng.uniform(0.1, 1.0))
            seg = segment_all(freqs, eta)
            for (start, end), sig in zip(seg.segments, seg.sigma):
                chunk = freqs[start - 1 : end]
                assert sig == pytest.approx(np.std(chunk), abs=1e-12)
                assert sig <= eta * chunk[-1] + 1e-12

    def test_offsets_are_cumulative_counts(self):
        seg = segment_all([100, 10, 9, 8], 0.5)
        assert seg.offsets == [0, 1]
        assert seg.num_classes == 4

    def test_rank_to_segment_mapping(self):
        seg = segment_all([100, 10, 9, 8], 0.5)
        mapping = seg.rank_to_segment()
        assert mapping[0] == -1
        assert list(mapping[1:]) == [0, 1, 1, 1]


class TestProjectLabel:
    def test_projection_restricts_to_segment_ranks(self):
        seg = Segmentation(eta=0.5, segments=[(1, 2), (3, 6)], sigma=[0.0, 0.0])
        y = np.array([1, 0, 0, 0, 1, 0])
        lab = project_label(y, seg, 1)
        assert lab.segment_index == 1
        np.testing.assert_array_equal(lab.bits, [0, 0, 1, 0])

    def test_all_zero_is_a_valid_negative(self):
        seg = Segmentation(eta=0.5, segments=[(1, 3)], sigma=[0.0])
        np.testing.assert_array_equal(project_label(np.zeros(3), seg, 0).bits, [0, 0, 0])

    def test_all_ones(self):
        seg = Segmentation(eta=0.5, segments=[(1, 2), (3, 4)], sigma=[0.0, 0.0])
        np.testing.assert_array_equal(project_label(np.ones(4), seg, 1).bits, [1, 1])

    def test_concatenation_reconstructs_the_label(self):
        rng = np.random.default_rng(42)
        for trial in range(50):
            freqs = _power_law_freqs(rng, int(rng.integers(2, 60)))
            seg = segment_all(freqs, 0.5)
            y = rng.integers(0, 2, size=seg.num_classes)
            parts = [project_label(y, seg, r).bits for r in range(seg.num_segments)]
            np.testing.assert_array_equal(np.concatenate(parts), y)

    def test_bad_segment_index_rejected(self):
        seg = Segmentation(eta=0.5, segments=[(1, 2)], sigma=[0.0])
        with pytest.raises(SegmentationError):
            project_label(np.zeros(2), seg, 1)

    def test_wrong_length_rejected(self):
        seg = Segmentation(eta=0.5, segments=[(1, 2)], sigma=[0.0])
        with pytest.raises(SegmentationError):
            project_label(np.zeros(3), seg, 0)


def _dataset(code_lists):
    records = [Record(id=f"r{i}", codes=set(c), text="t") for i, c in enumerate(code_lists)]
    universe = set()
    for c in code_lists:
        universe.update(c)
    return Dataset(records=records, class_universe=universe)


class TestPositiveCounts:
    def test_records_counted_once_per_touched_segment(self):
        seg = Segmentation(eta=0.5, segments=[(1, 1), (2, 2)], sigma=[0.0, 0.0])
        rank_of = {"A": 1, "B": 2}
        ds = _dataset([{"A"}, {"A"}, {"A", "B"}])
        table = positive_counts(ds, seg, rank_of)
        np.testing.assert_array_equal(table.positive_counts, [3, 1])
        assert table.rates[0, 1] == pytest.approx(3.0)
        assert table.rates[1, 0] == pytest.approx(1.0 / 3.0)

    def test_diagonal_is_one(self):
        seg = Segmentation(eta=0.5, segments=[(1, 1), (2, 2)], sigma=[0.0, 0.0])
        table = positive_counts(_dataset([{"A", "B"}]), seg, {"A": 1, "B": 2})
        np.testing.assert_allclose(np.diag(table.rates), 1.0)

    def test_all_segments_touched_gives_unit_rates(self):
        seg = Segmentation(eta=0.5, segments=[(1, 1), (2, 2)], sigma=[0.0, 0.0])
        table = positive_counts(_dataset([{"A", "B"}, {"A", "B"}]), seg, {"A": 1, "B": 2})
        np.testing.assert_allclose(table.rates, 1.0)

    def test_empty_segment_is_degenerate(self):
        seg = Segmentation(eta=0.5, segments=[(1, 1), (2, 2)], sigma=[0.0, 0.0])
        with pytest.raises(SegmentationError, match="degenerate"):
            positive_counts(_dataset([{"A"}]), seg, {"A": 1, "B": 2})

    def test_unknown_code_named(self):
        seg = Segmentation(eta=0.5, segments=[(1, 1)], sigma=[0.0])
        with pytest.raises(SegmentationError, match="MYSTERY"):
            positive_counts(_dataset([{"MYSTERY"}]), seg, {"A": 1})


class TestBetaSH:
    def test_single_segment_positive_reduces_to_its_rate(self):
        rates = np.array([[1.0, 2.0], [0.5, 1.0]])
        assert beta_sh_from_counts([3, 0], rates, 1) == pytest.approx(2.0)
        assert beta_sh_from_counts([0, 2], rates, 1) == pytest.approx(1.0)

    def test_worked_harmonic_mean_case(self):
        # two positives at rate 2 and one at rate 4: 3 / (2/2 + 1/4) = 2.4,
        # and every quantity involved is exact in binary floating point
        n_per_segment = np.array([1, 2, 4], dtype=np.float64)
        rates = n_per_segment[:, None] / n_per_segment[None, :]
        assert beta_sh_from_counts([0, 2, 1], rates, 0) == 2.4

    def test_all_unit_rates_give_one(self):
        rates = np.ones((3, 3))
        assert beta_sh_from_counts([1, 2, 3], rates, 1) == pytest.approx(1.0)

    def test_zero_positives_rejected(self):
        with pytest.raises(SegmentationError):
            beta_sh_from_counts([0, 0], np.ones((2, 2)), 0)

    def test_full_label_wrapper(self):
        seg = Segmentation(eta=0.5, segments=[(1, 2), (3, 4)], sigma=[0.0, 0.0])
        rates = RateTable(
            positive_counts=np.array([4, 2]),
            rates=np.array([[1.0, 2.0], [0.5, 1.0]]),
        )
        y = np.array([1, 1, 1, 0])
        # n = [2, 1]; rates vs segment 1 are [2.0, 1.0]: 3 / (2/2 + 1/1) = 1.5
        assert beta_sh(y, seg, rates, 1) == pytest.approx(1.5)

    def test_positive_and_finite(self):
        rng = np.random.default_rng(42)
        for trial in range(300):
            S = int(rng.integers(1, 6))
            counts_pos = rng.integers(1, 1000, size=S).astype(np.float64)
            rates = counts_pos[:, None] / counts_pos[None, :]
            n = rng.integers(0, 4, size=S)
            if n.sum() == 0:
                n[int(rng.integers(0, S))] = 1
            r = int(rng.integers(0, S))
            value = beta_sh_from_counts(n, rates, r)
            assert np.isfinite(value)
            assert value > 0

    def test_bounded_by_arithmetic_mean(self):
        rng = np.random.default_rng(7)
        for trial in range(300):
            S = int(rng.integers(1, 6))
            counts_pos = rng.integers(1, 1000, size=S).astype(np.float64)
            rates = counts_pos[:, None] / counts_pos[None, :]
            n = rng.integers(0, 4, size=S)
            if n.sum() == 0:
                n[int(rng.integers(0, S))] = 1
            r = int(rng.integers(0, S))
            multiset = np.repeat(rates[:, r], n)
            harm = beta_sh_from_counts(n, rates, r)
            assert harm <= multiset.mean() + 1e-12

    def test_positives_per_segment(self):
        seg = Segmentation(eta=0.5, segments=[(1, 2), (3, 5)], sigma=[0.0, 0.0])
        np.testing.assert_array_equal(
            positives_per_segment([1, 0, 1, 1, 0], seg), [1, 2]
        )


class TestSegmentationFiles:
    def test_segmentation_roundtrip(self, tmp_path):
        freqs = [100.0, 10.0, 9.0, 8.0]
        seg = segment_all(freqs, 0.5)
        path = tmp_path / "seg.tsv"
        write_segmentation(seg, freqs, path)
        back = read_segmentation(path)
        assert back.segments == seg.segments
        assert back.eta == seg.eta
        assert back.sigma == pytest.approx(seg.sigma, abs=0.0)

    def test_segmentation_file_layout(self, tmp_path):
        freqs = [100.0, 10.0, 9.0, 8.0]
        seg = segment_all(freqs, 0.5)
        path = tmp_path / "seg.tsv"
        write_segmentation(seg, freqs, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "# eta 0.5"
        assert lines[1] == "start_rank\tend_rank\tclass_count\tmin_frequency\tsigma"
        assert lines[2].split("\t")[:4] == ["1", "1", "1", "100"]

    def test_rate_table_roundtrip_is_exact(self, tmp_path):
        counts = np.array([37, 11, 3])
        rates = counts[:, None].astype(np.float64) / counts[None, :].astype(np.float64)
        table = RateTable(positive_counts=counts, rates=rates)
        path = tmp_path / "rates.csv"
        write_rate_table(table, path)
        back = read_rate_table(path)
        np.testing.assert_array_equal(back.positive_counts, counts)
        np.testing.assert_array_equal(back.rates, rates)

    def test_rate_table_has_header(self, tmp_path):
        table = RateTable(positive_counts=np.array([2]), rates=np.ones((1, 1)))
        path = tmp_path / "rates.csv"
        write_rate_table(table, path)
        assert path.read_text().splitlines()[0] == "segment,positive_count,rate_vs_0"

    def test_bad_files_rejected(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("nope\n")
        with pytest.raises(SegmentationError):
            read_segmentation(path)
        with pytest.raises(SegmentationError):
            read_rate_table(path)
