"""Smoke tests for the report figures: files appear and are valid PNGs."""

import numpy as np

from segharm.plots import save_frequency_plot, save_loss_curves, save_segment_f1_bars
from segharm.segmenter import Segmentation

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _is_png(path) -> bool:
    return path.read_bytes()[:8] == PNG_MAGIC


class TestFrequencyPlot:
    def test_writes_png(self, tmp_path):
        seg = Segmentation(eta=0.5, segments=[(1, 3), (4, 10)], sigma=[0.0, 0.0])
        path = tmp_path / "profile.png"
        save_frequency_plot(np.linspace(100, 5, 10), seg, path)
        assert _is_png(path)

    def test_single_segment(self, tmp_path):
        seg = Segmentation(eta=1.0, segments=[(1, 4)], sigma=[0.0])
        path = tmp_path / "profile.png"
        save_frequency_plot([9.0, 8.0, 7.0, 6.0], seg, path)
        assert _is_png(path)


class TestLossCurves:
    def test_writes_png(self, tmp_path):
        histories = {
            "segment 0": [(1, 0.7), (2, 0.5), (3, 0.4)],
            "segment 1": [(1, 0.9), (2, 0.6), (3, 0.3)],
        }
        path = tmp_path / "loss.png"
        save_loss_curves(histories, path)
        assert _is_png(path)

    def test_empty_histories_still_render(self, tmp_path):
        path = tmp_path / "loss.png"
        save_loss_curves({"segment 0": []}, path)
        assert _is_png(path)


class TestSegmentBars:
    def test_writes_png(self, tmp_path):
        path = tmp_path / "bars.png"
        save_segment_f1_bars(
            ["Total", "Head", "Tail"],
            {"bce": [0.8, 0.9, 0.2], "sh_focal": [0.82, 0.88, 0.4]},
            path,
        )
        assert _is_png(path)

    def test_no_rows_still_render(self, tmp_path):
        path = tmp_path / "bars.png"
        save_segment_f1_bars(["Total"], {}, path)
        assert _is_png(path)
