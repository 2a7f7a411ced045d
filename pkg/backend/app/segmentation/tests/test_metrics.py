"""Tests for frame metrics, segment F1 and edge-distance accuracy."""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from app.segmentation.exceptions import ConfigError, SequenceError
from app.segmentation.metrics import (
    THRESHOLDS,
    asf1,
    edge_distance_accuracy,
    edge_distances,
    frame_metrics,
    masf1,
    plot_edge_accuracy,
    plot_sf1_curves,
    segment_report,
    sf1,
    sf1_curve,
    threshold_grid,
)
from app.segmentation.timeline import (
    SkillClass,
    Timeline,
    build_timeline,
    labels_to_segments,
    segments_to_labels,
)

PL, NONE = SkillClass.PL, SkillClass.NONE


def random_timeline(rng: np.random.Generator, n_segments: int, n_classes: int = 4) -> Timeline:
    items, start, previous = [], 0, None
    for _ in range(n_segments):
        label = int(rng.integers(0, n_classes))
        while label == previous:
            label = int(rng.integers(0, n_classes))
        length = int(rng.integers(5, 40))
        items.append((label, start, start + length - 1))
        start += length
        previous = label
    return build_timeline(items, start)


class FrameMetricsTests(SimpleTestCase):
    def test_perfect_prediction(self) -> None:
        labels = [0, 0, 3, 3, 9]
        report = frame_metrics(labels, labels)
        self.assertEqual(report.accuracy, 1.0)
        self.assertEqual(report.macro_f1, 1.0)
        self.assertEqual(int(report.confusion.trace()), 5)

    def test_complementary_prediction(self) -> None:
        report = frame_metrics([1, 0] * 5, [0, 1] * 5)
        self.assertEqual(report.accuracy, 0.0)
        self.assertEqual(report.macro_f1, 0.0)

    def test_partial_accuracy(self) -> None:
        gt = [0] * 10
        pred = [0] * 7 + [1] * 3
        report = frame_metrics(pred, gt)
        self.assertAlmostEqual(report.accuracy, 0.7)
        self.assertEqual(report.confusion[0, 1], 3)

    def test_length_mismatch(self) -> None:
        with self.assertRaisesMessage(SequenceError, "length mismatch"):
            frame_metrics([0, 0], [0])

    def test_report_table(self) -> None:
        frame = frame_metrics([0, 9], [0, 9]).to_frame()
        self.assertEqual(list(frame.columns), ["class", "precision", "recall", "f1", "support"])
        self.assertEqual(frame["class"].tolist()[-1], "NONE")


class SegmentF1Tests(SimpleTestCase):
    def setUp(self) -> None:
        # PL overlaps its ground truth with IoU 0.5; NONE with IoU 10/15.
        self.pred = build_timeline([(PL, 0, 4), (NONE, 5, 19)], 20)
        self.gt = build_timeline([(PL, 0, 9), (NONE, 10, 19)], 20)

    def test_threshold_grid(self) -> None:
        self.assertEqual(THRESHOLDS.size, 100)
        self.assertAlmostEqual(THRESHOLDS[0], 0.01)
        self.assertEqual(THRESHOLDS[-1], 1.0)
        np.testing.assert_allclose(threshold_grid(4), [0.25, 0.5, 0.75, 1.0])

    def test_half_overlap(self) -> None:
        self.assertEqual(sf1(self.pred, self.gt, PL, 0.4), 1.0)
        self.assertEqual(sf1(self.pred, self.gt, PL, 0.5), 0.0)
        self.assertEqual(sf1(self.pred, self.gt, PL, 0.6), 0.0)
        self.assertAlmostEqual(asf1(self.pred, self.gt, PL), 0.49, delta=0.01)

    def test_mean_over_present_classes(self) -> None:
        report = segment_report(self.pred, self.gt)
        self.assertEqual(sorted(report.asf1), ["NONE", "PL"])
        self.assertAlmostEqual(report.asf1["NONE"], 0.66)
        self.assertAlmostEqual(report.masf1, (0.49 + 0.66) / 2)
        self.assertIsNone(asf1(self.pred, self.gt, SkillClass.BL))
        row = report.to_row("raw")
        self.assertEqual(row["method"], "raw")
        self.assertIsNone(row["BL"])

    def test_perfect_prediction_scores_one_everywhere(self) -> None:
        timeline = random_timeline(np.random.default_rng(3), 12)
        curves = sf1_curve(timeline, timeline)
        self.assertTrue((curves.to_numpy() == 1.0).all())
        self.assertEqual(sf1(timeline, timeline, int(timeline.segments[0].label), 1.0), 1.0)
        self.assertEqual(masf1(timeline, timeline), 1.0)

    def test_disjoint_classes_score_zero(self) -> None:
        pred = build_timeline([(0, 0, 49)], 50)
        gt = build_timeline([(1, 0, 49)], 50)
        self.assertEqual(asf1(pred, gt, 0), 0.0)
        self.assertEqual(asf1(pred, gt, 1), 0.0)
        self.assertEqual(masf1(pred, gt), 0.0)

    def test_matching_is_one_to_one(self) -> None:
        # Two predicted PL pieces inside one ground truth PL: one match at most.
        pred = build_timeline([(PL, 0, 9), (NONE, 10, 10), (PL, 11, 19)], 20)
        gt = build_timeline([(PL, 0, 19)], 20)
        self.assertAlmostEqual(sf1(pred, gt, PL, 0.1), 2 * 0.5 * 1.0 / 1.5)

    def test_segments_are_pooled_over_videos(self) -> None:
        perfect = build_timeline([(PL, 0, 9)], 10)
        missed = build_timeline([(NONE, 0, 9)], 10)
        pred = {"a": perfect, "b": missed}
        gt = {"a": perfect, "b": perfect}
        # one hit out of one predicted and two ground truth segments
        self.assertAlmostEqual(sf1(pred, gt, PL, 0.5), 2 * 1.0 * 0.5 / 1.5)

    def test_curves_never_increase(self) -> None:
        rng = np.random.default_rng(21)
        for trial in range(30):
            gt = random_timeline(rng, 10)
            labels = segments_to_labels(gt).labels.copy()
            flip = rng.random(labels.size) < 0.1
            labels[flip] = rng.integers(0, 4, size=int(flip.sum()))
            pred = labels_to_segments(labels)
            curves = sf1_curve(pred, gt)
            with self.subTest(trial=trial):
                self.assertTrue((np.diff(curves.to_numpy(), axis=0) <= 1e-12).all())

    def test_threshold_outside_range(self) -> None:
        with self.assertRaises(ConfigError):
            sf1(self.pred, self.gt, PL, 0.0)

    def test_missing_prediction_for_video(self) -> None:
        with self.assertRaisesMessage(SequenceError, "no prediction for video b"):
            sf1({"a": self.pred}, {"a": self.gt, "b": self.gt}, PL, 0.5)

    def test_frame_count_mismatch(self) -> None:
        with self.assertRaises(SequenceError):
            sf1(build_timeline([(PL, 0, 9)], 10), self.gt, PL, 0.5)


class EdgeDistanceTests(SimpleTestCase):
    def test_distances_inside_segments(self) -> None:
        gt = build_timeline([(0, 0, 4), (1, 5, 5), (2, 6, 9)], 10)
        self.assertEqual(edge_distances(gt).tolist(), [0, 1, 2, 1, 0, 0, 0, 1, 1, 0])

    def test_perfect_prediction(self) -> None:
        gt = random_timeline(np.random.default_rng(2), 6)
        table = edge_distance_accuracy(segments_to_labels(gt), gt)
        self.assertTrue((table["accuracy"] == 1.0).all())
        self.assertEqual(int(table["frames"].sum()), gt.n_frames)

    def test_errors_only_at_boundaries(self) -> None:
        gt = build_timeline([(0, 0, 19), (1, 20, 39)], 40)
        pred = segments_to_labels(gt).labels.copy()
        pred[[19, 20]] = [1, 0]
        table = edge_distance_accuracy(pred, gt, bin_width=1)
        self.assertEqual(table.loc[0, "distance_from"], 0)
        self.assertAlmostEqual(table.loc[0, "accuracy"], 0.5)
        self.assertTrue((table["accuracy"].iloc[1:] == 1.0).all())

    def test_single_frame_segment_is_at_distance_zero(self) -> None:
        gt = build_timeline([(3, 0, 0)], 1)
        table = edge_distance_accuracy([3], gt)
        self.assertEqual(table["bin"].tolist(), [0])
        self.assertEqual(table["frames"].tolist(), [1])

    def test_bins_pool_videos(self) -> None:
        gt = build_timeline([(0, 0, 11)], 12)
        table = edge_distance_accuracy([[0] * 12, [1] * 12], [gt, gt], bin_width=5)
        self.assertEqual(table["bin"].tolist(), [0, 1])
        self.assertEqual(table["frames"].tolist(), [20, 4])
        self.assertEqual(table["accuracy"].tolist(), [0.5, 0.5])

    def test_sequence_count_mismatch(self) -> None:
        gt = build_timeline([(0, 0, 3)], 4)
        with self.assertRaisesMessage(SequenceError, "1 predicted sequences for 2 ground truth timelines"):
            edge_distance_accuracy([[0] * 4], [gt, gt])

    def test_bad_bin_width(self) -> None:
        gt = build_timeline([(0, 0, 3)], 4)
        with self.assertRaises(ConfigError):
            edge_distance_accuracy([0] * 4, gt, bin_width=0)


class PlotTests(SimpleTestCase):
    def setUp(self) -> None:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.root = Path(tmp.name)

    def test_plots_are_written(self) -> None:
        gt = random_timeline(np.random.default_rng(8), 5)
        plot_sf1_curves({"raw": sf1_curve(gt, gt)}, self.root / "sf1.svg")
        plot_edge_accuracy(edge_distance_accuracy(segments_to_labels(gt), gt), self.root / "edge.svg")
        for name in ("sf1.svg", "edge.svg"):
            with self.subTest(name=name):
                self.assertIn("<svg", (self.root / name).read_text())
