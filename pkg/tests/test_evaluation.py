"""Tests for cIoU-based AP evaluation."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from circdet.errors import MissingImage
from circdet.evaluation import IOU_THRESHOLDS, Detection, ap_summary, average_precision, greedy_match
from circdet.fileio import read_annotations, read_predictions
from circdet.synth import GenConfig, generate_scene
from circdet.types import Circle

DATA = Path(__file__).parent / "data"
FIELDS = ("AP", "AP50", "AP75", "AP_S", "AP_M")

# small and medium circles in one scene so every bucket has ground truth
MIXED = GenConfig(height=128, width=128, n_min=6, n_max=8, r_min=10.0, r_max=30.0, seed=3)


def concentric_pair(iou):
    """A prediction whose cIoU with the unit circle is exactly ``iou``."""
    return Circle(0, 0, 1), Circle(0, 0, math.sqrt(iou))


def perfect(truths):
    return {img: [(c, 1.0) for c in circles] for img, circles in truths.items()}


class TestGreedyMatch:
    def test_threshold(self):
        gt, pred = concentric_pair(0.6)
        assert greedy_match([Detection(pred, 0.9)], [gt], 0.5) == [True]
        assert greedy_match([Detection(pred, 0.9)], [gt], 0.75) == [False]

    def test_single_use(self):
        gt, pred = concentric_pair(0.8)
        flags = greedy_match([Detection(pred, 0.8), Detection(gt, 0.9)], [gt], 0.5)
        assert flags == [False, True]

    def test_prefers_best_overlap(self):
        gts = [Circle(0, 0, 1), Circle(0.3, 0, 1)]
        assert greedy_match([Detection(Circle(0.29, 0, 1), 0.5), Detection(Circle(0, 0, 1), 0.4)], gts, 0.5) == [True, True]


class TestAveragePrecision:
    def test_all_true_positive(self):
        assert average_precision([True] * 3, [0.9, 0.8, 0.7], 3) == 1.0

    def test_all_false_positive(self):
        assert average_precision([False] * 3, [0.9, 0.8, 0.7], 3) == 0.0

    def test_tp_fp_tp(self):
        # precision 1 up to recall 0.5 (51 points), then 2/3 up to recall 1 (50 points)
        ap = average_precision([True, False, True], [0.9, 0.8, 0.7], 2)
        assert ap == pytest.approx((51 + 50 * 2 / 3) / 101, abs=1e-12)
        assert ap == pytest.approx(0.834983498, abs=1e-9)

    def test_no_ground_truth(self):
        assert average_precision([False], [0.5], 0) == 0.0

    def test_ranking_uses_scores(self):
        assert average_precision([True, False, True], [0.7, 0.9, 0.8], 2) == pytest.approx(
            average_precision([False, True, True], [0.9, 0.8, 0.7], 2), abs=0)


class TestApSummary:
    def test_toy_fixture(self):
        _, truths = read_annotations(DATA / "toy_gt.json")
        preds = read_predictions(DATA / "toy_pred.json")
        expected = json.loads((DATA / "toy_expected.json").read_text())
        report = ap_summary(preds, truths)
        for key in FIELDS:
            assert abs(getattr(report, key) - expected[key]) <= 1e-9, key
        for bucket, values in expected["per_threshold"].items():
            assert np.max(np.abs(np.array(report.per_threshold[bucket]) - values)) <= 1e-9

    def test_perfect_predictor_on_mixed_scene(self):
        truths = {k: generate_scene(MIXED, k)[0].circles for k in range(3)}
        areas = [math.pi * c.r**2 for cs in truths.values() for c in cs]
        assert min(areas) < 32**2 <= max(areas) < 96**2
        report = ap_summary(perfect(truths), truths)
        assert all(getattr(report, k) == 1.0 for k in FIELDS)
        assert report.warnings == []

    def test_empty_bucket_reports_zero_with_warning(self):
        truth, _ = generate_scene(GenConfig(seed=0), 0)
        report = ap_summary(perfect({0: truth.circles}), {0: truth.circles})
        assert (report.AP, report.AP50, report.AP75, report.AP_S) == (1.0, 1.0, 1.0, 1.0)
        assert report.AP_M == 0.0
        assert any("medium" in w for w in report.warnings)

    def test_empty_predictions(self):
        truths = {k: generate_scene(MIXED, k)[0].circles for k in range(2)}
        report = ap_summary({}, truths)
        assert all(getattr(report, k) == 0.0 for k in FIELDS)

    def test_unknown_image(self):
        with pytest.raises(MissingImage):
            ap_summary({5: [(Circle(1, 1, 1), 0.5)]}, {0: []})

    def noisy(self, seed):
        rng = np.random.default_rng(seed)
        truths = {k: generate_scene(MIXED, k)[0].circles for k in range(3)}
        preds = {}
        for img, circles in truths.items():
            dets = [(Circle(c.x + rng.normal(0, 2), c.y + rng.normal(0, 2), c.r * rng.uniform(0.8, 1.2)),
                     float(rng.uniform())) for c in circles]
            dets += [(Circle(*rng.uniform(20, 100, 2), rng.uniform(5, 25)), float(rng.uniform())) for _ in range(3)]
            preds[img] = dets
        return preds, truths

    def test_monotone_score_transform(self):
        preds, truths = self.noisy(1)
        warped = {img: [(c, math.exp(3 * s) - 7) for c, s in dets] for img, dets in preds.items()}
        a, b = ap_summary(preds, truths), ap_summary(warped, truths)
        assert all(getattr(a, k) == getattr(b, k) for k in FIELDS)

    def test_lower_scored_duplicate(self):
        preds, truths = self.noisy(2)
        base = ap_summary(preds, truths)
        img = next(iter(preds))
        flags = greedy_match([Detection(*d) for d in preds[img]], truths[img], 0.5)
        k = flags.index(True)
        c, s = preds[img][k]
        dup = dict(preds)
        dup[img] = preds[img] + [(c, s * 0.5)]
        assert ap_summary(dup, truths).AP50 <= base.AP50
        new_flags = greedy_match([Detection(*d) for d in dup[img]], truths[img], 0.5)
        assert sum(new_flags) == sum(flags)

    def test_non_increasing_in_threshold(self):
        for seed in range(5):
            preds, truths = self.noisy(seed)
            values = ap_summary(preds, truths).per_threshold["all"]
            assert np.all(np.diff(values) <= 1e-15)

    def test_report_dict(self):
        preds, truths = self.noisy(0)
        d = ap_summary(preds, truths).to_dict()
        assert set(FIELDS) <= set(d) and len(d["thresholds"]) == len(IOU_THRESHOLDS)
        json.dumps(d)
