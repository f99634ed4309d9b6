"""Tests for the gradient-descent demo harness."""

import numpy as np
import pytest

from circdet.errors import DivergedLoss
from circdet.geometry import ciou
from circdet.matching import LossConfig
from circdet.optimize import initial_predictions, loss_config_for, optimize_circles, pair_grad, pair_loss
from circdet.oracle import finite_diff_grad
from circdet.synth import GenConfig, generate_scene
from circdet.types import Circle


@pytest.fixture(scope="module")
def scene():
    return generate_scene(GenConfig(seed=0), 0)[0].normalized_circles()


class TestLossConfigFor:
    def test_kinds(self):
        assert loss_config_for("gciou") == LossConfig()
        assert loss_config_for("ciou").lambda_c == 0.0
        assert loss_config_for("l1").lambda_gciou == 0.0

    def test_unknown(self):
        with pytest.raises(ValueError):
            loss_config_for("iou")


class TestPairGradient:
    @pytest.mark.parametrize("kind", ["gciou", "ciou", "l1"])
    def test_matches_finite_differences(self, kind):
        rng = np.random.default_rng(2)
        cfg = loss_config_for(kind)
        for _ in range(50):
            gt = Circle(*rng.uniform(0.3, 0.7, 2), rng.uniform(0.05, 0.1))
            pred = Circle(gt.x + rng.uniform(-0.1, 0.1), gt.y + rng.uniform(-0.1, 0.1), rng.uniform(0.05, 0.1))
            fd = finite_diff_grad(lambda v: pair_loss(kind, gt, Circle(*v), cfg), pred.as_array())
            assert np.max(np.abs(pair_grad(kind, gt, pred, cfg) - fd)) < 1e-5

    def test_ciou_has_no_signal_when_disjoint(self):
        cfg = loss_config_for("ciou")
        assert np.all(pair_grad("ciou", Circle(0.2, 0.2, 0.05), Circle(0.8, 0.8, 0.05), cfg) == 0)


class TestInitialPredictions:
    def test_disjoint_from_truth(self, scene):
        preds = initial_predictions(scene)
        assert 5 <= len(preds) <= 36
        assert all(ciou(g, p) == 0 for g in scene for p in preds)


class TestOptimizeCircles:
    def test_contrast(self, scene):
        start = initial_predictions(scene)
        good = optimize_circles(scene, start, "gciou")
        flat = optimize_circles(scene, start, "ciou")
        assert good.final_mean_ciou > 0.95
        assert flat.final_mean_ciou < 0.05
        assert len(good.losses) == 2001 and good.losses[-1] < good.losses[0]

    def test_no_ground_truth(self):
        result = optimize_circles([], [Circle(0.5, 0.5, 0.1)], steps=10)
        assert result.losses == [0.0] and result.final == [Circle(0.5, 0.5, 0.1)]

    def test_divergence_is_reported(self, scene):
        with pytest.raises(DivergedLoss):
            optimize_circles(scene, initial_predictions(scene), "gciou", steps=3, lr=1e308)

    def test_report_dict(self, scene):
        d = optimize_circles(scene, initial_predictions(scene), "l1", steps=4).to_dict()
        assert d["steps"] == 4 and len(d["per_step"]) == 5 and len(d["predictions"]) >= 5

    @pytest.mark.xfail(strict=True, reason=(
        "fixed-step gradient descent on a loss with L1 kinks settles into a 2-cycle around the optimum; "
        "roughly half of the late steps raise the loss at every step size that still converges"))
    def test_loss_monotone_over_final_ninety_percent(self, scene):
        losses = optimize_circles(scene, initial_predictions(scene), "gciou").losses
        tail = np.diff(losses)[len(losses) // 10:]
        assert np.all(tail <= 0)
