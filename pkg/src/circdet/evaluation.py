"""Detection evaluation under circle IoU: greedy matching and COCO-style AP.

Size buckets use the circle area ``pi * r**2`` in pixels: small below
``32**2``, medium in ``[32**2, 96**2)``. Ground truths outside a bucket are
ignored the way COCO ignores them: a prediction that can only match such a
ground truth is dropped, as is an unmatched prediction whose own area falls
outside the bucket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .errors import MissingImage
from .geometry import ciou
from .types import Circle

IOU_THRESHOLDS = np.linspace(0.5, 0.95, 10)
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
AREA_BUCKETS = {
    "all": (0.0, math.inf),
    "small": (0.0, 32.0**2),
    "medium": (32.0**2, 96.0**2),
}


class Detection(NamedTuple):
    circle: Circle
    score: float


def _rank(preds: Sequence[Detection]) -> list[int]:
    """Descending score, then larger radius, then input order."""
    return sorted(range(len(preds)), key=lambda k: (-preds[k].score, -preds[k].circle.r, k))


def _match_image(preds: Sequence[Detection], gts: Sequence[Circle], thresh: float,
                 gt_ignore: Optional[Sequence[bool]] = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-prediction (true positive, matched an ignored ground truth), input order."""
    gt_ignore = [False] * len(gts) if gt_ignore is None else list(gt_ignore)
    iou = np.array([[ciou(p.circle, g) for g in gts] for p in preds]).reshape(len(preds), len(gts))
    used = np.zeros(len(gts), dtype=bool)
    tp = np.zeros(len(preds), dtype=bool)
    hit_ignored = np.zeros(len(preds), dtype=bool)
    for k in _rank(preds):
        for want_ignored in (False, True):
            best, best_iou = -1, thresh
            for g in range(len(gts)):
                if used[g] or gt_ignore[g] != want_ignored:
                    continue
                if iou[k, g] >= best_iou and (best < 0 or iou[k, g] > best_iou):
                    best, best_iou = g, iou[k, g]
            if best >= 0:
                used[best] = True
                tp[k] = not want_ignored
                hit_ignored[k] = want_ignored
                break
    return tp, hit_ignored


def greedy_match(preds: Sequence[Detection], gts: Sequence[Circle], thresh: float) -> list[bool]:
    """True-positive flag per prediction (input order) at a cIoU threshold.

    Predictions are visited by descending score and take the best unused
    ground truth with ``ciou >= thresh``.
    """
    tp, _ = _match_image(preds, gts, thresh)
    return [bool(t) for t in tp]


def average_precision(flags: Sequence[bool], scores: Sequence[float], n_gt: int,
                      radii: Optional[Sequence[float]] = None) -> float:
    """101-point interpolated AP of a ranked list of TP/FP flags.

    The precision envelope is read at recall 0.00, 0.01, ..., 1.00. Returns
    0.0 when there is no ground truth; :func:`ap_summary` records a warning
    for that case.
    """
    if n_gt <= 0:
        return 0.0
    flags = np.asarray(flags, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    radii = np.zeros(len(flags)) if radii is None else np.asarray(radii, dtype=np.float64)
    if len(flags) == 0:
        return 0.0
    order = sorted(range(len(flags)), key=lambda k: (-scores[k], -radii[k], k))
    hits = flags[order].astype(np.float64)
    tp = np.cumsum(hits)
    fp = np.cumsum(1.0 - hits)
    recall = tp / n_gt
    precision = tp / (tp + fp)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    sampled = np.zeros(len(RECALL_POINTS))
    reached = idx < len(envelope)
    sampled[reached] = envelope[idx[reached]]
    return float(np.mean(sampled))


@dataclass
class ApReport:
    AP: float
    AP50: float
    AP75: float
    AP_S: float
    AP_M: float
    per_threshold: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "AP": self.AP, "AP50": self.AP50, "AP75": self.AP75, "AP_S": self.AP_S, "AP_M": self.AP_M,
            "thresholds": [float(t) for t in IOU_THRESHOLDS],
            "per_threshold": {k: list(v) for k, v in self.per_threshold.items()},
            "warnings": list(self.warnings),
        }


def _bucket_ap(preds: Mapping[int, Sequence[Detection]], truths: Mapping[int, Sequence[Circle]],
               thresh: float, area_range: tuple[float, float]) -> tuple[float, int]:
    lo, hi = area_range

    def outside(c: Circle) -> bool:
        a = math.pi * c.r * c.r
        return not (lo <= a < hi)

    flags, scores, radii = [], [], []
    n_gt = 0
    for img, gts in truths.items():
        ignore = [outside(g) for g in gts]
        n_gt += ignore.count(False)
        dets = list(preds.get(img, ()))
        tp, hit_ignored = _match_image(dets, gts, thresh, ignore)
        for det, t, hi_ in zip(dets, tp, hit_ignored):
            if hi_ or (not t and outside(det.circle)):
                continue
            flags.append(bool(t))
            scores.append(det.score)
            radii.append(det.circle.r)
    return average_precision(flags, scores, n_gt, radii), n_gt


def ap_summary(preds: Mapping[int, Sequence], truths: Mapping[int, Sequence[Circle]]) -> ApReport:
    """AP over cIoU thresholds 0.50:0.05:0.95, AP50, AP75, and size-bucket AP.

    ``preds`` maps image id to ``(circle, score)`` pairs, ``truths`` maps image
    id to ground-truth circles, all in pixel units.
    """
    missing = sorted(set(preds) - set(truths))
    if missing:
        raise MissingImage(f"predictions reference unknown images {missing}")
    preds = {img: [Detection(*d) for d in dets] for img, dets in preds.items()}
    per: dict[str, list[float]] = {}
    warnings: list[str] = []
    for name, rng in AREA_BUCKETS.items():
        values = []
        for t in IOU_THRESHOLDS:
            ap, n_gt = _bucket_ap(preds, truths, float(t), rng)
            values.append(ap)
        if n_gt == 0:
            warnings.append(f"no ground truth in bucket {name!r}; its AP is reported as 0")
        per[name] = values
    return ApReport(
        AP=float(np.mean(per["all"])),
        AP50=per["all"][0],
        AP75=per["all"][5],
        AP_S=float(np.mean(per["small"])),
        AP_M=float(np.mean(per["medium"])),
        per_threshold=per,
        warnings=warnings,
    )
