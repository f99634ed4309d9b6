"""Detection losses and one-to-one set matching for circle predictions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyPredictions, InvalidAssignment, NonFiniteCost, ShapeError
from .geometry import gciou
from .types import Assignment, Circle, validate_circle

PROB_EPS = 1e-6

# Relative tolerance under which two assignment totals count as tied.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.25
    gamma: float = 0.1
    lambda_focal_match: float = 2.0
    lambda_focal_loss: float = 1.0
    lambda_gciou: float = 2.0
    lambda_c: float = 5.0
    lambda_dice: float = 8.0
    lambda_bce: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        for name in ("lambda_focal_match", "lambda_focal_loss", "lambda_gciou", "lambda_c", "lambda_dice", "lambda_bce"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> LossConfig:
        known = {k: float(v) for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Prediction:
    circle: Circle
    class_prob: float
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        validate_circle(self.circle)
        if not 0.0 < self.class_prob < 1.0:
            raise ValueError(f"class_prob must lie in (0, 1), got {self.class_prob}")


@dataclass
class GroundTruth:
    """A target; ``circle`` may be ``None`` for the no-object label."""

    circle: Optional[Circle]
    foreground: bool = True
    mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if self.foreground:
            if self.circle is None:
                raise ValueError("foreground targets need a circle")
            validate_circle(self.circle)


def focal_loss(p: float, positive: bool, cfg: LossConfig = LossConfig()) -> float:
    """Binary focal loss of a foreground probability.

    ``p`` is silently clamped to ``[PROB_EPS, 1 - PROB_EPS]`` before the logs.
    """
    p = min(max(p, PROB_EPS), 1.0 - PROB_EPS)
    if positive:
        return -cfg.alpha * (1.0 - p) ** cfg.gamma * math.log(p)
    return -(1.0 - cfg.alpha) * p**cfg.gamma * math.log(1.0 - p)


def l1_circle(c: Circle, chat: Circle) -> float:
    validate_circle(c)
    validate_circle(chat)
    return abs(c.x - chat.x) + abs(c.y - chat.y) + abs(c.r - chat.r)


def circle_loss(c: Circle, chat: Circle, cfg: LossConfig = LossConfig()) -> float:
    """Weighted ``(1 - gCIoU)`` plus L1 distance between circle parameters."""
    return cfg.lambda_gciou * (1.0 - gciou(c, chat)) + cfg.lambda_c * l1_circle(c, chat)


CircleCost = Callable[[Circle, Circle, LossConfig], float]


def match_cost_matrix(
    preds: Sequence[Prediction],
    gts: Sequence[GroundTruth],
    cfg: LossConfig = LossConfig(),
    circle_cost: CircleCost = circle_loss,
) -> np.ndarray:
    """Pairwise matching cost, ground truths as rows and predictions as columns.

    Callers drop no-object targets first; see :func:`match`.
    """
    if not preds:
        raise EmptyPredictions("matching needs at least one prediction")
    if any(not gt.foreground for gt in gts):
        raise ValueError("no-object targets must be excluded before matching")
    cls_cost = np.array([cfg.lambda_focal_match * focal_loss(p.class_prob, True, cfg) for p in preds])
    cost = np.empty((len(gts), len(preds)))
    for i, gt in enumerate(gts):
        for j, pred in enumerate(preds):
            cost[i, j] = cls_cost[j] + circle_cost(gt.circle, pred.circle, cfg)
    return cost


def _optimal_total(cost: np.ndarray) -> float:
    if cost.shape[0] == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def hungarian(cost) -> Assignment:
    """Minimum-cost assignment of every row to a distinct column.

    Ties between optimal assignments (totals within ``TIE_RTOL``) resolve to
    the lexicographically smallest column sequence, fixing rows one at a time
    and keeping the first column that still admits an optimal completion.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ShapeError(f"cost must be 2-D, got shape {cost.shape}")
    n_rows, n_cols = cost.shape
    if n_rows > n_cols:
        raise ShapeError(f"{n_rows} rows cannot be matched into {n_cols} columns")
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("cost matrix has non-finite entries")
    if n_rows == 0:
        return Assignment(())

    best = _optimal_total(cost)
    tol = TIE_RTOL * max(1.0, abs(best))
    pairs = []
    fixed = 0.0
    free_cols = list(range(n_cols))
    for i in range(n_rows):
        rest = cost[i + 1 :][:, free_cols]
        for pos, j in enumerate(free_cols):
            head = fixed + cost[i, j]
            sub = np.delete(rest, pos, axis=1)
            # cheap bound before solving the residual problem
            if sub.shape[0] and head + sub.min(axis=1).sum() > best + tol:
                continue
            if head + _optimal_total(sub) <= best + tol:
                pairs.append((i, j))
                fixed = head
                free_cols.pop(pos)
                break
        else:  # pragma: no cover - unreachable for finite costs
            raise RuntimeError("lexicographic refinement lost the optimum")
    return Assignment(tuple(pairs))


def match(preds: Sequence[Prediction], gts: Sequence[GroundTruth], cfg: LossConfig = LossConfig(),
          circle_cost: CircleCost = circle_loss) -> Assignment:
    """Match foreground targets to predictions; indices refer to the input lists."""
    fg = [i for i, gt in enumerate(gts) if gt.foreground]
    if not fg:
        return Assignment(())
    cost = match_cost_matrix(preds, [gts[i] for i in fg], cfg, circle_cost)
    local = hungarian(cost)
    return Assignment(tuple((fg[g], p) for g, p in local))


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    focal: float
    circle: float
    seg: float


def total_loss(preds: Sequence[Prediction], gts: Sequence[GroundTruth], assignment: Assignment,
               cfg: LossConfig = LossConfig()) -> LossBreakdown:
    """Training objective after matching, summed (not averaged) over elements.

    Every prediction contributes a focal term: matched ones as positives and
    the rest as negatives. Matched pairs add the circle loss, and the mask
    loss when both sides carry a mask.
    """
    from .segloss import seg_loss

    matched_preds = set()
    for g, p in assignment:
        if g >= len(gts) or p >= len(preds):
            raise InvalidAssignment(f"pair {(g, p)} out of range")
        if not gts[g].foreground:
            raise InvalidAssignment(f"ground truth {g} is a no-object target")
        matched_preds.add(p)

    focal = cfg.lambda_focal_loss * sum(
        focal_loss(pred.class_prob, j in matched_preds, cfg) for j, pred in enumerate(preds)
    )
    circle = 0.0
    seg = 0.0
    for g, p in assignment:
        circle += circle_loss(gts[g].circle, preds[p].circle, cfg)
        if gts[g].mask is not None and preds[p].mask is not None:
            seg += seg_loss(gts[g].mask, preds[p].mask, cfg)
    return LossBreakdown(total=focal + circle + seg, focal=focal, circle=circle, seg=seg)
