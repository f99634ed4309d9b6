"""Gradient-descent demo: pull circle predictions onto ground truth through
Hungarian matching, comparing gCIoU, plain cIoU and L1 objectives.

Parameters live in normalized coordinates. Every step re-matches, evaluates
the matched loss, and takes one fixed-size gradient step on the matched
predictions; unmatched predictions stay put.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DivergedLoss, NonDifferentiablePoint
from .geometry import ciou, gciou, grad_ciou, grad_gciou
from .matching import GroundTruth, LossConfig, Prediction, hungarian, l1_circle, match_cost_matrix
from .oracle import finite_diff_grad
from .types import Circle

MIN_RADIUS = 1e-6
LOSS_KINDS = ("gciou", "ciou", "l1")


def loss_config_for(kind: str, base: LossConfig = LossConfig()) -> LossConfig:
    """``gciou`` keeps the configured weights; ``ciou`` drops the L1 term;
    ``l1`` drops the overlap term."""
    if kind == "gciou":
        return base
    if kind == "ciou":
        return replace(base, lambda_c=0.0)
    if kind == "l1":
        return replace(base, lambda_gciou=0.0)
    raise ValueError(f"unknown loss {kind!r}; choose from {LOSS_KINDS}")


def _overlap(kind: str):
    return ciou if kind == "ciou" else gciou


def pair_loss(kind: str, gt: Circle, pred: Circle, cfg: LossConfig) -> float:
    overlap = 0.0 if cfg.lambda_gciou == 0 else cfg.lambda_gciou * (1.0 - _overlap(kind)(gt, pred))
    return overlap + cfg.lambda_c * l1_circle(gt, pred)


def pair_grad(kind: str, gt: Circle, pred: Circle, cfg: LossConfig) -> np.ndarray:
    """Gradient of :func:`pair_loss` with respect to the prediction."""
    g = cfg.lambda_c * np.sign(pred.as_array() - gt.as_array())
    if cfg.lambda_gciou:
        analytic = grad_ciou if kind == "ciou" else grad_gciou
        try:
            d_overlap = analytic(pred, gt)
        except NonDifferentiablePoint:
            fn = _overlap(kind)
            d_overlap = finite_diff_grad(lambda v: fn(Circle(v[0], v[1], max(v[2], MIN_RADIUS)), gt), pred.as_array())
        g = g - cfg.lambda_gciou * d_overlap
    return g


def initial_predictions(gts: Sequence[Circle], radius: float = 0.02, side: int = 6) -> list[Circle]:
    """Grid of small circles, dropping any that touch a ground truth."""
    out = []
    for i in range(side):
        for j in range(side):
            c = Circle((j + 0.5) / side, (i + 0.5) / side, radius)
            if all(math.hypot(c.x - g.x, c.y - g.y) > c.r + g.r for g in gts):
                out.append(c)
    return out


@dataclass
class OptimizeResult:
    loss: str
    lr: float
    losses: list = field(default_factory=list)
    mean_ciou: list = field(default_factory=list)
    final: list = field(default_factory=list)

    @property
    def final_mean_ciou(self) -> float:
        return self.mean_ciou[-1] if self.mean_ciou else 0.0

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "lr": self.lr,
            "steps": len(self.losses) - 1,
            "final_mean_ciou": self.final_mean_ciou,
            "final_loss": self.losses[-1] if self.losses else 0.0,
            "per_step": [{"step": k, "loss": l, "mean_ciou": c} for k, (l, c) in enumerate(zip(self.losses, self.mean_ciou))],
            "predictions": [[c.x, c.y, c.r] for c in self.final],
        }


def _matched(kind: str, gts: Sequence[Circle], preds: Sequence[Circle], cfg: LossConfig):
    wrapped = [Prediction(p, 0.5) for p in preds]
    targets = [GroundTruth(g) for g in gts]
    cost = match_cost_matrix(wrapped, targets, cfg, lambda c, chat, cfg_: pair_loss(kind, c, chat, cfg_))
    return hungarian(cost)


def optimize_circles(gts: Sequence[Circle], preds: Sequence[Circle], loss: str = "gciou", steps: int = 2000,
                     lr: float = 2e-5, cfg: LossConfig = LossConfig()) -> OptimizeResult:
    """Plain gradient descent with re-matching at every step.

    ``losses`` and ``mean_ciou`` have ``steps + 1`` entries: one before each
    update and one for the final state. Radii are floored at ``MIN_RADIUS``.
    """
    cfg = loss_config_for(loss, cfg)
    params = np.array([p.as_array() for p in preds], dtype=np.float64)
    result = OptimizeResult(loss=loss, lr=lr)
    for step in range(steps + 1):
        current = [Circle.from_array(p) for p in params]
        if not gts:
            result.losses.append(0.0)
            result.mean_ciou.append(1.0)
            break
        assignment = _matched(loss, gts, current, cfg)
        total = 0.0
        overlap = 0.0
        grads = np.zeros_like(params)
        for g, p in assignment:
            total += pair_loss(loss, gts[g], current[p], cfg)
            overlap += ciou(gts[g], current[p])
            if step < steps:
                grads[p] = pair_grad(loss, gts[g], current[p], cfg)
        if not math.isfinite(total):
            raise DivergedLoss(f"loss became {total} at step {step}")
        result.losses.append(total)
        result.mean_ciou.append(overlap / len(gts))
        if step < steps:
            with np.errstate(over="ignore", invalid="ignore"):
                params -= lr * grads
            params[:, 2] = np.maximum(params[:, 2], MIN_RADIUS)
            if not np.all(np.isfinite(params)):
                raise DivergedLoss(f"parameters became non-finite at step {step}")
    result.final = [Circle.from_array(p) for p in params]
    return result
