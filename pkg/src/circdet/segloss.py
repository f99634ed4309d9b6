"""Mask head, dice/BCE mask losses and circle RoI ground-truth extraction."""

from __future__ import annotations

import numpy as np

from .errors import EmptyRegion, ShapeError
from .types import Circle, validate_circle

MASK_SIZE = 28
MASK_EPS = 1e-6
DICE_SMOOTH = 1.0


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def mask_head(f, ffn1, ffn2) -> np.ndarray:
    """28x28 mask probabilities from a decoder embedding.

    ``ffn1`` maps D -> D and ``ffn2`` maps D -> 784; both are
    :class:`~circdet.attention.MlpWeights`. The residual sum goes through the
    second FFN and a sigmoid.
    """
    f = np.asarray(f, dtype=np.float64)
    if ffn1.in_dim != f.size or ffn1.out_dim != f.size:
        raise ShapeError(f"ffn1 must map {f.size} -> {f.size}, got {ffn1.in_dim} -> {ffn1.out_dim}")
    if ffn2.in_dim != f.size or ffn2.out_dim != MASK_SIZE * MASK_SIZE:
        raise ShapeError(f"ffn2 must map {f.size} -> {MASK_SIZE * MASK_SIZE}")
    logits = ffn2(ffn1(f) + f)
    return _sigmoid(logits).reshape(MASK_SIZE, MASK_SIZE)


def _pair(m, mhat) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(m, dtype=np.float64)
    mhat = np.asarray(mhat, dtype=np.float64)
    if m.shape != mhat.shape:
        raise ShapeError(f"mask shapes differ: {m.shape} vs {mhat.shape}")
    return m, mhat


def dice_loss(m, mhat) -> float:
    m, mhat = _pair(m, mhat)
    inter = float(np.sum(m * mhat))
    return 1.0 - (2.0 * inter + DICE_SMOOTH) / (float(m.sum()) + float(mhat.sum()) + DICE_SMOOTH)


def bce_loss(m, mhat) -> float:
    m, mhat = _pair(m, mhat)
    p = np.clip(mhat, MASK_EPS, 1.0 - MASK_EPS)
    return float(np.mean(-(m * np.log(p) + (1.0 - m) * np.log(1.0 - p))))


def seg_loss(m, mhat, cfg=None) -> float:
    """``lambda_dice * dice + lambda_bce * bce`` with :class:`LossConfig` weights."""
    if cfg is None:
        from .matching import LossConfig

        cfg = LossConfig()
    return cfg.lambda_dice * dice_loss(m, mhat) + cfg.lambda_bce * bce_loss(m, mhat)


def _bilinear_mask(mask: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Sample at continuous coordinates where pixel (i, j) covers [j, j+1) x [i, i+1).

    Points outside the image read as zero; inside, the four pixel centers
    around the point are blended with border clamping.
    """
    h, w = mask.shape
    inside = (px >= 0) & (px <= w) & (py >= 0) & (py <= h)
    u = np.clip(px - 0.5, 0.0, w - 1.0)
    v = np.clip(py - 0.5, 0.0, h - 1.0)
    j0 = np.floor(u).astype(int)
    i0 = np.floor(v).astype(int)
    j1 = np.minimum(j0 + 1, w - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    fu = u - j0
    fv = v - i0
    top = mask[i0, j0] * (1 - fu) + mask[i0, j1] * fu
    bottom = mask[i1, j0] * (1 - fu) + mask[i1, j1] * fu
    return np.where(inside, top * (1 - fv) + bottom * fv, 0.0)


def circle_roi_crop(full_mask, c: Circle) -> np.ndarray:
    """Resample the bounding square of a normalized circle onto a 28x28 patch.

    The circle is denormalized as ``(x*W, y*H, r*min(H, W))``. Each output
    cell takes one bilinear sample at its bin center.
    """
    validate_circle(c)
    full_mask = np.asarray(full_mask, dtype=np.float64)
    if full_mask.ndim != 2:
        raise ShapeError(f"mask must be 2-D, got shape {full_mask.shape}")
    h, w = full_mask.shape
    cx, cy, r = c.x * w, c.y * h, c.r * min(h, w)
    if cx + r <= 0 or cx - r >= w or cy + r <= 0 or cy - r >= h:
        raise EmptyRegion(f"circle {c} lies outside the {h}x{w} image")
    step = 2.0 * r / MASK_SIZE
    centers = (np.arange(MASK_SIZE) + 0.5) * step
    px = np.broadcast_to(cx - r + centers, (MASK_SIZE, MASK_SIZE))
    py = np.broadcast_to((cy - r + centers)[:, None], (MASK_SIZE, MASK_SIZE))
    return np.clip(_bilinear_mask(full_mask, px, py), 0.0, 1.0)
