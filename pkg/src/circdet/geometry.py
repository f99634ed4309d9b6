"""Closed-form circle geometry: areas, circle IoU, enclosing circle and gCIoU.

All functions are pure and operate on :class:`Circle` values. The same code
serves normalized coordinates (decoder outputs) and pixel coordinates
(evaluation); only ratios of areas are ever returned.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NonDifferentiablePoint
from .types import Circle, validate_circle

# Slack used to pick a geometric branch (disjoint / contained / lens).
# Every closed form is continuous across the branch boundaries, so the
# slack only changes which formula is evaluated, not the value.
CASE_SLACK = 1e-12

# Distance to a kink below which gradients are refused.
SINGULAR_TOL = 1e-9


def center_distance(a: Circle, b: Circle) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def circle_area(c: Circle) -> float:
    validate_circle(c)
    return math.pi * c.r * c.r


def _relation(d: float, ra: float, rb: float) -> str:
    if d >= ra + rb - CASE_SLACK:
        return "disjoint"
    if d <= abs(ra - rb) + CASE_SLACK:
        return "contained"
    return "lens"


def _lens_terms(d: float, ra: float, rb: float) -> tuple[float, float, float]:
    """Half-angles at each center and the chord length of a proper lens."""
    cos_a = (d * d + ra * ra - rb * rb) / (2.0 * d * ra)
    cos_b = (d * d + rb * rb - ra * ra) / (2.0 * d * rb)
    alpha = math.acos(min(1.0, max(-1.0, cos_a)))
    beta = math.acos(min(1.0, max(-1.0, cos_b)))
    k = (-d + ra + rb) * (d + ra - rb) * (d - ra + rb) * (d + ra + rb)
    chord = math.sqrt(max(k, 0.0)) / d
    return alpha, beta, chord


def _intersection(d: float, ra: float, rb: float) -> float:
    rel = _relation(d, ra, rb)
    if rel == "disjoint":
        return 0.0
    if rel == "contained":
        r = min(ra, rb)
        return math.pi * r * r
    alpha, beta, chord = _lens_terms(d, ra, rb)
    return ra * ra * alpha + rb * rb * beta - 0.5 * chord * d


def _overlap_union(d: float, ra: float, rb: float) -> tuple[float, float]:
    """Intersection and union; nested disks use the larger area directly so
    that identical circles give exactly ``inter == union``."""
    if _relation(d, ra, rb) == "contained":
        return math.pi * min(ra, rb) ** 2, math.pi * max(ra, rb) ** 2
    inter = _intersection(d, ra, rb)
    return inter, math.pi * (ra * ra + rb * rb) - inter


def intersection_area(a: Circle, b: Circle) -> float:
    """Area of the overlap of two disks."""
    validate_circle(a)
    validate_circle(b)
    return _intersection(center_distance(a, b), a.r, b.r)


def union_area(a: Circle, b: Circle) -> float:
    validate_circle(a)
    validate_circle(b)
    return _overlap_union(center_distance(a, b), a.r, b.r)[1]


def ciou(a: Circle, b: Circle) -> float:
    """Circle IoU in ``[0, 1]``."""
    validate_circle(a)
    validate_circle(b)
    inter, union = _overlap_union(center_distance(a, b), a.r, b.r)
    return inter / union


def enclosing_circle(a: Circle, b: Circle) -> Circle:
    """Smallest circle containing both disks."""
    validate_circle(a)
    validate_circle(b)
    d = center_distance(a, b)
    big, small = (a, b) if a.r >= b.r else (b, a)
    if _relation(d, a.r, b.r) == "contained":
        return big
    radius = 0.5 * (d + a.r + b.r)
    # midpoint of the two extreme boundary points along the center line
    t = (radius - a.r) / d
    return Circle(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), radius)


def gciou(a: Circle, b: Circle) -> float:
    """Generalized circle IoU in ``(-1, 1]``.

    IoU minus the fraction of the smallest enclosing circle that the union
    leaves uncovered; equals :func:`ciou` when one disk contains the other.
    """
    validate_circle(a)
    validate_circle(b)
    d = center_distance(a, b)
    inter, union = _overlap_union(d, a.r, b.r)
    if _relation(d, a.r, b.r) == "contained":
        return inter / union
    hull = math.pi * (0.5 * (d + a.r + b.r)) ** 2
    return inter / union - max(hull - union, 0.0) / hull


def _check_differentiable(d: float, ra: float, rb: float) -> None:
    if abs(d - (ra + rb)) <= SINGULAR_TOL:
        raise NonDifferentiablePoint(f"tangent circles (d={d}, radii {ra}, {rb})")
    if abs(d - abs(ra - rb)) <= SINGULAR_TOL:
        raise NonDifferentiablePoint(f"internally tangent or coincident circles (d={d}, radii {ra}, {rb})")


def _iou_partials(a: Circle, b: Circle, generalized: bool) -> tuple[float, float, float]:
    """Value and partials w.r.t. center distance and ``a.r``."""
    validate_circle(a)
    validate_circle(b)
    ra, rb = a.r, b.r
    d = center_distance(a, b)
    _check_differentiable(d, ra, rb)
    rel = _relation(d, ra, rb)

    if rel == "disjoint":
        inter, di_dd, di_dr = 0.0, 0.0, 0.0
    elif rel == "contained":
        if ra <= rb:
            inter, di_dd, di_dr = math.pi * ra * ra, 0.0, 2.0 * math.pi * ra
        else:
            inter, di_dd, di_dr = math.pi * rb * rb, 0.0, 0.0
    else:
        alpha, beta, chord = _lens_terms(d, ra, rb)
        inter = ra * ra * alpha + rb * rb * beta - 0.5 * chord * d
        di_dd = -chord
        di_dr = 2.0 * ra * alpha

    union = math.pi * (ra * ra + rb * rb) - inter
    du_dd = -di_dd
    du_dr = 2.0 * math.pi * ra - di_dr

    value = inter / union
    dv_dd = (di_dd * union - inter * du_dd) / (union * union)
    dv_dr = (di_dr * union - inter * du_dr) / (union * union)
    if not generalized:
        return value, dv_dd, dv_dr

    if rel == "contained":
        if ra >= rb:
            hull, dh_dd, dh_dr = math.pi * ra * ra, 0.0, 2.0 * math.pi * ra
        else:
            hull, dh_dd, dh_dr = math.pi * rb * rb, 0.0, 0.0
    else:
        radius = 0.5 * (d + ra + rb)
        hull = math.pi * radius * radius
        dh_dd = dh_dr = math.pi * radius

    # gciou = iou - 1 + union / hull
    value += union / hull - 1.0
    dv_dd += (du_dd * hull - union * dh_dd) / (hull * hull)
    dv_dr += (du_dr * hull - union * dh_dr) / (hull * hull)
    return value, dv_dd, dv_dr


def _to_xyr(a: Circle, b: Circle, dv_dd: float, dv_dr: float) -> np.ndarray:
    d = center_distance(a, b)
    if dv_dd == 0.0:
        return np.array([0.0, 0.0, dv_dr])
    return np.array([dv_dd * (a.x - b.x) / d, dv_dd * (a.y - b.y) / d, dv_dr])


def grad_gciou(a: Circle, b: Circle) -> np.ndarray:
    """Gradient of ``gciou(a, b)`` with respect to ``(a.x, a.y, a.r)``.

    Raises :class:`NonDifferentiablePoint` within ``SINGULAR_TOL`` of external
    tangency or internal tangency (which includes coincident equal circles).
    """
    _, dv_dd, dv_dr = _iou_partials(a, b, generalized=True)
    return _to_xyr(a, b, dv_dd, dv_dr)


def grad_ciou(a: Circle, b: Circle) -> np.ndarray:
    """Gradient of ``ciou(a, b)`` w.r.t. ``a``; identically zero for disjoint pairs."""
    _, dv_dd, dv_dr = _iou_partials(a, b, generalized=False)
    return _to_xyr(a, b, dv_dd, dv_dr)
