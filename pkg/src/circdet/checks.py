"""Oracle-backed self-checks run by ``circdet check``.

Each suite returns :class:`CheckResult` rows whose ``margin`` is positive
when the check passes (distance to its failure threshold). ``sabotage``
flips one sign inside every suite so the harness can prove it detects
faults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import attention as att
from .errors import NonDifferentiablePoint
from .geometry import ciou, gciou, grad_gciou, intersection_area
from .matching import GroundTruth, LossConfig, Prediction, circle_loss, focal_loss, hungarian, match_cost_matrix
from .oracle import brute_force_assignment, finite_diff_grad, mc_gciou, mc_intersection_area, splitmix64
from .types import Circle


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.suite}.{self.name}: margin={self.margin:.3e} {self.detail}".rstrip()


def random_circle_pairs(rng: np.random.Generator, n: int) -> list[tuple[Circle, Circle]]:
    """Pairs in the unit square with radii in [0.05, 0.3]; mixes disjoint,
    overlapping and nested configurations."""
    xy = rng.uniform(0.0, 1.0, size=(n, 2, 2))
    r = rng.uniform(0.05, 0.3, size=(n, 2))
    return [(Circle(xy[k, 0, 0], xy[k, 0, 1], r[k, 0]), Circle(xy[k, 1, 0], xy[k, 1, 1], r[k, 1])) for k in range(n)]


def gradient_rel_error(a: Circle, b: Circle, h: float = 1e-6, flip: bool = False) -> float:
    analytic = grad_gciou(a, b)
    if flip:
        analytic = analytic * np.array([-1.0, 1.0, 1.0])
    numeric = finite_diff_grad(lambda v: gciou(Circle(*v), b), a.as_array(), h)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12))


def _result(suite: str, name: str, margin: float, detail: str = "") -> CheckResult:
    return CheckResult(suite, name, margin >= 0, margin, detail)


def geom_suite(seed: int = 0, trials: int = 50, sabotage: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(splitmix64(seed, 1))
    pairs = random_circle_pairs(rng, max(trials, 1))
    out = []

    sym = max(max(abs(ciou(a, b) - ciou(b, a)), abs(gciou(a, b) - gciou(b, a)),
                  abs(intersection_area(a, b) - intersection_area(b, a))) for a, b in pairs)
    out.append(_result("geom", "symmetry", 1e-12 - sym, f"max_diff={sym:.2e}"))

    slack = min(min(ciou(a, b), 1 - ciou(a, b), gciou(a, b) + 1, ciou(a, b) - gciou(a, b) + 1e-15) for a, b in pairs)
    out.append(_result("geom", "bounds", slack))

    n_mc = min(trials, 20)
    z_i = z_g = 0.0
    for k, (a, b) in enumerate(pairs[:n_mc]):
        est, se = mc_intersection_area(a, b, 200_000, splitmix64(seed, 100 + k))
        diff = abs(intersection_area(a, b) - est)
        z_i = max(z_i, diff / se if se > 0 else (0.0 if diff == 0 else math.inf))
        est, se = mc_gciou(a, b, 200_000, splitmix64(seed, 200 + k))
        diff = abs(gciou(a, b) - est)
        z_g = max(z_g, diff / se if se > 0 else (0.0 if diff == 0 else math.inf))
    out.append(_result("geom", "mc_intersection", 4.0 - z_i, f"max_z={z_i:.2f}"))
    out.append(_result("geom", "mc_gciou", 4.0 - z_g, f"max_z={z_g:.2f}"))

    worst = 0.0
    checked = 0
    for a, b in pairs:
        try:
            err = gradient_rel_error(a, b, flip=sabotage)
        except NonDifferentiablePoint:
            continue
        if sabotage and abs(grad_gciou(a, b)[0]) < 1e-9:
            continue
        checked += 1
        worst = max(worst, err)
    out.append(_result("geom", "grad_vs_fd", 1e-5 - worst, f"max_rel_err={worst:.2e} pairs={checked}"))
    return out


def match_suite(seed: int = 0, trials: int = 50, sabotage: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(splitmix64(seed, 2))
    sign = -1.0 if sabotage else 1.0
    mismatches = 0
    for k in range(max(trials, 1)):
        rows = int(rng.integers(1, 7))
        cols = int(rng.integers(rows, 7))
        if k % 3 == 0:
            cost = rng.integers(0, 3, size=(rows, cols)).astype(float)
        else:
            cost = rng.uniform(0, 1, size=(rows, cols))
        if hungarian(sign * cost) != brute_force_assignment(cost):
            mismatches += 1
    out = [_result("match", "hungarian_vs_brute_force", -float(mismatches), f"mismatches={mismatches}")]

    cfg = LossConfig()
    preds = [Prediction(Circle(*rng.uniform(0.2, 0.8, 2), rng.uniform(0.02, 0.1)), rng.uniform(0.05, 0.95)) for _ in range(8)]
    gts = [GroundTruth(Circle(*rng.uniform(0.2, 0.8, 2), rng.uniform(0.02, 0.1))) for _ in range(5)]
    cost = match_cost_matrix(preds, gts, cfg)
    recomposed = np.array([[cfg.lambda_focal_match * focal_loss(p.class_prob, True, cfg) + circle_loss(g.circle, p.circle, cfg)
                            for p in preds] for g in gts])
    err = float(np.max(np.abs(cost - recomposed)))
    out.append(_result("match", "cost_recomposition", 1e-12 - err, f"max_err={err:.2e}"))
    return out


def attn_suite(seed: int = 0, trials: int = 50, sabotage: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(splitmix64(seed, 3))
    dim, heads, points = 8, 2, 4
    out = []

    worst = 0.0
    for _ in range(max(trials, 1)):
        q = att.CircleQuery(rng.normal(size=dim), Circle(*rng.uniform(0.05, 0.95, 2), rng.uniform(0.02, 0.5)))
        key = rng.uniform(0, 1, 2)
        s = rng.uniform(0.1, 5.0)
        unit = att.modulated_attention(key, q, q.anchor.r, dim)
        scaled = att.modulated_attention(key, q, s * q.anchor.r, dim)
        expect = (-s if sabotage else s) * unit
        worst = max(worst, abs(scaled - expect) / max(abs(expect), 1e-300))
    out.append(_result("attn", "modulation_linear", 4 * np.finfo(float).eps - worst, f"max_rel={worst:.2e}"))

    lin = 0.0
    center = 0.0
    for _ in range(max(trials, 1)):
        h, w = int(rng.integers(4, 12)), int(rng.integers(4, 12))
        f1 = att.FeatureGrid(rng.normal(size=(h, w, dim)))
        f2 = att.FeatureGrid(rng.normal(size=(h, w, dim)))
        a, b = rng.normal(size=2)
        q = att.CircleQuery(rng.normal(size=dim), Circle(*rng.uniform(0.05, 0.95, 2), rng.uniform(0.02, 0.5)))
        dr, dth = att.cda_reference_init("cda-r", heads, points, int(rng.integers(1 << 31)))
        params = att.DeformableParams(rng.normal(size=(heads, dim, dim // heads)), rng.normal(size=(heads, dim // heads, dim)),
                                      np.full((heads, points), 1.0 / points), dr, dth)
        r_ref = rng.uniform(0.01, 0.99)
        lhs = att.circle_deformable_attention(q, params, r_ref, att.FeatureGrid(a * f1.data + b * f2.data))
        rhs = a * att.circle_deformable_attention(q, params, r_ref, f1) + b * att.circle_deformable_attention(q, params, r_ref, f2)
        lin = max(lin, float(np.max(np.abs(lhs - rhs))))
        zero = att.DeformableParams(params.value_proj, params.output_proj, params.attn, np.zeros_like(dr), dth)
        cx, cy = att.anchor_center_pixels(q.anchor, h, w)
        ref = sum(att.bilinear_sample(f1, cx, cy) @ params.value_proj[m] @ params.output_proj[m] for m in range(heads))
        center = max(center, float(np.max(np.abs(att.circle_deformable_attention(q, zero, r_ref, f1) - ref))))
    out.append(_result("attn", "deformable_linear_in_F", 1e-9 - lin, f"max_err={lin:.2e}"))
    out.append(_result("attn", "deformable_zero_offset_center", 1e-9 - center, f"max_err={center:.2e}"))

    n = max(trials, 1) * 100
    anchors = rng.uniform(0.01, 0.99, size=(n, 3))
    r_ref = rng.uniform(0.0, 1.0, size=(n, 1, 1))
    dr, dth = att.cda_reference_init("cda-r", heads, points, seed)
    h, w = 32, 48
    violations = 0
    for k in range(n):
        anchor = Circle(*anchors[k])
        pts = att.deformable_sample_points(anchor, r_ref[k], dr, dth, h, w)
        cx, cy = att.anchor_center_pixels(anchor, h, w)
        dist = np.hypot(pts[..., 0] - cx, pts[..., 1] - cy)
        violations += int(np.sum(dist > r_ref[k, 0, 0] * min(h, w) * (1 + 1e-12)))
    out.append(_result("attn", "sampling_locus", -float(violations), f"violations={violations} configs={n}"))

    a = rng.uniform(0.01, 0.99, size=(n, 3))
    ident = float(np.max(np.abs(att.refine_anchors(a, 0.0) - a)))
    moved = att.refine_anchors(a, rng.uniform(-10, 10, size=(n, 3)))
    inside = bool(np.all((moved > 0) & (moved < 1)))
    out.append(_result("attn", "refine_identity", 1e-9 - ident, f"max_err={ident:.2e}"))
    out.append(_result("attn", "refine_open_unit_cube", 0.0 if inside else -1.0))
    return out


SUITES = {"geom": geom_suite, "match": match_suite, "attn": attn_suite}


def run_suites(names: list[str], seed: int = 0, trials: int = 50, sabotage: bool = False) -> list[CheckResult]:
    results = []
    for name in names:
        results.extend(SUITES[name](seed, trials, sabotage))
    return results
