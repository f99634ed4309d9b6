"""Tests for exact circle geometry and the gCIoU gradient."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circdet.errors import InvalidCircle, NonDifferentiablePoint
from circdet.geometry import (
    circle_area,
    ciou,
    enclosing_circle,
    gciou,
    grad_ciou,
    grad_gciou,
    intersection_area,
    union_area,
)
from circdet.oracle import finite_diff_grad
from circdet.types import Circle

# 2*acos(1/2) - sqrt(3)/2 for unit circles one radius apart
UNIT_LENS = 2.0 * math.pi / 3.0 - math.sqrt(3.0) / 2.0


def lens_reference(d, ra, rb):
    """Textbook lens area, written independently of the library."""
    if d >= ra + rb:
        return 0.0
    if d <= abs(ra - rb):
        return math.pi * min(ra, rb) ** 2
    part1 = ra * ra * math.acos((d * d + ra * ra - rb * rb) / (2 * d * ra))
    part2 = rb * rb * math.acos((d * d + rb * rb - ra * ra) / (2 * d * rb))
    part3 = 0.5 * math.sqrt((-d + ra + rb) * (d + ra - rb) * (d - ra + rb) * (d + ra + rb))
    return part1 + part2 - part3


circles = st.builds(
    Circle,
    st.floats(-5, 5, allow_nan=False),
    st.floats(-5, 5, allow_nan=False),
    st.floats(0.05, 3, allow_nan=False),
)


class TestArea:
    def test_unit_circle(self):
        assert circle_area(Circle(0, 0, 1)) == pytest.approx(math.pi, abs=1e-12)

    def test_scales_with_r_squared(self):
        assert circle_area(Circle(0.3, 0.7, 2)) == pytest.approx(4 * math.pi, abs=1e-12)

    def test_half_radius(self):
        assert circle_area(Circle(0, 0, 0.5)) == pytest.approx(math.pi / 4, abs=1e-12)

    @pytest.mark.parametrize("bad", [Circle(0, 0, 0), Circle(0, 0, -1), Circle(math.nan, 0, 1), Circle(0, math.inf, 1)])
    def test_invalid_rejected(self, bad):
        with pytest.raises(InvalidCircle):
            circle_area(bad)


class TestIntersection:
    def test_disjoint(self):
        assert intersection_area(Circle(0, 0, 1), Circle(3, 0, 1)) == 0.0

    def test_containment_gives_smaller_area(self):
        assert intersection_area(Circle(0, 0, 3), Circle(1, 0, 1)) == pytest.approx(math.pi, abs=1e-12)

    def test_unit_lens(self):
        assert intersection_area(Circle(0, 0, 1), Circle(1, 0, 1)) == pytest.approx(1.228369699, abs=1e-9)
        assert intersection_area(Circle(0, 0, 1), Circle(1, 0, 1)) == pytest.approx(UNIT_LENS, abs=1e-12)

    def test_matches_textbook_formula(self):
        rng = np.random.default_rng(3)
        for _ in range(500):
            a = Circle(*rng.uniform(-1, 1, 2), rng.uniform(0.1, 1))
            b = Circle(*rng.uniform(-1, 1, 2), rng.uniform(0.1, 1))
            d = math.hypot(a.x - b.x, a.y - b.y)
            assert intersection_area(a, b) == pytest.approx(lens_reference(d, a.r, b.r), abs=1e-12)

    def test_union(self):
        a, b = Circle(0, 0, 1), Circle(1, 0, 1)
        assert union_area(a, b) == pytest.approx(2 * math.pi - UNIT_LENS, abs=1e-12)

    def test_tangent_has_zero_overlap(self):
        assert intersection_area(Circle(0, 0, 1), Circle(2, 0, 1)) == 0.0


class TestCiou:
    def test_identical(self):
        c = Circle(0.4, 0.1, 0.7)
        assert ciou(c, c) == 1.0

    def test_disjoint(self):
        assert ciou(Circle(0, 0, 1), Circle(3, 0, 1)) == 0.0

    def test_unit_lens_value(self):
        # 1.228370 / (2*pi - 1.228370), evaluated at full precision
        assert ciou(Circle(0, 0, 1), Circle(1, 0, 1)) == pytest.approx(0.243009794, abs=1e-9)
        assert ciou(Circle(0, 0, 1), Circle(1, 0, 1)) == pytest.approx(UNIT_LENS / (2 * math.pi - UNIT_LENS), abs=1e-12)

    def test_concentric_ratio(self):
        assert ciou(Circle(5, 5, 10), Circle(5, 5, 8.5)) == pytest.approx(0.7225, abs=1e-12)


class TestEnclosingCircle:
    def test_separated(self):
        c = enclosing_circle(Circle(0, 0, 1), Circle(4, 0, 1))
        assert (c.x, c.y, c.r) == pytest.approx((2, 0, 3), abs=1e-12)

    def test_contained(self):
        assert enclosing_circle(Circle(0, 0, 3), Circle(1, 0, 1)) == Circle(0, 0, 3)

    def test_identity(self):
        a = Circle(0.2, -0.3, 0.8)
        assert enclosing_circle(a, a) == a

    @given(circles, circles)
    @settings(max_examples=200, deadline=None)
    def test_contains_both(self, a, b):
        c = enclosing_circle(a, b)
        for x in (a, b):
            assert math.hypot(x.x - c.x, x.y - c.y) + x.r <= c.r + 1e-9

    @given(circles, circles)
    @settings(max_examples=200, deadline=None)
    def test_minimal(self, a, b):
        c = enclosing_circle(a, b)
        d = math.hypot(a.x - b.x, a.y - b.y)
        # any enclosing circle has radius >= max(r_a, r_b, (d + r_a + r_b) / 2)
        assert c.r == pytest.approx(max(a.r, b.r, 0.5 * (d + a.r + b.r)), abs=1e-9)


class TestGciou:
    def test_identical(self):
        c = Circle(1, 2, 3)
        assert gciou(c, c) == 1.0

    def test_tangent(self):
        assert gciou(Circle(0, 0, 1), Circle(2, 0, 1)) == pytest.approx(-0.5, abs=1e-12)

    def test_concentric(self):
        assert gciou(Circle(0, 0, 2), Circle(0, 0, 1)) == pytest.approx(0.25, abs=1e-12)

    def test_decreases_with_distance_while_ciou_is_zero(self):
        ds = np.linspace(2, 10, 200)
        g = [gciou(Circle(0, 0, 1), Circle(d, 0, 1)) for d in ds]
        assert all(ciou(Circle(0, 0, 1), Circle(d, 0, 1)) == 0 for d in ds)
        assert np.all(np.diff(g) < 0)


class TestInvariants:
    @given(circles, circles)
    @settings(max_examples=300, deadline=None)
    def test_symmetry(self, a, b):
        assert abs(ciou(a, b) - ciou(b, a)) < 1e-12
        assert abs(gciou(a, b) - gciou(b, a)) < 1e-12
        assert abs(intersection_area(a, b) - intersection_area(b, a)) < 1e-12

    @given(circles, circles)
    @settings(max_examples=300, deadline=None)
    def test_bounds(self, a, b):
        iou, g = ciou(a, b), gciou(a, b)
        assert 0.0 <= iou <= 1.0
        assert -1.0 < g <= 1.0
        assert g <= iou + 1e-15

    def test_symmetry_many_pairs(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(10_000):
            a = Circle(*rng.uniform(0, 1, 2), rng.uniform(0.02, 0.4))
            b = Circle(*rng.uniform(0, 1, 2), rng.uniform(0.02, 0.4))
            worst = max(worst, abs(ciou(a, b) - ciou(b, a)), abs(gciou(a, b) - gciou(b, a)),
                        abs(intersection_area(a, b) - intersection_area(b, a)))
        assert worst < 1e-12

    @given(circles, circles, st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=200, deadline=None)
    def test_translation(self, a, b, dx, dy):
        a2, b2 = a.translated(dx, dy), b.translated(dx, dy)
        assert abs(ciou(a, b) - ciou(a2, b2)) < 1e-12
        assert abs(gciou(a, b) - gciou(a2, b2)) < 1e-12

    @given(circles, circles, st.floats(0.1, 10))
    @settings(max_examples=200, deadline=None)
    def test_scale(self, a, b, s):
        assert abs(ciou(a, b) - ciou(a.scaled(s), b.scaled(s))) < 1e-9
        assert abs(gciou(a, b) - gciou(a.scaled(s), b.scaled(s))) < 1e-9


class TestGradient:
    def fd(self, fn, a, b):
        return finite_diff_grad(lambda v: fn(Circle(*v), b), a.as_array(), 1e-6)

    def test_frozen_value(self):
        g = grad_gciou(Circle(0.3, 0.4, 0.2), Circle(0.5, 0.35, 0.15))
        assert g == pytest.approx([3.165641856, -0.791410464, 2.290695776], abs=1e-8)

    def test_coincident_circles_are_singular(self):
        a = Circle(0.5, 0.5, 0.2)
        with pytest.raises(NonDifferentiablePoint):
            grad_gciou(a, a)
        # the symmetric difference quotient gives zero in x and y
        assert self.fd(gciou, a, a)[:2] == pytest.approx([0, 0], abs=1e-12)

    def test_concentric_unequal_has_zero_center_gradient(self):
        g = grad_gciou(Circle(0.5, 0.5, 0.2), Circle(0.5, 0.5, 0.3))
        assert g[:2].tolist() == [0.0, 0.0]

    def test_disjoint_pulls_together(self):
        g = grad_gciou(Circle(0, 0, 1), Circle(3, 0, 1))
        assert g[0] > 0
        assert g == pytest.approx(self.fd(gciou, Circle(0, 0, 1), Circle(3, 0, 1)), rel=1e-6)

    def test_ciou_gradient_vanishes_when_disjoint(self):
        assert grad_ciou(Circle(0, 0, 1), Circle(3, 0, 1)).tolist() == [0.0, 0.0, 0.0]

    @pytest.mark.parametrize("b", [Circle(2, 0, 1), Circle(0.5, 0, 0.5), Circle(1e-10, 0, 1)])
    def test_tangencies_raise(self, b):
        with pytest.raises(NonDifferentiablePoint):
            grad_gciou(Circle(0, 0, 1), b)

    def test_seed7_pair_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        a = Circle(*rng.uniform(0, 1, 2), rng.uniform(0.05, 0.3))
        b = Circle(*rng.uniform(0, 1, 2), rng.uniform(0.05, 0.3))
        num = self.fd(gciou, a, b)
        assert np.linalg.norm(grad_gciou(a, b) - num) / np.linalg.norm(num) < 1e-5

    @pytest.mark.parametrize("fn,grad", [(gciou, grad_gciou), (ciou, grad_ciou)])
    def test_all_regimes_match_finite_differences(self, fn, grad):
        cases = [
            (Circle(0.3, 0.4, 0.2), Circle(0.5, 0.35, 0.15)),  # partial overlap
            (Circle(0.5, 0.5, 0.1), Circle(0.52, 0.49, 0.3)),  # a inside b
            (Circle(0.5, 0.5, 0.3), Circle(0.52, 0.49, 0.1)),  # b inside a
            (Circle(0.1, 0.1, 0.05), Circle(0.8, 0.6, 0.1)),  # disjoint
        ]
        for a, b in cases:
            num = self.fd(fn, a, b)
            scale = max(np.linalg.norm(num), 1e-12)
            assert np.linalg.norm(grad(a, b) - num) / scale < 1e-5 or np.linalg.norm(num) < 1e-9
