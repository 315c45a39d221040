"""Oriented-rectangle overlap: worked cases, sampling oracle, invariances."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rampmerge.geometry import rect_corners, rects_overlap
from rampmerge.merging import (
    ActionPair,
    EgoState,
    JointState,
    MergeModel,
    NonEgoState,
)


def rect(cx, cy, angle, width=2.0, length=4.0):
    return rect_corners(cx, cy, math.cos(angle), math.sin(angle), width, length)


def containment_oracle(corners_a, corners_b, per_axis=120):
    """Fraction of a dense grid of B's points lying inside A."""
    (ax0, ay0), (ax1, ay1), _, (ax3, ay3) = corners_a
    ea1 = np.array([ax1 - ax0, ay1 - ay0])
    ea2 = np.array([ax3 - ax0, ay3 - ay0])
    b = np.asarray(corners_b)
    origin = b[0]
    e1 = b[1] - b[0]
    e2 = b[3] - b[0]
    u = np.linspace(0.0, 1.0, per_axis)
    uu, vv = np.meshgrid(u, u)
    pts = origin + uu.ravel()[:, None] * e1 + vv.ravel()[:, None] * e2
    rel = pts - np.array([ax0, ay0])
    t1 = rel @ ea1 / (ea1 @ ea1)
    t2 = rel @ ea2 / (ea2 @ ea2)
    inside = (t1 >= 0) & (t1 <= 1) & (t2 >= 0) & (t2 <= 1)
    return inside.mean()


def test_coincident_rectangles_collide():
    assert rects_overlap(rect(0, 0, 0.0), rect(0, 0, 1.1))


def test_separated_beyond_half_diagonals():
    diag = math.hypot(2.0, 4.0)
    assert not rects_overlap(rect(0, 0, 0.3), rect(diag + 0.01, 0, 1.2))


def test_boundary_contact_counts_as_collision():
    # axis-aligned 2x4 rectangles sharing an edge at x = 2
    a = rect_corners(0.0, 0.0, 1.0, 0.0, 2.0, 4.0)
    b = rect_corners(4.0, 0.0, 1.0, 0.0, 2.0, 4.0)
    assert rects_overlap(a, b)
    c = rect_corners(4.0 + 1e-9, 0.0, 1.0, 0.0, 2.0, 4.0)
    assert not rects_overlap(a, c)


def test_matches_containment_oracle_near_contact():
    # 2x4 rectangles at 45 degrees relative heading, centers near contact
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(200):
        angle_a = rng.uniform(0, 2 * math.pi)
        angle_b = angle_a + math.pi / 4
        direction = rng.uniform(0, 2 * math.pi)
        gap = rng.uniform(1.5, 4.5)  # straddles the contact distance
        bx, by = gap * math.cos(direction), gap * math.sin(direction)
        a = rect(0.0, 0.0, angle_a)
        b = rect(bx, by, angle_b)
        frac_ba = containment_oracle(a, b)
        frac_ab = containment_oracle(b, a)
        overlap_area = max(frac_ba, frac_ab) * 8.0
        got = rects_overlap(a, b)
        if got and overlap_area < 5e-3:
            continue  # sliver thinner than the oracle grid; skip
        checked += 1
        assert got == (overlap_area > 0.0), (
            f"SAT={got} oracle_area={overlap_area:.4f} at gap={gap:.3f}"
        )
    assert checked > 150


@settings(max_examples=120, deadline=None)
@given(
    cx=st.floats(-5, 5), cy=st.floats(-5, 5),
    aa=st.floats(0, 6.283), ab=st.floats(0, 6.283),
    shift=st.floats(-40, 40), rot=st.floats(0, 6.283),
)
def test_symmetry_and_rigid_invariance(cx, cy, aa, ab, shift, rot):
    a = rect(0.0, 0.0, aa)
    b = rect(cx, cy, ab, width=1.4, length=3.2)
    base = rects_overlap(a, b)
    assert rects_overlap(b, a) == base

    cos_r, sin_r = math.cos(rot), math.sin(rot)

    def transform(corners):
        return tuple(
            (x * cos_r - y * sin_r + shift, x * sin_r + y * cos_r - 2 * shift)
            for x, y in corners
        )

    assert rects_overlap(transform(a), transform(b)) == base


# -- model-level checks ----------------------------------------------------------


@pytest.fixture(scope="module")
def model(merge200_map):
    return MergeModel(merge200_map)


def test_model_collision_respects_lateral_gap(model):
    ego = EgoState(p=100.0, d=0.0, v=20.0, lane=1)   # global y = -3.5
    beside = NonEgoState(p=300.0, v=20.0, lane=2)    # same x, y = 0
    state = JointState(ego=ego, others=(beside,))
    assert not model.collision_check(state, ActionPair(0.0, 0.0))
    # straddling ego closes the lateral gap
    near = JointState(ego=EgoState(p=100.0, d=1.8, v=20.0, lane=1),
                      others=(beside,))
    assert model.collision_check(near, ActionPair(0.0, 0.0))


def test_model_collision_ignores_departed(model):
    ego = EgoState(p=100.0, d=0.0, v=20.0, lane=1)
    ghost = NonEgoState(p=300.0, v=20.0, lane=2, departed=True)
    state = JointState(ego=EgoState(p=100.0, d=1.8, v=20.0, lane=1),
                       others=(ghost,))
    assert not model.collision_check(state, ActionPair(0.0, 0.0))


def test_heading_rotation_affects_collision(model):
    # a rotated ego sweeps a wider lateral footprint
    ego = EgoState(p=100.0, d=1.1, v=20.0, lane=1)
    beside = NonEgoState(p=300.0, v=20.0, lane=2)
    state = JointState(ego=ego, others=(beside,))
    assert not model.collision_check(state, ActionPair(0.0, 0.0))
    assert model.collision_check(state, ActionPair(0.0, math.radians(25.0)))
