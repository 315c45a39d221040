"""Lane geometry: arc-length parameterization, mappings, projection."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rampmerge.geometry import ArcLengthCurve, CurveRangeError, rect_corners
from rampmerge.lanes import (
    MapSchemaError,
    MapValidationError,
    build_lane,
    load_map,
    map_from_dict,
)

from conftest import lane_spec, parallel_map_dict, ramp_map_dict


RNG = np.random.default_rng(20240811)


def polyline_arc_oracle(lane, p_target, n=200001):
    """Locate arc length p_target by dense polyline integration of the curve."""
    s = np.linspace(0.0, lane.length, n)
    pts = lane.curve.positions(s)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg)))
    i = np.searchsorted(cum, p_target)
    i = min(max(i, 1), n - 1)
    frac = (p_target - cum[i - 1]) / (cum[i] - cum[i - 1])
    return pts[i - 1] + frac * (pts[i] - pts[i - 1])


# -- eval_position ------------------------------------------------------------


def test_position_straight(straight_lane):
    assert np.allclose(straight_lane.position(10.0), [10.0, 0.0], atol=1e-9)


def test_position_endpoint(straight_lane):
    end = straight_lane.position(straight_lane.length)
    assert np.allclose(end, [100.0, 0.0], atol=1e-6)


def test_position_quarter_circle(circle_lane_ccw):
    got = circle_lane_ccw.position(25.0)
    expected = np.array([50.0 * math.sin(0.5), 50.0 * (1.0 - math.cos(0.5))])
    assert np.linalg.norm(got - expected) < 1e-3
    oracle = polyline_arc_oracle(circle_lane_ccw, 25.0)
    assert np.linalg.norm(got - oracle) < 1e-3


def test_position_out_of_range(straight_lane):
    with pytest.raises(CurveRangeError):
        straight_lane.position(-1.0)
    with pytest.raises(CurveRangeError):
        straight_lane.position(straight_lane.length + 0.5)


def test_arc_length_parameterization(circle_lane_ccw, clothoid_lane):
    # integrated length between two parameters equals their difference
    for lane in (circle_lane_ccw, clothoid_lane):
        for p1, p2 in [(0.0, lane.length), (3.0, 40.0), (10.0, 11.0), (0.5, 70.0)]:
            s = np.linspace(p1, p2, 20001)
            pts = lane.curve.positions(s)
            measured = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
            assert abs(measured - (p2 - p1)) < 1e-4 * (p2 - p1)


# -- eval_heading --------------------------------------------------------------


def test_heading_straight(straight_lane):
    for p in (0.0, 37.2, 100.0):
        assert np.allclose(straight_lane.heading(p), [1.0, 0.0], atol=1e-12)


def test_heading_unit_norm(circle_lane_ccw, clothoid_lane):
    for lane in (circle_lane_ccw, clothoid_lane):
        for p in RNG.uniform(0.0, lane.length, 1000):
            hx, hy = lane.curve.heading_xy(p)
            assert abs(math.hypot(hx, hy) - 1.0) < 1e-9


def test_heading_rotation_on_circle(circle_lane_ccw):
    # tangent rotated by p / R relative to the initial tangent (1, 0)
    for p in (0.0, 10.0, 25.0, 60.0):
        expected = np.array([math.cos(p / 50.0), math.sin(p / 50.0)])
        assert np.linalg.norm(circle_lane_ccw.heading(p) - expected) < 1e-4


def test_heading_matches_position_difference(circle_lane_ccw, clothoid_lane):
    h = 1e-3
    for lane in (circle_lane_ccw, clothoid_lane):
        for p in RNG.uniform(h, lane.length - h, 50):
            fd = (lane.position(p + h) - lane.position(p - h)) / (2 * h)
            fd /= np.linalg.norm(fd)
            assert np.linalg.norm(fd - lane.heading(p)) < 1e-3


# -- eval_curvature -------------------------------------------------------------


def test_curvature_straight(straight_lane):
    for p in (0.0, 50.0, 100.0):
        assert abs(straight_lane.curvature(p)) < 1e-9


@pytest.mark.parametrize("ccw,sign", [(True, 1.0), (False, -1.0)])
def test_curvature_circle(ccw, sign, circle_lane_ccw, circle_lane_cw):
    lane = circle_lane_ccw if ccw else circle_lane_cw
    for p in (5.0, 25.0, 60.0):
        assert lane.curvature(p) == pytest.approx(sign / 50.0, rel=0.01)


def test_curvature_matches_heading_difference(circle_lane_ccw, clothoid_lane):
    h = 1e-3
    for lane in (circle_lane_ccw, clothoid_lane):
        for p in RNG.uniform(2.0, lane.length - 2.0, 60):
            hp = lane.heading(p + h)
            hm = lane.heading(p - h)
            hd = (hp - hm) / (2 * h)
            hx, hy = lane.heading(p)
            kappa_fd = -hy * hd[0] + hx * hd[1]
            kappa = lane.curvature(p)
            if abs(kappa) > 1e-4:
                assert kappa == pytest.approx(kappa_fd, rel=0.01)


# -- project ---------------------------------------------------------------------


def test_project_on_curve_point(circle_lane_ccw):
    point = circle_lane_ccw.position(37.5)
    assert circle_lane_ccw.project(point) == pytest.approx(37.5, abs=1e-4)


def test_project_straight_perpendicular(straight_lane):
    assert straight_lane.project([10.0, 3.0]) == pytest.approx(10.0, abs=1e-9)


def test_project_boundary_clamps(straight_lane):
    assert straight_lane.project([-5.0, 1.0]) == 0.0
    assert straight_lane.project([120.0, -2.0]) == straight_lane.length


def test_project_matches_dense_scan(circle_lane_ccw, clothoid_lane):
    for lane in (circle_lane_ccw, clothoid_lane):
        n = 100001
        s = np.linspace(0.0, lane.length, n)
        pts = lane.curve.positions(s)
        res = lane.length / (n - 1)
        for _ in range(40):
            p = RNG.uniform(0.0, lane.length)
            d = RNG.uniform(-5.0, 5.0)
            point = lane.offset_position(p, d)
            scan = s[np.argmin(np.linalg.norm(pts - point, axis=1))]
            assert abs(lane.project(point) - scan) <= 2 * res + 1e-9


def test_project_idempotent_on_centerline(clothoid_lane):
    for p in RNG.uniform(0.0, clothoid_lane.length, 30):
        point = clothoid_lane.position(p)
        assert clothoid_lane.project(point) == pytest.approx(p, abs=1e-5)


# -- offset_position / signed_distance --------------------------------------------


def test_offset_straight(straight_lane):
    assert np.allclose(straight_lane.offset_position(10.0, 2.0), [10.0, 2.0], atol=1e-9)


def test_offset_zero_is_position(circle_lane_ccw):
    for p in (0.0, 12.0, 70.0):
        assert np.allclose(
            circle_lane_ccw.offset_position(p, 0.0), circle_lane_ccw.position(p)
        )


def test_signed_distance_on_centerline(clothoid_lane):
    for p in (1.0, 55.5, 110.0):
        assert abs(clothoid_lane.signed_distance(clothoid_lane.position(p))) < 1e-6


def test_signed_distance_right_of_heading(straight_lane):
    assert straight_lane.signed_distance([10.0, -1.5]) == pytest.approx(-1.5, abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(p=st.floats(0.5, 77.0), d=st.floats(-1.75, 1.75))
def test_round_trip_circle(circle_lane_ccw, p, d):
    if abs(d * circle_lane_ccw.curvature(p)) >= 0.5:
        return
    point = circle_lane_ccw.offset_position(p, d)
    p_back, d_back = circle_lane_ccw.curve.project_with_distance(point)
    assert abs(p_back - p) < 1e-4
    assert abs(d_back - d) < 1e-4


def test_round_trip_bulk(straight_lane, circle_lane_ccw, clothoid_lane):
    for lane in (straight_lane, circle_lane_ccw, clothoid_lane):
        ps = RNG.uniform(0.5, lane.length - 0.5, 400)
        ds = RNG.uniform(-1.75, 1.75, 400)
        for p, d in zip(ps, ds):
            if abs(d * lane.curvature(p)) >= 0.5:
                continue
            point = lane.offset_position(p, d)
            p_back, d_back = lane.curve.project_with_distance(point)
            assert abs(p_back - p) < 1e-4
            assert abs(d_back - d) < 1e-4


def test_curvature_sign_convention(circle_lane_ccw, circle_lane_cw):
    # positive d displaces along the left normal; on a left-curving (kappa > 0)
    # lane that is toward the curve center, matching the 1/(1 - d*kappa)
    # progression factor of the lane-relative dynamics
    center = np.array([0.0, 50.0])
    p = 30.0
    assert circle_lane_ccw.curvature(p) > 0
    r_left = np.linalg.norm(circle_lane_ccw.offset_position(p, 1.0) - center)
    r_right = np.linalg.norm(circle_lane_ccw.offset_position(p, -1.0) - center)
    assert r_left < 50.0 < r_right
    # mirrored for a right-curving lane
    center_cw = np.array([0.0, -50.0])
    assert circle_lane_cw.curvature(p) < 0
    r_left = np.linalg.norm(circle_lane_cw.offset_position(p, 1.0) - center_cw)
    r_right = np.linalg.norm(circle_lane_cw.offset_position(p, -1.0) - center_cw)
    assert r_left > 50.0 > r_right


# -- neighbor_at ------------------------------------------------------------------


def test_neighbor_inside_merge_window(ramp_map):
    ramp = ramp_map.lane(1)
    assert ramp.neighbor_at(250.0, "left") == 2
    assert ramp.neighbor_at(50.0, "left") is None
    assert ramp.neighbor_at(250.0, "right") is None


def test_neighbor_symmetry_sampled(parallel_map):
    a, b = parallel_map.lane(1), parallel_map.lane(2)
    for p in RNG.uniform(0.0, a.length, 25):
        assert a.neighbor_at(p, "left") == 2
        p_b = b.project(a.position(p))
        assert b.neighbor_at(p_b, "right") == 1


# -- load_map ----------------------------------------------------------------------


def test_load_two_lane_map(map_file):
    lane_map = load_map(map_file(parallel_map_dict()))
    assert len(lane_map) == 2
    assert lane_map.lane(1).neighbor_at(10.0, "left") == 2
    assert lane_map.lane(2).neighbor_at(10.0, "right") == 1


def test_load_ramp_map(map_file):
    lane_map = load_map(map_file(ramp_map_dict()))
    assert len(lane_map) == 3
    ramp = lane_map.lane(1)
    assert ramp.is_merge_lane
    assert ramp.neighbor_at(120.0, "left") == 2


def test_asymmetric_neighbors_rejected(map_file):
    data = parallel_map_dict()
    data["lanes"][1].pop("right")
    with pytest.raises(MapValidationError):
        load_map(map_file(data))


def test_malformed_json_reports_line(map_file):
    path = map_file({}, name="bad.json")
    path.write_text('{"desired_lane": 1,\n "lanes": [}')
    with pytest.raises(MapSchemaError, match="line"):
        load_map(path)


def test_zero_length_lane_rejected():
    with pytest.raises(MapValidationError):
        build_lane(lane_spec(1, [[5.0, 5.0], [5.0, 5.0]]))


def test_nonpositive_width_rejected():
    with pytest.raises(MapValidationError):
        build_lane(lane_spec(1, [[0.0, 0.0], [50.0, 0.0]], width=0.0))


def test_missing_map_file():
    with pytest.raises(FileNotFoundError):
        load_map("/nonexistent/map.json")


def test_bad_lane_ids_rejected():
    data = parallel_map_dict()
    data["lanes"][1]["id"] = 7
    data["lanes"][0]["left"] = [[0.0, 400.0, 7]]
    data["lanes"][1]["right"] = [[0.0, 400.0, 1]]
    with pytest.raises(MapValidationError, match="ids"):
        map_from_dict(data)


def test_desired_lane_must_exist():
    data = parallel_map_dict()
    data["desired_lane"] = 9
    with pytest.raises(MapValidationError):
        map_from_dict(data)


def test_width_profile_interpolation():
    lane = build_lane(
        lane_spec(1, [[0.0, 0.0], [100.0, 0.0]], width=[[0.0, 1.5], [100.0, 2.5]])
    )
    assert lane.width_at(0.0) == pytest.approx(1.5)
    assert lane.width_at(50.0) == pytest.approx(2.0)
    assert lane.width_at(100.0) == pytest.approx(2.5)


def test_curve_requires_two_points():
    with pytest.raises(ValueError):
        ArcLengthCurve([[0.0, 0.0]])


def test_rect_corners_axis_aligned():
    corners = rect_corners(0.0, 0.0, 1.0, 0.0, 2.0, 4.0)
    xs = sorted(round(c[0], 9) for c in corners)
    ys = sorted(round(c[1], 9) for c in corners)
    assert xs == [-2.0, -2.0, 2.0, 2.0]
    assert ys == [-1.0, -1.0, 1.0, 1.0]
