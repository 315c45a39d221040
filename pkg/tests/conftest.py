import json

import numpy as np
import pytest

from rampmerge.lanes import LaneMap, build_lane, map_from_dict


def circle_points(radius: float, arc: float, ccw: bool = True, step: float = 2.0):
    """Points on a circle starting at the origin with heading +x."""
    n = max(8, int(arc / step) + 1)
    thetas = np.linspace(0.0, arc / radius, n)
    sign = 1.0 if ccw else -1.0
    x = radius * np.sin(thetas)
    y = sign * radius * (1.0 - np.cos(thetas))
    return np.stack([x, y], axis=1).tolist()


def clothoid_points(length: float = 120.0, kappa_rate: float = 4e-4, step: float = 1.0):
    """Spiral with curvature growing linearly from 0, integrated finely."""
    n_fine = int(length / 0.01)
    s = np.linspace(0.0, length, n_fine)
    theta = 0.5 * kappa_rate * s**2
    x = np.concatenate(([0.0], np.cumsum(np.cos(theta[:-1]) * np.diff(s))))
    y = np.concatenate(([0.0], np.cumsum(np.sin(theta[:-1]) * np.diff(s))))
    idx = np.arange(0, n_fine, int(step / 0.01))
    return np.stack([x[idx], y[idx]], axis=1).tolist()


def lane_spec(lane_id, points, width=1.75, left=None, right=None, merge=False):
    spec = {"id": lane_id, "control_points": points, "width": width}
    if left:
        spec["left"] = left
    if right:
        spec["right"] = right
    if merge:
        spec["is_merge_lane"] = True
    return spec


@pytest.fixture(scope="session")
def straight_lane():
    return build_lane(lane_spec(1, [[0.0, 0.0], [100.0, 0.0]]))


@pytest.fixture(scope="session")
def circle_lane_ccw():
    return build_lane(lane_spec(1, circle_points(50.0, 50.0 * np.pi / 2)))


@pytest.fixture(scope="session")
def circle_lane_cw():
    return build_lane(lane_spec(1, circle_points(50.0, 50.0 * np.pi / 2, ccw=False)))


@pytest.fixture(scope="session")
def clothoid_lane():
    return build_lane(lane_spec(1, clothoid_points()))


def parallel_map_dict(length=400.0, spacing=3.5, width=1.75):
    return {
        "desired_lane": 1,
        "lanes": [
            lane_spec(
                1,
                [[0.0, 0.0], [length / 2, 0.0], [length, 0.0]],
                width=width,
                left=[[0.0, length, 2]],
            ),
            lane_spec(
                2,
                [[0.0, spacing], [length / 2, spacing], [length, spacing]],
                width=width,
                right=[[0.0, length, 1]],
            ),
        ],
    }


def ramp_map_dict(highway_len=500.0, ramp_len=300.0, window=200.0, spacing=3.5):
    """Straight highway pair plus a merge lane whose final `window` meters
    run adjacent to the highway."""
    w0 = ramp_len - window
    return {
        "desired_lane": 2,
        "lanes": [
            lane_spec(
                1,
                [[0.0, -spacing], [ramp_len / 2, -spacing], [ramp_len, -spacing]],
                left=[[w0, ramp_len, 2]],
                merge=True,
            ),
            lane_spec(
                2,
                [[0.0, 0.0], [highway_len / 2, 0.0], [highway_len, 0.0]],
                left=[[0.0, highway_len, 3]],
                right=[[w0, ramp_len, 1]],
            ),
            lane_spec(
                3,
                [[0.0, spacing], [highway_len / 2, spacing], [highway_len, spacing]],
                right=[[0.0, highway_len, 2]],
            ),
        ],
    }


@pytest.fixture(scope="session")
def parallel_map() -> LaneMap:
    return map_from_dict(parallel_map_dict())


@pytest.fixture(scope="session")
def ramp_map() -> LaneMap:
    return map_from_dict(ramp_map_dict())


@pytest.fixture()
def map_file(tmp_path):
    def write(data, name="map.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write


def merge200_map_dict():
    """Ramp of exactly 200 m, adjacent to the highway over its full length."""
    return {
        "desired_lane": 2,
        "lanes": [
            lane_spec(
                1,
                [[0.0, -3.5], [100.0, -3.5], [200.0, -3.5]],
                left=[[0.0, 200.0, 2]],
                merge=True,
            ),
            lane_spec(
                2,
                [[-200.0, 0.0], [300.0, 0.0], [800.0, 0.0]],
                left=[[0.0, 1000.0, 3]],
                right=[[200.0, 400.0, 1]],
            ),
            lane_spec(
                3,
                [[-200.0, 3.5], [300.0, 3.5], [800.0, 3.5]],
                right=[[0.0, 1000.0, 2]],
            ),
        ],
    }


def follow_map_dict(length=2200.0):
    """Very long straight pair for car-following equilibrium runs."""
    return {
        "desired_lane": 2,
        "lanes": [
            lane_spec(
                1,
                [[0.0, -3.5], [150.0, -3.5], [300.0, -3.5]],
                left=[[100.0, 300.0, 2]],
                merge=True,
            ),
            lane_spec(
                2,
                [[0.0, 0.0], [length / 2, 0.0], [length, 0.0]],
                right=[[100.0, 300.0, 1]],
            ),
        ],
    }


@pytest.fixture(scope="session")
def merge200_map() -> LaneMap:
    return map_from_dict(merge200_map_dict())


@pytest.fixture(scope="session")
def follow_map() -> LaneMap:
    return map_from_dict(follow_map_dict())
