"""Discretized highway topology: lanes as arc-length splines plus metadata.

A lane couples an :class:`~rampmerge.geometry.ArcLengthCurve` centerline with
a width profile (centerline-to-boundary distance, i.e. half the physical lane
width), piecewise neighbor relations and merge-lane flags.  A lane map is an
immutable collection of lanes indexed by id, safe for concurrent reads.

File format (JSON)::

    { "desired_lane": int,
      "lanes": [ { "id": int,
                   "control_points": [[x, y], ...],
                   "width": number | [[p, w], ...],
                   "left":  [[p_start, p_end, id], ...],   # optional
                   "right": [[p_start, p_end, id], ...],   # optional
                   "is_merge_lane": bool } ] }              # optional

Coordinates are meters in a global planar frame.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import ArcLengthCurve, CurveRangeError

_RANGE_SLOP = 1e-9


class MapSchemaError(ValueError):
    """Lane-map file is malformed or missing required fields."""


class MapValidationError(ValueError):
    """Lane-map contents violate a structural invariant."""


@dataclass(frozen=True)
class Lane:
    id: int
    curve: ArcLengthCurve
    width_breaks: np.ndarray      # arc positions of the width profile
    width_values: np.ndarray      # centerline-to-boundary distance (m)
    left_segments: tuple          # ((p_start, p_end, lane_id), ...)
    right_segments: tuple
    is_merge_lane: bool = False
    desired_successor: Optional[int] = None

    @property
    def length(self) -> float:
        return self.curve.length

    def _check(self, p: float) -> None:
        if p < -_RANGE_SLOP or p > self.length + _RANGE_SLOP:
            raise CurveRangeError(
                f"arc position {p!r} outside [0, {self.length:.3f}] on lane {self.id}"
            )

    def position(self, p: float) -> np.ndarray:
        """Global centerline point at arc length p."""
        self._check(p)
        return self.curve.position(p)

    def heading(self, p: float) -> np.ndarray:
        """Unit tangent of the centerline at p."""
        self._check(p)
        return self.curve.heading(p)

    def curvature(self, p: float) -> float:
        """Signed centerline curvature at p (positive = bends left)."""
        self._check(p)
        return self.curve.curvature(p)

    def offset_position(self, p: float, d: float) -> np.ndarray:
        """Centerline point displaced d meters along the left normal."""
        self._check(p)
        return np.array(self.curve.offset_xy(p, d))

    def project(self, point) -> float:
        """Arc length of the closest centerline point."""
        return self.curve.project(point)

    def signed_distance(self, point) -> float:
        """Perpendicular offset of a global point, positive left of heading."""
        return self.curve.signed_distance(point)

    def width_at(self, p: float) -> float:
        if len(self.width_values) == 1:
            return float(self.width_values[0])
        return float(np.interp(p, self.width_breaks, self.width_values))

    def neighbor_at(self, p: float, side: str) -> Optional[int]:
        """Neighbor lane id declared for the segment containing p, else None."""
        self._check(p)
        if side == "left":
            segments = self.left_segments
        elif side == "right":
            segments = self.right_segments
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        for p0, p1, lane_id in segments:
            if p0 <= p <= p1:
                return lane_id
        return None


@dataclass(frozen=True)
class LaneMap:
    lanes: dict = field(default_factory=dict)
    desired_lane: int = 0

    def lane(self, lane_id: int) -> Lane:
        try:
            return self.lanes[lane_id]
        except KeyError:
            raise KeyError(f"no lane with id {lane_id}") from None

    def __iter__(self):
        return iter(sorted(self.lanes.values(), key=lambda ln: ln.id))

    def __len__(self) -> int:
        return len(self.lanes)


def _parse_width(raw, lane_id: int):
    if isinstance(raw, (int, float)):
        return np.array([0.0]), np.array([float(raw)])
    if isinstance(raw, list) and raw and all(
        isinstance(e, list) and len(e) == 2 for e in raw
    ):
        breaks = np.array([float(e[0]) for e in raw])
        values = np.array([float(e[1]) for e in raw])
        if np.any(np.diff(breaks) <= 0):
            raise MapSchemaError(
                f"lane {lane_id}: width profile breakpoints must be increasing"
            )
        return breaks, values
    raise MapSchemaError(
        f"lane {lane_id}: width must be a number or a [[p, w], ...] profile"
    )


def _parse_segments(raw, lane_id: int, side: str, length: float):
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise MapSchemaError(f"lane {lane_id}: {side} must be a list of segments")
    out = []
    for entry in raw:
        if not (isinstance(entry, list) and len(entry) == 3):
            raise MapSchemaError(
                f"lane {lane_id}: {side} segment must be [p_start, p_end, id]"
            )
        p0, p1, nid = float(entry[0]), float(entry[1]), int(entry[2])
        # declared ends may slightly overhang the re-fit arc length
        if p1 > length:
            if p1 > length + max(0.01 * length, 1.0):
                raise MapValidationError(
                    f"lane {lane_id}: {side} segment end {p1} far beyond "
                    f"lane length {length:.3f}"
                )
            p1 = length
        if not (0.0 <= p0 < p1):
            raise MapValidationError(
                f"lane {lane_id}: {side} segment [{p0}, {p1}] outside [0, {length:.3f}]"
            )
        out.append((p0, p1, nid))
    out.sort()
    for (a0, a1, _), (b0, b1, _) in zip(out[:-1], out[1:]):
        if b0 < a1:
            raise MapValidationError(
                f"lane {lane_id}: overlapping {side} segments at p={b0}"
            )
    return tuple(out)


def build_lane(spec: dict) -> Lane:
    """Construct a Lane from one schema dict, re-fitting to arc length."""
    try:
        lane_id = int(spec["id"])
        points = spec["control_points"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MapSchemaError(f"lane entry missing id/control_points: {exc}") from exc
    try:
        curve = ArcLengthCurve(points)
    except ValueError as exc:
        raise MapValidationError(f"lane {lane_id}: {exc}") from exc
    if curve.length < 1e-6:
        raise MapValidationError(f"lane {lane_id}: zero-length centerline")
    if "width" not in spec:
        raise MapSchemaError(f"lane {lane_id}: missing width")
    breaks, values = _parse_width(spec["width"], lane_id)
    if np.any(values <= 0):
        raise MapValidationError(f"lane {lane_id}: width must be positive everywhere")
    left = _parse_segments(spec.get("left"), lane_id, "left", curve.length)
    right = _parse_segments(spec.get("right"), lane_id, "right", curve.length)
    successor = spec.get("successor")
    return Lane(
        id=lane_id,
        curve=curve,
        width_breaks=breaks,
        width_values=values,
        left_segments=left,
        right_segments=right,
        is_merge_lane=bool(spec.get("is_merge_lane", False)),
        desired_successor=int(successor) if successor is not None else None,
    )


def _check_symmetry(lane_map: LaneMap) -> None:
    opposite = {"left": "right", "right": "left"}
    for lane in lane_map:
        for side, segments in (("left", lane.left_segments),
                               ("right", lane.right_segments)):
            for p0, p1, nid in segments:
                if nid not in lane_map.lanes:
                    raise MapValidationError(
                        f"lane {lane.id}: {side} neighbor {nid} does not exist"
                    )
                other = lane_map.lanes[nid]
                for frac in (0.25, 0.5, 0.75):
                    p = p0 + frac * (p1 - p0)
                    p_other = other.project(lane.position(p))
                    if other.neighbor_at(p_other, opposite[side]) != lane.id:
                        raise MapValidationError(
                            f"lane {lane.id} declares {side} neighbor {nid} near "
                            f"p={p:.1f} but lane {nid} does not declare "
                            f"{opposite[side]} neighbor {lane.id} there"
                        )


def validate_map(lane_map: LaneMap) -> None:
    """Raise MapValidationError on broken structural invariants."""
    ids = sorted(lane_map.lanes)
    if not ids:
        raise MapValidationError("map contains no lanes")
    if ids != list(range(1, len(ids) + 1)):
        raise MapValidationError(
            f"lane ids must be exactly 1..{len(ids)}, got {ids}"
        )
    if lane_map.desired_lane not in lane_map.lanes:
        raise MapValidationError(
            f"desired lane {lane_map.desired_lane} not in map"
        )
    _check_symmetry(lane_map)


def map_from_dict(data: dict) -> LaneMap:
    if not isinstance(data, dict) or "lanes" not in data or "desired_lane" not in data:
        raise MapSchemaError("map must have 'desired_lane' and 'lanes' keys")
    lanes = {}
    for spec in data["lanes"]:
        lane = build_lane(spec)
        if lane.id in lanes:
            raise MapValidationError(f"duplicate lane id {lane.id}")
        lanes[lane.id] = lane
    lane_map = LaneMap(lanes=lanes, desired_lane=int(data["desired_lane"]))
    validate_map(lane_map)
    return lane_map


def load_map(path) -> LaneMap:
    """Load and validate a lane map from a JSON file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"lane map file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MapSchemaError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return map_from_dict(data)
