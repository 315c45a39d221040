"""Planar curve geometry: arc-length cubic splines and oriented-rectangle overlap.

The central object is :class:`ArcLengthCurve`, a cubic spline through 2-D
control points that is numerically re-parameterized so its parameter is arc
length in meters.  Re-fitting works in passes: per-interval Gauss-Legendre
quadrature measures the curve, knots are re-sampled at a fixed arc spacing,
and a fresh spline is fit through the re-sampled points.  Two passes bring
the parameterization error well below 1e-4 relative.

Straight curves are detected at construction and served by closed-form fast
paths (evaluation and projection are O(1) there), which matters because the
planner projects points onto lanes inside its innermost sampling loop.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import CubicSpline

# 5-point Gauss-Legendre nodes/weights on [0, 1]
_GL_NODES = (np.polynomial.legendre.leggauss(5)[0] + 1.0) / 2.0
_GL_WEIGHTS = np.polynomial.legendre.leggauss(5)[1] / 2.0

_STRAIGHT_TOL = 1e-8  # max deviation (m) from the chord to count as straight


class CurveRangeError(ValueError):
    """Arc-length argument outside [0, length]."""


def _fit(points: np.ndarray, t: np.ndarray) -> CubicSpline:
    bc = "not-a-knot" if len(points) >= 4 else "natural"
    return CubicSpline(t, points, axis=0, bc_type=bc)


def _cumulative_arc(spline: CubicSpline, knots: np.ndarray, subdiv: int = 8):
    """Arc length accumulated at `subdiv` sub-nodes per knot interval.

    Returns (t_grid, s_grid) where s_grid[i] is the Gauss-Legendre measured
    length from knots[0] to t_grid[i].
    """
    deriv = spline.derivative()
    t0 = knots[:-1]
    widths = (knots[1:] - t0) / subdiv
    # sub-interval left edges, shape (n_intervals, subdiv)
    lefts = t0[:, None] + widths[:, None] * np.arange(subdiv)[None, :]
    # GL nodes inside every sub-interval, shape (n_intervals, subdiv, 5)
    ts = lefts[:, :, None] + widths[:, None, None] * _GL_NODES[None, None, :]
    speeds = np.linalg.norm(deriv(ts.ravel()), axis=1).reshape(ts.shape)
    seg = (speeds * _GL_WEIGHTS[None, None, :]).sum(axis=2) * widths[:, None]
    s_grid = np.concatenate(([0.0], np.cumsum(seg.ravel())))
    t_grid = np.concatenate(([knots[0]], (lefts + widths[:, None]).ravel()))
    return t_grid, s_grid


class ArcLengthCurve:
    """Cubic-spline curve in the plane, parameterized by arc length.

    Parameters
    ----------
    control_points : (n, 2) array-like, n >= 2
    knot_spacing : target arc distance between re-fit knots (m)
    passes : number of measure/re-sample/re-fit rounds
    """

    def __init__(self, control_points, knot_spacing: float = 0.5, passes: int = 2):
        pts = np.asarray(control_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("need at least two 2-D control points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("control points must be finite")
        chords = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        keep = np.concatenate(([True], chords > 1e-12))
        pts = pts[keep]
        if len(pts) < 2:
            raise ValueError("curve has zero length")

        if len(pts) == 2:
            # chord densification keeps a two-point curve exactly straight
            dense = [pts[0]]
            for a, b in zip(pts[:-1], pts[1:]):
                for frac in (1 / 3, 2 / 3, 1.0):
                    dense.append(a + frac * (b - a))
            pts = np.asarray(dense)

        t = np.concatenate(([0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))))
        spline = _fit(pts, t)
        for _ in range(passes):
            t_grid, s_grid = _cumulative_arc(spline, spline.x)
            total = float(s_grid[-1])
            n_knots = max(4, int(math.ceil(total / knot_spacing)) + 1)
            s_targets = np.linspace(0.0, total, n_knots)
            t_targets = np.interp(s_targets, s_grid, t_grid)
            spline = _fit(spline(t_targets), s_targets)

        self._spline = spline
        self._deriv = spline.derivative()
        self._deriv2 = spline.derivative(2)
        self.length = float(spline.x[-1])
        self._knots = spline.x
        self._coef = spline.c  # shape (4, n_intervals, 2)

        # dense samples for coarse projection, <= 0.5 m apart
        n_samp = max(3, int(math.ceil(self.length / 0.5)) + 1)
        self._samp_s = np.linspace(0.0, self.length, n_samp)
        samp = spline(self._samp_s)
        self._samp_x = np.ascontiguousarray(samp[:, 0])
        self._samp_y = np.ascontiguousarray(samp[:, 1])
        self._samp_step = self._samp_s[1] - self._samp_s[0]

        # straightness fast path
        p0, p1 = samp[0], samp[-1]
        direction = p1 - p0
        norm = np.linalg.norm(direction)
        if norm < 1e-9:
            self.is_straight = False
            direction = np.array([1.0, 0.0])
        else:
            direction = direction / norm
            off = samp - p0
            dev = np.abs(off[:, 0] * direction[1] - off[:, 1] * direction[0])
            self.is_straight = bool(dev.max() <= _STRAIGHT_TOL)
        self._ox, self._oy = float(p0[0]), float(p0[1])
        self._dx, self._dy = float(direction[0]), float(direction[1])

    # -- scalar fast paths ------------------------------------------------

    def _interval(self, s: float) -> int:
        i = int(np.searchsorted(self._knots, s, side="right")) - 1
        if i < 0:
            return 0
        last = len(self._knots) - 2
        return last if i > last else i

    def position_xy(self, s: float) -> tuple[float, float]:
        """Point on the curve at arc length s; linear extension outside [0, length]."""
        if self.is_straight:
            return self._ox + s * self._dx, self._oy + s * self._dy
        if s < 0.0 or s > self.length:
            edge = 0.0 if s < 0.0 else self.length
            px, py = self.position_xy(edge)
            hx, hy = self.heading_xy(edge)
            return px + (s - edge) * hx, py + (s - edge) * hy
        i = self._interval(s)
        u = s - self._knots[i]
        c = self._coef
        x = ((c[0, i, 0] * u + c[1, i, 0]) * u + c[2, i, 0]) * u + c[3, i, 0]
        y = ((c[0, i, 1] * u + c[1, i, 1]) * u + c[2, i, 1]) * u + c[3, i, 1]
        return x, y

    def heading_xy(self, s: float) -> tuple[float, float]:
        """Unit tangent at arc length s (end value outside [0, length])."""
        if self.is_straight:
            return self._dx, self._dy
        s = min(max(s, 0.0), self.length)
        i = self._interval(s)
        u = s - self._knots[i]
        c = self._coef
        dx = (3.0 * c[0, i, 0] * u + 2.0 * c[1, i, 0]) * u + c[2, i, 0]
        dy = (3.0 * c[0, i, 1] * u + 2.0 * c[1, i, 1]) * u + c[2, i, 1]
        inv = 1.0 / math.hypot(dx, dy)
        return dx * inv, dy * inv

    def curvature(self, s: float) -> float:
        """Signed curvature at s; positive bends left of the heading."""
        if self.is_straight:
            return 0.0
        s = min(max(s, 0.0), self.length)
        i = self._interval(s)
        u = s - self._knots[i]
        c = self._coef
        dx = (3.0 * c[0, i, 0] * u + 2.0 * c[1, i, 0]) * u + c[2, i, 0]
        dy = (3.0 * c[0, i, 1] * u + 2.0 * c[1, i, 1]) * u + c[2, i, 1]
        ddx = 6.0 * c[0, i, 0] * u + 2.0 * c[1, i, 0]
        ddy = 6.0 * c[0, i, 1] * u + 2.0 * c[1, i, 1]
        speed2 = dx * dx + dy * dy
        return (dx * ddy - dy * ddx) / (speed2 * math.sqrt(speed2))

    # -- array conveniences -----------------------------------------------

    def position(self, s: float) -> np.ndarray:
        return np.array(self.position_xy(s))

    def heading(self, s: float) -> np.ndarray:
        return np.array(self.heading_xy(s))

    def positions(self, s: np.ndarray) -> np.ndarray:
        return self._spline(np.asarray(s, dtype=float))

    def offset_xy(self, s: float, d: float) -> tuple[float, float]:
        """Point d meters along the left normal of the curve at s."""
        px, py = self.position_xy(s)
        hx, hy = self.heading_xy(s)
        return px - d * hy, py + d * hx

    # -- projection ---------------------------------------------------------

    def project(self, point) -> float:
        """Arc length of the closest curve point; ties go to the smallest s.

        Coarse scan over cached samples (<= 0.5 m apart) then Newton
        refinement of the perpendicularity condition down to 1e-9 m steps.
        """
        px = float(point[0])
        py = float(point[1])
        if self.is_straight:
            s = (px - self._ox) * self._dx + (py - self._oy) * self._dy
            return min(max(s, 0.0), self.length)
        dx = self._samp_x - px
        dy = self._samp_y - py
        i = int(np.argmin(dx * dx + dy * dy))
        s = float(self._samp_s[i])
        lo = max(0.0, s - 1.5 * self._samp_step)
        hi = min(self.length, s + 1.5 * self._samp_step)
        for _ in range(30):
            cx, cy = self.position_xy(s)
            j = self._interval(s)
            u = s - self._knots[j]
            c = self._coef
            d1x = (3.0 * c[0, j, 0] * u + 2.0 * c[1, j, 0]) * u + c[2, j, 0]
            d1y = (3.0 * c[0, j, 1] * u + 2.0 * c[1, j, 1]) * u + c[2, j, 1]
            d2x = 6.0 * c[0, j, 0] * u + 2.0 * c[1, j, 0]
            d2y = 6.0 * c[0, j, 1] * u + 2.0 * c[1, j, 1]
            rx, ry = px - cx, py - cy
            g = -(rx * d1x + ry * d1y)
            h = d1x * d1x + d1y * d1y - (rx * d2x + ry * d2y)
            if h <= 1e-12:
                break
            step = -g / h
            s_new = min(max(s + step, lo), hi)
            if abs(s_new - s) < 1e-9:
                s = s_new
                break
            s = s_new
        return min(max(s, 0.0), self.length)

    def signed_distance(self, point) -> float:
        """Left-positive perpendicular offset of `point` from the curve."""
        return self.project_with_distance(point)[1]

    def project_with_distance(self, point) -> tuple[float, float]:
        s = self.project(point)
        px, py = self.position_xy(s)
        hx, hy = self.heading_xy(s)
        return s, -hy * (float(point[0]) - px) + hx * (float(point[1]) - py)


# -- oriented rectangles ----------------------------------------------------


def rect_corners(cx: float, cy: float, hx: float, hy: float,
                 width: float, length: float):
    """Corners of a rectangle centered at (cx, cy), long axis along (hx, hy)."""
    lx, ly = 0.5 * length * hx, 0.5 * length * hy
    wx, wy = -0.5 * width * hy, 0.5 * width * hx
    return (
        (cx + lx + wx, cy + ly + wy),
        (cx + lx - wx, cy + ly - wy),
        (cx - lx - wx, cy - ly - wy),
        (cx - lx + wx, cy - ly + wy),
    )


def _separated(corners_a, corners_b, ax: float, ay: float) -> bool:
    min_a = min_b = math.inf
    max_a = max_b = -math.inf
    for x, y in corners_a:
        p = x * ax + y * ay
        if p < min_a:
            min_a = p
        if p > max_a:
            max_a = p
    for x, y in corners_b:
        p = x * ax + y * ay
        if p < min_b:
            min_b = p
        if p > max_b:
            max_b = p
    return max_a < min_b or max_b < min_a


def rects_overlap(corners_a, corners_b) -> bool:
    """Separating-axis test; boundary contact counts as overlap."""
    for corners in (corners_a, corners_b):
        (x0, y0), (x1, y1), _, (x3, y3) = corners
        if _separated(corners_a, corners_b, x1 - x0, y1 - y0):
            return False
        if _separated(corners_a, corners_b, x3 - x0, y3 - y0):
            return False
    return True


def _point_segment_dist2(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    t = ((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy)
    t = min(max(t, 0.0), 1.0)
    dx, dy = px - ax - t * vx, py - ay - t * vy
    return dx * dx + dy * dy


def rect_distance(corners_a, corners_b) -> float:
    """Clearance between two rectangles; 0 when they overlap or touch."""
    if rects_overlap(corners_a, corners_b):
        return 0.0
    best = math.inf
    for pts, seg in ((corners_a, corners_b), (corners_b, corners_a)):
        for px, py in pts:
            for i in range(4):
                ax, ay = seg[i]
                bx, by = seg[(i + 1) % 4]
                d2 = _point_segment_dist2(px, py, ax, ay, bx, by)
                if d2 < best:
                    best = d2
    return math.sqrt(best)
