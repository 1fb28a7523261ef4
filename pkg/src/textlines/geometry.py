"""Oriented-rectangle geometry: canonical boxes, minimum-area fitting,
convex clipping and rotated IoU.

Angles are measured from the +x axis toward +y and canonicalized to
[-pi/2, pi/2); a rectangle's `length` always runs along its angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_half_pi(angle: float) -> float:
    """Wrap an angle (mod pi) into [-pi/2, pi/2).

    Angles already in range pass through unchanged, so canonical values
    stay exact instead of picking up modulo rounding.
    """
    if -math.pi / 2 <= angle < math.pi / 2:
        return float(angle)
    return (angle + math.pi / 2) % math.pi - math.pi / 2


@dataclass(frozen=True)
class OrientedRect:
    """Rotated rectangle: center, (length, thickness) and angle in radians.

    Construction canonicalizes: length >= thickness (sides swap and the
    angle turns by pi/2 if needed) and the angle is wrapped to
    [-pi/2, pi/2). Degenerate (zero thickness) rectangles are legal.
    """

    center: tuple[float, float]
    size: tuple[float, float]
    angle: float

    def __post_init__(self):
        cx, cy = float(self.center[0]), float(self.center[1])
        length, thickness = float(self.size[0]), float(self.size[1])
        angle = float(self.angle)
        if length < 0 or thickness < 0:
            raise ValueError("rectangle sides must be non-negative")
        if thickness > length:
            length, thickness = thickness, length
            angle += math.pi / 2
        object.__setattr__(self, "center", (cx, cy))
        object.__setattr__(self, "size", (length, thickness))
        object.__setattr__(self, "angle", wrap_half_pi(angle))

    @property
    def length(self) -> float:
        return self.size[0]

    @property
    def thickness(self) -> float:
        return self.size[1]

    @property
    def area(self) -> float:
        return self.size[0] * self.size[1]

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        """Unit vectors along the length and across it."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([c, s]), np.array([-s, c])

    def corners(self) -> np.ndarray:
        """4x2 corner array traversed as a closed quadrilateral."""
        u, v = self.axes()
        hd = u * (self.size[0] / 2.0)
        hn = v * (self.size[1] / 2.0)
        c = np.array(self.center, dtype=np.float64)
        return np.array([c - hd - hn, c + hd - hn, c + hd + hn, c - hd + hn])

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Map world points into (along-length, across) coordinates."""
        u, v = self.axes()
        d = np.atleast_2d(points) - np.array(self.center)
        return np.column_stack((d @ u, d @ v))

    def contains_points(self, points: np.ndarray, slack: float = 0.0) -> np.ndarray:
        loc = self.to_local(points)
        return (np.abs(loc[:, 0]) <= self.size[0] / 2 + slack) & (
            np.abs(loc[:, 1]) <= self.size[1] / 2 + slack
        )

    def aabb(self) -> tuple[float, float, float, float]:
        """Axis-aligned hull as (x0, y0, x1, y1)."""
        c = self.corners()
        return (
            float(c[:, 0].min()),
            float(c[:, 1].min()),
            float(c[:, 0].max()),
            float(c[:, 1].max()),
        )


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, CCW, collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    # np.unique sorts lexicographically by (x, y) already
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    return hull


def min_area_oriented_rect(points) -> OrientedRect:
    """Minimum-area oriented rectangle over a point set (rotating calipers).

    Collinear inputs give a zero-thickness rectangle; a single point gives
    a degenerate rectangle at that point.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.size == 0:
        raise ValueError("empty point set")
    hull = convex_hull(pts)
    if len(hull) == 1:
        return OrientedRect((hull[0][0], hull[0][1]), (0.0, 0.0), 0.0)
    if len(hull) == 2:
        a, b = hull
        mid = (a + b) / 2.0
        d = b - a
        return OrientedRect(
            (mid[0], mid[1]),
            (float(np.hypot(d[0], d[1])), 0.0),
            math.atan2(d[1], d[0]),
        )
    best = None
    edges = np.roll(hull, -1, axis=0) - hull
    for e in edges:
        norm = np.hypot(e[0], e[1])
        if norm == 0.0:
            continue
        u = e / norm
        v = np.array([-u[1], u[0]])
        xs = hull @ u
        ys = hull @ v
        dx = xs.max() - xs.min()
        dy = ys.max() - ys.min()
        area = dx * dy
        if best is None or area < best[0]:
            cx = (xs.max() + xs.min()) / 2.0
            cy = (ys.max() + ys.min()) / 2.0
            center = cx * u + cy * v
            best = (area, center, dx, dy, math.atan2(u[1], u[0]))
    _, center, dx, dy, ang = best
    return OrientedRect((center[0], center[1]), (dx, dy), ang)


def _shoelace(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_against(poly: list, a: np.ndarray, b: np.ndarray) -> list:
    """Keep the part of `poly` on the left of directed edge a->b."""
    ex, ey = b[0] - a[0], b[1] - a[1]
    out = []
    n = len(poly)
    for i in range(n):
        p = poly[i]
        q = poly[(i + 1) % n]
        sp = ex * (p[1] - a[1]) - ey * (p[0] - a[0])
        sq = ex * (q[1] - a[1]) - ey * (q[0] - a[0])
        p_in = sp >= 0.0
        q_in = sq >= 0.0
        if p_in:
            out.append(p)
        if p_in != q_in:
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _intersection_area_ordered(a: OrientedRect, b: OrientedRect) -> float:
    subject = [tuple(p) for p in a.corners()]
    clip = b.corners()
    if _shoelace(clip) < 0:
        clip = clip[::-1]
    poly = subject
    for i in range(4):
        poly = _clip_against(poly, clip[i], clip[(i + 1) % 4])
        if not poly:
            return 0.0
    return abs(_shoelace(np.array(poly)))


def rect_intersection_area(a: OrientedRect, b: OrientedRect) -> float:
    """Area of the convex polygon a intersect b (0 when disjoint)."""
    # order-normalize so the result is bitwise symmetric in its arguments
    ka = (a.center, a.size, a.angle)
    kb = (b.center, b.size, b.angle)
    if kb < ka:
        a, b = b, a
    return _intersection_area_ordered(a, b)


def rotated_iou(a: OrientedRect, b: OrientedRect) -> float:
    inter = rect_intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def axis_aligned_iou(a: OrientedRect, b: OrientedRect) -> float:
    """IoU of the two rectangles' axis-aligned hulls."""
    ax0, ay0, ax1, ay1 = a.aabb()
    bx0, by0, bx1, by1 = b.aabb()
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def line_box_intersections(
    point: np.ndarray, direction: np.ndarray, bbox: tuple[float, float, float, float]
) -> np.ndarray:
    """Both intersections of an infinite line with an axis-aligned box.

    The line passes through `point` along `direction`; the caller
    guarantees `point` lies inside the box, so two hits always exist.
    """
    x0, y0, x1, y1 = bbox
    px, py = float(point[0]), float(point[1])
    dx, dy = float(direction[0]), float(direction[1])
    t_lo, t_hi = -math.inf, math.inf
    for p, d, lo, hi in ((px, dx, x0, x1), (py, dy, y0, y1)):
        if abs(d) < 1e-12:
            continue
        ta = (lo - p) / d
        tb = (hi - p) / d
        if ta > tb:
            ta, tb = tb, ta
        t_lo = max(t_lo, ta)
        t_hi = min(t_hi, tb)
    d = np.array([dx, dy])
    p = np.array([px, py])
    return np.array([p + t_lo * d, p + t_hi * d])
