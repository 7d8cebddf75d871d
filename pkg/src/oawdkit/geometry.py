"""Oriented-box geometry: corner rotation, envelopes, convex clipping and IoU.

Angles are in degrees. Rotation is applied in image coordinates (x to the
right, y pointing down), so a positive angle turns a box clockwise on screen,
matching the values roLabelImg stores.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

# vertices closer than this after clipping are merged
MERGE_EPS = 1e-9


def wrap_degrees(theta: float) -> float:
    """Map an angle onto [0, 180)."""
    wrapped = math.fmod(theta, 180.0)
    if wrapped < 0.0:
        wrapped += 180.0
    # fmod of a tiny negative value can round up to exactly 180
    if wrapped >= 180.0:
        wrapped = 0.0
    return wrapped + 0.0


@dataclass(frozen=True, slots=True)
class Point2D:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y


@dataclass(frozen=True, slots=True)
class OrientedBox:
    """Rectangle given by center, size and clockwise rotation in degrees.

    ``theta`` is wrapped onto [0, 180) at construction since a box at
    ``theta`` and ``theta + 180`` is the same rectangle.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self):
        values = (self.cx, self.cy, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite box parameters {values}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box: w={self.w}, h={self.h}")
        object.__setattr__(self, "theta", wrap_degrees(self.theta))

    @classmethod
    def unchecked(cls, cx, cy, w, h, theta=0.0) -> "OrientedBox":
        """Build a box without validation.

        Only meant for lenient ingestion and for exercising ``validate``;
        geometry on such a box is undefined.
        """
        box = object.__new__(cls)
        for name, value in zip(("cx", "cy", "w", "h", "theta"), (cx, cy, w, h, theta)):
            object.__setattr__(box, name, value)
        return box

    @property
    def area(self) -> float:
        return self.w * self.h

    def problems(self) -> List[str]:
        """Invariant violations of this box, empty when it is valid."""
        found = []
        values = (self.cx, self.cy, self.w, self.h, self.theta)
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in values):
            return ["non-finite box parameters"]
        if self.w <= 0:
            found.append("non-positive width")
        if self.h <= 0:
            found.append("non-positive height")
        if not 0.0 <= self.theta < 180.0:
            found.append("angle out of range")
        return found


@dataclass(frozen=True, slots=True)
class HorizontalBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        values = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite box coordinates {values}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ValueError(f"empty horizontal box {values}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0

    def to_oriented(self) -> OrientedBox:
        cx, cy = self.center
        return OrientedBox(cx, cy, self.width, self.height, 0.0)


@dataclass(frozen=True, slots=True)
class QuadPolygon:
    """Convex quadrilateral, counterclockwise as seen on screen.

    With y pointing down a visually counterclockwise walk has a negative
    shoelace sum. The first vertex is the one with the smallest ``(y, x)``.
    """

    vertices: Tuple[Point2D, Point2D, Point2D, Point2D]

    def __post_init__(self):
        if len(self.vertices) != 4:
            raise ValueError("a quad needs exactly 4 vertices")
        if polygon_area(self.vertices) <= 0.0:
            raise ValueError("degenerate quad")
        if not _is_convex(self.vertices):
            raise ValueError("quad is not convex")

    @classmethod
    def from_points(cls, points: Sequence[Point2D]) -> "QuadPolygon":
        """Canonicalize four convex-position points into a quad."""
        pts = list(points)
        if _signed_area(pts) > 0:
            pts.reverse()
        start = min(range(len(pts)), key=lambda i: (pts[i].y, pts[i].x))
        return cls(tuple(pts[start:] + pts[:start]))

    def __iter__(self):
        return iter(self.vertices)

    def __getitem__(self, i):
        return self.vertices[i]

    def __len__(self):
        return 4


def rotate_point(p: Point2D, center: Point2D, theta: float) -> Point2D:
    """Rotate ``p`` about ``center`` by ``theta`` degrees."""
    rad = math.radians(theta)
    c, s = math.cos(rad), math.sin(rad)
    a, b = p.x - center.x, p.y - center.y
    return Point2D(a * c - b * s + center.x, b * c + a * s + center.y)


def corners(box: OrientedBox) -> QuadPolygon:
    center = Point2D(box.cx, box.cy)
    hw, hh = box.w / 2.0, box.h / 2.0
    local = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
    pts = [rotate_point(Point2D(box.cx + dx, box.cy + dy), center, box.theta) for dx, dy in local]
    return QuadPolygon.from_points(pts)


def envelope(box: OrientedBox) -> HorizontalBox:
    """Smallest axis-aligned box containing all four corners."""
    pts = corners(box).vertices
    xs = [p.x for p in pts]
    ys = [p.y for p in pts]
    return HorizontalBox(min(xs), min(ys), max(xs), max(ys))


def _signed_area(poly: Sequence[Point2D]) -> float:
    n = len(poly)
    if n < 3:
        return 0.0
    # relative to the first vertex to limit cancellation far from the origin
    ox, oy = poly[0].x, poly[0].y
    total = 0.0
    for i in range(1, n - 1):
        px, py = poly[i].x - ox, poly[i].y - oy
        qx, qy = poly[i + 1].x - ox, poly[i + 1].y - oy
        total += px * qy - qx * py
    return total / 2.0


def polygon_area(poly: Sequence[Point2D]) -> float:
    """Shoelace area; 0 for fewer than three vertices."""
    return abs(_signed_area(poly))


def _cross(o: Point2D, a: Point2D, b: Point2D) -> float:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def _is_convex(poly: Sequence[Point2D]) -> bool:
    n = len(poly)
    signs = set()
    for i in range(n):
        c = _cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n])
        if c != 0.0:
            signs.add(c > 0)
    return len(signs) <= 1


def _merge_close(poly: List[Point2D]) -> List[Point2D]:
    out: List[Point2D] = []
    for p in poly:
        if out and abs(p.x - out[-1].x) <= MERGE_EPS and abs(p.y - out[-1].y) <= MERGE_EPS:
            continue
        out.append(p)
    while len(out) > 1 and abs(out[0].x - out[-1].x) <= MERGE_EPS and abs(out[0].y - out[-1].y) <= MERGE_EPS:
        out.pop()
    return out


def convex_intersect(a: Iterable[Point2D], b: Iterable[Point2D]) -> List[Point2D]:
    """Intersection of two convex polygons by clipping ``a`` against each edge of ``b``.

    Returns an empty list when the interiors do not overlap (touching edges
    or corners included).
    """
    subject = list(a)
    clip = list(b)
    if len(subject) < 3 or len(clip) < 3:
        return []
    orientation = 1.0 if _signed_area(clip) > 0 else -1.0

    for i in range(len(clip)):
        c1, c2 = clip[i], clip[(i + 1) % len(clip)]
        src, subject = subject, []
        if not src:
            return []
        prev = src[-1]
        d_prev = orientation * _cross(c1, c2, prev)
        for cur in src:
            d_cur = orientation * _cross(c1, c2, cur)
            if d_cur >= 0:
                if d_prev < 0:
                    subject.append(_lerp(prev, cur, d_prev, d_cur))
                subject.append(cur)
            elif d_prev >= 0:
                subject.append(_lerp(prev, cur, d_prev, d_cur))
            prev, d_prev = cur, d_cur

    subject = _merge_close(subject)
    if len(subject) < 3:
        return []
    # a sliver this thin is a shared edge, not an overlap
    if polygon_area(subject) <= 1e-12 * polygon_area(clip):
        return []
    return subject


def _lerp(p: Point2D, q: Point2D, dp: float, dq: float) -> Point2D:
    t = dp / (dp - dq)
    return Point2D(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection over union of two oriented boxes."""
    if a == b:
        return 1.0
    # cheap rejection on the circumscribed circles
    ra = math.hypot(a.w, a.h) / 2.0
    rb = math.hypot(b.w, b.h) / 2.0
    if math.hypot(a.cx - b.cx, a.cy - b.cy) >= ra + rb:
        return 0.0
    inter = polygon_area(convex_intersect(corners(a).vertices, corners(b).vertices))
    if inter <= 0.0:
        return 0.0
    union = a.area + b.area - inter
    return min(1.0, max(0.0, inter / union))


def horizontal_iou(a: HorizontalBox, b: HorizontalBox) -> float:
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)
