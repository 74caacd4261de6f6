"""Planar primitives: oriented rectangles, separating-axis overlap, line of sight."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

Point = tuple[float, float]


@dataclass(frozen=True)
class OrientedBox:
    """Rectangle footprint centred at ``center`` with its long axis along ``heading``."""

    center: Point
    heading: float
    length: float
    width: float

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError(f"box dimensions must be positive, got {self.length}x{self.width}")

    def corners(self) -> np.ndarray:
        """Corners in counter-clockwise order starting front-left, shape (4, 2)."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = self.length / 2, self.width / 2
        local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
        cx, cy = self.center
        return np.array([(cx + c * a - s * b, cy + s * a + c * b) for a, b in local])


def _project(box: OrientedBox, ax: float, ay: float) -> tuple[float, float]:
    # Projection of a rectangle onto a unit axis is center +- half extent.
    c, s = math.cos(box.heading), math.sin(box.heading)
    mid = box.center[0] * ax + box.center[1] * ay
    ext = box.length / 2 * abs(c * ax + s * ay) + box.width / 2 * abs(-s * ax + c * ay)
    return mid - ext, mid + ext


def obb_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis test over the four edge normals. Touching counts as overlap."""
    for box in (a, b):
        c, s = math.cos(box.heading), math.sin(box.heading)
        for ax, ay in ((c, s), (-s, c)):
            amin, amax = _project(a, ax, ay)
            bmin, bmax = _project(b, ax, ay)
            if amax < bmin or bmax < amin:
                return False
    return True


def obb_overlap_batch(ax, ay, ah, a_len, a_wid, bx, by, bh, b_len, b_wid) -> np.ndarray:
    """Vectorised :func:`obb_overlap` over aligned arrays of box poses.

    Dimensions may be scalars or arrays broadcastable against the poses.
    """
    ax, ay, ah = np.asarray(ax, float), np.asarray(ay, float), np.asarray(ah, float)
    bx, by, bh = np.asarray(bx, float), np.asarray(by, float), np.asarray(bh, float)
    dx, dy = bx - ax, by - ay
    # boxes whose circumcircles are apart cannot touch; the slack keeps the cull conservative
    reach = (np.hypot(a_len, a_wid) + np.hypot(b_len, b_wid)) / 2 + 1e-9
    near = dx * dx + dy * dy <= reach * reach
    shape = np.broadcast(near, ah, bh).shape
    if not near.any():
        return np.zeros(shape, dtype=bool)
    ca, sa = np.cos(ah), np.sin(ah)
    cb, sb = np.cos(bh), np.sin(bh)
    ok = np.broadcast_to(near, shape).copy()
    for ux, uy in ((ca, sa), (-sa, ca), (cb, sb), (-sb, cb)):
        dist = np.abs(dx * ux + dy * uy)
        ext_a = a_len / 2 * np.abs(ca * ux + sa * uy) + a_wid / 2 * np.abs(-sa * ux + ca * uy)
        ext_b = b_len / 2 * np.abs(cb * ux + sb * uy) + b_wid / 2 * np.abs(-sb * ux + cb * uy)
        ok &= dist <= ext_a + ext_b
    return ok


def _orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """Closed-segment intersection; shared endpoints and collinear overlap count."""
    d1 = _orient(*q1, *q2, *p1)
    d2 = _orient(*q1, *q2, *p2)
    d3 = _orient(*p1, *p2, *q1)
    d4 = _orient(*p1, *p2, *q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and ((d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)):
        return True
    if d1 == 0 and _on_segment(*q1, *q2, *p1):
        return True
    if d2 == 0 and _on_segment(*q1, *q2, *p2):
        return True
    if d3 == 0 and _on_segment(*p1, *p2, *q1):
        return True
    if d4 == 0 and _on_segment(*p1, *p2, *q2):
        return True
    return False


def point_in_polygon(p: Point, poly: Sequence[Point]) -> bool:
    """Even-odd rule; points exactly on the boundary may land either way."""
    x, y = p
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xc:
                inside = not inside
    return inside


def polygon_is_simple(poly: Sequence[Point]) -> bool:
    """True when no two non-adjacent edges touch and no edge is degenerate."""
    n = len(poly)
    if n < 3:
        return False
    edges = [(tuple(poly[i]), tuple(poly[(i + 1) % n])) for i in range(n)]
    if any(a == b for a, b in edges):
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(*edges[i], *edges[j]):
                return False
    # zero-area polygons (all collinear) are not usable as obstructions
    area = sum(edges[i][0][0] * edges[i][1][1] - edges[i][1][0] * edges[i][0][1] for i in range(n))
    return abs(area) > 0


def segment_intersects_polygon(p1: Point, p2: Point, poly) -> bool:
    """Whether the segment p1-p2 crosses, touches or lies inside the polygon.

    Grazing a vertex counts as blocked. ``poly`` is an :class:`~crashsim.scenario.Obstruction`
    or a plain vertex sequence.
    """
    verts = getattr(poly, "polygon", poly)
    n = len(verts)
    for i in range(n):
        if segments_intersect(p1, p2, verts[i], verts[(i + 1) % n]):
            return True
    return point_in_polygon(p1, verts)


def segments_blocked_batch(px, py, qx, qy, poly) -> np.ndarray:
    """Vectorised :func:`segment_intersects_polygon` for many segments against one polygon."""
    verts = np.asarray(getattr(poly, "polygon", poly), float)
    px, py, qx, qy = (np.asarray(v, float) for v in (px, py, qx, qy))
    ex1, ey1 = verts[:, 0], verts[:, 1]
    ex2, ey2 = np.roll(ex1, -1), np.roll(ey1, -1)
    P1x, P1y = px[:, None], py[:, None]
    P2x, P2y = qx[:, None], qy[:, None]
    d1 = _orient(ex1, ey1, ex2, ey2, P1x, P1y)
    d2 = _orient(ex1, ey1, ex2, ey2, P2x, P2y)
    d3 = _orient(P1x, P1y, P2x, P2y, ex1, ey1)
    d4 = _orient(P1x, P1y, P2x, P2y, ex2, ey2)
    proper = (((d1 > 0) & (d2 < 0)) | ((d1 < 0) & (d2 > 0))) & (((d3 > 0) & (d4 < 0)) | ((d3 < 0) & (d4 > 0)))

    def on_seg(ax, ay, bx, by, cx, cy):
        return (np.minimum(ax, bx) <= cx) & (cx <= np.maximum(ax, bx)) & (np.minimum(ay, by) <= cy) & (cy <= np.maximum(ay, by))

    touch = (
        ((d1 == 0) & on_seg(ex1, ey1, ex2, ey2, P1x, P1y))
        | ((d2 == 0) & on_seg(ex1, ey1, ex2, ey2, P2x, P2y))
        | ((d3 == 0) & on_seg(P1x, P1y, P2x, P2y, ex1, ey1))
        | ((d4 == 0) & on_seg(P1x, P1y, P2x, P2y, ex2, ey2))
    )
    hit = np.any(proper | touch, axis=1)
    # even-odd containment of the segment start
    crosses = (ey1 > P1y) != (ey2 > P1y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = ex1 + (P1y - ey1) * (ex2 - ex1) / (ey2 - ey1)
    inside = (np.sum(crosses & (P1x < xc), axis=1) % 2) == 1
    return hit | inside
