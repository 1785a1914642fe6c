"""Polygon primitives: area, convexity, clipping, IoU, interior angles.

Polygons are ``(n, 2)`` float64 arrays of vertices in image coordinates
(x right, y down).  Validation is explicit: call :func:`as_polygon` on
untrusted input.
"""
from __future__ import annotations

import math

import numpy as np

DEDUP_TOL = 1e-9
CONVEX_TOL = 1e-9
RASTER_RESOLUTION = 512


class InvalidPolygonError(ValueError):
    pass


def as_polygon(points, check_simple: bool = False) -> np.ndarray:
    """Validate ``points`` and return a clean ``(n, 2)`` float64 copy.

    Consecutive duplicates (closer than ``DEDUP_TOL``, including the
    wrap-around pair) are dropped.  Raises :class:`InvalidPolygonError`
    if fewer than three vertices remain, values are non-finite, or
    ``check_simple`` is set and two non-adjacent edges intersect.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidPolygonError(f"expected (n, 2) vertices, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidPolygonError("polygon has non-finite coordinates")
    keep = []
    for p in pts:
        if keep and np.hypot(*(p - keep[-1])) < DEDUP_TOL:
            continue
        keep.append(p)
    while len(keep) > 1 and np.hypot(*(keep[0] - keep[-1])) < DEDUP_TOL:
        keep.pop()
    if len(keep) < 3:
        raise InvalidPolygonError(f"polygon has {len(keep)} distinct vertices, need >= 3")
    poly = np.array(keep)
    if check_simple and not is_simple(poly):
        raise InvalidPolygonError("polygon is self-intersecting")
    return poly


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_area(poly) -> float:
    """Shoelace area, always non-negative."""
    return abs(signed_area(np.asarray(poly, dtype=np.float64)))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def is_convex(poly: np.ndarray, tol: float = CONVEX_TOL) -> bool:
    """Sign-consistency of consecutive edge cross products.

    Collinear vertices (|cross| <= tol) are allowed.
    """
    n = len(poly)
    sign = 0
    for i in range(n):
        c = _cross(poly[i - 1], poly[i], poly[(i + 1) % n])
        if abs(c) <= tol:
            continue
        s = 1 if c > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    # a star polygon has consistent turns but winds more than once
    return sign == 0 or abs(signed_area(poly)) > tol and _winds_once(poly)


def _winds_once(poly: np.ndarray) -> bool:
    edges = np.roll(poly, -1, axis=0) - poly
    ang = np.arctan2(edges[:, 1], edges[:, 0])
    turn = np.diff(np.concatenate([ang, ang[:1]]))
    turn = (turn + np.pi) % (2 * np.pi) - np.pi
    return abs(abs(turn.sum()) - 2 * np.pi) < 1e-6


def _segments_intersect(p1, p2, q1, q2) -> bool:
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 and d2 and d3 and d4:
        return True

    def on_seg(a, b, c, d):
        return d == 0 and min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return on_seg(q1, q2, p1, d1) or on_seg(q1, q2, p2, d2) or on_seg(p1, p2, q1, d3) or on_seg(p1, p2, q2, d4)


def is_simple(poly: np.ndarray) -> bool:
    """O(n^2) check that no two non-adjacent edges touch."""
    n = len(poly)
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_intersect(a1, a2, poly[j], poly[(j + 1) % n]):
                return False
    return True


def _ccw(poly: np.ndarray) -> np.ndarray:
    return poly if signed_area(poly) >= 0 else poly[::-1].copy()


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman: part of ``subject`` inside convex ``clip``.

    Both inputs must be counter-clockwise (in the signed-area sense).
    Returns a possibly empty ``(m, 2)`` array.
    """
    output = list(subject)
    m = len(clip)
    for k in range(m):
        if not output:
            break
        c1, c2 = clip[k - 1], clip[k]
        inputs, output = output, []
        s = inputs[-1]
        s_in = _cross(c1, c2, s) >= 0
        for e in inputs:
            e_in = _cross(c1, c2, e) >= 0
            if e_in != s_in:
                ds, de = _cross(c1, c2, s), _cross(c1, c2, e)
                t = ds / (ds - de)
                output.append(s + t * (e - s))
            if e_in:
                output.append(e)
            s, s_in = e, e_in
    return np.array(output, dtype=np.float64).reshape(-1, 2)


def _bbox_disjoint(a: np.ndarray, b: np.ndarray) -> bool:
    return bool(
        a[:, 0].max() <= b[:, 0].min()
        or b[:, 0].max() <= a[:, 0].min()
        or a[:, 1].max() <= b[:, 1].min()
        or b[:, 1].max() <= a[:, 1].min()
    )


def convex_iou(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _ccw(a), _ccw(b)
    area_a, area_b = polygon_area(a), polygon_area(b)
    inter_poly = clip_convex(a, b)
    inter = polygon_area(inter_poly) if len(inter_poly) >= 3 else 0.0
    union = area_a + area_b - inter
    if union <= 0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def polygon_iou(a, b, resolution: int = RASTER_RESOLUTION) -> float:
    """Intersection over union of two simple polygons.

    Exact (clipping) when both are convex; otherwise estimated on a
    ``resolution`` x ``resolution`` grid, see :func:`raster_iou`.
    """
    a, b = as_polygon(a), as_polygon(b)
    if _bbox_disjoint(a, b):
        return 0.0
    if is_convex(a) and is_convex(b):
        return convex_iou(a, b)
    return _raster_iou(a, b, resolution)


def _raster_mask(poly: np.ndarray, x0: float, y0: float, dx: float, dy: float, res: int) -> np.ndarray:
    """Even-odd inside test for every pixel center of the grid.

    Scanline form of the crossing-number test: for each row, edge
    crossings toggle every pixel center to their right.
    """
    ys = y0 + (np.arange(res) + 0.5) * dy
    toggles = np.zeros((res, res + 1), dtype=np.int32)
    p1 = poly
    p2 = np.roll(poly, -1, axis=0)
    for (xa, ya), (xb, yb) in zip(p1, p2):
        if ya == yb:
            continue
        rows = np.nonzero((ya > ys) != (yb > ys))[0]
        if rows.size == 0:
            continue
        t = (ys[rows] - ya) / (yb - ya)
        xc = xa + t * (xb - xa)
        cols = np.floor((xc - x0) / dx - 0.5).astype(np.int64) + 1
        np.clip(cols, 0, res, out=cols)
        np.add.at(toggles, (rows, cols), 1)
    return (np.cumsum(toggles, axis=1)[:, :res] & 1).astype(bool)


def _raster_iou(a: np.ndarray, b: np.ndarray, resolution: int) -> float:
    both = np.vstack([a, b])
    x0, y0 = both.min(axis=0)
    x1, y1 = both.max(axis=0)
    dx = (x1 - x0) / resolution
    dy = (y1 - y0) / resolution
    if dx <= 0 or dy <= 0:
        return 0.0
    ma = _raster_mask(a, x0, y0, dx, dy, resolution)
    mb = _raster_mask(b, x0, y0, dx, dy, resolution)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


def raster_iou(a, b, resolution: int = RASTER_RESOLUTION) -> float:
    """Grid estimate of IoU, independent of the clipping path.

    Pixel centers of a ``resolution`` x ``resolution`` grid spanning the
    joint bounding box are classified by point-in-polygon tests.  Only
    pixels cut by a boundary can be misclassified, so the error is
    O(perimeter / resolution) relative to the bounding-box extent.
    """
    if resolution < 64:
        raise ValueError("resolution must be >= 64")
    a, b = as_polygon(a), as_polygon(b)
    return _raster_iou(a, b, resolution)


def raster_area(poly, resolution: int = RASTER_RESOLUTION) -> float:
    """Grid estimate of polygon area over its own bounding box."""
    poly = as_polygon(poly)
    x0, y0 = poly.min(axis=0)
    x1, y1 = poly.max(axis=0)
    dx, dy = (x1 - x0) / resolution, (y1 - y0) / resolution
    mask = _raster_mask(poly, x0, y0, dx, dy, resolution)
    return np.count_nonzero(mask) * dx * dy


def interior_angle(poly, i: int) -> float:
    """Angle in degrees at vertex ``i`` between the vectors to its two neighbours."""
    poly = np.asarray(poly, dtype=np.float64)
    n = len(poly)
    if not -n <= i < n:
        raise IndexError(f"vertex index {i} out of range for {n} vertices")
    v1 = poly[i - 1] - poly[i]
    v2 = poly[(i + 1) % n] - poly[i]
    n1, n2 = math.hypot(*v1), math.hypot(*v2)
    if n1 < DEDUP_TOL or n2 < DEDUP_TOL:
        raise InvalidPolygonError(f"vertex {i} coincides with a neighbour")
    cos = float(np.dot(v1, v2)) / (n1 * n2)
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))
