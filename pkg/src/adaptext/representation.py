"""Pairwise boundary-point text regions and annotation conversions.

A region is an ordered run of ``(top, bottom)`` point pairs from one end
of the text to the other.  Its polygon is the top chain in order followed
by the bottom chain reversed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import InvalidPolygonError, as_polygon, interior_angle, polygon_area

CTW_RATIO = 0.93
AXIS_TOL = 1e-9


@dataclass(frozen=True)
class AdaptiveTextRegion:
    tops: np.ndarray
    bottoms: np.ndarray

    def __post_init__(self):
        tops = np.asarray(self.tops, dtype=np.float64).reshape(-1, 2)
        bottoms = np.asarray(self.bottoms, dtype=np.float64).reshape(-1, 2)
        if tops.shape != bottoms.shape:
            raise InvalidPolygonError("top and bottom chains differ in length")
        if len(tops) < 2:
            raise InvalidPolygonError(f"region needs >= 2 pairs, got {len(tops)}")
        object.__setattr__(self, "tops", tops)
        object.__setattr__(self, "bottoms", bottoms)

    @classmethod
    def from_pairs(cls, pairs) -> "AdaptiveTextRegion":
        pairs = np.asarray(pairs, dtype=np.float64).reshape(-1, 2, 2)
        return cls(pairs[:, 0], pairs[:, 1])

    @classmethod
    def from_polygon(cls, points) -> "AdaptiveTextRegion":
        """Inverse of :meth:`polygon`: first half is top, second half reversed bottom."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) % 2:
            raise InvalidPolygonError(f"pairwise polygon needs an even vertex count, got {len(pts)}")
        k = len(pts) // 2
        return cls(pts[:k], pts[k:][::-1])

    @property
    def num_pairs(self) -> int:
        return len(self.tops)

    @property
    def pairs(self) -> np.ndarray:
        return np.stack([self.tops, self.bottoms], axis=1)

    def polygon(self) -> np.ndarray:
        return np.vstack([self.tops, self.bottoms[::-1]])

    def validate(self) -> "AdaptiveTextRegion":
        as_polygon(self.polygon(), check_simple=True)
        return self

    def area(self) -> float:
        return polygon_area(self.polygon())

    def translated(self, offset) -> "AdaptiveTextRegion":
        off = np.asarray(offset, dtype=np.float64)
        return AdaptiveTextRegion(self.tops + off, self.bottoms + off)


@dataclass(frozen=True)
class ProposalBox:
    """Axis-aligned box by center and size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"proposal size must be positive, got w={self.w} h={self.h}")

    @classmethod
    def from_points(cls, points) -> "ProposalBox":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        c = (lo + hi) / 2
        return cls(float(c[0]), float(c[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]))


def _orient(tops: np.ndarray, bottoms: np.ndarray):
    """Swap chains so ``tops`` is the upper one (left one for vertical text)."""
    axis = (tops[-1] + bottoms[-1]) / 2 - (tops[0] + bottoms[0]) / 2
    vertical = abs(axis[1]) > abs(axis[0]) + AXIS_TOL
    k = 0 if vertical else 1
    if tops[:, k].mean() > bottoms[:, k].mean():
        return bottoms, tops
    return tops, bottoms


def reduce_ctw1500(points, ratio_threshold: float = CTW_RATIO, trace: list | None = None) -> AdaptiveTextRegion:
    """Reduce a 14-point CTW1500 polygon to an adaptive number of pairs.

    Points are 7 along the top boundary then 7 along the bottom in reverse,
    so pair ``i`` is ``(p[i], p[13 - i])``.  Each pair's angle is the smaller
    intersection angle of its two points on the original polygon.  Interior
    pairs are tried in descending-angle order (ties: lower index first); a
    pair is dropped while the area of what remains stays strictly above
    ``ratio_threshold`` times the original area, and the first failure ends
    the procedure.  The two end pairs are always kept.

    If ``trace`` is a list, ``(pair_index, area_ratio, removed)`` tuples are
    appended for every attempt.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (14, 2):
        raise InvalidPolygonError(f"CTW1500 annotation needs 14 points, got {pts.reshape(-1, 2).shape[0]}")
    poly = as_polygon(pts, check_simple=True)
    if len(poly) != 14:
        raise InvalidPolygonError("CTW1500 annotation has duplicate consecutive points")
    original = polygon_area(pts)
    if original <= 0:
        raise InvalidPolygonError("CTW1500 annotation has zero area")

    angles = [interior_angle(pts, i) for i in range(14)]
    pair_angle = {i: min(angles[i], angles[13 - i]) for i in range(1, 6)}
    order = sorted(pair_angle, key=lambda i: (-pair_angle[i], i))

    kept = list(range(7))
    for i in order:
        trial = [j for j in kept if j != i]
        idx = trial + [13 - j for j in reversed(trial)]
        ratio = polygon_area(pts[idx]) / original
        removed = ratio > ratio_threshold
        if trace is not None:
            trace.append((i, ratio, removed))
        if not removed:
            break
        kept = trial

    tops = pts[kept]
    bottoms = pts[[13 - j for j in kept]]
    return AdaptiveTextRegion(tops, bottoms)


def _arclen(chain: np.ndarray) -> np.ndarray:
    seg = np.hypot(*np.diff(chain, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    return s / s[-1] if s[-1] > 0 else s


def _interp_chain(chain: np.ndarray, s: float) -> np.ndarray:
    t = _arclen(chain)
    return np.array([np.interp(s, t, chain[:, 0]), np.interp(s, t, chain[:, 1])])


def _match_chains(long_: np.ndarray, short: np.ndarray) -> np.ndarray:
    """Partners on ``short`` (k points) for every point of ``long_`` (k+1).

    Ends match ends.  One interior point of ``long_`` gets a partner
    interpolated on ``short`` at its own normalized arc length; its
    position minimizes the arc-length mismatch of the index-matched rest.
    """
    s_long, s_short = _arclen(long_), _arclen(short)
    k = len(short)
    best_m, best_cost = 1, math.inf
    for m in range(1, k):
        cost = np.abs(s_long[:m] - s_short[:m]).sum() + np.abs(s_long[m + 1 :] - s_short[m:]).sum()
        if cost < best_cost - 1e-12:
            best_m, best_cost = m, cost
    m = best_m
    return np.vstack([short[:m], _interp_chain(short, s_long[m])[None], short[m:]])


def _pair_odd(pts: np.ndarray):
    """Split an odd-count polygon into two chains and pair them.

    Every choice of two end edges that leaves chains of k and k+1 vertices
    is tried; the winner minimizes the total distance between partners
    (the rung lengths), which is smallest when each point is matched with
    the one across the text rather than along it.  Returns
    ``(chain_a, chain_b)`` with ``chain_a`` in input order.
    """
    n = len(pts)
    best = None
    for a in range(n):
        for size1 in ((n - 1) // 2, (n + 1) // 2):
            chain1 = pts[[(a + 1 + i) % n for i in range(size1)]]
            chain2 = pts[[(a - i) % n for i in range(n - size1)]]
            if min(len(chain1), len(chain2)) < 2:
                continue
            if len(chain1) > len(chain2):
                pair1, pair2 = chain1, _match_chains(chain1, chain2)
            else:
                pair1, pair2 = _match_chains(chain2, chain1), chain2
            cost = np.hypot(*(pair1 - pair2).T).sum()
            if best is None or cost < best[0] - 1e-9:
                best = (cost, pair1, pair2)
    if best is None:
        raise InvalidPolygonError(f"cannot pair {n}-point polygon")
    return best[1], best[2]


def pair_totaltext(points) -> AdaptiveTextRegion:
    """Pair up a TotalText polygon with an arbitrary vertex count.

    Even counts split into first half and reversed second half.  Odd
    counts are handled by :func:`_pair_odd` and produce one synthesized
    point lying on the original boundary, so the polygon area is
    unchanged.  The upper chain becomes the top chain and keeps the
    annotation's point order.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 4:
        raise InvalidPolygonError(f"TotalText annotation needs >= 4 points, got {len(pts)}")
    pts = as_polygon(pts, check_simple=True)
    n = len(pts)
    if n % 2 == 0:
        first, second = pts[: n // 2], pts[n // 2 :][::-1]
    else:
        first, second = _pair_odd(pts)
    tops, bottoms = _orient(first, second)
    if tops is not first:
        # keep the top chain in annotation order
        tops, bottoms = tops[::-1], bottoms[::-1]
    return AdaptiveTextRegion(tops, bottoms)


def quad_to_pairs(quad) -> AdaptiveTextRegion:
    """Two pairs from a quadrilateral, ends placed across its longer axis."""
    q = np.asarray(quad, dtype=np.float64)
    if q.shape != (4, 2):
        raise InvalidPolygonError(f"quadrilateral needs 4 points, got shape {q.shape}")
    as_polygon(q, check_simple=True)
    if len(as_polygon(q)) != 4 or polygon_area(q) <= 0:
        raise InvalidPolygonError("degenerate quadrilateral")
    e = np.hypot(*(np.roll(q, -1, axis=0) - q).T)
    if e[0] + e[2] >= e[1] + e[3]:
        tops, bottoms = q[[0, 1]], q[[3, 2]]
    else:
        tops, bottoms = q[[1, 2]], q[[0, 3]]
    tops, bottoms = _orient(tops, bottoms)
    return AdaptiveTextRegion(tops, bottoms)


def normalize_targets(region: AdaptiveTextRegion, proposal: ProposalBox) -> np.ndarray:
    """Flat ``(top.x, top.y, bottom.x, bottom.y)`` per pair, relative to the proposal."""
    pairs = region.pairs.reshape(-1, 2)
    u = np.empty_like(pairs)
    u[:, 0] = (pairs[:, 0] - proposal.x) / proposal.w
    u[:, 1] = (pairs[:, 1] - proposal.y) / proposal.h
    return u.reshape(-1)


def denormalize_targets(coords: Sequence[float], proposal: ProposalBox) -> AdaptiveTextRegion:
    u = np.asarray(coords, dtype=np.float64).reshape(-1)
    if len(u) % 4 or len(u) < 8:
        raise ValueError(f"need 4 values per pair and >= 2 pairs, got {len(u)} values")
    xy = u.reshape(-1, 2)
    pts = np.empty_like(xy)
    pts[:, 0] = xy[:, 0] * proposal.w + proposal.x
    pts[:, 1] = xy[:, 1] * proposal.h + proposal.y
    return AdaptiveTextRegion.from_pairs(pts.reshape(-1, 2, 2))


def resample_pairs(region: AdaptiveTextRegion, k: int) -> AdaptiveTextRegion:
    """Resample both chains to ``k`` points at equal normalized arc length."""
    s = np.linspace(0.0, 1.0, k)
    tops = np.array([_interp_chain(region.tops, v) for v in s])
    bottoms = np.array([_interp_chain(region.bottoms, v) for v in s])
    return AdaptiveTextRegion(tops, bottoms)
