"""Synthetic curved-text ribbons for desk-scale decoder training.

A ribbon is a band of constant width around a circular-arc or sinusoidal
centreline.  Its ground-truth region places ``k`` pairs at equal arc
length; the arc's total turning grows with ``k`` (straight for 2 pairs),
so the pair count is a visible property of the shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import _raster_mask
from .representation import AdaptiveTextRegion, ProposalBox, normalize_targets

MIN_PAIRS, MAX_PAIRS = 2, 7
TURN_PER_PAIR = math.radians(40.0)
GRID = 7
SUPERSAMPLE = 4


@dataclass
class SyntheticRibbon:
    centerline: np.ndarray  # (k, 2)
    half_width: float
    gt_region: AdaptiveTextRegion
    proposal: ProposalBox
    feature: np.ndarray

    @property
    def num_pairs(self) -> int:
        return self.gt_region.num_pairs

    def targets(self) -> np.ndarray:
        """``(k, 4)`` normalized pair coordinates."""
        return normalize_targets(self.gt_region, self.proposal).reshape(-1, 4)


def _arc(turn: float, n: int):
    """Unit-length arc with total turning ``turn`` (radians), ``n`` samples.

    Returns points and left unit normals in image coordinates (y down).
    Positive ``turn`` bulges upward.
    """
    s = np.linspace(-0.5, 0.5, n)
    phi = s * turn
    if abs(turn) < 1e-9:
        pts = np.stack([s, np.zeros_like(s)], axis=1)
    else:
        r = 1.0 / turn
        pts = np.stack([r * np.sin(phi), r * (np.cos(phi) - 1.0)], axis=1)
    normals = np.stack([np.sin(phi), np.cos(phi)], axis=1)
    flip = np.array([1.0, -1.0])
    return pts * flip, normals * flip


def _sine(amp: float, n: int):
    s = np.linspace(-0.5, 0.5, n)
    y = amp * np.sin(2 * np.pi * s)
    dy = amp * 2 * np.pi * np.cos(2 * np.pi * s)
    pts = np.stack([s, -y], axis=1)
    tang = np.stack([np.ones_like(s), -dy], axis=1)
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)
    normals = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    return pts, normals


def ribbon_descriptor(polygon: np.ndarray, proposal: ProposalBox, grid: int = GRID, supersample: int = SUPERSAMPLE) -> np.ndarray:
    """Fractional coverage of the polygon on a ``grid`` x ``grid`` split of the
    proposal, mapped from [0, 1] to [-1, 1]."""
    res = grid * supersample
    x0, y0 = proposal.x - proposal.w / 2, proposal.y - proposal.h / 2
    mask = _raster_mask(polygon, x0, y0, proposal.w / res, proposal.h / res, res)
    cov = mask.reshape(grid, supersample, grid, supersample).mean(axis=(1, 3))
    return 2.0 * cov.ravel() - 1.0


def make_ribbon(
    rng: np.random.Generator,
    num_pairs: int,
    kind: str = "arc",
    width_range=(0.1, 0.3),
    max_rotation_deg: float = 10.0,
    grid: int = GRID,
) -> SyntheticRibbon:
    k = num_pairs
    if not MIN_PAIRS <= k <= MAX_PAIRS:
        raise ValueError(f"pair count must be in [{MIN_PAIRS}, {MAX_PAIRS}]")
    width = rng.uniform(*width_range)
    if kind == "arc":
        turn = TURN_PER_PAIR * (k - 2) * rng.uniform(0.9, 1.1) * rng.choice([-1.0, 1.0])
        pts, normals = _arc(turn, k)
    elif kind == "sine":
        amp = 0.04 * (k - 2) * rng.uniform(0.9, 1.1) * rng.choice([-1.0, 1.0])
        pts, normals = _sine(amp, k)
    else:
        raise ValueError(f"unknown ribbon kind {kind!r}")
    hw = width / 2
    tops = pts + hw * normals
    bottoms = pts - hw * normals

    theta = math.radians(rng.uniform(-max_rotation_deg, max_rotation_deg))
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    scale = rng.uniform(50.0, 400.0)
    offset = rng.uniform(0.0, 500.0, size=2)

    def place(p):
        return (p @ rot.T) * scale + offset

    tops, bottoms, center = place(tops), place(bottoms), place(pts)
    if tops[:, 1].mean() > bottoms[:, 1].mean():
        tops, bottoms = bottoms, tops
    region = AdaptiveTextRegion(tops, bottoms)
    poly = region.polygon()
    proposal = ProposalBox.from_points(poly)
    return SyntheticRibbon(center, hw * scale, region, proposal, ribbon_descriptor(poly, proposal, grid))


def flip_ribbon(r: SyntheticRibbon, horizontal: bool, vertical: bool) -> SyntheticRibbon:
    """Mirror a ribbon about its proposal centre.

    Pair order is reversed on a horizontal flip (reading order stays left
    to right) and the chains swap roles on a vertical flip.
    """
    c = np.array([r.proposal.x, r.proposal.y])
    sign = np.array([-1.0 if horizontal else 1.0, -1.0 if vertical else 1.0])
    tops = (r.gt_region.tops - c) * sign + c
    bottoms = (r.gt_region.bottoms - c) * sign + c
    center = (r.centerline - c) * sign + c
    if horizontal:
        tops, bottoms, center = tops[::-1], bottoms[::-1], center[::-1]
    if vertical:
        tops, bottoms = bottoms, tops
    region = AdaptiveTextRegion(tops, bottoms)
    grid = int(round(math.sqrt(r.feature.size)))
    return SyntheticRibbon(center, r.half_width, region, r.proposal, ribbon_descriptor(region.polygon(), r.proposal, grid))


def augment_flips(ribbons: list[SyntheticRibbon]) -> list[SyntheticRibbon]:
    """Each ribbon plus its three mirror images, in a fixed order."""
    out = []
    for r in ribbons:
        out.append(r)
        out.extend(flip_ribbon(r, h, v) for h, v in ((True, False), (False, True), (True, True)))
    return out


def make_dataset(seed: int, count: int, kind: str = "arc", grid: int = GRID) -> list[SyntheticRibbon]:
    """Deterministic ribbons with pair counts cycling through 2..7."""
    rng = np.random.default_rng(seed)
    span = MAX_PAIRS - MIN_PAIRS + 1
    out = []
    for n in range(count):
        k = MIN_PAIRS + n % span
        kk = kind if kind != "mixed" else ("arc" if n % 2 == 0 else "sine")
        out.append(make_ribbon(rng, k, kk, grid=grid))
    order = rng.permutation(count)
    return [out[i] for i in order]
