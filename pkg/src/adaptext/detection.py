"""Polygon NMS and the recall / precision / Hmean evaluator."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import as_polygon, polygon_iou
from .representation import AdaptiveTextRegion

NMS_IOU = 0.3
EVAL_IOU = 0.5


@dataclass(frozen=True)
class Detection:
    polygon: np.ndarray
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        object.__setattr__(self, "polygon", as_polygon(self.polygon))

    @classmethod
    def from_region(cls, region: AdaptiveTextRegion, score: float) -> "Detection":
        return cls(region.polygon(), score)


@dataclass(frozen=True)
class GroundTruth:
    polygon: np.ndarray
    ignore: bool = False

    def __post_init__(self):
        object.__setattr__(self, "polygon", as_polygon(self.polygon))


def _score_order(scores: Sequence[float]) -> list[int]:
    # stable: equal scores keep input order
    return sorted(range(len(scores)), key=lambda i: -scores[i])


def polygon_nms(dets: Sequence[Detection], iou_threshold: float = NMS_IOU) -> list[Detection]:
    """Greedy suppression by polygon IoU; survivors sorted by descending score."""
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError("iou_threshold must lie in (0, 1)")
    order = _score_order([d.score for d in dets])
    keep: list[Detection] = []
    for i in order:
        d = dets[i]
        if all(polygon_iou(d.polygon, k.polygon) <= iou_threshold for k in keep):
            keep.append(d)
    return keep


@dataclass
class ImageMatch:
    matches: list[tuple[int, int]] = field(default_factory=list)  # (det index, gt index)
    ignored_dets: list[int] = field(default_factory=list)
    num_dets: int = 0  # excluding ignored
    num_gts: int = 0  # excluding ignored

    @property
    def num_matched(self) -> int:
        return len(self.matches)

    @property
    def false_positives(self) -> int:
        return self.num_dets - self.num_matched

    @property
    def misses(self) -> int:
        return self.num_gts - self.num_matched


def match_detections(dets: Sequence[Detection], gts: Sequence[GroundTruth], iou_threshold: float = EVAL_IOU) -> ImageMatch:
    """One-to-one greedy matching.

    Detections go in descending score order; each claims the unclaimed
    care gt with the highest IoU if that IoU is strictly above the
    threshold.  An unmatched detection overlapping an ignore-flagged gt
    above the threshold is dropped from the counts.
    """
    iou = np.zeros((len(dets), len(gts)))
    for i, d in enumerate(dets):
        for j, g in enumerate(gts):
            iou[i, j] = polygon_iou(d.polygon, g.polygon)
    care = [j for j, g in enumerate(gts) if not g.ignore]
    ignored = [j for j, g in enumerate(gts) if g.ignore]
    claimed: set[int] = set()
    out = ImageMatch(num_gts=len(care))
    for i in _score_order([d.score for d in dets]):
        best, best_iou = -1, iou_threshold
        for j in care:
            if j not in claimed and iou[i, j] > best_iou:
                best, best_iou = j, iou[i, j]
        if best >= 0:
            claimed.add(best)
            out.matches.append((i, best))
        elif any(iou[i, j] > iou_threshold for j in ignored):
            out.ignored_dets.append(i)
    out.num_dets = len(dets) - len(out.ignored_dets)
    return out


def hmean(recall: float, precision: float) -> float:
    return 0.0 if recall + precision == 0 else 2 * recall * precision / (recall + precision)


@dataclass
class EvalReport:
    recall: float
    precision: float
    hmean: float
    num_gts: int
    num_dets: int
    num_matched: int
    per_image: list[ImageMatch]

    def to_dict(self) -> dict:
        return {
            "recall": self.recall,
            "precision": self.precision,
            "hmean": self.hmean,
            "num_gts": self.num_gts,
            "num_dets": self.num_dets,
            "num_matched": self.num_matched,
            "per_image": [
                {
                    "matches": [list(m) for m in im.matches],
                    "false_positives": im.false_positives,
                    "misses": im.misses,
                    "ignored_dets": im.ignored_dets,
                }
                for im in self.per_image
            ],
        }


def evaluate(
    dets: Sequence[Sequence[Detection]],
    gts: Sequence[Sequence[GroundTruth]],
    iou_threshold: float = EVAL_IOU,
    macro: bool = False,
) -> EvalReport:
    """Dataset-level recall, precision and Hmean.

    By default counts are pooled over all images (micro average); with
    ``macro`` the per-image recall and precision are averaged instead.  An
    image with no gts (or no dets) scores recall (precision) 1 in macro mode.
    """
    if len(dets) != len(gts):
        raise ValueError(f"{len(dets)} detection lists for {len(gts)} ground-truth lists")
    per_image = [match_detections(d, g, iou_threshold) for d, g in zip(dets, gts)]
    n_gt = sum(m.num_gts for m in per_image)
    n_det = sum(m.num_dets for m in per_image)
    n_match = sum(m.num_matched for m in per_image)
    if macro and per_image:
        recall = float(np.mean([m.num_matched / m.num_gts if m.num_gts else 1.0 for m in per_image]))
        precision = float(np.mean([m.num_matched / m.num_dets if m.num_dets else 1.0 for m in per_image]))
    else:
        recall = n_match / n_gt if n_gt else 0.0
        precision = n_match / n_det if n_det else 0.0
    return EvalReport(recall, precision, hmean(recall, precision), n_gt, n_det, n_match, per_image)
