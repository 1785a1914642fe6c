"""Refinement-stage multi-task loss.

    total = cls + t * (lam1 * bbox + lam2 * points + lam3 * stop)

``cls`` and ``stop`` are log losses, ``bbox`` and ``points`` are sums of
smooth L1 over the regression residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .representation import ProposalBox

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class Lambdas:
    bbox: float = 1.0
    points: float = 1.0
    stop: float = 1.0


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    cls: float
    bbox: float
    points: float
    stop: float
    lambdas: Lambdas
    t: int
    # diagnostics only, not optimized
    points_mean: float = 0.0
    stop_mean: float = 0.0

    def recompose(self) -> float:
        lam = self.lambdas
        return self.cls + self.t * (lam.bbox * self.bbox + lam.points * self.points + lam.stop * self.stop)


@dataclass(frozen=True)
class BboxTarget:
    v_x: float
    v_y: float
    v_w: float
    v_h: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v_x, self.v_y, self.v_w, self.v_h])

    def apply(self, proposal: ProposalBox) -> ProposalBox:
        return ProposalBox(
            proposal.x + self.v_x * proposal.w,
            proposal.y + self.v_y * proposal.h,
            proposal.w * math.exp(self.v_w),
            proposal.h * math.exp(self.v_h),
        )


def smooth_l1(x):
    """0.5 x^2 inside |x| < 1, |x| - 0.5 outside.  Works on scalars and arrays."""
    a = np.abs(x)
    out = np.where(a < 1.0, 0.5 * a * a, a - 0.5)
    return float(out) if np.ndim(out) == 0 else out


def smooth_l1_grad(x):
    return np.where(np.abs(x) < 1.0, x, np.sign(x))


def cls_log_loss(p: Sequence[float], t: int) -> float:
    return -math.log(max(float(p[t]), PROB_FLOOR))


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def bbox_targets(proposal: ProposalBox, gt: ProposalBox) -> BboxTarget:
    return BboxTarget(
        (gt.x - proposal.x) / proposal.w,
        (gt.y - proposal.y) / proposal.h,
        math.log(gt.w / proposal.w),
        math.log(gt.h / proposal.h),
    )


@dataclass
class Prediction:
    """Outputs of the refinement heads for one proposal.

    ``p`` is the (background, text) probability pair; ``stop_logits`` has
    one row of (continue, stop) logits per decode step.
    """

    p: Sequence[float]
    bbox: np.ndarray | None = None
    points: np.ndarray | None = None
    stop_logits: np.ndarray | None = None


@dataclass
class Target:
    """Ground truth for one proposal.

    ``stop_labels`` has ``num_pairs + 1`` entries: 0 (continue) for each
    pair and a final 1 (stop).
    """

    t: int
    bbox: np.ndarray | None = None
    points: np.ndarray | None = None
    stop_labels: Sequence[int] = field(default_factory=list)


def multitask_loss(pred: Prediction, gt: Target, lambdas: Lambdas = Lambdas()) -> LossBreakdown:
    if gt.t not in (0, 1):
        raise ValueError(f"class label must be 0 or 1, got {gt.t}")
    cls = cls_log_loss(pred.p, gt.t)
    bbox = points = stop = 0.0
    points_mean = stop_mean = 0.0
    if gt.t == 1:
        if gt.bbox is not None:
            if pred.bbox is None or len(pred.bbox) != len(gt.bbox):
                raise ValueError("bbox prediction missing or wrong length")
            bbox = float(np.sum(smooth_l1(np.asarray(gt.bbox) - np.asarray(pred.bbox))))
        if gt.points is not None:
            gp, pp = np.asarray(gt.points, dtype=np.float64), pred.points
            if pp is None or len(pp) != len(gp):
                raise ValueError(f"point prediction length {None if pp is None else len(pp)} != target {len(gp)}")
            res = smooth_l1(gp - np.asarray(pp, dtype=np.float64))
            points = float(np.sum(res))
            points_mean = float(np.mean(res)) if len(gp) else 0.0
        if len(gt.stop_labels):
            labels = np.asarray(gt.stop_labels, dtype=np.int64)
            if gt.points is not None and len(labels) != len(gt.points) // 4 + 1:
                raise ValueError("stop labels must number pairs + 1")
            logits = pred.stop_logits
            if logits is None or len(logits) != len(labels):
                raise ValueError("stop logits missing or wrong length")
            probs = softmax(np.asarray(logits))
            terms = [cls_log_loss(pr, lab) for pr, lab in zip(probs, labels)]
            stop = float(sum(terms))
            stop_mean = stop / len(terms)
    bd = LossBreakdown(0.0, cls, bbox, points, stop, lambdas, gt.t, points_mean, stop_mean)
    return LossBreakdown(bd.recompose(), cls, bbox, points, stop, lambdas, gt.t, points_mean, stop_mean)
