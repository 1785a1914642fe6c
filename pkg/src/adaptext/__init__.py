"""Adaptive text region representation with pairwise boundary points."""
from .detection import Detection, EvalReport, GroundTruth, evaluate, match_detections, polygon_nms
from .geometry import InvalidPolygonError, interior_angle, polygon_area, polygon_iou, raster_iou
from .loss import BboxTarget, Lambdas, LossBreakdown, bbox_targets, cls_log_loss, multitask_loss, smooth_l1
from .representation import (
    AdaptiveTextRegion,
    ProposalBox,
    denormalize_targets,
    normalize_targets,
    pair_totaltext,
    quad_to_pairs,
    reduce_ctw1500,
)

__version__ = "0.1.0"
