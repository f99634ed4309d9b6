"""Circle-parameterized detection: exact circle geometry, set matching and
losses, circle-aware attention, AP evaluation and independent oracles."""

from .errors import (CircdetError, DivergedLoss, EmptyPredictions, EmptyRegion, FormatError, InfeasibleConfig,
                     InvalidAssignment, InvalidCircle, MissingImage, NonDifferentiablePoint, NonFiniteCost,
                     NonFiniteFunction, NonNormalizedAttention, ShapeError, TooLarge)
from .evaluation import ApReport, ap_summary, average_precision, greedy_match
from .geometry import ciou, enclosing_circle, gciou, grad_ciou, grad_gciou, intersection_area, union_area
from .matching import (GroundTruth, LossBreakdown, LossConfig, Prediction, circle_loss, focal_loss, hungarian,
                       l1_circle, match, match_cost_matrix, total_loss)
from .oracle import brute_force_assignment, finite_diff_grad, mc_gciou, mc_intersection_area
from .segloss import bce_loss, circle_roi_crop, dice_loss, mask_head, seg_loss
from .synth import GenConfig, SceneTruth, generate_scene
from .types import Assignment, Circle, validate_circle

__version__ = "0.1.0"

__all__ = [
    "ApReport", "Assignment", "CircdetError", "Circle", "DivergedLoss", "EmptyPredictions", "EmptyRegion",
    "FormatError", "GenConfig", "GroundTruth", "InfeasibleConfig", "InvalidAssignment", "InvalidCircle",
    "LossBreakdown", "LossConfig", "MissingImage", "NonDifferentiablePoint", "NonFiniteCost", "NonFiniteFunction",
    "NonNormalizedAttention", "Prediction", "SceneTruth", "ShapeError", "TooLarge", "ap_summary",
    "average_precision", "bce_loss", "brute_force_assignment", "ciou", "circle_loss", "circle_roi_crop",
    "dice_loss", "enclosing_circle", "finite_diff_grad", "focal_loss", "gciou", "generate_scene", "grad_ciou",
    "grad_gciou", "greedy_match", "hungarian", "intersection_area", "l1_circle", "mask_head", "match",
    "match_cost_matrix", "mc_gciou", "mc_intersection_area", "seg_loss", "total_loss", "union_area",
    "validate_circle",
]
