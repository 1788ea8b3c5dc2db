"""Declarative queries over video annotation streams with cheap filter cascades
and control-variate estimation for windowed aggregates."""
from .config import EngineConfig
from .core import BBox, ClassTable, CountVector, FrameAnnotation, ObjectInstance, Region, count_objects, quadrant_regions
from .engine import (
    CascadeSelector,
    RunReport,
    WindowAggregator,
    WindowResult,
    compare_estimators,
    run_selection,
    run_window_aggregate,
    speedup_report,
)
from .estimators import ControlVariateEstimator, CvEstimate, cv_estimate, mcv_estimate, plain_mean, two_stage_mu
from .exceptions import VmqError
from .filters import ErrorModel, ExactFilter, FilterOutput, NoisyFilter, cascade_decide
from .gridding import OccupancyGrid, dilate, rasterize, threshold_activation
from .io import read_annotations, write_annotations
from .metrics import answer_set_scores, count_accuracy, grid_f1, grid_f1_stream
from .predicates import SpatialRelation, eval_frame_exact, relation_between_grids, relation_between_objects
from .querylang import QueryAst, parse_query, print_query
from .simulator import StreamConfig, coral_like, generate, profile, traffic_like

__version__ = "0.1.0"

__all__ = [
    "answer_set_scores",
    "BBox",
    "cascade_decide",
    "CascadeSelector",
    "ClassTable",
    "compare_estimators",
    "ControlVariateEstimator",
    "coral_like",
    "count_accuracy",
    "count_objects",
    "CountVector",
    "cv_estimate",
    "CvEstimate",
    "dilate",
    "EngineConfig",
    "ErrorModel",
    "eval_frame_exact",
    "ExactFilter",
    "FilterOutput",
    "FrameAnnotation",
    "generate",
    "grid_f1",
    "grid_f1_stream",
    "mcv_estimate",
    "NoisyFilter",
    "ObjectInstance",
    "OccupancyGrid",
    "parse_query",
    "plain_mean",
    "print_query",
    "profile",
    "quadrant_regions",
    "QueryAst",
    "rasterize",
    "read_annotations",
    "Region",
    "relation_between_grids",
    "relation_between_objects",
    "run_selection",
    "run_window_aggregate",
    "RunReport",
    "SpatialRelation",
    "speedup_report",
    "StreamConfig",
    "threshold_activation",
    "traffic_like",
    "two_stage_mu",
    "VmqError",
    "WindowAggregator",
    "WindowResult",
    "write_annotations",
]
