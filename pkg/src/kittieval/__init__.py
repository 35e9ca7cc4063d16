"""KITTI-style 3D detection evaluation: AP (2D/BEV/3D), AOS, losses and dropout."""

__version__ = "0.1.0"

from .eval_core import Difficulty, EvalConfig, assign_difficulty
from .kitti_io import AnnotatedObject, Frame, format_object_line, load_dataset, parse_object_line
from .metrics import EvalReport, aos, build_pr_curve, evaluate, interpolated_ap

__all__ = [
    "AnnotatedObject",
    "Difficulty",
    "EvalConfig",
    "EvalReport",
    "Frame",
    "aos",
    "assign_difficulty",
    "build_pr_curve",
    "evaluate",
    "format_object_line",
    "interpolated_ap",
    "load_dataset",
    "parse_object_line",
]
