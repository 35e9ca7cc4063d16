"""Precision/recall curves, interpolated AP, orientation similarity and AOS."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .eval_core import (
    DEFAULT_IOU_THRESHOLDS,
    ConfigError,
    EvalConfig,
    MatchCounts,
    evaluate_thresholds,
)
from .kitti_io import Frame

METRIC_KINDS = ("2d", "bev", "3d", "aos")
METRIC_TITLES = {"2d": "AP BBOX_2D", "bev": "AP BBOX_BEV", "3d": "AP BBOX_3D", "aos": "AOS"}
OVERALL = "Overall"


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    precision: float
    recall: float
    similarity: float


# ordered by descending threshold
PrCurve = list


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def orientation_similarity(deltas: Sequence[float], n_positive_dets: int) -> float:
    """Mean of ``(1 + cos d) / 2`` over all positive detections.

    Unmatched positives count as zero, so ``n_positive_dets`` must include them.
    """
    if n_positive_dets <= 0:
        return 0.0
    if len(deltas) > n_positive_dets:
        raise ValueError("more matched angles than positive detections")
    return math.fsum((1.0 + math.cos(d)) / 2.0 for d in deltas) / n_positive_dets


def pr_point(threshold: float, counts: MatchCounts) -> PrPoint:
    positives = counts.tp + counts.fp
    return PrPoint(
        threshold=threshold,
        precision=_ratio(counts.tp, positives),
        recall=_ratio(counts.tp, counts.tp + counts.fn),
        similarity=orientation_similarity(counts.deltas, positives),
    )


def build_pr_curve(frames: Sequence[Frame], cfg: EvalConfig) -> PrCurve:
    thresholds, counts = evaluate_thresholds(frames, cfg)
    return [pr_point(t, c) for t, c in zip(thresholds, counts)]


def recall_positions(n_points: int) -> list[float]:
    if n_points == 11:
        return [k / 10 for k in range(11)]
    if n_points == 40:
        return [k / 40 for k in range(1, 41)]
    raise ValueError(f"unsupported number of recall positions: {n_points}")


def _interpolate(recalls: Sequence[float], values: Sequence[float], n_points: int) -> float:
    total = 0.0
    for r in recall_positions(n_points):
        total += max((v for rr, v in zip(recalls, values) if rr >= r), default=0.0)
    return total / n_points


def interpolated_ap(curve: PrCurve, ap_points: int = 11) -> float:
    if not curve:
        return 0.0
    return _interpolate([p.recall for p in curve], [p.precision for p in curve], ap_points)


def aos(curve: PrCurve, points: int = 11) -> float:
    if not curve:
        return 0.0
    return _interpolate([p.recall for p in curve], [p.similarity for p in curve], points)


@dataclass
class EvalReport:
    """Percent values keyed ``metric -> class -> difficulty``.

    ``OVERALL`` holds the unweighted mean over classes for each metric and level.
    """

    classes: list[str]
    difficulties: list[int]
    metrics: list[str]
    values: dict[str, dict[str, dict[int, float]]] = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def get(self, metric: str, class_name: str, difficulty: int) -> float:
        return self.values[metric][class_name][difficulty]

    def rows(self) -> Iterable[tuple[str, str, int, float]]:
        for metric in self.metrics:
            for name in [*self.classes, OVERALL]:
                for d in self.difficulties:
                    yield metric, name, d, self.values[metric][name][d]

    def to_dict(self) -> dict:
        return {
            m: {name: {str(d): v for d, v in by_level.items()} for name, by_level in by_class.items()}
            for m, by_class in self.values.items()
        }


def evaluate(
    frames: Sequence[Frame],
    classes: Sequence[str] = ("Pedestrian", "Cyclist", "Car"),
    difficulties: Sequence[int] = (0, 1, 2),
    metrics: Sequence[str] = METRIC_KINDS,
    iou_thresholds: Optional[dict[str, float]] = None,
    ap_points: int = 11,
    recall_samples: int = 40,
    **cfg_overrides,
) -> EvalReport:
    """Fill the class x difficulty x metric grid.

    AP cells match with the metric's own IoU kind; AOS reuses the 2D matching,
    so it shares its curve with AP-2D.
    """
    if not classes or not difficulties or not metrics:
        raise ConfigError("need at least one class, difficulty and metric")
    bad = [m for m in metrics if m not in METRIC_KINDS]
    if bad:
        raise ConfigError(f"unknown metric(s): {', '.join(bad)}")
    thresholds = dict(DEFAULT_IOU_THRESHOLDS)
    thresholds.update(iou_thresholds or {})
    unknown = [c for c in classes if c not in thresholds]
    if unknown:
        raise ConfigError(f"no IoU threshold for class(es): {', '.join(unknown)}")

    report = EvalReport(
        list(classes),
        [int(d) for d in difficulties],
        list(metrics),
        settings={
            "iou_thresholds": {c: thresholds[c] for c in classes},
            "ap_points": ap_points,
            "recall_samples": recall_samples,
            **cfg_overrides,
        },
    )
    values = {m: {} for m in metrics}
    for name in classes:
        for m in metrics:
            values[m][name] = {}
        for d in report.difficulties:
            curves = {}
            for m in metrics:
                kind = "2d" if m == "aos" else m
                if kind not in curves:
                    cfg = EvalConfig(
                        class_name=name,
                        difficulty_level=d,
                        iou_kind=kind,
                        iou_threshold=thresholds[name],
                        recall_samples=recall_samples,
                        ap_points=ap_points,
                        **cfg_overrides,
                    )
                    curves[kind] = build_pr_curve(frames, cfg)
                curve = curves[kind]
                value = aos(curve, ap_points) if m == "aos" else interpolated_ap(curve, ap_points)
                values[m][name][d] = 100.0 * value

    for m in metrics:
        values[m][OVERALL] = {
            d: math.fsum(values[m][c][d] for c in classes) / len(classes) for d in report.difficulties
        }
    report.values = values
    return report
