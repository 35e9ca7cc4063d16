"""Difficulty levels, object selection, greedy matching and TP/FP/FN counts."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import geometry
from ._jit import njit
from .kitti_io import DONTCARE, AnnotatedObject, Frame

IOU_KINDS = ("2d", "bev", "3d")

# per-level caps for (height floor, max occlusion, max truncation)
HEIGHT_FLOOR = (45.0, 25.0, 25.0)
MAX_OCCLUSION = (0, 1, 2)
MAX_TRUNCATION = (0.15, 0.30, 0.50)
MIN_DET_HEIGHT = HEIGHT_FLOOR

DEFAULT_IOU_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}


class Difficulty(enum.IntEnum):
    IGNORED = -1
    EASY = 0
    MODERATE = 1
    HARD = 2


class ConfigError(ValueError):
    pass


def assign_difficulty(height_px: float, occlusion: int, truncation: float, mode: str = "cumulative") -> Difficulty:
    """Difficulty tier of a ground-truth box.

    ``cumulative``: the easiest level whose height floor, occlusion cap and
    truncation cap are all met. ``literal``: the three disjoint interval rules
    taken word for word, anything else is ``IGNORED``.
    """
    if mode == "cumulative":
        for level in (0, 1, 2):
            if (
                height_px > HEIGHT_FLOOR[level]
                and occlusion <= MAX_OCCLUSION[level]
                and truncation <= MAX_TRUNCATION[level]
            ):
                return Difficulty(level)
        return Difficulty.IGNORED
    if mode == "literal":
        if height_px > 45 and occlusion <= 0 and truncation <= 0.15:
            return Difficulty.EASY
        if 25 < height_px <= 45 and 0 < occlusion <= 1 and 0.15 < truncation <= 0.3:
            return Difficulty.MODERATE
        if 25 < height_px <= 45 and 1 < occlusion <= 2 and 0.3 < truncation <= 0.5:
            return Difficulty.HARD
        return Difficulty.IGNORED
    raise ConfigError(f"unknown difficulty mode: {mode!r}")


@dataclass(frozen=True)
class EvalConfig:
    class_name: str
    difficulty_level: int = 1
    iou_kind: str = "3d"
    iou_threshold: Optional[float] = None
    min_det_height_px: Optional[float] = None
    recall_samples: int = 40
    ap_points: int = 11
    difficulty_mode: str = "cumulative"
    # intersection over detection area above which a detection counts as inside DontCare
    dontcare_overlap: float = 0.5
    # DontCare regions only excuse false positives for 2D matching unless set
    dontcare_all_kinds: bool = False
    orientation_field: str = "alpha"

    def __post_init__(self):
        if self.class_name == DONTCARE:
            raise ConfigError("DontCare cannot be evaluated as a class")
        if self.difficulty_level not in (0, 1, 2):
            raise ConfigError(f"difficulty level must be 0, 1 or 2, got {self.difficulty_level}")
        if self.iou_kind not in IOU_KINDS:
            raise ConfigError(f"iou_kind must be one of {IOU_KINDS}, got {self.iou_kind!r}")
        if self.iou_threshold is None:
            if self.class_name not in DEFAULT_IOU_THRESHOLDS:
                raise ConfigError(f"no IoU threshold configured for class {self.class_name!r}")
            object.__setattr__(self, "iou_threshold", DEFAULT_IOU_THRESHOLDS[self.class_name])
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ConfigError(f"iou_threshold must lie in (0, 1], got {self.iou_threshold}")
        if self.min_det_height_px is None:
            object.__setattr__(self, "min_det_height_px", MIN_DET_HEIGHT[self.difficulty_level])
        if self.recall_samples < 1:
            raise ConfigError("recall_samples must be >= 1")
        if self.ap_points not in (11, 40):
            raise ConfigError(f"ap_points must be 11 or 40, got {self.ap_points}")
        if self.difficulty_mode not in ("cumulative", "literal"):
            raise ConfigError(f"unknown difficulty mode: {self.difficulty_mode!r}")
        if self.orientation_field not in ("alpha", "rotation_y"):
            raise ConfigError(f"orientation_field must be alpha or rotation_y")

    def with_kind(self, kind: str) -> "EvalConfig":
        return replace(self, iou_kind=kind)


@dataclass
class FramePartition:
    """Index lists into ``frame.ground_truth`` / ``frame.detections``."""

    counted_gt: list[int] = field(default_factory=list)
    ignored_gt: list[int] = field(default_factory=list)
    dontcare_gt: list[int] = field(default_factory=list)
    candidate_det: list[int] = field(default_factory=list)
    small_det: list[int] = field(default_factory=list)


@dataclass
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    # counted ground truths matched only by a too-short detection: neither TP nor FN
    absorbed: int = 0
    # (frame position, gt index, det index, gt angle - det angle)
    matched_pairs: list[tuple[int, int, int, float]] = field(default_factory=list)

    def __iadd__(self, other: "MatchCounts") -> "MatchCounts":
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.absorbed += other.absorbed
        self.matched_pairs.extend(other.matched_pairs)
        return self

    @property
    def deltas(self) -> list[float]:
        return [p[3] for p in self.matched_pairs]


def partition_frame(frame: Frame, cfg: EvalConfig) -> FramePartition:
    part = FramePartition()
    for i, obj in enumerate(frame.ground_truth):
        if obj.class_name == DONTCARE:
            part.dontcare_gt.append(i)
        elif obj.class_name == cfg.class_name:
            level = assign_difficulty(obj.height_px, obj.occlusion, obj.truncation, cfg.difficulty_mode)
            if level <= cfg.difficulty_level:
                part.counted_gt.append(i)
            else:
                part.ignored_gt.append(i)
    for j, det in enumerate(frame.detections):
        if det.class_name != cfg.class_name:
            continue
        if det.height_px >= cfg.min_det_height_px:
            part.candidate_det.append(j)
        else:
            part.small_det.append(j)
    return part


@njit
def greedy_match(overlaps, det_ok, det_small, min_overlap):
    """Assign each ground truth (row order) at most one detection.

    A ground truth takes the free eligible detection with the highest overlap
    strictly above ``min_overlap``; ties go to the lower column. Full-height
    detections are assigned in a first pass, short ones only to ground truths
    still unmatched afterwards. Returns the column per row, -1 if unmatched.
    """
    n_gt, n_det = overlaps.shape
    assigned = np.full(n_gt, -1, dtype=np.int64)
    taken = np.zeros(n_det, dtype=np.bool_)
    for tier in range(2):
        want_small = tier == 1
        for i in range(n_gt):
            if assigned[i] >= 0:
                continue
            best = -1
            best_ov = min_overlap
            for j in range(n_det):
                if taken[j] or not det_ok[j] or det_small[j] != want_small:
                    continue
                if overlaps[i, j] > best_ov:
                    best_ov = overlaps[i, j]
                    best = j
            if best >= 0:
                assigned[i] = best
                taken[best] = True
    return assigned


class _PreparedFrame:
    """Per-frame data that does not depend on the score threshold."""

    __slots__ = (
        "frame", "part", "gt_rows", "gt_counted", "det_rows", "det_small",
        "det_scores", "overlaps", "in_dontcare", "gt_angles", "det_angles",
    )

    def __init__(self, frame: Frame, cfg: EvalConfig):
        self.frame = frame
        self.part = part = partition_frame(frame, cfg)
        counted = set(part.counted_gt)
        self.gt_rows = sorted(part.counted_gt + part.ignored_gt)
        self.gt_counted = np.array([i in counted for i in self.gt_rows], dtype=np.bool_)
        small = set(part.small_det)
        self.det_rows = sorted(part.candidate_det + part.small_det)
        self.det_small = np.array([j in small for j in self.det_rows], dtype=np.bool_)

        gts = [frame.ground_truth[i] for i in self.gt_rows]
        dets = [frame.detections[j] for j in self.det_rows]
        self.det_scores = np.array([d.score for d in dets], dtype=np.float64)
        self.overlaps = geometry.iou_matrix(cfg.iou_kind, gts, dets)

        if part.dontcare_gt and dets and (cfg.dontcare_all_kinds or cfg.iou_kind == "2d"):
            dc = geometry.box2d_rows([frame.ground_truth[i] for i in part.dontcare_gt])
            cover = geometry.box2d_overlap_matrix(geometry.box2d_rows(dets), dc, over_first=True)
            self.in_dontcare = (cover > cfg.dontcare_overlap).any(axis=1)
        else:
            self.in_dontcare = np.zeros(len(dets), dtype=np.bool_)

        attr = cfg.orientation_field
        self.gt_angles = np.array([getattr(g, attr) for g in gts], dtype=np.float64)
        self.det_angles = np.array([getattr(d, attr) for d in dets], dtype=np.float64)

    def match_scores(self, min_overlap: float) -> np.ndarray:
        rows = np.flatnonzero(self.gt_counted)
        cand = ~self.det_small
        assigned = greedy_match(self.overlaps[rows], cand, self.det_small, min_overlap)
        hit = assigned[assigned >= 0]
        return self.det_scores[hit]

    def count(self, threshold: float, min_overlap: float, frame_pos: int = 0) -> MatchCounts:
        eligible = self.det_scores >= threshold
        assigned = greedy_match(self.overlaps, eligible, self.det_small, min_overlap)
        counts = MatchCounts()
        matched_det = np.zeros(len(self.det_rows), dtype=np.bool_)
        for r, j in enumerate(assigned):
            if j >= 0:
                matched_det[j] = True
            if not self.gt_counted[r]:
                continue
            if j < 0:
                counts.fn += 1
            elif self.det_small[j]:
                counts.absorbed += 1
            else:
                counts.tp += 1
                delta = float(self.gt_angles[r] - self.det_angles[j])
                counts.matched_pairs.append((frame_pos, self.gt_rows[r], self.det_rows[j], delta))
        fp_mask = eligible & ~self.det_small & ~matched_det & ~self.in_dontcare
        counts.fp = int(fp_mask.sum())
        return counts


def prepare_frames(frames: Sequence[Frame], cfg: EvalConfig) -> list[_PreparedFrame]:
    return [_PreparedFrame(f, cfg) for f in frames]


def count_counted_gt(prepared: Sequence[_PreparedFrame]) -> int:
    return sum(len(p.part.counted_gt) for p in prepared)


def collect_match_scores(frames: Sequence[Frame], cfg: EvalConfig) -> list[float]:
    return _collect_scores(prepare_frames(frames, cfg), cfg)


def _collect_scores(prepared, cfg) -> list[float]:
    scores = [s for p in prepared for s in p.match_scores(cfg.iou_threshold).tolist()]
    return sorted(scores, reverse=True)


def score_thresholds(sorted_scores: Sequence[float], n_gt: int, recall_samples: int = 40) -> list[float]:
    """Scores at which recall crosses each multiple of ``1 / recall_samples``.

    Target recall ``k / recall_samples`` maps to the ``ceil(k * n_gt / recall_samples)``-th
    highest score, for every ``k`` the matched scores can reach.
    """
    if n_gt <= 0 or not sorted_scores:
        return []
    n_scores = len(sorted_scores)
    out: list[float] = []
    for k in range(recall_samples + 1):
        if k * n_gt > n_scores * recall_samples:
            break
        rank = max(1, -(-k * n_gt // recall_samples))
        score = float(sorted_scores[rank - 1])
        if not out or out[-1] != score:
            out.append(score)
    return out


def count_at_threshold(frames: Sequence[Frame], cfg: EvalConfig, threshold: float) -> MatchCounts:
    if not math.isfinite(threshold):
        raise ValueError(f"threshold must be finite, got {threshold}")
    return _count(prepare_frames(frames, cfg), cfg, threshold)


def _count(prepared, cfg, threshold) -> MatchCounts:
    total = MatchCounts()
    for pos, p in enumerate(prepared):
        total += p.count(threshold, cfg.iou_threshold, pos)
    return total


def evaluate_thresholds(frames: Sequence[Frame], cfg: EvalConfig) -> tuple[list[float], list[MatchCounts]]:
    """Threshold set and the counts at each threshold, sharing one IoU pass."""
    prepared = prepare_frames(frames, cfg)
    scores = _collect_scores(prepared, cfg)
    thresholds = score_thresholds(scores, count_counted_gt(prepared), cfg.recall_samples)
    return thresholds, [_count(prepared, cfg, t) for t in thresholds]


def difficulty_of(obj: AnnotatedObject, mode: str = "cumulative") -> Difficulty:
    return assign_difficulty(obj.height_px, obj.occlusion, obj.truncation, mode)
