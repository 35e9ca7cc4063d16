import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _fixtures import as_detection, dontcare, obj, random_frames
from kittieval.eval_core import (
    ConfigError,
    Difficulty,
    EvalConfig,
    assign_difficulty,
    collect_match_scores,
    count_at_threshold,
    greedy_match,
    partition_frame,
    prepare_frames,
    score_thresholds,
)
from kittieval.kitti_io import Frame

# (height strictly above, occlusion at most, truncation at most) per level
RULES = {0: (45, 0, 0.15), 1: (25, 1, 0.30), 2: (25, 2, 0.50)}


def difficulty_oracle(h, occ, trunc):
    met = [lvl for lvl, (hh, oo, tt) in RULES.items() if h > hh and occ <= oo and trunc <= tt]
    return min(met) if met else -1


# --- difficulty -------------------------------------------------------------


@pytest.mark.parametrize(
    "args, expected",
    [((50, 0, 0.10), 0), ((30, 1, 0.20), 1), ((20, 0, 0.0), -1), ((30, 0, 0.0), 1), ((60, 2, 0.4), 2),
     ((60, 3, 0.0), -1), ((45, 0, 0.0), 1), ((25, 0, 0.0), -1), ((80, 0, 0.6), -1)],
)
def test_assign_difficulty_examples(args, expected):
    assert assign_difficulty(*args) == expected
    assert assign_difficulty(*args) == difficulty_oracle(*args)


def test_assign_difficulty_matches_oracle_on_grid():
    heights = [0, 10, 25, 25.0001, 30, 45, 45.0001, 100]
    truncs = [-1, 0, 0.1, 0.15, 0.2, 0.3, 0.31, 0.5, 0.51, 1.0]
    for h, occ, tr in itertools.product(heights, (-1, 0, 1, 2, 3), truncs):
        assert assign_difficulty(h, occ, tr) == difficulty_oracle(h, occ, tr)


def test_literal_mode_follows_interval_rules():
    assert assign_difficulty(50, 0, 0.1, "literal") == 0
    assert assign_difficulty(30, 1, 0.2, "literal") == 1
    assert assign_difficulty(30, 2, 0.4, "literal") == 2
    # an unoccluded, untruncated 30 px box fits no literal interval
    assert assign_difficulty(30, 0, 0.0, "literal") == -1
    assert assign_difficulty(30, 0, 0.0) == 1


@settings(max_examples=500, deadline=None)
@given(st.floats(0, 200), st.integers(0, 3), st.floats(0, 1), st.floats(0, 50), st.integers(0, 3),
       st.floats(0, 1))
def test_difficulty_monotone(h, occ, tr, dh, docc, dtr):
    base = assign_difficulty(h, occ, tr)
    easier = assign_difficulty(h + dh, max(0, occ - docc), max(0.0, tr - dtr))
    if base != Difficulty.IGNORED and easier != Difficulty.IGNORED:
        assert easier <= base
    if base != Difficulty.IGNORED:
        assert easier != Difficulty.IGNORED


# --- config -----------------------------------------------------------------


def test_config_defaults_and_validation():
    cfg = EvalConfig("Car", difficulty_level=0)
    assert cfg.iou_threshold == 0.7 and cfg.min_det_height_px == 45 and cfg.recall_samples == 40
    assert EvalConfig("Pedestrian").iou_threshold == 0.5
    assert EvalConfig("Cyclist", difficulty_level=2).min_det_height_px == 25
    for kwargs in ({"difficulty_level": 3}, {"iou_kind": "4d"}, {"iou_threshold": 0.0},
                   {"ap_points": 20}, {"recall_samples": 0}):
        with pytest.raises(ConfigError):
            EvalConfig("Car", **kwargs)
    with pytest.raises(ConfigError):
        EvalConfig("Tram")
    assert EvalConfig("Tram", iou_threshold=0.6).iou_threshold == 0.6
    with pytest.raises(ConfigError):
        EvalConfig("DontCare", iou_threshold=0.5)


# --- partition --------------------------------------------------------------


def _gt(h, occ=0, trunc=0.0, cls="Car", x=0.0):
    return obj(cls, (x, 100, x + 50, 100 + h), occ=occ, trunc=trunc)


def test_partition_level_one_includes_ignored_tier():
    gts = [_gt(60), _gt(30, occ=1), _gt(60, occ=2), _gt(20)]  # difficulties 0, 1, 2, -1
    assert [assign_difficulty(g.height_px, g.occlusion, g.truncation) for g in gts] == [0, 1, 2, -1]
    part = partition_frame(Frame("0", gts, []), EvalConfig("Car", difficulty_level=1))
    assert part.counted_gt == [0, 1, 3] and part.ignored_gt == [2]


def test_partition_dontcare_only():
    part = partition_frame(Frame("0", [dontcare((0, 0, 10, 10))], []), EvalConfig("Car"))
    assert part.counted_gt == [] and part.dontcare_gt == [0]


def test_partition_short_detection():
    det = obj("Car", (0, 0, 50, 10), score=0.9)
    part = partition_frame(Frame("0", [], [det]), EvalConfig("Car", difficulty_level=1))
    assert part.small_det == [0] and part.candidate_det == []


def test_partition_other_classes_excluded():
    frame = Frame("0", [_gt(60, cls="Pedestrian")], [as_detection(_gt(60, cls="Van"), 0.5)])
    part = partition_frame(frame, EvalConfig("Car"))
    assert part == type(part)()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["Car", "Pedestrian", "Cyclist"]), st.integers(0, 2))
def test_partition_disjoint_and_exhaustive(seed, cls, level):
    for frame in random_frames(seed, n_frames=2):
        part = partition_frame(frame, EvalConfig(cls, difficulty_level=level))
        gt_lists = part.counted_gt + part.ignored_gt + part.dontcare_gt
        det_lists = part.candidate_det + part.small_det
        assert len(gt_lists) == len(set(gt_lists)) and len(det_lists) == len(set(det_lists))
        assert set(gt_lists) == {i for i, g in enumerate(frame.ground_truth) if g.class_name in (cls, "DontCare")}
        assert set(det_lists) == {j for j, d in enumerate(frame.detections) if d.class_name == cls}


# --- matching ---------------------------------------------------------------


def _pair_frame(ious_and_scores, n_gt=1):
    """One Car gt at x in [0, 100]; each det shifted horizontally to hit an exact 2D IoU."""
    g = obj("Car", (0, 100, 100, 160))
    dets = []
    for iou, score in ious_and_scores:
        # same height, horizontal shift s: IoU = (100 - s) / (100 + s)
        s = 100 * (1 - iou) / (1 + iou)
        dets.append(as_detection(obj("Car", (s, 100, 100 + s, 160)), score))
    return Frame("0", [g] * n_gt, dets)


def test_collect_single_pair():
    cfg = EvalConfig("Car", iou_kind="2d")
    assert collect_match_scores([_pair_frame([(0.8, 0.9)])], cfg) == [0.9]


def test_collect_below_threshold():
    cfg = EvalConfig("Car", iou_kind="2d")
    assert collect_match_scores([_pair_frame([(0.5, 0.9)])], cfg) == []


def test_collect_prefers_highest_iou_over_score():
    cfg = EvalConfig("Car", iou_kind="2d")
    assert collect_match_scores([_pair_frame([(0.8, 0.3), (0.75, 0.9)])], cfg) == [0.3]


def test_collect_sorted_descending():
    cfg = EvalConfig("Car", iou_kind="2d")
    frames = [_pair_frame([(0.9, s)]) for s in (0.2, 0.7, 0.5)]
    assert collect_match_scores(frames, cfg) == [0.7, 0.5, 0.2]


def test_greedy_match_tie_goes_to_earlier_detection():
    ov = np.array([[0.8, 0.8, 0.9], [0.8, 0.8, 0.0]])
    ok = np.ones(3, dtype=bool)
    small = np.zeros(3, dtype=bool)
    assert greedy_match(ov, ok, small, 0.7).tolist() == [2, 0]


def test_greedy_match_short_detections_only_as_fallback():
    ov = np.array([[0.75, 0.95], [0.0, 0.9]])
    ok = np.ones(2, dtype=bool)
    small = np.array([False, True])
    assert greedy_match(ov, ok, small, 0.7).tolist() == [0, 1]


# --- thresholds -------------------------------------------------------------


def thresholds_oracle(scores, n_gt, samples):
    """Walk recall targets with exact fractions."""
    from fractions import Fraction

    out = []
    if not scores:
        return out
    for k in range(samples + 1):
        r = Fraction(k, samples)
        if r > Fraction(len(scores), n_gt):
            continue
        rank = max(1, -(-(r * n_gt).numerator // (r * n_gt).denominator))
        if scores[rank - 1] not in out:
            out.append(scores[rank - 1])
    return out


def test_score_thresholds_examples():
    assert score_thresholds([0.9], 1, 40) == [0.9]
    assert score_thresholds([], 5, 40) == []
    assert score_thresholds([0.9, 0.8, 0.7, 0.6], 4, 4) == [0.9, 0.8, 0.7, 0.6]
    assert score_thresholds([0.9], 0, 40) == []


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 1000), max_size=30), st.integers(1, 40), st.integers(1, 40))
def test_score_thresholds_match_fraction_oracle(raw, n_gt, samples):
    scores = sorted({s / 1000 for s in raw}, reverse=True)[:n_gt]
    assert score_thresholds(scores, n_gt, samples) == thresholds_oracle(scores, n_gt, samples)


# --- counting ---------------------------------------------------------------


def test_count_single_true_positive():
    c = count_at_threshold([_pair_frame([(0.8, 0.9)])], EvalConfig("Car", iou_kind="2d"), 0.5)
    assert (c.tp, c.fp, c.fn) == (1, 0, 0)
    assert len(c.matched_pairs) == 1


def test_count_missed_ground_truth():
    c = count_at_threshold([Frame("0", [_gt(60)], [])], EvalConfig("Car", iou_kind="2d"), 0.5)
    assert (c.tp, c.fp, c.fn) == (0, 0, 1)


def test_count_detection_inside_dontcare_is_not_fp():
    frame = Frame("0", [dontcare((0, 0, 200, 200))], [obj("Car", (10, 10, 100, 100), score=0.9)])
    c = count_at_threshold([frame], EvalConfig("Car", iou_kind="2d"), 0.5)
    assert (c.tp, c.fp, c.fn) == (0, 0, 0)
    # DontCare only excuses 2D false positives unless asked otherwise
    c = count_at_threshold([frame], EvalConfig("Car", iou_kind="3d"), 0.5)
    assert c.fp == 1
    c = count_at_threshold([frame], EvalConfig("Car", iou_kind="3d", dontcare_all_kinds=True), 0.5)
    assert c.fp == 0


def test_dontcare_needs_half_the_detection_area():
    frame = Frame("0", [dontcare((0, 0, 50, 100))], [obj("Car", (0, 0, 100, 100), score=0.9)])
    assert count_at_threshold([frame], EvalConfig("Car", iou_kind="2d"), 0.5).fp == 1
    frame = Frame("0", [dontcare((0, 0, 51, 100))], [obj("Car", (0, 0, 100, 100), score=0.9)])
    assert count_at_threshold([frame], EvalConfig("Car", iou_kind="2d"), 0.5).fp == 0


def test_ground_truth_absorbed_by_short_detection():
    g = _gt(20)  # difficulty -1: counted at every level
    det = as_detection(g, 0.9)
    c = count_at_threshold([Frame("0", [g], [det])], EvalConfig("Car", iou_kind="2d"), 0.5)
    assert (c.tp, c.fp, c.fn, c.absorbed) == (0, 0, 0, 1)


def test_harder_ground_truth_absorbs_detection_without_credit():
    g = _gt(60, occ=2)  # difficulty 2, ignored at level 1
    c = count_at_threshold([Frame("0", [g], [as_detection(g, 0.9)])], EvalConfig("Car", iou_kind="2d"), 0.5)
    assert (c.tp, c.fp, c.fn) == (0, 0, 0)


def test_score_below_threshold_is_neither_tp_nor_fp():
    g = _gt(60)
    c = count_at_threshold([Frame("0", [g], [as_detection(g, 0.3)])], EvalConfig("Car", iou_kind="2d"), 0.5)
    assert (c.tp, c.fp, c.fn) == (0, 0, 1)


def test_orientation_delta_is_gt_minus_det():
    g = obj("Car", (0, 0, 100, 60), alpha=0.3)
    c = count_at_threshold([Frame("0", [g], [as_detection(g, 0.9, alpha=1.0)])], EvalConfig("Car", iou_kind="2d"), 0)
    assert c.deltas == [pytest.approx(-0.7)]


def test_count_rejects_nonfinite_threshold():
    with pytest.raises(ValueError):
        count_at_threshold([], EvalConfig("Car"), float("nan"))


# --- properties -------------------------------------------------------------

case = st.tuples(st.integers(0, 2**32 - 1), st.sampled_from(["Car", "Pedestrian", "Cyclist"]), st.integers(0, 2),
                 st.sampled_from(["2d", "bev", "3d"]))


@settings(max_examples=60, deadline=None)
@given(case)
def test_threshold_monotonicity_and_conservation(c):
    seed, cls, level, kind = c
    frames = random_frames(seed, n_frames=4)
    cfg = EvalConfig(cls, difficulty_level=level, iou_kind=kind, iou_threshold=0.3)
    prepared = prepare_frames(frames, cfg)
    n_counted = sum(len(p.part.counted_gt) for p in prepared)
    levels = sorted({d.score for f in frames for d in f.detections} | {0.0, 1.1})
    previous = None
    for t in levels:
        counts = count_at_threshold(frames, cfg, t)
        assert counts.tp + counts.fn + counts.absorbed == n_counted
        assert counts.tp == len(counts.matched_pairs)
        if previous is not None:
            assert counts.tp <= previous.tp and counts.fp <= previous.fp
            # recall never rises as the threshold goes up
            assert counts.tp * (previous.tp + previous.fn) <= previous.tp * (counts.tp + counts.fn)
        previous = counts


@settings(max_examples=60, deadline=None)
@given(case)
def test_matching_is_injective(c):
    seed, cls, level, kind = c
    frames = random_frames(seed, n_frames=4)
    cfg = EvalConfig(cls, difficulty_level=level, iou_kind=kind, iou_threshold=0.2)
    for p in prepare_frames(frames, cfg):
        assigned = greedy_match(p.overlaps, np.ones(len(p.det_rows), bool), p.det_small, 0.2)
        hits = assigned[assigned >= 0].tolist()
        assert len(hits) == len(set(hits))
