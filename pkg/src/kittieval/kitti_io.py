"""Reading and writing KITTI label / detection text files.

Line layout (one object per line)::

    type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]

Ground-truth lines carry 15 fields, detection lines 16 (trailing score).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

logger = logging.getLogger(__name__)

DONTCARE = "DontCare"
GT_FIELDS = 15
DET_FIELDS = 16


class KittiFormatError(ValueError):
    """Base class for malformed label content."""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class ArityError(KittiFormatError):
    pass


class FieldParseError(KittiFormatError):
    pass


class LabelValidationError(KittiFormatError):
    pass


@dataclass(frozen=True)
class AnnotatedObject:
    class_name: str
    truncation: float
    occlusion: int
    alpha: float
    box2d: tuple[float, float, float, float]  # left, top, right, bottom
    dims: tuple[float, float, float]  # height, width, length
    location: tuple[float, float, float]  # x, y, z (bottom centre, camera frame)
    rotation_y: float
    score: Optional[float] = None

    @property
    def is_dontcare(self) -> bool:
        return self.class_name == DONTCARE

    @property
    def height_px(self) -> float:
        return self.box2d[3] - self.box2d[1]

    @property
    def is_detection(self) -> bool:
        return self.score is not None


@dataclass
class Frame:
    frame_id: str
    ground_truth: list[AnnotatedObject] = field(default_factory=list)
    detections: list[AnnotatedObject] = field(default_factory=list)


def _float(token: str, name: str, line_no: Optional[int]) -> float:
    try:
        return float(token)
    except ValueError:
        raise FieldParseError(f"field {name!r}: not a number: {token!r}", line_no) from None


def _int(token: str, name: str, line_no: Optional[int]) -> int:
    try:
        return int(token)
    except ValueError:
        raise FieldParseError(f"field {name!r}: not an integer: {token!r}", line_no) from None


def validate_object(obj: AnnotatedObject, line_no: Optional[int] = None) -> None:
    """Raise :class:`LabelValidationError` if ``obj`` breaks a label invariant.

    DontCare rows only need a finite score (if any); their sentinels are kept as-is.
    Detection rows may use the ``-1`` sentinel for truncation and occlusion,
    which many detectors write because those fields are unknown to them.
    """
    if obj.score is not None and not math.isfinite(obj.score):
        raise LabelValidationError(f"score must be finite, got {obj.score}", line_no)
    if obj.is_dontcare:
        return

    numbers = (obj.truncation, obj.alpha, obj.rotation_y, *obj.box2d, *obj.dims, *obj.location)
    if not all(math.isfinite(v) for v in numbers):
        raise LabelValidationError("non-finite numeric field", line_no)
    left, top, right, bottom = obj.box2d
    if right < left or bottom < top:
        raise LabelValidationError(f"inverted 2D box {obj.box2d}", line_no)
    if min(obj.dims) <= 0:
        raise LabelValidationError(f"dimensions must be positive, got {obj.dims}", line_no)

    sentinel_ok = obj.is_detection
    if not (0.0 <= obj.truncation <= 1.0 or (sentinel_ok and obj.truncation == -1)):
        raise LabelValidationError(f"truncation out of [0, 1]: {obj.truncation}", line_no)
    if not (obj.occlusion in (0, 1, 2, 3) or (sentinel_ok and obj.occlusion == -1)):
        raise LabelValidationError(f"occlusion not in 0..3: {obj.occlusion}", line_no)


def parse_object_line(line: str, expect_score: bool = False, line_no: Optional[int] = None) -> AnnotatedObject:
    tokens = line.split()
    want = DET_FIELDS if expect_score else GT_FIELDS
    if len(tokens) != want:
        raise ArityError(f"expected {want} fields, got {len(tokens)}", line_no)

    f = [_float(t, f"#{i}", line_no) for i, t in enumerate(tokens[4:], start=4)]
    obj = AnnotatedObject(
        class_name=tokens[0],
        truncation=_float(tokens[1], "truncated", line_no),
        occlusion=_int(tokens[2], "occluded", line_no),
        alpha=_float(tokens[3], "alpha", line_no),
        box2d=(f[0], f[1], f[2], f[3]),
        dims=(f[4], f[5], f[6]),
        location=(f[7], f[8], f[9]),
        rotation_y=f[10],
        score=f[11] if expect_score else None,
    )
    validate_object(obj, line_no)
    return obj


def format_object_line(obj: AnnotatedObject) -> str:
    parts =[obj.class_name, f"{obj.truncation:.6f}", str(int(obj.occlusion))]
    values = [obj.alpha, *obj.box2d, *obj.dims, *obj.location, obj.rotation_y]
    if obj.score is not None:
        values.append(obj.score)
    parts.extend(f"{v:.6f}" for v in values)
    return " ".join(parts)


def parse_label_text(text: str, expect_score: bool = False) -> list[AnnotatedObject]:
    """Parse a whole file body; blank lines are skipped, order is preserved."""
    objects = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        objects.append(parse_object_line(line, expect_score, line_no))
    return objects


def read_label_file(path, expect_score: bool = False) -> list[AnnotatedObject]:
    path = Path(path)
    try:
        return parse_label_text(path.read_text(), expect_score)
    except KittiFormatError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def write_label_file(path, objects: Iterable[AnnotatedObject]) -> None:
    lines = [format_object_line(o) for o in objects]
    Path(path).write_text("".join(line + "\n" for line in lines))


def _txt_stems(directory: Path) -> dict[str, Path]:
    if not directory.is_dir():
        raise FileNotFoundError(f"not a readable directory: {directory}")
    return {p.stem: p for p in directory.iterdir() if p.suffix == ".txt" and p.is_file()}


def load_dataset(gt_dir, det_dir, skipped: Optional[list] = None) -> list[Frame]:
    """Pair ``<gt_dir>/<id>.txt`` with ``<det_dir>/<id>.txt`` into frames.

    Pairing is by exact file stem. A missing detection file means no
    detections. Detection files without a ground-truth counterpart are
    skipped, logged, and appended to ``skipped`` when a list is given.
    Frames come back sorted by ``frame_id``.
    """
    gt_files = _txt_stems(Path(gt_dir))
    det_files = _txt_stems(Path(det_dir))

    for stem in sorted(set(det_files) - set(gt_files)):
        logger.warning("detection file without ground truth skipped: %s", det_files[stem])
        if skipped is not None:
            skipped.append(str(det_files[stem]))

    frames = []
    for stem in sorted(gt_files):
        gt = read_label_file(gt_files[stem], expect_score=False)
        det = read_label_file(det_files[stem], expect_score=True) if stem in det_files else []
        frames.append(Frame(stem, gt, det))
    return frames
