"""Overlap of axis-aligned image boxes, rotated ground-plane rectangles and
oriented 3D boxes.

Conventions follow the KITTI camera frame: the ground plane is (x, z), the
vertical axis is y pointing down, ``rotation_y`` is the yaw, and a box's
``location`` is the centre of its base, so it spans ``[y - h, y]`` vertically.

The pairwise kernels (``*_matrix``) are numba-compiled unless
``KITTIEVAL_DISABLE_JIT`` is set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._jit import USE_NUMBA, njit

AREA_EPS = 1e-12

# column layout of the packed arrays used by the matrix kernels
BOX2D_COLS = 4  # left, top, right, bottom
BEV_COLS = 5  # x, z, length, width, yaw
BOX3D_COLS = 7  # x, z, length, width, yaw, y_bottom, height


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class Box2D:
    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        if self.right < self.left or self.bottom < self.top:
            raise ValueError(f"inverted box: {self}")

    @property
    def area(self) -> float:
        return (self.right - self.left) * (self.bottom - self.top)

    def as_array(self) -> np.ndarray:
        return np.array([self.left, self.top, self.right, self.bottom], dtype=np.float64)


@dataclass(frozen=True)
class BevRect:
    center_x: float
    center_z: float
    length: float
    width: float
    yaw: float

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0):
            raise ValueError(f"rectangle sides must be positive: {self}")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def area(self) -> float:
        return self.length * self.width

    def as_array(self) -> np.ndarray:
        return np.array([self.center_x, self.center_z, self.length, self.width, self.yaw])


@dataclass(frozen=True)
class OrientedBox3D:
    bev: BevRect
    y_bottom: float
    height: float

    def __post_init__(self):
        if not self.height > 0:
            raise ValueError(f"height must be positive: {self.height}")

    @property
    def volume(self) -> float:
        return self.bev.area * self.height

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.bev.as_array(), [self.y_bottom, self.height]])


@dataclass(frozen=True)
class ConvexPolygon:
    """Counter-clockwise (x, z) vertices, shape ``(k, 2)``."""

    vertices: np.ndarray

    @property
    def area(self) -> float:
        return polygon_area(self)


# ---------------------------------------------------------------------------
# kernels


@njit
def _rect_corners(cx, cz, length, width, yaw):
    c = math.cos(yaw)
    s = math.sin(yaw)
    hl = 0.5 * length
    hw = 0.5 * width
    out = np.empty((4, 2))
    lx = (hl, -hl, -hl, hl)
    lz = (hw, hw, -hw, -hw)
    for k in range(4):
        # rotation about the camera y axis, restricted to the (x, z) plane
        out[k, 0] = cx + c * lx[k] + s * lz[k]
        out[k, 1] = cz - s * lx[k] + c * lz[k]
    return out


@njit
def _shoelace(pts, count):
    acc = 0.0
    for i in range(count):
        j = (i + 1) % count
        acc += pts[i, 0] * pts[j, 1] - pts[j, 0] * pts[i, 1]
    return 0.5 * acc


@njit
def _clip_area(subject, clip):
    """Area of ``subject`` clipped by the half-planes of CCW convex ``clip``."""
    n = subject.shape[0]
    m = clip.shape[0]
    cap = 2 * (n + m) + 4
    cur = np.empty((cap, 2))
    nxt = np.empty((cap, 2))
    for i in range(n):
        cur[i, 0] = subject[i, 0]
        cur[i, 1] = subject[i, 1]
    count = n

    for e in range(m):
        ax = clip[e, 0]
        az = clip[e, 1]
        ex = clip[(e + 1) % m, 0] - ax
        ez = clip[(e + 1) % m, 1] - az
        out = 0
        for i in range(count):
            px = cur[i - 1, 0] if i > 0 else cur[count - 1, 0]
            pz = cur[i - 1, 1] if i > 0 else cur[count - 1, 1]
            qx = cur[i, 0]
            qz = cur[i, 1]
            # >= 0 means on or left of the directed clip edge (inside for CCW)
            dp = ex * (pz - az) - ez * (px - ax)
            dq = ex * (qz - az) - ez * (qx - ax)
            if dq >= 0.0:
                if dp < 0.0 and out < cap:
                    t = dp / (dp - dq)
                    nxt[out, 0] = px + t * (qx - px)
                    nxt[out, 1] = pz + t * (qz - pz)
                    out += 1
                if out < cap:
                    nxt[out, 0] = qx
                    nxt[out, 1] = qz
                    out += 1
            elif dp >= 0.0 and out < cap:
                t = dp / (dp - dq)
                nxt[out, 0] = px + t * (qx - px)
                nxt[out, 1] = pz + t * (qz - pz)
                out += 1
        cur, nxt = nxt, cur
        count = out
        if count < 3:
            return 0.0

    area = abs(_shoelace(cur, count))
    return area if area >= AREA_EPS else 0.0


@njit
def _rect_intersection(a, b):
    ca = _rect_corners(a[0], a[1], a[2], a[3], a[4])
    cb = _rect_corners(b[0], b[1], b[2], b[3], b[4])
    inter = _clip_area(ca, cb)
    return min(inter, a[2] * a[3], b[2] * b[3])


@njit
def _box2d_matrix_loop(a, b, over_first):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
        for j in range(m):
            iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
            if iw <= 0.0:
                continue
            ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
            if ih <= 0.0:
                continue
            inter = iw * ih
            if over_first:
                denom = area_a
            else:
                denom = area_a + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter
            if denom > 0.0:
                out[i, j] = inter / denom
    return out


def _box2d_matrix_numpy(a, b, over_first):
    a = a[:, None, :]
    b = b[None, :, :]
    iw = np.clip(np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0]), 0.0, None)
    ih = np.clip(np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1]), 0.0, None)
    inter = iw * ih
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    if over_first:
        denom = np.broadcast_to(area_a, inter.shape)
    else:
        area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
        denom = area_a + area_b - inter
    out = np.zeros(inter.shape)
    np.divide(inter, denom, out=out, where=denom > 0.0)
    return out


@njit
def _bev_matrix_loop(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        area_a = a[i, 2] * a[i, 3]
        ra = 0.5 * math.hypot(a[i, 2], a[i, 3])
        for j in range(m):
            rb = 0.5 * math.hypot(b[j, 2], b[j, 3])
            # circumscribed circles apart -> no overlap
            if math.hypot(a[i, 0] - b[j, 0], a[i, 1] - b[j, 1]) >= ra + rb:
                continue
            inter = _rect_intersection(a[i], b[j])
            union = area_a + b[j, 2] * b[j, 3] - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


@njit
def _box3d_matrix_loop(a, b):
    n = a.shape[0]
    m = b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        vol_a = a[i, 2] * a[i, 3] * a[i, 6]
        ra = 0.5 * math.hypot(a[i, 2], a[i, 3])
        for j in range(m):
            dy = min(a[i, 5], b[j, 5]) - max(a[i, 5] - a[i, 6], b[j, 5] - b[j, 6])
            dy = min(dy, a[i, 6], b[j, 6])
            if dy <= 0.0:
                continue
            rb = 0.5 * math.hypot(b[j, 2], b[j, 3])
            if math.hypot(a[i, 0] - b[j, 0], a[i, 1] - b[j, 1]) >= ra + rb:
                continue
            inter = _rect_intersection(a[i], b[j]) * dy
            union = vol_a + b[j, 2] * b[j, 3] * b[j, 6] - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


def _box3d_matrix_numpy(a, b):
    # vertical overlap is vectorised; the ground-plane clip stays per pair
    top = np.minimum(a[:, None, 5], b[None, :, 5])
    base = np.maximum(a[:, None, 5] - a[:, None, 6], b[None, :, 5] - b[None, :, 6])
    dy = np.clip(top - base, 0.0, np.minimum(a[:, None, 6], b[None, :, 6]))
    out = np.zeros(dy.shape)
    vol_a = a[:, 2] * a[:, 3] * a[:, 6]
    vol_b = b[:, 2] * b[:, 3] * b[:, 6]
    for i, j in zip(*np.nonzero(dy > 0.0)):
        inter = _rect_intersection(a[i], b[j]) * dy[i, j]
        union = vol_a[i] + vol_b[j] - inter
        if union > 0.0:
            out[i, j] = inter / union
    return out


# ---------------------------------------------------------------------------
# pairwise matrices


def _as_rows(x, cols):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    return arr.reshape(-1, cols)


def box2d_overlap_matrix(a, b, over_first: bool = False) -> np.ndarray:
    """Pairwise overlap of ``(n, 4)`` and ``(m, 4)`` image boxes.

    With ``over_first`` the intersection is divided by the area of the box
    from ``a`` instead of the union (used for DontCare suppression).
    """
    a = _as_rows(a, BOX2D_COLS)
    b = _as_rows(b, BOX2D_COLS)
    if USE_NUMBA:
        return _box2d_matrix_loop(a, b, over_first)
    return _box2d_matrix_numpy(a, b, over_first)


def bev_iou_matrix(a, b) -> np.ndarray:
    return _bev_matrix_loop(_as_rows(a, BEV_COLS), _as_rows(b, BEV_COLS))


def box3d_iou_matrix(a, b) -> np.ndarray:
    a = _as_rows(a, BOX3D_COLS)
    b = _as_rows(b, BOX3D_COLS)
    if USE_NUMBA:
        return _box3d_matrix_loop(a, b)
    return _box3d_matrix_numpy(a, b)


# ---------------------------------------------------------------------------
# scalar API


def iou_2d(a: Box2D, b: Box2D) -> float:
    return float(box2d_overlap_matrix(a.as_array(), b.as_array())[0, 0])


def bev_corners(r: BevRect) -> ConvexPolygon:
    return ConvexPolygon(_rect_corners(r.center_x, r.center_z, r.length, r.width, r.yaw))


def polygon_area(poly: ConvexPolygon) -> float:
    pts = np.asarray(poly.vertices, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    return abs(float(_shoelace(pts, len(pts))))


def convex_intersection_area(a: ConvexPolygon, b: ConvexPolygon) -> float:
    pa = np.ascontiguousarray(a.vertices, dtype=np.float64)
    pb = np.ascontiguousarray(b.vertices, dtype=np.float64)
    if len(pa) < 3 or len(pb) < 3:
        return 0.0
    return float(_clip_area(pa, pb))


def iou_bev(a: BevRect, b: BevRect) -> float:
    inter = float(_rect_intersection(a.as_array(), b.as_array()))
    union = a.area + b.area - inter
    return inter / union if union > 0.0 else 0.0


def vertical_overlap(a: OrientedBox3D, b: OrientedBox3D) -> float:
    top = min(a.y_bottom, b.y_bottom)
    base = max(a.y_bottom - a.height, b.y_bottom - b.height)
    # y - (y - h) can round above h
    return max(0.0, min(top - base, a.height, b.height))


def iou_3d(a: OrientedBox3D, b: OrientedBox3D) -> float:
    dy = vertical_overlap(a, b)
    if dy <= 0.0:
        return 0.0
    inter = float(_rect_intersection(a.bev.as_array(), b.bev.as_array())) * dy
    union = a.volume + b.volume - inter
    return inter / union if union > 0.0 else 0.0


# ---------------------------------------------------------------------------
# label objects -> packed rows


def box2d_rows(objects: Sequence) -> np.ndarray:
    if not objects:
        return np.zeros((0, BOX2D_COLS))
    return np.array([o.box2d for o in objects], dtype=np.float64)


def bev_rows(objects: Sequence) -> np.ndarray:
    if not objects:
        return np.zeros((0, BEV_COLS))
    # dims are (h, w, l); location is (x, y, z)
    return np.array(
        [(o.location[0], o.location[2], o.dims[2], o.dims[1], o.rotation_y) for o in objects],
        dtype=np.float64,
    )


def box3d_rows(objects: Sequence) -> np.ndarray:
    if not objects:
        return np.zeros((0, BOX3D_COLS))
    return np.array(
        [
            (o.location[0], o.location[2], o.dims[2], o.dims[1], o.rotation_y, o.location[1], o.dims[0])
            for o in objects
        ],
        dtype=np.float64,
    )


def iou_matrix(kind: str, gts: Sequence, dets: Sequence) -> np.ndarray:
    """Pairwise IoU between two lists of label objects for ``kind`` in {2d, bev, 3d}."""
    if kind == "2d":
        return box2d_overlap_matrix(box2d_rows(gts), box2d_rows(dets))
    if kind == "bev":
        return bev_iou_matrix(bev_rows(gts), bev_rows(dets))
    if kind == "3d":
        return box3d_iou_matrix(box3d_rows(gts), box3d_rows(dets))
    raise ValueError(f"unknown IoU kind: {kind!r}")
