"""Domain types and box geometry shared by every other module.

All types here are immutable values and all operations are pure functions,
so they are safe to use from any number of threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError


def f32(value: float) -> float:
    """Round to the nearest float32-representable value.

    The wire protocol carries geometry and scores as 32-bit floats, so inputs
    are pinned to that precision at the parsing boundary.  This keeps offline
    and streamed runs numerically identical.
    """
    return float(np.float32(value))


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box as (left, top, width, height) in pixel coordinates.

    Width/height of zero are permitted (degenerate boxes); negative sizes and
    non-finite values are rejected.
    """

    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        l, t, w, h = self.left, self.top, self.width, self.height
        if not (type(l) is float and type(t) is float and type(w) is float and type(h) is float):
            for name in ("left", "top", "width", "height"):
                v = getattr(self, name)
                try:
                    object.__setattr__(self, name, float(v))
                except (TypeError, ValueError):
                    raise InputError(f"BBox.{name} must be a number, got {v!r}") from None
            l, t, w, h = self.left, self.top, self.width, self.height
        if not (math.isfinite(l) and math.isfinite(t) and math.isfinite(w) and math.isfinite(h)):
            raise InputError(f"BBox values must be finite, got ({l}, {t}, {w}, {h})")
        if w < 0 or h < 0:
            raise InputError(f"BBox width/height must be >= 0, got ({w}, {h})")

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tlwh(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.width, self.height)

    def center_size(self) -> tuple[float, float, float, float]:
        """(cx, cy, w, h) form used by the motion filter."""
        return (
            self.left + self.width / 2.0,
            self.top + self.height / 2.0,
            self.width,
            self.height,
        )

    @staticmethod
    def from_center_size(cx: float, cy: float, w: float, h: float) -> "BBox":
        return BBox(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass(frozen=True, eq=False)
class Detection:
    """One detector output: box, confidence score, category, optional embedding.

    The embedding, when present, must be unit L2 norm (within 1e-6) and is
    stored as a read-only float32 vector.
    """

    bbox: BBox
    score: float
    class_id: int = 0
    embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        try:
            score = float(self.score)
        except (TypeError, ValueError):
            raise InputError(f"detection score must be a number, got {self.score!r}") from None
        if not (0.0 <= score <= 1.0):
            raise InputError(f"detection score must be in [0, 1], got {score!r}")
        object.__setattr__(self, "score", score)
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=np.float32)
            if emb.ndim != 1 or emb.size == 0:
                raise InputError("embedding must be a non-empty 1-D vector")
            norm = float(np.linalg.norm(emb.astype(np.float64)))
            if abs(norm - 1.0) > 1e-6:
                raise InputError(f"embedding must be unit-norm, got |e| = {norm}")
            emb.setflags(write=False)
            object.__setattr__(self, "embedding", emb)

    def __eq__(self, other):
        if not isinstance(other, Detection):
            return NotImplemented
        if (self.bbox, self.score, self.class_id) != (
            other.bbox,
            other.score,
            other.class_id,
        ):
            return False
        if (self.embedding is None) != (other.embedding is None):
            return False
        if self.embedding is None:
            return True
        return np.array_equal(self.embedding, other.embedding)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """Planar camera-motion transform: x' = M @ x + t (pixels).

    M must be invertible; the identity transform is M = I, t = 0.
    """

    linear: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.linear, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if m.shape != (2, 2) or t.shape != (2,):
            raise InputError("AffineTransform needs a 2x2 matrix and a 2-vector")
        if not (np.isfinite(m).all() and np.isfinite(t).all()):
            raise InputError("AffineTransform entries must be finite")
        if self._det(m) == 0.0:
            raise InputError("AffineTransform matrix is singular")
        m.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "linear", m)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def _det(m: np.ndarray) -> float:
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    @property
    def det(self) -> float:
        return self._det(self.linear)

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.eye(2), np.zeros(2))

    def is_identity(self) -> bool:
        return np.array_equal(self.linear, np.eye(2)) and np.array_equal(
            self.translation, np.zeros(2)
        )

    def __eq__(self, other):
        if not isinstance(other, AffineTransform):
            return NotImplemented
        return np.array_equal(self.linear, other.linear) and np.array_equal(
            self.translation, other.translation
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FrameInput:
    """All detections for one (stream, frame), plus an optional camera-motion
    transform computed externally."""

    stream_id: int
    frame_no: int
    detections: tuple[Detection, ...] = field(default_factory=tuple)
    camera_motion: Optional[AffineTransform] = None

    def __post_init__(self):
        if self.frame_no < 1:
            raise InputError(f"frame_no must be >= 1, got {self.frame_no}")
        dets = tuple(self.detections)
        dims = {d.embedding.shape[0] for d in dets if d.embedding is not None}
        if len(dims) > 1:
            raise InputError(f"mixed embedding dimensions in frame: {sorted(dims)}")
        object.__setattr__(self, "detections", dets)

    def __eq__(self, other):
        if not isinstance(other, FrameInput):
            return NotImplemented
        return (
            self.stream_id == other.stream_id
            and self.frame_no == other.frame_no
            and self.detections == other.detections
            and self.camera_motion == other.camera_motion
        )

    __hash__ = None


def iou_matrix_tlwh(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (N, 4) and (M, 4) arrays of (left, top, width, height).

    IoU of two boxes with zero-area union is defined as 0.
    """
    n, m = a.shape[0], b.shape[0]
    if n == 0 or m == 0:
        return np.zeros((n, m), dtype=np.float64)
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[None, :, 0], b[None, :, 1]
    bx2, by2 = bx1 + b[None, :, 2], by1 + b[None, :, 3]

    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    # Areas from the same corner differences as the intersection, so that
    # identical boxes give exactly 1 and the ratio never exceeds 1.
    area_a = (ax2 - ax1) * (ay2 - ay1)
    area_b = (bx2 - bx1) * (by2 - by1)
    union = area_a + area_b - inter

    out = np.zeros((n, m), dtype=np.float64)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def _tlwh_array(boxes: Sequence[BBox]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tlwh() for b in boxes], dtype=np.float64)


def iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU, shape (len(boxes_a), len(boxes_b))."""
    return iou_matrix_tlwh(_tlwh_array(boxes_a), _tlwh_array(boxes_b))


def iou(a: BBox, b: BBox) -> float:
    """IoU of two boxes; 0 when their union has zero area."""
    return float(iou_matrix([a], [b])[0, 0])


def iou_distance_matrix(
    track_boxes: Sequence[BBox], det_boxes: Sequence[BBox]
) -> np.ndarray:
    """Association cost matrix: entry (i, j) = 1 - iou(track_i, det_j)."""
    return 1.0 - iou_matrix(track_boxes, det_boxes)


def fuse_score(cost: np.ndarray, det_scores: Sequence[float]) -> np.ndarray:
    """Refine an IoU-distance matrix with detection confidences.

    Entry (i, j) becomes 1 - (1 - cost(i, j)) * score_j.  Computed as
    cost * score + (1 - score) so that scores of exactly 1 leave the input
    bit-for-bit unchanged.
    """
    cost = np.asarray(cost, dtype=np.float64)
    scores = np.asarray(det_scores, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[1] != scores.shape[0]:
        raise InputError(
            f"cost has {cost.shape[1] if cost.ndim == 2 else '?'} columns, "
            f"expected {scores.shape[0]}"
        )
    return cost * scores[None, :] + (1.0 - scores[None, :])
