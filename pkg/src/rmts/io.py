"""Parsers and writers for detection, ground-truth, camera-motion and result
files.

All text formats are comma-separated (camera-motion files may also be
tab-separated), UTF-8, with LF or CRLF line endings accepted and LF emitted.
Malformed lines are rejected with the offending line number; blank lines are
permitted.  Numeric fields are parsed as reals and pinned to float32
precision, the precision the wire protocol carries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import AffineTransform, BBox, Detection, f32
from .errors import InputError
from .metrics import GROUND_TRUTH, RESULT, LabeledFrameSet
from .tracker import FrameOutput

import numpy as np

# VisDrone categories excluded by default: 0 (ignored regions), 11 (others).
VISDRONE_EXCLUDED_CATEGORIES = (0, 11)


def _lines(text: str):
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r").strip()
        if line:
            yield lineno, line


def _fields(line: str, lineno: int, expected: int, what: str) -> list[float]:
    parts = line.split(",")
    if len(parts) != expected:
        raise InputError(
            f"{what}: line {lineno}: expected {expected} comma-separated fields, "
            f"got {len(parts)}"
        )
    values = []
    for k, part in enumerate(parts):
        try:
            values.append(float(part))
        except ValueError:
            raise InputError(
                f"{what}: line {lineno}: field {k + 1} is not numeric: {part.strip()!r}"
            ) from None
    return values


def parse_mot_detections(text: str) -> dict[int, list[Detection]]:
    """Detector output in the 10-column layout
    ``frame,id,left,top,width,height,conf,x,y,z`` (id is -1).

    Confidences are clamped to [0, 1].  Detections keep their input order
    within each frame.
    """
    frames: dict[int, list[Detection]] = {}
    for lineno, line in _lines(text):
        v = _fields(line, lineno, 10, "detections")
        fno = int(v[0])
        if fno < 1:
            raise InputError(f"detections: line {lineno}: frame must be >= 1, got {fno}")
        score = min(1.0, max(0.0, v[6]))
        try:
            det = Detection(
                bbox=BBox(f32(v[2]), f32(v[3]), f32(v[4]), f32(v[5])),
                score=f32(score),
            )
        except InputError as exc:
            raise InputError(f"detections: line {lineno}: {exc}") from None
        frames.setdefault(fno, []).append(det)
    return {fno: frames[fno] for fno in sorted(frames)}


def parse_mot_labels(
    text: str,
    source: str = RESULT,
    treat_conf_as_flag: bool = False,
) -> LabeledFrameSet:
    """Identity-labelled boxes in MOT layout
    ``frame,id,left,top,width,height,conf[,class[,...]]`` (7 to 10 columns).

    With ``treat_conf_as_flag`` rows whose conf field is 0 are dropped
    (ground-truth convention for ignored entries).  The 8th column is used as
    the class id when present and non-negative, otherwise 0.
    """
    records = []
    seen: set[tuple[int, int]] = set()
    for lineno, line in _lines(text):
        parts = line.split(",")
        if not 7 <= len(parts) <= 10:
            raise InputError(
                f"{source}: line {lineno}: expected 7 to 10 comma-separated fields, "
                f"got {len(parts)}"
            )
        v = _fields(line, lineno, len(parts), source)
        fno, ident = int(v[0]), int(v[1])
        if fno < 1:
            raise InputError(f"{source}: line {lineno}: frame must be >= 1, got {fno}")
        if treat_conf_as_flag and v[6] == 0.0:
            continue
        if (fno, ident) in seen:
            raise InputError(
                f"{source}: line {lineno}: duplicate identity {ident} in frame {fno}"
            )
        seen.add((fno, ident))
        cls = int(v[7]) if len(v) >= 8 and v[7] >= 0 else 0
        try:
            box = BBox(f32(v[2]), f32(v[3]), f32(v[4]), f32(v[5]))
        except InputError as exc:
            raise InputError(f"{source}: line {lineno}: {exc}") from None
        records.append((fno, ident, box, cls))
    return LabeledFrameSet.from_records(records, source=source)


def parse_visdrone_annotations(
    text: str,
    excluded_categories: Iterable[int] = VISDRONE_EXCLUDED_CATEGORIES,
) -> LabeledFrameSet:
    """VisDrone MOT annotations:
    ``frame,target_id,left,top,width,height,score,category,truncation,occlusion``.

    Rows with score flag 0 (ignored regions) are dropped, as are the
    configured excluded categories.
    """
    excluded = set(excluded_categories)
    records = []
    seen: set[tuple[int, int]] = set()
    for lineno, line in _lines(text):
        v = _fields(line, lineno, 10, "visdrone")
        fno, ident = int(v[0]), int(v[1])
        if fno < 1:
            raise InputError(f"visdrone: line {lineno}: frame must be >= 1, got {fno}")
        if v[6] == 0.0:
            continue
        cat = int(v[7])
        if cat in excluded:
            continue
        if (fno, ident) in seen:
            raise InputError(
                f"visdrone: line {lineno}: duplicate target {ident} in frame {fno}"
            )
        seen.add((fno, ident))
        try:
            box = BBox(f32(v[2]), f32(v[3]), f32(v[4]), f32(v[5]))
        except InputError as exc:
            raise InputError(f"visdrone: line {lineno}: {exc}") from None
        records.append((fno, ident, box, cat))
    return LabeledFrameSet.from_records(records, source=GROUND_TRUTH)


class GmcTable:
    """Per-frame camera-motion transforms; frames without an entry are
    identity."""

    def __init__(self, transforms: Optional[dict[int, AffineTransform]] = None):
        self.transforms = dict(transforms or {})

    def get(self, frame_no: int) -> AffineTransform:
        return self.transforms.get(frame_no, AffineTransform.identity())

    def __len__(self) -> int:
        return len(self.transforms)

    def __eq__(self, other):
        return isinstance(other, GmcTable) and self.transforms == other.transforms


def parse_gmc_file(text: str) -> GmcTable:
    """Camera-motion file: ``frame, m00, m01, m10, m11, t0, t1`` per line,
    comma- or tab-separated."""
    transforms: dict[int, AffineTransform] = {}
    for lineno, line in _lines(text):
        v = _fields(line.replace("\t", ","), lineno, 7, "camera-motion")
        fno = int(v[0])
        if fno < 1:
            raise InputError(
                f"camera-motion: line {lineno}: frame must be >= 1, got {fno}"
            )
        if fno in transforms:
            raise InputError(
                f"camera-motion: line {lineno}: duplicate entry for frame {fno}"
            )
        m = np.array(
            [[f32(v[1]), f32(v[2])], [f32(v[3]), f32(v[4])]], dtype=np.float64
        )
        t = np.array([f32(v[5]), f32(v[6])], dtype=np.float64)
        try:
            transforms[fno] = AffineTransform(m, t)
        except InputError:
            raise InputError(
                f"camera-motion: frame {fno} (line {lineno}): matrix is singular"
            ) from None
    return GmcTable(transforms)


def write_results(outputs: Iterable[FrameOutput]) -> str:
    """MOT result text: ``frame,id,left,top,width,height,score,-1,-1,-1``.

    Frames ascend, ids ascend within each frame.  Geometry is written with
    two decimals and scores with six, after pinning to float32, so the output
    is byte-reproducible regardless of which path produced the values.
    """
    rows = []
    for out in outputs:
        seen_ids = set()
        for tr in out.tracks:
            if tr.track_id in seen_ids:
                raise InputError(
                    f"duplicate track id {tr.track_id} in frame {out.frame_no}"
                )
            seen_ids.add(tr.track_id)
            rows.append((out.frame_no, tr.track_id, tr.bbox, tr.score))
    rows.sort(key=lambda r: (r[0], r[1]))
    lines = []
    for fno, tid, box, score in rows:
        lines.append(
            f"{fno},{tid},{f32(box.left):.2f},{f32(box.top):.2f},"
            f"{f32(box.width):.2f},{f32(box.height):.2f},{f32(score):.6f},-1,-1,-1"
        )
    return "".join(line + "\n" for line in lines)


@dataclass
class SequenceBundle:
    """One sequence's inputs: detections, optional truth and camera motion."""

    name: str
    detections: dict[int, list[Detection]] = field(default_factory=dict)
    ground_truth: Optional[LabeledFrameSet] = None
    camera_motion: Optional[GmcTable] = None
    frame_count: int = 0

    def __post_init__(self):
        last_det = max(self.detections) if self.detections else 0
        if self.frame_count <= 0:
            self.frame_count = last_det
        if last_det > self.frame_count:
            raise InputError(
                f"detections reach frame {last_det} beyond frame_count {self.frame_count}"
            )
        if any(f < 1 for f in self.detections):
            raise InputError("detection frame indices must be >= 1")


def load_bundle(
    det_path: str,
    gmc_path: Optional[str] = None,
    gt_path: Optional[str] = None,
    name: Optional[str] = None,
    gt_format: str = "mot",
) -> SequenceBundle:
    """Assemble a bundle from files.  ``gt_format`` is ``mot`` or ``visdrone``."""
    import pathlib

    det_file = pathlib.Path(det_path)
    dets = parse_mot_detections(det_file.read_text(encoding="utf-8"))
    gmc = None
    if gmc_path is not None:
        gmc = parse_gmc_file(pathlib.Path(gmc_path).read_text(encoding="utf-8"))
    gt = None
    if gt_path is not None:
        text = pathlib.Path(gt_path).read_text(encoding="utf-8")
        if gt_format == "visdrone":
            gt = parse_visdrone_annotations(text)
        elif gt_format == "mot":
            gt = parse_mot_labels(text, source=GROUND_TRUTH, treat_conf_as_flag=True)
        else:
            raise InputError(f"unknown ground-truth format {gt_format!r}")
    return SequenceBundle(
        name=name or det_file.stem,
        detections=dets,
        ground_truth=gt,
        camera_motion=gmc,
    )
