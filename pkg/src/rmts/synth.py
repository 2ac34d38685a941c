"""Seeded synthetic detection scenarios.

Builds reproducible detection tables (and matching ground truth) for tracker
fixtures, end-to-end equivalence runs and throughput benchmarks.  All
geometry and scores are pinned to float32 precision so generated bundles
behave identically whether consumed in-process or replayed over the wire.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import BBox, Detection, f32


@dataclass
class ScriptedObject:
    """A linearly moving object with optional per-frame score overrides."""

    identity: int
    x0: float
    y0: float
    vx: float
    vy: float
    width: float = 20.0
    height: float = 20.0
    class_id: int = 0
    score: float = 0.9
    start_frame: int = 1
    end_frame: int = 10**9
    score_overrides: dict[int, float] = field(default_factory=dict)
    skip_frames: frozenset[int] = frozenset()
    embedding: Optional[np.ndarray] = None

    def box_at(self, frame_no: int) -> BBox:
        dt = frame_no - self.start_frame
        return BBox(
            f32(self.x0 + self.vx * dt),
            f32(self.y0 + self.vy * dt),
            f32(self.width),
            f32(self.height),
        )

    def score_at(self, frame_no: int) -> float:
        return f32(self.score_overrides.get(frame_no, self.score))


def unit_axis_embedding(dim: int, axis: int) -> np.ndarray:
    e = np.zeros(dim, dtype=np.float32)
    e[axis] = 1.0
    return e


def render_detections(
    objects: list[ScriptedObject], n_frames: int
) -> dict[int, list[Detection]]:
    """Detections per frame, in object-list order within each frame."""
    frames: dict[int, list[Detection]] = {f: [] for f in range(1, n_frames + 1)}
    for obj in objects:
        for fno in range(obj.start_frame, min(obj.end_frame, n_frames) + 1):
            if fno in obj.skip_frames:
                continue
            frames[fno].append(
                Detection(
                    bbox=obj.box_at(fno),
                    score=obj.score_at(fno),
                    class_id=obj.class_id,
                    embedding=obj.embedding,
                )
            )
    return frames


def render_ground_truth(
    objects: list[ScriptedObject], n_frames: int
) -> list[tuple[int, int, BBox, int]]:
    """(frame, identity, box, class) records for the scripted objects."""
    records = []
    for obj in objects:
        for fno in range(obj.start_frame, min(obj.end_frame, n_frames) + 1):
            records.append((fno, obj.identity, obj.box_at(fno), obj.class_id))
    records.sort(key=lambda r: (r[0], r[1]))
    return records


def dip_scenario(n_frames: int = 12, dip_start: int = 5, dip_len: int = 3):
    """One moving object whose score drops to 0.3 for a few frames."""
    overrides = {f: 0.3 for f in range(dip_start, dip_start + dip_len)}
    obj = ScriptedObject(
        identity=1, x0=50.0, y0=50.0, vx=4.0, vy=0.0, score=0.9,
        score_overrides=overrides,
    )
    return render_detections([obj], n_frames), list(range(dip_start, dip_start + dip_len))


def crossing_scenario(
    n_frames: int = 15, mid: int = 8, v: float = 5.0, size: float = 60.0,
    dy: float = 4.0, emb_dim: int = 8, with_embeddings: bool = True,
):
    """Two objects that approach, meet at frame ``mid`` and bounce apart.

    After the bounce, constant-velocity prediction carries each track past
    the meeting point, right onto the other object's detection, so box
    overlap alone favours swapping the identities.  The objects carry
    orthogonal appearance embeddings that disambiguate; a slight vertical
    offset keeps the pre-bounce frames unambiguous.
    """
    emb_a = unit_axis_embedding(emb_dim, 0) if with_embeddings else None
    emb_b = unit_axis_embedding(emb_dim, 1) if with_embeddings else None
    frames: dict[int, list[Detection]] = {}
    meet_x = v * (mid - 1)
    for fno in range(1, n_frames + 1):
        if fno <= mid:
            xa = v * (fno - 1)
            xb = 2.0 * meet_x - v * (fno - 1)
        else:
            xa = meet_x - v * (fno - mid)
            xb = meet_x + v * (fno - mid)
        frames[fno] = [
            Detection(BBox(f32(xa), 100.0, size, size), 0.95, 0, emb_a),
            Detection(BBox(f32(xb), f32(100.0 + dy), size, size), 0.95, 0, emb_b),
        ]
    return frames


def random_objects(
    rng: np.random.Generator,
    n_objects: int,
    n_frames: int,
    arena: float = 1000.0,
    emb_dim: int = 0,
    classes: tuple[int, ...] = (0,),
) -> list[ScriptedObject]:
    objects = []
    for k in range(n_objects):
        start = int(rng.integers(1, max(2, n_frames // 2)))
        lifetime = int(rng.integers(n_frames // 3, n_frames + 1))
        emb = None
        if emb_dim:
            v = rng.standard_normal(emb_dim)
            v = v / np.linalg.norm(v)
            emb = v.astype(np.float32)
            emb = (emb / np.linalg.norm(emb.astype(np.float64))).astype(np.float32)
        objects.append(
            ScriptedObject(
                identity=k + 1,
                x0=float(rng.uniform(0, arena)),
                y0=float(rng.uniform(0, arena)),
                vx=float(f32(rng.uniform(-5, 5))),
                vy=float(f32(rng.uniform(-5, 5))),
                width=float(f32(rng.uniform(15, 60))),
                height=float(f32(rng.uniform(15, 60))),
                class_id=int(rng.choice(classes)),
                score=float(f32(rng.uniform(0.65, 0.98))),
                start_frame=start,
                end_frame=min(n_frames, start + lifetime),
                embedding=emb,
            )
        )
    return objects


def jittered_detections(
    objects: list[ScriptedObject],
    n_frames: int,
    rng: np.random.Generator,
    jitter: float = 1.5,
    drop_rate: float = 0.05,
    low_score_rate: float = 0.15,
) -> dict[int, list[Detection]]:
    """Noisy detections: jittered boxes, occasional misses and low scores."""
    frames: dict[int, list[Detection]] = {f: [] for f in range(1, n_frames + 1)}
    for obj in objects:
        for fno in range(obj.start_frame, min(obj.end_frame, n_frames) + 1):
            if rng.uniform() < drop_rate:
                continue
            base = obj.box_at(fno)
            box = BBox(
                f32(base.left + rng.uniform(-jitter, jitter)),
                f32(base.top + rng.uniform(-jitter, jitter)),
                f32(max(1.0, base.width + rng.uniform(-jitter, jitter))),
                f32(max(1.0, base.height + rng.uniform(-jitter, jitter))),
            )
            if rng.uniform() < low_score_rate:
                score = f32(rng.uniform(0.15, 0.55))
            else:
                score = f32(min(0.99, max(0.6, obj.score + rng.uniform(-0.05, 0.05))))
            frames[fno].append(
                Detection(bbox=box, score=score, class_id=obj.class_id,
                          embedding=obj.embedding)
            )
    return frames


def camera_motion_table(n_frames: int, rng: np.random.Generator, every: int = 3):
    """Small random planar translations every few frames, identity elsewhere."""
    from .core import AffineTransform

    table = {}
    for fno in range(1, n_frames + 1):
        if fno % every == 0:
            t = np.array(
                [f32(rng.uniform(-2.0, 2.0)), f32(rng.uniform(-2.0, 2.0))],
                dtype=np.float64,
            )
            table[fno] = AffineTransform(np.eye(2), t)
        else:
            table[fno] = AffineTransform.identity()
    return table


def bench_detections(
    n_frames: int = 1000, dets_per_frame: int = 50, seed: int = 7
) -> dict[int, list[Detection]]:
    """Dense benchmark fixture: dets_per_frame moving objects, mild noise."""
    rng = np.random.default_rng(seed)
    objects = random_objects(rng, dets_per_frame, n_frames, arena=4000.0)
    for obj in objects:
        obj.start_frame = 1
        obj.end_frame = n_frames
    return jittered_detections(objects, n_frames, rng, jitter=1.0,
                               drop_rate=0.02, low_score_rate=0.1)
