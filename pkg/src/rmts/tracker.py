"""Per-stream online tracking state machine.

Two operating modes share one pipeline:

* ``byte``: two-stage association.  High-score detections are matched to the
  pool of tracked and lost tracklets first; low-score detections then rescue
  tracks that went unmatched, so a brief confidence dip does not break an
  identity.
* ``botsort``: the same pipeline plus camera-motion compensation of every
  predicted state and appearance fusion (IoU distance combined with halved
  embedding cosine distance) in the first stage.

A tracker state is owned by exactly one worker at a time; ``step`` mutates
the state it is given (and returns it) and is deterministic: the same state,
frame and config always produce identical results.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import kalman
from .core import BBox, Detection, FrameInput, fuse_score, iou_matrix_tlwh
from .errors import ContractViolationError, InputError, InternalError
from .assign import solve

MODE_BYTE = "byte"
MODE_BOTSORT = "botsort"


class TrackStatus(IntEnum):
    TENTATIVE = 0
    TRACKED = 1
    LOST = 2
    REMOVED = 3


@dataclass
class TrackerConfig:
    """All thresholds of the association pipeline.

    Defaults follow the published operating point: detection score threshold
    0.6, first-stage IoU floor 0.2 (cost gate 0.8), 30-frame track buffer.
    """

    tau_high: float = 0.6
    tau_low: float = 0.1
    new_track_threshold: float = 0.7
    first_gate: float = 0.8
    second_gate: float = 0.5
    tentative_gate: float = 0.7
    track_buffer: int = 30
    fuse_score_enabled: bool = True
    mode: str = MODE_BYTE
    emb_theta: float = 0.25
    prox_theta: float = 0.5
    emb_momentum: float = 0.9
    class_aware: bool = True

    def validate(self) -> "TrackerConfig":
        # tau_low == tau_high is the documented degenerate single-stage mode.
        if not (0.0 <= self.tau_low <= self.tau_high <= self.new_track_threshold <= 1.0):
            raise InputError(
                "need tau_low <= tau_high <= new_track_threshold within [0, 1], got "
                f"{self.tau_low}, {self.tau_high}, {self.new_track_threshold}"
            )
        if self.track_buffer <= 0:
            raise InputError(f"track_buffer must be > 0, got {self.track_buffer}")
        if self.mode not in (MODE_BYTE, MODE_BOTSORT):
            raise InputError(f"mode must be '{MODE_BYTE}' or '{MODE_BOTSORT}', got {self.mode!r}")
        for name in ("first_gate", "second_gate", "tentative_gate"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")
        for name in ("emb_theta", "prox_theta", "emb_momentum"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise InputError(f"{name} must be in [0, 1], got {v}")
        return self


@dataclass
class Track:
    """A persistent identity with Kalman state, lifecycle status and a
    smoothed appearance embedding."""

    track_id: int
    class_id: int
    kalman: kalman.KalmanState
    status: TrackStatus
    score: float
    last_update_frame: int
    start_frame: int
    embedding: Optional[np.ndarray] = None
    # (left, top, width, height) of the current prediction, refreshed by the
    # predict/compensate pass each frame; used to build cost matrices.
    pred_tlwh: Optional[np.ndarray] = None

    def bbox(self) -> BBox:
        cx, cy, w, h = self.kalman.mean[:4]
        w = max(float(w), 0.0)
        h = max(float(h), 0.0)
        return BBox(float(cx) - w / 2.0, float(cy) - h / 2.0, w, h)


@dataclass
class TrackerState:
    config: TrackerConfig
    tracks: list[Track] = field(default_factory=list)
    next_id: int = 1
    frame_no: int = 0


class OutputTrack(NamedTuple):
    track_id: int
    bbox: BBox
    score: float
    class_id: int


@dataclass(frozen=True)
class FrameOutput:
    """Tracked-status tracks of one frame, ordered by ascending id."""

    frame_no: int
    tracks: tuple[OutputTrack, ...]


def new_state(config: Optional[TrackerConfig] = None) -> TrackerState:
    cfg = (config or TrackerConfig()).validate()
    return TrackerState(config=cfg)


def split_detections(
    dets: Sequence[Detection], cfg: TrackerConfig
) -> tuple[list[Detection], list[Detection]]:
    """Partition detections by confidence: high (score >= tau_high, inclusive),
    low (tau_low <= score < tau_high).  Anything below tau_low is discarded."""
    high = [d for d in dets if d.score >= cfg.tau_high]
    low = [d for d in dets if cfg.tau_low <= d.score < cfg.tau_high]
    return high, low


def fuse_motion_appearance(
    d_iou: np.ndarray, d_emb_half: np.ndarray, cfg: TrackerConfig
) -> np.ndarray:
    """Combine IoU distance with halved embedding cosine distance.

    The appearance term only participates where it is confident
    (d_emb_half <= emb_theta) and the boxes are already plausibly close
    (d_iou <= prox_theta); elsewhere it is masked to 1 so the minimum falls
    back to the motion cost.
    """
    d_iou = np.asarray(d_iou, dtype=np.float64)
    d_emb_half = np.asarray(d_emb_half, dtype=np.float64)
    if d_iou.shape != d_emb_half.shape:
        raise InternalError(
            f"fusion shape mismatch: {d_iou.shape} vs {d_emb_half.shape}"
        )
    masked = np.where(
        (d_emb_half <= cfg.emb_theta) & (d_iou <= cfg.prox_theta), d_emb_half, 1.0
    )
    return np.minimum(d_iou, masked)


def update_embedding(
    track_emb: np.ndarray, det_emb: np.ndarray, momentum: float
) -> np.ndarray:
    """Exponentially smooth a track's appearance with the matched detection's.

    Returns normalize(momentum * track + (1 - momentum) * det) as float32.
    If the mixture is the zero vector the previous embedding is kept.
    """
    if track_emb.shape != det_emb.shape:
        raise InputError(
            f"embedding dimensions differ: {track_emb.shape} vs {det_emb.shape}"
        )
    mixed = momentum * track_emb.astype(np.float64) + (1.0 - momentum) * det_emb.astype(
        np.float64
    )
    norm = float(np.linalg.norm(mixed))
    if norm == 0.0:
        return track_emb
    out = (mixed / norm).astype(np.float32)
    out.setflags(write=False)
    return out


def _embedding_half_distance(tracks: Sequence[Track], dets: Sequence[Detection]) -> np.ndarray:
    t = np.stack([tr.embedding for tr in tracks]).astype(np.float64)
    d = np.stack([de.embedding for de in dets]).astype(np.float64)
    if t.shape[1] != d.shape[1]:
        raise InputError(
            f"mixed embedding dimensions: tracks {t.shape[1]}, detections {d.shape[1]}"
        )
    return np.clip(0.5 * (1.0 - t @ d.T), 0.0, 1.0)


def _iou_cost(tracks: Sequence[Track], dets: Sequence[Detection]) -> np.ndarray:
    t = (
        np.stack([tr.pred_tlwh for tr in tracks])
        if tracks
        else np.zeros((0, 4), dtype=np.float64)
    )
    d = (
        np.array([de.bbox.as_tlwh() for de in dets], dtype=np.float64)
        if dets
        else np.zeros((0, 4), dtype=np.float64)
    )
    return 1.0 - iou_matrix_tlwh(t, d)


def _first_stage_cost(
    tracks: Sequence[Track], dets: Sequence[Detection], cfg: TrackerConfig
) -> np.ndarray:
    cost = _iou_cost(tracks, dets)
    if cfg.fuse_score_enabled:
        cost = fuse_score(cost, [d.score for d in dets])
    if cfg.mode == MODE_BOTSORT and tracks and dets:
        # Appearance participates only when every candidate carries a vector.
        if all(t.embedding is not None for t in tracks) and all(
            d.embedding is not None for d in dets
        ):
            cost = fuse_motion_appearance(cost, _embedding_half_distance(tracks, dets), cfg)
    return cost


def _second_stage_cost(
    tracks: Sequence[Track], dets: Sequence[Detection], cfg: TrackerConfig
) -> np.ndarray:
    return _iou_cost(tracks, dets)


def _associate(
    tracks: Sequence[Track],
    dets: Sequence[Detection],
    cost_fn: Callable[[Sequence[Track], Sequence[Detection], TrackerConfig], np.ndarray],
    gate: float,
    cfg: TrackerConfig,
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Match tracks to detections, optionally per class.

    Returns (pairs, unmatched_track_indices, unmatched_det_indices), all in
    terms of the input sequences.
    """
    if not tracks or not dets:
        return [], list(range(len(tracks))), list(range(len(dets)))

    if not cfg.class_aware:
        res = solve(cost_fn(tracks, dets, cfg), gate)
        return (
            list(res.matches),
            list(res.unmatched_rows),
            list(res.unmatched_cols),
        )

    by_class: dict[int, tuple[list[int], list[int]]] = {}
    for i, t in enumerate(tracks):
        by_class.setdefault(t.class_id, ([], []))[0].append(i)
    for j, d in enumerate(dets):
        by_class.setdefault(d.class_id, ([], []))[1].append(j)

    pairs: list[tuple[int, int]] = []
    matched_t: set[int] = set()
    matched_d: set[int] = set()
    for cls in sorted(by_class):
        t_idx, d_idx = by_class[cls]
        if not t_idx or not d_idx:
            continue
        sub_tracks = [tracks[i] for i in t_idx]
        sub_dets = [dets[j] for j in d_idx]
        res = solve(cost_fn(sub_tracks, sub_dets, cfg), gate)
        for r, c in res.matches:
            pairs.append((t_idx[r], d_idx[c]))
            matched_t.add(t_idx[r])
            matched_d.add(d_idx[c])
    pairs.sort()
    u_tracks = [i for i in range(len(tracks)) if i not in matched_t]
    u_dets = [j for j in range(len(dets)) if j not in matched_d]
    return pairs, u_tracks, u_dets


def _apply_matches(
    pairs: Sequence[tuple[Track, Detection]], frame_no: int, cfg: TrackerConfig
) -> None:
    """Kalman-correct matched tracks in one batch and refresh their metadata."""
    if not pairs:
        return
    means = np.stack([t.kalman.mean for t, _ in pairs])
    covs = np.stack([t.kalman.covariance for t, _ in pairs])
    z = np.array([d.bbox.center_size() for _, d in pairs], dtype=np.float64)
    new_means, new_covs = kalman.multi_update(means, covs, z)
    for k, (track, det) in enumerate(pairs):
        track.kalman = kalman.make_state(new_means[k], new_covs[k])
        track.status = TrackStatus.TRACKED
        track.score = det.score
        track.last_update_frame = frame_no
        if det.embedding is not None:
            if track.embedding is None:
                track.embedding = det.embedding
            else:
                track.embedding = update_embedding(
                    track.embedding, det.embedding, cfg.emb_momentum
                )


def _store_predictions(tracks: Sequence[Track], means, covs) -> None:
    w = np.maximum(means[:, 2], 0.0)
    h = np.maximum(means[:, 3], 0.0)
    tlwh = np.column_stack((means[:, 0] - w / 2.0, means[:, 1] - h / 2.0, w, h))
    for k, t in enumerate(tracks):
        t.kalman = kalman.make_state(means[k], covs[k])
        t.pred_tlwh = tlwh[k]


def _predict_all(tracks: Sequence[Track]) -> None:
    if not tracks:
        return
    means = np.stack([t.kalman.mean for t in tracks])
    covs = np.stack([t.kalman.covariance for t in tracks])
    _store_predictions(tracks, *kalman.multi_predict(means, covs))


def _compensate_all(tracks: Sequence[Track], transform) -> None:
    if not tracks:
        return
    means = np.stack([t.kalman.mean for t in tracks])
    covs = np.stack([t.kalman.covariance for t in tracks])
    _store_predictions(tracks, *kalman.multi_camera_motion(means, covs, transform))


def _check_embedding_dims(state: TrackerState, frame: FrameInput) -> None:
    dims = {t.embedding.shape[0] for t in state.tracks if t.embedding is not None}
    dims |= {d.embedding.shape[0] for d in frame.detections if d.embedding is not None}
    if len(dims) > 1:
        raise InputError(f"mixed embedding dimensions in stream: {sorted(dims)}")


def step(state: TrackerState, frame: FrameInput) -> tuple[TrackerState, FrameOutput]:
    """Advance the tracker by exactly one frame.

    Frames must arrive strictly in order (frame_no == state.frame_no + 1);
    reordering and deduplication are the streaming layer's job.
    """
    cfg = state.config
    if frame.frame_no != state.frame_no + 1:
        raise ContractViolationError(
            f"expected frame {state.frame_no + 1}, got {frame.frame_no}"
        )
    _check_embedding_dims(state, frame)
    fno = frame.frame_no
    state.frame_no = fno

    # Expire overdue lost tracks before anything can match them: a lost track
    # survives exactly track_buffer frames of absence and may re-match on the
    # last of them.
    kept: list[Track] = []
    for t in state.tracks:
        if (
            t.status == TrackStatus.LOST
            and fno - t.last_update_frame > cfg.track_buffer
        ):
            t.status = TrackStatus.REMOVED
        else:
            kept.append(t)
    state.tracks = kept

    # 1) predict every live track; 2) fold in camera motion if available.
    _predict_all(state.tracks)
    if cfg.mode == MODE_BOTSORT and frame.camera_motion is not None:
        _compensate_all(state.tracks, frame.camera_motion)

    # 3) confidence split.
    high, low = split_detections(frame.detections, cfg)

    # 4) stage one: high-score detections vs tracked + lost tracklets.
    pool = [t for t in state.tracks if t.status in (TrackStatus.TRACKED, TrackStatus.LOST)]
    was_tracked = [t.status == TrackStatus.TRACKED for t in pool]
    pairs1, u_track1, u_det1 = _associate(pool, high, _first_stage_cost, cfg.first_gate, cfg)
    _apply_matches([(pool[i], high[j]) for i, j in pairs1], fno, cfg)

    # 5) stage two: low-score detections rescue tracks that were tracked
    # before this frame (lost tracklets sit this one out).
    second_pool = [pool[i] for i in u_track1 if was_tracked[i]]
    pairs2, u_track2, _ = _associate(second_pool, low, _second_stage_cost, cfg.second_gate, cfg)
    _apply_matches([(second_pool[i], low[j]) for i, j in pairs2], fno, cfg)

    # Tentative tracks get their confirmation shot at the remaining
    # high-score detections.
    tentative = [t for t in state.tracks if t.status == TrackStatus.TENTATIVE]
    rem_high = [high[j] for j in u_det1]
    pairs3, u_tent, u_det3 = _associate(
        tentative, rem_high, _first_stage_cost, cfg.tentative_gate, cfg
    )
    _apply_matches([(tentative[i], rem_high[j]) for i, j in pairs3], fno, cfg)

    # 6) lifecycle: unmatched tracked -> lost; unmatched tentative -> removed.
    # (Lost tracks that stayed unmatched remain lost until the buffer runs out.)
    for i in u_track2:
        if second_pool[i].status == TrackStatus.TRACKED:
            second_pool[i].status = TrackStatus.LOST
    for i in u_tent:
        tentative[i].status = TrackStatus.REMOVED

    # 7) births from confident leftover detections.  On the very first frame
    # of a stream they are tracked immediately, otherwise they must survive
    # one confirmation frame.
    for j in u_det3:
        det = rem_high[j]
        if det.score < cfg.new_track_threshold:
            continue
        status = TrackStatus.TRACKED if fno == 1 else TrackStatus.TENTATIVE
        state.tracks.append(
            Track(
                track_id=state.next_id,
                class_id=det.class_id,
                kalman=kalman.initiate(det.bbox.center_size()),
                status=status,
                score=det.score,
                last_update_frame=fno,
                start_frame=fno,
                embedding=det.embedding,
            )
        )
        state.next_id += 1

    state.tracks = [t for t in state.tracks if t.status != TrackStatus.REMOVED]

    out = tuple(
        sorted(
            (
                OutputTrack(t.track_id, t.bbox(), t.score, t.class_id)
                for t in state.tracks
                if t.status == TrackStatus.TRACKED
            ),
            key=lambda o: o.track_id,
        )
    )
    return state, FrameOutput(frame_no=fno, tracks=out)


def track_sequence(
    detections: dict[int, list[Detection]],
    config: Optional[TrackerConfig] = None,
    camera_motion: Optional[dict] = None,
    frame_count: Optional[int] = None,
    stream_id: int = 1,
) -> list[FrameOutput]:
    """Run the tracker offline over a whole detection table.

    ``camera_motion`` maps frame numbers to transforms; frames without an
    entry get none.  ``frame_count`` extends the run past the last detection
    frame (useful when trailing frames are empty).
    """
    state = new_state(config)
    last = max(detections) if detections else 0
    if frame_count is not None:
        last = max(last, frame_count)
    outputs = []
    for fno in range(1, last + 1):
        cm = camera_motion.get(fno) if camera_motion is not None else None
        frame = FrameInput(
            stream_id=stream_id,
            frame_no=fno,
            detections=tuple(detections.get(fno, ())),
            camera_motion=cm,
        )
        _, out = step(state, frame)
        outputs.append(out)
    return outputs
