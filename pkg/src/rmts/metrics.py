"""Tracking evaluation: CLEAR (MOTA/FP/FN/IDSW), identity (IDF1) and HOTA.

CLEAR matches per frame at a fixed IoU floor of 0.5, retaining the previous
frame's pairings first (continuity preference) before optimally assigning
the rest.  IDF1 picks the identity-to-identity matching that maximizes the
number of co-occurring overlapped detections.  HOTA sweeps 19 localization
thresholds; at each one the per-frame matching maximizes a global
association-reinforcement score (the co-occurrence count of the identity
pair, computed in a first pass) with IoU as a tie-break.

Counts aggregate across sequences by summation; ratios are recomputed from
the summed counts.  All functions are pure; per-sequence evaluations can run
in parallel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .assign import FORBIDDEN, solve
from .core import BBox, iou_matrix
from .errors import InputError

CLEAR_IOU_GATE = 0.5
ID_IOU_GATE = 0.5
HOTA_ALPHAS = tuple(round(0.05 * i, 2) for i in range(1, 20))
# Reinforcement counts are integers; IoU only breaks ties between them.
HOTA_TIEBREAK_EPS = 1e-3

GROUND_TRUTH = "gt"
RESULT = "result"


class LabeledBox(NamedTuple):
    identity: int
    bbox: BBox
    class_id: int


@dataclass(frozen=True)
class LabeledFrameSet:
    """Identity-labelled boxes per frame, for ground truth or tracker output."""

    frames: dict[int, tuple[LabeledBox, ...]]
    source: str = GROUND_TRUTH

    def __post_init__(self):
        for fno, items in self.frames.items():
            ids = [it.identity for it in items]
            if len(ids) != len(set(ids)):
                dup = sorted({i for i in ids if ids.count(i) > 1})
                raise InputError(
                    f"duplicate identities {dup} in frame {fno} of {self.source}"
                )

    @staticmethod
    def from_records(
        records: Iterable[tuple[int, int, BBox, int]], source: str = GROUND_TRUTH
    ) -> "LabeledFrameSet":
        frames: dict[int, list[LabeledBox]] = {}
        for fno, ident, box, cls in records:
            frames.setdefault(fno, []).append(LabeledBox(ident, box, cls))
        return LabeledFrameSet(
            frames={f: tuple(frames[f]) for f in sorted(frames)}, source=source
        )

    def frame_numbers(self) -> list[int]:
        return sorted(self.frames)

    def total_boxes(self) -> int:
        return sum(len(v) for v in self.frames.values())


@dataclass(frozen=True)
class ClearReport:
    mota: float
    fp: int
    fn: int
    idsw: int
    num_gt: int


@dataclass(frozen=True)
class IdReport:
    idf1: float
    idtp: int
    idfp: int
    idfn: int


@dataclass(frozen=True)
class HotaReport:
    hota: float
    deta: float
    assa: float
    loca: float
    # (deta_a, assa_a, hota_a) per alpha in HOTA_ALPHAS order.
    per_alpha: tuple[tuple[float, float, float], ...]
    # Raw per-alpha statistics kept for cross-sequence aggregation.
    tp: tuple[int, ...]
    fn: tuple[int, ...]
    fp: tuple[int, ...]
    ass_sum: tuple[float, ...]
    loc_sum: tuple[float, ...]


@dataclass(frozen=True)
class MetricsReport:
    """Everything the report tables need for one sequence (or an aggregate)."""

    clear: ClearReport
    ident: IdReport
    hota: HotaReport
    name: str = ""
    fps: Optional[float] = None


def _pair_allowed(
    ious: np.ndarray,
    gt_items: Sequence[LabeledBox],
    res_items: Sequence[LabeledBox],
    floor: float,
    class_aware: bool,
) -> np.ndarray:
    allowed = ious >= floor
    if class_aware and allowed.any():
        g_cls = np.array([g.class_id for g in gt_items])
        r_cls = np.array([r.class_id for r in res_items])
        allowed &= g_cls[:, None] == r_cls[None, :]
    return allowed


def _union_frames(gt: LabeledFrameSet, res: LabeledFrameSet) -> list[int]:
    return sorted(set(gt.frames) | set(res.frames))


def _clear_mota(fp: int, fn: int, idsw: int, num_gt: int) -> float:
    if num_gt == 0:
        return 1.0 if (fp + idsw) == 0 else -math.inf
    return 1.0 - (fp + fn + idsw) / num_gt


def evaluate_clear(
    gt: LabeledFrameSet,
    res: LabeledFrameSet,
    iou_gate: float = CLEAR_IOU_GATE,
    class_aware: bool = True,
) -> ClearReport:
    """CLEAR counts and MOTA.

    Per frame, ground truth is matched to results on IoU distance with pairs
    below the IoU floor forbidden; pairings from the previous frame are
    retained first when still valid.  A matched object whose result identity
    differs from its last matched identity scores one identity switch.
    """
    fp = fn = idsw = 0
    num_gt = gt.total_boxes()
    last_match: dict[int, int] = {}
    prev_pairs: dict[int, int] = {}

    for fno in _union_frames(gt, res):
        g_items = gt.frames.get(fno, ())
        r_items = res.frames.get(fno, ())
        ious = iou_matrix([g.bbox for g in g_items], [r.bbox for r in r_items])
        allowed = _pair_allowed(ious, g_items, r_items, iou_gate, class_aware)

        r_index = {r.identity: j for j, r in enumerate(r_items)}
        taken_g: set[int] = set()
        taken_r: set[int] = set()
        pairs: list[tuple[int, int]] = []
        for gi, g in enumerate(g_items):
            rj = r_index.get(prev_pairs.get(g.identity))
            if rj is not None and rj not in taken_r and allowed[gi, rj]:
                pairs.append((gi, rj))
                taken_g.add(gi)
                taken_r.add(rj)

        free_g = [gi for gi in range(len(g_items)) if gi not in taken_g]
        free_r = [rj for rj in range(len(r_items)) if rj not in taken_r]
        if free_g and free_r:
            cost = np.where(
                allowed[np.ix_(free_g, free_r)],
                1.0 - ious[np.ix_(free_g, free_r)],
                FORBIDDEN,
            )
            for r, c in solve(cost).matches:
                pairs.append((free_g[r], free_r[c]))

        for gi, rj in pairs:
            g_id = g_items[gi].identity
            r_id = r_items[rj].identity
            if g_id in last_match and last_match[g_id] != r_id:
                idsw += 1
            last_match[g_id] = r_id
        fn += len(g_items) - len(pairs)
        fp += len(r_items) - len(pairs)
        prev_pairs = {g_items[gi].identity: r_items[rj].identity for gi, rj in pairs}

    return ClearReport(
        mota=_clear_mota(fp, fn, idsw, num_gt), fp=fp, fn=fn, idsw=idsw, num_gt=num_gt
    )


def evaluate_idf1(
    gt: LabeledFrameSet,
    res: LabeledFrameSet,
    iou_gate: float = ID_IOU_GATE,
    class_aware: bool = True,
) -> IdReport:
    """Identity-level F1.

    The bipartite weight between a ground-truth identity and a result
    identity is the number of frames where their boxes overlap at IoU >= 0.5;
    the matching that maximizes total weight defines IDTP.
    """
    gt_ids = sorted({g.identity for items in gt.frames.values() for g in items})
    res_ids = sorted({r.identity for items in res.frames.values() for r in items})
    g_pos = {g: i for i, g in enumerate(gt_ids)}
    r_pos = {r: j for j, r in enumerate(res_ids)}

    weight = np.zeros((len(gt_ids), len(res_ids)), dtype=np.float64)
    for fno in _union_frames(gt, res):
        g_items = gt.frames.get(fno, ())
        r_items = res.frames.get(fno, ())
        if not g_items or not r_items:
            continue
        ious = iou_matrix([g.bbox for g in g_items], [r.bbox for r in r_items])
        allowed = _pair_allowed(ious, g_items, r_items, iou_gate, class_aware)
        for gi, rj in zip(*np.nonzero(allowed)):
            weight[g_pos[g_items[gi].identity], r_pos[r_items[rj].identity]] += 1.0

    # gate 0 keeps zero-weight pairs matchable so the solver maximizes total
    # weight globally (a dummy pairing never displaces a real one).
    idtp = 0
    if weight.size:
        for r, c in solve(-weight, gate=0.0).matches:
            idtp += int(weight[r, c])
    total_gt = gt.total_boxes()
    total_res = res.total_boxes()
    idfn = total_gt - idtp
    idfp = total_res - idtp
    denom = 2 * idtp + idfp + idfn
    idf1 = (2 * idtp / denom) if denom > 0 else 1.0
    return IdReport(idf1=idf1, idtp=idtp, idfp=idfp, idfn=idfn)


def _hota_from_counts(
    tp: Sequence[int],
    fn: Sequence[int],
    fp: Sequence[int],
    ass_sum: Sequence[float],
    loc_sum: Sequence[float],
) -> HotaReport:
    per_alpha = []
    for k in range(len(HOTA_ALPHAS)):
        denom = tp[k] + fn[k] + fp[k]
        deta = tp[k] / denom if denom > 0 else 0.0
        assa = ass_sum[k] / tp[k] if tp[k] > 0 else 0.0
        hota_a = math.sqrt(deta * assa)
        per_alpha.append((deta, assa, hota_a))
    n = len(HOTA_ALPHAS)
    loca_values = [
        loc_sum[k] / tp[k] if tp[k] > 0 else 1.0 for k in range(n)
    ]
    return HotaReport(
        hota=sum(p[2] for p in per_alpha) / n,
        deta=sum(p[0] for p in per_alpha) / n,
        assa=sum(p[1] for p in per_alpha) / n,
        loca=sum(loca_values) / n,
        per_alpha=tuple(per_alpha),
        tp=tuple(int(v) for v in tp),
        fn=tuple(int(v) for v in fn),
        fp=tuple(int(v) for v in fp),
        ass_sum=tuple(float(v) for v in ass_sum),
        loc_sum=tuple(float(v) for v in loc_sum),
    )


def evaluate_hota(
    gt: LabeledFrameSet, res: LabeledFrameSet, class_aware: bool = True
) -> HotaReport:
    """Higher-order tracking accuracy over 19 localization thresholds.

    At each threshold alpha: candidate pairs are same-frame detections with
    IoU >= alpha.  A first pass counts, per identity pair, how often it
    appears among candidates; the second pass matches per frame, maximizing
    the summed counts plus a small IoU tie-break.  Matched pairs are the TPs
    from which detection, association and localization scores derive.
    """
    frame_nos = _union_frames(gt, res)
    total_gt = gt.total_boxes()
    total_res = res.total_boxes()
    gt_count: dict[int, int] = {}
    res_count: dict[int, int] = {}
    for items in gt.frames.values():
        for g in items:
            gt_count[g.identity] = gt_count.get(g.identity, 0) + 1
    for items in res.frames.values():
        for r in items:
            res_count[r.identity] = res_count.get(r.identity, 0) + 1

    # Per frame geometry is alpha-independent; compute once.
    per_frame = []
    for fno in frame_nos:
        g_items = gt.frames.get(fno, ())
        r_items = res.frames.get(fno, ())
        ious = iou_matrix([g.bbox for g in g_items], [r.bbox for r in r_items])
        base = _pair_allowed(ious, g_items, r_items, 0.0, class_aware)
        per_frame.append((g_items, r_items, ious, base))

    tp_l, fn_l, fp_l, ass_l, loc_l = [], [], [], [], []
    for alpha in HOTA_ALPHAS:
        # Pass one: global co-occurrence counts of identity pairs.
        counts: dict[tuple[int, int], int] = {}
        for g_items, r_items, ious, base in per_frame:
            cand = base & (ious >= alpha)
            for gi, rj in zip(*np.nonzero(cand)):
                key = (g_items[gi].identity, r_items[rj].identity)
                counts[key] = counts.get(key, 0) + 1

        # Pass two: per-frame matching maximizing reinforcement + eps * IoU.
        tps: list[tuple[int, int, float]] = []
        for g_items, r_items, ious, base in per_frame:
            cand = base & (ious >= alpha)
            if not cand.any():
                continue
            weights = np.zeros_like(ious)
            for gi, rj in zip(*np.nonzero(cand)):
                key = (g_items[gi].identity, r_items[rj].identity)
                weights[gi, rj] = counts[key] + HOTA_TIEBREAK_EPS * ious[gi, rj]
            # Non-candidates weigh zero and stay matchable (gate 0), so the
            # solver maximizes total weight; zero-weight pairings are then
            # discarded rather than counted as TPs.
            for r, c in solve(-weights, gate=0.0).matches:
                if weights[r, c] > 0.0:
                    tps.append(
                        (g_items[r].identity, r_items[c].identity, float(ious[r, c]))
                    )

        tp_pair_count: dict[tuple[int, int], int] = {}
        for g_id, r_id, _ in tps:
            tp_pair_count[(g_id, r_id)] = tp_pair_count.get((g_id, r_id), 0) + 1
        ass_total = 0.0
        for g_id, r_id, _ in tps:
            tpa = tp_pair_count[(g_id, r_id)]
            fna = gt_count[g_id] - tpa
            fpa = res_count[r_id] - tpa
            ass_total += tpa / (tpa + fna + fpa)

        tp_l.append(len(tps))
        fn_l.append(total_gt - len(tps))
        fp_l.append(total_res - len(tps))
        ass_l.append(ass_total)
        loc_l.append(sum(t[2] for t in tps))

    return _hota_from_counts(tp_l, fn_l, fp_l, ass_l, loc_l)


def evaluate_all(
    gt: LabeledFrameSet,
    res: LabeledFrameSet,
    class_aware: bool = True,
    name: str = "",
    fps: Optional[float] = None,
) -> MetricsReport:
    return MetricsReport(
        clear=evaluate_clear(gt, res, class_aware=class_aware),
        ident=evaluate_idf1(gt, res, class_aware=class_aware),
        hota=evaluate_hota(gt, res, class_aware=class_aware),
        name=name,
        fps=fps,
    )


def classes_present(gt: LabeledFrameSet) -> list[int]:
    return sorted({g.class_id for items in gt.frames.values() for g in items})


def filter_class(fs: LabeledFrameSet, class_id: int) -> LabeledFrameSet:
    frames = {}
    for fno, items in fs.frames.items():
        kept = tuple(it for it in items if it.class_id == class_id)
        if kept:
            frames[fno] = kept
    return LabeledFrameSet(frames=frames, source=fs.source)


def evaluate_per_class(
    gt: LabeledFrameSet, res: LabeledFrameSet
) -> dict[int, MetricsReport]:
    """One independent evaluation per class present in the ground truth.

    Macro summaries (mean of per-class ratios) are what category-scored
    benchmarks publish; the per-class count fields still satisfy the report
    invariants individually.
    """
    out = {}
    for cls in classes_present(gt):
        out[cls] = evaluate_all(
            filter_class(gt, cls), filter_class(res, cls), class_aware=False,
            name=f"class={cls}",
        )
    return out


def aggregate(reports: Sequence[MetricsReport], name: str = "combined") -> MetricsReport:
    """Combine per-sequence reports by summing raw counts, then recomputing
    every ratio (micro-average)."""
    if not reports:
        raise InputError("aggregate needs at least one report")
    fp = sum(r.clear.fp for r in reports)
    fn = sum(r.clear.fn for r in reports)
    idsw = sum(r.clear.idsw for r in reports)
    num_gt = sum(r.clear.num_gt for r in reports)
    clear = ClearReport(
        mota=_clear_mota(fp, fn, idsw, num_gt), fp=fp, fn=fn, idsw=idsw, num_gt=num_gt
    )

    idtp = sum(r.ident.idtp for r in reports)
    idfp = sum(r.ident.idfp for r in reports)
    idfn = sum(r.ident.idfn for r in reports)
    denom = 2 * idtp + idfp + idfn
    ident = IdReport(
        idf1=(2 * idtp / denom) if denom > 0 else 1.0, idtp=idtp, idfp=idfp, idfn=idfn
    )

    n = len(HOTA_ALPHAS)
    tp = [sum(r.hota.tp[k] for r in reports) for k in range(n)]
    fn_a = [sum(r.hota.fn[k] for r in reports) for k in range(n)]
    fp_a = [sum(r.hota.fp[k] for r in reports) for k in range(n)]
    ass = [sum(r.hota.ass_sum[k] for r in reports) for k in range(n)]
    loc = [sum(r.hota.loc_sum[k] for r in reports) for k in range(n)]
    hota = _hota_from_counts(tp, fn_a, fp_a, ass, loc)

    fps_vals = [r.fps for r in reports if r.fps is not None]
    fps = min(fps_vals) if fps_vals else None
    return MetricsReport(clear=clear, ident=ident, hota=hota, name=name, fps=fps)


def format_table(reports: Sequence[MetricsReport], percent: bool = True) -> str:
    """Aligned plain-text table with the usual benchmark columns."""
    headers = ["Sequence", "HOTA", "MOTA", "IDF1", "IDs", "DetA", "AssA", "LocA", "FPS"]
    scale = 100.0 if percent else 1.0
    rows = []
    for r in reports:
        rows.append(
            [
                r.name or "-",
                f"{r.hota.hota * scale:.2f}",
                f"{r.clear.mota * scale:.2f}",
                f"{r.ident.idf1 * scale:.2f}",
                str(r.clear.idsw),
                f"{r.hota.deta * scale:.2f}",
                f"{r.hota.assa * scale:.2f}",
                f"{r.hota.loca * scale:.2f}",
                f"{r.fps:.1f}" if r.fps is not None else "-",
            ]
        )
    widths = [max(len(h), *(len(row[i]) for row in rows)) for i, h in enumerate(headers)]
    unit = "percent" if percent else "unit-interval"
    lines = [f"(values in {unit} scale; IDs is a count)"]
    lines.append("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)))
    for row in rows:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines)


def to_machine(report: MetricsReport) -> dict:
    """Key/value document with unit-interval values, mirroring the table."""
    return {
        "name": report.name,
        "scale": "unit-interval",
        "HOTA": report.hota.hota,
        "MOTA": report.clear.mota,
        "IDF1": report.ident.idf1,
        "IDs": report.clear.idsw,
        "DetA": report.hota.deta,
        "AssA": report.hota.assa,
        "LocA": report.hota.loca,
        "FPS": report.fps,
        "FP": report.clear.fp,
        "FN": report.clear.fn,
        "num_gt": report.clear.num_gt,
        "IDTP": report.ident.idtp,
        "IDFP": report.ident.idfp,
        "IDFN": report.ident.idfn,
        "per_alpha": [
            {
                "alpha": HOTA_ALPHAS[k],
                "DetA": report.hota.per_alpha[k][0],
                "AssA": report.hota.per_alpha[k][1],
                "HOTA": report.hota.per_alpha[k][2],
            }
            for k in range(len(HOTA_ALPHAS))
        ],
    }
