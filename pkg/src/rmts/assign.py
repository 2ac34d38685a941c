"""Optimal linear assignment with cost gating.

Used by both trackers (matching detections to tracklets) and by the
evaluator (matching predictions to ground truth).  Matching a pair whose
IoU is below the configured minimum is rejected; on IoU-distance costs an
IoU floor of 0.2 maps to ``gate = 0.8``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError

# Entries at or above this sentinel are never matched, regardless of gate.
FORBIDDEN = 1e9


@dataclass(frozen=True)
class AssignmentResult:
    """Matched (row, col) pairs plus the leftover indices on each side.

    Every row and column appears exactly once across the three fields.
    Matches are sorted by row; unmatched indices ascend.
    """

    matches: tuple[tuple[int, int], ...]
    unmatched_rows: tuple[int, ...]
    unmatched_cols: tuple[int, ...]


def _empty_result(n_rows: int, n_cols: int) -> AssignmentResult:
    return AssignmentResult((), tuple(range(n_rows)), tuple(range(n_cols)))


def solve(cost, gate: float = math.inf) -> AssignmentResult:
    """Minimum-cost maximum matching of the gated cost matrix.

    Pairs with cost above ``gate`` (or at/above the FORBIDDEN sentinel, or
    non-finite) cannot be matched.  Among the remaining pairs the returned
    matching has maximum cardinality and, among those, minimum total cost.
    Rectangular matrices are supported directly.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise InputError(f"cost must be a 2-D matrix, got ndim={cost.ndim}")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return _empty_result(n_rows, n_cols)

    allowed = np.isfinite(cost) & (cost <= gate) & (cost < FORBIDDEN)
    if not allowed.any():
        return _empty_result(n_rows, n_cols)

    # Forbidden entries get a pad cost large enough that the solver always
    # prefers one more allowed pair over any combination of allowed costs.
    allowed_abs = np.abs(cost[allowed])
    pad = float(allowed_abs.sum() + allowed_abs.max() + 1.0)
    padded = np.where(allowed, cost, pad)

    rows, cols = linear_sum_assignment(padded)
    matches = []
    matched_rows = set()
    matched_cols = set()
    for r, c in zip(rows.tolist(), cols.tolist()):
        if allowed[r, c]:
            matches.append((r, c))
            matched_rows.add(r)
            matched_cols.add(c)
    matches.sort()
    return AssignmentResult(
        tuple(matches),
        tuple(i for i in range(n_rows) if i not in matched_rows),
        tuple(j for j in range(n_cols) if j not in matched_cols),
    )
