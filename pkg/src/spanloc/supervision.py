"""Training targets: per-cell IoU maps and the soft-label cross entropy.

Segments are inclusive discrete frame intervals, so a one-frame segment has
length 1 and IoU uses |intersection| / |union| over frame sets. The target
map is rescaled by its maximum, and cells with start > end keep target 0.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DataError, DimensionError, TrainingError
from .tensor import Tensor, clip, log, reduce_sum, tensor

LOG_EPS = 1e-7


class Segment(NamedTuple):
    start: int
    end: int


def compute_iou(p: Segment | tuple[int, int], gt: Segment | tuple[int, int]) -> float:
    """IoU of two inclusive frame intervals; 0 for an inverted candidate."""
    ps, pe = int(p[0]), int(p[1])
    gs, ge = int(gt[0]), int(gt[1])
    if gs > ge:
        raise DataError(f"ground truth ({gs}, {ge}) has start > end")
    if ps > pe:
        return 0.0
    inter = min(pe, ge) - max(ps, gs) + 1
    if inter <= 0:
        return 0.0
    union = (pe - ps + 1) + (ge - gs + 1) - inter
    return inter / union


def build_supervision(gt: Segment | tuple[int, int], frames: int) -> np.ndarray:
    """T x T map of IoU against gt, divided by its maximum."""
    gs, ge = int(gt[0]), int(gt[1])
    if not (0 <= gs <= ge < frames):
        raise DataError(f"ground truth ({gs}, {ge}) outside [0, {frames})")
    starts = np.arange(frames)[:, None]
    ends = np.arange(frames)[None, :]
    valid = ends >= starts
    inter = np.minimum(ends, ge) - np.maximum(starts, gs) + 1
    inter = np.maximum(inter, 0)
    union = (ends - starts + 1) + (ge - gs + 1) - inter
    targets = np.where(valid, inter / np.where(valid, union, 1), 0.0)
    peak = targets.max()
    if peak <= 0.0:
        raise TrainingError("supervision map has no positive cell")
    return targets / peak


def bce_loss(scores: Tensor, targets: np.ndarray, mask_invalid: bool = False) -> Tensor:
    """Mean binary cross entropy of the score map against soft targets.

    By default every one of the T x T cells contributes, including inverted
    (start > end) cells whose target is 0; ``mask_invalid`` restricts the
    mean to the upper triangle instead.
    """
    if scores.shape != targets.shape:
        raise DimensionError(
            f"score map {scores.shape} does not match targets {targets.shape}"
        )
    clamped = clip(scores, LOG_EPS, 1.0 - LOG_EPS)
    t = np.asarray(targets, dtype=np.float64)
    per_cell = tensor(t) * log(clamped) + tensor(1.0 - t) * log(1.0 - clamped)
    if mask_invalid:
        valid = np.triu(np.ones_like(t))
        per_cell = per_cell * tensor(valid)
        return reduce_sum(per_cell) * (-1.0 / valid.sum())
    return reduce_sum(per_cell) * (-1.0 / t.size)
