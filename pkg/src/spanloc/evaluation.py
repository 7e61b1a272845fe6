"""Ranked segment extraction and recall metrics over score maps."""

from __future__ import annotations

import numpy as np

from .errors import DataError, MetricError
from .supervision import Segment, compute_iou

Prediction = list[tuple[Segment, float]]


def top_n_segments(score_map: np.ndarray, n: int, nms_iou: float = 0.5) -> Prediction:
    """Greedy selection of the n best-scoring valid segments.

    Only cells with start <= end are candidates. Each pick suppresses the
    remaining candidates whose IoU with it exceeds ``nms_iou``; at 1.0 the
    selection degenerates to the plain top n by score. Ties break toward the
    earlier, shorter segment.
    """
    score_map = np.asarray(score_map)
    if n < 1:
        raise MetricError(f"top-n needs n >= 1, got {n}")
    if score_map.ndim != 2 or score_map.shape[0] != score_map.shape[1] or score_map.shape[0] < 1:
        raise DataError(f"score map must be square and non-empty, got {score_map.shape}")
    starts, ends = np.triu_indices(score_map.shape[0])
    scores = score_map[starts, ends]
    order = np.lexsort((ends, starts, -scores))
    picked: Prediction = []
    for idx in order:
        candidate = Segment(int(starts[idx]), int(ends[idx]))
        if any(compute_iou(candidate, kept) > nms_iou for kept, _ in picked):
            continue
        picked.append((candidate, float(scores[idx])))
        if len(picked) == n:
            break
    return picked


def recall_at(
    predictions: list[Prediction],
    ground_truths: list[Segment],
    n: int,
    iou_threshold: float,
    strict: bool = False,
) -> float:
    """Percentage of samples whose top-n predictions contain a segment with
    IoU >= threshold against the ground truth (> with ``strict``)."""
    if not predictions:
        raise MetricError("recall over an empty sample set")
    if len(predictions) != len(ground_truths):
        raise MetricError(
            f"{len(predictions)} predictions for {len(ground_truths)} ground truths"
        )
    hits = 0
    for pred, gt in zip(predictions, ground_truths):
        best = max((compute_iou(seg, gt) for seg, _ in pred[:n]), default=0.0)
        hit = best > iou_threshold if strict else best >= iou_threshold
        hits += int(hit)
    return 100.0 * hits / len(predictions)


def segment_to_timestamps(
    segment: Segment | tuple[int, int], frames: int, duration_s: float
) -> tuple[float, float]:
    """Frame indices to seconds; the inclusive end frame covers its interval."""
    s, e = int(segment[0]), int(segment[1])
    if duration_s <= 0:
        raise DataError(f"duration must be positive, got {duration_s}")
    if not (0 <= s <= e < frames):
        raise DataError(f"segment ({s}, {e}) outside [0, {frames})")
    return s * duration_s / frames, (e + 1) * duration_s / frames


def metric_report(
    predictions: list[Prediction],
    ground_truths: list[Segment],
    top_ns: list[int],
    iou_thresholds: list[float],
    strict: bool = False,
) -> list[dict]:
    """One {"metric", "value"} object per (n, threshold) pair."""
    report = []
    for n in top_ns:
        for m in iou_thresholds:
            report.append(
                {
                    "metric": f"R@{n},IoU={m:g}",
                    "value": recall_at(predictions, ground_truths, n, m, strict),
                }
            )
    return report


def format_report_lines(report: list[dict]) -> list[str]:
    return [f"{entry['metric']} = {entry['value']:.2f}" for entry in report]
