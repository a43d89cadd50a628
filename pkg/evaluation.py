"""
Recall@1 at temporal IoU thresholds, dataset evaluation and alpha/beta sweeps.

Every annotation is scored against its OWN span, not the union of spans that
share its text.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from core import KeyMismatchError, SegmentInterval, ValidationError, VideoMeta
from extraction import ExtractionConfig, Prediction, localize_video
from ground_truth import QueryAnnotation, build_event_vectors
from prior import PriorConfig

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.3, 0.5)


@dataclass
class VideoRecord:
    """Everything known about one video: metadata, annotations and (optionally) scores"""

    meta: VideoMeta
    queries: list[QueryAnnotation]
    scores: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    iou: float
    hits: tuple[bool, ...]  # one flag per threshold


@dataclass
class EvalResult:
    thresholds: tuple[float, ...]
    recalls: tuple[float, ...]
    per_query: list[QueryResult]
    mean_interval_s: float = 0.0
    confusion: tuple[int, int, int] = (0, 0, 0)

    @property
    def count(self) -> int:
        return len(self.per_query)

    def recall_at(self, threshold: float) -> float:
        for t, r in zip(self.thresholds, self.recalls):
            if abs(t - threshold) < 1e-12:
                return r
        raise KeyError(f"recall not computed at IoU {threshold}")

    @property
    def recall_at_03(self) -> float:
        return self.recall_at(0.3)

    @property
    def recall_at_05(self) -> float:
        return self.recall_at(0.5)


def _check_span(span: Sequence[float]) -> tuple[float, float]:
    if len(span) != 2:
        raise ValidationError(f"interval must be (start, end), got {span!r}")
    start, end = float(span[0]), float(span[1])
    if not (np.isfinite(start) and np.isfinite(end)) or start > end:
        raise ValidationError(f"malformed interval ({start}, {end})")
    return start, end


def iou(a: Sequence[float], b: Sequence[float]) -> float:
    """
    Temporal intersection-over-union of two intervals in seconds.

    Two equal degenerate intervals have IoU 1; a degenerate interval against
    anything else has IoU 0.
    """
    a_start, a_end = _check_span(a)
    b_start, b_end = _check_span(b)

    union = max(a_end, b_end) - min(a_start, b_start)
    inter = max(0.0, min(a_end, b_end) - max(a_start, b_start))
    if a_start == a_end or b_start == b_end:
        return 1.0 if (a_start, a_end) == (b_start, b_end) else 0.0
    return inter / union


def recall_at_1(
    predictions: dict[str, tuple[float, float]],
    annotations: dict[str, tuple[float, float]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> EvalResult:
    """
    Fraction of queries whose prediction reaches each IoU threshold.

    Args:
        predictions: query_id -> predicted (start_s, end_s)
        annotations: query_id -> annotated (start_s, end_s)
        thresholds: IoU thresholds

    Returns:
        EvalResult with one recall per threshold
    """
    missing = sorted(set(annotations) - set(predictions))
    extra = sorted(set(predictions) - set(annotations))
    if missing or extra:
        raise KeyMismatchError(missing, extra)
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds:
        raise ValidationError("at least one IoU threshold is required")

    per_query = []
    for query_id in sorted(annotations):
        value = iou(predictions[query_id], annotations[query_id])
        per_query.append(QueryResult(query_id, value, tuple(value >= t for t in thresholds)))

    if per_query:
        hits = np.array([r.hits for r in per_query], dtype=float)
        recalls = tuple(float(x) for x in hits.mean(axis=0))
    else:
        recalls = tuple(0.0 for _ in thresholds)
    return EvalResult(thresholds, recalls, per_query)


def segment_confusion(pred: SegmentInterval, event_vector: np.ndarray) -> tuple[int, int, int]:
    """Segment-level (true positives, false positives, false negatives) of a prediction"""
    predicted = np.zeros(len(event_vector), dtype=bool)
    predicted[pred.start_segment - 1:pred.end_segment] = True
    actual = np.asarray(event_vector).astype(bool)
    tp = int(np.sum(predicted & actual))
    fp = int(np.sum(predicted & ~actual))
    fn = int(np.sum(~predicted & actual))
    return tp, fp, fn


def localize_dataset(
    dataset: list[VideoRecord],
    cfg: ExtractionConfig,
    prior_cfg: Optional[PriorConfig],
) -> list[Prediction]:
    predictions = []
    for video in dataset:
        predictions.extend(localize_video(video.meta, video.queries, video.scores, cfg, prior_cfg))
    return predictions


def score_predictions(
    dataset: list[VideoRecord],
    predictions: list[Prediction],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> EvalResult:
    """Recall of predictions against the dataset's annotations, plus segment confusion"""
    # query ids need only be unique within a video
    def key(video_id: str, query_id: str) -> str:
        return f"{video_id}/{query_id}"

    annotated = {
        key(v.meta.video_id, q.query_id): (q.start_s, q.end_s)
        for v in dataset for q in v.queries
    }
    predicted = {key(p.video_id, p.query_id): (p.start_s, p.end_s) for p in predictions}
    result = recall_at_1(predicted, annotated, thresholds)

    metas = {v.meta.video_id: v for v in dataset}
    tp = fp = fn = 0
    vectors_by_video = {}
    for p in predictions:
        video = metas[p.video_id]
        if p.video_id not in vectors_by_video:
            vectors_by_video[p.video_id] = build_event_vectors(video.queries, video.meta)
        counts = segment_confusion(p.segments, vectors_by_video[p.video_id][p.query_id])
        tp, fp, fn = tp + counts[0], fp + counts[1], fn + counts[2]

    result.confusion = (tp, fp, fn)
    if predictions:
        result.mean_interval_s = float(np.mean([p.length_s for p in predictions]))
    return result


def evaluate_dataset(
    dataset: list[VideoRecord],
    cfg: ExtractionConfig,
    prior_cfg: Optional[PriorConfig],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
) -> tuple[list[Prediction], EvalResult]:
    """
    Full inference pipeline over a dataset with scores attached.

    prior_cfg=None disables the temporal-order prior (baseline mode).
    """
    predictions = localize_dataset(dataset, cfg, prior_cfg)
    result = score_predictions(dataset, predictions, thresholds)
    mode = "baseline" if prior_cfg is None else f"prior beta={prior_cfg.beta}"
    logger.info(
        f"Evaluated {result.count} queries (alpha={cfg.alpha}, {mode}): "
        + ", ".join(f"R@1 IoU{t}={r * 100:.2f}" for t, r in zip(result.thresholds, result.recalls))
    )
    return predictions, result


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    beta: float
    recalls: tuple[float, ...]
    mean_interval_s: float
    best: bool = False


def sweep(
    dataset: list[VideoRecord],
    alpha_grid: Sequence[float],
    beta_grid: Sequence[float],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    beta_is_variance: bool = False,
    evaluate=None,
) -> list[SweepRow]:
    """
    Evaluate every (alpha, beta) pair, alpha outer and beta inner.

    The best row maximises recall at the first threshold, then the following
    thresholds; the earliest row wins remaining ties.

    Args:
        evaluate: Optional replacement for evaluate_dataset(dataset, cfg, prior_cfg, thresholds)
            returning (predictions, EvalResult); used to run cells in a worker pool
    """
    if not alpha_grid or not beta_grid:
        raise ValidationError("sweep grids must be non-empty")

    cells = [
        (ExtractionConfig(float(a)), PriorConfig(float(b), spread_is_std=not beta_is_variance))
        for a in alpha_grid for b in beta_grid
    ]
    if evaluate is None:
        results = [evaluate_dataset(dataset, cfg, prior_cfg, thresholds)[1] for cfg, prior_cfg in cells]
    else:
        results = evaluate(cells)

    best_index = max(range(len(results)), key=lambda i: (results[i].recalls, -i))
    return [
        SweepRow(cfg.alpha, prior_cfg.beta, result.recalls, result.mean_interval_s, best=(i == best_index))
        for i, ((cfg, prior_cfg), result) in enumerate(zip(cells, results))
    ]
