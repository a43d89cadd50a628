#!/usr/bin/env python3
"""
Tests for percentile thresholds and interval extraction
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from core import SegmentInterval, ValidationError
from extraction import (
    ExtractionConfig,
    extract_segment,
    localize_video,
    percentile_threshold,
    predict_intervals,
)
from fixtures import annotation_for, meta_with_segments, run_tests
from prior import PriorConfig


def test_percentile_examples():
    p = np.arange(1, 21) / 20.0
    assert percentile_threshold(p, 85) == 0.85
    assert percentile_threshold(np.full(7, 0.3), 50) == 0.3
    assert percentile_threshold(p, 99.99) == 1.0


def test_one_hot_extraction():
    p = np.zeros(10)
    p[4] = 1.0
    for alpha in (91, 95, 99):
        assert extract_segment(p, ExtractionConfig(alpha)) == SegmentInterval(5, 5)
    # threshold 0 at low alpha: everything qualifies
    assert extract_segment(p, ExtractionConfig(50)) == SegmentInterval(1, 10)


def test_constant_scores_cover_video():
    assert extract_segment(np.full(12, 0.4), ExtractionConfig(85)) == SegmentInterval(1, 12)


def test_earliest_argmax_is_seed():
    p = np.array([0.1, 0.9, 0.1, 0.1, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1])
    assert extract_segment(p, ExtractionConfig(85)) == SegmentInterval(2, 2)


def test_invalid_alpha():
    for alpha in (0, 100, -5, 150):
        try:
            ExtractionConfig(alpha)
        except ValidationError:
            continue
        raise AssertionError(f"expected ValidationError for alpha={alpha}")


def test_empty_vector():
    try:
        extract_segment(np.array([]), ExtractionConfig())
    except ValidationError:
        return
    raise AssertionError("expected ValidationError")


def _oracle(p: list[float], alpha: int) -> tuple[int, int]:
    n = len(p)
    threshold = sorted(p)[-(-alpha * n // 100) - 1]
    seed = p.index(max(p))
    below = [i for i, v in enumerate(p) if v < threshold]
    start = max([i for i in below if i < seed], default=-1) + 1
    end = min([i for i in below if i > seed], default=n) - 1
    return start + 1, end + 1


def test_extraction_matches_oracle():
    rng = np.random.default_rng(21)
    for trial in range(10000):
        n = int(rng.integers(1, 513))
        alpha = int(rng.integers(1, 100))
        p = rng.uniform(size=n)
        if trial % 3 == 0:
            p = np.round(p, 1)  # plenty of ties
        values = p.tolist()
        result = extract_segment(p, ExtractionConfig(alpha))
        assert (result.start_segment, result.end_segment) == _oracle(values, alpha), trial

        threshold = percentile_threshold(p, alpha)
        inside = p[result.start_segment - 1:result.end_segment]
        assert np.all(inside >= threshold)
        if result.start_segment > 1:
            assert p[result.start_segment - 2] < threshold
        if result.end_segment < n:
            assert p[result.end_segment] < threshold


def test_higher_alpha_never_widens():
    rng = np.random.default_rng(22)
    alphas = [10, 30, 50, 70, 85, 95, 99]
    for _ in range(500):
        p = rng.uniform(size=int(rng.integers(1, 300)))
        intervals = [extract_segment(p, ExtractionConfig(a)) for a in alphas]
        for wide, narrow in zip(intervals, intervals[1:]):
            assert wide.start_segment <= narrow.start_segment
            assert narrow.end_segment <= wide.end_segment


def test_predict_intervals():
    meta = meta_with_segments(10)
    p = np.zeros(10)
    p[4] = 1.0
    predictions = predict_intervals({"b": p, "a": p}, meta, ExtractionConfig(95))
    assert [x.query_id for x in predictions] == ["a", "b"]
    assert predictions[0].segments == SegmentInterval(5, 5)
    assert abs(predictions[0].start_s - 4 * meta.segment_duration) < 1e-9
    assert abs(predictions[0].length_s - meta.segment_duration) < 1e-9

    assert predict_intervals({}, meta, ExtractionConfig()) == []


def test_predict_intervals_length_mismatch():
    try:
        predict_intervals({"a": np.ones(9)}, meta_with_segments(10), ExtractionConfig())
    except ValidationError:
        return
    raise AssertionError("expected ValidationError")


def test_localize_bimodal_with_prior():
    meta = meta_with_segments(10)
    queries = [
        annotation_for(meta, "first", "roll dough", 2, 3),
        annotation_for(meta, "second", "roll dough", 7, 8),
    ]
    p = np.zeros(10)
    p[2] = p[7] = 0.9
    scores = {"first": p, "second": p}

    raw = localize_video(meta, queries, scores, ExtractionConfig(85))
    assert raw[0].segments == raw[1].segments == SegmentInterval(3, 3)

    refined = localize_video(meta, queries, scores, ExtractionConfig(85), PriorConfig(0.1))
    assert refined[0].segments == SegmentInterval(3, 3)
    assert refined[1].segments == SegmentInterval(8, 8)


def main():
    return run_tests(globals())


if __name__ == "__main__":
    sys.exit(main())
