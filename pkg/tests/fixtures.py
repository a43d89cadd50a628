"""
Shared test fixtures: random videos/annotations and the repeated-step video.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from core import SegmentInterval, VideoMeta, segment_to_interval_seconds
from evaluation import VideoRecord
from ground_truth import QueryAnnotation, build_event_vectors

TEXTS = ["roll dough", "knead dough", "cut onions", "wash the pan", "stir soup"]


def meta_with_segments(n_segments: int, video_id: str = "v") -> VideoMeta:
    """A video with exactly n_segments features and segments (stride 16, 30 fps)"""
    return VideoMeta(video_id, num_frames=n_segments * 16)


def annotation_for(meta: VideoMeta, query_id: str, text: str, start: int, end: int) -> QueryAnnotation:
    start_s, end_s = segment_to_interval_seconds(SegmentInterval(start, end), meta)
    return QueryAnnotation(query_id, text, start_s, end_s)


def random_meta(rng: np.random.Generator, video_id: str = "v") -> VideoMeta:
    stride = int(rng.choice([8, 16, 32]))
    n_features = int(rng.integers(1, 700))
    num_frames = n_features * stride + int(rng.integers(stride))
    return VideoMeta(
        video_id,
        num_frames,
        fps=float(rng.choice([24.0, 30.0, 60.0])),
        feature_stride=stride,
        max_segments=int(rng.choice([16, 128, 512])),
    )


def random_queries(rng: np.random.Generator, meta: VideoMeta, count: int) -> list[QueryAnnotation]:
    queries = []
    for i in range(count):
        a, b = sorted(rng.uniform(0.0, meta.duration, size=2))
        if b - a < 1e-3:
            a, b = 0.0, meta.duration
        text = TEXTS[int(rng.integers(len(TEXTS)))]
        queries.append(QueryAnnotation(f"q{i:02d}", text, float(a), float(b)))
    return queries


def repeated_step_video() -> VideoRecord:
    """
    20 segments; the same step occurs at segments 6-9 and 15-19. Scores are
    the noiseless event vectors, so both annotations see identical scores.
    """
    meta = meta_with_segments(20, "repeat")
    queries = [
        annotation_for(meta, "first", "roll dough", 6, 9),
        annotation_for(meta, "second", "roll dough", 15, 19),
    ]
    scores = {k: v.astype(float) for k, v in build_event_vectors(queries, meta).items()}
    return VideoRecord(meta, queries, scores)


def run_tests(namespace: dict) -> int:
    """Run every test_* function in a module namespace; returns an exit code"""
    tests = [(name, fn) for name, fn in namespace.items() if name.startswith("test_") and callable(fn)]
    failed = 0
    for name, fn in tests:
        try:
            fn()
            print(f"✅ {name}")
        except AssertionError as e:
            failed += 1
            print(f"❌ {name}: {e}")
        except Exception as e:
            failed += 1
            print(f"❌ {name}: unexpected {type(e).__name__}: {e}")
    print("=" * 50)
    if failed:
        print(f"⚠️  {failed}/{len(tests)} tests failed")
        return 1
    print(f"🎉 All {len(tests)} tests passed")
    return 0
