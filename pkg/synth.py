"""
Deterministic generator of cyclic procedural-activity scenarios.

Each video is a left-to-right sequence of step occurrences separated by idle
gaps. A step text may be reused later in the same video (a repeated/cyclic
step). Feature rows inside a step show the step's prototype (its text
embedding) plus noise; idle rows show a background prototype.

Seeds: SeedSequence(cfg.seed).spawn(num_videos) gives video i its own stream,
so video i is identical no matter how many videos are generated after it.
Oracle scores use SeedSequence([seed, i]) for video i.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from core import (
    DEFAULT_FEATURE_STRIDE,
    DEFAULT_FPS,
    DEFAULT_MAX_SEGMENTS,
    GenerationError,
    SegmentInterval,
    ValidationError,
    VideoMeta,
    chunk_boundaries,
    segment_to_interval_seconds,
)
from evaluation import VideoRecord
from ground_truth import QueryAnnotation, build_event_vectors, text_embedding

logger = logging.getLogger(__name__)

VERBS = (
    "roll", "knead", "cut", "wash", "stir", "peel", "fold", "pour",
    "weigh", "rinse", "grate", "season", "mix", "slice", "whisk", "sweep",
)
OBJECTS = (
    "dough", "onions", "carrots", "the pan", "flour", "tomatoes", "the board",
    "butter", "rice", "potatoes", "the bowl", "garlic", "herbs", "eggs",
)
BACKGROUND_TEXT = "<idle background>"

MIN_STEP_SEGMENTS = 2
MIN_GAP_SEGMENTS = 1


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 20
    segments_range: tuple[int, int] = (64, 512)
    # feature rows per segment before sparse sampling; >1 exercises downsampling
    oversampling_range: tuple[int, int] = (1, 2)
    steps_per_video: tuple[int, int] = (3, 8)
    repeat_probability: float = 0.3
    noise_sigma: float = 0.1
    feature_noise: float = 0.3
    feature_dim: int = 16
    fps: float = DEFAULT_FPS
    feature_stride: int = DEFAULT_FEATURE_STRIDE
    max_segments: int = DEFAULT_MAX_SEGMENTS
    shuffle_placement: bool = False
    seed: int = 42

    def __post_init__(self):
        for name in ("segments_range", "oversampling_range", "steps_per_video"):
            low, high = getattr(self, name)
            if low < 1 or low > high:
                raise GenerationError(f"{name} must be an ordered range of positive integers, got ({low}, {high})")
        if self.num_videos < 0:
            raise GenerationError(f"num_videos must be >= 0, got {self.num_videos}")
        if not 0.0 <= self.repeat_probability <= 1.0:
            raise GenerationError(f"repeat_probability must be in [0, 1], got {self.repeat_probability}")
        if self.noise_sigma < 0 or self.feature_noise < 0:
            raise GenerationError("noise levels must be non-negative")
        if self.feature_dim < 1:
            raise GenerationError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.segments_range[1] > self.max_segments:
            raise GenerationError(
                f"segments_range upper bound {self.segments_range[1]} exceeds max_segments {self.max_segments}"
            )
        needed = self.steps_per_video[1] * (MIN_STEP_SEGMENTS + MIN_GAP_SEGMENTS) + MIN_GAP_SEGMENTS
        if needed > self.segments_range[0]:
            raise GenerationError(
                f"{self.steps_per_video[1]} steps need at least {needed} segments but "
                f"segments_range starts at {self.segments_range[0]}"
            )


@dataclass
class SynthVideo:
    record: VideoRecord
    features: np.ndarray  # n_i x d, before sparse sampling
    spans: dict[str, SegmentInterval] = field(default_factory=dict)


def _step_texts(rng: np.random.Generator, count: int, repeat_probability: float) -> list[str]:
    vocabulary = [f"{verb} {obj}" for verb in VERBS for obj in OBJECTS]
    order = rng.permutation(len(vocabulary))
    fresh = iter(vocabulary[i] for i in order)
    texts: list[str] = []
    for position in range(count):
        if position > 0 and rng.random() < repeat_probability:
            texts.append(texts[int(rng.integers(len(texts)))])
        else:
            texts.append(next(fresh))
    return texts


def _place_spans(rng: np.random.Generator, n_segments: int, count: int) -> list[SegmentInterval]:
    """Non-overlapping spans, left to right, with at least one idle segment between and around them"""
    slack = n_segments - count * MIN_STEP_SEGMENTS - (count + 1) * MIN_GAP_SEGMENTS
    if slack < 0:
        raise GenerationError(f"{count} steps do not fit in {n_segments} segments")
    # split the slack among count step lengths and count + 1 gaps
    extra = rng.multinomial(slack, np.full(2 * count + 1, 1.0 / (2 * count + 1)))
    gaps = MIN_GAP_SEGMENTS + extra[:count + 1]
    lengths = MIN_STEP_SEGMENTS + extra[count + 1:]

    spans = []
    cursor = 0
    for i in range(count):
        cursor += int(gaps[i])
        spans.append(SegmentInterval(cursor + 1, cursor + int(lengths[i])))
        cursor += int(lengths[i])
    return spans


def _generate_video(index: int, cfg: SynthConfig, rng: np.random.Generator) -> SynthVideo:
    video_id = f"synth_{index:04d}"
    target_segments = int(rng.integers(cfg.segments_range[0], cfg.segments_range[1] + 1))
    oversampling = int(rng.integers(cfg.oversampling_range[0], cfg.oversampling_range[1] + 1))
    n_features = target_segments * oversampling
    num_frames = n_features * cfg.feature_stride + int(rng.integers(cfg.feature_stride))
    meta = VideoMeta(video_id, num_frames, cfg.fps, cfg.feature_stride, cfg.max_segments)
    n_segments = meta.segment_count

    count = int(rng.integers(cfg.steps_per_video[0], cfg.steps_per_video[1] + 1))
    texts = _step_texts(rng, count, cfg.repeat_probability)
    spans = _place_spans(rng, n_segments, count)
    if cfg.shuffle_placement:
        spans = [spans[i] for i in rng.permutation(count)]

    queries = []
    span_by_query = {}
    for position, (text, span) in enumerate(zip(texts, spans), start=1):
        query_id = f"{video_id}_q{position:02d}"
        start_s, end_s = segment_to_interval_seconds(span, meta)
        queries.append(QueryAnnotation(query_id, text, start_s, end_s))
        span_by_query[query_id] = span

    # features: background everywhere, step prototype on rows of the step's segments
    d = cfg.feature_dim
    features = np.tile(text_embedding(BACKGROUND_TEXT, d), (meta.feature_count, 1))
    bounds = chunk_boundaries(meta.feature_count, n_segments)
    for q in queries:
        span = span_by_query[q.query_id]
        rows = slice(bounds[span.start_segment - 1], bounds[span.end_segment])
        features[rows] = text_embedding(q.text, d)
    features = features + cfg.feature_noise * rng.standard_normal(features.shape)

    logger.debug(
        f"{video_id}: {num_frames} frames, {meta.feature_count} features, "
        f"{n_segments} segments, {count} steps ({len(set(texts))} distinct)"
    )
    return SynthVideo(VideoRecord(meta, queries), features, span_by_query)


def generate_scenario(cfg: SynthConfig) -> list[SynthVideo]:
    """
    Generate cfg.num_videos videos with annotations and features.

    Returns:
        One SynthVideo per video, in id order
    """
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.num_videos)
    videos = [_generate_video(i, cfg, np.random.default_rng(child)) for i, child in enumerate(children)]
    repeated = sum(len(v.record.queries) - len({q.key for q in v.record.queries}) for v in videos)
    logger.info(
        f"Generated {len(videos)} videos, {sum(len(v.record.queries) for v in videos)} queries "
        f"({repeated} repeated occurrences), seed {cfg.seed}"
    )
    return videos


def oracle_scores(videos: list[VideoRecord], noise_sigma: float, seed: int) -> dict[str, dict[str, np.ndarray]]:
    """
    Event vectors plus Gaussian noise, clamped to [0, 1].

    Returns:
        video_id -> query_id -> score vector; exactly the event vectors when
        noise_sigma is 0
    """
    if noise_sigma < 0:
        raise ValidationError(f"noise_sigma must be >= 0, got {noise_sigma}")
    scores = {}
    for index, video in enumerate(videos):
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        vectors = build_event_vectors(video.queries, video.meta)
        per_query = {}
        for query_id in sorted(vectors):
            clean = vectors[query_id].astype(float)
            if noise_sigma > 0:
                clean = np.clip(clean + noise_sigma * rng.standard_normal(clean.size), 0.0, 1.0)
            per_query[query_id] = clean
        scores[video.meta.video_id] = per_query
    return scores
