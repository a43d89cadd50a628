"""
Reading and writing the toolkit's files.

Line-oriented files (annotations, scores, predictions) are JSONL whose first
line may be a header record {"_header": {"format_version": ..., "config": ...}}.
Times are always in seconds; segment indices never appear in these files.
"""

import csv
import io
import json
import logging
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable, Iterator, Optional

import aiofiles
import numpy as np

from core import DEFAULT_FEATURE_STRIDE, DEFAULT_FPS, ValidationError, VideoMeta
from evaluation import VideoRecord
from extraction import Prediction
from ground_truth import QueryAnnotation

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
HEADER_KEY = "_header"

_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


class RecordError(ValidationError):
    """Schema violations found while reading a file, one (line, message) per problem"""

    def __init__(self, path, problems: list[tuple[int, str]]):
        self.path = str(path)
        self.problems = problems
        shown = "\n".join(f"  {self.path}:{line}: {message}" for line, message in problems[:20])
        more = f"\n  ... and {len(problems) - 20} more" if len(problems) > 20 else ""
        super().__init__(f"{len(problems)} invalid record(s) in {self.path}:\n{shown}{more}")


def header(config: dict) -> dict:
    return {"format_version": FORMAT_VERSION, "config": config}


def _json_lines(path: Path) -> Iterator[tuple[int, object, Optional[str]]]:
    """(line number, parsed object or None, error) for every non-blank line"""
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield number, json.loads(line), None
            except json.JSONDecodeError as e:
                yield number, None, f"not valid JSON ({e.msg})"


def _check_header(data: dict, path: Path) -> None:
    version = data[HEADER_KEY].get("format_version") if isinstance(data[HEADER_KEY], dict) else None
    if version != FORMAT_VERSION:
        raise RecordError(path, [(1, f"unsupported format_version {version!r}")])


def _parse_video(data, max_segments: int) -> VideoRecord:
    if not isinstance(data, dict):
        raise ValidationError("record must be an object")
    unknown = set(data) - {"video_id", "num_frames", "fps", "feature_stride", "queries"}
    if unknown:
        raise ValidationError(f"unknown fields {sorted(unknown)}")
    try:
        video_id = data["video_id"]
        num_frames = data["num_frames"]
        queries = data["queries"]
    except KeyError as e:
        raise ValidationError(f"missing field {e}") from e
    if not isinstance(video_id, str) or not video_id:
        raise ValidationError("video_id must be a non-empty string")
    if not isinstance(num_frames, int) or isinstance(num_frames, bool):
        raise ValidationError("num_frames must be an integer")
    try:
        fps = float(data.get("fps", DEFAULT_FPS))
        feature_stride = int(data.get("feature_stride", DEFAULT_FEATURE_STRIDE))
    except (TypeError, ValueError, OverflowError) as e:
        raise ValidationError(f"fps and feature_stride must be numbers: {e}") from e
    meta = VideoMeta(video_id, num_frames, fps, feature_stride, max_segments)
    if not isinstance(queries, list):
        raise ValidationError("queries must be a list")

    parsed = []
    seen = set()
    for i, q in enumerate(queries):
        if not isinstance(q, dict) or set(q) != {"query_id", "text", "start_s", "end_s"}:
            raise ValidationError(f"query #{i + 1} must have exactly query_id, text, start_s, end_s")
        if not isinstance(q["text"], str) or not q["text"].strip():
            raise ValidationError(f"query #{i + 1} has empty text")
        query_id = str(q["query_id"])
        if query_id in seen:
            raise ValidationError(f"duplicate query_id {query_id}")
        seen.add(query_id)
        try:
            annotation = QueryAnnotation(query_id, q["text"], float(q["start_s"]), float(q["end_s"]))
        except (TypeError, ValueError) as e:
            raise ValidationError(f"query {query_id}: times must be numbers") from e
        annotation.check(meta)
        parsed.append(annotation)
    return VideoRecord(meta, parsed)


def read_annotations(path: Path, max_segments: int) -> list[VideoRecord]:
    """
    Load an annotation JSONL file.

    Raises:
        RecordError listing every invalid line
    """
    videos: list[VideoRecord] = []
    problems: list[tuple[int, str]] = []
    ids = set()
    for number, data, error in _json_lines(path):
        if error:
            problems.append((number, error))
            continue
        if isinstance(data, dict) and HEADER_KEY in data:
            _check_header(data, path)
            continue
        try:
            video = _parse_video(data, max_segments)
        except ValidationError as e:
            problems.append((number, str(e)))
            continue
        if video.meta.video_id in ids:
            problems.append((number, f"duplicate video_id {video.meta.video_id}"))
            continue
        ids.add(video.meta.video_id)
        videos.append(video)
    if problems:
        raise RecordError(path, problems)
    logger.info(f"Loaded {len(videos)} videos, {sum(len(v.queries) for v in videos)} queries from {path}")
    return videos


def _parse_vector(values, where: str) -> np.ndarray:
    try:
        vector = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{where}: scores must be numbers") from e
    if vector.ndim != 1 or vector.size == 0:
        raise ValidationError(f"{where}: scores must be a non-empty list")
    if not np.all((vector >= 0.0) & (vector <= 1.0)):
        raise ValidationError(f"{where}: scores must lie in [0, 1]")
    return vector


def read_scores(path: Path) -> dict[str, dict[str, np.ndarray]]:
    """
    Load scores as video_id -> query_id -> vector.

    Accepts JSONL ({video_id, scores: {query_id: [...]}}) or, for files ending
    in .tsv, lines of video_id<TAB>query_id<TAB>comma-separated values.
    """
    path = Path(path)
    scores: dict[str, dict[str, np.ndarray]] = {}
    problems: list[tuple[int, str]] = []

    if path.suffix == ".tsv":
        with open(path, "r", encoding="utf-8", newline="") as f:
            for number, row in enumerate(csv.reader(f, delimiter="\t"), start=1):
                if not row or row[0].startswith("#"):
                    continue
                if len(row) != 3:
                    problems.append((number, f"expected 3 tab-separated fields, got {len(row)}"))
                    continue
                video_id, query_id, values = row
                try:
                    vector = _parse_vector(values.split(","), f"{video_id}/{query_id}")
                except ValidationError as e:
                    problems.append((number, str(e)))
                    continue
                scores.setdefault(video_id, {})[query_id] = vector
    else:
        for number, data, error in _json_lines(path):
            if error:
                problems.append((number, error))
                continue
            if isinstance(data, dict) and HEADER_KEY in data:
                _check_header(data, path)
                continue
            if not isinstance(data, dict) or set(data) != {"video_id", "scores"} or not isinstance(data["scores"], dict):
                problems.append((number, "record must be {video_id, scores: {query_id: [...]}}"))
                continue
            try:
                per_query = {
                    str(query_id): _parse_vector(values, f"{data['video_id']}/{query_id}")
                    for query_id, values in data["scores"].items()
                }
            except ValidationError as e:
                problems.append((number, str(e)))
                continue
            scores.setdefault(str(data["video_id"]), {}).update(per_query)

    if problems:
        raise RecordError(path, problems)
    return scores


def attach_scores(videos: list[VideoRecord], scores: dict[str, dict[str, np.ndarray]]) -> None:
    """Attach score vectors to videos, checking lengths against S_i"""
    problems = []
    for video in videos:
        per_query = scores.get(video.meta.video_id, {})
        for q in video.queries:
            vector = per_query.get(q.query_id)
            if vector is None:
                problems.append(f"{video.meta.video_id}/{q.query_id}: no scores")
            elif vector.size != video.meta.segment_count:
                problems.append(
                    f"{video.meta.video_id}/{q.query_id}: {vector.size} scores, "
                    f"expected {video.meta.segment_count} segments"
                )
        video.scores = {q.query_id: per_query[q.query_id] for q in video.queries if q.query_id in per_query}
    if problems:
        raise ValidationError("scores do not match annotations:\n  " + "\n  ".join(problems[:20]))


def read_predictions(path: Path) -> dict[tuple[str, str], tuple[float, float]]:
    predictions = {}
    problems = []
    for number, data, error in _json_lines(path):
        if error:
            problems.append((number, error))
            continue
        if isinstance(data, dict) and HEADER_KEY in data:
            _check_header(data, path)
            continue
        try:
            key = (str(data["video_id"]), str(data["query_id"]))
            span = (float(data["start_s"]), float(data["end_s"]))
        except (KeyError, TypeError, ValueError):
            problems.append((number, "record must be {video_id, query_id, start_s, end_s}"))
            continue
        predictions[key] = span
    if problems:
        raise RecordError(path, problems)
    return predictions


def feature_path(directory: Path, video_id: str) -> Path:
    if not _SAFE_ID.match(video_id):
        raise ValidationError(f"video_id {video_id!r} cannot be used as a file name")
    return Path(directory) / f"{video_id}.npy"


def read_features(directory: Path, video_id: str) -> np.ndarray:
    path = feature_path(directory, video_id)
    if not path.exists():
        raise ValidationError(f"feature file not found: {path}")
    return np.load(path, allow_pickle=False)


def _float(value: float) -> float:
    return float(f"{value:.10g}")


def annotation_lines(videos: Iterable[VideoRecord], config: dict) -> list[str]:
    lines = [json.dumps({HEADER_KEY: header(config)})]
    for video in videos:
        record = video.meta.to_dict()
        record["queries"] = [
            {"query_id": q.query_id, "text": q.text, "start_s": q.start_s, "end_s": q.end_s}
            for q in video.queries
        ]
        lines.append(json.dumps(record))
    return lines


def score_lines(scores: dict[str, dict[str, np.ndarray]], config: dict) -> list[str]:
    lines = [json.dumps({HEADER_KEY: header(config)})]
    for video_id in sorted(scores):
        per_query = {
            query_id: [_float(v) for v in scores[video_id][query_id]]
            for query_id in sorted(scores[video_id])
        }
        lines.append(json.dumps({"video_id": video_id, "scores": per_query}))
    return lines


def prediction_lines(predictions: Iterable[Prediction], config: dict) -> list[str]:
    lines = [json.dumps({HEADER_KEY: header(config)})]
    for p in predictions:
        lines.append(json.dumps({
            "video_id": p.video_id,
            "query_id": p.query_id,
            "start_s": p.start_s,
            "end_s": p.end_s,
        }))
    return lines


def to_json(data: dict, config: dict) -> str:
    document = header(config)
    document.update(data)
    return json.dumps(document, indent=2) + "\n"


def npy_bytes(matrix: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    np.save(buffer, np.asarray(matrix, dtype=float), allow_pickle=False)
    return buffer.getvalue()


async def write_atomic(path: Path, content) -> None:
    """Write text or bytes to a temporary sibling, then rename over path"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    binary = isinstance(content, bytes)
    fd, temp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        if binary:
            async with aiofiles.open(temp_name, "wb") as f:
                await f.write(content)
        else:
            async with aiofiles.open(temp_name, "w", encoding="utf-8") as f:
                await f.write(content)
        os.replace(temp_name, path)
    except Exception:
        Path(temp_name).unlink(missing_ok=True)
        raise
    logger.debug(f"Wrote {path}")


async def write_files(files: dict[Path, object]) -> None:
    """Write every prepared file; content is str, bytes or a list of lines"""
    for path, content in files.items():
        if isinstance(content, list):
            content = "\n".join(content) + "\n"
        await write_atomic(path, content)
