"""
Environment and run configuration.

Environment variables (a .env file in the working directory is loaded):
    GROUNDER_OUTPUT_DIR  default output directory (default: runs)
    GROUNDER_LOG_LEVEL   logging level (default: INFO)
    GROUNDER_JOBS        default worker count (default: 1)
    GROUNDER_LOG_FILE    log file, empty to disable (default: grounder.log)
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from core import DEFAULT_MAX_SEGMENTS, ValidationError
from evaluation import DEFAULT_THRESHOLDS
from extraction import DEFAULT_ALPHA
from prior import DEFAULT_BETA

# Load environment variables
load_dotenv()

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    output_dir: Path
    log_level: str
    log_file: str
    jobs: int


def load_settings() -> Settings:
    jobs = os.getenv("GROUNDER_JOBS", "1")
    try:
        jobs_value = int(jobs)
    except ValueError:
        logger.warning(f"GROUNDER_JOBS must be an integer, got {jobs!r}; using 1")
        jobs_value = 1
    return Settings(
        output_dir=Path(os.getenv("GROUNDER_OUTPUT_DIR", "runs")),
        log_level=os.getenv("GROUNDER_LOG_LEVEL", "INFO").upper(),
        log_file=os.getenv("GROUNDER_LOG_FILE", "grounder.log"),
        jobs=max(1, jobs_value),
    )


@dataclass
class RunConfig:
    """Resolved options of one command; embedded in every output file"""

    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    beta_is_variance: bool = False
    max_segments: int = DEFAULT_MAX_SEGMENTS
    thresholds: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    seed: int = 42
    jobs: int = 1
    no_prior: bool = False
    annotations: Optional[str] = None
    scores: Optional[str] = None
    features: list[str] = field(default_factory=list)
    model: Optional[str] = None
    predictions: Optional[str] = None
    output_dir: Optional[str] = None

    def validate(self) -> None:
        self._check_types()
        if not 0 < self.alpha < 100:
            raise ValidationError(f"alpha must be in (0, 100), got {self.alpha}")
        if not self.beta > 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")
        if self.max_segments < 1:
            raise ValidationError(f"segments must be >= 1, got {self.max_segments}")
        if not self.thresholds or any(not 0 <= t <= 1 for t in self.thresholds):
            raise ValidationError(f"thresholds must be a non-empty list within [0, 1], got {self.thresholds}")
        if self.jobs < 1:
            raise ValidationError(f"jobs must be >= 1, got {self.jobs}")

    def _check_types(self) -> None:
        def fail(name: str, expected: str) -> None:
            raise ValidationError(f"{name} must be {expected}, got {getattr(self, name)!r}")

        for name in ("alpha", "beta"):
            if not _is_number(getattr(self, name)):
                fail(name, "a number")
        for name in ("max_segments", "seed", "jobs"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                fail(name, "an integer")
        for name in ("beta_is_variance", "no_prior"):
            if not isinstance(getattr(self, name), bool):
                fail(name, "true or false")
        if not isinstance(self.thresholds, (list, tuple)) or not all(_is_number(t) for t in self.thresholds):
            fail("thresholds", "a list of numbers")
        if not isinstance(self.features, (list, tuple)) or not all(isinstance(f, str) for f in self.features):
            fail("features", "a list of paths")
        for name in ("annotations", "scores", "model", "predictions", "output_dir"):
            if getattr(self, name) is not None and not isinstance(getattr(self, name), str):
                fail(name, "a path")

    def to_dict(self) -> dict:
        return asdict(self)


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def read_config_file(path: Path) -> dict:
    """
    Load a JSON object of RunConfig fields.

    Raises:
        ValidationError on unknown keys or malformed JSON
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path} must contain a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"unknown config fields in {path}: {', '.join(unknown)}")
    return data


def resolve_config(file_values: dict, overrides: dict) -> RunConfig:
    """Defaults, then config file values, then explicitly given CLI flags"""
    values = dict(file_values)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**values)
    except TypeError as e:
        raise ValidationError(str(e)) from e
    cfg.validate()
    return cfg
