"""
Temporal-order prior and Bayes rescaling of per-segment scores.

Step j of a video with m annotated steps is expected around segment j*S_i/m.
A Gaussian centred there rescales the raw scores, so annotations that share a
step text (and therefore identical raw scores) are pulled towards different
occurrences.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from core import SegmentRangeError, ValidationError
from ground_truth import QueryAnnotation

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.1

# Densities far in the tail underflow to 0.0; keep the prior strictly positive
_DENSITY_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class PriorConfig:
    """
    Shape of the temporal-order prior.

    beta scales the spread with the video length. With spread_is_std the
    standard deviation is S_i * beta, otherwise the variance is.
    """

    beta: float = DEFAULT_BETA
    spread_is_std: bool = True

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")

    def sigma(self, n_segments: int) -> float:
        spread = n_segments * self.beta
        return spread if self.spread_is_std else math.sqrt(spread)


def gaussian_prior(j: int, m: int, n_segments: int, cfg: PriorConfig) -> np.ndarray:
    """
    Prior q_ij evaluated at segments k = 1..S_i.

    Args:
        j: 1-based temporal rank of the annotation
        m: Number of annotations in the video
        n_segments: S_i
        cfg: Prior shape

    Returns:
        Vector of S_i strictly positive densities. When every density
        underflows (spread far below one segment) the peak-normalised shape
        from prior_weights is returned instead, so the peak stays at the
        segment nearest the mean.
    """
    mean, sigma, k = _prior_grid(j, m, n_segments, cfg)
    density = norm.pdf(k, loc=mean, scale=sigma)
    if not density.max() >= _DENSITY_FLOOR:
        logger.debug(f"Prior densities underflow (j={j}, m={m}, sigma={sigma:.3g}); using normalised shape")
        return prior_weights(j, m, n_segments, cfg)
    return np.maximum(density, _DENSITY_FLOOR)


def prior_weights(j: int, m: int, n_segments: int, cfg: PriorConfig) -> np.ndarray:
    """q / max(q) computed from log densities, so it survives any beta > 0"""
    mean, sigma, k = _prior_grid(j, m, n_segments, cfg)
    log_density = norm.logpdf(k, loc=mean, scale=sigma)
    return np.maximum(np.exp(log_density - log_density.max()), _DENSITY_FLOOR)


def _prior_grid(j: int, m: int, n_segments: int, cfg: PriorConfig) -> tuple[float, float, np.ndarray]:
    if n_segments < 1:
        raise ValidationError(f"segment count must be >= 1, got {n_segments}")
    if not 1 <= j <= m:
        raise SegmentRangeError(f"query rank {j} outside 1..{m}")
    return j * n_segments / m, cfg.sigma(n_segments), np.arange(1, n_segments + 1, dtype=float)


def apply_posterior(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """out^k = p^k * q^k / max(q)"""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValidationError(f"score and prior shapes differ: {p.shape} vs {q.shape}")
    if not np.all(q > 0):
        raise ValidationError("prior must be strictly positive")
    return p * (q / q.max())


def temporal_ranks(queries: list[QueryAnnotation]) -> dict[str, int]:
    """
    1-based rank of every annotation by start time.

    Ties break on end time, then query id, so the ranking never depends on the
    order annotations were listed in.
    """
    ordered = sorted(queries, key=lambda q: (q.start_s, q.end_s, q.query_id))
    return {q.query_id: rank for rank, q in enumerate(ordered, start=1)}


def refine_video(
    scores: dict[str, np.ndarray],
    queries: list[QueryAnnotation],
    cfg: PriorConfig,
) -> dict[str, np.ndarray]:
    """
    Apply the temporal-order prior to every query of one video.

    Args:
        scores: Raw score vector per query_id
        queries: All annotations of the video (defines m_i and the ranks)
        cfg: Prior shape

    Returns:
        Posterior score vector per query_id
    """
    ranks = temporal_ranks(queries)
    m = len(queries)
    refined = {}
    for query_id, p in scores.items():
        if query_id not in ranks:
            raise ValidationError(f"scores given for unknown query {query_id}")
        q = prior_weights(ranks[query_id], m, len(p), cfg)
        refined[query_id] = apply_posterior(p, q)
    logger.debug(f"Refined {len(refined)} score vectors (m={m}, beta={cfg.beta})")
    return refined
