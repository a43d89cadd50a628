#!/usr/bin/env python3
"""
Tests for the temporal-order prior and posterior refinement
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from core import SegmentRangeError, ValidationError
from fixtures import annotation_for, meta_with_segments, run_tests
from prior import PriorConfig, apply_posterior, gaussian_prior, prior_weights, refine_video, temporal_ranks


def _density(k: float, mean: float, sigma: float) -> float:
    return math.exp(-((k - mean) ** 2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))


def test_single_query_peaks_at_end():
    q = gaussian_prior(1, 1, 40, PriorConfig(beta=0.1))
    assert int(np.argmax(q)) == 39


def test_spread_scales_with_length():
    assert math.isclose(PriorConfig(beta=0.1).sigma(512), 51.2)
    assert math.isclose(PriorConfig(beta=0.1, spread_is_std=False).sigma(490), 7.0)

    # sigma = 52, mean = 260
    q = gaussian_prior(1, 2, 520, PriorConfig(beta=0.1))
    peak = q[259]
    assert abs(q[259 - 52] / peak - math.exp(-0.5)) < 1e-9
    assert abs(q[259 + 52] / peak - math.exp(-0.5)) < 1e-9


def test_matches_scalar_density():
    cfg = PriorConfig(beta=0.25)
    q = gaussian_prior(2, 3, 10, cfg)
    mean, sigma = 2 * 10 / 3, 2.5
    for k in range(1, 11):
        assert abs(q[k - 1] - _density(k, mean, sigma)) < 1e-12


def test_prior_strictly_positive():
    q = gaussian_prior(1, 5, 512, PriorConfig(beta=0.001))
    assert np.all(q > 0)


def test_narrow_prior_peaks_at_nearest_segment():
    # mean 10/3, sigma 1e-4: every density underflows in linear space
    cfg = PriorConfig(beta=1e-5)
    q = gaussian_prior(1, 3, 10, cfg)
    assert np.all(q > 0)
    assert int(np.argmax(q)) == 2
    assert len(set(q.tolist())) > 1

    weights = prior_weights(1, 3, 10, cfg)
    assert weights[2] == 1.0
    assert np.all(weights > 0)


def test_narrow_prior_still_refines():
    meta = meta_with_segments(10)
    queries = [
        annotation_for(meta, "a", "roll dough", 1, 2),
        annotation_for(meta, "b", "roll dough", 3, 5),
        annotation_for(meta, "c", "roll dough", 6, 9),
    ]
    p = np.full(10, 0.5)
    refined = refine_video({q.query_id: p for q in queries}, queries, PriorConfig(beta=1e-5))
    # means 10/3, 20/3, 10
    assert [int(np.argmax(refined[q])) for q in ("a", "b", "c")] == [2, 6, 9]
    assert not np.array_equal(refined["a"], p)


def test_weights_match_normalised_density():
    for j, m, n, beta in ((1, 1, 40, 0.1), (2, 3, 10, 0.25), (3, 5, 512, 0.05)):
        cfg = PriorConfig(beta=beta)
        q = gaussian_prior(j, m, n, cfg)
        assert np.allclose(prior_weights(j, m, n, cfg), q / q.max(), rtol=1e-9, atol=0)


def test_invalid_prior_arguments():
    for beta in (0.0, -0.1):
        try:
            PriorConfig(beta=beta)
        except ValidationError:
            continue
        raise AssertionError(f"expected ValidationError for beta={beta}")
    try:
        gaussian_prior(4, 3, 10, PriorConfig())
    except SegmentRangeError:
        pass
    else:
        raise AssertionError("expected SegmentRangeError for j > m")


def test_posterior_example():
    p = np.array([0.9, 0.9, 0.1])
    q = np.array([_density(k, 3.0, 1.0) for k in (1, 2, 3)])
    out = apply_posterior(p, q)
    assert np.allclose(out, [0.9 * math.exp(-2), 0.9 * math.exp(-0.5), 0.1], atol=1e-12)


def test_posterior_never_increases_scores():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 200))
        m = int(rng.integers(1, 8))
        j = int(rng.integers(1, m + 1))
        p = rng.uniform(0.0, 1.0, size=n)
        q = gaussian_prior(j, m, n, PriorConfig(beta=float(rng.uniform(0.01, 1.0))))
        out = apply_posterior(p, q)
        assert np.all(out <= p + 1e-15)
        peak = int(np.argmax(q))
        assert math.isclose(out[peak], p[peak])


def test_posterior_of_uniform_scores_is_normalized_prior():
    q = gaussian_prior(2, 4, 30, PriorConfig())
    out = apply_posterior(np.ones(30), q)
    assert np.allclose(out, q / q.max())


def test_posterior_shape_mismatch():
    try:
        apply_posterior(np.ones(4), np.ones(5))
    except ValidationError:
        return
    raise AssertionError("expected ValidationError")


def test_symmetric_ranks_mirror_each_other():
    cfg = PriorConfig(beta=0.2)
    m, n = 4, 40
    for j in range(1, m):
        a = gaussian_prior(j, m, n, cfg)
        b = gaussian_prior(m - j, m, n, cfg)
        # mean j*n/m reflected about n/2 is (m-j)*n/m
        for k in range(1, n):
            mirrored = n - k
            assert math.isclose(a[k - 1], b[mirrored - 1], rel_tol=1e-9)


def test_argmax_moves_forward_with_rank():
    n, m = 60, 5
    p = np.full(n, 0.5)
    peaks = [int(np.argmax(apply_posterior(p, gaussian_prior(j, m, n, PriorConfig())))) for j in range(1, m + 1)]
    assert peaks == sorted(peaks)
    assert len(set(peaks)) == m


def test_temporal_ranks():
    meta = meta_with_segments(20)
    queries = [
        annotation_for(meta, "z", "b", 15, 19),
        annotation_for(meta, "y", "a", 6, 9),
        annotation_for(meta, "x", "a", 6, 9),
    ]
    assert temporal_ranks(queries) == {"x": 1, "y": 2, "z": 3}


def test_bimodal_scores_split_by_rank():
    meta = meta_with_segments(10)
    queries = [
        annotation_for(meta, "first", "roll dough", 2, 3),
        annotation_for(meta, "second", "roll dough", 7, 8),
    ]
    p = np.zeros(10)
    p[2] = p[7] = 0.9
    for beta in (0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5):
        refined = refine_video({"first": p, "second": p}, queries, PriorConfig(beta=beta))
        assert int(np.argmax(refined["first"])) == 2, beta
        assert int(np.argmax(refined["second"])) == 7, beta


def test_refinement_ignores_annotation_order():
    meta = meta_with_segments(30)
    queries = [
        annotation_for(meta, "a", "roll dough", 2, 5),
        annotation_for(meta, "b", "cut onions", 10, 12),
        annotation_for(meta, "c", "roll dough", 20, 25),
    ]
    rng = np.random.default_rng(5)
    scores = {q.query_id: rng.uniform(size=30) for q in queries}
    a = refine_video(scores, queries, PriorConfig())
    b = refine_video(scores, list(reversed(queries)), PriorConfig())
    for query_id in scores:
        assert np.array_equal(a[query_id], b[query_id])


def test_refine_unknown_query():
    meta = meta_with_segments(10)
    queries = [annotation_for(meta, "a", "roll dough", 2, 3)]
    try:
        refine_video({"missing": np.ones(10)}, queries, PriorConfig())
    except ValidationError:
        return
    raise AssertionError("expected ValidationError")


def main():
    return run_tests(globals())


if __name__ == "__main__":
    sys.exit(main())
