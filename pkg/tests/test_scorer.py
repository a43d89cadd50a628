#!/usr/bin/env python3
"""
Tests for the GRU scorer: forward pass, loss, gradients and training
"""

import asyncio
import json
import math
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from core import TrainingError, ValidationError
from fixtures import run_tests
from scorer import (
    Sample,
    ScorerConfig,
    bce_loss,
    dataset_loss,
    forward,
    grad_check,
    init_model,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    score_samples,
    train,
    zero_model,
)


def _random_sample(rng: np.random.Generator, d: int, n: int) -> Sample:
    return Sample(
        features=rng.standard_normal((n, d)),
        query_embedding=rng.standard_normal(d),
        target=(rng.uniform(size=n) < 0.4).astype(float),
    )


def _separable_samples() -> list[Sample]:
    """Feature 0 is the event indicator (+1 inside, -1 outside)"""
    rng = np.random.default_rng(3)
    samples = []
    for i in range(8):
        inside = i % 2 == 0
        features = np.zeros((10, 2))
        features[:, 0] = 1.0 if inside else -1.0
        features[:, 1] = rng.normal(scale=0.05, size=10)
        samples.append(Sample(features, np.zeros(2), np.full(10, 1.0 if inside else 0.0)))
    return samples


def test_zero_model_outputs_half():
    model = zero_model(ScorerConfig(feature_dim=3, hidden_dim=4))
    out = forward(model, np.random.default_rng(0).standard_normal((7, 3)), np.ones(3))
    assert out.shape == (7,)
    assert np.all(out == 0.5)


def test_output_shape_and_range():
    rng = np.random.default_rng(1)
    for seed in range(10):
        d, n = int(rng.integers(1, 6)), int(rng.integers(1, 40))
        model = init_model(ScorerConfig(feature_dim=d, hidden_dim=5, seed=seed))
        out = forward(model, rng.standard_normal((n, d)), rng.standard_normal(d))
        assert out.shape == (n,)
        assert np.all((out > 0) & (out < 1))


def test_forward_is_causal():
    rng = np.random.default_rng(2)
    model = init_model(ScorerConfig(feature_dim=3, hidden_dim=6, seed=4))
    features = rng.standard_normal((12, 3))
    query = rng.standard_normal(3)
    base = forward(model, features, query)
    for t in range(11):
        changed = features.copy()
        changed[t + 1:] += rng.standard_normal((11 - t, 3))
        out = forward(model, changed, query)
        assert np.allclose(out[:t + 1], base[:t + 1], rtol=0, atol=1e-12)


def test_forward_rejects_bad_shapes():
    model = zero_model(ScorerConfig(feature_dim=3, hidden_dim=2))
    for features, query in ((np.zeros((4, 2)), np.zeros(3)), (np.zeros((4, 3)), np.zeros(2)), (np.zeros((0, 3)), np.zeros(3))):
        try:
            forward(model, features, query)
        except ValidationError:
            continue
        raise AssertionError(f"expected ValidationError for {features.shape}, {query.shape}")


def test_bce_examples():
    assert math.isclose(bce_loss([0.5, 0.5, 0.5], [1, 0, 1]), math.log(2))
    assert abs(bce_loss([0.9, 0.2], [1, 0]) - 0.164252) < 1e-6
    assert bce_loss([1.0, 0.0], [1, 0]) < 1e-6
    assert math.isfinite(bce_loss([0.0, 1.0], [1, 0]))


def test_bce_length_mismatch():
    try:
        bce_loss([0.5, 0.5], [1, 0, 1])
    except ValidationError:
        return
    raise AssertionError("expected ValidationError")


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    for seed in range(20):
        model = init_model(ScorerConfig(feature_dim=4, hidden_dim=3, seed=seed))
        error = grad_check(model, _random_sample(rng, 4, 5))
        assert error <= 1e-4, f"seed {seed}: relative error {error}"


def test_zero_model_gradients():
    rng = np.random.default_rng(6)
    model = zero_model(ScorerConfig(feature_dim=4, hidden_dim=3))
    assert grad_check(model, _random_sample(rng, 4, 5)) <= 1e-6


def test_grad_check_is_deterministic():
    rng = np.random.default_rng(7)
    model = init_model(ScorerConfig(feature_dim=2, hidden_dim=2, seed=1))
    sample = _random_sample(rng, 2, 4)
    assert grad_check(model, sample) == grad_check(model, sample)


def test_grad_check_epsilon_range():
    model = zero_model(ScorerConfig(feature_dim=2, hidden_dim=2))
    sample = _random_sample(np.random.default_rng(8), 2, 3)
    for eps in (1e-9, 1e-2):
        try:
            grad_check(model, sample, eps)
        except ValidationError:
            continue
        raise AssertionError(f"expected ValidationError for epsilon={eps}")


def test_zero_learning_rate_keeps_model():
    samples = _separable_samples()
    cfg = ScorerConfig(feature_dim=2, hidden_dim=4, learning_rate=0.0, epochs=5, seed=2)
    model, curve = train(samples, cfg)
    start = init_model(cfg)
    for name, value in start.params.items():
        assert np.array_equal(model.params[name], value)
    assert len(curve) == 6
    assert len(set(curve)) == 1


def test_zero_epochs():
    cfg = ScorerConfig(feature_dim=2, hidden_dim=4, epochs=0)
    model, curve = train(_separable_samples(), cfg)
    assert len(curve) == 1
    for name, value in init_model(cfg).params.items():
        assert np.array_equal(model.params[name], value)


def test_curve_starts_at_initial_loss():
    samples = _separable_samples()
    cfg = ScorerConfig(feature_dim=2, hidden_dim=4, epochs=3, seed=6)
    model, curve = train(samples, cfg)
    assert curve[0] == dataset_loss(init_model(cfg), samples)
    assert curve[-1] == dataset_loss(model, samples)


def test_training_is_deterministic():
    cfg = ScorerConfig(feature_dim=2, hidden_dim=4, learning_rate=0.5, epochs=20, seed=9)
    a, curve_a = train(_separable_samples(), cfg)
    b, curve_b = train(_separable_samples(), cfg)
    assert curve_a == curve_b
    for name in a.params:
        assert np.array_equal(a.params[name], b.params[name])


def test_training_fits_separable_fixture():
    cfg = ScorerConfig(feature_dim=2, hidden_dim=8, learning_rate=1.0, epochs=500, seed=0)
    model, curve = train(_separable_samples(), cfg)
    assert len(curve) == 501
    assert curve[-1] < curve[0]
    assert curve[-1] < 0.1 * math.log(2), f"final loss {curve[-1]}"


def test_training_diverges_loudly():
    bad = Sample(np.full((4, 2), np.inf), np.zeros(2), np.ones(4))
    cfg = ScorerConfig(feature_dim=2, hidden_dim=2, epochs=3)
    with np.errstate(all="ignore"):
        try:
            train([bad], cfg)
        except TrainingError as e:
            assert e.epoch == 1
            return
    raise AssertionError("expected TrainingError")


def test_training_rejects_empty_dataset():
    try:
        train([], ScorerConfig(feature_dim=2))
    except ValidationError:
        return
    raise AssertionError("expected ValidationError")


def test_invalid_config():
    for kwargs in ({"feature_dim": 0}, {"feature_dim": 2, "learning_rate": -1.0}, {"feature_dim": 2, "epochs": -1}):
        try:
            ScorerConfig(**kwargs)
        except ValidationError:
            continue
        raise AssertionError(f"expected ValidationError for {kwargs}")


def test_model_serialization_keeps_outputs():
    rng = np.random.default_rng(10)
    model = init_model(ScorerConfig(feature_dim=3, hidden_dim=4, seed=3))
    restored = model_from_dict(model_to_dict(model))
    assert restored.config == model.config
    features, query = rng.standard_normal((6, 3)), rng.standard_normal(3)
    assert np.array_equal(forward(model, features, query), forward(restored, features, query))


def test_saved_model_loads_back():
    model = init_model(ScorerConfig(feature_dim=2, hidden_dim=3, seed=5))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "nested" / "model.json"
        asyncio.run(save_model(model, path, {"run_config": {"seed": 5}}))
        restored = load_model(path)
        assert json.loads(path.read_text(encoding="utf-8"))["run_config"] == {"seed": 5}
        assert [p.name for p in path.parent.iterdir()] == ["model.json"]
    for name, value in model.params.items():
        assert np.array_equal(restored.params[name], value)


def test_model_from_dict_rejects_wrong_version():
    data = model_to_dict(zero_model(ScorerConfig(feature_dim=2, hidden_dim=2)))
    data["format_version"] = 99
    try:
        model_from_dict(data)
    except ValidationError:
        return
    raise AssertionError("expected ValidationError")


def test_score_samples():
    model = zero_model(ScorerConfig(feature_dim=2, hidden_dim=2))
    scores = score_samples(model, np.zeros((5, 2)), {"b": np.ones(2), "a": np.zeros(2)})
    assert list(scores) == ["a", "b"]
    assert all(v.shape == (5,) for v in scores.values())


def main():
    return run_tests(globals())


if __name__ == "__main__":
    sys.exit(main())
