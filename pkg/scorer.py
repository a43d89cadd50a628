"""
Minimal trainable per-segment probability head.

Each segment feature is concatenated with the query embedding, projected to H
dimensions, run through a single forward GRU cell and read out by a logistic
unit, giving p_hat in (0, 1) for every segment. Trained with mean binary cross
entropy against event vectors by full-batch gradient descent. Forward and
backward passes are written out by hand in numpy and batched over sequences
padded to a common length.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

import records
from core import TrainingError, ValidationError

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
BCE_EPS = 1e-7

PARAM_NAMES = (
    "W_in", "b_in",
    "W_z", "U_z", "b_z",
    "W_r", "U_r", "b_r",
    "W_c", "U_c", "b_c",
    "w_out", "b_out",
)


@dataclass(frozen=True)
class ScorerConfig:
    feature_dim: int
    hidden_dim: int = 32
    learning_rate: float = 0.01
    epochs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.feature_dim < 1 or self.hidden_dim < 1:
            raise ValidationError(f"dims must be >= 1 (feature_dim={self.feature_dim}, hidden_dim={self.hidden_dim})")
        if self.learning_rate < 0 or not math.isfinite(self.learning_rate):
            raise ValidationError(f"learning_rate must be a finite non-negative number, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValidationError(f"epochs must be >= 0, got {self.epochs}")


@dataclass
class ScorerModel:
    config: ScorerConfig
    params: dict[str, np.ndarray]

    def copy(self) -> "ScorerModel":
        return ScorerModel(self.config, {k: v.copy() for k, v in self.params.items()})


@dataclass
class Sample:
    """One (video, query) training pair"""

    features: np.ndarray  # S_i x d
    query_embedding: np.ndarray  # d
    target: np.ndarray  # event vector, S_i


def _shapes(cfg: ScorerConfig) -> dict[str, tuple[int, ...]]:
    d_in, h = 2 * cfg.feature_dim, cfg.hidden_dim
    return {
        "W_in": (h, d_in), "b_in": (h,),
        "W_z": (h, h), "U_z": (h, h), "b_z": (h,),
        "W_r": (h, h), "U_r": (h, h), "b_r": (h,),
        "W_c": (h, h), "U_c": (h, h), "b_c": (h,),
        "w_out": (h,), "b_out": (),
    }


def init_model(cfg: ScorerConfig) -> ScorerModel:
    """Weights uniform in +-1/sqrt(fan_in), biases zero, drawn from cfg.seed"""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in _shapes(cfg).items():
        if name.startswith("b_"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[-1]
            bound = 1.0 / math.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return ScorerModel(cfg, params)


def zero_model(cfg: ScorerConfig) -> ScorerModel:
    return ScorerModel(cfg, {name: np.zeros(shape) for name, shape in _shapes(cfg).items()})


def _inputs(model: ScorerModel, features: np.ndarray, query_embedding: np.ndarray) -> np.ndarray:
    d = model.config.feature_dim
    features = np.asarray(features, dtype=float)
    query_embedding = np.asarray(query_embedding, dtype=float)
    if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] != d:
        raise ValidationError(f"features must be S x {d}, got shape {features.shape}")
    if query_embedding.shape != (d,):
        raise ValidationError(f"query embedding must have shape ({d},), got {query_embedding.shape}")
    tiled = np.broadcast_to(query_embedding, features.shape)
    return np.concatenate([features, tiled], axis=1)


def _forward_batch(params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, dict]:
    """
    x: B x T x 2d inputs. Returns logits (B x T) and the cache for backprop.
    Padding positions are computed like any other; callers mask the loss.
    """
    batch, steps, _ = x.shape
    hidden = params["b_in"].shape[0]
    u = x @ params["W_in"].T + params["b_in"]

    h_prev = np.zeros((batch, hidden))
    cache = {"u": u, "h_prev": [], "z": [], "r": [], "c": [], "h": []}
    for t in range(steps):
        u_t = u[:, t]
        z = expit(u_t @ params["W_z"].T + h_prev @ params["U_z"].T + params["b_z"])
        r = expit(u_t @ params["W_r"].T + h_prev @ params["U_r"].T + params["b_r"])
        c = np.tanh(u_t @ params["W_c"].T + (r * h_prev) @ params["U_c"].T + params["b_c"])
        h = (1.0 - z) * h_prev + z * c
        for key, value in (("h_prev", h_prev), ("z", z), ("r", r), ("c", c), ("h", h)):
            cache[key].append(value)
        h_prev = h

    hs = np.stack(cache["h"], axis=1)
    logits = hs @ params["w_out"] + params["b_out"]
    cache["hs"] = hs
    return logits, cache


def _backward_batch(params: dict[str, np.ndarray], x: np.ndarray, cache: dict, d_logits: np.ndarray) -> dict:
    """Backprop through time given dL/dlogits (B x T)"""
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    grads["w_out"] = np.einsum("bt,bth->h", d_logits, cache["hs"])
    grads["b_out"] = np.array(d_logits.sum())

    batch, steps, _ = x.shape
    du = np.zeros_like(cache["u"])
    dh_next = np.zeros((batch, params["b_in"].shape[0]))
    for t in reversed(range(steps)):
        h_prev, z, r, c = cache["h_prev"][t], cache["z"][t], cache["r"][t], cache["c"][t]
        u_t = cache["u"][:, t]

        dh = dh_next + d_logits[:, t, None] * params["w_out"]
        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)

        da_c = dc * (1.0 - c * c)
        grads["W_c"] += da_c.T @ u_t
        grads["U_c"] += da_c.T @ (r * h_prev)
        grads["b_c"] += da_c.sum(axis=0)
        d_rh = da_c @ params["U_c"]
        dr = d_rh * h_prev
        dh_prev += d_rh * r

        da_z = dz * z * (1.0 - z)
        grads["W_z"] += da_z.T @ u_t
        grads["U_z"] += da_z.T @ h_prev
        grads["b_z"] += da_z.sum(axis=0)
        dh_prev += da_z @ params["U_z"]

        da_r = dr * r * (1.0 - r)
        grads["W_r"] += da_r.T @ u_t
        grads["U_r"] += da_r.T @ h_prev
        grads["b_r"] += da_r.sum(axis=0)
        dh_prev += da_r @ params["U_r"]

        du[:, t] = da_z @ params["W_z"] + da_r @ params["W_r"] + da_c @ params["W_c"]
        dh_next = dh_prev

    grads["W_in"] = np.einsum("bth,btd->hd", du, x)
    grads["b_in"] = du.sum(axis=(0, 1))
    return grads


def forward(model: ScorerModel, features: np.ndarray, query_embedding: np.ndarray) -> np.ndarray:
    """
    Per-segment probabilities for one (video, query) pair.

    Output at segment k depends only on segments 1..k.
    """
    x = _inputs(model, features, query_embedding)[None]
    logits, _ = _forward_batch(model.params, x)
    return expit(logits[0])


def bce_loss(p_hat, p) -> float:
    """Mean binary cross entropy with p_hat clamped to [eps, 1 - eps]"""
    p_hat = np.asarray(p_hat, dtype=float)
    p = np.asarray(p, dtype=float)
    if p_hat.shape != p.shape:
        raise ValidationError(f"prediction and target lengths differ: {p_hat.shape} vs {p.shape}")
    clamped = np.clip(p_hat, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.mean(p * np.log(clamped) + (1.0 - p) * np.log(1.0 - clamped)))


class _Batch:
    """Samples padded to a common length with a per-position loss weight"""

    def __init__(self, model: ScorerModel, samples: list[Sample]):
        steps = max(s.features.shape[0] for s in samples)
        width = 2 * model.config.feature_dim
        self.x = np.zeros((len(samples), steps, width))
        self.y = np.zeros((len(samples), steps))
        self.weight = np.zeros((len(samples), steps))
        for i, s in enumerate(samples):
            n = s.features.shape[0]
            target = np.asarray(s.target, dtype=float)
            if target.shape != (n,):
                raise ValidationError(f"sample {i}: {target.shape[0]} targets for {n} segments")
            self.x[i, :n] = _inputs(model, s.features, s.query_embedding)
            self.y[i, :n] = target
            # mean over each sample's own segments, then over samples
            self.weight[i, :n] = 1.0 / (n * len(samples))


def _loss_and_grads(model: ScorerModel, batch: _Batch) -> tuple[float, dict]:
    logits, cache = _forward_batch(model.params, batch.x)
    p_hat = expit(logits)
    clamped = np.clip(p_hat, BCE_EPS, 1.0 - BCE_EPS)
    per_position = -(batch.y * np.log(clamped) + (1.0 - batch.y) * np.log(1.0 - clamped))
    loss = float(np.sum(per_position * batch.weight))

    # the clamp is flat outside [eps, 1 - eps]
    inside = (p_hat > BCE_EPS) & (p_hat < 1.0 - BCE_EPS)
    d_logits = (p_hat - batch.y) * batch.weight * inside
    return loss, _backward_batch(model.params, batch.x, cache, d_logits)


def dataset_loss(model: ScorerModel, samples: list[Sample]) -> float:
    return _loss_and_grads(model, _Batch(model, samples))[0]


def train(samples: list[Sample], cfg: ScorerConfig, initial: Optional[ScorerModel] = None) -> tuple[ScorerModel, list[float]]:
    """
    Full-batch gradient descent on mean BCE.

    Args:
        samples: Training pairs
        cfg: Scorer config (epochs, learning rate, seed)
        initial: Starting model; defaults to init_model(cfg)

    Returns:
        (trained model, loss curve) where the curve holds the loss before the
        first update followed by the loss after every epoch
    """
    if not samples:
        raise ValidationError("cannot train on an empty dataset")
    model = initial.copy() if initial is not None else init_model(cfg)
    batch = _Batch(model, samples)

    logger.info(
        f"Training scorer on {len(samples)} samples: H={cfg.hidden_dim}, "
        f"lr={cfg.learning_rate}, epochs={cfg.epochs}"
    )
    loss, grads = _loss_and_grads(model, batch)
    curve = [loss]
    for epoch in range(1, cfg.epochs + 1):
        for name in PARAM_NAMES:
            model.params[name] = model.params[name] - cfg.learning_rate * grads[name]
        loss, grads = _loss_and_grads(model, batch)
        if not math.isfinite(loss):
            raise TrainingError(f"loss became {loss} at epoch {epoch}", epoch)
        curve.append(loss)
        if epoch % 50 == 0 or epoch == cfg.epochs:
            logger.info(f"Epoch {epoch}/{cfg.epochs}: loss {loss:.6f}")
    return model, curve


def sample_loss_and_grads(model: ScorerModel, sample: Sample) -> tuple[float, dict]:
    """Loss of bce_loss(forward(...), target) and its analytic gradient"""
    return _loss_and_grads(model, _Batch(model, [sample]))


def grad_check(model: ScorerModel, sample: Sample, epsilon: float = 1e-5) -> float:
    """
    Compare analytic gradients with central finite differences.

    Returns:
        max over all parameter entries of |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-12)
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValidationError(f"epsilon must be in [1e-7, 1e-3], got {epsilon}")

    _, analytic = sample_loss_and_grads(model, sample)
    perturbed = model.copy()
    worst = 0.0
    for name in PARAM_NAMES:
        values = perturbed.params[name]
        grad = np.asarray(analytic[name])
        for index in np.ndindex(values.shape):
            original = values[index]
            values[index] = original + epsilon
            plus = bce_loss(forward(perturbed, sample.features, sample.query_embedding), sample.target)
            values[index] = original - epsilon
            minus = bce_loss(forward(perturbed, sample.features, sample.query_embedding), sample.target)
            values[index] = original
            numeric = (plus - minus) / (2.0 * epsilon)
            error = abs(grad[index] - numeric) / max(abs(grad[index]), abs(numeric), 1e-12)
            worst = max(worst, float(error))
    return worst


def score_samples(model: ScorerModel, features: np.ndarray, embeddings: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Score vector for every query of one video"""
    return {query_id: forward(model, features, emb) for query_id, emb in sorted(embeddings.items())}


def model_to_dict(model: ScorerModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "config": asdict(model.config),
        "parameters": {
            name: {
                "shape": list(model.params[name].shape),
                "values": [float(v) for v in np.ravel(model.params[name])],
            }
            for name in PARAM_NAMES
        },
    }


def model_from_dict(data: dict) -> ScorerModel:
    if data.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValidationError(f"unsupported model format version {data.get('format_version')!r}")
    try:
        cfg = ScorerConfig(**data["config"])
        expected = _shapes(cfg)
        params = {}
        for name in PARAM_NAMES:
            entry = data["parameters"][name]
            shape = tuple(entry["shape"])
            if shape != expected[name]:
                raise ValidationError(f"parameter {name} has shape {shape}, expected {expected[name]}")
            params[name] = np.asarray(entry["values"], dtype=float).reshape(shape)
    except (KeyError, TypeError) as e:
        raise ValidationError(f"malformed model file: {e}") from e
    return ScorerModel(cfg, params)


async def save_model(model: ScorerModel, path: Path, extra: Optional[dict] = None) -> None:
    """Atomically write the model file; extra keys (e.g. the run config) sit next to the parameters"""
    data = model_to_dict(model)
    data.update(extra or {})
    await records.write_atomic(Path(path), json.dumps(data, indent=1) + "\n")


def load_model(path: Path) -> ScorerModel:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON ({e})") from e
    return model_from_dict(data)
