#!/usr/bin/env python3
"""
Step grounding toolkit: synthesize, train, localize, evaluate and sweep.

Usage:
    python cli.py synth --videos 20 --oracle-noise 0.1 --output runs/demo
    python cli.py train --annotations runs/demo/annotations.jsonl --features runs/demo/features
    python cli.py run --annotations runs/demo/annotations.jsonl --scores runs/demo/scores.jsonl
    python cli.py sweep --annotations ... --scores ... --alpha-grid 50,85,95 --beta-grid 0.05,0.1,0.2
    python cli.py eval --annotations ... --predictions runs/demo/predictions.jsonl

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime failure.
"""

import argparse
import asyncio
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

import records
from core import GenerationError, GroundingError, ValidationError, concat_features, downsample_features
from evaluation import (
    VideoRecord,
    evaluate_dataset,
    recall_at_1,
    score_predictions,
    sweep,
)
from extraction import ExtractionConfig, localize_video
from ground_truth import build_event_vectors, text_embedding
from prior import PriorConfig
from scorer import (
    Sample,
    ScorerConfig,
    load_model,
    save_model,
    score_samples,
    train,
)
from settings import RunConfig, load_settings, read_config_file, resolve_config
from synth import SynthConfig, generate_scenario, oracle_scores

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3

DEFAULT_ALPHA_GRID = (50.0, 70.0, 85.0, 95.0)
DEFAULT_BETA_GRID = (0.05, 0.1, 0.2, 0.4)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def setup_logging(level: str, log_file: Optional[str]) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )
    # Keep third-party loggers quiet
    logging.getLogger('asyncio').setLevel(logging.WARNING)


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    return values


def _add_inference_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--annotations", help="annotation JSONL file")
    parser.add_argument("--scores", help="score JSONL (or .tsv) file")
    parser.add_argument("--model", help="trained scorer model (alternative to --scores)")
    parser.add_argument("--features", action="append", help="feature directory; repeat to concatenate backbones")
    parser.add_argument("--beta", type=float, help="prior spread factor (default 0.1)")
    parser.add_argument("--beta-is-variance", action="store_true", default=None,
                        help="treat S_i * beta as the prior variance instead of its std")
    parser.add_argument("--thresholds", type=_float_list, help="IoU thresholds (default 0.3,0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cli.py", description="Step grounding with a temporal-order prior")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with run options")
    common.add_argument("--output", help="output directory (default: $GROUNDER_OUTPUT_DIR or runs)")
    common.add_argument("--segments", type=int, dest="max_segments", help="max segments S (default 512)")
    common.add_argument("--seed", type=int, help="random seed (default 42)")
    common.add_argument("--jobs", type=int, help="worker threads (default: $GROUNDER_JOBS or 1)")

    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic cyclic-activity dataset")
    p.add_argument("--videos", type=int, default=20)
    p.add_argument("--min-segments", type=int, default=64)
    p.add_argument("--max-video-segments", type=int, default=512)
    p.add_argument("--min-steps", type=int, default=3)
    p.add_argument("--max-steps", type=int, default=8)
    p.add_argument("--repeat-probability", type=float, default=0.3)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--feature-noise", type=float, default=0.3)
    p.add_argument("--shuffle-placement", action="store_true")
    p.add_argument("--oracle-noise", type=float, help="also write oracle scores with this noise level")

    p = sub.add_parser("train", parents=[common], help="train the per-segment scorer with BCE")
    p.add_argument("--annotations")
    p.add_argument("--features", action="append")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)

    p = sub.add_parser("run", parents=[common], help="localize every query and evaluate")
    _add_inference_flags(p)
    p.add_argument("--alpha", type=float, help="percentile level (default 85)")
    p.add_argument("--no-prior", action="store_true", default=None, help="disable the temporal-order prior")

    p = sub.add_parser("sweep", parents=[common], help="evaluate an alpha x beta grid")
    _add_inference_flags(p)
    p.add_argument("--alpha-grid", type=_float_list, default=list(DEFAULT_ALPHA_GRID))
    p.add_argument("--beta-grid", type=_float_list, default=list(DEFAULT_BETA_GRID))

    p = sub.add_parser("eval", parents=[common], help="evaluate a precomputed prediction file")
    p.add_argument("--annotations")
    p.add_argument("--predictions")
    p.add_argument("--thresholds", type=_float_list)
    return parser


def _resolve(args: argparse.Namespace, settings) -> RunConfig:
    file_values = read_config_file(Path(args.config)) if args.config else {}
    overrides = {
        name: getattr(args, name, None)
        for name in ("alpha", "beta", "beta_is_variance", "max_segments", "thresholds", "seed",
                     "jobs", "no_prior", "annotations", "scores", "features", "model", "predictions")
    }
    overrides["output_dir"] = args.output
    file_values.setdefault("jobs", settings.jobs)
    file_values.setdefault("output_dir", str(settings.output_dir))
    return resolve_config(file_values, overrides)


def _require(value, flag: str):
    if not value:
        raise UsageError(f"{flag} is required")
    return value


def _load_features(cfg: RunConfig, video: VideoRecord) -> np.ndarray:
    matrices = [records.read_features(Path(d), video.meta.video_id) for d in cfg.features]
    return downsample_features(concat_features(*matrices), video.meta)


def _load_dataset(cfg: RunConfig) -> list[VideoRecord]:
    """Annotations with scores attached, either from a score file or from a trained model"""
    videos = records.read_annotations(Path(_require(cfg.annotations, "--annotations")), cfg.max_segments)
    if cfg.scores:
        records.attach_scores(videos, records.read_scores(Path(cfg.scores)))
    elif cfg.model:
        _require(cfg.features, "--features (with --model)")
        model = load_model(Path(cfg.model))
        for video in videos:
            feats = _load_features(cfg, video)
            if feats.shape[1] != model.config.feature_dim:
                raise ValidationError(
                    f"{video.meta.video_id}: features have dim {feats.shape[1]}, "
                    f"model expects {model.config.feature_dim}"
                )
            embeddings = {q.query_id: text_embedding(q.text, feats.shape[1]) for q in video.queries}
            video.scores = score_samples(model, feats, embeddings)
        logger.info(f"Scored {sum(len(v.queries) for v in videos)} queries with {cfg.model}")
    else:
        raise UsageError("either --scores or --model with --features is required")
    return videos


def _extraction_configs(cfg: RunConfig) -> tuple[ExtractionConfig, Optional[PriorConfig]]:
    prior_cfg = None if cfg.no_prior else PriorConfig(cfg.beta, spread_is_std=not cfg.beta_is_variance)
    return ExtractionConfig(cfg.alpha), prior_cfg


async def _localize_all(dataset: list[VideoRecord], cfg: RunConfig):
    """Per-video refinement and extraction in a bounded worker pool"""
    extraction_cfg, prior_cfg = _extraction_configs(cfg)
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        per_video = await asyncio.gather(*(
            loop.run_in_executor(pool, localize_video, v.meta, v.queries, v.scores, extraction_cfg, prior_cfg)
            for v in dataset
        ))
    return [p for predictions in per_video for p in predictions]


def _recall_text(result) -> str:
    return "  ".join(f"R@1 IoU{t}: {r * 100:.2f}" for t, r in zip(result.thresholds, result.recalls))


def _metrics(result) -> dict:
    tp, fp, fn = result.confusion
    return {
        "queries": result.count,
        "recall": {str(t): r for t, r in zip(result.thresholds, result.recalls)},
        "mean_interval_s": result.mean_interval_s,
        "segment_confusion": {"tp": tp, "fp": fp, "fn": fn},
        "per_query": [
            {"query_id": r.query_id, "iou": r.iou, "hits": {str(t): h for t, h in zip(result.thresholds, r.hits)}}
            for r in result.per_query
        ],
    }


async def cmd_synth(args: argparse.Namespace, cfg: RunConfig) -> int:
    synth_cfg = SynthConfig(
        num_videos=args.videos,
        segments_range=(args.min_segments, args.max_video_segments),
        steps_per_video=(args.min_steps, args.max_steps),
        repeat_probability=args.repeat_probability,
        noise_sigma=args.oracle_noise or 0.0,
        feature_noise=args.feature_noise,
        feature_dim=args.feature_dim,
        max_segments=cfg.max_segments,
        shuffle_placement=args.shuffle_placement,
        seed=cfg.seed,
    )
    videos = generate_scenario(synth_cfg)
    out = Path(cfg.output_dir)
    config = {"synth": asdict(synth_cfg), "oracle_noise": args.oracle_noise}

    files: dict[Path, object] = {
        out / "annotations.jsonl": records.annotation_lines([v.record for v in videos], config),
    }
    for v in videos:
        files[records.feature_path(out / "features", v.record.meta.video_id)] = records.npy_bytes(v.features)
    if args.oracle_noise is not None:
        scores = oracle_scores([v.record for v in videos], args.oracle_noise, cfg.seed)
        files[out / "scores.jsonl"] = records.score_lines(scores, config)
    await records.write_files(files)

    print(f"✅ Generated {len(videos)} videos into {out}")
    return EXIT_OK


async def cmd_train(args: argparse.Namespace, cfg: RunConfig) -> int:
    _require(cfg.features, "--features")
    videos = records.read_annotations(Path(_require(cfg.annotations, "--annotations")), cfg.max_segments)

    samples = []
    dims = set()
    for video in videos:
        feats = _load_features(cfg, video)
        dims.add(feats.shape[1])
        vectors = build_event_vectors(video.queries, video.meta)
        for q in video.queries:
            samples.append(Sample(feats, text_embedding(q.text, feats.shape[1]), vectors[q.query_id]))
    if len(dims) > 1:
        raise ValidationError(f"videos have different feature dims: {sorted(dims)}")
    if not samples:
        raise ValidationError("no training samples found")

    scorer_cfg = ScorerConfig(
        feature_dim=dims.pop(),
        hidden_dim=args.hidden,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=cfg.seed,
    )
    loop = asyncio.get_running_loop()
    model, curve = await loop.run_in_executor(None, train, samples, scorer_cfg)

    out = Path(cfg.output_dir)
    config = {"run": cfg.to_dict(), "scorer": asdict(scorer_cfg)}
    await save_model(model, out / "model.json", {"run_config": cfg.to_dict()})
    await records.write_files({
        out / "loss_curve.json": records.to_json({"epochs": list(range(len(curve))), "loss": curve}, config),
    })
    print(f"✅ Trained on {len(samples)} samples: loss {curve[0]:.6f} -> {curve[-1]:.6f}")
    print(f"📁 Model saved to {out / 'model.json'}")
    return EXIT_OK


async def cmd_run(args: argparse.Namespace, cfg: RunConfig) -> int:
    dataset = _load_dataset(cfg)
    predictions = await _localize_all(dataset, cfg)
    result = score_predictions(dataset, predictions, cfg.thresholds)

    out = Path(cfg.output_dir)
    config = cfg.to_dict()
    files: dict[Path, object] = {
        out / "predictions.jsonl": records.prediction_lines(predictions, config),
        out / "metrics.json": records.to_json(_metrics(result), config),
    }
    if cfg.model:
        files[out / "scores.jsonl"] = records.score_lines(
            {v.meta.video_id: v.scores for v in dataset}, config
        )
    await records.write_files(files)

    mode = "baseline (no prior)" if cfg.no_prior else f"prior beta={cfg.beta}"
    print(f"📊 {result.count} queries, alpha={cfg.alpha}, {mode}")
    print(f"📊 {_recall_text(result)}")
    return EXIT_OK


async def cmd_sweep(args: argparse.Namespace, cfg: RunConfig) -> int:
    if not args.alpha_grid or not args.beta_grid:
        raise UsageError("--alpha-grid and --beta-grid must not be empty")
    for alpha in args.alpha_grid:
        ExtractionConfig(alpha)
    dataset = _load_dataset(cfg)

    def evaluate_cells(cells):
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(
                lambda cell: evaluate_dataset(dataset, cell[0], cell[1], cfg.thresholds)[1], cells
            ))

    loop = asyncio.get_running_loop()
    rows = await loop.run_in_executor(
        None,
        lambda: sweep(dataset, args.alpha_grid, args.beta_grid, cfg.thresholds, cfg.beta_is_variance, evaluate_cells),
    )

    config = cfg.to_dict()
    config["alpha_grid"] = list(args.alpha_grid)
    config["beta_grid"] = list(args.beta_grid)
    table = [
        {
            "alpha": row.alpha,
            "beta": row.beta,
            "recall": {str(t): r for t, r in zip(cfg.thresholds, row.recalls)},
            "mean_interval_s": row.mean_interval_s,
            "best": row.best,
        }
        for row in rows
    ]
    best = next(row for row in table if row["best"])
    by_alpha = {}
    for row in rows:
        by_alpha.setdefault(row.alpha, []).append(row.mean_interval_s)
    mean_length = {str(a): float(np.mean(v)) for a, v in by_alpha.items()}
    await records.write_files({
        Path(cfg.output_dir) / "sweep.json": records.to_json(
            {"rows": table, "best": best, "mean_interval_s_by_alpha": mean_length}, config
        ),
    })

    header = f"{'alpha':>7} {'beta':>7} " + " ".join(f"{'IoU' + str(t):>9}" for t in cfg.thresholds) + f" {'len(s)':>8}"
    print(header)
    for row in rows:
        marker = "  <- best" if row.best else ""
        recalls = " ".join(f"{r * 100:9.2f}" for r in row.recalls)
        print(f"{row.alpha:7.1f} {row.beta:7.3f} {recalls} {row.mean_interval_s:8.2f}{marker}")
    return EXIT_OK


async def cmd_eval(args: argparse.Namespace, cfg: RunConfig) -> int:
    videos = records.read_annotations(Path(_require(cfg.annotations, "--annotations")), cfg.max_segments)
    predicted = records.read_predictions(Path(_require(cfg.predictions, "--predictions")))
    annotated = {
        f"{v.meta.video_id}/{q.query_id}": (q.start_s, q.end_s) for v in videos for q in v.queries
    }
    result = recall_at_1({f"{vid}/{qid}": span for (vid, qid), span in predicted.items()}, annotated, cfg.thresholds)

    await records.write_files({
        Path(cfg.output_dir) / "metrics.json": records.to_json(_metrics(result), cfg.to_dict()),
    })
    print(f"📊 {result.count} queries  {_recall_text(result)}")
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
}


def main(argv: Optional[list[str]] = None) -> int:
    settings = load_settings()
    setup_logging(settings.log_level, settings.log_file)
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve(args, settings)
        return asyncio.run(COMMANDS[args.command](args, cfg))
    except UsageError as e:
        print(f"❌ Usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, GenerationError) as e:
        logger.error(f"Invalid input: {e}")
        print(f"❌ Invalid input: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except GroundingError as e:
        logger.error(f"Run failed: {e}", exc_info=True)
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        print(f"❌ Unexpected error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
