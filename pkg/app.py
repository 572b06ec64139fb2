"""
NumHTML - Command-Line Interface

Numeral- and audio-aware hierarchical transformer for earnings-call based
stock forecasting:
1. gen-data  - write a seeded planted-signal corpus
2. pretrain  - numeral category classification / magnitude comparison
3. train     - Pareto multi-task training over preference sub-regions
4. evaluate  - MCC, F1 and volatility MSE per horizon
5. simulate  - trading simulation (model or baseline strategies)

Usage: python app.py <command> [options]
"""

import sys
import logging
import argparse
from pathlib import Path
from typing import Any, Dict, List, Optional

from config.settings import Config, load_config
from core.corpus import summarize
from core.pipeline import NumHTMLPipeline
from core.reports import format_block, write_json, write_jsonl, write_manifest
from core.synthetic import EffectSizes, write_synthetic
from core.trading import STRATEGIES
from utils.exceptions import ArtifactError, NumHTMLError
from utils.logger import setup_logger

logger = logging.getLogger(__name__)

PRETRAINED_NAME = "pretrained.npz"
MODEL_NAME = "model.npz"


# -------------------- ARGUMENTS --------------------
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat KEY=value configuration file")
    common.add_argument("--seed", type=int, help="random seed (SEED)")
    common.add_argument("--out", help="output directory for artifacts (OUT)")
    common.add_argument("--corpus", help="corpus JSONL file (CORPUS)")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="console and run.log level")

    parser = argparse.ArgumentParser(prog="numhtml", description="Earnings-call stock forecasting with Pareto multi-task learning")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", parents=[common], help="write a synthetic planted-signal corpus")
    gen.add_argument("--calls", type=int, help="number of calls (CALLS)")
    gen.add_argument("--text-effect", type=float, help="drift effect of text polarity (TEXT_EFFECT)")
    gen.add_argument("--numeral-effect", type=float, help="drift effect of the guidance comparison (NUMERAL_EFFECT)")
    gen.add_argument("--audio-effect", type=float, help="drift effect of the audio shift (AUDIO_EFFECT)")

    pre = commands.add_parser("pretrain", parents=[common], help="structured adaptive pre-training")
    pre.add_argument("--task", required=True, choices=["ncc", "mc"])
    pre.add_argument("--checkpoint", help=f"checkpoint to create or continue (default <out>/{PRETRAINED_NAME})")

    train = commands.add_parser("train", parents=[common], help="train and select the forecasting model")
    train.add_argument("--no-pareto", action="store_true", help="fixed equal task weights")
    train.add_argument("--no-pretrain", action="store_true", help="start from random token-level weights")
    train.add_argument("--text-only", action="store_true", help="zero the audio pathway")
    train.add_argument("--pretrained", help=f"pre-trained checkpoint (default <out>/{PRETRAINED_NAME})")
    train.add_argument("--epochs", type=int, help="training epochs (EPOCHS)")
    train.add_argument("--workers", type=int, help="processes for the sub-region runs (WORKERS)")

    ev = commands.add_parser("evaluate", parents=[common], help="per-horizon MCC, F1 and volatility MSE")
    ev.add_argument("--model", help=f"trained model (default <out>/{MODEL_NAME})")
    ev.add_argument("--split", default="test", choices=["train", "valid", "test"])

    sim = commands.add_parser("simulate", parents=[common], help="trading simulation")
    sim.add_argument("--model", help=f"trained model (default <out>/{MODEL_NAME})")
    sim.add_argument("--tau", type=int, help="holding period in days (TAU)")
    sim.add_argument("--strategy", choices=list(STRATEGIES), help="trading strategy (STRATEGY)")
    sim.add_argument("--split", default="test", choices=["train", "valid", "test"])

    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Map command-line flags onto configuration keys."""
    mapping = {
        "seed": "SEED",
        "out": "OUT",
        "corpus": "CORPUS",
        "calls": "CALLS",
        "text_effect": "TEXT_EFFECT",
        "numeral_effect": "NUMERAL_EFFECT",
        "audio_effect": "AUDIO_EFFECT",
        "epochs": "EPOCHS",
        "workers": "WORKERS",
        "tau": "TAU",
        "strategy": "STRATEGY",
    }
    overrides = {key: getattr(args, attr) for attr, key in mapping.items() if getattr(args, attr, None) is not None}
    if getattr(args, "no_pareto", False):
        overrides["USE_PARETO"] = False
    if getattr(args, "no_pretrain", False):
        overrides["USE_PRETRAIN"] = False
    if getattr(args, "text_only", False):
        overrides["TEXT_ONLY"] = True
    return overrides


def _path(value: Optional[str], default: Path) -> Path:
    return Path(value) if value else default


# -------------------- COMMANDS --------------------
def cmd_gen_data(args: argparse.Namespace, config: Config) -> Dict[str, List[Path]]:
    data = config.data
    corpus = Path(data.corpus_path)
    effects = EffectSizes(data.text_effect, data.numeral_effect, data.audio_effect)
    records = write_synthetic(corpus, data.seed, data.calls, effects, data.horizons, data.pre_event_days)
    print(format_block("corpus", {"path": corpus, **summarize(records)}))
    return {"inputs": [], "outputs": [corpus]}


def cmd_pretrain(args: argparse.Namespace, config: Config) -> Dict[str, List[Path]]:
    checkpoint = _path(args.checkpoint, config.output_dir / PRETRAINED_NAME)
    pipeline = NumHTMLPipeline(config)
    pipeline.initialize()
    report = pipeline.pretrain(args.task, checkpoint)
    report_path = write_json(config.output_dir / f"pretrain_{args.task}.json", report)
    print(format_block(f"pretrain {args.task}", report))
    instances = checkpoint.parent / f"{args.task}_instances.jsonl"
    return {"inputs": [Path(config.data.corpus_path)], "outputs": [checkpoint, report_path, instances]}


def cmd_train(args: argparse.Namespace, config: Config) -> Dict[str, List[Path]]:
    out = config.output_dir
    pretrained = None
    if config.training.use_pretrain:
        pretrained = _path(args.pretrained, out / PRETRAINED_NAME)
        if not pretrained.is_file():
            raise ArtifactError(
                f"pre-trained checkpoint not found: {pretrained} (run 'pretrain --task ncc' first or pass --no-pretrain)"
            )

    pipeline = NumHTMLPipeline(config)
    pipeline.initialize()
    outcome = pipeline.train(pretrained)

    model_path = pipeline.save_model(outcome, out / MODEL_NAME, {"config_hash": config.config_hash()})
    trajectory = write_jsonl(
        out / "trajectory.jsonl", (row.to_dict() for r in outcome.results for row in r.trajectory)
    )
    report = write_json(out / "train_report.json", outcome.summary())
    print(format_block("train", {
        "best_k": outcome.best_k,
        "subproblems": len(outcome.results),
        "validation_return_mse": outcome.validation_mse[outcome.best_k],
        "pareto": config.training.use_pareto,
        "pretrained": pretrained is not None,
        "text_only": config.training.text_only,
    }))
    inputs = [Path(config.data.corpus_path)] + ([pretrained] if pretrained else [])
    return {"inputs": inputs, "outputs": [model_path, trajectory, report]}


def cmd_evaluate(args: argparse.Namespace, config: Config) -> Dict[str, List[Path]]:
    model_path = _path(args.model, config.output_dir / MODEL_NAME)
    pipeline = NumHTMLPipeline(config)
    pipeline.initialize()
    reports = pipeline.evaluate(model_path, args.split)

    values: Dict[str, Any] = {}
    for report in reports.values():
        values.update(report.to_dict())
    path = write_json(config.output_dir / f"evaluation_{args.split}.json", {
        "split": args.split,
        "metrics": values,
        "confusion": {str(n): r.confusion for n, r in reports.items()},
    })
    print(format_block(f"evaluate {args.split}", values))
    return {"inputs": [Path(config.data.corpus_path), model_path], "outputs": [path]}


def cmd_simulate(args: argparse.Namespace, config: Config) -> Dict[str, List[Path]]:
    trading = config.trading
    model_path = _path(args.model, config.output_dir / MODEL_NAME) if trading.strategy == "model" else None
    pipeline = NumHTMLPipeline(config)
    pipeline.initialize()
    ledger = pipeline.simulate(trading.strategy, trading.tau, model_path, args.split)

    ledger_path = write_jsonl(config.output_dir / f"ledger_{trading.strategy}.jsonl", ledger.to_records())
    print(format_block(f"simulate {trading.strategy} tau={trading.tau}", ledger.summary(trading.risk_free_rate)))
    inputs = [Path(config.data.corpus_path)] + ([model_path] if model_path else [])
    return {"inputs": inputs, "outputs": [ledger_path]}


COMMANDS = {
    "gen-data": cmd_gen_data,
    "pretrain": cmd_pretrain,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
}


# -------------------- MAIN --------------------
def main(argv: Optional[List[str]] = None) -> int:
    """
    Run one command.

    Returns:
        Process exit code (0 success, 2 usage, 3 validation, 4 numeric, 5 I/O, 1 other)
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args.config, overrides_from_args(args))
        config.output_dir.mkdir(parents=True, exist_ok=True)
        setup_logger("", level=args.log_level or config.logging.level, log_file=config.output_dir / "run.log")
        logger.info(f"Running '{args.command}' (config hash {config.config_hash()[:12]})")

        artifacts = COMMANDS[args.command](args, config)

        inputs = artifacts["inputs"] + ([Path(args.config)] if args.config else [])
        write_manifest(config.output_dir, args.command, argv, config.config_hash(), inputs, artifacts["outputs"])
        return 0
    except NumHTMLError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return ArtifactError.exit_code


if __name__ == "__main__":
    sys.exit(main())
