#!/usr/bin/env python3
"""
Punto de entrada principal de VCA-GAN
=====================================

Subcomandos para generar el corpus sintético, entrenar la GAN y la
postnet, sintetizar, evaluar, medir la inferencia y verificar gradientes.
"""

import argparse
import os
import sys

# Agregar el directorio src al path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "src"))

from src import ConfigurationError, ExperimentOrchestrator
from src.classes.experiment_orchestrator import EXIT_USAGE
from src.utils import parse_int_list


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser que sale con código 1 ante errores de uso."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got '{text}'")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    common = UsageParser(add_help=False)
    common.add_argument("--config", "-c", help="Configuration file (key=value text or YAML)")
    common.add_argument("--seed", type=int, help="Global seed (overrides the configuration)")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        type=parse_override,
        metavar="KEY=VALUE",
        help="Override a configuration key (repeatable)",
    )
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")

    parser = UsageParser(
        description="VCA-GAN lip-to-speech experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py gen-data --n 200 --seed 0 --out corpus
  python main.py train --config config/desk.cfg --data corpus --out runs/full
  python main.py train --config config/desk.cfg --out runs/base --no-attention --no-sync --single-discriminator
  python main.py postnet-train --ckpt runs/full/best.vcag --out runs/full/postnet.vcag
  python main.py synth --ckpt runs/full/best.vcag --video corpus/video/s00000.vid --out out/
  python main.py eval --ckpt runs/full/best.vcag --split test
  python main.py gradcheck
  python main.py benchmark --ckpt runs/full/best.vcag

Exit codes: 0 success, 1 usage/configuration, 2 data error, 3 numeric failure, 130 interrupted.
        """,
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=UsageParser)
    sub.required = True

    p = sub.add_parser("gen-data", parents=[common], help="Render the synthetic corpus")
    p.add_argument("--n", type=int, required=True, help="Number of clip/audio pairs")
    p.add_argument("--out", required=True, help="Output directory")

    p = sub.add_parser("train", parents=[common], help="Train the GAN")
    p.add_argument("--out", required=True, help="Checkpoint and log directory")
    p.add_argument("--data", help="Corpus directory (default: corpus_directory)")
    p.add_argument("--resume", help="Checkpoint to resume from")
    p.add_argument("--no-attention", action="store_true", help="Replace attention context with zeros")
    p.add_argument("--no-sync", action="store_true", help="Disable the synchronization loss")
    p.add_argument(
        "--single-discriminator", action="store_true", help="Only the final-resolution discriminator"
    )

    p = sub.add_parser("postnet-train", parents=[common], help="Train the postnet on ground-truth mels")
    p.add_argument("--ckpt", required=True, help="Trained GAN checkpoint")
    p.add_argument("--out", required=True, help="Output checkpoint")
    p.add_argument("--data", help="Corpus directory (default: corpus_directory)")
    p.add_argument("--steps", type=int, help="Postnet steps (default: postnet_steps)")

    p = sub.add_parser("synth", parents=[common], help="Synthesize mel, WAV and attention maps")
    p.add_argument("--ckpt", required=True, help="Model checkpoint")
    p.add_argument("--video", required=True, help="VID0 clip")
    p.add_argument("--out", required=True, help="Output directory")

    p = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint on a corpus split")
    p.add_argument("--ckpt", required=True, help="Model checkpoint")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--data", help="Corpus directory (default: corpus_directory)")
    p.add_argument("--out", help="Metrics summary (default: next to the checkpoint)")
    p.add_argument("--scorer", help="Checkpoint whose encoders score synchronization")

    p = sub.add_parser("gradcheck", parents=[common], help="Run the finite-difference suite")
    p.add_argument("--seeds", type=int, default=10, help="Random seeds per case (default: 10)")
    p.add_argument("--tolerance", type=float, default=1e-4, help="Maximum relative error")
    p.add_argument("--case", dest="cases", action="append", help="Only this case (repeatable)")

    p = sub.add_parser("benchmark", parents=[common], help="Synthesis time against clip length")
    p.add_argument("--ckpt", help="Model checkpoint (default: freshly initialized model)")
    p.add_argument("--lengths", type=parse_int_list, default=[8, 16, 32, 64], help="Clip lengths T")
    p.add_argument("--repeats", type=int, default=3)

    sub.add_parser("validate-config", parents=[common], help="Only validate the configuration")
    return parser


def collect_overrides(args: argparse.Namespace) -> dict:
    overrides = dict(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "no_attention", False):
        overrides["use_attention"] = False
    if getattr(args, "no_sync", False):
        overrides["use_sync"] = False
    if getattr(args, "single_discriminator", False):
        overrides["single_discriminator"] = True
    return overrides


def main(argv=None):
    """Función principal."""
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        orchestrator = ExperimentOrchestrator(
            config_path=args.config,
            overrides=collect_overrides(args),
            run_name=args.command.replace("-", "_"),
            verbose=args.verbose,
        )
    except ConfigurationError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE

    opts = vars(args)
    commands = {
        "gen-data": (orchestrator.gen_data, {"out_dir": opts.get("out"), "n_samples": opts.get("n"), "seed": args.seed}),
        "train": (
            orchestrator.train,
            {"out_dir": opts.get("out"), "data_dir": opts.get("data"), "resume": opts.get("resume")},
        ),
        "postnet-train": (
            orchestrator.postnet_train,
            {
                "checkpoint": opts.get("ckpt"),
                "out_path": opts.get("out"),
                "data_dir": opts.get("data"),
                "steps": opts.get("steps"),
            },
        ),
        "synth": (
            orchestrator.synth,
            {"checkpoint": opts.get("ckpt"), "video": opts.get("video"), "out_dir": opts.get("out")},
        ),
        "eval": (
            orchestrator.evaluate,
            {
                "checkpoint": opts.get("ckpt"),
                "split": opts.get("split"),
                "data_dir": opts.get("data"),
                "out_path": opts.get("out"),
                "scorer": opts.get("scorer"),
            },
        ),
        "gradcheck": (
            orchestrator.gradcheck,
            {"seeds": opts.get("seeds"), "tolerance": opts.get("tolerance"), "cases": opts.get("cases")},
        ),
        "benchmark": (
            orchestrator.benchmark,
            {"checkpoint": opts.get("ckpt"), "lengths": opts.get("lengths"), "repeats": opts.get("repeats")},
        ),
        "validate-config": (orchestrator.validate_config, {}),
    }

    try:
        action, kwargs = commands[args.command]
        exit_code = orchestrator.run(args.command, action, **kwargs)
        for key, value in orchestrator.get_stats().items():
            print(f"{key}={value}")
        return exit_code

    except Exception as e:
        print(f"Fatal error: {e}", file=sys.stderr)
        return 1

    finally:
        orchestrator.cleanup()


if __name__ == "__main__":
    exit(main())
