"""``gleason-seg`` command line: synth, train, predict, eval, compare and gradcheck.

Exit codes: 0 success, 1 usage error, 2 runtime failure. Logs go to stderr;
machine outputs (datasets, checkpoints, masks, CSVs) only to files. The
gradcheck table is the one report printed to stdout.

Usage:
    gleason-seg synth --count 8 --size 32 --seed 7 --out data/
    gleason-seg train --arch tiny-resunet --manifest data/manifest.tsv --epochs 75 --out model.sgck
    gleason-seg eval --model model.sgck --manifest data/manifest.tsv --split train --metrics-out metrics.csv
    gleason-seg gradcheck --op conv2d
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from gleason_seg import __version__
from gleason_seg.architectures import load_presets, preset_spec
from gleason_seg.architectures.model import Model
from gleason_seg.atomic import write_csv
from gleason_seg.data import generate_synthetic, load_dataset, load_image, load_manifest, resize_mask, save_mask
from gleason_seg.data.samples import Sample
from gleason_seg.data.synthetic import MANIFEST_NAME
from gleason_seg.engine import ops
from gleason_seg.engine.tensor import Tensor
from gleason_seg.errors import SegmentationError
from gleason_seg.log import configure_logging, default_level
from gleason_seg.metrics import ConfusionMatrix, confusion, per_class_report, write_metrics_csv
from gleason_seg.metrics.agreement import MetricsReport, format_value
from gleason_seg.scripts.gradcheck_suite import ARCH_CASES, OP_CASES, format_table, run_case, select_cases
from gleason_seg.training import OptimizerConfig, TrainConfig, load_checkpoint, load_config_file, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

TRAIN_ARCHS = ("unet", "resunet", "segnet", "fcn8", "fcn16", "fcn32")
COMPARE_HEADER = ("model", "mean_foreground_dice", "accuracy", "quadratic_kappa")

# Options each subcommand cannot run without; checked after config files are merged.
REQUIRED: dict[str, tuple[str, ...]] = {
    "synth": ("out",),
    "train": ("arch", "manifest", "out"),
    "predict": ("model", "image", "mask_out"),
    "eval": ("model", "manifest", "metrics_out"),
    "compare": ("models", "manifest", "out"),
    "gradcheck": (),
}
_NOT_FROM_CONFIG = {"command", "config", "handler", "help", "version"}


class UsageError(Exception):
    """Invalid command line; maps to exit code 1."""


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _predict_labels(model: Model, image: Tensor) -> np.ndarray:
    """Resize to the model's input size, run it, and map labels back to the image size."""
    _, _, h, w = image.shape
    size = model.spec.input_size
    resized = ops.resize_bilinear(image, size, size) if (h, w) != (size, size) else image
    labels = ops.argmax_channels(model(resized))[0]
    return resize_mask(labels, h, w) if (h, w) != (size, size) else labels


def evaluate_model(model: Model, samples: Sequence[Sample], include_background: bool = True) -> MetricsReport:
    """Merge per-image confusion matrices at original resolution into one report."""
    model.eval()
    total = ConfusionMatrix.zeros(model.spec.num_classes)
    for sample in samples:
        pred = _predict_labels(model, sample.image)
        total = total + confusion(pred, sample.mask, model.spec.num_classes)
    return per_class_report(total, include_background=include_background)


def _evaluation_samples(manifest_path: Path, split: str) -> list[Sample]:
    samples = load_dataset(load_manifest(manifest_path), split)
    if not samples:
        raise SegmentationError(f"Split '{split}' of {manifest_path} is empty")
    return samples


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    if args.count < 1:
        raise UsageError(f"--count must be positive, got {args.count}")
    if args.test_fraction < 0 or args.val_fraction < 0 or args.test_fraction + args.val_fraction > 1:
        raise UsageError("--test-fraction and --val-fraction must be non-negative and sum to at most 1")
    manifest = generate_synthetic(
        args.out, args.count, args.size, args.seed, test_fraction=args.test_fraction, val_fraction=args.val_fraction
    )
    logger.info(f"Manifest {Path(args.out) / MANIFEST_NAME}: {manifest.counts()}")
    return EXIT_OK


def _train_config(args: argparse.Namespace) -> TrainConfig:
    overrides = {"input_size": args.size, "depth": args.depth, "base_filters": args.base_filters}
    spec = preset_spec(args.arch, **overrides)
    out = Path(args.out)
    return TrainConfig(
        arch=spec,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        optimizer=OptimizerConfig(kind=args.optimizer, lr=args.lr, momentum=args.momentum),
        checkpoint=out,
        loss_log=Path(args.loss_log) if args.loss_log else out.with_suffix(".loss.csv"),
        log_interval=args.log_interval,
        max_steps=args.max_steps,
    )


def cmd_train(args: argparse.Namespace) -> int:
    config = _train_config(args)
    logger.info(f"Resolved training config: {config.model_dump_json()}")
    dataset = load_dataset(load_manifest(args.manifest), args.split)
    if not dataset:
        raise SegmentationError(f"Split '{args.split}' of {args.manifest} is empty")
    result = train(config, dataset)
    logger.info(f"Finished {len(result.history)} steps; final loss {result.losses[-1]:.6f}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.model)
    labels = _predict_labels(model, load_image(args.image))
    path = save_mask(labels, args.mask_out, "palette" if args.palette else "raw")
    logger.info(f"Wrote {'palette' if args.palette else 'raw'} mask {path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    model = load_checkpoint(args.model)
    report = evaluate_model(model, _evaluation_samples(Path(args.manifest), args.split), not args.exclude_bg)
    write_metrics_csv(report, args.metrics_out)
    logger.info(
        f"{model.spec.name} on '{args.split}': accuracy={format_value(report.accuracy)} "
        f"kappa={format_value(report.quadratic_kappa)} fg_dice={format_value(report.mean_foreground_dice)}"
    )
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    stems = [Path(path).stem for path in args.models]
    duplicates = sorted({stem for stem in stems if stems.count(stem) > 1})
    if duplicates:
        raise UsageError(f"compare rows are keyed by file name; duplicate name(s): {', '.join(duplicates)}")
    samples = _evaluation_samples(Path(args.manifest), args.split)
    rows: list[Sequence[object]] = [COMPARE_HEADER]
    for path in args.models:
        report = evaluate_model(load_checkpoint(path), samples, not args.exclude_bg)
        rows.append(
            (
                Path(path).stem,
                format_value(report.mean_foreground_dice),
                format_value(report.accuracy),
                format_value(report.quadratic_kappa),
            )
        )
        logger.info(f"{path}: fg_dice={format_value(report.mean_foreground_dice)}")
    write_csv(args.out, rows)
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = [run_case(case, seed=args.seed) for case in select_cases(op=args.op, arch=args.arch)]
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error(f"Gradient check failed for: {', '.join(failed)}")
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> tuple[CliParser, dict[str, CliParser]]:
    common = CliParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value or YAML file with defaults for these options")
    common.add_argument(
        "--log-level", default=default_level(), help="Log level (default: $GLEASON_SEG_LOG_LEVEL or INFO)"
    )
    common.add_argument("--log-json", action="store_true", help="Emit JSON log records")

    parser = CliParser(prog="gleason-seg", description="Gleason-pattern semantic segmentation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=CliParser)
    commands: dict[str, CliParser] = {}

    def add(name: str, handler: Callable[[argparse.Namespace], int], help_text: str) -> CliParser:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(handler=handler)
        commands[name] = p
        return p

    p = add("synth", cmd_synth, "Generate a synthetic dataset and manifest")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--val-fraction", type=float, default=0.0)

    presets = sorted(load_presets())
    p = add("train", cmd_train, "Train a model on a manifest split")
    p.add_argument("--arch", choices=presets, help=f"One of: {', '.join(TRAIN_ARCHS)} (or a tiny-* preset)")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--split", default="train")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--size", type=int, default=None, help="Input size (default: the preset's)")
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--base-filters", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--optimizer", choices=("adam", "sgd_momentum"), default="adam")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--log-interval", type=int, default=10)
    p.add_argument("--loss-log", type=Path, default=None, help="Loss CSV (default: <out>.loss.csv)")
    p.add_argument("--out", type=Path)

    p = add("predict", cmd_predict, "Predict a label mask for one PPM image")
    p.add_argument("--model", type=Path)
    p.add_argument("--image", type=Path)
    p.add_argument("--mask-out", type=Path)
    p.add_argument("--palette", action="store_true", help="Write colour PPM instead of raw class PGM")

    p = add("eval", cmd_eval, "Evaluate a checkpoint on a manifest split")
    p.add_argument("--model", type=Path)
    p.add_argument("--manifest", type=Path)
    p.add_argument("--split", default="test")
    p.add_argument("--metrics-out", type=Path)
    p.add_argument("--exclude-bg", action="store_true", help="Compute kappa over the foreground classes only")

    p = add("compare", cmd_compare, "Evaluate several checkpoints side by side")
    p.add_argument("--models", type=Path, nargs="+")
    p.add_argument("--manifest", type=Path)
    p.add_argument("--split", default="test")
    p.add_argument("--out", type=Path)
    p.add_argument("--exclude-bg", action="store_true")

    p = add("gradcheck", cmd_gradcheck, "Finite-difference gradient checks")
    target = p.add_mutually_exclusive_group()
    target.add_argument("--op", choices=sorted(OP_CASES))
    target.add_argument("--arch", choices=sorted(ARCH_CASES))
    p.add_argument("--seed", type=int, default=0)

    return parser, commands


def _to_flag_value(value: object, action: argparse.Action) -> object:
    """Coerce a config-file value the way the command line would."""
    if action.nargs == 0 and action.const is True:
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    if action.nargs == "+" and isinstance(value, str):
        return [action.type(v) if action.type else v for v in value.split()]  # type: ignore[operator]
    return value


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    """Parse ``argv``, filling unspecified options from ``--config`` (flags win).

    Raises:
        UsageError: Bad flags, unknown config keys or missing required options.
    """
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError(f"{parser.prog}: a subcommand is required ({', '.join(commands)})")
    command = commands[args.command]

    if args.config is not None:
        try:
            values = load_config_file(args.config)
        except (OSError, ValueError) as exc:
            raise UsageError(f"Cannot read config {args.config}: {exc}") from exc
        actions = {a.dest: a for a in command._actions if a.dest not in _NOT_FROM_CONFIG}  # noqa: SLF001
        unknown = sorted(set(values) - set(actions))
        if unknown:
            raise UsageError(f"Unknown option(s) in {args.config} for '{args.command}': {', '.join(unknown)}")
        command.set_defaults(**{k: _to_flag_value(v, actions[k]) for k, v in values.items()})
        args = parser.parse_args(argv)

    missing = [name for name in REQUIRED[args.command] if getattr(args, name) is None]
    if missing:
        flags = ", ".join("--" + name.replace("_", "-") for name in missing)
        raise UsageError(f"{parser.prog} {args.command}: missing required option(s): {flags}")
    return args


def exit_code_for(exc: UsageError | ValidationError | SegmentationError | OSError) -> int:
    """Print a one-line diagnostic for ``exc`` and return its exit code.

    Only these error types are mapped; anything else is a bug and propagates from ``run``.
    """
    if isinstance(exc, ValidationError):
        message = "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors())
        print(f"error: invalid configuration: {message}", file=sys.stderr)
        return EXIT_USAGE
    if isinstance(exc, SegmentationError | OSError):
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


def run(argv: Sequence[str] | None = None) -> int:
    """Run one invocation and return its exit code."""
    try:
        args = parse_args(argv)
        configure_logging(args.log_level, json_format=args.log_json)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    resolved = {k: str(v) for k, v in sorted(vars(args).items()) if k not in _NOT_FROM_CONFIG}
    logger.warning(f"{args.command} {resolved}")
    try:
        return int(args.handler(args))
    except (UsageError, ValidationError, SegmentationError, OSError) as exc:
        return exit_code_for(exc)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
