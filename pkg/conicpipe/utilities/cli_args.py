# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

# conicpipe/utilities/cli_args.py
"""
Command-line argument parsing for conicpipe.

One executable, one subcommand per pipeline stage:
- normalize: Macenko stain normalization against a reference
- split:     stratified train/val/test split of a manifest
- augment:   seeded flips, rotations, resizing and stain normalization
- ensemble:  fuse multi-scale predictions
- evaluate:  mPQ, mPQ+ and R^2 of predictions against ground truth
- count:     per-class nucleus counts of one tile

Global options may be given before or after the subcommand.
"""

from __future__ import annotations

import argparse
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from conicpipe import BUILD_ID
from conicpipe.controllers.pipeline_commands import (
    AugmentCommand,
    Command,
    CountCommand,
    EnsembleCommand,
    EvaluateCommand,
    NormalizeCommand,
    SplitCommand,
)
from conicpipe.core.config import (
    AugmentPolicy,
    EnsembleConfig,
    GlobalConfig,
    MacenkoParams,
    PipelineConfig,
    SplitRatios,
)
from conicpipe.core.constants import (
    DEFAULT_ALPHA,
    DEFAULT_BASE_SIZE,
    DEFAULT_BETA,
    DEFAULT_IO,
    DEFAULT_IOU_THRESHOLD,
    DEFAULT_MAX_C_PERCENTILE,
    DEFAULT_MIN_TISSUE_PIXELS,
    DEFAULT_MIN_VOTES,
    DEFAULT_SCALES,
    DEFAULT_SPLIT_RATIOS,
    MIN_MATCH_THRESHOLD,
    THREADS_ENV_VAR,
)
from conicpipe.core.errors import ConfigurationError
from conicpipe.core.types import Subcommand
from conicpipe.utilities.logger import LOG_LEVEL_NAMES, TRACE
from conicpipe.utilities.worker_pool import resolve_thread_count


@dataclass
class PipelineArgs:
    """
    Parsed and validated command-line arguments.
    """

    subcommand: Subcommand
    command: Command[str]
    config: PipelineConfig
    threads: int = 1
    log_level: int = logging.INFO
    print_exceptions: bool = False  # Whether to print full exceptions
    fail_fast: bool = False  # Whether to raise on the first error
    log_file: str | None = None  # Path prefix of the log file, None if not logging to file
    file_log_level: int = TRACE

    def __post_init__(self) -> None:
        """Validate arguments after initialization"""
        if self.threads < 1:
            raise ValueError(f"Invalid thread count {self.threads}. Must be at least 1")
        if self.command.subcommand is not self.subcommand:
            raise ValueError(f"Command {self.command.subcommand} does not match subcommand {self.subcommand}")

    @property
    def seed(self) -> int:
        return self.config.global_config.seed


def _scale_dir(text: str) -> tuple[int, Path]:
    """Parse SCALE=DIR"""
    scale_text, sep, directory = text.partition("=")
    if not sep or not directory:
        raise argparse.ArgumentTypeError(f"expected SCALE=DIR, got {text!r}")
    try:
        scale = int(scale_text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"scale must be an integer, got {scale_text!r}") from e
    if scale <= 0:
        raise argparse.ArgumentTypeError(f"scale must be positive, got {scale}")
    return scale, Path(directory)


def _size_list(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated sizes, got {text!r}") from e
    if not sizes:
        raise argparse.ArgumentTypeError("at least one size is required")
    return sizes


def _add_global_options(parser: argparse.ArgumentParser) -> None:
    """
    Options accepted before and after the subcommand. Defaults are suppressed
    so a value given at one level is not overwritten by the other's default.
    """
    group = parser.add_argument_group("Global Options")
    group.add_argument("--seed", type=int, default=argparse.SUPPRESS, metavar="N", help="Random seed (default: 0)")
    group.add_argument(
        "--threads",
        type=str,
        default=argparse.SUPPRESS,
        metavar="N|auto",
        help=f"Worker threads (default: 1); {THREADS_ENV_VAR} overrides",
    )
    group.add_argument(
        "--output-dir",
        type=Path,
        default=argparse.SUPPRESS,
        metavar="DIR",
        help="Directory for the run manifest (default: next to the primary output)",
    )
    group.add_argument(
        "--log-level",
        type=str,
        choices=list(LOG_LEVEL_NAMES),
        default=argparse.SUPPRESS,
        help="Set logging level (default: INFO)",
    )
    group.add_argument(
        "--log-file",
        type=str,
        default=argparse.SUPPRESS,
        metavar="FILE",
        help="Prefix path to log file with timestamp appended in strftime format `%%Y%%m%%d_%%H%%M%%S`",
    )
    group.add_argument(
        "--print-exceptions",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Print full exception stack traces for caught exceptions",
    )
    group.add_argument(
        "--fail-fast",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Raise exceptions instead of catching them (for debugging)",
    )


def _add_macenko_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("Stain Estimation")
    group.add_argument(
        "--io", type=float, default=DEFAULT_IO, help=f"Transmitted light intensity (default: {DEFAULT_IO:g})"
    )
    group.add_argument(
        "--beta", type=float, default=DEFAULT_BETA, help=f"OD floor for tissue pixels (default: {DEFAULT_BETA:g})"
    )
    group.add_argument(
        "--alpha", type=float, default=DEFAULT_ALPHA, help=f"Robust angle percentile (default: {DEFAULT_ALPHA:g})"
    )
    group.add_argument(
        "--max-c-percentile",
        type=float,
        default=DEFAULT_MAX_C_PERCENTILE,
        help=f"Percentile used for maximum concentrations (default: {DEFAULT_MAX_C_PERCENTILE:g})",
    )
    group.add_argument(
        "--min-tissue-pixels",
        type=int,
        default=DEFAULT_MIN_TISSUE_PIXELS,
        help=f"Minimum tissue pixels for estimation (default: {DEFAULT_MIN_TISSUE_PIXELS})",
    )


def _add_reference_options(parser: argparse.ArgumentParser) -> None:
    reference = parser.add_mutually_exclusive_group()
    reference.add_argument("--reference-image", type=Path, metavar="PNG", help="Estimate the reference from this tile")
    reference.add_argument("--reference-model", type=Path, metavar="JSON", help="Load a saved reference stain model")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conicpipe",
        description="conicpipe - stain normalization, splitting, augmentation, ensembling and scoring for CoNIC",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s count --instances t_instances.png --classes t_classes.png
  %(prog)s split --manifest data.json --ratios 4:1:0.1 --seed 7 --out-prefix splits/conic
  %(prog)s normalize --input tiles/ --reference-image ref.png --out normalized/
  %(prog)s augment --manifest train.json --out aug/ --copies 2 --seed 7
  %(prog)s ensemble --pred 256=p256 --pred 512=p512 --pred 800=p800 --out fused/
  %(prog)s evaluate --pred fused/ --gt gt/ --report metrics.json
        """,
    )
    parser.add_argument("--version", action="version", version=BUILD_ID)
    _add_global_options(parser)

    subparsers = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")

    normalize = subparsers.add_parser(Subcommand.NORMALIZE.value, help="Macenko stain normalization")
    normalize.add_argument("--input", type=Path, required=True, help="PNG tile or directory of PNG tiles")
    normalize.add_argument("--out", type=Path, required=True, metavar="DIR")
    _add_reference_options(normalize)
    normalize.add_argument("--save-reference", type=Path, metavar="JSON", help="Write the reference stain model")
    normalize.add_argument(
        "--pyramid",
        type=_size_list,
        nargs="?",
        const=DEFAULT_SCALES,
        default=(),
        metavar="SIZES",
        help="Also write <out>/<size>/<tile>.png at each size (default sizes: the ensemble scales)",
    )
    _add_macenko_options(normalize)

    split = subparsers.add_parser(Subcommand.SPLIT.value, help="Stratified train/val/test split")
    split.add_argument("--manifest", type=Path, required=True)
    split.add_argument("--ratios", type=str, default=DEFAULT_SPLIT_RATIOS, help="train:val:test weights")
    split.add_argument("--out-prefix", type=Path, required=True, help="Writes <prefix>.train|val|test|balance.json")

    augment = subparsers.add_parser(Subcommand.AUGMENT.value, help="Label-preserving augmentation")
    augment.add_argument("--manifest", type=Path, required=True)
    augment.add_argument("--out", type=Path, required=True, metavar="DIR")
    augment.add_argument("--copies", type=int, default=1, help="Seeded augmented copies per tile (default: 1)")
    augment.add_argument(
        "--add-normalized", action="store_true", help="Also emit a stain-normalized copy of every tile"
    )
    augment.add_argument("--p-flip-h", type=float, default=0.5)
    augment.add_argument("--p-flip-v", type=float, default=0.5)
    augment.add_argument("--p-rotate", type=float, default=0.5)
    augment.add_argument("--p-resize", type=float, default=0.0)
    augment.add_argument("--p-stain-normalize", type=float, default=0.0)
    augment.add_argument(
        "--sizes",
        type=_size_list,
        default=DEFAULT_SCALES,
        help=f"Resize targets (default: {','.join(str(s) for s in DEFAULT_SCALES)})",
    )
    _add_reference_options(augment)
    _add_macenko_options(augment)

    ensemble = subparsers.add_parser(Subcommand.ENSEMBLE.value, help="Fuse multi-scale predictions")
    ensemble.add_argument(
        "--pred", type=_scale_dir, action="append", required=True, metavar="SCALE=DIR", help="Repeat per scale"
    )
    ensemble.add_argument("--iou", type=float, default=DEFAULT_IOU_THRESHOLD)
    ensemble.add_argument(
        "--min-votes",
        type=int,
        default=None,
        help=f"Distinct scales a fused instance needs (default: {DEFAULT_MIN_VOTES}, capped at the scale count)",
    )
    ensemble.add_argument("--base", type=int, default=DEFAULT_BASE_SIZE)
    ensemble.add_argument("--out", type=Path, required=True, metavar="DIR")
    ensemble.add_argument("--provenance", type=Path, metavar="JSON")

    evaluate = subparsers.add_parser(Subcommand.EVALUATE.value, help="mPQ, mPQ+ and R^2")
    evaluate.add_argument("--pred", type=Path, required=True, metavar="DIR")
    evaluate.add_argument("--gt", type=Path, required=True, metavar="DIR")
    evaluate.add_argument("--report", type=Path, required=True, metavar="JSON")
    evaluate.add_argument("--threshold", type=float, default=MIN_MATCH_THRESHOLD)

    count = subparsers.add_parser(Subcommand.COUNT.value, help="Per-class nucleus counts of one tile")
    count.add_argument("--instances", type=Path, required=True)
    count.add_argument("--classes", type=Path, required=True)
    count.add_argument("--report", type=Path, metavar="JSON")

    for sub in (normalize, split, augment, ensemble, evaluate, count):
        _add_global_options(sub)

    return parser


def _macenko(args: argparse.Namespace) -> MacenkoParams:
    return MacenkoParams(
        io=args.io,
        beta=args.beta,
        alpha=args.alpha,
        max_c_percentile=args.max_c_percentile,
        min_tissue_pixels=args.min_tissue_pixels,
    )


def _build_command(
    subcommand: Subcommand, args: argparse.Namespace
) -> tuple[Command[str], MacenkoParams | None, AugmentPolicy | None, EnsembleConfig | None]:
    if subcommand is Subcommand.NORMALIZE:
        params = _macenko(args)
        command: Command[str] = NormalizeCommand(
            input=args.input,
            out=args.out,
            reference_image=args.reference_image,
            reference_model=args.reference_model,
            save_reference=args.save_reference,
            pyramid=tuple(args.pyramid),
            params=params,
        )
        return command, params, None, None

    if subcommand is Subcommand.SPLIT:
        ratios = SplitRatios.parse(args.ratios)
        return SplitCommand(manifest=args.manifest, ratios=ratios, out_prefix=args.out_prefix), None, None, None

    if subcommand is Subcommand.AUGMENT:
        params = _macenko(args)
        policy = AugmentPolicy(
            p_flip_h=args.p_flip_h,
            p_flip_v=args.p_flip_v,
            p_rotate=args.p_rotate,
            p_resize=args.p_resize,
            target_sizes=args.sizes,
            p_stain_normalize=args.p_stain_normalize,
        )
        command = AugmentCommand(
            manifest=args.manifest,
            out=args.out,
            policy=policy,
            copies=args.copies,
            add_normalized=args.add_normalized,
            reference_image=args.reference_image,
            reference_model=args.reference_model,
            params=params,
        )
        return command, params, policy, None

    if subcommand is Subcommand.ENSEMBLE:
        predictions: dict[int, Path] = {}
        for scale, directory in args.pred:
            if scale in predictions:
                raise ConfigurationError(f"scale {scale} given more than once")
            predictions[scale] = directory
        scales = tuple(sorted(predictions))
        min_votes = args.min_votes if args.min_votes is not None else min(DEFAULT_MIN_VOTES, len(scales))
        ensemble = EnsembleConfig(base_size=args.base, iou_threshold=args.iou, min_votes=min_votes, scales=scales)
        command = EnsembleCommand(predictions=predictions, out=args.out, ensemble=ensemble, provenance=args.provenance)
        return command, None, None, ensemble

    if subcommand is Subcommand.EVALUATE:
        if not MIN_MATCH_THRESHOLD <= args.threshold <= 1.0:
            raise ConfigurationError(f"threshold must be in [{MIN_MATCH_THRESHOLD}, 1], got {args.threshold}")
        command = EvaluateCommand(pred=args.pred, gt=args.gt, report=args.report, threshold=args.threshold)
        return command, None, None, None

    return CountCommand(instances=args.instances, classes=args.classes, report=args.report), None, None, None


def parse_args(argv: Sequence[str] | None = None) -> PipelineArgs:
    """
    Parse command-line arguments and return validated PipelineArgs.

    Raises:
        SystemExit: On usage errors (exit code 2, usage printed) and for
            --help / --version (exit code 0)
    """
    parser = build_parser()
    args: argparse.Namespace = parser.parse_args(argv)
    subcommand = Subcommand(args.subcommand)

    try:
        threads = resolve_thread_count(getattr(args, "threads", None))
        global_config = GlobalConfig(
            seed=getattr(args, "seed", 0),
            threads=threads,
            log_level=LOG_LEVEL_NAMES[getattr(args, "log_level", "INFO")],
            output_dir=getattr(args, "output_dir", None),
        )
        command, params, policy, ensemble = _build_command(subcommand, args)
    except ConfigurationError as e:
        parser.error(str(e))

    return PipelineArgs(
        subcommand=subcommand,
        command=command,
        config=PipelineConfig(global_config=global_config, macenko=params, augment_policy=policy, ensemble=ensemble),
        threads=threads,
        log_level=global_config.log_level,
        print_exceptions=getattr(args, "print_exceptions", False),
        fail_fast=getattr(args, "fail_fast", False),
        log_file=getattr(args, "log_file", None),
    )
