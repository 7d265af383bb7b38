"""Command-line entry point: ``larp <command> [options]``."""

import argparse
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .core import LayerSpec, child_rng
from .exceptions import InputError, LarpError
from .loaders import IdxLoader, ImageDirLoader, deterministic_split, load_idx_images
from .lrpe import project_ensemble
from .modelfile import format_float, load_config, load_model, save_model
from .network import build_model, extract_features
from .scg import ScgConfig
from .training import evaluate, scg_train, training_subset
from .verification import run_all

logger = logging.getLogger("larp.cli")
history_logger = logging.getLogger("larp.training.history")

DEFAULT_VERIFY_TRIALS = 1000
DEFAULT_GRAD_MODELS = 20
BENCH_PROJECTIONS = 64
SCG_DEFAULTS = ScgConfig()


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"error: {message}\n")


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _labelled(args, images, labels, part):
    if args.image_dir is not None:
        dataset = ImageDirLoader(args.image_dir).load()
        train, test = deterministic_split(dataset, args.holdout, args.split_seed)
        return train if part == "train" else test
    if images is None or labels is None:
        raise InputError("an image/label file pair or --image-dir is required")
    return IdxLoader(images, labels).load()


def _attach_history(path):
    handler = logging.FileHandler(path, mode="w", encoding="utf-8") if path else logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    history_logger.addHandler(handler)
    history_logger.setLevel(logging.INFO)
    history_logger.propagate = False
    return handler


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train(args):
    config = load_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    model = build_model(config)
    dataset = training_subset(model, _labelled(args, args.train_images, args.train_labels, "train"), args.subsample)
    scg_config = ScgConfig(max_iters=args.max_iters, tol=args.tol)
    handler = _attach_history(args.history)
    try:
        model, history = scg_train(model, dataset, scg_config, workers=args.workers)
    finally:
        history_logger.removeHandler(handler)
        history_logger.propagate = True
        handler.close()
    save_model(model, args.out)
    result = evaluate(model, dataset, workers=args.workers)
    print(f"loss={history[-1].loss:.6f}")
    print(f"training_error={result.error_rate:.2f}")
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    dataset = _labelled(args, args.images, args.labels, "test")
    result = evaluate(model, dataset, workers=args.workers)
    logger.info("%d of %d images misclassified", result.misclassified, result.total)
    print(f"error_rate={result.error_rate:.2f}")
    return 0


def cmd_extract(args):
    model = load_model(args.model)
    if args.image_dir is not None:
        images = ImageDirLoader(args.image_dir).load().images
    elif args.images is not None:
        images = load_idx_images(args.images)
    else:
        raise InputError("--images or --image-dir is required")
    with Path(args.out).open("w", encoding="utf-8") as f:
        for image in images:
            f.write("\t".join(format_float(v) for v in extract_features(model, image)) + "\n")
    return 0


def cmd_verify(args):
    if args.trials < 0 or args.grad_models < 0:
        raise InputError("--trials and --grad-models must be non-negative")
    results = run_all(args.trials, args.seed, grad_models=args.grad_models)
    for result in results:
        print(result.line())
    return 0 if all(result.passed for result in results) else 1


def cmd_bench(args):
    if args.repeat <= 0:
        raise InputError(f"--repeat must be positive, got {args.repeat}")
    height, width = args.map_size
    spec = LayerSpec(BENCH_PROJECTIONS, args.support)
    rng = child_rng(0, 0, 0)
    inputs = rng.random((1, height, width))
    taps = rng.standard_normal((BENCH_PROJECTIONS, spec.kernel_size, spec.kernel_size))
    wiring = np.zeros(BENCH_PROJECTIONS, dtype=np.intp)
    project_ensemble(inputs, taps, wiring)
    start = time.perf_counter_ns()
    for _ in range(args.repeat):
        project_ensemble(inputs, taps, wiring)
    elapsed = time.perf_counter_ns() - start
    print(f"ns_per_projection={elapsed // (args.repeat * BENCH_PROJECTIONS)}")
    return 0


def cmd_describe(args):
    config = load_model(args.model).config if args.model else load_config(args.config)
    print(f"projection_parameters={config.projection_parameter_count}")
    print(f"classifier_parameters={config.classifier_parameter_count}")
    print(f"total_parameters={config.parameter_count}")
    print(f"feature_dim={config.feature_dim}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_image_dir(parser):
    parser.add_argument("--image-dir", type=Path, help="directory of per-class PGM sub-directories")
    parser.add_argument("--holdout", type=float, default=0.5, help="test fraction of --image-dir (default: 0.5)")
    parser.add_argument("--split-seed", type=int, default=0, help="seed of the --image-dir split")


def build_parser():
    parser = _ArgumentParser(prog="larp", description="Layered random projection classifier.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train a model with scaled conjugate gradient")
    train.add_argument("--config", required=True, type=Path)
    train.add_argument("--train-images", type=Path)
    train.add_argument("--train-labels", type=Path)
    _add_image_dir(train)
    train.add_argument("--subsample", type=int, help="stratified subset size")
    train.add_argument("--max-iters", type=int, default=SCG_DEFAULTS.max_iters)
    train.add_argument("--tol", type=float, default=SCG_DEFAULTS.tol)
    train.add_argument("--seed", type=int, help="override the config seed")
    train.add_argument("--workers", type=int, default=1)
    train.add_argument("--history", type=Path, help="write the loss history here instead of stderr")
    train.add_argument("--out", required=True, type=Path)
    train.set_defaults(func=cmd_train)

    ev = commands.add_parser("eval", help="report the test error rate")
    ev.add_argument("--model", required=True, type=Path)
    ev.add_argument("--images", type=Path)
    ev.add_argument("--labels", type=Path)
    _add_image_dir(ev)
    ev.add_argument("--workers", type=int, default=1)
    ev.set_defaults(func=cmd_eval)

    extract = commands.add_parser("extract", help="write the random features of every image")
    extract.add_argument("--model", required=True, type=Path)
    extract.add_argument("--images", type=Path)
    extract.add_argument("--image-dir", type=Path)
    extract.add_argument("--out", required=True, type=Path)
    extract.set_defaults(func=cmd_extract)

    verify = commands.add_parser("verify", help="run the oracle checks")
    verify.add_argument("--trials", type=int, default=DEFAULT_VERIFY_TRIALS)
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--grad-models", type=int, default=DEFAULT_GRAD_MODELS)
    verify.set_defaults(func=cmd_verify)

    bench = commands.add_parser("bench", help="time projections")
    bench.add_argument("--map-size", type=int, nargs=2, default=(28, 28), metavar=("H", "W"))
    bench.add_argument("--support", type=int, default=25)
    bench.add_argument("--repeat", type=int, default=100)
    bench.set_defaults(func=cmd_bench)

    describe = commands.add_parser("describe", help="print parameter counts")
    source = describe.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path)
    source.add_argument("--model", type=Path)
    describe.set_defaults(func=cmd_describe)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (LarpError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
