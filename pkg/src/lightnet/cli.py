"""Command-line interface: cost analysis, synthetic data generation,
training, evaluation, limited-data sweeps, and gradient self-checks.

Exit codes: 0 success, 1 validation error (bad flags, files, shapes),
2 runtime failure (NaN abort, I/O mid-run). Report paths that write
delimited output also render a companion PNG figure.
"""
from __future__ import annotations

import argparse
import os
import sys

from .arch import builtin_arch, mobilenetv3_large_spec, parse_arch_file
from .cost import analyze, compare_last_stages, report_render
from .data import (
    load_chip_dataset,
    split_samples,
    subsample_per_class,
    synth_sar_generate,
    write_chip_dataset,
)
from .errors import (
    CheckpointError,
    DataError,
    NumericsError,
    ShapeError,
    ValidationError,
)
from .gradcheck import run_suite
from .model import build_model
from .train import (
    TrainConfig,
    checkpoint_load,
    checkpoint_save,
    evaluate,
    history_csv,
    metrics_csv,
    metrics_table,
    run_limited_data_sweep,
    sweep_csv,
    train,
)


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on usage errors, printing usage text."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _limit_threads() -> None:
    value = os.environ.get("LIGHTNET_NUM_THREADS")
    if not value:
        return
    try:
        limit = int(value)
    except ValueError:
        raise ValidationError(f"LIGHTNET_NUM_THREADS must be an integer, got {value!r}")
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(limits=limit)
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(limit)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _parse_input_shape(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ValidationError(f"--input must look like HxWxC, got {text!r}")
    try:
        h, w, c = (int(p) for p in parts)
    except ValueError:
        raise ValidationError(f"--input must be three integers HxWxC, got {text!r}")
    if min(h, w, c) < 1:
        raise ValidationError(f"--input dimensions must be positive, got {text!r}")
    return (c, h, w)


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ValidationError(f"{flag} must be a comma-separated integer list, got {text!r}")
    if not values:
        raise ValidationError(f"{flag} must not be empty")
    return values


def _resolve_arch(name: str):
    if name.startswith("builtin:"):
        return builtin_arch(name[len("builtin:"):])
    return parse_arch_file(name)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    spec = _resolve_arch(args.arch)
    if args.input:
        input_shape = _parse_input_shape(args.input)
    else:
        input_shape = (spec.in_channels, spec.input_resolution, spec.input_resolution)
    report = analyze(spec, input_shape=input_shape, convention=args.convention)
    text = report_render(report, args.format)

    extra = ""
    if args.compare_last_stage:
        cmp = compare_last_stages(width_multiplier=spec.width_multiplier,
                                  input_resolution=input_shape[1])
        extra = (
            f"\nlast-stage comparison (width {spec.width_multiplier:g}, "
            f"input {input_shape[1]}):\n"
            f"  original:  {cmp.original.total_madds:,} madds over "
            f"{len(cmp.original.rows)} layers\n"
            f"  efficient: {cmp.efficient.total_madds:,} madds over "
            f"{len(cmp.efficient.rows)} layers\n"
            f"  delta_madds: {cmp.delta_madds:,} "
            f"({cmp.delta_madds / 1e6:.1f}M)\n"
            f"  relocated conv cost ratio: {cmp.relocated_conv_ratio}\n"
        )
    if args.out:
        _write_text(args.out, text + extra)
        from .figures import save_cost_figure
        save_cost_figure(report, os.path.splitext(args.out)[0] + ".png")
        print(f"report written to {args.out}")
    else:
        sys.stdout.write(text + extra)
    return 0


def cmd_synth(args) -> int:
    train_s, test_s, _ = synth_sar_generate(
        num_classes=args.classes, per_class_train=args.train_per_class,
        per_class_test=args.test_per_class, resolution=args.resolution,
        seed=args.seed,
    )
    count = write_chip_dataset(args.out, train_s, test_s)
    print(f"wrote {count} chips across {args.classes} classes to {args.out}")
    return 0


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, momentum=args.momentum,
        weight_decay=args.weight_decay, lr_schedule=args.schedule,
        seed=args.seed, precision=args.precision,
        resolution=args.resolution, channel_mode=args.channel_mode,
    )


def _load_split(data_dir):
    samples, manifest = load_chip_dataset(data_dir)
    train_s, test_s = split_samples(samples)
    return train_s, test_s, manifest


def cmd_train(args) -> int:
    train_s, _, manifest = _load_split(args.data)
    if not train_s:
        raise DataError(f"{args.data} contains no training chips (train_*.pgm)")
    config = _train_config_from_args(args)
    if args.per_class:
        train_s = subsample_per_class(train_s, args.per_class, args.seed)
    in_channels = 1 if args.channel_mode == "gray1" else 3
    spec = mobilenetv3_large_spec(
        in_channels=in_channels, num_classes=len(manifest.classes),
        width_multiplier=args.width, input_resolution=args.resolution,
    )
    model = build_model(spec, seed=args.seed, dtype=config.dtype)
    model, history = train(
        model, train_s, config,
        log=lambda h: print(
            f"epoch {h.epoch}/{config.epochs}  lr {h.lr:.4f}  "
            f"loss {h.loss:.4f}  train acc {100 * h.train_accuracy:.1f}%",
            file=sys.stderr,
        ),
    )
    checkpoint_save(model, args.checkpoint)
    stem = os.path.splitext(args.checkpoint)[0]
    _write_text(stem + ".history.csv", history_csv(history))
    from .figures import save_history_figure
    save_history_figure(history, stem + ".history.png")
    print(f"checkpoint written to {args.checkpoint}")
    print(f"history written to {stem}.history.csv")
    return 0


def cmd_eval(args) -> int:
    _, test_s, _ = _load_split(args.data)
    if not test_s:
        raise DataError(f"{args.data} contains no test chips (test_*.pgm)")
    model = checkpoint_load(args.checkpoint)
    metrics = evaluate(model, test_s, resolution=args.resolution,
                       channel_mode=args.channel_mode)
    sys.stdout.write(metrics_table(metrics))
    if args.out:
        _write_text(args.out, metrics_csv(metrics))
        from .figures import save_confusion_figure
        save_confusion_figure(metrics, os.path.splitext(args.out)[0] + ".png")
        print(f"metrics written to {args.out}")
    return 0


def cmd_sweep(args) -> int:
    train_s, test_s, manifest = _load_split(args.data)
    if not train_s or not test_s:
        raise DataError(f"{args.data} must contain train_*.pgm and test_*.pgm chips")
    config = _train_config_from_args(args)
    k_list = _parse_int_list(args.k_list, "--k-list")
    seeds = _parse_int_list(args.seeds, "--seeds")
    in_channels = 1 if args.channel_mode == "gray1" else 3
    spec = mobilenetv3_large_spec(
        in_channels=in_channels, num_classes=len(manifest.classes),
        width_multiplier=args.width, input_resolution=args.resolution,
    )
    report = run_limited_data_sweep(
        train_s, test_s, spec, k_list, seeds, config,
        log=lambda row: print(
            f"k={row.k} seed={row.seed}  average {100 * row.average:.2f}%",
            file=sys.stderr,
        ),
    )
    _write_text(args.out, sweep_csv(report))
    from .figures import save_sweep_figure
    save_sweep_figure(report, os.path.splitext(args.out)[0] + ".png")
    print(f"sweep written to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_suite(seed=args.seed)
    name_w = max(len(r.name) for r in results)
    failures = []
    for r in results:
        flag = "PASS" if r.passed else "FAIL"
        print(f"{flag}  {r.name:<{name_w}}  max rel err {r.max_error:.3e}  "
              f"(threshold {r.threshold:g})")
        if not r.passed:
            failures.append(r.name)
    print(f"{len(results)} op families checked, {len(failures)} failures")
    if failures:
        print(f"failing ops: {', '.join(failures)}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def _add_train_flags(p, epochs_default: int) -> None:
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("--epochs", type=int, default=epochs_default)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=4e-5)
    p.add_argument("--schedule", choices=["constant", "cosine"], default="cosine")
    p.add_argument("--precision", choices=["f32", "f64"], default="f32")
    p.add_argument("--width", type=float, default=0.25,
                   help="channel width multiplier")
    p.add_argument("--resolution", type=int, default=64,
                   help="input resolution fed to the network")
    p.add_argument("--channel-mode", choices=["gray1", "replicate3"],
                   default="gray1")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lightnet",
                     description="Lightweight-CNN cost analysis and "
                                 "limited-data recognition experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[], help="parameter/MAdds report")
    p.add_argument("--arch", default="builtin:mobilenetv3-large",
                   help="arch file path, builtin:mobilenetv3-large, or builtin:resnet50")
    p.add_argument("--input", default=None, help="input shape HxWxC (default: from arch)")
    p.add_argument("--convention", choices=["madds", "flops"], default="madds")
    p.add_argument("--format", choices=["table", "csv"], default="table")
    p.add_argument("--compare-last-stage", action="store_true",
                   help="append the original-vs-efficient head comparison")
    p.add_argument("--out", default=None, help="write report here (+ PNG alongside)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic chip dataset")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--train-per-class", type=int, default=100)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a chip dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--per-class", type=int, default=0,
                   help="subsample this many training chips per class (0 = all)")
    p.add_argument("--checkpoint", required=True, help="checkpoint output path")
    _add_train_flags(p, epochs_default=150)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--channel-mode", choices=["gray1", "replicate3"], default="gray1")
    p.add_argument("--out", default=None, help="write metrics CSV here (+ PNG alongside)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="limited-data sweep over k and seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--k-list", default="10,20,40,60,80,100",
                   help="comma-separated per-class training sizes")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--out", required=True, help="sweep CSV output path")
    _add_train_flags(p, epochs_default=30)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference self-check of all ops")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _limit_threads()
        return args.func(args)
    except (ValidationError, DataError, ShapeError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
