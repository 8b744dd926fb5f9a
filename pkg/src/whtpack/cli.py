"""Command-line entry point: ``whtpack {gen-synthetic,compress,train,bench}``.

Exit codes: 0 ok, 2 configuration error, 3 I/O error, 4 numeric/domain
error, 5 training divergence, 6 partial grid failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import compress
from .cnn import ARCHITECTURES, save_checkpoint
from .dataset import DatasetConfig, generate_synthetic, load_dataset, load_images, stack
from .errors import ConfigError, DivergenceError, DomainError, NumericError, ShapeError, SizeError
from .experiment import (
    CONDITIONING_MODES,
    CompressionConfig,
    GridSpec,
    parse_methods,
    preprocess,
    resolve_method,
    run_grid,
    run_single,
    MetricsWriter,
    thread_limit,
    write_summary,
    format_summary,
)
from .tensorio import save_tensor
from .transform import is_power_of_two

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_DIVERGED, EXIT_PARTIAL = 0, 2, 3, 4, 5, 6

log = logging.getLogger("whtpack")


def _int_list(text):
    try:
        values = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("list must not be empty")
    return values


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys are flag names without the leading dashes."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


# -- parser ----------------------------------------------------------------

def _compression_flags(p, inner_default=compress.DEFAULT_INNER):
    inner_help = "inner region side L (square)" if inner_default is not None else \
        "inner region side L; default is image size / 8 (32 at 256)"
    p.add_argument("--inner", type=int, default=inner_default, help=inner_help)
    p.add_argument("--nm", type=int, default=compress.DEFAULT_BLOCK_POOL, help="outer region 1 square pool size N_M")
    p.add_argument("--nv", type=int, default=compress.DEFAULT_VECTOR_POOL, help="outer region 2 vector pool size N_V")
    p.add_argument("--eta", type=float, default=compress.DEFAULT_ETA, help="adaptive beta threshold")
    p.add_argument("--ladder", type=_int_list, default=None,
                   help="adaptive inner sizes; default is size/16 * (1,2,4,8), i.e. 16,32,64,128 at 256")
    p.add_argument("--scale", type=float, default=compress.DEFAULT_SCALE, help="adaptive amplitude scale")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="whtpack", description=__doc__, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic labeled image tree", formatter_class=fmt)
    p.add_argument("--config", help="key = value run configuration file (flags override it)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--classes", type=int, default=4, help="number of classes K (2..8)")
    p.add_argument("--per-class", type=int, default=50, help="images per class")
    p.add_argument("--size", type=int, default=256, help="image side in pixels (power of two)")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--variant", choices=("textures", "easy"), default="textures",
                   help="textures: rock/wood families; easy: 2 classes, dark vs bright blobs")

    p = sub.add_parser("compress", help="compress a dataset with one method", formatter_class=fmt)
    p.add_argument("--config", help="key = value run configuration file (flags override it)")
    p.add_argument("--in", dest="input", required=True, help="dataset root (one directory per class)")
    p.add_argument("--method", default="fixed", help="fixed | adaptive | wht_only | dct")
    p.add_argument("--size", type=int, default=256, help="working resolution (power of two)")
    _compression_flags(p)
    p.add_argument("--emit", help="directory for WHTC feature tensors")
    p.add_argument("--beta-csv", help="β diagnostics CSV path (adaptive only)")

    p = sub.add_parser("train", help="train one CNN on one method's features", formatter_class=fmt)
    p.add_argument("--config", help="key = value run configuration file (flags override it)")
    p.add_argument("--in", dest="input", required=True, help="dataset root")
    p.add_argument("--method", default="fixed", help="fixed | adaptive | wht_only | dct")
    p.add_argument("--gamma", type=int, default=8, help="batch size γ")
    p.add_argument("--lambda", dest="lam", type=int, default=100, help="samples per epoch λ")
    p.add_argument("--epochs", type=int, default=100, help="training epochs")
    p.add_argument("--lr", type=float, default=0.01, help="SGD learning rate")
    p.add_argument("--seed", type=int, default=0, help="model/shuffle seed")
    p.add_argument("--arch", choices=tuple(ARCHITECTURES), default="paper", help="CNN preset")
    p.add_argument("--precision", choices=("f32", "f64"), default="f32", help="training precision")
    p.add_argument("--size", type=int, default=256, help="working resolution (power of two)")
    p.add_argument("--val-fraction", type=float, default=0.2, help="validation share per class")
    p.add_argument("--split-seed", type=int, default=0, help="train/validation split seed")
    p.add_argument("--conditioning", choices=CONDITIONING_MODES, default="standardize",
                   help="input conditioning before the CNN")
    _compression_flags(p)
    p.add_argument("--metrics", help="per-epoch metrics CSV (appended)")
    p.add_argument("--checkpoint", help="WHTM checkpoint written after training")

    p = sub.add_parser("bench", help="run the method comparison grid", formatter_class=fmt)
    p.add_argument("--config", help="key = value run configuration file (flags override it)")
    p.add_argument("--in", dest="input", required=True, help="dataset root")
    p.add_argument("--grid", choices=("default", "desk", "paper"), default="default",
                   help="default = desk: gamma 8,16 / lambda 100 / 50 epochs; paper: gamma 8,16,32,64,96 / "
                        "lambda 100,200,500 / 100 epochs")
    p.add_argument("--methods", default="all", help="comma-separated methods or 'all'")
    p.add_argument("--out", default="bench_out", help="output directory")
    p.add_argument("--plots", action="store_true", help="also write SVG charts")
    p.add_argument("--seeds", type=_int_list, default=(0,), help="comma-separated run seeds")
    p.add_argument("--gammas", type=_int_list, default=None, help="override the grid's batch sizes")
    p.add_argument("--lambdas", type=_int_list, default=None, help="override the grid's samples per epoch")
    p.add_argument("--epochs", type=int, default=None, help="override the grid's epoch count")
    p.add_argument("--arch", choices=tuple(ARCHITECTURES), default=None,
                   help="CNN preset; default desk for the desk grid, paper for the paper grid")
    p.add_argument("--size", type=int, default=None, help="working resolution; default 64 (desk) or 256 (paper)")
    p.add_argument("--lr", type=float, default=0.01, help="SGD learning rate")
    p.add_argument("--val-fraction", type=float, default=0.2, help="validation share per class")
    p.add_argument("--split-seed", type=int, default=0, help="train/validation split seed")
    p.add_argument("--conditioning", choices=CONDITIONING_MODES, default="standardize",
                   help="input conditioning before the CNN")
    _compression_flags(p, inner_default=None)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    config = pre.parse_known_args(argv)[0].config
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subparsers), None)
    if config and command:
        values = read_config_file(config)
        sub = subparsers[command]
        known = {opt.lstrip("-").replace("-", "_"): a for a in sub._actions for opt in a.option_strings}
        for key in values:
            if key not in known or key in ("h", "help", "config"):
                raise ConfigError(f"unknown configuration key {key!r}")
        # file values become defaults, so explicit flags still win
        defaults = {}
        for key, text in values.items():
            action = known[key]
            if action.type is not None:
                try:
                    value = action.type(text)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise ConfigError(f"bad value for {key!r}: {text!r}") from exc
            elif action.const is True:
                value = text.lower() in ("1", "true", "yes", "on")
            else:
                value = text
            defaults[action.dest] = value
            if action.choices is not None and value not in action.choices:
                raise ConfigError(f"{key!r} must be one of {list(action.choices)}")
        sub.set_defaults(**defaults)
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False
    return parser.parse_args(argv)


# -- validation -----------------------------------------------------------

def _check_size(size):
    if size is None or not is_power_of_two(size) or size < 2:
        raise ConfigError(f"--size must be a power of two >= 2, got {size}")


def _compression_config(args, size) -> CompressionConfig:
    if args.inner is not None and not 1 <= args.inner <= size:
        raise ConfigError(f"--inner {args.inner} does not fit {size}x{size} images")
    if args.nm < 1 or args.nv < 1:
        raise ConfigError("--nm and --nv must be >= 1")
    if not 0.0 < args.eta < 1.0:
        raise ConfigError(f"--eta must lie in (0, 1), got {args.eta}")
    if not args.scale > 0:
        raise ConfigError(f"--scale must be positive, got {args.scale}")
    cfg = CompressionConfig(args.inner, args.nm, args.nv, args.eta, args.ladder, args.scale)
    ladder = cfg.ladder_for(size)
    if any(b <= a for a, b in zip(ladder, ladder[1:])) or ladder[0] < 1 or ladder[-1] > size:
        raise ConfigError(f"--ladder must be strictly increasing sizes within 1..{size}, got {ladder}")
    return cfg


def _check_training(args):
    if args.gamma < 1 or args.lam < args.gamma:
        raise ConfigError(f"need lambda >= gamma >= 1, got gamma={args.gamma}, lambda={args.lam}")
    if args.epochs < 1:
        raise ConfigError("--epochs must be >= 1")
    if not args.lr >= 0:
        raise ConfigError("--lr must be >= 0")
    if not 0.0 < args.val_fraction < 1.0:
        raise ConfigError("--val-fraction must lie in (0, 1)")


# -- commands --------------------------------------------------------------

def cmd_gen_synthetic(args) -> int:
    if not 2 <= args.classes <= 8:
        raise ConfigError(f"--classes must be in 2..8, got {args.classes}")
    if args.per_class < 4:
        raise ConfigError(f"--per-class must be >= 4, got {args.per_class}")
    _check_size(args.size)
    if args.variant == "easy" and args.classes != 2:
        raise ConfigError("--variant easy requires --classes 2")
    paths = generate_synthetic(args.out, args.classes, args.per_class, args.size, args.seed, args.variant)
    dirs = sorted({p.parent.name for p in paths})
    print(f"wrote {len(paths)} images in {len(dirs)} class directories under {args.out}")
    for d in dirs:
        print(f"  {d}: {sum(p.parent.name == d for p in paths)}")
    return EXIT_OK


def cmd_compress(args) -> int:
    method = resolve_method(args.method)
    _check_size(args.size)
    cfg = _compression_config(args, args.size)
    if args.beta_csv and method != "adaptive_region":
        raise ConfigError("--beta-csv is only meaningful with --method adaptive")
    items = load_images(DatasetConfig(args.input, working_size=(args.size, args.size)))
    images, _ = stack(items)
    fs = preprocess(method, images, cfg)
    in_volume = int(np.prod(images.shape[1:]))
    out_volume = fs.volume
    print(f"{method}: {len(items)} images, feature shape {'x'.join(map(str, fs.input_shape))}, "
          f"{fs.seconds:.3f}s")
    print(f"{in_volume} -> {out_volume} ({in_volume / out_volume:.1f}x)")
    if args.emit:
        out = Path(args.emit)
        for it, x in zip(items, fs.x):
            target = out / f"{Path(it.source_id).with_suffix('')}.whtc"
            target.parent.mkdir(parents=True, exist_ok=True)
            save_tensor(target, x)
    if args.beta_csv:
        Path(args.beta_csv).parent.mkdir(parents=True, exist_ok=True)
        compress.write_beta_csv(args.beta_csv, fs.betas)
    return EXIT_OK


def cmd_train(args) -> int:
    method = resolve_method(args.method)
    _check_size(args.size)
    _check_training(args)
    cfg = _compression_config(args, args.size)
    train_items, val_items = load_dataset(DatasetConfig(
        args.input, working_size=(args.size, args.size), val_fraction=args.val_fraction, seed=args.split_seed))
    images, labels = stack(list(train_items) + list(val_items))
    train_idx = np.arange(len(train_items))
    val_idx = np.arange(len(train_items), len(labels))
    fs = preprocess(method, images, cfg).conditioned(args.conditioning, train_idx)
    writer = MetricsWriter(args.metrics) if args.metrics else None
    model, rows = run_single(fs, train_idx, val_idx, labels, args.gamma, args.lam, args.epochs, args.seed,
                             args.arch, args.lr, args.precision, writer, int(labels.max()) + 1)
    last = rows[-1]
    print(f"{method}: {len(rows)} epochs, train_acc {last.train_acc:.4f}, val_acc {last.val_acc:.4f}, "
          f"training {last.cumulative_seconds:.2f}s, preprocessing {last.preprocess_seconds:.3f}s")
    if args.checkpoint:
        Path(args.checkpoint).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(args.checkpoint, model)
    return EXIT_OK


def cmd_bench(args) -> int:
    methods = parse_methods(args.methods)
    preset = "desk" if args.grid in ("default", "desk") else "paper"
    grid = GridSpec.desk(args.seeds) if preset == "desk" else GridSpec.paper(args.seeds)
    grid = GridSpec(args.gammas or grid.gammas, args.lambdas or grid.lambdas,
                    args.epochs if args.epochs is not None else grid.epochs, grid.seeds)
    for g in grid.gammas:
        for l in grid.lambdas:
            if g < 1 or l < g:
                raise ConfigError(f"grid cell gamma={g}, lambda={l} needs lambda >= gamma >= 1")
    arch = args.arch or preset
    size = args.size or (64 if preset == "desk" else 256)
    _check_size(size)
    if not 0.0 < args.val_fraction < 1.0:
        raise ConfigError("--val-fraction must lie in (0, 1)")
    cfg = _compression_config(args, size)
    train_items, val_items = load_dataset(DatasetConfig(
        args.input, working_size=(size, size), val_fraction=args.val_fraction, seed=args.split_seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_grid(grid, methods, train_items, val_items, arch, cfg, args.lr,
                      csv_path=out / "metrics.csv", conditioning=args.conditioning)
    summary = result.summary()
    write_summary(out, summary)
    print(format_summary(summary), end="")
    if args.plots and result.rows:
        from .plots import emit_plots

        emit_plots(result.rows, out / "plots", methods)
    for f in result.failures:
        print(f"FAILED {f.method} gamma={f.gamma} lambda={f.lam} seed={f.seed}: {f.error}", file=sys.stderr)
    return EXIT_PARTIAL if result.failures else EXIT_OK


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "compress": cmd_compress,
    "train": cmd_train,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"whtpack: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"whtpack: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with thread_limit():
            return COMMANDS[args.command](args)
    except (ConfigError, SizeError, ShapeError) as exc:
        print(f"whtpack: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"whtpack: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DomainError, NumericError) as exc:
        print(f"whtpack: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"whtpack: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
