"""Command-line entry point: ``wrpn <subcommand> ...``.

Reports go to standard output (or ``--out``); diagnostics go to standard
error. Exit status is 0 on success, 1 on a domain error (bad descriptor,
unreadable file, diverged run) and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("wrpn")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _bits(text: str) -> int:
    v = _positive_int(text)
    if v > 32:
        raise argparse.ArgumentTypeError(f"bit-width must lie in 1..32, got {v}")
    return v


def _multiplier(text: str) -> Fraction:
    try:
        m = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected a positive rational like 2, 1.5 or 3/2, got {text!r}") from None
    if m <= 0:
        raise argparse.ArgumentTypeError(f"widening must be positive, got {text!r}")
    return m


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wrpn", description="Reduced-precision wide networks: train, quantize, analyze.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    t = sub.add_parser("train", help="train a network from a JSON config")
    t.add_argument("--config", required=True, help="train config JSON")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--checkpoint", help="override the checkpoint output path")
    t.add_argument("--metrics", help="override the metrics CSV path")
    t.add_argument("--out", help="write the metrics CSV here instead of standard output")

    e = sub.add_parser("eval", help="top-1 accuracy of a checkpoint on an IDX dataset")
    e.add_argument("--checkpoint", required=True, help="checkpoint file or integer-code model (.npz)")
    e.add_argument("--data", required=True, help="directory holding MNIST-named IDX files")
    e.add_argument("--split", choices=("test", "train"), default="test")
    e.add_argument("--mode", choices=("fakequant", "float", "integer"), default="fakequant")
    e.add_argument("--out", help="write the JSON result here")

    q = sub.add_parser("quantize", help="export a checkpoint as an integer-code model")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--kw", type=_bits, required=True, help="weight bit-width")
    q.add_argument("--ka", type=_bits, required=True, help="activation bit-width")
    q.add_argument("--out", required=True, help="output .npz")

    a = sub.add_parser("analyze", help="compute-cost, footprint or cost-sensitivity report")
    a.add_argument("report", choices=("cost", "footprint", "sensitivity"))
    a.add_argument("--net", required=True, help="descriptor JSON or a shipped name")
    a.add_argument("--widen", type=_multiplier, help="widening multiplier applied first")
    a.add_argument("--kw", type=_bits, help="override every weight bit-width")
    a.add_argument("--ka", type=_bits, help="override every activation bit-width")
    a.add_argument("--batch", type=_positive_int, default=1, help="footprint batch size (default 1)")
    a.add_argument("--phase", choices=("training", "inference"), default="training")
    a.add_argument("--format", choices=("csv", "json"), default="csv")
    a.add_argument("--out", help="write the report here")

    w = sub.add_parser("widen", help="scale a descriptor's interior channel counts")
    w.add_argument("--net", required=True)
    w.add_argument("--m", type=_multiplier, required=True, help="widening multiplier")
    w.add_argument("--out", help="output descriptor JSON (default: standard output)")

    g = sub.add_parser("grid", help="train a (k_w, k_a, widening) grid")
    g.add_argument("--config", required=True, help="grid JSON")
    g.add_argument("--workers", type=_positive_int, help="parallel cells (default WRPN_THREADS or 1)")
    g.add_argument("--table", help="also write the seed-averaged pivot CSV here")
    g.add_argument("--out", help="write the per-run CSV here")

    d = sub.add_parser("desk", help="write the bundled 28x28 digits set as IDX files")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--seed", type=int, default=0)
    return p


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_train(args) -> None:
    from .trainer import TrainConfig, metrics_csv, train

    cfg = TrainConfig.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.checkpoint:
        overrides["checkpoint_path"] = args.checkpoint
    if args.metrics:
        overrides["metrics_path"] = args.metrics
    if overrides:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides})
    result = train(cfg)
    _emit(metrics_csv(result.metrics), args.out)


def _load_any(path):
    from .model import load_checkpoint, load_integer_model

    with open(path, "rb") as fh:
        head = fh.read(4)
    if head.startswith(b"PK"):
        return load_integer_model(path)
    ckpt = load_checkpoint(path)
    return ckpt.descriptor, ckpt.params


def _cmd_eval(args) -> None:
    from .data import load_split
    from .trainer import accuracy

    net, params = _load_any(args.checkpoint)
    data = load_split(args.data, args.split)
    data.check(net.input_shape, net.class_count)
    acc = accuracy(net, params, data, args.mode)
    report = {"accuracy": acc, "samples": len(data), "split": args.split, "mode": args.mode}
    _emit(json.dumps(report, sort_keys=True) + "\n", args.out)


def _cmd_quantize(args) -> None:
    from .engine import Mode, forward
    from .model import load_checkpoint, requantize, save_integer_model

    ckpt = load_checkpoint(args.checkpoint)
    net = requantize(ckpt.descriptor, args.kw, args.ka)
    # run the integer path once so an unusable model fails here, not at load time
    forward(net, ckpt.params, _probe(net), Mode.INTEGER)
    save_integer_model(net, ckpt.params, args.out)
    print(json.dumps({"out": args.out, "k_w": args.kw, "k_a": args.ka}, sort_keys=True))


def _probe(net):
    import numpy as np

    return np.zeros((1,) + net.input_shape)


def _analyzed_net(args):
    from .model import load_descriptor, requantize, widen

    net = load_descriptor(args.net)
    if args.widen is not None:
        net = widen(net, args.widen)
    if args.kw is not None or args.ka is not None:
        net = requantize(net, args.kw or 32, args.ka or 32)
    return net


def _cmd_analyze(args) -> None:
    from . import analyzer

    net = _analyzed_net(args)
    if args.report == "cost":
        rep = analyzer.compute_cost(net)
        text = rep.to_csv() if args.format == "csv" else rep.to_json()
    elif args.report == "footprint":
        rep = analyzer.memory_footprint(net, args.batch, args.phase)
        text = rep.to_csv() if args.format == "csv" else rep.to_json()
    else:
        from .model import load_descriptor

        base = load_descriptor(args.net)
        rows = analyzer.sensitivity_table(base, args.kw or 4, args.ka or 4, args.widen or 2)
        text = analyzer.sensitivity_csv(rows) if args.format == "csv" else json.dumps(rows, indent=2) + "\n"
    _emit(text, args.out)


def _cmd_widen(args) -> None:
    from .model import load_descriptor, widen

    _emit(widen(load_descriptor(args.net), args.m).to_json(), args.out)


def _cmd_grid(args) -> None:
    from .errors import ConfigurationError
    from .trainer import grid_csv, grid_table_csv, run_grid

    path = Path(args.config)
    try:
        grid = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read grid config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"grid config {path} is not valid JSON: {exc}") from exc
    rows = run_grid(grid, base_dir=path.parent, workers=args.workers)
    _emit(grid_csv(rows), args.out)
    if args.table:
        Path(args.table).write_text(grid_table_csv(rows))


def _cmd_desk(args) -> None:
    from .data import make_desk_digits

    paths = make_desk_digits(args.out, seed=args.seed)
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))


COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "quantize": _cmd_quantize,
    "analyze": _cmd_analyze,
    "widen": _cmd_widen,
    "grid": _cmd_grid,
    "desk": _cmd_desk,
}


def _thread_cap() -> None:
    value = os.environ.get("WRPN_THREADS")
    if value is None:
        return
    if not value.isdigit() or int(value) < 1:
        raise SystemExit(f"wrpn: WRPN_THREADS must be a positive integer, got {value!r}")
    # BLAS pools size themselves when numpy first loads, which the lazy
    # subcommand imports defer until after this point
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, value)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _thread_cap()
    except SystemExit as exc:
        print(exc.code, file=sys.stderr)
        return EXIT_USAGE

    from .errors import UsageError, WRPNError

    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wrpn {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WRPNError, OSError) as exc:
        print(f"wrpn {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
