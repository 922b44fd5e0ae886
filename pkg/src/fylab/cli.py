"""Command-line entry point: ``fylab <command> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments
from .data import Dataset, find_mnist, load_mnist_idx
from .plotting import plot_svg
from .trainer import TrainConfig


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def int_list(text: str) -> tuple[int, ...]:
    """'3', '1,2,5' or '0-5' (inclusive)."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return tuple(out)


def arch_list(text: str) -> tuple[str, ...]:
    labels = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in labels if s not in ("a", "b", "c", "d")]
    if bad or not labels:
        raise argparse.ArgumentTypeError(f"architectures must be drawn from a,b,c,d, got {text!r}")
    return labels


def _add_run_flags(p: argparse.ArgumentParser, arch: str, k: str) -> None:
    p.add_argument("--arch", type=arch_list, default=arch_list(arch), help=f"comma list of a,b,c,d (default {arch})")
    p.add_argument("--k", type=int_list, default=int_list(k), help=f"block counts, e.g. 1,2 or 0-5 (default {k})")
    p.add_argument("--seed", type=int_list, default=(0,), help="seeds, e.g. 0,1 (default 0)")
    p.add_argument("--subset", type=int, default=10000, help="first N training samples, 0 for all (default 10000)")
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory (default runs/)")
    p.add_argument("--mnist-images", type=Path, help="IDX image file (plain or gzip)")
    p.add_argument("--mnist-labels", type=Path, help="IDX label file (plain or gzip)")
    p.add_argument("--generator", choices=("entropy", "squared"), default="entropy")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--activation", choices=("relu", "tanh", "identity"), default="relu")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--diag-samples", type=int, default=8)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fylab", description="Loss-landscape diagnostics for small classifiers.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convergence", help="train and correlate fitting error with its bounds")
    _add_run_flags(p, "a,b,c,d", "1")
    p = sub.add_parser("depth-init", help="structural quantities at initialisation across depth")
    _add_run_flags(p, "a,b", "1-10")
    p.add_argument("--n-inputs", type=int, default=32, help="inputs averaged over (>= 32)")
    p = sub.add_parser("depth-train", help="training runs across depth")
    _add_run_flags(p, "a,b", "0-5")

    p = sub.add_parser("plot", help="SVG line chart of CSV columns")
    p.add_argument("csv", type=Path)
    p.add_argument("--columns", required=True, help="comma list of column names")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("validate", help="run the property suite")
    p.add_argument("--with-mnist", action="store_true", help="also run the MNIST training checks")
    p.add_argument("--mnist-images", type=Path)
    p.add_argument("--mnist-labels", type=Path)
    p.add_argument("--out", type=Path, help="keep experiment outputs here")
    return ap


def load_dataset(args) -> Dataset:
    if bool(args.mnist_images) != bool(args.mnist_labels):
        raise UsageError("--mnist-images and --mnist-labels must be given together")
    if args.mnist_images:
        return load_mnist_idx(args.mnist_images, args.mnist_labels)
    found = find_mnist()
    if found is None:
        raise FileNotFoundError("MNIST training files not found; pass --mnist-images/--mnist-labels, "
                                "set FYLAB_MNIST_DIR or run scripts/build_mnist_idx.py")
    return load_mnist_idx(*found)


def _spec(args) -> experiments.ExperimentSpec:
    tcfg = TrainConfig(lr=args.lr, momentum=args.momentum, batch_size=args.batch_size, epochs=args.epochs,
                       diag_samples=args.diag_samples)
    spec = experiments.ExperimentSpec(args.command, args.arch, args.k, args.seed, args.out,
                                      subset_size=args.subset, generator=args.generator, width=args.width,
                                      activation=args.activation, train=tcfg)
    if args.command == "depth-init":
        spec = replace(spec, n_inputs=args.n_inputs)
    return spec


def _run(args) -> int:
    if args.command == "plot":
        cols = [c.strip() for c in args.columns.split(",") if c.strip()]
        print(plot_svg(args.csv, cols, args.out))
        return 0
    if args.command == "validate":
        from .validation import run_suite
        dataset = load_dataset(args) if args.with_mnist else None
        results = run_suite(dataset, args.out)
        failed = [r.criterion for r in results if not r.passed]
        print(f"{len(results) - len(failed)}/{len(results)} checks passed"
              + (f"; failed: {','.join(map(str, failed))}" if failed else ""))
        return 1 if failed else 0
    spec = _spec(args)
    for path in experiments.run(spec, load_dataset(args)):
        print(path)
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return _run(args)
    except UsageError as exc:
        print(f"fylab: error: usage: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # one line for any failure
        msg = " ".join(str(exc).split())
        print(f"fylab: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
