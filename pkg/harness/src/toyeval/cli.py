"""Oracle entry point: score a weights file, print one JSON object on stdout.

Protocol: the weights path comes from --weights or the TRAWL_WEIGHTS
environment variable; stdout carries exactly one line of JSON like
{"accuracy": 0.98, "loss": 0.05}; everything else goes to stderr.

Exit codes: 0 success, 2 missing weights / bad configuration,
4 corrupt file or architecture mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .container import FormatError, read_float_tensors
from .dataset import load_dataset
from .model import ArchitectureError, ToyClassifier, evaluate_metrics


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toyeval",
        description="Evaluate a toy-transformer weights file on the bundled "
        "classification set and print accuracy/loss as JSON.",
    )
    parser.add_argument(
        "--weights",
        help="weights file (defaults to the TRAWL_WEIGHTS environment variable)",
    )
    parser.add_argument("--dataset", help="dataset JSON (defaults to the bundled set)")
    parser.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    parser.add_argument(
        "--device",
        default="cpu",
        help="device hint; this implementation always evaluates on cpu",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    weights_path = args.weights or os.environ.get("TRAWL_WEIGHTS")
    if not weights_path:
        print("no weights file: pass --weights or set TRAWL_WEIGHTS", file=sys.stderr)
        return 2
    if not os.path.exists(weights_path):
        print(f"weights file not found: {weights_path}", file=sys.stderr)
        return 2
    if args.batch_size < 1:
        print("batch size must be >= 1", file=sys.stderr)
        return 2
    if args.device != "cpu":
        print(f"device hint {args.device!r} ignored; evaluating on cpu", file=sys.stderr)

    try:
        tokens, labels = load_dataset(args.dataset)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"could not load dataset: {exc}", file=sys.stderr)
        return 2

    try:
        tensors, _ = read_float_tensors(weights_path)
        model = ToyClassifier.from_tensors(tensors)
        metrics = evaluate_metrics(model, tokens, labels, batch_size=args.batch_size)
    except (FormatError, ArchitectureError) as exc:
        print(f"cannot evaluate weights: {exc}", file=sys.stderr)
        return 4

    print(json.dumps(metrics))
    return 0


if __name__ == "__main__":
    sys.exit(main())
