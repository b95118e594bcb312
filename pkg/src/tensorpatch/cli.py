"""Command-line interface: one-shot decompose, config-driven sweeps, fixtures.

Exit codes: 0 success, 2 config error, 3 I/O error, 4 oracle failure
(the last is raised by one-shot evaluators such as the bundled toy harness;
sweeps record per-row oracle failures and still exit 0).
"""

from __future__ import annotations

import argparse
import json
import sys

from .decomp import (
    FitOptions,
    cp_als,
    cp_reconstruct,
    default_rank_triple,
    relative_error,
    truncated_svd_matrix,
    tucker_hooi,
    tucker_reconstruct,
)
from .fixtures import NOISE_TARGETS, build_toy_weights
from .stacking import (
    ArchitecturePattern,
    build_global_tensor,
    build_layer_tensor,
    build_segment_tensor,
    unstack_and_patch,
)
from .sweep import OracleError, SweepConfig, emit_report, run_sweep
from .tensor_ops import stack_matrices, unstack
from .weights_io import ContainerError, load_weights, save_weights

_STRATEGY_FLAGS = {"per-layer": "PerLayer", "global": "Global", "segment": "Segmented"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensorpatch",
        description="Stack transformer weight matrices into 3-mode tensors and "
        "replace them with low-rank CP/Tucker reconstructions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    dec = sub.add_parser("decompose", help="one-shot patch of a single stack")
    dec.add_argument("--weights", required=True, help="input safetensors file")
    dec.add_argument("--pattern", required=True, help="architecture pattern JSON")
    dec.add_argument("--strategy", required=True, choices=sorted(_STRATEGY_FLAGS))
    dec.add_argument("--segment", choices=["early", "middle", "last"])
    dec.add_argument("--kind", required=True, choices=["qkvo", "fc"])
    dec.add_argument("--method", required=True, choices=["cp", "tucker", "svd"])
    dec.add_argument("--rank", type=int)
    dec.add_argument("--ranks-3", dest="ranks_3", help="Tucker rank triple, e.g. 8,8,2")
    dec.add_argument("--layer", type=int)
    dec.add_argument("--seed", type=int, default=0)
    dec.add_argument("--tol", type=float, default=1e-7)
    dec.add_argument("--max-iters", dest="max_iters", type=int, default=200)
    dec.add_argument("--restarts", type=int, default=0)
    dec.add_argument("--out", required=True, help="where to write the patched file")
    dec.set_defaults(func=_cmd_decompose)

    swp = sub.add_parser("sweep", help="run a patch-evaluate-restore sweep")
    swp.add_argument("--config", required=True, help="SweepConfig JSON document")
    swp.set_defaults(func=_cmd_sweep)

    gen = sub.add_parser("gen-fixture", help="emit a toy-transformer weights file")
    gen.add_argument("--out", required=True)
    gen.add_argument("--layers", type=int, required=True)
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=0.0)
    gen.add_argument(
        "--noise-target", dest="noise_target", choices=list(NOISE_TARGETS), default=None
    )
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument(
        "--random",
        action="store_true",
        help="emit untrained random weights instead of the constructed model",
    )
    gen.set_defaults(func=_cmd_gen_fixture)
    return parser


def _cmd_decompose(args) -> int:
    weights = load_weights(args.weights)
    pattern = ArchitecturePattern.from_file(args.pattern)

    if args.strategy == "per-layer":
        if args.layer is None:
            raise ValueError("--layer is required with --strategy per-layer")
        stack = build_layer_tensor(weights, args.layer, args.kind, pattern)
        target = args.layer
    elif args.strategy == "segment":
        if args.segment is None:
            raise ValueError("--segment is required with --strategy segment")
        stack = build_segment_tensor(weights, args.segment, args.kind, pattern)
        target = args.segment
    else:
        stack = build_global_tensor(weights, args.kind, pattern)
        target = "all"

    opts = FitOptions(
        max_iters=args.max_iters, tol=args.tol, seed=args.seed, restarts=args.restarts
    )
    iterations = None
    converged = None
    if args.method == "cp":
        if args.rank is None:
            raise ValueError("--rank is required with --method cp")
        model, report = cp_als(stack.tensor, args.rank, opts)
        approx = cp_reconstruct(model)
        rank_out: object = args.rank
        iterations, converged = report.iterations_run, report.converged
    elif args.method == "tucker":
        if args.ranks_3:
            try:
                triple = tuple(int(r) for r in args.ranks_3.split(","))
            except ValueError:
                raise ValueError(f"--ranks-3 must be three integers, got {args.ranks_3!r}")
            if len(triple) != 3:
                raise ValueError(f"--ranks-3 must have three entries, got {args.ranks_3!r}")
        elif args.rank is not None:
            triple = default_rank_triple(args.rank, stack.tensor.shape)
        else:
            raise ValueError("--rank or --ranks-3 is required with --method tucker")
        model, report = tucker_hooi(stack.tensor, triple, opts)
        approx = tucker_reconstruct(model)
        rank_out = list(triple)
        iterations, converged = report.iterations_run, report.converged
    else:
        if args.rank is None:
            raise ValueError("--rank is required with --method svd")
        approx = stack_matrices(
            [truncated_svd_matrix(m, args.rank) for m in unstack(stack.tensor)]
        )
        rank_out = args.rank

    patched = unstack_and_patch(weights, stack.with_tensor(approx))
    save_weights(patched, args.out)
    print(
        json.dumps(
            {
                "relative_error": relative_error(stack.tensor, approx),
                "method": args.method,
                "target": target,
                "rank": rank_out,
                "iterations": iterations,
                "converged": converged,
                "out": str(args.out),
            }
        )
    )
    return 0


def _cmd_sweep(args) -> int:
    cfg = SweepConfig.from_file(args.config)
    rows = run_sweep(cfg)
    emit_report(rows, cfg.out_dir)
    print(
        json.dumps(
            {
                "rows": len(rows),
                "report_json": str(cfg.out_dir) + "/report.json",
                "report_csv": str(cfg.out_dir) + "/report.csv",
            }
        )
    )
    return 0


def _cmd_gen_fixture(args) -> int:
    weights = build_toy_weights(
        num_layers=args.layers,
        dim=args.dim,
        seed=args.seed,
        noise_sigma=args.noise_sigma,
        noise_target=args.noise_target,
        random_init=args.random,
    )
    save_weights(weights, args.out)
    print(
        json.dumps(
            {
                "out": str(args.out),
                "layers": args.layers,
                "dim": args.dim,
                "seed": args.seed,
                "noise_sigma": args.noise_sigma,
                "random": bool(args.random),
            }
        )
    )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ContainerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
