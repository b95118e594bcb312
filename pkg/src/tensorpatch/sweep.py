"""Patch-evaluate-restore sweeps over layers, stacking strategies, and ranks.

Each sweep cell builds a weight stack, decomposes it at one rank, patches a
copy of the weights, writes the patched file, and asks an external oracle
process for task metrics.  The pristine container is never mutated, so
"restore" is implicit and crash-safe.  Oracle failures and decomposition
errors are recorded per row and never abort the sweep.

Oracle protocol: the command in ``oracle_cmd`` is run with the environment
variable ``TRAWL_WEIGHTS`` pointing at the patched file and must print one
JSON object like ``{"accuracy": 0.93, "loss": 0.21}`` on stdout.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

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
from .stacking import (
    ArchitecturePattern,
    StackedTensor,
    build_global_tensor,
    build_layer_tensor,
    build_segment_tensor,
)
from .tensor_ops import stack_matrices, unstack
from .stacking import unstack_and_patch
from .weights_io import ModelWeights, load_weights, save_weights

__all__ = [
    "SweepConfig",
    "ReportRow",
    "OracleResult",
    "OracleError",
    "run_sweep",
    "evaluate_with_oracle",
    "emit_report",
    "CSV_COLUMNS",
]

STRATEGIES = ("PerLayer", "Global", "Segmented")
KINDS = ("QKVO", "FC")
METHODS = ("CP", "Tucker", "SVDBaseline", "None")

DEFAULT_ORACLE_TIMEOUT_S = 3600.0


class OracleError(RuntimeError):
    """Oracle invocation failure; ``kind`` distinguishes exit/timeout/unparsable."""

    def __init__(self, kind: str, detail: str):
        super().__init__(f"oracle {kind}: {detail}")
        self.kind = kind
        self.detail = detail


@dataclass(frozen=True)
class OracleResult:
    accuracy: float | None
    loss: float | None
    extra: dict[str, float]


@dataclass(frozen=True)
class ReportRow:
    strategy: str
    kind: str
    method: str
    layer_or_segment: int | str | None
    rank: int | tuple[int, int, int] | None
    relative_error: float | None
    metric_accuracy: float | None
    metric_loss: float | None
    fit_iterations: int | None
    wall_time_ms: float | None
    error: str | None = None


@dataclass(frozen=True)
class SweepConfig:
    """One sweep: a strategy/kind/method over a rank grid, plus fit options.

    Field names match the JSON document accepted by ``from_dict`` exactly.
    """

    weights_path: str
    pattern_path: str
    strategy: str
    kind: str
    method: str
    ranks: tuple[int, ...]
    oracle_cmd: str
    out_dir: str
    layers: tuple[int, ...] | None = None
    segments: tuple[str, ...] | None = None
    fit: FitOptions = FitOptions()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method != "None":
            if not self.ranks:
                raise ValueError("ranks must be non-empty for a decomposition sweep")
            if any(r < 1 for r in self.ranks):
                raise ValueError("ranks must be positive")
        if self.strategy == "PerLayer" and not self.layers:
            raise ValueError("PerLayer sweeps require a non-empty layers list")
        if self.strategy == "Segmented" and not self.segments:
            raise ValueError("Segmented sweeps require a non-empty segments list")

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        known = {
            "weights_path",
            "pattern_path",
            "strategy",
            "kind",
            "method",
            "ranks",
            "layers",
            "segments",
            "fit",
            "oracle_cmd",
            "out_dir",
        }
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown sweep config fields: {sorted(unknown)}")
        missing = {"weights_path", "pattern_path", "strategy", "kind", "method", "oracle_cmd", "out_dir"} - set(doc)
        if missing:
            raise ValueError(f"sweep config is missing fields: {sorted(missing)}")
        fit = FitOptions(**doc.get("fit", {}))
        return cls(
            weights_path=str(doc["weights_path"]),
            pattern_path=str(doc["pattern_path"]),
            strategy=str(doc["strategy"]),
            kind=str(doc["kind"]),
            method=str(doc["method"]),
            ranks=tuple(int(r) for r in doc.get("ranks", ())),
            layers=tuple(int(x) for x in doc["layers"]) if doc.get("layers") else None,
            segments=tuple(str(s) for s in doc["segments"]) if doc.get("segments") else None,
            fit=fit,
            oracle_cmd=str(doc["oracle_cmd"]),
            out_dir=str(doc["out_dir"]),
        )

    @classmethod
    def from_file(cls, path) -> "SweepConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def evaluate_with_oracle(
    patched_path, oracle_cmd: str, timeout_s: float = DEFAULT_ORACLE_TIMEOUT_S
) -> OracleResult:
    """Run the oracle command on a weights file and parse its JSON verdict.

    Raises :class:`OracleError` with kind ``"exit"``, ``"timeout"`` or
    ``"unparsable"`` so callers can distinguish the failure modes.
    """
    argv = shlex.split(oracle_cmd)
    if not argv:
        raise OracleError("exit", "empty oracle command")
    env = dict(os.environ)
    env["TRAWL_WEIGHTS"] = str(patched_path)
    try:
        proc = subprocess.run(
            argv, env=env, capture_output=True, text=True, timeout=timeout_s
        )
    except subprocess.TimeoutExpired:
        raise OracleError("timeout", f"no verdict within {timeout_s:g}s") from None
    except OSError as exc:
        raise OracleError("exit", f"could not launch: {exc}") from exc
    if proc.returncode != 0:
        tail = proc.stderr.strip().splitlines()[-1:] or [""]
        raise OracleError("exit", f"status {proc.returncode}: {tail[0]}")

    payload = None
    try:
        payload = json.loads(proc.stdout)
    except json.JSONDecodeError:
        for line in reversed(proc.stdout.splitlines()):
            line = line.strip()
            if line.startswith("{"):
                try:
                    payload = json.loads(line)
                    break
                except json.JSONDecodeError:
                    continue
    if not isinstance(payload, dict):
        raise OracleError("unparsable", f"stdout is not a JSON object: {proc.stdout[:200]!r}")

    def _num(key):
        v = payload.get(key)
        if v is None:
            return None
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise OracleError("unparsable", f"{key} is not numeric: {v!r}")
        return float(v)

    accuracy = _num("accuracy")
    loss = _num("loss")
    if accuracy is None and loss is None:
        raise OracleError("unparsable", "verdict has neither accuracy nor loss")
    if accuracy is not None and not 0.0 <= accuracy <= 1.0:
        raise OracleError("unparsable", f"accuracy {accuracy} outside [0, 1]")
    extra = {
        k: float(v)
        for k, v in payload.items()
        if k not in ("accuracy", "loss") and isinstance(v, (int, float)) and not isinstance(v, bool)
    }
    return OracleResult(accuracy=accuracy, loss=loss, extra=extra)


def _targets(cfg: SweepConfig, pattern: ArchitecturePattern) -> list[int | str]:
    if cfg.strategy == "PerLayer":
        for layer in cfg.layers:
            if not 0 <= layer < pattern.num_layers:
                raise ValueError(
                    f"layer {layer} out of range [0, {pattern.num_layers})"
                )
        return list(cfg.layers)
    if cfg.strategy == "Segmented":
        return list(cfg.segments)
    return ["all"]


def _build_stack(
    cfg: SweepConfig, weights: ModelWeights, pattern: ArchitecturePattern, target
) -> StackedTensor:
    if cfg.strategy == "PerLayer":
        return build_layer_tensor(weights, int(target), cfg.kind, pattern)
    if cfg.strategy == "Segmented":
        return build_segment_tensor(weights, target, cfg.kind, pattern)
    return build_global_tensor(weights, cfg.kind, pattern)


def _decompose(cfg: SweepConfig, stack: StackedTensor, rank: int):
    """Returns (approx tensor, reported rank, fit iterations)."""
    if cfg.method == "CP":
        model, report = cp_als(stack.tensor, rank, cfg.fit)
        return cp_reconstruct(model), rank, report.iterations_run
    if cfg.method == "Tucker":
        triple = default_rank_triple(rank, stack.tensor.shape)
        model, report = tucker_hooi(stack.tensor, triple, cfg.fit)
        return tucker_reconstruct(model), triple, report.iterations_run
    # SVDBaseline: truncated SVD of each stacked matrix independently
    slices = [truncated_svd_matrix(m, rank) for m in unstack(stack.tensor)]
    return stack_matrices(slices), rank, None


def run_sweep(
    cfg: SweepConfig, oracle_timeout_s: float = DEFAULT_ORACLE_TIMEOUT_S
) -> list[ReportRow]:
    """Execute a sweep and return its rows (baseline row first).

    The input weights file is only ever read; every cell patches an
    in-memory copy and writes it to ``out_dir/patched.safetensors``.
    """
    weights = load_weights(cfg.weights_path)
    pattern = ArchitecturePattern.from_file(cfg.pattern_path)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    patched_path = out_dir / "patched.safetensors"

    rows: list[ReportRow] = []

    t0 = time.perf_counter()
    base = ReportRow(
        strategy=cfg.strategy,
        kind=cfg.kind,
        method="None",
        layer_or_segment=None,
        rank=None,
        relative_error=None,
        metric_accuracy=None,
        metric_loss=None,
        fit_iterations=None,
        wall_time_ms=None,
    )
    try:
        verdict = evaluate_with_oracle(cfg.weights_path, cfg.oracle_cmd, oracle_timeout_s)
        base = replace(base, metric_accuracy=verdict.accuracy, metric_loss=verdict.loss)
    except OracleError as exc:
        base = replace(base, error=str(exc))
    rows.append(replace(base, wall_time_ms=(time.perf_counter() - t0) * 1000.0))

    if cfg.method == "None":
        return rows

    for target in _targets(cfg, pattern):
        for rank in cfg.ranks:
            t0 = time.perf_counter()
            row = ReportRow(
                strategy=cfg.strategy,
                kind=cfg.kind,
                method=cfg.method,
                layer_or_segment=target,
                rank=rank,
                relative_error=None,
                metric_accuracy=None,
                metric_loss=None,
                fit_iterations=None,
                wall_time_ms=None,
            )
            try:
                stack = _build_stack(cfg, weights, pattern, target)
                approx, reported_rank, iterations = _decompose(cfg, stack, rank)
                row = replace(
                    row,
                    rank=reported_rank,
                    relative_error=relative_error(stack.tensor, approx),
                    fit_iterations=iterations,
                )
                patched = unstack_and_patch(weights, stack.with_tensor(approx))
                save_weights(patched, patched_path)
            except (ValueError, ArithmeticError) as exc:
                rows.append(
                    replace(
                        row,
                        error=f"decomposition: {exc}",
                        wall_time_ms=(time.perf_counter() - t0) * 1000.0,
                    )
                )
                continue
            try:
                verdict = evaluate_with_oracle(patched_path, cfg.oracle_cmd, oracle_timeout_s)
                row = replace(
                    row, metric_accuracy=verdict.accuracy, metric_loss=verdict.loss
                )
            except OracleError as exc:
                row = replace(row, error=str(exc))
            rows.append(replace(row, wall_time_ms=(time.perf_counter() - t0) * 1000.0))
    return rows


CSV_COLUMNS = (
    "strategy",
    "kind",
    "method",
    "layer_or_segment",
    "rank",
    "relative_error",
    "metric_accuracy",
    "metric_loss",
    "fit_iterations",
    "wall_time_ms",
    "error",
)


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, tuple):
        return "x".join(str(v) for v in value)
    return str(value)


def emit_report(rows: Sequence[ReportRow], out_dir) -> None:
    """Write report.json (full rows) and report.csv (flat, RFC-4180)."""
    if not rows:
        raise ValueError("refusing to emit an empty report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    dicts = []
    for row in rows:
        d = asdict(row)
        if isinstance(d["rank"], tuple):
            d["rank"] = list(d["rank"])
        dicts.append(d)
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(dicts, fh, indent=2)
        fh.write("\n")

    import csv

    with open(out_dir / "report.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            d = asdict(row)
            writer.writerow([_csv_cell(d[col]) for col in CSV_COLUMNS])
