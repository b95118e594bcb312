"""CP and Tucker decompositions of 3-mode tensors.

CP is fit with alternating least squares (each mode update solves the
normal equations built from the Khatri-Rao product of the other two
factors), Tucker with higher-order orthogonal iteration on top of an
HOSVD initializer.  A truncated-SVD single-matrix baseline is included
so stacked decompositions can be compared against per-matrix rank
reduction in one sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .tensor_ops import (
    DenseTensor,
    as_3mode,
    fold,
    frobenius_norm,
    khatri_rao,
    mode_n_product,
    unfold,
)

__all__ = [
    "FitOptions",
    "FitReport",
    "CPModel",
    "TuckerModel",
    "cp_als",
    "cp_reconstruct",
    "hosvd",
    "tucker_hooi",
    "tucker_reconstruct",
    "truncated_svd_matrix",
    "relative_error",
    "default_rank_triple",
]

_INITS = ("hosvd", "random")


@dataclass(frozen=True)
class FitOptions:
    """Iteration controls shared by the CP and Tucker fitters.

    ``restarts`` counts additional runs beyond the first: the first run uses
    ``init``, every extra run uses a fresh seeded random initializer, and the
    run with the lowest relative error wins.
    """

    max_iters: int = 200
    tol: float = 1e-7
    seed: int = 0
    init: str = "hosvd"
    restarts: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.init == "hosvd-based":  # accepted alias
            object.__setattr__(self, "init", "hosvd")
        if self.init not in _INITS:
            raise ValueError(f"init must be one of {_INITS}, got {self.init!r}")
        if self.restarts < 0:
            raise ValueError("restarts must be non-negative")


@dataclass(frozen=True)
class FitReport:
    iterations_run: int
    relative_error: float
    converged: bool
    restart_chosen: int
    regularized: bool = False
    # relative error after each ALS/HOOI sweep of the chosen run (diagnostic)
    error_history: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class CPModel:
    """Weight vector plus per-mode factor matrices with unit-norm columns."""

    weights: np.ndarray
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("weights must be a non-empty vector")
        r = w.size
        if len(self.factors) != 3:
            raise ValueError("CPModel needs exactly 3 factor matrices")
        for f in self.factors:
            if f.ndim != 2 or f.shape[1] != r:
                raise ValueError(f"factor of shape {f.shape} does not match rank {r}")
            norms = np.linalg.norm(f, axis=0)
            if not np.allclose(norms, 1.0, atol=1e-8):
                raise ValueError("factor columns must have unit Euclidean norm")
        absw = np.abs(w)
        if np.any(absw[1:] > absw[:-1] + 1e-15):
            raise ValueError("weights must be sorted by non-increasing absolute value")

    @property
    def rank(self) -> int:
        return int(np.asarray(self.weights).size)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(f.shape[0] for f in self.factors)


@dataclass(frozen=True)
class TuckerModel:
    """Core tensor plus per-mode factor matrices with orthonormal columns."""

    core: DenseTensor
    factors: tuple[np.ndarray, np.ndarray, np.ndarray]

    def __post_init__(self):
        if self.core.order != 3 or len(self.factors) != 3:
            raise ValueError("TuckerModel is 3-mode")
        for n, f in enumerate(self.factors):
            if f.ndim != 2 or f.shape[1] != self.core.shape[n]:
                raise ValueError(
                    f"factor {n} of shape {f.shape} does not match core shape {self.core.shape}"
                )
            gram = f.T @ f
            if np.max(np.abs(gram - np.eye(f.shape[1]))) > 1e-10:
                raise ValueError(f"factor {n} does not have orthonormal columns")

    @property
    def ranks(self) -> tuple[int, int, int]:
        return self.core.shape

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(f.shape[0] for f in self.factors)


def _run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng((seed & 0xFFFFFFFFFFFFFFFF, run))


def _unit_columns(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    out = m / safe
    for r in np.nonzero(norms == 0)[0]:
        out[:, r] = 0.0
        out[0, r] = 1.0
    return out


def _leading_left_singular(m: np.ndarray, k: int) -> np.ndarray:
    u = np.linalg.svd(m, full_matrices=False)[0]
    return u[:, :k]


def _cp_init(t: DenseTensor, rank: int, kind: str, rng: np.random.Generator) -> list[np.ndarray]:
    factors = []
    for n in range(3):
        size = t.shape[n]
        if kind == "hosvd":
            u = _leading_left_singular(unfold(t, n), min(rank, size))
            if u.shape[1] < rank:
                pad = rng.standard_normal((size, rank - u.shape[1]))
                u = np.hstack([u, pad])
        else:
            u = rng.standard_normal((size, rank))
        factors.append(_unit_columns(u))
    return factors


def _solve_normal_equations(gram: np.ndarray, rhs: np.ndarray) -> tuple[np.ndarray, bool]:
    """Solve gram @ X = rhs, ridge-regularizing instead of failing when singular."""
    try:
        cho = scipy.linalg.cho_factor(gram, check_finite=False)
        x = scipy.linalg.cho_solve(cho, rhs, check_finite=False)
        if np.isfinite(x).all():
            return x, False
    except scipy.linalg.LinAlgError:
        pass
    r = gram.shape[0]
    ridge = 1e-12 * np.trace(gram)
    if not ridge > 0:
        ridge = 1e-12
    x = np.linalg.solve(gram + ridge * np.eye(r), rhs)
    return x, True


def _cp_relative_error(x0: np.ndarray, norm_x: float, weights, factors) -> float:
    a0, a1, a2 = factors
    recon0 = (a0 * weights) @ khatri_rao(a2, a1).T
    return float(np.linalg.norm(x0 - recon0) / norm_x)


def _cp_single_run(
    t: DenseTensor, rank: int, opts: FitOptions, run: int
) -> tuple[np.ndarray, list[np.ndarray], list[float], bool, bool]:
    init_kind = opts.init if run == 0 else "random"
    factors = _cp_init(t, rank, init_kind, _run_rng(opts.seed, run))
    weights = np.ones(rank)

    unfoldings = [unfold(t, n) for n in range(3)]
    norm_x = frobenius_norm(t)
    grams = [f.T @ f for f in factors]

    history: list[float] = []
    regularized = False
    converged = False
    # Khatri-Rao partner order per mode, matching the unfolding column layout
    partners = {0: (2, 1), 1: (2, 0), 2: (1, 0)}

    for _ in range(opts.max_iters):
        for n in range(3):
            hi, lo = partners[n]
            gram = grams[hi] * grams[lo]
            kr = khatri_rao(factors[hi], factors[lo])
            mttkrp = unfoldings[n] @ kr
            solved, used_ridge = _solve_normal_equations(gram, mttkrp.T)
            regularized = regularized or used_ridge
            a = solved.T
            weights = np.linalg.norm(a, axis=0)
            factors[n] = _unit_columns(a)
            grams[n] = factors[n].T @ factors[n]
        err = _cp_relative_error(unfoldings[0], norm_x, weights, factors)
        history.append(err)
        if len(history) > 1:
            prev = history[-2]
            if prev == 0.0 or abs(prev - err) / prev < opts.tol:
                converged = True
                break
        elif err == 0.0:
            converged = True
            break
    return weights, factors, history, converged, regularized


def cp_als(t: DenseTensor, rank: int, opts: FitOptions = FitOptions()) -> tuple[CPModel, FitReport]:
    """Fit a rank-``rank`` CP model by alternating least squares.

    Runs ``opts.restarts + 1`` seeded fits and keeps the one with the lowest
    relative error; within each run the relative error is non-increasing
    across sweeps.  Deterministic given identical inputs.
    """
    t = as_3mode(t)
    i, j, k = t.shape
    max_rank = min(i * j, j * k, i * k)
    if not 1 <= rank <= max_rank:
        raise ValueError(f"rank {rank} out of range [1, {max_rank}] for shape {t.shape}")
    if frobenius_norm(t) == 0.0:
        raise ValueError("cannot fit a CP model to an all-zero tensor")

    best = None
    for run in range(opts.restarts + 1):
        weights, factors, history, converged, regularized = _cp_single_run(t, rank, opts, run)
        err = history[-1]
        if best is None or err < best[0]:
            best = (err, run, weights, factors, history, converged, regularized)

    err, run, weights, factors, history, converged, regularized = best
    order = np.argsort(-np.abs(weights), kind="stable")
    model = CPModel(
        weights=weights[order],
        factors=tuple(np.ascontiguousarray(f[:, order]) for f in factors),
    )
    report = FitReport(
        iterations_run=len(history),
        relative_error=err,
        converged=converged,
        restart_chosen=run,
        regularized=regularized,
        error_history=tuple(history),
    )
    return model, report


def cp_reconstruct(m: CPModel) -> DenseTensor:
    """Evaluate the CP model: W[i,j,k] = sum_r w_r A[i,r] B[j,r] C[k,r]."""
    a, b, c = m.factors
    recon0 = (a * np.asarray(m.weights)) @ khatri_rao(c, b).T
    return fold(recon0, 0, m.shape)


def _check_tucker_ranks(shape: Sequence[int], ranks: Sequence[int]) -> tuple[int, int, int]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3:
        raise ValueError(f"expected a rank triple, got {ranks}")
    for n, (r, s) in enumerate(zip(ranks, shape)):
        if not 1 <= r <= s:
            raise ValueError(f"rank {r} out of range [1, {s}] for mode {n}")
    return ranks


def _tucker_core(t: DenseTensor, factors: Sequence[np.ndarray]) -> DenseTensor:
    core = t
    for n, f in enumerate(factors):
        core = mode_n_product(core, f.T, n)
    return core


def hosvd(t: DenseTensor, ranks: Sequence[int]) -> TuckerModel:
    """Higher-order SVD: per-mode leading left singular vectors of the unfoldings."""
    t = as_3mode(t)
    ranks = _check_tucker_ranks(t.shape, ranks)
    factors = tuple(_leading_left_singular(unfold(t, n), ranks[n]) for n in range(3))
    return TuckerModel(core=_tucker_core(t, factors), factors=factors)


def tucker_hooi(
    t: DenseTensor, ranks: Sequence[int], opts: FitOptions = FitOptions()
) -> tuple[TuckerModel, FitReport]:
    """Higher-order orthogonal iteration, initialized from HOSVD (or randomly).

    Same restart and stopping semantics as :func:`cp_als`.  With the HOSVD
    initializer the error can never exceed plain HOSVD at equal ranks.
    """
    t = as_3mode(t)
    ranks = _check_tucker_ranks(t.shape, ranks)
    norm_x = frobenius_norm(t)

    best = None
    for run in range(opts.restarts + 1):
        if run == 0 and opts.init == "hosvd":
            factors = [_leading_left_singular(unfold(t, n), ranks[n]) for n in range(3)]
        else:
            rng = _run_rng(opts.seed, run)
            factors = [
                np.linalg.qr(rng.standard_normal((t.shape[n], ranks[n])))[0] for n in range(3)
            ]
        history: list[float] = []
        converged = False
        for _ in range(opts.max_iters):
            for n in range(3):
                y = t
                for m in range(3):
                    if m != n:
                        y = mode_n_product(y, factors[m].T, m)
                factors[n] = _leading_left_singular(unfold(y, n), ranks[n])
            core = _tucker_core(t, factors)
            # explicit residual: the ||X||^2 - ||G||^2 identity cancels
            # catastrophically once the error drops near machine precision
            recon = core
            for n in range(3):
                recon = mode_n_product(recon, factors[n], n)
            if norm_x == 0.0:
                err = 0.0
            else:
                err = float(np.linalg.norm(t.data - recon.data) / norm_x)
            history.append(err)
            if len(history) > 1:
                prev = history[-2]
                if prev == 0.0 or abs(prev - err) / prev < opts.tol:
                    converged = True
                    break
            elif err == 0.0:
                converged = True
                break
        err = history[-1]
        if best is None or err < best[0]:
            best = (err, run, [f.copy() for f in factors], history, converged)

    err, run, factors, history, converged = best
    model = TuckerModel(core=_tucker_core(t, factors), factors=tuple(factors))
    report = FitReport(
        iterations_run=len(history),
        relative_error=err,
        converged=converged,
        restart_chosen=run,
        error_history=tuple(history),
    )
    return model, report


def tucker_reconstruct(m: TuckerModel) -> DenseTensor:
    """Evaluate the Tucker model: core multiplied by each factor along its mode."""
    out = m.core
    for n, f in enumerate(m.factors):
        out = mode_n_product(out, f, n)
    return out


def truncated_svd_matrix(m, rank: int) -> np.ndarray:
    """Best rank-``rank`` approximation of a matrix in Frobenius norm."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("truncated_svd_matrix expects a matrix")
    if not 1 <= rank <= min(m.shape):
        raise ValueError(f"rank {rank} out of range [1, {min(m.shape)}] for shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return (u[:, :rank] * s[:rank]) @ vt[:rank]


def relative_error(original: DenseTensor, approx: DenseTensor) -> float:
    """Frobenius-norm error of ``approx`` normalized by ``original``."""
    if original.shape != approx.shape:
        raise ValueError(f"shape mismatch: {original.shape} vs {approx.shape}")
    denom = frobenius_norm(original)
    if denom == 0.0:
        raise ValueError("relative error undefined for an all-zero original")
    return float(np.linalg.norm(original.data - approx.data) / denom)


def default_rank_triple(rank: int, shape: Sequence[int]) -> tuple[int, int, int]:
    """Expand a scalar Tucker rank to (R, R, min(R, depth)).

    The third mode of a weight stack is the slice count, typically far
    smaller than the matrix dimensions, so it is capped separately.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    return (rank, rank, min(rank, int(shape[2])))
