"""Dense tensor container and the multilinear kernels everything else builds on.

Conventions (frozen, do not change casually):

* Flat linearization is "first index fastest" (Fortran/column-major order).
* ``unfold(t, n)`` produces the mode-n matricization whose columns run over
  the remaining modes with lower-numbered modes varying fastest, i.e. the
  Kolda-Bader convention.  ``fold`` is its exact inverse.
* All arithmetic is float64 regardless of how weights are stored on disk.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "DenseTensor",
    "unfold",
    "fold",
    "mode_n_product",
    "khatri_rao",
    "frobenius_norm",
    "stack_matrices",
    "unstack",
    "as_3mode",
]


class DenseTensor:
    """Immutable dense N-mode tensor with float64 entries.

    Wraps a read-only ndarray.  Construction validates that every entry is
    finite; downstream code relies on that and never re-checks.
    """

    __slots__ = ("_data",)

    def __init__(self, data, copy: bool = True):
        arr = np.array(data, dtype=np.float64, copy=copy)
        if arr.ndim < 1:
            arr = arr.reshape(1)
        if not all(s > 0 for s in arr.shape):
            raise ValueError(f"tensor modes must have positive size, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("tensor entries must be finite (no NaN/Inf)")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def from_flat(cls, flat, shape: Sequence[int]) -> "DenseTensor":
        """Build from a flat array in first-index-fastest order."""
        flat = np.asarray(flat, dtype=np.float64)
        shape = tuple(int(s) for s in shape)
        if flat.size != int(np.prod(shape)):
            raise ValueError(f"flat data of length {flat.size} does not fill shape {shape}")
        return cls(np.reshape(flat, shape, order="F"))

    @property
    def data(self) -> np.ndarray:
        """Read-only ndarray view of the entries."""
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def order(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    def to_flat(self) -> np.ndarray:
        """Entries as a flat array in first-index-fastest order."""
        return self._data.ravel(order="F")

    def __getitem__(self, key):
        return self._data[key]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._data, other._data)

    __hash__ = None  # mutable-value semantics, like ndarray

    def __repr__(self) -> str:
        return f"DenseTensor(shape={self.shape})"


def _check_mode(order: int, mode: int) -> None:
    if not 0 <= mode < order:
        raise ValueError(f"mode {mode} out of range for order-{order} tensor")


def unfold(t: DenseTensor, mode: int) -> np.ndarray:
    """Mode-n unfolding X_(n) of shape (I_n, prod of remaining sizes).

    Columns are ordered with lower-numbered remaining modes varying fastest.
    """
    _check_mode(t.order, mode)
    return np.reshape(np.moveaxis(t.data, mode, 0), (t.shape[mode], -1), order="F")


def fold(m, mode: int, shape: Sequence[int]) -> DenseTensor:
    """Exact inverse of :func:`unfold` under the same column convention."""
    m = np.asarray(m, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    _check_mode(len(shape), mode)
    if m.ndim != 2:
        raise ValueError(f"fold expects a matrix, got ndim={m.ndim}")
    rest = [s for i, s in enumerate(shape) if i != mode]
    if m.shape[0] != shape[mode] or m.shape[1] != int(np.prod(rest)):
        raise ValueError(
            f"matrix of shape {m.shape} cannot fold into shape {shape} along mode {mode}"
        )
    arr = np.moveaxis(np.reshape(m, [shape[mode]] + rest, order="F"), 0, mode)
    return DenseTensor(arr)


def mode_n_product(t: DenseTensor, m, mode: int) -> DenseTensor:
    """n-mode product: multiplies every mode-``mode`` slice of ``t`` by ``m``.

    Computed as ``fold(m @ unfold(t, mode), ...)`` so the identity
    ``unfold(result, mode) == m @ unfold(t, mode)`` holds exactly.
    """
    m = np.asarray(m, dtype=np.float64)
    _check_mode(t.order, mode)
    if m.ndim != 2:
        raise ValueError(f"mode_n_product expects a matrix, got ndim={m.ndim}")
    if m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix with {m.shape[1]} columns cannot contract mode {mode} of size {t.shape[mode]}"
        )
    new_shape = list(t.shape)
    new_shape[mode] = m.shape[0]
    return fold(m @ unfold(t, mode), mode, new_shape)


def khatri_rao(a, b) -> np.ndarray:
    """Column-wise Kronecker product.

    Column r of the result is ``kron(a[:, r], b[:, r])`` with a's row index
    varying slower, so the result has ``a.rows * b.rows`` rows.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("khatri_rao expects matrices")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column-count mismatch: {a.shape[1]} vs {b.shape[1]}")
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def frobenius_norm(t: DenseTensor) -> float:
    """sqrt of the sum of squared entries."""
    return float(np.linalg.norm(t.data.ravel()))


def stack_matrices(slices: Sequence[np.ndarray]) -> DenseTensor:
    """Stack equally-shaped matrices into a 3-mode tensor along the last mode.

    Frontal slice k of the result equals ``slices[k]`` exactly.
    """
    if len(slices) == 0:
        raise ValueError("cannot stack an empty list of matrices")
    mats = [np.asarray(s, dtype=np.float64) for s in slices]
    first = mats[0].shape
    if any(m.ndim != 2 for m in mats):
        raise ValueError("stack_matrices expects 2-D matrices")
    for k, m in enumerate(mats):
        if m.shape != first:
            raise ValueError(f"slice {k} has shape {m.shape}, expected {first}")
    return DenseTensor(np.stack(mats, axis=2))


def unstack(t: DenseTensor) -> list[np.ndarray]:
    """Inverse of :func:`stack_matrices`: the list of frontal slices."""
    if t.order != 3:
        raise ValueError(f"unstack expects a 3-mode tensor, got order {t.order}")
    return [np.array(t.data[:, :, k]) for k in range(t.shape[2])]


def as_3mode(t: DenseTensor) -> DenseTensor:
    """View a tensor of order <= 3 as 3-mode by appending size-1 modes."""
    if t.order > 3:
        raise ValueError(f"cannot view order-{t.order} tensor as 3-mode")
    if t.order == 3:
        return t
    return DenseTensor(t.data.reshape(t.shape + (1,) * (3 - t.order)))
