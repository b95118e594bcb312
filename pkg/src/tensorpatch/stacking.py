"""Builds 3-mode weight stacks from named model matrices and patches them back.

Three formulations are supported: one layer at a time, all layers globally,
and thirds-of-the-model segments.  Each stack carries provenance records
(source name, layer, role, transpose flag) so the inverse patch is exact.

The two FC matrices of a block are transposed relative to each other, so the
FC_OUT slice is stored transposed inside the stack and transposed back on
patching.  QKVO matrices share one shape and are stacked as stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .tensor_ops import DenseTensor, stack_matrices
from .weights_io import ModelWeights

__all__ = [
    "WeightRole",
    "StackKind",
    "Segment",
    "SliceProvenance",
    "StackedTensor",
    "ArchitecturePattern",
    "segment_layer_range",
    "build_layer_tensor",
    "build_global_tensor",
    "build_segment_tensor",
    "unstack_and_patch",
]


class WeightRole(Enum):
    Q = "Q"
    K = "K"
    V = "V"
    O = "O"
    FC_IN = "FC_IN"
    FC_OUT = "FC_OUT"


class StackKind(Enum):
    QKVO = "QKVO"
    FC = "FC"


class Segment(Enum):
    EARLY = "Early"
    MIDDLE = "Middle"
    LAST = "Last"


_KIND_ROLES = {
    StackKind.QKVO: (WeightRole.Q, WeightRole.K, WeightRole.V, WeightRole.O),
    StackKind.FC: (WeightRole.FC_IN, WeightRole.FC_OUT),
}

# the FC output projection is the transposed slice; fixed convention
_TRANSPOSED_ROLES = frozenset({WeightRole.FC_OUT})


def _coerce_kind(kind) -> StackKind:
    if isinstance(kind, StackKind):
        return kind
    try:
        return StackKind[str(kind).upper()]
    except KeyError:
        raise ValueError(f"unknown stack kind {kind!r}; expected QKVO or FC") from None


def _coerce_segment(segment) -> Segment:
    if isinstance(segment, Segment):
        return segment
    try:
        return Segment[str(segment).upper()]
    except KeyError:
        raise ValueError(
            f"unknown segment {segment!r}; expected Early, Middle or Last"
        ) from None


@dataclass(frozen=True)
class SliceProvenance:
    """Where one frontal slice came from, with everything needed to put it back."""

    weight_name: str
    layer_index: int
    role: WeightRole
    transposed: bool

    def __post_init__(self):
        if self.transposed and self.role not in _TRANSPOSED_ROLES:
            raise ValueError(f"role {self.role.value} is never stored transposed")


@dataclass(frozen=True)
class StackedTensor:
    tensor: DenseTensor
    provenance: tuple[SliceProvenance, ...]

    def __post_init__(self):
        if self.tensor.order != 3:
            raise ValueError("a stacked tensor must be 3-mode")
        if len(self.provenance) != self.tensor.shape[2]:
            raise ValueError(
                f"{len(self.provenance)} provenance records for "
                f"{self.tensor.shape[2]} slices"
            )
        names = [p.weight_name for p in self.provenance]
        if len(set(names)) != len(names):
            raise ValueError("provenance weight names must be unique")

    def with_tensor(self, tensor: DenseTensor) -> "StackedTensor":
        """Same provenance, new values (e.g. a low-rank reconstruction)."""
        return StackedTensor(tensor=tensor, provenance=self.provenance)


@dataclass(frozen=True)
class ArchitecturePattern:
    """Maps abstract weight roles to concrete tensor names via templates.

    Every template must contain the ``{layer}`` placeholder exactly once,
    and all resolved names must be unique.
    """

    name_templates: dict[WeightRole, str]
    num_layers: int

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        missing = [r.value for r in WeightRole if r not in self.name_templates]
        if missing:
            raise ValueError(f"pattern is missing templates for roles: {missing}")
        for role, tpl in self.name_templates.items():
            if tpl.count("{layer}") != 1:
                raise ValueError(
                    f"template for {role.value} must contain '{{layer}}' exactly once: {tpl!r}"
                )
        resolved = [
            tpl.format(layer=layer)
            for tpl in self.name_templates.values()
            for layer in range(self.num_layers)
        ]
        if len(set(resolved)) != len(resolved):
            raise ValueError("pattern templates resolve to duplicate names")

    def resolve(self, role: WeightRole, layer: int) -> str:
        if not 0 <= layer < self.num_layers:
            raise ValueError(f"layer {layer} out of range [0, {self.num_layers})")
        return self.name_templates[role].format(layer=layer)

    @classmethod
    def from_dict(cls, doc: dict) -> "ArchitecturePattern":
        try:
            num_layers = int(doc["num_layers"])
            templates = doc["templates"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed pattern document: {exc}") from exc
        name_templates = {}
        for key, tpl in templates.items():
            try:
                role = WeightRole[key]
            except KeyError:
                raise ValueError(f"unknown weight role {key!r} in pattern") from None
            name_templates[role] = str(tpl)
        return cls(name_templates=name_templates, num_layers=num_layers)

    @classmethod
    def from_file(cls, path) -> "ArchitecturePattern":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def segment_layer_range(segment, num_layers: int) -> range:
    """Layer indices of a third-of-the-model segment.

    Thirds use floor boundaries, so remainder layers land in later segments:
    Early = [0, L//3), Middle = [L//3, 2L//3), Last = [2L//3, L).
    """
    segment = _coerce_segment(segment)
    lo_third = num_layers // 3
    hi_third = (2 * num_layers) // 3
    if segment is Segment.EARLY:
        return range(0, lo_third)
    if segment is Segment.MIDDLE:
        return range(lo_third, hi_third)
    return range(hi_third, num_layers)


def _gather_slices(
    weights: ModelWeights,
    pattern: ArchitecturePattern,
    layers: Iterable[int],
    kind: StackKind,
) -> StackedTensor:
    roles = _KIND_ROLES[kind]
    mats: list[np.ndarray] = []
    provenance: list[SliceProvenance] = []
    ref_shape = None
    ref_name = None
    for layer in layers:
        for role in roles:
            name = pattern.resolve(role, layer)
            if name not in weights:
                raise ValueError(
                    f"weight {name!r} (role {role.value}, layer {layer}) not found in container"
                )
            m = weights.matrix(name)
            transposed = role in _TRANSPOSED_ROLES
            if transposed:
                m = m.T
            if ref_shape is None:
                ref_shape, ref_name = m.shape, name
            elif m.shape != ref_shape:
                raise ValueError(
                    f"slice shapes disagree: {ref_name!r} gives {ref_shape} but "
                    f"{name!r} gives {m.shape} (after any transpose)"
                )
            mats.append(m)
            provenance.append(
                SliceProvenance(
                    weight_name=name, layer_index=layer, role=role, transposed=transposed
                )
            )
    return StackedTensor(tensor=stack_matrices(mats), provenance=tuple(provenance))


def build_layer_tensor(
    weights: ModelWeights, layer: int, kind, pattern: ArchitecturePattern
) -> StackedTensor:
    """Stack one layer's QKVO (4 slices) or FC pair (2 slices, FC_OUT transposed)."""
    kind = _coerce_kind(kind)
    if not 0 <= layer < pattern.num_layers:
        raise ValueError(f"layer {layer} out of range [0, {pattern.num_layers})")
    return _gather_slices(weights, pattern, [layer], kind)


def build_global_tensor(
    weights: ModelWeights, kind, pattern: ArchitecturePattern
) -> StackedTensor:
    """Stack the selected matrices from every layer, ordered by (layer, role)."""
    kind = _coerce_kind(kind)
    return _gather_slices(weights, pattern, range(pattern.num_layers), kind)


def build_segment_tensor(
    weights: ModelWeights, segment, kind, pattern: ArchitecturePattern
) -> StackedTensor:
    """Stack a third-of-the-model segment, ordered by (layer, role)."""
    kind = _coerce_kind(kind)
    segment = _coerce_segment(segment)
    layers = segment_layer_range(segment, pattern.num_layers)
    if len(layers) == 0:
        raise ValueError(
            f"segment {segment.value} is empty for a {pattern.num_layers}-layer model"
        )
    return _gather_slices(weights, pattern, layers, kind)


def unstack_and_patch(weights: ModelWeights, approx: StackedTensor) -> ModelWeights:
    """Overwrite each provenance slice's source matrix with the stack's values.

    Transposed slices are transposed back.  Returns a new container; the
    input container and all weights not named in the provenance are untouched.
    """
    patched = weights
    for k, prov in enumerate(approx.provenance):
        if prov.weight_name not in weights:
            raise ValueError(f"weight {prov.weight_name!r} not found in container")
        values = np.array(approx.tensor.data[:, :, k])
        if prov.transposed:
            values = values.T
        expected = weights.entry(prov.weight_name).shape
        if values.shape != expected:
            raise ValueError(
                f"slice {k} for {prov.weight_name!r} has shape {values.shape}, "
                f"but the stored weight has shape {expected}"
            )
        patched = patched.replace_matrix(prov.weight_name, values)
    return patched
