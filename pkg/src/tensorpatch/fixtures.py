"""Deterministic toy-transformer weight fixtures for tests and demos.

The toy architecture is a single-head encoder over a 32-token vocabulary:
token + position embeddings, ``num_layers`` blocks of (self-attention,
two-matrix FC with relu), and a 4-way classifier head read off the last
position.  Tensor names follow the bundled ``patterns/toy.json`` scheme:

    embed.tok           (32, dim)      token embeddings
    embed.pos           (16, dim)      position embeddings
    layers.{l}.attn.q   (dim, dim)
    layers.{l}.attn.k   (dim, dim)
    layers.{l}.attn.v   (dim, dim)
    layers.{l}.attn.o   (dim, dim)
    layers.{l}.fc.in    (2*dim, dim)
    layers.{l}.fc.out   (dim, 2*dim)
    head.cls            (4, dim)

All matrices are stored as float32 with the (out_features, in_features)
orientation, applied as ``x @ W.T``.

The default weights are constructed, not trained: attention at every layer
routes position 0 to all positions and copies its token-class signature into
a workspace subspace, the FC pair amplifies that workspace, and the head
reads it out.  The model therefore classifies a sequence by the class
(token id mod 4) of its first token with a wide margin, while every stacked
weight tensor has low CP rank by construction, which is exactly the regime
the denoising sweeps exercise.

Dimension layout (requires dim >= 10):
    0..3    class workspace, written by attention/FC, read by the head
    4..7    token class signature (one-hot of token id mod 4)
    8       position-0 flag
    9       constant one
    10..    inert per-token texture noise
"""

from __future__ import annotations

import numpy as np

from .weights_io import ModelWeights, WeightEntry

__all__ = [
    "TOY_VOCAB",
    "TOY_SEQ_LEN",
    "TOY_CLASSES",
    "toy_hidden_dim",
    "toy_pattern_dict",
    "build_toy_weights",
    "NOISE_TARGETS",
]

TOY_VOCAB = 32
TOY_SEQ_LEN = 16
TOY_CLASSES = 4
_MIN_DIM = 10
_TEXTURE_SIGMA = 0.1
_ATTN_SHARPNESS = 8.0  # softmax score advantage of position 0
_FC_GAIN = 0.25

NOISE_TARGETS = ("last-fc",)


def toy_hidden_dim(dim: int) -> int:
    return 2 * dim


def toy_pattern_dict(num_layers: int) -> dict:
    """Architecture-pattern document for the toy naming scheme."""
    return {
        "num_layers": int(num_layers),
        "templates": {
            "Q": "layers.{layer}.attn.q",
            "K": "layers.{layer}.attn.k",
            "V": "layers.{layer}.attn.v",
            "O": "layers.{layer}.attn.o",
            "FC_IN": "layers.{layer}.fc.in",
            "FC_OUT": "layers.{layer}.fc.out",
        },
    }


def _constructed_weights(num_layers: int, dim: int, seed: int) -> dict[str, np.ndarray]:
    hidden = toy_hidden_dim(dim)
    rng_texture = np.random.default_rng((seed & 0xFFFFFFFFFFFFFFFF, 1))

    tok = np.zeros((TOY_VOCAB, dim))
    for v in range(TOY_VOCAB):
        tok[v, 4 + v % TOY_CLASSES] = 1.0
    if dim > _MIN_DIM:
        tok[:, _MIN_DIM:] = _TEXTURE_SIGMA * rng_texture.standard_normal(
            (TOY_VOCAB, dim - _MIN_DIM)
        )

    pos = np.zeros((TOY_SEQ_LEN, dim))
    pos[0, 8] = 1.0
    pos[:, 9] = 1.0

    # scores are q.k / sqrt(dim); g**2 / sqrt(dim) == _ATTN_SHARPNESS
    g = float(np.sqrt(_ATTN_SHARPNESS * np.sqrt(dim)))
    wq = np.zeros((dim, dim))
    wq[8, 9] = g
    wk = np.zeros((dim, dim))
    wk[8, 8] = g
    wv = np.zeros((dim, dim))
    wo = np.zeros((dim, dim))
    for c in range(TOY_CLASSES):
        wv[c, 4 + c] = 1.0
        wo[c, c] = 1.0

    fc_in = np.zeros((hidden, dim))
    fc_out = np.zeros((dim, hidden))
    for c in range(TOY_CLASSES):
        fc_in[c, c] = 1.0
        fc_out[c, c] = _FC_GAIN

    head = np.zeros((TOY_CLASSES, dim))
    for c in range(TOY_CLASSES):
        head[c, c] = 1.0

    out = {"embed.tok": tok, "embed.pos": pos}
    for layer in range(num_layers):
        out[f"layers.{layer}.attn.q"] = wq
        out[f"layers.{layer}.attn.k"] = wk
        out[f"layers.{layer}.attn.v"] = wv
        out[f"layers.{layer}.attn.o"] = wo
        out[f"layers.{layer}.fc.in"] = fc_in
        out[f"layers.{layer}.fc.out"] = fc_out
    out["head.cls"] = head
    return out


def _random_weights(num_layers: int, dim: int, seed: int) -> dict[str, np.ndarray]:
    hidden = toy_hidden_dim(dim)
    rng = np.random.default_rng((seed & 0xFFFFFFFFFFFFFFFF, 3))
    scale = 1.0 / np.sqrt(dim)
    out = {
        "embed.tok": 0.5 * rng.standard_normal((TOY_VOCAB, dim)),
        "embed.pos": 0.5 * rng.standard_normal((TOY_SEQ_LEN, dim)),
    }
    for layer in range(num_layers):
        for role in ("q", "k", "v", "o"):
            out[f"layers.{layer}.attn.{role}"] = scale * rng.standard_normal((dim, dim))
        out[f"layers.{layer}.fc.in"] = scale * rng.standard_normal((hidden, dim))
        out[f"layers.{layer}.fc.out"] = (1.0 / np.sqrt(hidden)) * rng.standard_normal(
            (dim, hidden)
        )
    out["head.cls"] = scale * rng.standard_normal((TOY_CLASSES, dim))
    return out


def build_toy_weights(
    num_layers: int,
    dim: int,
    seed: int = 0,
    noise_sigma: float = 0.0,
    noise_target: str | None = None,
    random_init: bool = False,
) -> ModelWeights:
    """Build a toy-model weight container.

    With ``noise_sigma > 0`` the ``noise_target`` weights (currently only
    ``"last-fc"``: the final layer's FC pair) are corrupted with seeded
    Gaussian noise.  ``random_init`` replaces the constructed model with
    untrained random weights of matching shapes.
    """
    if num_layers < 1:
        raise ValueError("num_layers must be >= 1")
    if dim < _MIN_DIM:
        raise ValueError(f"dim must be >= {_MIN_DIM} for the toy construction")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if noise_sigma > 0 and noise_target is None:
        noise_target = "last-fc"
    if noise_target is not None and noise_target not in NOISE_TARGETS:
        raise ValueError(f"noise_target must be one of {NOISE_TARGETS}, got {noise_target!r}")

    if random_init:
        arrays = _random_weights(num_layers, dim, seed)
    else:
        arrays = _constructed_weights(num_layers, dim, seed)

    if noise_sigma > 0:
        rng = np.random.default_rng((seed & 0xFFFFFFFFFFFFFFFF, 2))
        last = num_layers - 1
        for name in (f"layers.{last}.fc.in", f"layers.{last}.fc.out"):
            arrays[name] = arrays[name] + noise_sigma * rng.standard_normal(
                arrays[name].shape
            )

    entries = {name: WeightEntry.from_f64(arr, "F32") for name, arr in arrays.items()}
    metadata = {
        "arch": "toy-seqcls-v1",
        "layers": str(num_layers),
        "dim": str(dim),
        "hidden": str(toy_hidden_dim(dim)),
        "vocab": str(TOY_VOCAB),
        "seq_len": str(TOY_SEQ_LEN),
        "classes": str(TOY_CLASSES),
    }
    return ModelWeights(entries, metadata)
