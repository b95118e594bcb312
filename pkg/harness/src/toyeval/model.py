"""The toy transformer classifier and its batched evaluation loop.

Architecture (matching the fixture-generator naming scheme):

    x = embed.tok[tokens] + embed.pos
    per layer: x += softmax(q k^T / sqrt(d)) v @ o^T          (single head)
               x += relu(x @ fc.in^T) @ fc.out^T
    logits = x[last position] @ head.cls^T

All forward arithmetic is float64, so metrics are deterministic for a given
weights file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = ["ArchitectureError", "ToyClassifier", "evaluate_metrics"]

_LAYER_RE = re.compile(r"^layers\.(\d+)\.attn\.q$")


class ArchitectureError(Exception):
    """The weights do not fit the toy classifier architecture."""


@dataclass(frozen=True)
class _Block:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    fc_in: np.ndarray
    fc_out: np.ndarray


class ToyClassifier:
    def __init__(self, tok, pos, blocks, head):
        self.tok = tok
        self.pos = pos
        self.blocks = blocks
        self.head = head
        self.dim = tok.shape[1]

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "ToyClassifier":
        def need(name, shape=None):
            if name not in tensors:
                raise ArchitectureError(f"missing weight {name!r}")
            arr = tensors[name]
            if shape is not None and arr.shape != shape:
                raise ArchitectureError(
                    f"weight {name!r} has shape {arr.shape}, expected {shape}"
                )
            return arr

        tok = need("embed.tok")
        if tok.ndim != 2:
            raise ArchitectureError("embed.tok must be 2-D")
        dim = tok.shape[1]
        pos = need("embed.pos")
        if pos.ndim != 2 or pos.shape[1] != dim:
            raise ArchitectureError("embed.pos does not match the embedding width")

        layer_ids = sorted(
            int(m.group(1)) for m in (_LAYER_RE.match(n) for n in tensors) if m
        )
        if not layer_ids:
            raise ArchitectureError("no attention layers found")
        if layer_ids != list(range(len(layer_ids))):
            raise ArchitectureError(f"layer indices are not contiguous: {layer_ids}")

        blocks = []
        for layer in layer_ids:
            wq = need(f"layers.{layer}.attn.q", (dim, dim))
            wk = need(f"layers.{layer}.attn.k", (dim, dim))
            wv = need(f"layers.{layer}.attn.v", (dim, dim))
            wo = need(f"layers.{layer}.attn.o", (dim, dim))
            fc_in = need(f"layers.{layer}.fc.in")
            if fc_in.ndim != 2 or fc_in.shape[1] != dim:
                raise ArchitectureError(f"layers.{layer}.fc.in does not read the model width")
            fc_out = need(f"layers.{layer}.fc.out", (dim, fc_in.shape[0]))
            blocks.append(_Block(wq, wk, wv, wo, fc_in, fc_out))

        head = need("head.cls")
        if head.ndim != 2 or head.shape[1] != dim:
            raise ArchitectureError("head.cls does not match the model width")
        return cls(tok=tok, pos=pos, blocks=blocks, head=head)

    def logits(self, tokens: np.ndarray) -> np.ndarray:
        """(batch, seq_len) int tokens -> (batch, classes) logits."""
        tokens = np.asarray(tokens)
        if tokens.ndim != 2:
            raise ArchitectureError("token batch must be 2-D")
        seq_len = tokens.shape[1]
        if seq_len > self.pos.shape[0]:
            raise ArchitectureError(
                f"sequence length {seq_len} exceeds the position table "
                f"({self.pos.shape[0]})"
            )
        if int(tokens.max()) >= self.tok.shape[0] or int(tokens.min()) < 0:
            raise ArchitectureError("token id outside the embedding table")

        x = self.tok[tokens] + self.pos[None, :seq_len, :]
        scale = 1.0 / np.sqrt(self.dim)
        for blk in self.blocks:
            q = x @ blk.wq.T
            k = x @ blk.wk.T
            v = x @ blk.wv.T
            scores = np.einsum("btd,bsd->bts", q, k) * scale
            scores -= scores.max(axis=-1, keepdims=True)
            attn = np.exp(scores)
            attn /= attn.sum(axis=-1, keepdims=True)
            x = x + np.einsum("bts,bsd->btd", attn, v) @ blk.wo.T
            hidden = np.maximum(x @ blk.fc_in.T, 0.0)
            x = x + hidden @ blk.fc_out.T
        return x[:, -1, :] @ self.head.T


def evaluate_metrics(
    model: ToyClassifier, tokens: np.ndarray, labels: np.ndarray, batch_size: int = 64
) -> dict[str, float]:
    """Mean accuracy and cross-entropy loss over the dataset."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = tokens.shape[0]
    correct = 0
    total_loss = 0.0
    for start in range(0, n, batch_size):
        batch = tokens[start : start + batch_size]
        y = labels[start : start + batch_size]
        z = model.logits(batch)
        z = z - z.max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        total_loss += float(-logp[np.arange(len(y)), y].sum())
        correct += int((np.argmax(z, axis=-1) == y).sum())
    return {"accuracy": correct / n, "loss": total_loss / n}
