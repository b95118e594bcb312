"""Bundled synthetic classification set and the generator that produced it.

Each example is a 16-token sequence over a 32-token vocabulary; the label is
the class (token id mod 4) of the first token, and the sampler balances the
four classes exactly.  Predicting the label from the last position therefore
requires routing information from position 0, which is what the toy
classifier's attention is built to do.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

__all__ = ["VOCAB", "SEQ_LEN", "CLASSES", "generate_dataset", "load_dataset"]

VOCAB = 32
SEQ_LEN = 16
CLASSES = 4

_BUNDLED = "toy_eval_v1.json"
DEFAULT_SEED = 2024
DEFAULT_SIZE = 512


def generate_dataset(num_examples: int = DEFAULT_SIZE, seed: int = DEFAULT_SEED):
    """Deterministic sampler behind the bundled set; kept for reproducibility."""
    rng = np.random.default_rng(seed)
    tokens = rng.integers(0, VOCAB, size=(num_examples, SEQ_LEN))
    for i in range(num_examples):
        cls = i % CLASSES
        tokens[i, 0] = CLASSES * rng.integers(0, VOCAB // CLASSES) + cls
    labels = tokens[:, 0] % CLASSES
    return tokens.astype(np.int64), labels.astype(np.int64)


def load_dataset(path=None) -> tuple[np.ndarray, np.ndarray]:
    """Load (tokens, labels); defaults to the bundled file."""
    if path is None:
        ref = resources.files("toyeval") / "data" / _BUNDLED
        doc = json.loads(ref.read_text(encoding="utf-8"))
    else:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    tokens = np.asarray(doc["tokens"], dtype=np.int64)
    labels = np.asarray(doc["labels"], dtype=np.int64)
    if tokens.ndim != 2 or tokens.shape[1] != doc.get("seq_len", SEQ_LEN):
        raise ValueError("dataset tokens have an unexpected shape")
    if labels.shape != (tokens.shape[0],):
        raise ValueError("dataset labels do not match the token count")
    return tokens, labels
