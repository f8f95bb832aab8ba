"""Deterministic hashed unigram+bigram text embeddings."""

import logging

import numpy as np

from .. import kernels

log = logging.getLogger(__name__)


def _normalize(rows: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("...i,...i->...", rows, rows))
    safe = np.where(norms > 0, norms, 1.0)
    return rows / safe[..., None] if rows.ndim == 2 else rows / safe


def embed_text(tokens, d: int, seed: int) -> np.ndarray:
    """L2-normalized signed-hash embedding of one token sequence.

    Every unigram and bigram hashes to a (dimension, sign) pair. An empty
    sequence yields the zero vector.
    """
    if d < 8:
        raise ValueError(f"embedding dimension must be >= 8, got {d}")
    tokens = np.ascontiguousarray(tokens, dtype=np.int64)
    if tokens.size == 0:
        log.debug("empty token sequence embedded as the zero vector")
        return np.zeros(d)
    return _normalize(kernels.embed_counts(tokens, int(d), int(seed)))


def embed_many(docs, d: int, seed: int) -> np.ndarray:
    """Row-wise :func:`embed_text` over a list of token sequences."""
    if d < 8:
        raise ValueError(f"embedding dimension must be >= 8, got {d}")
    lengths = np.array([len(t) for t in docs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    flat = (
        np.ascontiguousarray(np.concatenate([np.asarray(t, dtype=np.int64) for t in docs]))
        if len(docs) and offsets[-1] else np.zeros(0, dtype=np.int64)
    )
    return _normalize(kernels.embed_counts_batch(flat, offsets, int(d), int(seed)))
