"""Accuracy, token-level F1 and span-level F1 with BIO decoding.

Tag ids: 0 is Outside; entity type ``e`` uses ``1 + 2e`` for B and ``2 + 2e`` for I.
"""

from __future__ import annotations

import numpy as np

from ..errors import LayoutError

OUTSIDE = 0


def _pair(preds, golds):
    preds = np.asarray(preds)
    golds = np.asarray(golds)
    if preds.shape != golds.shape:
        raise LayoutError(f"length mismatch: {preds.shape} vs {golds.shape}")
    return preds, golds


def _f1(tp, n_pred, n_gold) -> float:
    if n_pred == 0 and n_gold == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision, recall = tp / n_pred, tp / n_gold
    return 2 * precision * recall / (precision + recall)


def accuracy(preds, golds) -> float:
    preds, golds = _pair(preds, golds)
    if preds.size == 0:
        return 0.0
    return float(np.mean(preds == golds))


def token_f1(preds, golds, outside: int = OUTSIDE) -> float:
    """Micro F1 over tokens whose gold or predicted tag is not Outside."""
    preds, golds = _pair(preds, golds)
    tp = int(np.sum((preds == golds) & (golds != outside)))
    return _f1(tp, int(np.sum(preds != outside)), int(np.sum(golds != outside)))


def span_f1(pred_spans, gold_spans) -> float:
    """Exact-match F1 over ``(start, end, type)`` spans.

    Either flat span lists, or one span list per sequence (equal counts).
    """
    pred, gold = _span_set(pred_spans), _span_set(gold_spans)
    if _per_sequence(pred_spans) or _per_sequence(gold_spans):
        if len(pred_spans) != len(gold_spans):
            raise LayoutError("span lists cover a different number of sequences")
    return _f1(len(pred & gold), len(pred), len(gold))


def _per_sequence(spans) -> bool:
    return any(not (len(s) == 3 and all(np.isscalar(v) for v in s)) for s in spans)


def _span_set(spans) -> set:
    if not _per_sequence(spans):
        return {tuple(int(v) for v in s) for s in spans}
    return {(i,) + tuple(int(v) for v in s) for i, seq in enumerate(spans) for s in seq}


def tag_type(tag: int) -> int:
    return (tag - 1) // 2


def is_begin(tag: int) -> bool:
    return tag > 0 and tag % 2 == 1


def bio_decode(tags) -> list[tuple[int, int, int]]:
    """Spans ``(start, end_exclusive, type)``; a stray I-X opens a new span."""
    spans = []
    start, cur = None, None
    for i, t in enumerate(int(v) for v in tags):
        if t == OUTSIDE:
            if start is not None:
                spans.append((start, i, cur))
            start, cur = None, None
            continue
        etype = tag_type(t)
        if is_begin(t) or start is None or etype != cur:
            if start is not None:
                spans.append((start, i, cur))
            start, cur = i, etype
    if start is not None:
        spans.append((start, len(tags), cur))
    return spans


def bio_encode(spans, length: int) -> np.ndarray:
    tags = np.zeros(length, dtype=np.int64)
    for start, end, etype in spans:
        tags[start] = 1 + 2 * etype
        tags[start + 1:end] = 2 + 2 * etype
    return tags
