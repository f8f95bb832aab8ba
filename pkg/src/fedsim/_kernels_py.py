"""Numpy fallback for the compiled kernels; results are bit-identical."""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
BIGRAM_SALT = np.uint64(0xD6E8FEB86659FD93)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S63 = (np.uint64(s) for s in (30, 27, 31, 63))


def _fmix(z):
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


def _sm(x):
    return _fmix(x + GOLDEN)


def mask_stream(seed, n, bits):
    # uint64 overflow wraps, which is exactly what the generator relies on
    with np.errstate(over="ignore"):
        k = np.arange(1, n + 1, dtype=np.uint64)
        out = _fmix(np.uint64(seed) + k * GOLDEN)
    if bits < 64:
        out &= np.uint64((1 << bits) - 1)
    return out


def _accumulate(tok, base, d, row):
    with np.errstate(over="ignore"):
        h = _sm(base ^ tok)
        if tok.size > 1:
            a = _sm(base ^ tok[:-1] ^ BIGRAM_SALT)
            h = np.concatenate([h, _sm(a ^ tok[1:])])
    idx = (h % np.uint64(d)).astype(np.intp)
    signs = np.where((h >> _S63) == 1, 1.0, -1.0)
    np.add.at(row, idx, signs)


def embed_counts(tokens, d, seed):
    out = np.zeros(d, dtype=np.float64)
    tok = np.asarray(tokens, dtype=np.int64).astype(np.uint64)
    if tok.size:
        with np.errstate(over="ignore"):
            base = _sm(np.uint64(seed))
        _accumulate(tok, base, d, out)
    return out


def embed_counts_batch(tokens, offsets, d, seed):
    offsets = np.asarray(offsets, dtype=np.int64)
    tok = np.asarray(tokens, dtype=np.int64).astype(np.uint64)
    out = np.zeros((len(offsets) - 1, d), dtype=np.float64)
    with np.errstate(over="ignore"):
        base = _sm(np.uint64(seed))
    for j in range(len(offsets) - 1):
        lo, hi = offsets[j], offsets[j + 1]
        if hi > lo:
            _accumulate(tok[lo:hi], base, d, out[j])
    return out
