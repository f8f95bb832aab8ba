# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Must stay bit-identical to ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t BIGRAM_SALT = 0xD6E8FEB86659FD93ULL


cdef inline uint64_t fmix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t sm(uint64_t x) nogil:
    return fmix(x + GOLDEN)


def mask_stream(uint64_t seed, Py_ssize_t n, int bits):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef uint64_t keep = 0xFFFFFFFFFFFFFFFFULL if bits >= 64 else ((<uint64_t>1) << bits) - 1
    cdef Py_ssize_t k
    with nogil:
        for k in range(n):
            out[k] = fmix(seed + <uint64_t>(k + 1) * GOLDEN) & keep
    return out


cdef void _embed_into(const int64_t[:] tok, Py_ssize_t lo, Py_ssize_t hi,
                      uint64_t base, Py_ssize_t d, double[:] row) nogil:
    cdef Py_ssize_t i
    cdef uint64_t h, a
    for i in range(lo, hi):
        h = sm(base ^ <uint64_t>tok[i])
        row[<Py_ssize_t>(h % <uint64_t>d)] += 1.0 if (h >> 63) else -1.0
    for i in range(lo, hi - 1):
        a = sm(base ^ <uint64_t>tok[i] ^ BIGRAM_SALT)
        h = sm(a ^ <uint64_t>tok[i + 1])
        row[<Py_ssize_t>(h % <uint64_t>d)] += 1.0 if (h >> 63) else -1.0


def embed_counts(const int64_t[:] tokens, Py_ssize_t d, uint64_t seed):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(d, dtype=np.float64)
    cdef double[:] row = out
    cdef uint64_t base = sm(seed)
    with nogil:
        _embed_into(tokens, 0, tokens.shape[0], base, d, row)
    return out


def embed_counts_batch(const int64_t[:] tokens, const int64_t[:] offsets,
                       Py_ssize_t d, uint64_t seed):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, :] view = out
    cdef uint64_t base = sm(seed)
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            _embed_into(tokens, offsets[j], offsets[j + 1], base, d, view[j])
    return out
