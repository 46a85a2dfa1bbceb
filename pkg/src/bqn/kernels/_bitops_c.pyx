# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the bit-packing / XNOR-popcount kernels.

Mirrors bqn.kernels._bitops_py exactly; see that module for the bit
layout contract.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    static inline unsigned long long bqn_popcount64(unsigned long long x) {
        return (unsigned long long)__builtin_popcountll(x);
    }
    #else
    static inline unsigned long long bqn_popcount64(unsigned long long x) {
        x = x - ((x >> 1) & 0x5555555555555555ULL);
        x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL);
        x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0FULL;
        return (x * 0x0101010101010101ULL) >> 56;
    }
    #endif
    """
    unsigned long long bqn_popcount64(unsigned long long x) nogil

WORD_BITS = 64


def words_per_row(n_bits):
    return (int(n_bits) + 63) // 64


def pack_rows(bits):
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] src = np.ascontiguousarray(
        bits, dtype=np.uint8
    )
    cdef Py_ssize_t rows = src.shape[0]
    cdef Py_ssize_t n = src.shape[1]
    cdef Py_ssize_t n_words = (n + 63) // 64
    cdef cnp.ndarray[cnp.uint64_t, ndim=2, mode="c"] out = np.zeros(
        (rows, n_words), dtype=np.uint64
    )
    cdef Py_ssize_t r, i
    cdef unsigned long long word
    with nogil:
        for r in range(rows):
            for i in range(n):
                if src[r, i]:
                    out[r, i >> 6] |= (<unsigned long long>1) << (i & 63)
    return out


def unpack_rows(words, n_bits):
    cdef cnp.ndarray[cnp.uint64_t, ndim=2, mode="c"] src = np.ascontiguousarray(
        words, dtype=np.uint64
    )
    cdef Py_ssize_t rows = src.shape[0]
    cdef Py_ssize_t n = int(n_bits)
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] out = np.empty(
        (rows, n), dtype=np.uint8
    )
    cdef Py_ssize_t r, i
    with nogil:
        for r in range(rows):
            for i in range(n):
                out[r, i] = <cnp.uint8_t>((src[r, i >> 6] >> (i & 63)) & 1)
    return out


def sign_dot_rows(a, b, n_bits):
    cdef cnp.ndarray[cnp.uint64_t, ndim=2, mode="c"] aa = np.ascontiguousarray(
        a, dtype=np.uint64
    )
    cdef cnp.ndarray[cnp.uint64_t, ndim=2, mode="c"] bb = np.ascontiguousarray(
        b, dtype=np.uint64
    )
    cdef Py_ssize_t rows = aa.shape[0]
    cdef Py_ssize_t n_words = aa.shape[1]
    cdef long long n = int(n_bits)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] out = np.empty(
        rows, dtype=np.int64
    )
    cdef Py_ssize_t r, w
    cdef unsigned long long acc
    with nogil:
        for r in range(rows):
            acc = 0
            for w in range(n_words):
                acc += bqn_popcount64(aa[r, w] ^ bb[r, w])
            out[r] = n - 2 * <long long>acc
    return out


def sign_matmul(a, b, n_bits):
    cdef cnp.ndarray[cnp.uint64_t, ndim=2, mode="c"] aa = np.ascontiguousarray(
        a, dtype=np.uint64
    )
    cdef cnp.ndarray[cnp.uint64_t, ndim=2, mode="c"] bb = np.ascontiguousarray(
        b, dtype=np.uint64
    )
    cdef Py_ssize_t m = aa.shape[0]
    cdef Py_ssize_t k = bb.shape[0]
    cdef Py_ssize_t n_words = aa.shape[1]
    cdef long long n = int(n_bits)
    cdef cnp.ndarray[cnp.int64_t, ndim=2, mode="c"] out = np.empty(
        (m, k), dtype=np.int64
    )
    cdef Py_ssize_t i, j, w
    cdef unsigned long long acc
    with nogil:
        for i in range(m):
            for j in range(k):
                acc = 0
                for w in range(n_words):
                    acc += bqn_popcount64(aa[i, w] ^ bb[j, w])
                out[i, j] = n - 2 * <long long>acc
    return out
