"""Pure-numpy backend for the bit-packing / XNOR-popcount kernels.

Bit layout: element i of a row lives in word i // 64 at bit position
i % 64 (LSB first), bit value 1 for +1 and 0 for -1. Pad bits past the
row length are zero, so a sign dot product needs no masking:

    dot(a, b) = n - 2 * popcount(a XOR b)

because XOR of two zero pad regions stays zero.
"""

import numpy as np

WORD_BITS = 64

_SHIFTS = np.arange(WORD_BITS, dtype=np.uint64)
_BYTE_POPCOUNT = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)

_HAS_BITWISE_COUNT = hasattr(np, "bitwise_count")


def words_per_row(n_bits: int) -> int:
    return (int(n_bits) + WORD_BITS - 1) // WORD_BITS


def _popcount_words(words: np.ndarray) -> np.ndarray:
    """Per-element popcount of a uint64 array."""
    if _HAS_BITWISE_COUNT:
        return np.bitwise_count(words)
    as_bytes = words.view(np.uint8).reshape(words.shape + (8,))
    return _BYTE_POPCOUNT[as_bytes].sum(axis=-1, dtype=np.int64)


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (rows, n) array of {0, 1} bits into (rows, words) uint64."""
    bits = np.ascontiguousarray(bits, dtype=np.uint64)
    rows, n = bits.shape
    n_words = words_per_row(n)
    padded = np.zeros((rows, n_words * WORD_BITS), dtype=np.uint64)
    padded[:, :n] = bits
    padded = padded.reshape(rows, n_words, WORD_BITS)
    return np.bitwise_or.reduce(padded << _SHIFTS, axis=2)


def unpack_rows(words: np.ndarray, n_bits: int) -> np.ndarray:
    """Inverse of pack_rows; returns (rows, n_bits) uint8 of {0, 1}."""
    words = np.asarray(words, dtype=np.uint64)
    rows = words.shape[0]
    expanded = (words[:, :, None] >> _SHIFTS) & np.uint64(1)
    return expanded.reshape(rows, -1)[:, :n_bits].astype(np.uint8)


def sign_dot_rows(a: np.ndarray, b: np.ndarray, n_bits: int) -> np.ndarray:
    """Row-wise sign dot products of two packed (rows, words) arrays."""
    mismatches = _popcount_words(np.bitwise_xor(a, b)).sum(axis=-1, dtype=np.int64)
    return n_bits - 2 * mismatches


def sign_matmul(a: np.ndarray, b: np.ndarray, n_bits: int) -> np.ndarray:
    """All-pairs sign dot products: (m, words) x (k, words) -> (m, k) int64."""
    m = a.shape[0]
    k = b.shape[0]
    out = np.empty((m, k), dtype=np.int64)
    # Chunk the broadcast XOR so intermediates stay small.
    chunk = max(1, (1 << 22) // max(1, k * a.shape[1]))
    for start in range(0, m, chunk):
        stop = min(m, start + chunk)
        xored = np.bitwise_xor(a[start:stop, None, :], b[None, :, :])
        out[start:stop] = n_bits - 2 * _popcount_words(xored).sum(
            axis=-1, dtype=np.int64
        )
    return out
