"""Sign values packed one bit per element into 64-bit words.

A BitTensor stores a tensor of {-1, +1} values row-major: the leading
axes index rows, the innermost axis is the row, and each row is padded
to whole 64-bit words with the pad bits forced to zero. Bit 1 encodes
+1 and bit 0 encodes -1.
"""

from __future__ import annotations

import math

import numpy as np

from bqn import kernels


def sign(x: float) -> int:
    """Binarize a real number: +1 if x >= 0, else -1."""
    if not math.isfinite(x):
        raise ValueError(f"sign() requires a finite input, got {x!r}")
    return 1 if x >= 0 else -1


def sign_array(x: np.ndarray) -> np.ndarray:
    """Elementwise sign with the same x >= 0 -> +1 convention, as float64."""
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("sign_array() requires finite inputs")
    return np.where(x >= 0, 1.0, -1.0)


class BitTensor:
    """Packed carrier for sign tensors.

    Attributes:
        shape: logical tensor shape.
        words: (rows, words_per_row) uint64 array, rows = prod(shape[:-1]).
    """

    __slots__ = ("shape", "words")

    def __init__(self, shape: tuple[int, ...], words: np.ndarray):
        shape = tuple(int(s) for s in shape)
        if len(shape) == 0 or any(s <= 0 for s in shape):
            raise ValueError(f"invalid BitTensor shape {shape}")
        rows = int(np.prod(shape[:-1], dtype=np.int64)) if len(shape) > 1 else 1
        expected_words = kernels.words_per_row(shape[-1])
        words = np.asarray(words, dtype=np.uint64)
        if words.shape != (rows, expected_words):
            raise ValueError(
                f"words array has shape {words.shape}, "
                f"expected {(rows, expected_words)} for tensor shape {shape}"
            )
        self.shape = shape
        self.words = words

    @property
    def row_bits(self) -> int:
        return self.shape[-1]

    @property
    def n_rows(self) -> int:
        return self.words.shape[0]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def payload_bytes(self) -> int:
        return self.words.size * 8

    @classmethod
    def from_signs(cls, values: np.ndarray) -> "BitTensor":
        """Pack a tensor of {-1, +1} values. Rejects anything else."""
        values = np.asarray(values)
        if values.size == 0:
            raise ValueError("cannot pack an empty tensor")
        flat = values.reshape(-1)
        if not np.all(np.abs(flat) == 1):
            bad = flat[np.abs(flat) != 1][0]
            raise ValueError(f"entries must be -1 or +1, got {bad!r}")
        shape = values.shape if values.ndim > 0 else (1,)
        bits = (values.reshape(-1, shape[-1]) > 0).astype(np.uint8)
        return cls(shape, kernels.pack_rows(bits))

    def to_signs(self) -> np.ndarray:
        """Unpack back to a float64 tensor of {-1.0, +1.0}."""
        bits = kernels.unpack_rows(self.words, self.row_bits)
        return (bits.astype(np.float64) * 2.0 - 1.0).reshape(self.shape)

    def pad_bits_zero(self) -> bool:
        """Check the invariant that bits past each row length are zero."""
        n = self.row_bits
        rem = n % kernels.WORD_BITS
        if rem == 0:
            return True
        mask = np.uint64((1 << rem) - 1)
        return bool(np.all(self.words[:, -1] & ~mask == 0))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.shape, self.words.tobytes()))

    def __repr__(self):
        return f"BitTensor(shape={self.shape})"


def pack_bits(signs: np.ndarray) -> BitTensor:
    """Pack a vector (or tensor) of {-1, +1} sign values."""
    return BitTensor.from_signs(signs)


def unpack_bits(tensor: BitTensor) -> np.ndarray:
    return tensor.to_signs()


def binary_dot(a: BitTensor, b: BitTensor) -> int:
    """Exact inner product of two packed sign vectors.

    Computed as n - 2 * popcount(a XOR b), which equals
    2 * popcount(XNOR restricted to n bits) - n because both rows carry
    zero pad bits.
    """
    if a.n_rows != 1 or b.n_rows != 1:
        raise ValueError("binary_dot operates on single-row BitTensors")
    if a.row_bits != b.row_bits:
        raise ValueError(
            f"length mismatch: {a.row_bits} vs {b.row_bits} logical bits"
        )
    return int(kernels.sign_dot_rows(a.words, b.words, a.row_bits)[0])
