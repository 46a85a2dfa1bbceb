"""Patch extraction and the transposed-convolution gradient path.

Patch vectors are ordered (kernel_h, kernel_w, channels) row-major;
weight tensors (out, kh, kw, in_c) flatten to the same order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """(B, H, W, C) -> (B, OH, OW, kh*kw*C) patch matrix."""
    windows = sliding_window_view(x, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (B, OH, OW, C, kh, kw)
    windows = windows.transpose(0, 1, 2, 4, 5, 3)  # (B, OH, OW, kh, kw, C)
    b, oh, ow = windows.shape[:3]
    return np.ascontiguousarray(windows.reshape(b, oh, ow, kh * kw * x.shape[3]))


def conv_forward(x: np.ndarray, weights: np.ndarray, stride: int) -> np.ndarray:
    """Valid cross-correlation. weights: (out_c, kh, kw, in_c)."""
    out_c, kh, kw, _ = weights.shape
    cols = im2col(x, kh, kw, stride)
    return cols @ weights.reshape(out_c, -1).T


def conv_weight_grad(
    cols: np.ndarray, grad_out: np.ndarray, weight_shape: tuple[int, ...]
) -> np.ndarray:
    """Weight gradient from cached patches. grad_out: (B, OH, OW, out_c)."""
    fan = cols.shape[-1]
    out_c = grad_out.shape[-1]
    flat_cols = cols.reshape(-1, fan)
    flat_grad = grad_out.reshape(-1, out_c)
    return (flat_grad.T @ flat_cols).reshape(weight_shape)


def conv_input_grad(
    grad_out: np.ndarray,
    weights: np.ndarray,
    input_hw: tuple[int, int, int],
    stride: int,
) -> np.ndarray:
    """Gradient w.r.t. the conv input, via dilate + pad + flipped correlation."""
    b, oh, ow, out_c = grad_out.shape
    _, kh, kw, in_c = weights.shape
    h, w, _ = input_hw
    if stride > 1:
        dilated = np.zeros(
            (b, (oh - 1) * stride + 1, (ow - 1) * stride + 1, out_c),
            dtype=grad_out.dtype,
        )
        dilated[:, ::stride, ::stride] = grad_out
    else:
        dilated = grad_out
    padded = np.pad(dilated, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
    cols = im2col(padded, kh, kw, 1)
    flipped = weights[:, ::-1, ::-1, :]
    # Patch order (kh, kw, out_c) must match the flattened cols axis.
    wmat = flipped.transpose(1, 2, 0, 3).reshape(kh * kw * out_c, in_c)
    grad = cols @ wmat
    out = np.zeros((b, h, w, in_c), dtype=grad_out.dtype)
    out[:, : grad.shape[1], : grad.shape[2]] = grad
    return out
