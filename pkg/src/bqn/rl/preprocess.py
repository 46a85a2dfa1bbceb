"""Frame preprocessing: grayscale, resize, and 4-frame stacking.

The state tensor has shape (H', W', 4) with channels ordered oldest to
newest; missing history right after reset is padded by repeating the
first frame. Values stay in [0, 1].
"""

from __future__ import annotations

from collections import deque

import numpy as np

STACK_DEPTH = 4
GRAY_COEFFS = (0.299, 0.587, 0.114)


class FrameError(ValueError):
    pass


def _to_gray(frame: np.ndarray, coeffs) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3 and frame.shape[2] == 3:
        frame = frame @ np.asarray(coeffs, dtype=np.float64)
    if frame.ndim != 2:
        raise FrameError(f"expected HxW or HxWx3 frame, got shape {frame.shape}")
    if not np.all(np.isfinite(frame)):
        raise FrameError("frame contains non-finite values")
    if frame.min() < 0.0 or frame.max() > 1.0:
        raise FrameError("frame values must lie in [0, 1]")
    return frame


def _resize(frame: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    h, w = frame.shape
    th, tw = target_hw
    if (h, w) == (th, tw):
        return frame
    rows = (np.arange(th) * h // th).astype(np.intp)
    cols = (np.arange(tw) * w // tw).astype(np.intp)
    return frame[np.ix_(rows, cols)]


def stack_frames(frames, target_hw, coeffs=GRAY_COEFFS) -> np.ndarray:
    """Stack the most recent frames into (H', W', 4), oldest first."""
    if len(frames) == 0:
        raise FrameError("need at least one frame")
    processed = [_resize(_to_gray(f, coeffs), target_hw) for f in frames[-STACK_DEPTH:]]
    while len(processed) < STACK_DEPTH:
        processed.insert(0, processed[0])
    return np.stack(processed, axis=-1)


class Preprocessor:
    """Stateful wrapper that maintains the frame history for one episode."""

    def __init__(self, target_hw: tuple[int, int], coeffs=GRAY_COEFFS):
        self.target_hw = tuple(target_hw)
        self.coeffs = coeffs
        self._history: deque = deque(maxlen=STACK_DEPTH)

    @property
    def state_shape(self) -> tuple[int, int, int]:
        return (*self.target_hw, STACK_DEPTH)

    def reset(self, frame: np.ndarray) -> np.ndarray:
        self._history.clear()
        return self.push(frame)

    def push(self, frame: np.ndarray) -> np.ndarray:
        self._history.append(np.asarray(frame))
        return stack_frames(list(self._history), self.target_hw, self.coeffs)
