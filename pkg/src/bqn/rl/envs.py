"""Desk-scale pixel environments.

Catch: a ball falls one row per step from a random column; a
three-pixel paddle on the bottom row moves left/stay/right. Catching
scores +1, missing -1, and the episode always lasts height-1 steps.
Because the paddle covers 3 of `width` columns wherever it sits, any
ball-blind policy catches with probability 3/width (~0.3 on the 10x10
grid), which pins the random baseline.

Gridworld: an agent walks toward a goal pixel past a hazard pixel,
+1 / -1 terminal rewards, with a step limit.
"""

from __future__ import annotations

import numpy as np

PADDLE_HALF = 1  # paddle spans center +- 1


class EpisodeOver(RuntimeError):
    """step() called on a finished episode before reset()."""


class CatchEnv:
    num_actions = 3  # left, stay, right

    def __init__(self, height: int = 10, width: int = 10, seed: int | None = None):
        if height < 5 or width < 5:
            raise ValueError(f"grid must be at least 5x5, got {height}x{width}")
        self.height = height
        self.width = width
        self.rng = np.random.default_rng(seed)
        self._ball_row = 0
        self._ball_col = 0
        self._paddle = width // 2
        self._done = True

    @property
    def obs_shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def reset(self) -> np.ndarray:
        self._ball_row = 0
        self._ball_col = int(self.rng.integers(self.width))
        self._paddle = self.width // 2
        self._done = False
        return self._frame()

    def step(self, action: int):
        if self._done:
            raise EpisodeOver("episode finished; call reset()")
        if action not in (0, 1, 2):
            raise ValueError(f"invalid action {action}")
        move = action - 1
        self._paddle = int(
            np.clip(self._paddle + move, PADDLE_HALF, self.width - 1 - PADDLE_HALF)
        )
        self._ball_row += 1
        reward = 0.0
        if self._ball_row == self.height - 1:
            self._done = True
            caught = abs(self._ball_col - self._paddle) <= PADDLE_HALF
            reward = 1.0 if caught else -1.0
        return self._frame(), reward, self._done

    def _frame(self) -> np.ndarray:
        frame = np.zeros((self.height, self.width), dtype=np.float64)
        frame[self._ball_row, self._ball_col] = 1.0
        lo = self._paddle - PADDLE_HALF
        frame[self.height - 1, lo : lo + 2 * PADDLE_HALF + 1] = 1.0
        return frame


class GridworldEnv:
    """Navigate to the goal corner; stepping on the hazard ends the episode."""

    num_actions = 4  # up, right, down, left

    _MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))

    def __init__(self, size: int = 7, seed: int | None = None):
        if size < 5:
            raise ValueError(f"grid must be at least 5x5, got {size}x{size}")
        self.size = size
        self.rng = np.random.default_rng(seed)
        self.goal = (size - 1, size - 1)
        self.hazard = (size // 2, size // 2)
        self.max_steps = 4 * size
        self._agent = (0, 0)
        self._steps = 0
        self._done = True

    @property
    def obs_shape(self) -> tuple[int, int]:
        return (self.size, self.size)

    def reset(self) -> np.ndarray:
        while True:
            pos = (int(self.rng.integers(self.size)), int(self.rng.integers(self.size)))
            if pos != self.goal and pos != self.hazard:
                break
        self._agent = pos
        self._steps = 0
        self._done = False
        return self._frame()

    def step(self, action: int):
        if self._done:
            raise EpisodeOver("episode finished; call reset()")
        if not 0 <= action < 4:
            raise ValueError(f"invalid action {action}")
        dr, dc = self._MOVES[action]
        r = int(np.clip(self._agent[0] + dr, 0, self.size - 1))
        c = int(np.clip(self._agent[1] + dc, 0, self.size - 1))
        self._agent = (r, c)
        self._steps += 1
        reward = 0.0
        if self._agent == self.goal:
            reward, self._done = 1.0, True
        elif self._agent == self.hazard:
            reward, self._done = -1.0, True
        elif self._steps >= self.max_steps:
            self._done = True
        return self._frame(), reward, self._done

    def _frame(self) -> np.ndarray:
        frame = np.zeros((self.size, self.size), dtype=np.float64)
        frame[self.goal] = 0.5
        frame[self.hazard] = 0.25
        frame[self._agent] = 1.0
        return frame


def make_env(name: str, size: int, seed: int | None = None):
    if name == "catch":
        return CatchEnv(height=size, width=size, seed=seed)
    if name == "gridworld":
        return GridworldEnv(size=size, seed=seed)
    raise ValueError(f"unknown environment {name!r} (catch, gridworld)")
