"""Experience replay and exploration schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def clip_reward(r: float) -> float:
    """Map any reward to {-1, 0, +1} for training."""
    if r > 0:
        return 1.0
    if r < 0:
        return -1.0
    return 0.0


@dataclass
class Transition:
    s: np.ndarray
    a: int
    r: float
    s_next: np.ndarray
    done: bool

    def __post_init__(self):
        if self.r not in (-1.0, 0.0, 1.0):
            raise ValueError(f"stored reward must be in {{-1, 0, +1}}, got {self.r}")


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform random sampling."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng
        self._storage: list[Transition | None] = [None] * capacity
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, transition: Transition):
        self._storage[self._next] = transition
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, n: int) -> list[Transition]:
        if n > self._size:
            raise ValueError(f"cannot sample {n} from buffer of size {self._size}")
        idx = self.rng.integers(0, self._size, size=n)
        return [self._storage[i] for i in idx]

    def contents(self) -> list[Transition]:
        """Transitions oldest to newest (test hook)."""
        if self._size < self.capacity:
            return [t for t in self._storage[: self._size]]
        return self._storage[self._next :] + self._storage[: self._next]


@dataclass
class EpsilonSchedule:
    """Linear decay from start to end over decay_steps, then constant."""

    start: float = 1.0
    end: float = 0.1
    decay_steps: int = 1_000_000

    def __post_init__(self):
        if self.decay_steps < 1:
            raise ValueError("decay_steps must be >= 1")
        if not (0.0 <= self.end <= self.start <= 1.0):
            raise ValueError("need 0 <= end <= start <= 1")

    def value(self, step: int) -> float:
        frac = min(max(step, 0), self.decay_steps) / self.decay_steps
        return self.start + (self.end - self.start) * frac
