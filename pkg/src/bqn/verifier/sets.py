"""Verification queries: input sets, output properties, verdicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_L1 = "l1"
NORM_LINF = "linf"
NORM_HAMMING = "hamming"
NORMS = (NORM_L1, NORM_LINF, NORM_HAMMING)


@dataclass
class InputSet:
    """A perturbation ball around a center point, intersected with a box.

    norm 'l1' / 'linf': continuous ball of radius epsilon, box bounds
    applied per element (pixels default to [0, 1]).
    norm 'hamming': the center is a {-1, +1} vector and epsilon is the
    integer flip budget; used for fully binary toy inputs.
    An optional mask restricts which entries may be perturbed at all.
    """

    center: np.ndarray
    epsilon: float
    norm: str = NORM_LINF
    box: tuple[float, float] = (0.0, 1.0)
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        lo, hi = self.box
        if lo > hi:
            raise ValueError(f"empty box {self.box}")
        if self.norm == NORM_HAMMING:
            if not np.all(np.abs(self.center) == 1):
                raise ValueError("hamming input sets need a +-1 center")
        elif np.any(self.center < lo - 1e-12) or np.any(self.center > hi + 1e-12):
            raise ValueError("center must lie inside the box")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.center.shape:
                raise ValueError("mask shape must match center shape")

    @property
    def flat_center(self) -> np.ndarray:
        return self.center.reshape(-1)

    def flat_mask(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.flat_center.size, dtype=bool)
        return self.mask.reshape(-1)

    def element_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-element interval enclosure of the set (box relaxation)."""
        x0 = self.flat_center
        mask = self.flat_mask()
        if self.norm == NORM_HAMMING:
            radius = 1.0 if self.epsilon >= 1 else 0.0
            lo = np.where(mask, x0 - 2 * radius * (x0 > 0), x0)
            hi = np.where(mask, x0 + 2 * radius * (x0 < 0), x0)
            return lo, hi
        lo = np.where(mask, x0 - self.epsilon, x0)
        hi = np.where(mask, x0 + self.epsilon, x0)
        return np.maximum(lo, self.box[0]), np.minimum(hi, self.box[1])

    def contains(self, x: np.ndarray, tol: float = 1e-6) -> bool:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        x0 = self.flat_center
        if x.shape != x0.shape:
            return False
        mask = self.flat_mask()
        if np.any(np.abs((x - x0)[~mask]) > tol):
            return False
        if self.norm == NORM_HAMMING:
            if not np.all(np.abs(np.abs(x) - 1) <= tol):
                return False
            return int(np.sum(np.abs(x - x0) > tol)) <= int(self.epsilon)
        if np.any(x < self.box[0] - tol) or np.any(x > self.box[1] + tol):
            return False
        delta = x - x0
        if self.norm == NORM_LINF:
            return bool(np.max(np.abs(delta), initial=0.0) <= self.epsilon + tol)
        return bool(np.sum(np.abs(delta)) <= self.epsilon + tol)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw a point of the set (for Monte Carlo soundness checks)."""
        x0 = self.flat_center
        mask = self.flat_mask()
        n = int(mask.sum())
        delta = np.zeros_like(x0)
        if self.norm == NORM_HAMMING:
            flips = rng.integers(0, int(self.epsilon) + 1)
            idx = rng.choice(np.flatnonzero(mask), size=min(flips, n), replace=False)
            x = x0.copy()
            x[idx] = -x[idx]
            return x.reshape(self.center.shape)
        if self.norm == NORM_LINF:
            delta[mask] = rng.uniform(-self.epsilon, self.epsilon, size=n)
        else:
            raw = rng.dirichlet(np.ones(n)) * self.epsilon * rng.random()
            delta[mask] = raw * rng.choice((-1.0, 1.0), size=n)
        x = np.clip(x0 + delta, self.box[0], self.box[1])
        return x.reshape(self.center.shape)


@dataclass
class OutputProperty:
    """Action `target` must remain the strict argmax, with margin delta."""

    target: int
    delta: float = 1e-6

    def __post_init__(self):
        if self.target < 0:
            raise ValueError("target action index must be >= 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")

    def violated_by(self, q: np.ndarray) -> int | None:
        """Index of a rival j with q[j] >= q[target] - delta, or None."""
        q = np.asarray(q, dtype=np.float64)
        for j in range(q.size):
            if j != self.target and q[j] >= q[self.target] - self.delta:
                return j
        return None


@dataclass
class SolveStats:
    nodes: int = 0
    lp_calls: int = 0
    wall_ms: float = 0.0


@dataclass
class Holds:
    stats: SolveStats = field(default_factory=SolveStats)

    verdict = "holds"


@dataclass
class Counterexample:
    x: np.ndarray
    y: np.ndarray
    rival: tuple[int, int]  # (target, violating action)
    stats: SolveStats = field(default_factory=SolveStats)

    verdict = "counterexample"


@dataclass
class Timeout:
    elapsed_ms: float
    open_nodes: int
    stats: SolveStats = field(default_factory=SolveStats)

    verdict = "timeout"


Verdict = Holds | Counterexample | Timeout
