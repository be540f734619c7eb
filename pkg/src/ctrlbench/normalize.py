"""Running mean/variance for state and reward normalisation, plus the
centered-rank fitness shaping used by the evolution strategies."""
from __future__ import annotations

import numpy as np

from . import _kernels as K

STD_FLOOR = 1e-8


class RunningStats:
    """Welford accumulator over vectors of a fixed length.

    Not synchronised: callers that share one instance serialise access.
    """

    def __init__(self, dim: int):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def update(self, x) -> "RunningStats":
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        return self.update_batch(x)

    def update_batch(self, xs) -> "RunningStats":
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs.reshape(-1, self.dim)
        if xs.shape[1] != self.dim:
            raise ValueError(f"expected rows of length {self.dim}, got {xs.shape[1]}")
        if not np.all(np.isfinite(xs)):
            raise ValueError("RunningStats.update received non-finite values")
        self.count = int(K.welford_batch(self.count, self.mean, self.m2, xs))
        return self

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / total)
        self.m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / total)
        self.count = total
        return self

    @property
    def var(self) -> np.ndarray:
        return self.m2 / max(self.count - 1, 1)

    @property
    def std(self) -> np.ndarray:
        """Standard deviation used for scaling: 1 until two samples exist."""
        if self.count < 2:
            return np.ones(self.dim)
        return np.maximum(np.sqrt(self.var), STD_FLOOR)

    def copy(self) -> "RunningStats":
        out = RunningStats(self.dim)
        out.count, out.mean, out.m2 = self.count, self.mean.copy(), self.m2.copy()
        return out


def normalize_state(stats: RunningStats, x, clip: float = K.OBS_CLIP) -> np.ndarray:
    return np.clip((np.asarray(x, dtype=np.float64) - stats.mean) / stats.std, -clip, clip)


def normalize_reward(stats: RunningStats, r, center: bool = False):
    """Scale rewards by the running std; the mean is only removed if ``center``."""
    r = np.asarray(r, dtype=np.float64)
    if center:
        r = r - stats.mean[0]
    return r / stats.std[0]


def centered_ranks(fitness, ties: str = "index") -> np.ndarray:
    """Map fitnesses to ranks scaled into [-0.5, 0.5].

    ``ties="index"`` breaks ties by position; ``ties="average"`` gives tied
    entries the mean of their ranks, so a constant vector maps to all zeros.
    """
    f = np.asarray(fitness, dtype=np.float64).ravel()
    n = f.shape[0]
    if n < 2:
        raise ValueError(f"centered_ranks needs at least 2 values, got {n}")
    order = np.argsort(f, kind="stable")
    ranks = np.empty(n)
    ranks[order] = np.arange(n, dtype=np.float64)
    if ties == "average":
        _, inverse, counts = np.unique(f, return_inverse=True, return_counts=True)
        if np.any(counts > 1):
            sums = np.bincount(inverse, weights=ranks)
            ranks = sums[inverse] / counts[inverse]
    elif ties != "index":
        raise ValueError(f"unknown tie rule {ties!r}")
    return ranks / (n - 1) - 0.5
