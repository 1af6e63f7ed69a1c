"""Numerical rank of random tall/wide matrices (full-rank probability trials)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..rng import SeedStreams


def numerical_rank(a, rtol: float = 1e-10) -> int:
    """Rank by Gaussian elimination with complete pivoting.

    Elimination stops once the largest remaining pivot is at most
    rtol * ||A||_F.
    """
    m = np.array(a, dtype=np.float64, copy=True)
    if m.ndim != 2 or m.size == 0:
        return 0
    tol = rtol * np.linalg.norm(m)
    rows, cols = m.shape
    rank = 0
    for k in range(min(rows, cols)):
        sub = np.abs(m[k:, k:])
        i, j = np.unravel_index(np.argmax(sub), sub.shape)
        if sub[i, j] <= tol:
            break
        i, j = i + k, j + k
        m[[k, i]] = m[[i, k]]
        m[:, [k, j]] = m[:, [j, k]]
        factors = m[k + 1:, k] / m[k, k]
        m[k + 1:, k:] -= np.outer(factors, m[k, k:])
        rank += 1
    return rank


@dataclass(frozen=True)
class RankTrialConfig:
    d: int
    n: float
    trials: int = 1000
    seed: int = 1

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}", key="d")
        if not self.n > 0:
            raise ConfigError(f"magnification must be positive, got {self.n}", key="n")
        if self.rows < 1:
            raise ConfigError(f"n*d rounds to {self.rows} rows", key="n")
        if self.trials < 100:
            raise ConfigError(f"need at least 100 trials, got {self.trials}", key="trials")

    @property
    def rows(self) -> int:
        return int(round(self.n * self.d))


@dataclass
class RankTrialResult:
    config: RankTrialConfig
    ranks: np.ndarray

    @property
    def rank_d_fraction(self) -> float:
        """Fraction of draws whose rank equals the base dimension d."""
        return float(np.mean(self.ranks == self.config.d))

    @property
    def full_rank_fraction(self) -> float:
        """Fraction of draws reaching the maximal rank min(n*d, d)."""
        return float(np.mean(self.ranks == min(self.config.rows, self.config.d)))


def rank_trial(config: RankTrialConfig) -> RankTrialResult:
    """Draw (n*d) x d standard-normal matrices and record their numerical ranks."""
    streams = SeedStreams(config.seed)
    ranks = np.empty(config.trials, dtype=np.int64)
    for t in range(config.trials):
        a = streams(f"rank_trial/{t}").normal((config.rows, config.d))
        ranks[t] = numerical_rank(a)
    return RankTrialResult(config, ranks)
