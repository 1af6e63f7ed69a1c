"""Plug-in (histogram) entropy and mutual information, in nats."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ContractError


def _as_columns(samples) -> np.ndarray:
    a = np.asarray(samples, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ContractError(f"samples must be 1-D or (n, dims), got shape {a.shape}")
    return a


def _entropy_from_counts(counts: np.ndarray) -> float:
    # sorting makes the sum independent of the histogram's axis order
    p = np.sort(counts[counts > 0].astype(np.float64).ravel()) / counts.sum()
    return float(-(p * np.log(p)).sum())


class HistogramEstimator:
    """Accumulating histogram over ``dims`` dimensions with fixed edges.

    Ranges default to the per-dimension min/max of the first batch fitted.
    """

    def __init__(self, bins: int | Sequence[int], ranges: Sequence[tuple[float, float]] | None = None):
        self.bins = bins
        self.ranges = None if ranges is None else [tuple(r) for r in ranges]
        self.counts: np.ndarray | None = None
        self.edges: list[np.ndarray] | None = None

    def fit(self, samples) -> "HistogramEstimator":
        a = _as_columns(samples)
        if a.shape[0] == 0:
            raise ContractError("cannot estimate from an empty sample")
        bins = [self.bins] * a.shape[1] if np.isscalar(self.bins) else list(self.bins)
        if min(bins) < 2:
            raise ContractError(f"need at least 2 bins, got {bins}")
        if self.ranges is None:
            self.ranges = [_range(a[:, k]) for k in range(a.shape[1])]
        counts, edges = np.histogramdd(a, bins=bins, range=self.ranges)
        if self.counts is None:
            self.counts, self.edges = counts, edges
        else:
            self.counts += counts
        return self

    @property
    def n(self) -> int:
        return 0 if self.counts is None else int(self.counts.sum())

    def probabilities(self) -> np.ndarray:
        if not self.n:
            raise ContractError("estimator has no samples")
        return self.counts / self.counts.sum()

    def entropy(self) -> float:
        if not self.n:
            raise ContractError("estimator has no samples")
        return _entropy_from_counts(self.counts)


def _range(col: np.ndarray) -> tuple[float, float]:
    lo, hi = float(col.min()), float(col.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def histogram_entropy(samples, bins: int = 16, ranges=None) -> float:
    """Plug-in entropy -sum p ln p over occupied bins."""
    return HistogramEstimator(bins, ranges).fit(samples).entropy()


def mutual_information(x, y, bins: int = 16, ranges=None) -> float:
    """H(X) + H(Y) - H(X, Y) with marginals taken from the joint histogram."""
    xa, ya = _as_columns(x), _as_columns(y)
    if xa.shape[0] != ya.shape[0]:
        raise ContractError(f"unpaired samples: {xa.shape[0]} vs {ya.shape[0]}")
    joint = HistogramEstimator(bins, ranges).fit(np.hstack([xa, ya])).counts
    kx = xa.shape[1]
    axes = tuple(range(joint.ndim))
    hx = _entropy_from_counts(joint.sum(axis=axes[kx:]))
    hy = _entropy_from_counts(joint.sum(axis=axes[:kx]))
    hxy = _entropy_from_counts(joint)
    return max(0.0, hx + hy - hxy)


def joint_entropy(x, y, bins: int = 16) -> float:
    return histogram_entropy(np.hstack([_as_columns(x), _as_columns(y)]), bins)
