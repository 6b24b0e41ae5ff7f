"""Empirical measures on the chamber and their 1-D summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BinningMismatch, InvalidParameter


def statistic_values(samples, statistic: str) -> np.ndarray:
    """Evaluate a summary on an ``(M, N)`` sample array.

    ``coord:k`` is the k-th coordinate (1-based), ``min_gap`` the smallest
    adjacent gap and ``center`` the mean position.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    if statistic == "min_gap":
        if x.shape[1] < 2:
            raise InvalidParameter("min_gap needs at least two particles")
        return np.diff(x, axis=1).min(axis=1)
    if statistic == "center":
        return x.mean(axis=1)
    if statistic.startswith("coord:"):
        k = int(statistic.split(":", 1)[1])
        if not 1 <= k <= x.shape[1]:
            raise InvalidParameter(f"coordinate {k} out of range")
        return x[:, k - 1]
    raise InvalidParameter(f"unknown statistic {statistic!r}")


@dataclass
class EmpiricalMeasure:
    """Weighted samples, or a histogram of one statistic on fixed edges.

    Histogram values outside the edges are counted in the first/last bin so the
    masses always sum to one.
    """

    samples: np.ndarray | None = None
    weights: np.ndarray | None = None
    statistic: str | None = None
    edges: np.ndarray | None = None
    masses: np.ndarray | None = None

    def __post_init__(self):
        if self.samples is not None:
            self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
            m = self.samples.shape[0]
            if m == 0:
                raise InvalidParameter("empty sample set")
            w = np.full(m, 1.0 / m) if self.weights is None else np.asarray(self.weights, dtype=float)
            if w.shape != (m,) or np.any(w <= 0):
                raise InvalidParameter("weights must be positive, one per sample")
            self.weights = w / w.sum()
        elif self.masses is not None:
            self.masses = np.asarray(self.masses, dtype=float)
            self.edges = np.asarray(self.edges, dtype=float)
            if self.edges.size != self.masses.size + 1 or np.any(np.diff(self.edges) <= 0):
                raise InvalidParameter("edges must be increasing with one more entry than masses")
        else:
            raise InvalidParameter("need samples or a histogram")

    @property
    def is_histogram(self) -> bool:
        return self.masses is not None

    @classmethod
    def from_samples(cls, samples, weights=None) -> "EmpiricalMeasure":
        return cls(samples=samples, weights=weights)

    @classmethod
    def from_values(cls, values, statistic: str, edges, weights=None) -> "EmpiricalMeasure":
        values = np.asarray(values, dtype=float)
        edges = np.asarray(edges, dtype=float)
        if values.size == 0:
            raise InvalidParameter("no values to bin")
        idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, edges.size - 2)
        w = np.ones(values.size) if weights is None else np.asarray(weights, dtype=float)
        masses = np.bincount(idx, weights=w, minlength=edges.size - 1)
        return cls(statistic=statistic, edges=edges, masses=masses / masses.sum())

    def histogram(self, statistic: str, edges) -> "EmpiricalMeasure":
        if self.is_histogram:
            if statistic == self.statistic and np.array_equal(np.asarray(edges, dtype=float), self.edges):
                return self
            raise BinningMismatch("cannot rebin a histogram")
        return EmpiricalMeasure.from_values(statistic_values(self.samples, statistic), statistic, edges,
                                            self.weights)

    def total_mass(self) -> float:
        return float(self.masses.sum() if self.is_histogram else self.weights.sum())

    def mean(self, fn=None) -> float:
        """Expectation of ``fn(samples)`` (row-wise); sample form only."""
        if self.is_histogram:
            raise InvalidParameter("expectations need the sample form")
        vals = self.samples if fn is None else np.asarray(fn(self.samples), dtype=float)
        return np.tensordot(self.weights, vals, axes=1)

    def resample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.is_histogram:
            raise InvalidParameter("resampling needs the sample form")
        return self.samples[rng.choice(self.samples.shape[0], size=n, p=self.weights)]


def uniform_edges(lo: float, hi: float, width: float) -> np.ndarray:
    n = int(round((hi - lo) / width))
    if n < 1 or abs(n * width - (hi - lo)) > 1e-9 * max(1.0, abs(hi - lo)):
        raise InvalidParameter("range is not a whole number of bins")
    return lo + width * np.arange(n + 1)


def tv_distance(a: EmpiricalMeasure, b: EmpiricalMeasure) -> float:
    """Half the L1 distance of bin masses on a common binning."""
    if not (a.is_histogram and b.is_histogram):
        raise BinningMismatch("both measures must be histograms")
    if a.statistic != b.statistic or a.edges.shape != b.edges.shape or not np.allclose(a.edges, b.edges, rtol=0, atol=1e-12):
        raise BinningMismatch("histograms use different binnings")
    return float(min(1.0, 0.5 * np.abs(a.masses - b.masses).sum()))
