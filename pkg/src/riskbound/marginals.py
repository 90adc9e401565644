"""Finitely supported loss distributions on the real line."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMarginal:
    """Sorted atoms ``values`` carrying masses ``probs``.

    Build instances with :func:`from_atoms` or :func:`from_samples`; the
    constructor only validates.
    """

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        probs = _frozen(self.probs)
        if values.ndim != 1 or values.shape != probs.shape or values.size == 0:
            raise ValueError("values and probs must be nonempty 1-D arrays of equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("atom values must be finite")
        if np.any(np.diff(values) <= 0):
            raise ValueError("atom values must be strictly increasing")
        if np.any(probs <= 0):
            raise ValueError("atom probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        object.__setattr__(self, "_cum", _frozen(cum))

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMarginal):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        return f"DiscreteMarginal({self.atoms!r})"

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return [(float(v), float(p)) for v, p in zip(self.values, self.probs)]

    @property
    def cumulative(self) -> np.ndarray:
        """CDF evaluated at each atom; the last entry is exactly 1."""
        return self._cum

    # Convenience aliases so ``m.cdf(x)`` etc. read naturally.
    def cdf(self, x: float) -> float:
        return cdf(self, x)

    def cdf_left(self, x: float) -> float:
        return cdf_left(self, x)

    def quantile(self, u: float) -> float:
        return quantile(self, u)

    def mean(self) -> float:
        return mean(self)

    def second_moment(self) -> float:
        return second_moment(self)


def from_atoms(pairs: Iterable[tuple[float, float]]) -> DiscreteMarginal:
    """Build a marginal from ``(value, weight)`` pairs.

    Equal values are merged (exact float equality), weights are normalized.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one atom")
    merged: dict[float, float] = defaultdict(float)
    for value, weight in pairs:
        value, weight = float(value), float(weight)
        if not math.isfinite(value):
            raise ValueError(f"non-finite atom value {value!r}")
        if not (weight > 0 and math.isfinite(weight)):
            raise ValueError(f"atom weight must be positive and finite, got {weight!r}")
        merged[value] += weight
    values = np.array(sorted(merged), dtype=np.float64)
    weights = np.array([merged[v] for v in values], dtype=np.float64)
    return DiscreteMarginal(values, weights / weights.sum())


def from_samples(samples: Sequence[float]) -> DiscreteMarginal:
    """Empirical distribution of ``samples``."""
    arr = np.asarray(samples, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("need at least one sample")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    values, counts = np.unique(arr, return_counts=True)
    return DiscreteMarginal(values, counts / arr.size)


def point_mass(value: float) -> DiscreteMarginal:
    return from_atoms([(value, 1.0)])


def cdf(m: DiscreteMarginal, x: float) -> float:
    """F(x) = P(X <= x)."""
    idx = np.searchsorted(m.values, x, side="right")
    return 0.0 if idx == 0 else float(m.cumulative[idx - 1])


def cdf_left(m: DiscreteMarginal, x: float) -> float:
    """Left limit F(x-) = P(X < x)."""
    idx = np.searchsorted(m.values, x, side="left")
    return 0.0 if idx == 0 else float(m.cumulative[idx - 1])


def jump(m: DiscreteMarginal, x: float) -> float:
    return cdf(m, x) - cdf_left(m, x)


def quantile(m: DiscreteMarginal, u: float) -> float:
    """Generalized inverse inf{x : F(x) >= u} for u in (0, 1]."""
    if not (0.0 < u <= 1.0):
        raise ValueError(f"quantile level must lie in (0, 1], got {u!r}")
    idx = int(np.searchsorted(m.cumulative, u, side="left"))
    return float(m.values[min(idx, len(m) - 1)])


def mean(m: DiscreteMarginal) -> float:
    return float(np.dot(m.values, m.probs))


def second_moment(m: DiscreteMarginal) -> float:
    return float(np.dot(m.values * m.values, m.probs))
