"""Joint distributions on the product grid of two discrete marginals.

The comonotone and antimonotone couplings pair quantile levels of the two
marginals (equal levels, respectively ``u`` with ``1 - u``).  For discrete
marginals the transport kernels reduce to overlaps of the level intervals
``[F(x_{i-1}), F(x_i)]`` belonging to each atom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InfeasibleCovarianceError
from .marginals import DiscreteMarginal

OVERLAP_EPS = 1e-15
K_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Coupling:
    """Sparse joint measure: ``masses[t]`` sits at atom pair ``(rows[t], cols[t])``."""

    p_ref: DiscreteMarginal
    q_ref: DiscreteMarginal
    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        for name, dtype in (("rows", np.intp), ("cols", np.intp), ("masses", np.float64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_matrix(cls, p: DiscreteMarginal, q: DiscreteMarginal, plan: np.ndarray, eps: float = 0.0):
        plan = np.asarray(plan, dtype=np.float64)
        if plan.shape != (len(p), len(q)):
            raise ValueError(f"plan shape {plan.shape} does not match marginals ({len(p)}, {len(q)})")
        rows, cols = np.nonzero(plan > eps)
        return cls(p, q, rows, cols, plan[rows, cols])

    @property
    def entries(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.rows, self.cols, self.masses)]

    def to_matrix(self) -> np.ndarray:
        plan = np.zeros((len(self.p_ref), len(self.q_ref)))
        np.add.at(plan, (self.rows, self.cols), self.masses)
        return plan

    def expectation(self, kernel: np.ndarray) -> float:
        """Integral of a grid function ``kernel[i, j]`` against the coupling."""
        return float(np.dot(self.masses, np.asarray(kernel)[self.rows, self.cols]))

    def prob_sum_at_most(self, s: float) -> float:
        """P(X + Y <= s) under this coupling."""
        sums = self.p_ref.values[self.rows] + self.q_ref.values[self.cols]
        return float(self.masses[sums <= s].sum())

    def marginal_residual(self) -> float:
        """Largest absolute deviation of a row or column sum from its marginal."""
        row = np.bincount(self.rows, weights=self.masses, minlength=len(self.p_ref))
        col = np.bincount(self.cols, weights=self.masses, minlength=len(self.q_ref))
        return float(max(np.abs(row - self.p_ref.probs).max(), np.abs(col - self.q_ref.probs).max()))

    def check(self, tol: float = 1e-10) -> None:
        if self.masses.size and self.masses.min() <= 0:
            raise ValueError("coupling masses must be positive")
        if abs(self.masses.sum() - 1.0) > tol:
            raise ValueError(f"coupling total mass {self.masses.sum()!r} differs from 1")
        if self.marginal_residual() > tol:
            raise ValueError("coupling marginals do not reproduce p_ref and q_ref")


def _level_overlap(cum_p: np.ndarray, cum_q: np.ndarray):
    """Overlap lengths of consecutive level intervals of two CDF grids.

    Returns ``(i, j, length)`` arrays; the k-th merged interval belongs to
    atom ``i`` of the first grid and atom ``j`` of the second.
    """
    cuts = np.union1d(cum_p, cum_q)
    lo = np.concatenate(([0.0], cuts[:-1]))
    lengths = cuts - lo
    i = np.searchsorted(cum_p, cuts, side="left")
    j = np.searchsorted(cum_q, cuts, side="left")
    keep = lengths > OVERLAP_EPS
    return i[keep], j[keep], lengths[keep]


def comonotone(p: DiscreteMarginal, q: DiscreteMarginal) -> Coupling:
    """Coupling pairing equal quantile levels; maximizes E[XY]."""
    i, j, w = _level_overlap(p.cumulative, q.cumulative)
    return Coupling(p, q, i, j, w)


def antimonotone(p: DiscreteMarginal, q: DiscreteMarginal) -> Coupling:
    """Coupling pairing level u of P with level 1-u of Q; minimizes E[XY]."""
    cum_rev = np.cumsum(q.probs[::-1])
    cum_rev[-1] = 1.0
    i, j_rev, w = _level_overlap(p.cumulative, cum_rev)
    return Coupling(p, q, i, len(q) - 1 - j_rev, w)


def product_coupling(p: DiscreteMarginal, q: DiscreteMarginal) -> Coupling:
    rows, cols = np.meshgrid(np.arange(len(p)), np.arange(len(q)), indexing="ij")
    return Coupling(p, q, rows.ravel(), cols.ravel(), np.outer(p.probs, q.probs).ravel())


def xy_grid(p: DiscreteMarginal, q: DiscreteMarginal) -> np.ndarray:
    return np.outer(p.values, q.values)


def expectation_xy(c: Coupling) -> float:
    return float(np.dot(c.masses, c.p_ref.values[c.rows] * c.q_ref.values[c.cols]))


def covariance_range(p: DiscreteMarginal, q: DiscreteMarginal) -> tuple[float, float]:
    """Attainable interval of E[XY] over all couplings of ``p`` and ``q``."""
    lo, hi = expectation_xy(antimonotone(p, q)), expectation_xy(comonotone(p, q))
    # degenerate ranges can come out inverted by rounding
    return min(lo, hi), max(lo, hi)


def mix(upper: Coupling, lower: Coupling, lam: float) -> Coupling:
    """The coupling ``lam * upper + (1 - lam) * lower``."""
    plan = lam * upper.to_matrix() + (1.0 - lam) * lower.to_matrix()
    return Coupling.from_matrix(upper.p_ref, upper.q_ref, plan)


def mixing_weight(k: float, k_min: float, k_max: float, what: str = "E[XY]") -> float:
    """Weight on the upper extremal coupling so that the mixture hits ``k``."""
    slack = K_TOL * max(1.0, abs(k))
    if not (k_min - slack <= k <= k_max + slack):
        raise InfeasibleCovarianceError(k, (k_min, k_max), what)
    if k_max - k_min <= slack:
        return 0.0
    return min(1.0, max(0.0, (k - k_min) / (k_max - k_min)))


def mix_for_k(p: DiscreteMarginal, q: DiscreteMarginal, k: float) -> Coupling:
    """A coupling with E[XY] = k, mixing the two extremal couplings."""
    hi, lo = comonotone(p, q), antimonotone(p, q)
    lam = mixing_weight(k, expectation_xy(lo), expectation_xy(hi))
    return mix(hi, lo, lam)
