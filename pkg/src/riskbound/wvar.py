"""Worst-case Value at Risk of X + Y over couplings with a mixed-moment constraint.

For a threshold ``s`` the worst-case (smallest) probability that the sum
stays at or below ``s`` is the value of a transport LP with indicator cost
``1[x_i + y_j <= s]`` and, when ``k`` is given, the extra row
``sum kappa_ij mu_ij = k`` with ``kappa = xy`` (or its clamp to ``[-R, R]``).

On a finite grid the infimum of ``P(X + Y < z)`` over couplings is constant
for ``z`` in each interval ``(s_t, s_{t+1}]`` of consecutive attainable sums
and equals the value at ``s_t`` with a non-strict indicator.  The worst-case
VaR is therefore the smallest sum ``s_t`` whose curve value reaches the
level.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import translp
from .couplings import Coupling, comonotone, covariance_range, mix, mix_for_k, mixing_weight, xy_grid
from .exceptions import InfeasibleCovarianceError, SolverError
from .marginals import DiscreteMarginal

LEVEL_TOL = 1e-9
SNAP_TOL = 1e-12
RULE = "hybrid"


@dataclass(frozen=True)
class RiskQuery:
    alpha_level: float
    k: Optional[float] = None
    truncation_R: Optional[float] = None

    def __post_init__(self):
        if not (0.0 < self.alpha_level < 1.0):
            raise ValueError(f"alpha_level must lie in (0, 1), got {self.alpha_level!r}")
        if self.truncation_R is not None and not self.truncation_R > 0:
            raise ValueError(f"truncation_R must be positive, got {self.truncation_R!r}")


@dataclass(frozen=True)
class TailCurve:
    points: tuple[tuple[float, float], ...]

    @property
    def s(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def phi(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def var(self, alpha: float) -> float:
        """Smallest scanned sum whose worst-case probability reaches ``alpha``."""
        for s, phi in self.points:
            if phi >= alpha - LEVEL_TOL:
                return s
        return self.points[-1][0]


@dataclass
class CurvePoint:
    s: float
    phi: float
    lp: translp.TransportLP = field(repr=False)
    result: translp.LPResult = field(repr=False)


def clamp_kernel(p: DiscreteMarginal, q: DiscreteMarginal, R: Optional[float]) -> np.ndarray:
    """``xy`` on the grid, clipped to ``[-R, R]`` when ``R`` is given."""
    kappa = xy_grid(p, q)
    return kappa if R is None else np.clip(kappa, -R, R)


def sum_grid(p: DiscreteMarginal, q: DiscreteMarginal) -> np.ndarray:
    return p.values[:, None] + q.values[None, :]


def kernel_range(p: DiscreteMarginal, q: DiscreteMarginal, kappa: np.ndarray):
    """Attainable range of ``E[kappa]`` over couplings, with the two optimal plans."""
    lp = translp.TransportLP(kappa, p.probs, q.probs)
    lo, hi = translp.solve_min(lp), translp.solve_max(lp)
    if not (lo.optimal and hi.optimal):
        raise SolverError("range problem for the side kernel did not solve")
    return (lo.objective, hi.objective), Coupling.from_matrix(p, q, lo.primal), Coupling.from_matrix(p, q, hi.primal)


def truncated_range(p: DiscreteMarginal, q: DiscreteMarginal, R: float) -> tuple[float, float]:
    rng, _, _ = kernel_range(p, q, clamp_kernel(p, q, R))
    return rng


def feasibility_witness(p: DiscreteMarginal, q: DiscreteMarginal, k: float, R: Optional[float] = None) -> Coupling:
    """A coupling meeting the side constraint, mixing the two extremal plans."""
    if R is None:
        return mix_for_k(p, q, k)
    (lo, hi), low_plan, high_plan = kernel_range(p, q, clamp_kernel(p, q, R))
    lam = mixing_weight(k, lo, hi, what=f"E[clamp(XY, -{R:g}, {R:g})]")
    return mix(high_plan, low_plan, lam)


class _Problem:
    """Shared constraint data for every threshold of one (P, Q, k) query."""

    def __init__(self, p, q, k, R=None):
        self.p, self.q, self.k, self.R = p, q, k, R
        if k is None:
            side = []
            start = comonotone(p, q)  # any coupling is feasible; this one is already a vertex
        else:
            side = [translp.SideConstraint(clamp_kernel(p, q, R), k)]
            start = feasibility_witness(p, q, k, R)
        self.base = translp.TransportLP(np.zeros((len(p), len(q))), p.probs, q.probs, side)
        self.start = translp.crash_basis(self.base, start.to_matrix())

    def solve(self, loss: np.ndarray):
        lp = self.base.with_cost(loss)
        res = translp.solve_min(lp, start_basis=self.start, rule=RULE)
        if res.status == translp.INFEASIBLE:
            raise InfeasibleCovarianceError(self.k, self.k_range())
        if not res.optimal:
            raise SolverError(f"transport LP ended with status {res.status}")
        return lp, res

    def k_range(self):
        if self.R is None:
            return covariance_range(self.p, self.q)
        return truncated_range(self.p, self.q, self.R)


def constrained_expectation_min(
    p: DiscreteMarginal,
    q: DiscreteMarginal,
    k: Optional[float],
    loss: np.ndarray,
    truncation_R: Optional[float] = None,
):
    """Minimize ``E[loss]`` over couplings with ``E[xy] = k`` (no constraint if ``k`` is None).

    Returns ``(value, LPResult)``.
    """
    loss = np.asarray(loss, dtype=np.float64)
    _, res = _Problem(p, q, k, truncation_R).solve(loss)
    return res.objective, res


def _snap(v: float) -> float:
    if abs(v) <= SNAP_TOL:
        return 0.0
    if abs(v - 1.0) <= SNAP_TOL:
        return 1.0
    return min(1.0, max(0.0, v))


def scan(
    p: DiscreteMarginal,
    q: DiscreteMarginal,
    k: Optional[float] = None,
    truncation_R: Optional[float] = None,
    workers: int = 1,
) -> list[CurvePoint]:
    """Solve the indicator-cost LP at every distinct sum, in ascending order."""
    problem = _Problem(p, q, k, truncation_R)
    grid = sum_grid(p, q)
    sums = np.unique(grid)

    def at(s):
        lp, res = problem.solve((grid <= s).astype(np.float64))
        return CurvePoint(float(s), _snap(res.objective), lp, res)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(at, sums))
    else:
        points = [at(s) for s in sums]
    # the exact curve is nondecreasing; remove rounding-level dips
    running = 0.0
    for pt in points:
        running = max(running, pt.phi)
        pt.phi = running
    points[-1].phi = 1.0
    return points


def tail_curve(p, q, k=None, truncation_R=None, workers: int = 1) -> TailCurve:
    return TailCurve(tuple((pt.s, pt.phi) for pt in scan(p, q, k, truncation_R, workers)))


def worst_case_var(p: DiscreteMarginal, q: DiscreteMarginal, query: RiskQuery) -> float:
    """Worst-case VaR at ``query.alpha_level`` given the marginals and (optionally) ``k``."""
    return tail_curve(p, q, query.k, query.truncation_R).var(query.alpha_level)


def worst_case_var_truncated(p: DiscreteMarginal, q: DiscreteMarginal, query: RiskQuery) -> float:
    if query.truncation_R is None:
        raise ValueError("query has no truncation_R")
    return worst_case_var(p, q, query)


def estimate_k(pairs: Sequence[tuple[float, float]], clamp: Optional[float] = None) -> float:
    """Sample mean of ``x * y`` (clipped to ``[-clamp, clamp]`` if given)."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("pairs must be a sequence of (x, y)")
    if arr.shape[0] < 2:
        raise ValueError("need at least two pairs to estimate k")
    prod = arr[:, 0] * arr[:, 1]
    if clamp is not None:
        if not clamp > 0:
            raise ValueError("clamp bound must be positive")
        prod = np.clip(prod, -clamp, clamp)
    return float(prod.mean())
