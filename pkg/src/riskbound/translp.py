"""Transportation linear programs with linear side constraints.

Primal::

    minimize    sum_ij cost[i, j] * mu[i, j]
    subject to  sum_j mu[i, j] = p[i]                  (row sums)
                sum_i mu[i, j] = q[j]                  (column sums)
                sum_ij kappa_s[i, j] * mu[i, j] = k_s  (side rows)
                mu >= 0

Dual: maximize ``f.p + g.q + sum_s lambda_s k_s`` subject to
``f[i] + g[j] + sum_s lambda_s kappa_s[i, j] <= cost[i, j]`` on the grid.

The solver is a dense revised simplex method with an explicit basis inverse,
Bland's pivoting rule and a two-phase start.  The last column-sum equation
is redundant given the others and is dropped; its dual value is fixed at 0,
which complementary slackness then determines consistently for the rest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import SolverError

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
GAP_TOL = 1e-8
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 40
STALL_LIMIT = 50

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class SideConstraint:
    coeff: np.ndarray
    rhs: float


@dataclass
class TransportLP:
    cost: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    side_constraints: Sequence[SideConstraint] = ()

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=np.float64)
        self.row_marginal = np.asarray(self.row_marginal, dtype=np.float64)
        self.col_marginal = np.asarray(self.col_marginal, dtype=np.float64)
        self.side_constraints = tuple(
            SideConstraint(np.asarray(s.coeff, dtype=np.float64), float(s.rhs))
            if isinstance(s, SideConstraint)
            else SideConstraint(np.asarray(s[0], dtype=np.float64), float(s[1]))
            for s in self.side_constraints
        )
        m, n = self.row_marginal.size, self.col_marginal.size
        if self.row_marginal.ndim != 1 or self.col_marginal.ndim != 1 or m == 0 or n == 0:
            raise ValueError("marginals must be nonempty 1-D arrays")
        if self.cost.shape != (m, n):
            raise ValueError(f"cost has shape {self.cost.shape}, expected {(m, n)}")
        for s in self.side_constraints:
            if s.coeff.shape != (m, n):
                raise ValueError(f"side constraint has shape {s.coeff.shape}, expected {(m, n)}")
            if not (np.all(np.isfinite(s.coeff)) and np.isfinite(s.rhs)):
                raise ValueError("side constraint must be finite")
        if not np.all(np.isfinite(self.cost)):
            raise ValueError("cost must be finite")
        for name, v in (("row", self.row_marginal), ("column", self.col_marginal)):
            if np.any(v <= 0):
                raise ValueError(f"{name} marginal must be strictly positive")
            if abs(v.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} marginal sums to {v.sum()!r}, not 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape

    def with_cost(self, cost: np.ndarray) -> "TransportLP":
        return TransportLP(cost, self.row_marginal, self.col_marginal, self.side_constraints)


@dataclass
class LPResult:
    status: str
    primal: Optional[np.ndarray]
    objective: float
    dual_row: Optional[np.ndarray]
    dual_col: Optional[np.ndarray]
    dual_side: Optional[np.ndarray]
    iterations: int
    basis: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _equality_system(lp: TransportLP):
    """Constraint matrix (rows with negative rhs flipped) and rhs."""
    m, n = lp.shape
    s = len(lp.side_constraints)
    rows = m + n - 1 + s
    a = np.zeros((rows, m * n))
    cols = np.arange(m * n)
    a[cols // n, cols] = 1.0
    keep = cols % n < n - 1
    a[m + cols[keep] % n, cols[keep]] = 1.0
    b = np.concatenate([lp.row_marginal, lp.col_marginal[:-1], [c.rhs for c in lp.side_constraints]])
    for t, c in enumerate(lp.side_constraints):
        a[m + n - 1 + t] = c.coeff.ravel()
    sign = np.where(b < 0, -1.0, 1.0)
    return a * sign[:, None], b * sign, sign


class _Simplex:
    """Revised simplex state over ``[A | I]`` (structural then artificial columns)."""

    def __init__(self, a: np.ndarray, b: np.ndarray, basis: np.ndarray):
        self.rows, self.n_struct = a.shape
        self.a = np.hstack([a, np.eye(self.rows)])
        self.b = b
        self.basis = np.array(basis, dtype=np.intp)
        self.iterations = 0
        self.refactor()

    def refactor(self) -> None:
        self.binv = np.linalg.inv(self.a[:, self.basis])
        self.x_b = self.binv @ self.b
        self._since = 0

    def duals(self, cost: np.ndarray) -> np.ndarray:
        return self.binv.T @ cost[self.basis]

    def _pivot(self, r: int, j: int, u: np.ndarray) -> None:
        t = self.x_b[r] / u[r]
        self.x_b -= t * u
        self.x_b[r] = t
        row = self.binv[r] / u[r]
        self.binv -= np.outer(u, row)
        self.binv[r] = row
        self.basis[r] = j
        self.iterations += 1
        self._since += 1
        if self._since >= REFACTOR_EVERY:
            self.refactor()

    def run(self, cost: np.ndarray, allowed: np.ndarray, cap: int, rule: str = "bland") -> str:
        """Simplex iterations on ``cost`` until optimal.

        ``rule="bland"`` always enters the lowest-index improving column.
        ``rule="hybrid"`` enters the most negative reduced cost, falling back
        to Bland's rule after a run of degenerate pivots (Bland resumes until
        the next pivot that makes progress, so cycling is still impossible).
        """
        d_tol = 1e-11 * max(1.0, float(np.abs(cost).max()))
        stalled = 0
        while True:
            y = self.duals(cost)
            d = cost - y @ self.a
            d[self.basis] = 0.0
            candidates = np.flatnonzero((d < -d_tol) & allowed)
            if candidates.size == 0:
                return OPTIMAL
            if self.iterations >= cap:
                raise SolverError(f"simplex iteration cap {cap} reached")
            if rule == "bland" or stalled >= STALL_LIMIT:
                j = candidates[0]
            else:
                j = candidates[np.argmin(d[candidates])]
            u = self.binv @ self.a[:, j]
            pos = np.flatnonzero(u > PIVOT_TOL)
            if pos.size == 0:
                return UNBOUNDED
            ratios = np.maximum(self.x_b[pos], 0.0) / u[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-13]
            r = ties[np.argmin(self.basis[ties])]
            stalled = stalled + 1 if best <= 1e-13 else 0
            self._pivot(r, j, u)

    def drive_out_artificials(self) -> None:
        """Pivot zero-level artificials out of the basis where possible."""
        for r in range(self.rows):
            if self.basis[r] < self.n_struct:
                continue
            row = self.binv[r] @ self.a[:, : self.n_struct]
            row[self.basis[self.basis < self.n_struct]] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) > PIVOT_TOL:
                self.x_b[r] = 0.0
                self._pivot(r, j, self.binv @ self.a[:, j])
            # otherwise the row is redundant; its artificial stays basic at zero
        self.refactor()


def solve_min(
    lp: TransportLP,
    start_basis: Optional[np.ndarray] = None,
    warm_start: Optional[np.ndarray] = None,
    max_iter: Optional[int] = None,
    rule: str = "bland",
) -> LPResult:
    """Minimize the transport cost; return primal plan and duals.

    ``start_basis`` is a basis (column indices, artificial columns numbered
    after the ``m*n`` structural ones) of the equality system, e.g. the
    ``basis`` of an earlier result on the same constraints.  ``warm_start``
    is a feasible plan that is purified into such a basis.  Either one only
    saves phase-1 work; a start that is not primal feasible is discarded.
    """
    m, n = lp.shape
    a, b, sign = _equality_system(lp)
    rows, n_struct = a.shape
    cap = max_iter if max_iter is not None else 50 * m * n
    if start_basis is None and warm_start is not None:
        start_basis = crash_basis(lp, warm_start)

    sx = None
    if start_basis is not None:
        try:
            sx = _Simplex(a, b, start_basis)
            if sx.x_b.min() < -FEAS_TOL:
                sx = None
        except np.linalg.LinAlgError:
            sx = None
    if sx is None:
        sx = _Simplex(a, b, n_struct + np.arange(rows))

    artificial = sx.basis >= n_struct
    if np.any(sx.x_b[artificial] > FEAS_TOL):
        phase1 = np.concatenate([np.zeros(n_struct), np.ones(rows)])
        sx.run(phase1, np.arange(n_struct + rows) < n_struct, cap, rule)
        sx.refactor()
        infeas = float(sx.x_b[sx.basis >= n_struct].sum())
        if infeas > FEAS_TOL:
            log.debug("phase 1 ended with infeasibility %.3g", infeas)
            return LPResult(INFEASIBLE, None, float("nan"), None, None, None, sx.iterations)
    sx.drive_out_artificials()

    cost = np.concatenate([lp.cost.ravel(), np.zeros(rows)])
    status = sx.run(cost, np.arange(n_struct + rows) < n_struct, cap, rule)
    if status != OPTIMAL:
        return LPResult(status, None, float("-inf"), None, None, None, sx.iterations)
    sx.refactor()
    if sx.x_b.min() < -FEAS_TOL:
        raise SolverError(f"basic solution lost feasibility ({sx.x_b.min():.3g})")

    plan = np.zeros(n_struct + rows)
    plan[sx.basis] = np.maximum(sx.x_b, 0.0)
    plan = plan[:n_struct].reshape(m, n)
    y = sx.duals(cost) * sign
    f = y[:m].copy()
    g = np.concatenate([y[m : m + n - 1], [0.0]])
    lam = y[m + n - 1 :].copy()
    objective = float(np.dot(lp.cost.ravel(), plan.ravel()))
    return LPResult(OPTIMAL, plan, objective, f, g, lam, sx.iterations, sx.basis.copy())


def solve_max(lp: TransportLP, **kwargs) -> LPResult:
    """Maximize the transport cost; duals refer to the negated (minimization) problem
    with signs flipped back, so ``f + g + lambda.kappa >= cost`` on the grid."""
    res = solve_min(lp.with_cost(-lp.cost), **kwargs)
    if not res.optimal:
        return res
    return LPResult(res.status, res.primal, -res.objective, -res.dual_row, -res.dual_col,
                    -res.dual_side, res.iterations, res.basis)


def reduced_costs(lp: TransportLP, f, g, lambdas) -> np.ndarray:
    """``cost - f_i - g_j - sum_s lambda_s kappa_s`` on the grid."""
    red = lp.cost - np.asarray(f, dtype=np.float64)[:, None] - np.asarray(g, dtype=np.float64)[None, :]
    for lam, s in zip(lambdas, lp.side_constraints):
        red = red - lam * s.coeff
    return red


def dual_objective(lp: TransportLP, f, g, lambdas) -> float:
    return float(
        np.dot(f, lp.row_marginal)
        + np.dot(g, lp.col_marginal)
        + sum(lam * s.rhs for lam, s in zip(lambdas, lp.side_constraints))
    )


def check_dual_feasible(lp: TransportLP, f, g, lambdas, tol: float = GAP_TOL):
    """Check ``f_i + g_j + sum lambda_s kappa_s <= cost`` on the grid.

    Returns ``(ok, worst_violation, value)`` where ``value`` is the dual
    objective, a lower bound on the primal minimum whenever ``ok``.
    """
    m, n = lp.shape
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=np.float64))
    if f.shape != (m,) or g.shape != (n,) or lambdas.shape != (len(lp.side_constraints),):
        raise ValueError("dual vector shapes do not match the program")
    worst = float(-reduced_costs(lp, f, g, lambdas).min())
    return worst <= tol, worst, dual_objective(lp, f, g, lambdas)


def crash_basis(lp: TransportLP, plan: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """Turn a feasible plan into a feasible basis of the equality system.

    The plan's support is purified to linearly independent columns by moving
    along null-space directions (each move zeroes at least one entry); the
    basis is then completed with zero-level artificial columns.
    """
    a, b, _ = _equality_system(lp)
    rows, n_struct = a.shape
    x = np.asarray(plan, dtype=np.float64).ravel().copy()
    support = np.flatnonzero(x > tol)
    while support.size:
        sub = a[:, support]
        _, sv, vt = np.linalg.svd(sub, full_matrices=True)
        rank = int(np.sum(sv > 1e-10 * max(1.0, sv[0])))
        if rank == support.size:
            break
        d = vt[-1]
        if not np.any(d < -1e-12):
            d = -d
        xs = x[support]
        ratios = np.full(xs.size, np.inf)
        neg = d < -1e-12
        ratios[neg] = xs[neg] / -d[neg]
        r = int(np.argmin(ratios))
        xs = xs + ratios[r] * d
        xs[r] = 0.0
        xs[xs <= tol] = 0.0
        x[support] = xs
        support = np.flatnonzero(x > tol)

    basis = list(support)
    q, _ = np.linalg.qr(a[:, support]) if support.size else (np.zeros((rows, 0)), None)
    for r in range(rows):
        if len(basis) == rows:
            break
        e = np.zeros(rows)
        e[r] = 1.0
        resid = e - q @ (q.T @ e)
        norm = np.linalg.norm(resid)
        if norm > 1e-8:
            q = np.column_stack([q, resid / norm])
            basis.append(n_struct + r)
    return np.array(basis, dtype=np.intp)
