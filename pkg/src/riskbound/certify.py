"""Auditable evidence for worst-case VaR values.

A dual triplet ``(f, g, lambda_cov)`` that is feasible for the indicator
cost at threshold ``s`` proves a lower bound on the worst-case probability
``phi(s)``; if that bound reaches the level, the worst-case VaR is at most
``s``.  A coupling meeting the side constraint proves an upper bound on
``phi(s)``; if it stays below the level, the worst-case VaR exceeds ``s``.
Reports carry the marginals, thresholds and duals so that a third party can
re-check every claim without running a solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import jsonfmt, translp, wvar
from .couplings import Coupling, covariance_range
from .exceptions import CertificateError
from .marginals import DiscreteMarginal

CERT_TOL = 1e-8
VALUE_TOL = 1e-10
WITNESS_TOL = 1e-9


@dataclass
class DualCertificate:
    f: np.ndarray
    g: np.ndarray
    lambda_cov: float
    bound_value: float
    s: float
    k: Optional[float] = None
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "f": [float(v) for v in self.f],
            "g": [float(v) for v in self.g],
            "lambda_cov": float(self.lambda_cov),
            "bound_value": float(self.bound_value),
            "s": float(self.s),
        }

    @classmethod
    def from_dict(cls, d: dict, k: Optional[float] = None, truncated: bool = False) -> "DualCertificate":
        return cls(
            np.asarray(d["f"], dtype=np.float64),
            np.asarray(d["g"], dtype=np.float64),
            float(d["lambda_cov"]),
            float(d["bound_value"]),
            float(d["s"]),
            k,
            truncated,
        )


def threshold_lp(p, q, s: float, k: Optional[float], R: Optional[float] = None) -> translp.TransportLP:
    """The LP whose optimum is the worst-case probability of ``X + Y <= s``."""
    loss = (wvar.sum_grid(p, q) <= s).astype(np.float64)
    side = [] if k is None else [translp.SideConstraint(wvar.clamp_kernel(p, q, R), k)]
    return translp.TransportLP(loss, p.probs, q.probs, side)


def _lambdas(lp: translp.TransportLP, lambda_cov: float) -> np.ndarray:
    return np.array([lambda_cov] if lp.side_constraints else [], dtype=np.float64)


def check_certificate(lp: translp.TransportLP, cert: DualCertificate) -> list[str]:
    """Reasons why ``cert`` does not certify its bound on ``lp`` (empty if it does)."""
    reasons = []
    try:
        lam = _lambdas(lp, cert.lambda_cov)
        if not lp.side_constraints and cert.lambda_cov != 0.0:
            reasons.append(f"s={cert.s:g}: nonzero lambda_cov without a side constraint")
        ok, worst, value = translp.check_dual_feasible(lp, cert.f, cert.g, lam, CERT_TOL)
    except ValueError as exc:
        return [f"s={cert.s:g}: malformed certificate ({exc})"]
    if not ok:
        reasons.append(f"s={cert.s:g}: dual infeasible (violation {worst:.3g})")
    if not abs(value - cert.bound_value) <= VALUE_TOL:
        reasons.append(f"s={cert.s:g}: bound_value {cert.bound_value!r} does not match dual objective {value!r}")
    return reasons


def extract_certificate(
    lp: translp.TransportLP,
    result: translp.LPResult,
    s: float,
    k: Optional[float] = None,
    truncated: bool = False,
) -> DualCertificate:
    """Package the duals of an optimal solve and re-verify them."""
    if not result.optimal:
        raise CertificateError(f"cannot certify a result with status {result.status}")
    lam = float(result.dual_side[0]) if len(result.dual_side) else 0.0
    _, _, value = translp.check_dual_feasible(lp, result.dual_row, result.dual_col, result.dual_side)
    cert = DualCertificate(result.dual_row.copy(), result.dual_col.copy(), lam, value, float(s), k, truncated)
    reasons = check_certificate(lp, cert)
    if reasons:
        raise CertificateError("; ".join(reasons))
    return cert


@dataclass
class BoundReport:
    alpha: float
    k: Optional[float]
    k_range: tuple[float, float]
    wvar: float
    curve: wvar.TailCurve
    certificates: list[DualCertificate]
    witness: Coupling
    witness_s: float
    p: DiscreteMarginal
    q: DiscreteMarginal
    k_mode: str = "explicit"
    truncation_R: Optional[float] = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        px, qy = self.p.values, self.q.values
        return {
            "alpha": self.alpha,
            "k": self.k,
            "k_mode": self.k_mode,
            "k_range": [self.k_range[0], self.k_range[1]],
            "wvar": self.wvar,
            "curve": [{"s": s, "phi": phi} for s, phi in self.curve],
            "certificates": [c.to_dict() for c in self.certificates],
            "witness": {
                "s": self.witness_s,
                "entries": [{"x": px[i], "y": qy[j], "mass": w} for i, j, w in self.witness.entries],
            },
            "warnings": list(self.warnings),
            "truncation_R": self.truncation_R,
            "marginals": {"p": [list(a) for a in self.p.atoms], "q": [list(a) for a in self.q.atoms]},
        }

    def to_json(self) -> str:
        return jsonfmt.dumps(self.to_dict())


def _marginal_from_atoms(atoms) -> DiscreteMarginal:
    arr = np.asarray(atoms, dtype=np.float64)
    return DiscreteMarginal(arr[:, 0], arr[:, 1])


def _witness_from_entries(p, q, entries) -> Coupling:
    rows, cols, masses = [], [], []
    for e in entries:
        i = int(np.searchsorted(p.values, e["x"]))
        j = int(np.searchsorted(q.values, e["y"]))
        if i >= len(p) or p.values[i] != e["x"] or j >= len(q) or q.values[j] != e["y"]:
            raise ValueError(f"witness entry ({e['x']}, {e['y']}) is not an atom pair")
        rows.append(i)
        cols.append(j)
        masses.append(float(e["mass"]))
    return Coupling(p, q, rows, cols, masses)


def report_from_dict(d: dict) -> BoundReport:
    p = _marginal_from_atoms(d["marginals"]["p"])
    q = _marginal_from_atoms(d["marginals"]["q"])
    k = d["k"]
    R = d.get("truncation_R")
    return BoundReport(
        alpha=float(d["alpha"]),
        k=None if k is None else float(k),
        k_range=(float(d["k_range"][0]), float(d["k_range"][1])),
        wvar=float(d["wvar"]),
        curve=wvar.TailCurve(tuple((float(c["s"]), float(c["phi"])) for c in d["curve"])),
        certificates=[DualCertificate.from_dict(c, k, R is not None) for c in d["certificates"]],
        witness=_witness_from_entries(p, q, d["witness"]["entries"]),
        witness_s=float(d["witness"]["s"]),
        p=p,
        q=q,
        k_mode=d.get("k_mode", "explicit"),
        truncation_R=None if R is None else float(R),
        warnings=list(d.get("warnings", [])),
    )


def report_from_json(text: str) -> BoundReport:
    return report_from_dict(json.loads(text))


def bound_report(
    p: DiscreteMarginal,
    q: DiscreteMarginal,
    query: wvar.RiskQuery,
    k_mode: str = "explicit",
    warnings=(),
    workers: int = 1,
) -> BoundReport:
    """Worst-case VaR with a dual certificate at every scanned sum and a
    coupling witnessing that the next-lower sum does not reach the level."""
    R = query.truncation_R
    k = query.k
    points = wvar.scan(p, q, k, R, workers)
    curve = wvar.TailCurve(tuple((pt.s, pt.phi) for pt in points))
    value = curve.var(query.alpha_level)
    certs = [extract_certificate(pt.lp, pt.result, pt.s, k, R is not None) for pt in points]
    pos = next(t for t, pt in enumerate(points) if pt.s == value)
    below = points[max(pos - 1, 0)]
    witness = Coupling.from_matrix(p, q, below.result.primal)
    k_range = covariance_range(p, q) if R is None else wvar.truncated_range(p, q, R)
    return BoundReport(
        alpha=query.alpha_level,
        k=k,
        k_range=k_range,
        wvar=value,
        curve=curve,
        certificates=certs,
        witness=witness,
        witness_s=below.s,
        p=p,
        q=q,
        k_mode=k_mode,
        truncation_R=R,
        warnings=list(warnings),
    )


@dataclass
class Verification:
    ok: bool
    reasons: list[str]

    def __bool__(self) -> bool:
        return self.ok


def verify_report(p: DiscreteMarginal, q: DiscreteMarginal, report: BoundReport) -> Verification:
    """Re-check every claim in ``report`` against the marginals ``p`` and ``q``."""
    reasons: list[str] = []
    alpha, k, R = report.alpha, report.k, report.truncation_R
    level_tol = wvar.LEVEL_TOL
    if not 0.0 < alpha < 1.0:
        reasons.append(f"alpha {alpha!r} outside (0, 1)")

    sums = np.unique(wvar.sum_grid(p, q))
    curve = dict(report.curve.points)
    if sorted(curve) != list(sums):
        reasons.append("curve thresholds differ from the attainable sums")

    # dual certificates: lower bounds on phi
    certified: dict[float, float] = {}
    for cert in report.certificates:
        if cert.s not in curve:
            reasons.append(f"certificate at s={cert.s:g} is not a curve threshold")
            continue
        cert_reasons = check_certificate(threshold_lp(p, q, cert.s, k, R), cert)
        reasons.extend(cert_reasons)
        if not cert_reasons:
            certified[cert.s] = cert.bound_value
            if cert.bound_value > curve[cert.s] + CERT_TOL:
                reasons.append(f"s={cert.s:g}: certified bound exceeds the reported curve value")

    # witness coupling: upper bound on phi at witness_s
    w = report.witness
    if w.p_ref != p or w.q_ref != q:
        reasons.append("witness infeasible: coupling refers to other marginals")
    elif (
        w.masses.size == 0
        or w.masses.min() < 0
        or abs(w.masses.sum() - 1.0) > WITNESS_TOL
        or w.marginal_residual() > WITNESS_TOL
    ):
        reasons.append("witness infeasible: marginal constraints violated")
    elif k is not None and abs(w.expectation(wvar.clamp_kernel(p, q, R)) - k) > WITNESS_TOL * max(1.0, abs(k)):
        reasons.append("witness infeasible: side constraint violated")
    witness_prob = w.prob_sum_at_most(report.witness_s)
    if report.witness_s in curve and curve[report.witness_s] > witness_prob + CERT_TOL:
        reasons.append("curve value at the witness threshold exceeds the witness probability")

    # the reported value must be pinned between the two kinds of evidence
    value = report.wvar
    if value not in curve:
        reasons.append(f"wvar {value!r} is not an attainable sum")
    else:
        if certified.get(value, -np.inf) < alpha - level_tol:
            reasons.append(f"wvar {value!r} is not certified: no dual bound reaching alpha at that sum")
        idx = int(np.searchsorted(sums, value))
        if idx > 0:
            if report.witness_s != sums[idx - 1]:
                reasons.append("witness threshold is not the sum just below wvar")
            elif witness_prob >= alpha - level_tol:
                reasons.append("witness does not show the sum below wvar falls short of alpha")
        if report.curve.var(alpha) != value:
            reasons.append("wvar inconsistent with the reported curve")
    return Verification(not reasons, reasons)
