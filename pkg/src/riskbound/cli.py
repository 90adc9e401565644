"""Command-line interface: ``riskbound range|wvar|curve|verify``.

Exit codes: 0 success, 1 I/O or parse error, 2 infeasible k, 3 solver
failure, 4 report failed verification.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import certify, jsonfmt, wvar
from .couplings import covariance_range
from .exceptions import CertificateError, InfeasibleCovarianceError, RiskboundError, SolverError
from .marginals import DiscreteMarginal, from_atoms, from_samples

log = logging.getLogger("riskbound")

EXIT_OK, EXIT_IO, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_UNVERIFIED = 0, 1, 2, 3, 4
DEFAULT_MAX_ATOMS = 30

K_MODES = ("explicit", "estimate", "estimate_clamped", "none")


class IngestError(RiskboundError):
    """Malformed or unusable input data."""


@dataclass
class RunConfig:
    input_path: Path
    alpha: float
    k_mode: str = "estimate"
    k: Optional[float] = None
    clamp_R: Optional[float] = None
    max_atoms: int = DEFAULT_MAX_ATOMS
    output_path: Optional[Path] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if self.max_atoms < 1:
            raise ValueError("max_atoms must be at least 1")
        if self.k_mode not in K_MODES:
            raise ValueError(f"unknown k_mode {self.k_mode!r}")
        if self.k_mode == "explicit" and self.k is None:
            raise ValueError("explicit k_mode needs k")
        if self.k_mode == "estimate_clamped" and not (self.clamp_R and self.clamp_R > 0):
            raise ValueError("estimate_clamped k_mode needs a positive clamp bound")


def read_pairs(path) -> np.ndarray:
    """Read a two-column ``x,y`` CSV into an ``(n, 2)`` array."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["x", "y"]:
                raise IngestError(f"{path}:1: expected header 'x,y', got {header!r}")
            rows = []
            for row in reader:
                if not row or all(not c.strip() for c in row):
                    continue
                line = reader.line_num
                if len(row) != 2:
                    raise IngestError(f"{path}:{line}: expected 2 fields, got {len(row)}")
                try:
                    x, y = float(row[0]), float(row[1])
                except ValueError:
                    raise IngestError(f"{path}:{line}: not a number: {row!r}") from None
                if not (math.isfinite(x) and math.isfinite(y)):
                    raise IngestError(f"{path}:{line}: non-finite value")
                rows.append((x, y))
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise IngestError(f"{path}: need at least 2 data rows, got {len(rows)}")
    return np.array(rows)


def ingest_pairs(path):
    """Empirical marginals, plain k estimate and the raw pairs from a CSV file."""
    pairs = read_pairs(path)
    return from_samples(pairs[:, 0]), from_samples(pairs[:, 1]), wvar.estimate_k(pairs), pairs


def coarsen(m: DiscreteMarginal, target_atoms: int) -> DiscreteMarginal:
    """Replace ``m`` by ``target_atoms`` equal-probability quantile bins.

    Each bin becomes one atom at its conditional mean; atoms straddling a bin
    boundary are split between the bins.  The mean is preserved.
    """
    if target_atoms < 1:
        raise ValueError("target_atoms must be at least 1")
    if len(m) <= target_atoms:
        return m
    edges = np.arange(1, target_atoms + 1) / target_atoms
    edges[-1] = 1.0
    cuts = np.union1d(m.cumulative, edges)
    lengths = np.diff(np.concatenate(([0.0], cuts)))
    atom = np.searchsorted(m.cumulative, cuts, side="left")
    bin_ = np.searchsorted(edges, cuts, side="left")
    mass = np.bincount(bin_, weights=lengths, minlength=target_atoms)
    total = np.bincount(bin_, weights=lengths * m.values[atom], minlength=target_atoms)
    keep = mass > 0
    return from_atoms(zip(total[keep] / mass[keep], mass[keep]))


def _resolve_k(config: RunConfig, p, q, pairs, warnings: list[str]):
    """Pick k and the truncation bound; clamp estimates into the feasible range."""
    R = config.clamp_R if config.k_mode == "estimate_clamped" else None
    if config.k_mode == "none":
        return None, None, covariance_range(p, q)
    k_range = covariance_range(p, q) if R is None else wvar.truncated_range(p, q, R)
    lo, hi = k_range
    if config.k_mode == "explicit":
        k = float(config.k)
        slack = 1e-10 * max(1.0, abs(k))
        if not lo - slack <= k <= hi + slack:
            raise InfeasibleCovarianceError(k, k_range)
        return min(max(k, lo), hi), R, k_range
    k = wvar.estimate_k(pairs, R)
    if not lo <= k <= hi:
        clamped = min(max(k, lo), hi)
        warnings.append(f"estimated k={k!r} outside the coarsened feasible range [{lo!r}, {hi!r}]; clamped to {clamped!r}")
        log.warning(warnings[-1])
        k = clamped
    return k, R, k_range


def prepare(config: RunConfig):
    p, q, _, pairs = ingest_pairs(config.input_path)
    p, q = coarsen(p, config.max_atoms), coarsen(q, config.max_atoms)
    warnings: list[str] = []
    k, R, k_range = _resolve_k(config, p, q, pairs, warnings)
    return p, q, k, R, warnings


def run(config: RunConfig) -> certify.BoundReport:
    """Compute the worst-case VaR report for ``config`` and write it as JSON."""
    p, q, k, R, warnings = prepare(config)
    query = wvar.RiskQuery(config.alpha, k, R)
    report = certify.bound_report(p, q, query, k_mode=config.k_mode, warnings=warnings)
    text = report.to_json()
    if config.output_path is None:
        sys.stdout.write(text)
    else:
        Path(config.output_path).write_text(text)
    return report


def write_curve(curve: wvar.TailCurve, path) -> None:
    lines = ["s,phi"] + [f"{s:.17g},{phi:.17g}" for s, phi in curve]
    Path(path).write_text("\n".join(lines) + "\n")


def _add_k_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--k", type=float, help="explicit value of E[XY]")
    group.add_argument("--estimate-k", action="store_true", help="estimate k as the sample mean of x*y (default)")
    group.add_argument("--clamp", type=float, metavar="R", help="estimate k from x*y clipped to [-R, R] and constrain the clipped moment")
    group.add_argument("--no-k", action="store_true", help="marginals only, no moment constraint")
    parser.add_argument("--max-atoms", type=int, default=DEFAULT_MAX_ATOMS, help="coarsen each marginal to at most N atoms")


def _config(args, alpha: float) -> RunConfig:
    if args.k is not None:
        mode = "explicit"
    elif args.clamp is not None:
        mode = "estimate_clamped"
    elif args.no_k:
        mode = "none"
    else:
        mode = "estimate"
    out = getattr(args, "out", None)
    return RunConfig(Path(args.pairs), alpha, mode, args.k, args.clamp, args.max_atoms, Path(out) if out else None)


def _cmd_range(args) -> int:
    p, q, k_plain, pairs = ingest_pairs(args.pairs)
    p, q = coarsen(p, args.max_atoms), coarsen(q, args.max_atoms)
    out = {"k_range": list(covariance_range(p, q)), "k_estimate": k_plain, "atoms": [len(p), len(q)]}
    if args.clamp is not None:
        out["truncation_R"] = args.clamp
        out["truncated_k_range"] = list(wvar.truncated_range(p, q, args.clamp))
        out["truncated_k_estimate"] = wvar.estimate_k(pairs, args.clamp)
    sys.stdout.write(jsonfmt.dumps(out))
    return EXIT_OK


def _cmd_wvar(args) -> int:
    report = run(_config(args, args.alpha))
    if args.out:
        print(f"wvar={report.wvar:.17g} (report written to {args.out})", file=sys.stderr)
    return EXIT_OK


def _cmd_curve(args) -> int:
    config = _config(args, 0.5)
    config.output_path = None
    p, q, k, R, warnings = prepare(config)
    curve = wvar.tail_curve(p, q, k, R)
    write_curve(curve, args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    try:
        report = certify.report_from_json(Path(args.report).read_text())
    except OSError as exc:
        raise IngestError(f"cannot read {args.report}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"{args.report}: malformed report ({exc})") from exc
    result = certify.verify_report(report.p, report.q, report)
    if result:
        print("OK: report verified")
        return EXIT_OK
    for reason in result.reasons:
        print(f"FAIL: {reason}")
    return EXIT_UNVERIFIED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riskbound", description="Worst-case VaR of X+Y from marginals and E[XY].")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_range = sub.add_parser("range", help="feasible range of E[XY] for the data's marginals")
    p_range.add_argument("pairs")
    p_range.add_argument("--max-atoms", type=int, default=DEFAULT_MAX_ATOMS)
    p_range.add_argument("--clamp", type=float, metavar="R")
    p_range.set_defaults(func=_cmd_range)

    p_wvar = sub.add_parser("wvar", help="worst-case VaR report with certificates")
    p_wvar.add_argument("pairs")
    p_wvar.add_argument("--alpha", type=float, required=True)
    p_wvar.add_argument("--out", help="report path (default: stdout)")
    _add_k_options(p_wvar)
    p_wvar.set_defaults(func=_cmd_wvar)

    p_curve = sub.add_parser("curve", help="worst-case probability curve as CSV")
    p_curve.add_argument("pairs")
    p_curve.add_argument("--out", required=True)
    _add_k_options(p_curve)
    p_curve.set_defaults(func=_cmd_curve)

    p_verify = sub.add_parser("verify", help="re-check a report without solving")
    p_verify.add_argument("report")
    p_verify.set_defaults(func=_cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleCovarianceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverError, CertificateError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (IngestError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
