import copy
import json

import numpy as np
import pytest

from riskbound import translp, wvar
from riskbound.certify import (
    DualCertificate,
    bound_report,
    check_certificate,
    extract_certificate,
    report_from_json,
    threshold_lp,
    verify_report,
)
from riskbound.couplings import antimonotone, comonotone, covariance_range
from riskbound.exceptions import CertificateError
from riskbound.marginals import point_mass
from riskbound.wvar import RiskQuery

from conftest import random_marginal


def same_plan(coupling, other):
    return np.allclose(coupling.to_matrix(), other.to_matrix(), atol=1e-12)


class TestExtract:
    def test_bound_equals_objective(self, rng):
        for _ in range(20):
            p, q = random_marginal(rng, 5), random_marginal(rng, 4)
            lo, hi = covariance_range(p, q)
            k = rng.uniform(lo, hi)
            s = float(np.median(wvar.sum_grid(p, q)))
            lp = threshold_lp(p, q, s, k)
            res = translp.solve_min(lp)
            cert = extract_certificate(lp, res, s, k)
            assert abs(cert.bound_value - res.objective) <= 1e-8

    def test_zero_cost(self, uniform01):
        lp = translp.TransportLP(np.zeros((2, 2)), uniform01.probs, uniform01.probs)
        cert = extract_certificate(lp, translp.solve_min(lp), s=-1.0)
        assert cert.bound_value == 0.0
        zero = DualCertificate(np.zeros(2), np.zeros(2), 0.0, 0.0, -1.0)
        assert check_certificate(lp, zero) == []

    def test_rejects_infeasible_triplet(self, uniform01):
        lp = threshold_lp(uniform01, uniform01, 1.0, None)
        big = DualCertificate(np.full(2, 0.5), np.full(2, 0.5), 0.0, 1.0, 1.0)
        reasons = check_certificate(lp, big)
        assert any("dual infeasible" in r for r in reasons)

    def test_rejects_wrong_value(self, uniform01):
        lp = threshold_lp(uniform01, uniform01, 1.0, None)
        cert = DualCertificate(np.zeros(2), np.zeros(2), 0.0, 0.25, 1.0)
        assert any("does not match" in r for r in check_certificate(lp, cert))

    def test_non_optimal_result(self, uniform01):
        lp = threshold_lp(uniform01, uniform01, 1.0, 0.9)
        with pytest.raises(CertificateError):
            extract_certificate(lp, translp.solve_min(lp), 1.0, 0.9)

    def test_single_coordinate_perturbation_detected(self, rng):
        p, q = random_marginal(rng, 5), random_marginal(rng, 5)
        k = float(np.mean(covariance_range(p, q)))
        for pt in wvar.scan(p, q, k):
            cert = extract_certificate(pt.lp, pt.result, pt.s, k)
            for i in range(len(p)):
                bad = copy.deepcopy(cert)
                bad.f[i] += 2.5e-8
                bad.bound_value += 2.5e-8 * p.probs[i]
                reasons = check_certificate(pt.lp, bad)
                assert any("dual infeasible" in r for r in reasons), (pt.s, i)


class TestBoundReport:
    def test_antimonotone_case(self, uniform01):
        r = bound_report(uniform01, uniform01, RiskQuery(0.9, 0.0))
        assert r.wvar == 1.0
        assert same_plan(r.witness, antimonotone(uniform01, uniform01))
        assert verify_report(uniform01, uniform01, r)

    def test_comonotone_case(self, uniform01):
        r = bound_report(uniform01, uniform01, RiskQuery(0.9, 0.5))
        assert r.wvar == 2.0
        assert same_plan(r.witness, comonotone(uniform01, uniform01))
        assert verify_report(uniform01, uniform01, r)

    def test_point_masses(self):
        p, q = point_mass(1.0), point_mass(2.5)
        r = bound_report(p, q, RiskQuery(0.95, 2.5))
        assert r.wvar == 3.5
        assert len(r.certificates) == 1
        assert r.certificates[0].bound_value == pytest.approx(1.0, abs=1e-12)
        assert verify_report(p, q, r)

    def test_truncated_report_verifies(self, rng):
        p, q = random_marginal(rng, 5, scale=3), random_marginal(rng, 5, scale=3)
        R = 2.0
        lo, hi = wvar.truncated_range(p, q, R)
        r = bound_report(p, q, RiskQuery(0.9, 0.5 * (lo + hi), R))
        assert r.truncation_R == R
        assert verify_report(p, q, report_from_json(r.to_json()))

    def test_random_reports_verify(self, rng):
        for _ in range(10):
            p, q = random_marginal(rng, 5), random_marginal(rng, 6)
            lo, hi = covariance_range(p, q)
            for k in (None, rng.uniform(lo, hi)):
                r = bound_report(p, q, RiskQuery(float(rng.choice([0.5, 0.9, 0.99])), k))
                result = verify_report(p, q, r)
                assert result, result.reasons


class TestSerialization:
    def test_round_trip(self, rng):
        p, q = random_marginal(rng, 6), random_marginal(rng, 6)
        k = float(np.mean(covariance_range(p, q)))
        r = bound_report(p, q, RiskQuery(0.9, k))
        back = report_from_json(r.to_json())
        assert back.wvar == r.wvar and back.k == r.k and back.alpha == r.alpha
        for a, b in zip(r.certificates, back.certificates):
            assert abs(a.bound_value - b.bound_value) <= 1e-12
            np.testing.assert_array_equal(a.f, b.f)
            np.testing.assert_array_equal(a.g, b.g)
            assert a.lambda_cov == b.lambda_cov
        assert verify_report(back.p, back.q, back)
        assert back.to_json() == r.to_json()

    def test_json_keys(self, uniform01):
        d = json.loads(bound_report(uniform01, uniform01, RiskQuery(0.9, 0.0)).to_json())
        for key in ("alpha", "k", "k_mode", "k_range", "wvar", "curve", "certificates", "witness", "warnings"):
            assert key in d
        assert set(d["curve"][0]) == {"s", "phi"}
        assert set(d["certificates"][0]) == {"f", "g", "lambda_cov", "bound_value", "s"}
        assert set(d["witness"]["entries"][0]) == {"x", "y", "mass"}


class TestTampering:
    @pytest.fixture
    def report_dict(self, rng):
        p, q = random_marginal(rng, 5, integer=True), random_marginal(rng, 5, integer=True)
        lo, hi = covariance_range(p, q)
        return json.loads(bound_report(p, q, RiskQuery(0.9, lo + 0.3 * (hi - lo))).to_json())

    def check(self, d):
        r = report_from_json(json.dumps(d))
        return verify_report(r.p, r.q, r)

    def test_untouched(self, report_dict):
        assert self.check(report_dict)

    def test_dual_perturbation(self, report_dict):
        report_dict["certificates"][1]["g"][0] += 0.01
        result = self.check(report_dict)
        assert not result and any("dual infeasible" in r or "does not match" in r for r in result.reasons)

    def test_witness_break(self, report_dict):
        report_dict["witness"]["entries"][0]["mass"] += 0.01
        result = self.check(report_dict)
        assert not result and any("witness infeasible" in r for r in result.reasons)

    def test_wvar_shift(self, report_dict):
        sums = [c["s"] for c in report_dict["curve"]]
        idx = sums.index(report_dict["wvar"])
        for new in {sums[max(idx - 1, 0)], sums[min(idx + 1, len(sums) - 1)]} - {report_dict["wvar"]}:
            d = copy.deepcopy(report_dict)
            d["wvar"] = new
            assert not self.check(d)

    def test_wvar_off_grid(self, report_dict):
        report_dict["wvar"] += 1e-3
        assert not self.check(report_dict)
