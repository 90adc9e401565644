import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_max, brute_force_min
from riskbound import translp
from riskbound.couplings import comonotone, covariance_range, mix_for_k, xy_grid
from riskbound.exceptions import SolverError
from riskbound.translp import SideConstraint, TransportLP, check_dual_feasible, solve_max, solve_min

from conftest import marginals, random_marginal


def random_instance(rng, max_atoms=3, with_side=True):
    p = random_marginal(rng, rng.integers(1, max_atoms + 1))
    q = random_marginal(rng, rng.integers(1, max_atoms + 1))
    cost = rng.random((len(p), len(q)))
    side = []
    if with_side:
        lo, hi = covariance_range(p, q)
        side = [SideConstraint(xy_grid(p, q), rng.uniform(lo, hi))]
    return p, q, TransportLP(cost, p.probs, q.probs, side)


def assert_result_invariants(lp, res):
    assert res.optimal
    m, n = lp.shape
    plan = res.primal
    assert plan.min() >= 0
    np.testing.assert_allclose(plan.sum(axis=1), lp.row_marginal, atol=1e-9)
    np.testing.assert_allclose(plan.sum(axis=0), lp.col_marginal, atol=1e-9)
    for s in lp.side_constraints:
        assert abs(np.sum(s.coeff * plan) - s.rhs) <= 1e-9 * max(1.0, abs(s.rhs))
    red = translp.reduced_costs(lp, res.dual_row, res.dual_col, res.dual_side)
    assert red.min() >= -1e-9
    assert np.all(np.abs(red[plan > 1e-12]) <= 1e-8)
    ok, _, value = check_dual_feasible(lp, res.dual_row, res.dual_col, res.dual_side)
    assert ok
    assert abs(value - res.objective) <= 1e-8


class TestValidation:
    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            TransportLP(np.zeros((2, 3)), [0.5, 0.5], [0.5, 0.5])
        with pytest.raises(ValueError):
            TransportLP(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5], [(np.zeros((3, 2)), 0.0)])

    def test_bad_marginals(self):
        with pytest.raises(ValueError):
            TransportLP(np.zeros((2, 2)), [0.5, 0.6], [0.5, 0.5])
        with pytest.raises(ValueError):
            TransportLP(np.zeros((2, 2)), [1.0, 0.0], [0.5, 0.5])

    def test_check_dual_shapes(self, uniform01):
        lp = TransportLP(np.zeros((2, 2)), uniform01.probs, uniform01.probs)
        with pytest.raises(ValueError):
            check_dual_feasible(lp, [0, 0, 0], [0, 0], [])


class TestSolveMin:
    def test_zero_cost(self, rng):
        _, _, lp = random_instance(rng, 5)
        res = solve_min(lp.with_cost(np.zeros(lp.shape)))
        assert res.objective == 0.0
        assert_result_invariants(lp.with_cost(np.zeros(lp.shape)), res)

    def test_forced_comonotone(self, uniform01):
        s = uniform01.values[:, None] + uniform01.values[None, :]
        lp = TransportLP((s <= 1).astype(float), uniform01.probs, uniform01.probs, [(xy_grid(uniform01, uniform01), 0.5)])
        res = solve_min(lp)
        assert res.objective == pytest.approx(0.5, abs=1e-12)
        np.testing.assert_allclose(res.primal, [[0.5, 0], [0, 0.5]], atol=1e-12)
        assert_result_invariants(lp, res)

    @pytest.mark.parametrize("rule", ["bland", "hybrid"])
    def test_matches_basis_enumeration(self, rng, rule):
        for _ in range(40):
            p, q, lp = random_instance(rng, 3)
            res = solve_min(lp, rule=rule)
            expected = brute_force_min(lp.cost, p.probs, q.probs, [(s.coeff, s.rhs) for s in lp.side_constraints])
            assert res.objective == pytest.approx(expected, abs=1e-9)
            assert_result_invariants(lp, res)

    def test_infeasible_k(self, uniform01):
        lp = TransportLP(np.ones((2, 2)), uniform01.probs, uniform01.probs, [(xy_grid(uniform01, uniform01), 0.7)])
        assert solve_min(lp).status == translp.INFEASIBLE
        lp = TransportLP(np.ones((2, 2)), uniform01.probs, uniform01.probs, [(xy_grid(uniform01, uniform01), -0.2)])
        assert solve_min(lp).status == translp.INFEASIBLE

    def test_redundant_side_row(self):
        # point-mass marginal: the side row is a combination of the marginal rows
        p = random_marginal(np.random.default_rng(3), 1)
        q = random_marginal(np.random.default_rng(4), 4)
        k = covariance_range(p, q)[0]
        cost = np.random.default_rng(5).random((1, 4))
        res = solve_min(TransportLP(cost, p.probs, q.probs, [(xy_grid(p, q), k)]))
        assert res.objective == pytest.approx(float((cost @ q.probs)[0]), abs=1e-12)

    def test_warm_start_agrees(self, rng):
        for _ in range(30):
            p, q, lp = random_instance(rng, 6)
            witness = mix_for_k(p, q, lp.side_constraints[0].rhs).to_matrix()
            cold, warm = solve_min(lp), solve_min(lp, warm_start=witness)
            assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
            assert_result_invariants(lp, warm)

    def test_start_basis_reuse(self, rng):
        p, q, lp = random_instance(rng, 6)
        first = solve_min(lp)
        other = lp.with_cost(rng.random(lp.shape))
        res = solve_min(other, start_basis=first.basis)
        assert res.objective == pytest.approx(solve_min(other).objective, abs=1e-9)

    def test_infeasible_start_is_discarded(self, uniform01):
        lp = TransportLP(np.eye(2), uniform01.probs, uniform01.probs)
        res = solve_min(lp, start_basis=np.array([0, 3, 5]))
        assert res.objective == pytest.approx(0.0, abs=1e-12)

    def test_iteration_cap(self, rng):
        p, q = random_marginal(rng, 6), random_marginal(rng, 6)
        lp = TransportLP(rng.random((6, 6)), p.probs, q.probs)
        with pytest.raises(SolverError):
            solve_min(lp, max_iter=1)

    def test_deterministic(self, rng):
        _, _, lp = random_instance(rng, 8)
        a, b = solve_min(lp), solve_min(lp)
        np.testing.assert_array_equal(a.primal, b.primal)
        np.testing.assert_array_equal(a.dual_row, b.dual_row)
        np.testing.assert_array_equal(a.dual_col, b.dual_col)
        np.testing.assert_array_equal(a.dual_side, b.dual_side)
        assert a.iterations == b.iterations


class TestSolveMax:
    def test_xy_uniform(self, uniform01):
        res = solve_max(TransportLP(xy_grid(uniform01, uniform01), uniform01.probs, uniform01.probs))
        assert res.objective == pytest.approx(0.5, abs=1e-12)

    def test_constant(self, rng):
        _, _, lp = random_instance(rng, 5, with_side=False)
        assert solve_max(lp.with_cost(np.full(lp.shape, 3.25))).objective == pytest.approx(3.25, abs=1e-12)

    def test_matches_oracle(self, rng):
        for _ in range(30):
            p, q, lp = random_instance(rng, 3)
            expected = brute_force_max(lp.cost, p.probs, q.probs, [(s.coeff, s.rhs) for s in lp.side_constraints])
            res = solve_max(lp)
            assert res.objective == pytest.approx(expected, abs=1e-9)
            # duals of a maximization bound the cost from above
            red = translp.reduced_costs(lp, res.dual_row, res.dual_col, res.dual_side)
            assert red.max() <= 1e-9

    def test_xy_extremes_equal_couplings(self, rng):
        for _ in range(20):
            p = random_marginal(rng, rng.integers(1, 8))
            q = random_marginal(rng, rng.integers(1, 8))
            lp = TransportLP(xy_grid(p, q), p.probs, q.probs)
            lo, hi = covariance_range(p, q)
            assert solve_min(lp).objective == pytest.approx(lo, abs=1e-9)
            assert solve_max(lp).objective == pytest.approx(hi, abs=1e-9)


class TestDualCheck:
    def test_zero_duals(self, rng):
        _, _, lp = random_instance(rng, 4)
        ok, worst, value = check_dual_feasible(lp, np.zeros(lp.shape[0]), np.zeros(lp.shape[1]), [0.0])
        assert ok and value == 0.0 and worst <= 0

    def test_perturbed_dual_detected(self, rng):
        _, _, lp = random_instance(rng, 4)
        res = solve_min(lp)
        tight_row = int(np.argmax((res.primal > 1e-12).any(axis=1)))
        f = res.dual_row.copy()
        f[tight_row] += 1.0
        ok, worst, _ = check_dual_feasible(lp, f, res.dual_col, res.dual_side)
        assert not ok and worst > 0.5

    @settings(max_examples=40, deadline=None)
    @given(marginals(), marginals(), st.floats(0, 1), st.integers(0, 2**32 - 1))
    def test_weak_duality(self, p, q, t, seed):
        rng = np.random.default_rng(seed)
        lo, hi = covariance_range(p, q)
        lp = TransportLP(rng.random((len(p), len(q))), p.probs, q.probs, [(xy_grid(p, q), lo + t * (hi - lo))])
        primal = solve_min(lp).objective
        # any dual-feasible triplet: random f, g, lambda shifted down to feasibility
        f, g, lam = rng.normal(size=len(p)), rng.normal(size=len(q)), rng.normal()
        red = translp.reduced_costs(lp, f, g, [lam])
        f = f + min(0.0, red.min())
        ok, _, value = check_dual_feasible(lp, f, g, [lam])
        assert ok
        assert value <= primal + 1e-8

    def test_unconstrained_comonotone_cost(self, uniform01):
        lp = TransportLP(-xy_grid(uniform01, uniform01), uniform01.probs, uniform01.probs)
        res = solve_min(lp, warm_start=comonotone(uniform01, uniform01).to_matrix())
        assert res.objective == pytest.approx(-0.5, abs=1e-12)
        assert res.dual_side.size == 0
