import numpy as np
import pytest

import soiverify as sv
from soiverify.bounds import ACTIVE, INACTIVE, PhaseFixings, detect_fixed
from soiverify.gen import random_network
from soiverify.lp import LpStatus, check_sat
from soiverify.query import forward_assignment
from soiverify.relaxation import build_relaxation, triangle_coeffs
from soiverify.soi import soi_objective, PhasePattern

from conftest import make_relu_identity, relaxation_point_feasible, root_state


class TestTriangleCoeffs:
    def test_symmetric_bounds(self):
        # the dashed upper cut for bounds [-2.5, 2.5]
        slope, intercept = triangle_coeffs(-2.5, 2.5)
        assert slope == pytest.approx(0.5)
        assert intercept == pytest.approx(1.25)

    def test_any_symmetric_slope_half(self):
        for u in (0.1, 1.0, 7.5):
            slope, _ = triangle_coeffs(-u, u)
            assert slope == pytest.approx(0.5)

    def test_asymmetric(self):
        slope, intercept = triangle_coeffs(-1.0, 3.0)
        assert slope == pytest.approx(0.75)
        assert intercept == pytest.approx(0.75)

    def test_degenerate_bounds_rejected(self):
        with pytest.raises(ValueError):
            triangle_coeffs(1.0, 1.0)
        with pytest.raises(ValueError):
            triangle_coeffs(2.0, 1.0)
        with pytest.raises(ValueError):
            triangle_coeffs(0.5, 1.0)  # not straddling zero

    def test_cut_passes_through_corners(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            l = -float(rng.uniform(0.1, 5))
            u = float(rng.uniform(0.1, 5))
            slope, intercept = triangle_coeffs(l, u)
            assert slope * l + intercept == pytest.approx(0.0, abs=1e-12)
            assert slope * u + intercept == pytest.approx(u, abs=1e-12)


def _pin(lp, var, value):
    lp.col_lower[var] = value
    lp.col_upper[var] = value


class TestBuildRelaxation:
    def test_triangle_membership_hand_points(self):
        # bounds [-1, 1]: slope 0.5, intercept 0.5. The upper cut maps
        # pre = -1 to 0, so (-1, 0.5) lies outside the triangle while
        # (-0.5, 0.2) lies inside it but off the ReLU graph.
        net = make_relu_identity()
        query = sv.Query([[-1, 1]], (sv.LinearConstraint({0: 1.0}, ">=", -10.0),))
        cs, bm, fix = root_state(net, query)
        pre, post = cs.index.relu_pre[0], cs.index.relu_post[0]

        def feasible_with(pre_v, post_v):
            build = build_relaxation(cs, bm, fix)
            _pin(build.lp, int(pre), pre_v)
            _pin(build.lp, int(post), post_v)
            return check_sat(build.lp).status is LpStatus.FEASIBLE

        assert not feasible_with(-1.0, 0.5)
        assert feasible_with(-0.5, 0.2)
        assert feasible_with(0.5, 0.5)  # on the graph
        # the interior point violates the exact query
        alpha = np.zeros(cs.n_vars)
        alpha[cs.index.input_ids[0]] = -0.5
        alpha[pre] = -0.5
        alpha[post] = 0.2
        alpha[cs.index.output_ids[0]] = 0.2
        assert not sv.check_assignment(cs, alpha, 1e-9)

    def test_all_fixed_collapses_to_exact(self):
        # with every phase fixed, any feasible LP point satisfies the query
        rng = np.random.default_rng(1)
        for _ in range(20):
            net = random_network(rng, 2, [3], 2, weight_scale=2.0)
            query = sv.targeted_robustness_query(
                net, rng.uniform(0, 1, 2), 0.3, 0, 1
            )
            cs, bm, _ = root_state(net, query)
            if bm.infeasible:
                continue
            status = np.where(
                rng.uniform(size=cs.index.n_relus) < 0.5, ACTIVE, INACTIVE
            ).astype(np.int8)
            fixing = PhaseFixings(status)
            build = build_relaxation(cs, bm, fixing)
            sol = check_sat(build.lp)
            if sol.status is LpStatus.FEASIBLE:
                assert sv.check_assignment(cs, sol.assignment[: cs.n_vars], 1e-6)

    def test_soundness_forward_points_feasible(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            net = random_network(rng, 3, [4, 3], 2, weight_scale=2.0)
            query = sv.Query(
                [[0, 1]] * 3, (sv.LinearConstraint({0: 1.0}, ">=", -1e9),)
            )
            cs, bm, fix = root_state(net, query)
            fix = detect_fixed(bm, cs.index, fix)
            build = build_relaxation(cs, bm, fix)
            for _ in range(50):
                alpha = forward_assignment(cs, sv.forward(net, rng.uniform(0, 1, 3)))
                assert relaxation_point_feasible(build, alpha, tol=1e-9)

    def test_soi_nonnegative_over_relaxation(self):
        # minimum of any pattern objective over the relaxation is >= 0
        rng = np.random.default_rng(3)
        from soiverify.lp import SimplexSolver

        for _ in range(10):
            net = random_network(rng, 2, [3, 2], 2, weight_scale=2.0)
            query = sv.targeted_robustness_query(net, rng.uniform(0, 1, 2), 0.3, 0, 1)
            cs, bm, fix = root_state(net, query)
            if bm.infeasible:
                continue
            fix = detect_fixed(bm, cs.index, fix)
            free = fix.free_indices()
            build = build_relaxation(cs, bm, fix)
            solver = SimplexSolver(build.lp)
            if solver.check_sat().status is not LpStatus.FEASIBLE:
                continue
            for _ in range(5):
                pattern = PhasePattern(
                    tuple(int(r) for r in free),
                    tuple(bool(b) for b in rng.uniform(size=len(free)) < 0.5),
                )
                sol = solver.minimize(soi_objective(pattern, cs))
                assert sol.status is LpStatus.FEASIBLE
                assert sol.objective_value >= -1e-8

    def test_fixed_phase_tightness(self):
        # restricted to one pattern: LP feasibility iff some exact solution
        # with that pattern exists (cross-checked by dense sampling)
        net = make_relu_identity()
        query = sv.Query([[-1, 1]], (sv.LinearConstraint({0: 1.0}, ">=", 0.5),))
        cs, bm, _ = root_state(net, query)
        active = PhaseFixings(np.array([ACTIVE], dtype=np.int8))
        inactive = PhaseFixings(np.array([INACTIVE], dtype=np.int8))
        sol_a = check_sat(build_relaxation(cs, bm, active).lp)
        sol_i = check_sat(build_relaxation(cs, bm, inactive).lp)
        # y = relu(x) >= 0.5 has active-phase solutions (x >= 0.5) and no
        # inactive-phase solution (y would be 0)
        assert sol_a.status is LpStatus.FEASIBLE
        assert sol_i.status is LpStatus.INFEASIBLE
