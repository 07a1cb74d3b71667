import numpy as np
import pytest

import soiverify as sv
from soiverify.bounds import ACTIVE, INACTIVE, PhaseFixings, interval_propagate
from soiverify.gen import random_network
from soiverify.query import forward_assignment
from soiverify.search import (
    PseudoImpactTable,
    Result,
    SearchConfig,
    pick_branch_relu,
    split,
    update_pseudo_impact,
)
from soiverify.soi import SoiConfig

from conftest import make_gap_instance, make_relu_identity, oracle_decides


def make_cfg(seed=0, **kw):
    soi_kw = {}
    for key in ("T", "beta", "strategy", "visited_tracking_max"):
        if key in kw:
            soi_kw[key] = kw.pop(key)
    return SearchConfig(soi=SoiConfig(seed=seed, **soi_kw), **kw)


class TestPseudoImpact:
    def test_ema_from_zero(self):
        table = PseudoImpactTable.zeros(3, gamma=0.5)
        update_pseudo_impact(table, 1, 4.0)
        assert table.score[1] == pytest.approx(2.0)

    def test_fixed_point(self):
        table = PseudoImpactTable.zeros(1, gamma=0.5)
        table.score[0] = 1.5
        update_pseudo_impact(table, 0, 1.5)
        assert table.score[0] == pytest.approx(1.5)

    def test_two_unit_updates(self):
        table = PseudoImpactTable.zeros(1, gamma=0.5)
        update_pseudo_impact(table, 0, 1.0)
        update_pseudo_impact(table, 0, 1.0)
        assert table.score[0] == pytest.approx(0.75)

    def test_bad_delta_rejected(self):
        table = PseudoImpactTable.zeros(1, gamma=0.5)
        with pytest.raises(ValueError):
            update_pseudo_impact(table, 0, -1.0)


class TestPickBranch:
    def test_static_order_when_shallow(self):
        table = PseudoImpactTable.zeros(6, gamma=0.5)
        table.score[:] = [0, 0, 0, 0, 0, 9]
        cfg = make_cfg()
        assert pick_branch_relu(0, np.array([2, 4, 5]), table, cfg) == 2

    def test_argmax_when_deep(self):
        table = PseudoImpactTable.zeros(6, gamma=0.5)
        table.score[1] = 0.2
        table.score[5] = 0.9
        cfg = make_cfg()
        assert pick_branch_relu(3, np.array([1, 5]), table, cfg) == 5

    def test_tie_breaks_topologically(self):
        table = PseudoImpactTable.zeros(4, gamma=0.5)
        cfg = make_cfg()
        assert pick_branch_relu(5, np.array([1, 2, 3]), table, cfg) == 1

    def test_static_heuristic_ignores_scores(self):
        table = PseudoImpactTable.zeros(4, gamma=0.5)
        table.score[3] = 5.0
        cfg = make_cfg(heuristic="static")
        assert pick_branch_relu(9, np.array([0, 3]), table, cfg) == 0

    def test_no_free_relu_is_an_error(self):
        cfg = make_cfg()
        with pytest.raises(ValueError):
            pick_branch_relu(0, np.array([], dtype=int), PseudoImpactTable.zeros(1, 0.5), cfg)


class TestSplit:
    def test_children_phases(self):
        fix = PhaseFixings.all_free(3)
        child_a, child_i = split(fix, 1)
        assert child_a.status[1] == ACTIVE and child_i.status[1] == INACTIVE
        assert child_a.status[0] == child_i.status[0] == 0

    def test_children_cover_node(self):
        # every exact solution lands in at least one child (both at pre = 0)
        rng = np.random.default_rng(0)
        net = random_network(rng, 2, [3], 2, weight_scale=2.0)
        q = sv.Query([[0, 1]] * 2, (sv.LinearConstraint({0: 1.0}, ">=", -1e9),))
        cs = sv.encode(net, q)
        relu = 1
        pre = cs.index.relu_pre[relu]
        for _ in range(200):
            alpha = forward_assignment(cs, sv.forward(net, rng.uniform(0, 1, 2)))
            in_active = alpha[pre] >= 0
            in_inactive = alpha[pre] <= 0
            assert in_active or in_inactive

    def test_bounds_implied_infeasible_child(self, relu_identity_net):
        # box forces the ReLU active, so the inactive child's bounds cross
        fix = PhaseFixings.all_free(1).with_phase(0, INACTIVE)
        bm = interval_propagate(relu_identity_net, [[0.5, 1.0]], fix)
        assert bm.infeasible

    def test_children_equisatisfiable_with_node(self):
        # oracle verdict of the node equals the OR of the children verdicts
        rng = np.random.default_rng(3)
        checked = 0
        while checked < 50:
            net = random_network(rng, 2, [3], 2, weight_scale=2.0)
            x0 = rng.uniform(0, 1, 2)
            q = sv.targeted_robustness_query(net, x0, 0.3, 0, 1)
            cs = sv.encode(net, q)
            bm = sv.back_substitute(net, q.input_box, PhaseFixings.all_free(cs.index.n_relus))
            if bm.infeasible:
                continue
            base = sv.detect_fixed(bm, cs.index)
            free = base.free_indices()
            if len(free) == 0:
                continue
            node_sat, _ = oracle_decides(net, q)
            relu = int(free[0])
            child_results = []
            for child in split(base, relu):
                cbm = interval_propagate(net, q.input_box, child)
                if cbm.infeasible:
                    child_results.append(False)
                    continue
                verdict = sv.enumerate_patterns(cs, cbm.intersect(bm), net=net, box=q.input_box)
                child_results.append(verdict.sat)
            assert node_sat == (child_results[0] or child_results[1])
            checked += 1


class TestCompleteSearch:
    def test_relu_output_nonnegative_unsat(self, relu_identity_net):
        q = sv.Query([[-1, 1]], (sv.LinearConstraint({0: 1.0}, "<=", -0.1),))
        verdict = sv.complete_search(relu_identity_net, q, make_cfg())
        assert verdict.result is Result.UNSAT

    def test_witness_found_and_checked(self, relu_identity_net):
        q = sv.Query([[-1, 1]], (sv.LinearConstraint({0: 1.0}, ">=", 0.5),))
        verdict = sv.complete_search(relu_identity_net, q, make_cfg())
        assert verdict.result is Result.SAT
        cs = sv.encode(relu_identity_net, q)
        assert sv.check_assignment(cs, verdict.witness, 1e-6)
        assert verdict.witness[cs.index.input_ids[0]] >= 0.5 - 1e-6

    def test_gap_instance_unsat(self):
        net, q = make_gap_instance()
        verdict = sv.complete_search(net, q, make_cfg())
        assert verdict.result is Result.UNSAT

    def test_agreement_with_oracle_on_hard_instances(self):
        # heavier weights and wider boxes force real branching
        rng = np.random.default_rng(10)
        branched = 0
        for _ in range(60):
            net = random_network(rng, 3, [4, 4], 2, weight_scale=3.0)
            x0 = rng.uniform(0, 1, 3)
            q = sv.targeted_robustness_query(net, x0, 1.0, 0, 1)
            want_sat, _ = oracle_decides(net, q)
            for strategy in ("mcmc", "walksat", "lponly"):
                verdict = sv.complete_search(
                    net, q, make_cfg(seed=3, strategy=strategy, timeout=30.0)
                )
                assert verdict.result is (Result.SAT if want_sat else Result.UNSAT)
                if verdict.result is Result.SAT:
                    cs = sv.encode(net, q)
                    assert sv.check_assignment(cs, verdict.witness, 1e-6)
                branched += verdict.stats.nodes > 1
        assert branched > 10  # the suite actually exercises the tree

    def test_tree_depth_bounded_by_relu_count(self):
        net, q = make_gap_instance()
        cfg = make_cfg(trace=True, T=1)
        verdict = sv.complete_search(net, q, cfg)
        assert verdict.result is Result.UNSAT
        assert verdict.trace is not None
        assert max(rec["depth"] for rec in verdict.trace) <= net.relu_count

    def test_timeout_verdict(self):
        net, q = make_gap_instance()
        cfg = make_cfg(timeout=0.0)
        verdict = sv.complete_search(net, q, cfg)
        assert verdict.result is Result.TIMEOUT

    def test_node_limit_yields_unknown(self):
        rng = np.random.default_rng(2)
        net = random_network(rng, 3, [4, 4], 2, weight_scale=3.0)
        q = sv.targeted_robustness_query(net, rng.uniform(0, 1, 3), 1.0, 0, 1)
        cfg = make_cfg(node_limit=1, T=1)
        verdict = sv.complete_search(net, q, cfg)
        assert verdict.result in (Result.UNKNOWN, Result.SAT, Result.UNSAT)
        assert verdict.stats.nodes <= 2

    def test_determinism_same_seed(self):
        rng = np.random.default_rng(4)
        net = random_network(rng, 3, [4, 3], 2, weight_scale=3.0)
        q = sv.targeted_robustness_query(net, rng.uniform(0, 1, 3), 0.8, 0, 1)
        a = sv.complete_search(net, q, make_cfg(seed=5))
        b = sv.complete_search(net, q, make_cfg(seed=5))
        assert a.result == b.result
        assert a.stats.nodes == b.stats.nodes
        assert a.stats.proposals == b.stats.proposals
        assert a.stats.lp_pivots == b.stats.lp_pivots
        if a.witness is not None:
            assert np.array_equal(a.witness, b.witness)

    def test_bound_inheritance_keeps_solutions(self):
        # exact solutions inside a child's phase survive the inherited bounds
        rng = np.random.default_rng(6)
        net = random_network(rng, 2, [3, 2], 2, weight_scale=2.0)
        q = sv.Query([[0, 1]] * 2, (sv.LinearConstraint({0: 1.0}, ">=", -1e9),))
        cs = sv.encode(net, q)
        root_fix = PhaseFixings.all_free(cs.index.n_relus)
        bm = sv.back_substitute(net, q.input_box, root_fix)
        from soiverify.lp import derive_row_bounds
        from soiverify.relaxation import build_relaxation

        build = build_relaxation(cs, bm, sv.detect_fixed(bm, cs.index))
        derived = derive_row_bounds(build.lp, bm)
        for _ in range(300):
            alpha = forward_assignment(cs, sv.forward(net, rng.uniform(0, 1, 2)))
            assert (alpha >= derived.lower[: cs.n_vars] - 1e-9).all()
            assert (alpha <= derived.upper[: cs.n_vars] + 1e-9).all()

    def test_strategies_agree_where_finished(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            net = random_network(rng, 2, [3, 3], 2, weight_scale=2.0)
            q = sv.targeted_robustness_query(net, rng.uniform(0, 1, 2), 0.3, 0, 1)
            verdicts = set()
            for strategy in ("mcmc", "lponly"):
                v = sv.complete_search(net, q, make_cfg(seed=1, strategy=strategy))
                if v.result in (Result.SAT, Result.UNSAT):
                    verdicts.add(v.result)
            assert len(verdicts) <= 1
