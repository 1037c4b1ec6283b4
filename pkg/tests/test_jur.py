import math
from dataclasses import replace

import numpy as np
import pytest

from builders import mbs, placed_user, sbs, world
from hetnet.config import DelayParams, JurOptions, ScenarioConfig, StationConfig
from hetnet.cro import CroInstance
from hetnet.errors import InfeasibleError, TooLargeError
from hetnet.jur import (
    BOUND_GAP,
    EXACT,
    SOLUTION_CSV_HEADER,
    solve_dsm,
    solve_jur_bnb,
    solve_jur_exhaustive,
    write_solution_csv,
)
from hetnet.pricing import build_bid_table
from hetnet.records import read_csv
from hetnet.scenario import generate_scenario


def solve_both(scenario):
    bids = build_bid_table(scenario)
    try:
        exhaustive = solve_jur_exhaustive(scenario, bids)
    except InfeasibleError:
        with pytest.raises(InfeasibleError):
            solve_jur_bnb(scenario, bids)
        return None, None
    return exhaustive, solve_jur_bnb(scenario, bids)


class TestExactSolvers:
    @pytest.mark.parametrize("seed", range(50))
    def test_bnb_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        config = ScenarioConfig(
            n_users=int(rng.integers(4, 13)),
            n_sbs=int(rng.integers(1, 4)),
            hotspot_fraction=0.8,
        )
        exhaustive, bnb = solve_both(generate_scenario(config, seed))
        assert bnb.optimality == EXACT
        assert bnb.total_cost == pytest.approx(exhaustive.total_cost, rel=1e-9)

    @pytest.mark.parametrize("seed", range(4))
    def test_bnb_matches_enumeration_under_tight_bandwidth(self, seed):
        config = ScenarioConfig(
            n_users=6,
            n_sbs=2,
            hotspot_fraction=0.8,
            mbs=StationConfig(w_max=4e6),
        )
        exhaustive, bnb = solve_both(generate_scenario(config, 50 + seed))
        if exhaustive is None:
            return
        assert bnb.total_cost == pytest.approx(exhaustive.total_cost, rel=1e-9)
        assert bnb.resources.bandwidth_used <= 4e6

    def test_audits(self):
        scenario = generate_scenario(ScenarioConfig(n_users=12, n_sbs=3, hotspot_fraction=0.8), 5)
        solution = solve_jur_bnb(scenario, build_bid_table(scenario))
        assert solution.audit_objective() == pytest.approx(solution.total_cost, rel=1e-12)
        assert solution.audit_constraints() == []
        assert sum(solution.user_costs().values()) == pytest.approx(solution.total_cost, rel=1e-9)
        assert solution.served_count == solution.n_users

    def test_offloads_only_with_a_bid(self):
        scenario = generate_scenario(ScenarioConfig(n_users=15, n_sbs=2), 8)
        bids = build_bid_table(scenario)
        solution = solve_jur_bnb(scenario, bids)
        for user_id in solution.association.offloaded():
            assert bids.offloadable(user_id)
            assert solution.association.serving[user_id] == bids.best(user_id).sbs_id

    def test_too_large_for_enumeration(self):
        scenario = generate_scenario(ScenarioConfig(n_users=25, n_sbs=2), 1)
        with pytest.raises(TooLargeError):
            solve_jur_exhaustive(scenario, build_bid_table(scenario))

    def test_node_budget_reports_gap(self):
        scenario = generate_scenario(ScenarioConfig(n_users=10, n_sbs=2, hotspot_fraction=1.0), 3)
        bids = build_bid_table(scenario)
        limited = solve_jur_bnb(scenario, bids, JurOptions(node_budget=1))
        exact = solve_jur_bnb(scenario, bids)
        assert limited.optimality in (EXACT, BOUND_GAP)
        assert limited.gap >= 0
        assert limited.nodes == 1
        assert limited.total_cost >= exact.total_cost * (1 - 1e-12)
        assert limited.audit_constraints() == []


class TestSingleUser:
    def test_cheap_bid_is_taken(self):
        macro = mbs()
        small = sbs(1, (1500.0, 0.0))
        user = placed_user(0, (1550.0, 0.0), [macro, small])
        scenario = world(macro, [small], [user])
        solution = solve_jur_bnb(scenario, build_bid_table(scenario))
        assert solution.association.mu == {0: 0}
        assert solution.association.serving == {0: 1}

    def test_near_mbs_stays(self):
        macro = mbs()
        small = sbs(1, (300.0, 0.0), reward_markup=5.0)
        user = placed_user(0, (50.0, 0.0), [macro, small])
        scenario = world(macro, [small], [user])
        solution = solve_jur_bnb(scenario, build_bid_table(scenario))
        assert solution.association.mu == {0: 1}
        assert solution.offloaded_count == 0

    def test_tight_delay_pins_to_mbs(self):
        macro = mbs()
        small = sbs(1, (1500.0, 0.0))
        user = placed_user(0, (1550.0, 0.0), [macro, small], d_th=2e-3)
        scenario = world(macro, [small], [user])
        solution = solve_jur_bnb(scenario, build_bid_table(scenario))
        assert solution.association.mu == {0: 1}

    def test_choice_matches_cheaper_option(self, two_cell_world):
        bids = build_bid_table(two_cell_world)
        solution = solve_jur_bnb(two_cell_world, bids)
        dsm = solve_dsm(two_cell_world, bids)
        mbs_cost = dsm.user_costs()[0]
        expected = 0 if bids.best_total(0) < mbs_cost else 1
        assert solution.association.mu[0] == expected
        assert solution.association.mu[1] == 1 and solution.association.mu[2] == 1


class TestDsm:
    def test_everyone_on_mbs(self, small_scenario):
        solution = solve_dsm(small_scenario)
        assert set(solution.association.mu.values()) == {1}
        assert solution.offloaded_count == 0
        assert solution.service_rate == 1.0
        assert solution.audit_constraints() == []

    def test_jur_never_costs_more(self):
        for seed in range(5):
            scenario = generate_scenario(ScenarioConfig(n_users=12, n_sbs=3), seed)
            bids = build_bid_table(scenario)
            dsm = solve_dsm(scenario, bids)
            if dsm.unserved:
                continue
            assert solve_jur_bnb(scenario, bids).total_cost <= dsm.total_cost * (1 + 1e-12)

    def test_no_bandwidth_serves_nobody(self):
        config = ScenarioConfig(n_users=5, n_sbs=1, mbs=StationConfig(w_max=0.0))
        solution = solve_dsm(generate_scenario(config, 2))
        assert solution.service_rate == 0.0
        assert sorted(solution.unserved) == list(range(5))
        assert solution.total_cost == 0.0

    def test_drops_largest_demand_first(self):
        macro = mbs()
        users = [placed_user(i, (200.0 + 800.0 * i, 0.0), [macro]) for i in range(2)]
        scenario = world(macro, [], users)
        near, far = CroInstance.from_scenario(scenario).min_demand()
        budget = near + 0.5 * far
        starved = world(macro.model_copy(update={"w_max": budget}), [], users)
        solution = solve_dsm(starved)
        # the far user needs more bandwidth at full power
        assert solution.unserved == (1,)
        assert solution.served_count == 1
        assert solution.user_costs()[1] == 0.0


class TestSolutionCsv:
    def test_rows_and_extra_columns(self, tmp_path, small_scenario):
        solution = solve_jur_bnb(small_scenario, build_bid_table(small_scenario))
        path = write_solution_csv(solution, tmp_path / "solution.csv", extra={"fallbacks": 0})
        rows = read_csv(path)
        assert tuple(rows[0]) == SOLUTION_CSV_HEADER + ("fallbacks",)
        assert [int(r["user_id"]) for r in rows] == list(range(len(small_scenario.users)))
        total = math.fsum(float(r["user_cost"]) for r in rows)
        assert total == pytest.approx(solution.total_cost, rel=1e-9)


class TestDelayBlocked:
    @pytest.fixture
    def slow_core(self):
        """d_c of 5 ms: user 1 cannot meet its 4 ms threshold anywhere"""
        macro = mbs()
        small = sbs(1, (800.0, 0.0))
        stations = [macro, small]
        users = [
            placed_user(0, (850.0, 50.0), stations, d_th=15e-3),
            placed_user(1, (100.0, 0.0), stations, d_th=4e-3),
            placed_user(2, (-900.0, 0.0), stations, d_th=15e-3),
        ]
        return world(macro, [small], users, delay=DelayParams(d_c=5e-3))

    def test_exact_solvers_name_the_user(self, slow_core):
        bids = build_bid_table(slow_core)
        for solve in (solve_jur_bnb, solve_jur_exhaustive):
            with pytest.raises(InfeasibleError) as info:
                solve(slow_core, bids)
            assert info.value.blocking_users == (1,)

    def test_dsm_leaves_the_user_unserved(self, slow_core):
        solution = solve_dsm(slow_core)
        assert solution.unserved == (1,)
        assert solution.served_count == 2
        assert solution.user_costs()[1] == 0.0
        assert solution.audit_constraints() == []

    def test_audit_flags_late_mbs_user(self, small_scenario):
        solution = solve_jur_bnb(small_scenario, build_bid_table(small_scenario))
        victim = solution.association.mbs_served()[0]
        users = tuple(
            u.model_copy(update={"d_th": small_scenario.delay.d_c}) if u.id == victim else u
            for u in small_scenario.users
        )
        tampered = replace(solution, scenario=small_scenario.model_copy(update={"users": users}))
        assert f"user {victim} served by the MBS past its delay threshold" in tampered.audit_constraints()
