import json
import math

import pytest
from pydantic import ValidationError

from hetnet.config import LhmConfig, ScenarioConfig, StationConfig
from hetnet.errors import ConfigError
from hetnet.harness import (
    ALGORITHMS,
    FIG2_HEADER,
    FIG3_HEADER,
    TABLE1_HEADER,
    Metrics,
    SweepResult,
    SweepRow,
    check_grid,
    emit_plot_data,
    run_comparison,
    summarize,
    sweep_load,
)
from hetnet.ledger import RunLedger
from hetnet.lhm import ConstantAssociation, train_lhm_model
from hetnet.records import read_csv
from hetnet.scenario import generate_scenario

ALL_MBS = ConstantAssociation(1)


def starved(scenario, w_max):
    return scenario.model_copy(update={"mbs": scenario.mbs.model_copy(update={"w_max": w_max})})


@pytest.fixture
def comparison(small_scenario):
    return run_comparison(small_scenario, ALL_MBS, include_timings=False)


class TestRunComparison:
    def test_one_row_per_algorithm(self, comparison):
        assert [m.algorithm for m in comparison.metrics] == list(ALGORITHMS)
        assert comparison.succeeded == 3
        assert all(m.running_time == 0.0 for m in comparison.metrics)

    def test_metrics_arithmetic(self, comparison):
        for algorithm in ALGORITHMS:
            solution = comparison.solutions[algorithm]
            m = comparison.metric(algorithm)
            assert m.avg_cost_per_user == pytest.approx(solution.total_cost / solution.served_count)
            assert m.service_rate == solution.served_count / solution.n_users
            assert m.offloaded_count == solution.offloaded_count
            assert m.n_users == 10

    def test_jur_is_cheapest(self, comparison):
        jur = comparison.metric("JUR").avg_cost_per_user
        assert jur <= comparison.metric("DSM").avg_cost_per_user * (1 + 1e-9)
        assert jur <= comparison.metric("LHM").avg_cost_per_user * (1 + 1e-9)

    def test_without_sbs_all_agree(self):
        scenario = generate_scenario(ScenarioConfig(n_users=8, n_sbs=0), 2)
        result = run_comparison(scenario, ALL_MBS)
        costs = [result.metric(a).avg_cost_per_user for a in ALGORITHMS]
        assert costs == pytest.approx([costs[0]] * 3, rel=1e-5)
        assert all(result.metric(a).offloaded_count == 0 for a in ALGORITHMS)

    def test_failures_become_rows(self, two_cell_world):
        result = run_comparison(starved(two_cell_world, 1.0), ALL_MBS)
        assert result.succeeded == 1
        assert not result.metric("DSM").failed
        assert result.metric("DSM").service_rate == 0.0
        for algorithm in ("JUR", "LHM"):
            m = result.metric(algorithm)
            assert m.failed and m.message
            assert math.isnan(m.avg_cost_per_user)
            assert algorithm in result.errors

    def test_cost_rows_are_ordered(self, comparison):
        rows = comparison.cost_rows()
        assert len(rows) == 30
        assert rows[:3] == sorted(rows[:3], key=lambda r: ALGORITHMS.index(r[1]))
        assert [r[0] for r in rows] == sorted(r[0] for r in rows)

    def test_summary(self, comparison):
        summary = summarize(comparison)
        assert summary.jur_vs_dsm_cost <= 1.0 + 1e-9
        assert summary.lhm_vs_dsm_cost == pytest.approx(1.0, rel=1e-5)
        assert summary.lhm_fallbacks == 0
        assert summary.lhm_vs_jur_runtime is None
        assert 0.0 <= summary.lhm_agreement <= 1.0

    def test_metrics_validation(self):
        with pytest.raises(ValidationError):
            Metrics(
                algorithm="JUR",
                running_time=0.0,
                avg_cost_per_user=1.0,
                service_rate=1.0,
                offloaded_count=3,
                scenario_seed=0,
                n_users=2,
            )


class TestEmitPlotData:
    def test_files_and_rows(self, tmp_path, comparison):
        written = emit_plot_data(tmp_path, comparison)
        assert set(written) == {"table1.csv", "fig2_cost.csv", "summary.json"}
        table = read_csv(tmp_path / "table1.csv")
        assert tuple(table[0]) == TABLE1_HEADER
        assert [r["algorithm"] for r in table] == list(ALGORITHMS)
        costs = read_csv(tmp_path / "fig2_cost.csv")
        assert tuple(costs[0]) == FIG2_HEADER
        assert len(costs) == 30
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert "jur_vs_dsm_cost" in summary

    def test_repeat_is_byte_identical(self, tmp_path, small_scenario):
        first = emit_plot_data(tmp_path / "a", run_comparison(small_scenario, ALL_MBS, include_timings=False))
        second = emit_plot_data(tmp_path / "b", run_comparison(small_scenario, ALL_MBS, include_timings=False))
        assert first == second

    def test_nothing_to_write(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_plot_data(tmp_path)

    def test_ledger_manifest(self, tmp_path, comparison):
        ledger = RunLedger({"command": "compare", "seed": 7})
        written = emit_plot_data(tmp_path, comparison, ledger=ledger)
        manifest = RunLedger.from_json((tmp_path / "manifest.json").read_text())
        assert manifest.verify()
        assert manifest.files() == written
        assert any(e.kind == "inputs" for e in manifest.entries)

    def test_sweep_file(self, tmp_path):
        sweep = SweepResult(
            rows=[SweepRow(n_users=n, algorithm=a, service_rate=1.0, avg_cost=2.0) for a in ALGORITHMS for n in (2, 4)]
        )
        emit_plot_data(tmp_path, sweep=sweep)
        rows = read_csv(tmp_path / "fig3_service.csv")
        assert tuple(rows[0]) == FIG3_HEADER
        assert len(rows) == 6


class TestSweep:
    def test_single_point(self):
        result = sweep_load(ScenarioConfig(n_sbs=2), [1], ALL_MBS, master_seed=3, workers=1)
        assert [r.algorithm for r in result.rows] == list(ALGORITHMS)
        assert all(r.n_users == 1 for r in result.rows)
        assert all(r.service_rate == 1.0 for r in result.rows)

    def test_point_ignores_neighbours(self):
        config = ScenarioConfig(n_sbs=2)
        alone = sweep_load(config, [3], ALL_MBS, master_seed=3, workers=1)
        wider = sweep_load(config, [2, 3], ALL_MBS, master_seed=3, workers=1)
        assert [r for r in wider.rows if r.n_users == 3] == alone.rows

    @pytest.mark.parametrize("grid", [[], [4, 2], [3, 3], [0, 2]])
    def test_bad_grid(self, grid):
        with pytest.raises(ConfigError):
            check_grid(grid)
        with pytest.raises(ConfigError):
            sweep_load(ScenarioConfig(), grid, ALL_MBS, workers=1)

    def test_saturated_point_reports_blocking(self):
        config = ScenarioConfig(n_sbs=0, mbs=StationConfig(w_max=1.0))
        result = sweep_load(config, [2], ALL_MBS, workers=1)
        dsm = result.series("DSM")
        assert dsm == [(2, 0.0)]
        jur = next(r for r in result.rows if r.algorithm == "JUR")
        assert jur.service_rate == 0.0 and math.isnan(jur.avg_cost)

    def test_series_must_increase(self):
        with pytest.raises(ValidationError):
            SweepResult(
                rows=[
                    SweepRow(n_users=4, algorithm="DSM", service_rate=1.0, avg_cost=1.0),
                    SweepRow(n_users=2, algorithm="DSM", service_rate=1.0, avg_cost=1.0),
                ]
            )


@pytest.fixture(scope="module")
def trained_model():
    return train_lhm_model(LhmConfig(), ScenarioConfig(), master_seed=1).model


@pytest.mark.slow
class TestTrends:
    def test_offloading_keeps_everyone_served_as_dsm_saturates(self, trained_model):
        config = ScenarioConfig(mbs=StationConfig(w_max=4e8))
        result = sweep_load(config, range(300, 501, 20), trained_model, master_seed=1)
        dsm = [rate for _, rate in result.series("DSM")]
        assert all(b <= a for a, b in zip(dsm, dsm[1:]))
        assert dsm[-1] < 1.0
        for algorithm in ("JUR", "LHM"):
            assert all(rate == 1.0 for _, rate in result.series(algorithm))

    @pytest.mark.parametrize("seed", [1, 2])
    def test_default_world_bands(self, trained_model, seed):
        result = run_comparison(generate_scenario(ScenarioConfig(), seed), trained_model)
        assert result.succeeded == 3
        summary = summarize(result)
        jur = result.metric("JUR")
        assert 0.6 <= jur.offloaded_count / jur.n_users <= 0.9
        assert summary.lhm_repaired_agreement >= 0.9
        assert summary.lhm_vs_jur_cost_gap <= 0.1
        assert summary.jur_vs_dsm_cost <= 0.8
        assert summary.lhm_vs_dsm_cost <= 0.8
        assert summary.lhm_vs_jur_runtime <= 0.2
