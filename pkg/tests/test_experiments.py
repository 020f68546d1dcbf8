from typing import Callable, Type, Optional
import math
import pathlib
import textwrap
import types

import numpy as np
import pandas as pd
import pytest
import yaml

import case_parser
import const
import errors
import experiments
import run_context
from case_patches import SweepAxis
from experiments import ExperimentError, PlotDataError
from formulation import Mode

CASES_DIR = pathlib.Path(__file__).resolve().parent.parent / "cases"
CONFIGS_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"


def mock_log_and_raise_func(
    logger_func: Callable,
    error_message: str,
    exception: Type[BaseException],
    error_key: Optional[str] = None,
):
    raise exception


@pytest.fixture(autouse=True)
def mock_log_and_raise(mocker):
    mock = mocker.patch(
        "experiments.utils.log_and_raise",
    )
    mock.side_effect = mock_log_and_raise_func

    return mock


@pytest.fixture
def two_bus():
    return case_parser.load_case(CASES_DIR / "two_bus.yml")


@pytest.fixture
def toy_case():
    return case_parser.load_case(CASES_DIR / "toy_3sg.yml")


def metrics_table():
    rows = []
    for value in (100.0, 50.0):
        for mode, cost in (("base_si", 10.0), ("vsc_si", 12.0)):
            rows.append(
                {
                    const.COL_SWEEP_VALUE: value,
                    const.COL_MODE: mode,
                    const.COL_STATUS: "optimal",
                    const.COL_COST: cost + value,
                    const.COL_VIOL: 0.0 if mode == "vsc_si" else 25.0,
                }
            )
    return pd.DataFrame(rows)


class TestExperimentSpec:
    def test_parse(self):
        document = yaml.safe_load(
            textwrap.dedent(
                """
            case: cases/toy_3sg.yml
            modes: [base_si, VSC_SI]
            sweep:
              axis: wind_capacity
              values: [50, 100]
            tree:
              horizon: 2
              quantiles:
                - {mass: 0.5, wind: -0.1}
                - {mass: 0.5, wind: 0.1}
            """
            )
        )
        spec = experiments.parse_experiment_spec(document)
        assert spec.name == "toy_3sg"
        assert spec.modes == (Mode.BASE_SI, Mode.VSC_SI)
        assert spec.axis == SweepAxis.WIND_CAPACITY
        assert spec.values == (50.0, 100.0)
        assert spec.horizon == 2
        assert [q.wind_dev for q in spec.quantiles] == [-0.1, 0.1]
        assert spec.branching_hours is None

    def test_case_path_relative_to_document(self, tmp_path):
        spec = experiments.parse_experiment_spec({"case": "absent.yml", "modes": ["base_si"]}, base_dir=tmp_path)
        assert spec.case_path == tmp_path / "absent.yml"
        assert spec.axis == SweepAxis.NONE
        assert spec.values == (0.0,)

    def test_bundled_configs_parse(self):
        for path in sorted(CONFIGS_DIR.glob("*.yml")):
            spec = experiments.load_experiment_spec(path)
            assert spec.case_path.exists(), path

    def test_no_modes__raises(self, mock_log_and_raise):
        with pytest.raises(ExperimentError):
            experiments.parse_experiment_spec({"case": "x.yml", "modes": []})
        assert errors.EX_NO_MODES in mock_log_and_raise.call_args[0]

    def test_unknown_mode__raises(self, mock_log_and_raise):
        with pytest.raises(ExperimentError):
            experiments.parse_experiment_spec({"case": "x.yml", "modes": ["fast"]})
        assert errors.EX_BAD_SPEC in mock_log_and_raise.call_args[0]

    @pytest.mark.parametrize("values", [[100, 50], [1, math.nan]])
    def test_bad_values__raises(self, mock_log_and_raise, values):
        with pytest.raises(ExperimentError):
            experiments.check_values(values)
        assert errors.EX_UNSORTED_VALUES in mock_log_and_raise.call_args[0]


class TestHelpers:
    def test_make_tree_drops_branching_past_horizon(self, toy_case):
        assert len(experiments.make_tree(toy_case).nodes) == 4
        assert len(experiments.make_tree(toy_case, horizon=1).nodes) == 1

    def test_needs_surrogate(self, toy_case):
        assert not experiments.needs_surrogate(toy_case, [Mode.BASE_SI])
        assert experiments.needs_surrogate(toy_case, [Mode.BASE_SI, Mode.VSC_Q_SI])

    def test_table_columns(self):
        columns = experiments.table_columns(["3"])
        assert columns[:4] == [const.COL_EXPERIMENT, const.COL_SWEEP_VALUE, const.COL_MODE, const.COL_STATUS]
        assert "v_3" in columns and "gamma_3" in columns
        assert columns[-1] == const.COL_ERROR

    def test_failed_row_and_count(self):
        row = experiments.failed_row("demo", 10.0, Mode.VSC_SI, ValueError("boom"))
        assert row[const.COL_STATUS] == experiments.STATUS_FAILED
        assert row[const.COL_ERROR] == "ValueError: boom"
        table = pd.concat([metrics_table(), pd.DataFrame([row])], ignore_index=True)
        assert experiments.failure_count(table) == 1
        assert experiments.failure_count(pd.DataFrame()) == 0

    def test_implemented_cost(self, two_bus):
        schedule = types.SimpleNamespace(
            p_g=np.array([[0.5]]), commitments=np.array([[1]]), startups=np.array([[1]]),
            p_shed=np.array([[0.0, 0.01]]),
        )
        # 0.01*100^2*0.25 + 20*100*0.5 + 100 + 500 + 10000*100*0.01
        assert experiments.implemented_cost(two_bus, schedule) == pytest.approx(25.0 + 1000.0 + 600.0 + 10000.0)

    def test_next_state(self, toy_case):
        first = types.SimpleNamespace(commitments=np.array([[1, 0, 1]]), p_g=np.array([[0.3, 0.0, 0.1]]))
        state = experiments.next_state(toy_case, first, None)
        assert [s.on for s in state] == [True, False, True]
        assert state[0].hours_in_state == 2
        assert state[0].p_prev == pytest.approx(0.3)
        second = types.SimpleNamespace(commitments=np.array([[1, 1, 1]]), p_g=np.array([[0.3, 0.1, 0.1]]))
        state = experiments.next_state(toy_case, second, state)
        assert [s.hours_in_state for s in state] == [3, 1, 2]


class TestVerifyCommitmentSequence:
    def test_short_run(self, toy_case):
        commitments = np.array([[0, 1, 1], [1, 1, 1], [0, 1, 1], [0, 1, 1]])
        found = experiments.verify_commitment_sequence(toy_case, commitments)
        assert [d.location for d in found] == ["sync_gens[0].hour[1]"]

    def test_run_cut_by_sequence_end(self, toy_case):
        commitments = np.array([[0, 1, 1], [0, 1, 1], [1, 1, 1]])
        assert experiments.verify_commitment_sequence(toy_case, commitments) == []

    def test_ramp(self, toy_case):
        commitments = np.ones((2, 3), dtype=int)
        dispatch = np.array([[0.3, 0.1, 0.1], [0.3, 0.6, 0.1]])
        found = experiments.verify_commitment_sequence(toy_case, commitments, dispatch)
        assert [d.location for d in found] == ["sync_gens[1].hour[1]"]


class TestPlotData:
    def test_pivot_per_mode(self):
        frame = experiments.plot_frame(metrics_table(), "wind_sweep")
        assert list(frame.columns) == ["wind_mw", "cost_base_si", "cost_vsc_si", "viol_pct_base_si", "viol_pct_vsc_si"]
        assert frame["wind_mw"].tolist() == [50.0, 100.0]
        assert frame["cost_vsc_si"].tolist() == [62.0, 112.0]

    def test_empty_table_gives_header(self, tmp_path):
        empty = pd.DataFrame(columns=experiments.table_columns([]))
        path = experiments.emit_plotdata(empty, "curtailment", tmp_path)
        assert path.read_text(encoding="utf-8").strip() == "wind_mw,curtail_mw,shed_mw"

    def test_unknown_figure__raises(self, mock_log_and_raise):
        with pytest.raises(PlotDataError):
            experiments.plot_frame(metrics_table(), "fig99")
        assert errors.EX_UNKNOWN_FIGURE in mock_log_and_raise.call_args[0]

    def test_missing_column__raises(self, mock_log_and_raise):
        with pytest.raises(PlotDataError):
            experiments.plot_frame(metrics_table(), "statcom_usage")
        assert errors.EX_MISSING_COLUMN in mock_log_and_raise.call_args[0]


class TestRuns:
    def test_dry_run_sweep(self, toy_case, tmp_path):
        spec = experiments.parse_experiment_spec(
            {"name": "dry", "case": str(CASES_DIR / "toy_3sg.yml"), "modes": ["base_si"],
             "sweep": {"axis": "statcom_rating", "values": [10, 20]}}
        )
        context = run_context.create_run_context(out_dir=str(tmp_path), dry_run=True)
        table = experiments.run_sweep(spec, context, toy_case)
        assert table[const.COL_STATUS].tolist() == [experiments.STATUS_DRY_RUN] * 2
        assert experiments.failure_count(table) == 0
        manifest = yaml.safe_load((tmp_path / "dry_manifest.yml").read_text(encoding="utf-8"))
        assert manifest["rows"] == 2
        assert (tmp_path / "dry.csv").exists()

    def test_context_levels_reach_the_program(self, toy_case):
        context = run_context.create_run_context(n_v=5, dry_run=True)
        model = experiments.train_surrogate(toy_case, context)
        assert model.alpha_levels == (5,)
        outcome = experiments.run_point(toy_case, experiments.make_tree(toy_case), Mode.VSC_SI, context, model)
        assert outcome.status == experiments.STATUS_DRY_RUN
        assert sum(name.startswith("lvl[0,") for name in outcome.program.names) == 5

    def test_two_bus_solve(self, two_bus):
        tree = experiments.make_tree(two_bus)
        context = run_context.create_run_context({const.REL_GAP: 1e-6})
        outcome = experiments.run_point(two_bus, tree, Mode.BASE_SI, context)
        assert outcome.solved
        assert outcome.schedule.commitments.tolist() == [[1], [1]]
        assert outcome.metrics.shed_mw == pytest.approx(0.0, abs=1e-3)
        assert outcome.metrics.soc_gap_max < 1e-2

    def test_two_bus_rolling(self, two_bus):
        context = run_context.create_run_context({const.REL_GAP: 1e-6})
        result = experiments.run_rolling(two_bus, Mode.BASE_SI, context, steps=2)
        assert len(result.steps) == 2
        assert result.implemented_commitments.tolist() == [[1], [1]]
        assert experiments.verify_commitment_sequence(two_bus, result.implemented_commitments) == []
        assert result.daily()["implemented_cost"] > 0
