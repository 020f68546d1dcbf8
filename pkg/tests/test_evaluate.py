from typing import Callable, Type, Optional
import math
import pathlib

import numpy as np
import pytest

import case_parser
import case_patches
import const
import errors
import evaluate
import scenario
from admittance import ZRatioSet
from evaluate import EvaluationError, MetricsReport
from formulation import Mode
from grid_case import QuantileBin
from scenario import ForecastProfile
from schedule import ScheduleSolution

CASES_DIR = pathlib.Path(__file__).resolve().parent.parent / "cases"


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
        "evaluate.utils.log_and_raise",
    )
    mock.side_effect = mock_log_and_raise_func

    return mock


@pytest.fixture
def two_bus():
    return case_parser.load_case(CASES_DIR / "two_bus.yml")


@pytest.fixture
def two_bus_tree(two_bus):
    return scenario.deterministic_tree(ForecastProfile.from_case(two_bus))


def make_schedule(case, tree, **arrays) -> ScheduleSolution:
    """A schedule of zeros over `tree`, overridden by `arrays`."""
    horizon, n_nodes = tree.horizon, len(tree.nodes)
    shapes = {
        "commitments": (horizon, len(case.sync_gens)),
        "startups": (horizon, len(case.sync_gens)),
        "shutdowns": (horizon, len(case.sync_gens)),
        "alphas": (horizon, len(case.gfm_units)),
        "sc_on": (horizon, len(case.condensers)),
        "p_g": (n_nodes, len(case.sync_gens)),
        "q_g": (n_nodes, len(case.sync_gens)),
        "p_gfm": (n_nodes, len(case.gfm_units)),
        "q_gfm": (n_nodes, len(case.gfm_units)),
        "p_ibg": (n_nodes, len(case.gfl_ibgs)),
        "q_ibg": (n_nodes, len(case.gfl_ibgs)),
        "h_si": (n_nodes, len(case.gfl_ibgs)),
        "q_stat": (n_nodes, len(case.statcoms)),
        "q_sc": (n_nodes, len(case.condensers)),
        "p_shed": (n_nodes, len(case.buses)),
        "c_bus": (n_nodes, len(case.buses)),
        "c_line": (n_nodes, len(case.lines)),
        "s_line": (n_nodes, len(case.lines)),
    }
    fields = {name: np.zeros(shape) for name, shape in shapes.items()}
    fields.update({name: np.asarray(value, dtype=float) for name, value in arrays.items()})
    return ScheduleSolution(mode=Mode.BASE_SI, objective=0.0, point=np.zeros(0), **fields)


class TestTco:
    def test_loss_figures(self):
        report = evaluate.tco(30.0, 0.008, energy_price=50.0, capex=1e6)
        assert report.p_loss == pytest.approx(0.24)
        assert report.e_loss == pytest.approx(2102.4)
        assert report.c_loss == pytest.approx(50.0 * 2102.4)
        assert report.c_oandm == pytest.approx(1e4)
        assert report.annual_total == pytest.approx(50.0 * 2102.4 + 1e4)

    def test_higher_loss_fraction(self):
        report = evaluate.tco(30.0, 0.015)
        assert report.p_loss == pytest.approx(0.45)
        assert report.e_loss == pytest.approx(3942.0)
        assert report.c_loss == 0.0

    def test_negative_input__raises(self, mock_log_and_raise):
        with pytest.raises(EvaluationError):
            evaluate.tco(-1.0, 0.01)
        assert errors.EV_NEGATIVE_INPUT in mock_log_and_raise.call_args[0]


class TestStabilityCone:
    def test_cone_violated(self):
        assert evaluate.cone_violated(10.0, 0.0, 1.0)
        assert not evaluate.cone_violated(0.5, 0.0, 1.0)
        # Q_hat + Gamma below zero
        assert evaluate.cone_violated(0.0, -2.0, 1.0)

    def test_equivalent_injections(self):
        ratios = ZRatioSet(labels=("a", "b"), self_ratio=(1.0, 1.0), mutual_ratio={(0, 1): 0.5, (1, 0): 0.25})
        p_hat, q_hat = evaluate.equivalent_injections([1.0, 2.0], [0.0, 4.0], ratios)
        assert p_hat.tolist() == [2.0, 2.25]
        assert q_hat.tolist() == [2.0, 4.0]

    def test_stability_margin(self):
        ratios = ZRatioSet(labels=("a", "b"), self_ratio=(4.0, 2.0))
        assert evaluate.stability_margin(ratios).tolist() == [2.0, 1.0]

    def test_violation_rate_counts_pairs(self, two_bus, two_bus_tree):
        # Gamma = 1 / (2 |0.01 + 0.35j|), about 1.43
        schedule = make_schedule(two_bus, two_bus_tree, commitments=[[1], [1]], p_ibg=[[0.3], [2.0]])
        stats = evaluate.violation_rate(schedule, two_bus, two_bus_tree)
        assert stats.n_pairs == 2
        assert stats.n_violated == 1
        assert stats.rate_pct == pytest.approx(50.0)
        assert stats.diagnostics == []

    def test_pairs_are_not_probability_weighted(self, two_bus):
        profile = ForecastProfile.from_case(two_bus, quantiles=(QuantileBin(0.25), QuantileBin(0.75)))
        tree = scenario.build_tree(profile, [1])
        assert len(tree.nodes) == 3
        p_ibg = [[2.0] if node.probability == pytest.approx(0.25) else [0.3] for node in tree.nodes]
        schedule = make_schedule(two_bus, tree, commitments=[[1], [1]], p_ibg=p_ibg)
        stats = evaluate.violation_rate(schedule, two_bus, tree)
        assert (stats.n_pairs, stats.n_violated) == (3, 1)
        assert stats.rate_pct == pytest.approx(100.0 / 3)

    def test_singular_hour_counts_as_violated(self, two_bus, two_bus_tree):
        schedule = make_schedule(two_bus, two_bus_tree, commitments=[[0], [1]], p_ibg=[[0.3], [0.3]])
        stats = evaluate.violation_rate(schedule, two_bus, two_bus_tree)
        assert stats.rate_pct == pytest.approx(50.0)
        assert [d.key for d in stats.diagnostics] == [errors.EV_SINGULAR_CONFIG]


class TestOperatingMetrics:
    def test_curtailment_and_shed(self, two_bus, two_bus_tree):
        # available wind is 0.30 and 0.35 p.u.
        schedule = make_schedule(two_bus, two_bus_tree, p_ibg=[[0.3], [0.2]], p_shed=[[0.0, 0.1], [0.0, 0.0]])
        curtail, shed = evaluate.curtailment_and_shed(schedule, two_bus_tree, two_bus)
        assert curtail == pytest.approx(7.5)
        assert shed == pytest.approx(5.0)

    def test_rank1_deviation(self, two_bus, two_bus_tree):
        tight = make_schedule(two_bus, two_bus_tree, c_bus=np.ones((2, 2)), c_line=np.ones((2, 1)))
        assert evaluate.rank1_deviation(tight, two_bus) == pytest.approx(0.0)
        loose = make_schedule(two_bus, two_bus_tree, c_bus=np.ones((2, 2)), c_line=np.full((2, 1), 0.5))
        assert evaluate.rank1_deviation(loose, two_bus) == pytest.approx(0.75)

    def test_no_frequency_data(self, two_bus, two_bus_tree):
        slacks = evaluate.frequency_slacks(make_schedule(two_bus, two_bus_tree), two_bus, two_bus_tree)
        assert math.isnan(slacks.nadir_slack)
        assert slacks.violation_rate_pct == 0.0

    def test_decommitted_fleet_breaks_frequency_limits(self):
        case = case_parser.load_case(CASES_DIR / "toy_3sg.yml")
        tree = scenario.deterministic_tree(ForecastProfile.from_case(case))
        slacks = evaluate.frequency_slacks(make_schedule(case, tree), case, tree)
        assert slacks.rocof_slack == -math.inf
        assert slacks.nadir_slack < 0
        assert slacks.violation_rate_pct == pytest.approx(100.0)

    def test_statcom_usage(self):
        case = case_parser.load_case(CASES_DIR / "toy_3sg.yml")
        tree = scenario.deterministic_tree(ForecastProfile.from_case(case))
        schedule = make_schedule(case, tree, q_stat=[[0.1], [-0.1]])
        assert evaluate.statcom_usage(schedule, tree, case) == pytest.approx(10.0)

    def test_strength_reference(self, two_bus):
        assert evaluate.strength_reference(two_bus) == pytest.approx(1.0 / abs(complex(0.01, 0.35)))

    def test_strength_ignores_statcom_rating(self):
        case = case_parser.load_case(CASES_DIR / "toy_3sg.yml")
        patch = case_patches.StatcomRatingPatch()
        values = [evaluate.strength_reference(patch.apply(case, rating)) for rating in (5.0, 10.0, 20.0, 40.0)]
        assert max(values) - min(values) <= 1e-12

    def test_strength_rises_with_condenser_rating(self):
        case = case_parser.load_case(CASES_DIR / "toy_3sg.yml")
        patch = case_patches.ScRatingPatch(site_bus=3)
        values = [evaluate.strength_reference(patch.apply(case, rating)) for rating in (0.0, 10.0, 20.0, 40.0, 80.0)]
        assert all(np.diff(values) > 0)


class TestMetricsReport:
    def test_as_row(self):
        report = MetricsReport(
            cost_expected=1.0,
            violation_rate_pct=0.0,
            violation_rate_surrogate_pct=math.nan,
            curtailment_mw=2.0,
            shed_mw=0.0,
            freq_violation_pct=0.0,
            nadir_slack_min=0.1,
            rocof_slack_min=0.2,
            soc_gap_mean=0.0,
            soc_gap_max=0.0,
            rank1_mean=0.0,
            strength_ref=3.0,
            strength_sched=2.0,
            statcom_usage_mvar=0.0,
            voltage={"2": 1.01},
            gamma_mva={"2": 140.0},
        )
        row = report.as_row()
        assert row[const.COL_COST] == 1.0
        assert row[const.COL_CURTAIL] == 2.0
        assert row[const.COL_VOLTAGE_PREFIX + "2"] == 1.01
        assert row[const.COL_GAMMA_PREFIX + "2"] == 140.0
