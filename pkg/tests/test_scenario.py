from typing import Callable, Type, Optional
import pathlib

import numpy as np
import pytest

import case_parser
import errors
import scenario
from grid_case import QuantileBin
from scenario import ForecastProfile, ScenarioError

CASES_DIR = pathlib.Path(__file__).resolve().parent.parent / "cases"

TWO_BINS = (QuantileBin(0.4, wind_dev=-0.1), QuantileBin(0.6, wind_dev=0.1, load_dev=0.02))


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
        "scenario.utils.log_and_raise",
    )
    mock.side_effect = mock_log_and_raise_func

    return mock


@pytest.fixture
def toy_case():
    return case_parser.load_case(CASES_DIR / "toy_3sg.yml")


@pytest.fixture
def two_bus():
    return case_parser.load_case(CASES_DIR / "two_bus.yml")


class TestForecastProfile:
    def test_slices_day_profile(self, toy_case):
        profile = ForecastProfile.from_case(toy_case, start_hour=1, horizon=3)
        assert profile.horizon == 3
        assert profile.central_wind.shape == (3, 1)
        assert np.allclose(profile.central_wind[:, 0], [0.45, 0.40, 0.20])
        assert profile.central_load_p.shape == (3, 3)
        assert profile.central_load_p[0, 1] == pytest.approx(0.6 * 1.1)
        assert profile.central_load_q[2, 2] == pytest.approx(0.1 * 0.9)

    def test_defaults_from_case_profile(self, toy_case):
        profile = ForecastProfile.from_case(toy_case)
        assert profile.horizon == 2
        assert profile.error_quantiles[1] == toy_case.profile.quantiles

    def test_window_past_profile__raises(self, mock_log_and_raise, toy_case):
        with pytest.raises(ScenarioError):
            ForecastProfile.from_case(toy_case, start_hour=3, horizon=2)
        assert errors.SC_PROFILE_TOO_SHORT in mock_log_and_raise.call_args[0]


class TestBuildTree:
    def test_toy_case_tree(self, toy_case):
        tree = scenario.build_tree(ForecastProfile.from_case(toy_case), toy_case.profile.branching_hours)
        assert len(tree.nodes) == 4
        assert [node.probability for node in tree.nodes_at_depth(1)] == pytest.approx([0.25, 0.5, 0.25])
        assert [node.wind_scale for node in tree.nodes_at_depth(1)] == pytest.approx([0.8, 1.0, 1.2])
        assert [child.id for child in tree.children(0)] == [1, 2, 3]
        assert len(tree.leaves) == 3

    def test_node_realization(self, toy_case):
        tree = scenario.build_tree(ForecastProfile.from_case(toy_case), (1,))
        low = scenario.node_realization(tree, 1)
        assert low.wind[0] == pytest.approx(0.45 * 0.8)
        assert low.load_p[1] == pytest.approx(0.6 * 1.1 * 1.05)
        root = scenario.node_realization(tree, 0)
        assert root.wind[0] == pytest.approx(0.30)

    def test_deterministic_tree_is_a_path(self, two_bus):
        tree = scenario.deterministic_tree(ForecastProfile.from_case(two_bus))
        assert [node.parent for node in tree.nodes] == [None, 0]
        assert all(node.probability == 1.0 for node in tree.nodes)

    def test_deviations_compose_along_path(self, two_bus):
        profile = ForecastProfile.from_case(two_bus, horizon=3, quantiles=TWO_BINS)
        tree = scenario.build_tree(profile, (1, 2))
        assert len(tree.nodes) == 7
        for depth in range(3):
            assert tree.depth_probability(depth) == pytest.approx(1.0)
        leaf = tree.leaves[-1]
        assert leaf.wind_scale == pytest.approx(1.1 * 1.1)
        assert leaf.load_scale == pytest.approx(1.02 * 1.02)
        assert leaf.probability == pytest.approx(0.36)
        assert [node.depth for node in tree.path(leaf.id)] == [0, 1, 2]

    def test_non_branching_hours_copy_parent(self, two_bus):
        profile = ForecastProfile.from_case(two_bus, horizon=3, quantiles=TWO_BINS)
        tree = scenario.build_tree(profile, (1,))
        assert len(tree.nodes) == 5
        assert [node.wind_scale for node in tree.nodes_at_depth(2)] == pytest.approx([0.9, 1.1])

    def test_branching_hour_outside_horizon__raises(self, mock_log_and_raise, two_bus):
        with pytest.raises(ScenarioError):
            scenario.build_tree(ForecastProfile.from_case(two_bus), (2,))
        assert errors.SC_BAD_BRANCHING_HOURS in mock_log_and_raise.call_args[0]

    def test_bad_masses__raises(self, mock_log_and_raise, two_bus):
        profile = ForecastProfile.from_case(two_bus, quantiles=(QuantileBin(0.5), QuantileBin(0.2)))
        with pytest.raises(ScenarioError):
            scenario.build_tree(profile, (1,))
        assert errors.SC_BAD_MASSES in mock_log_and_raise.call_args[0]

    def test_empty_quantiles__raises(self, mock_log_and_raise, two_bus):
        profile = ForecastProfile.from_case(two_bus, quantiles=())
        with pytest.raises(ScenarioError):
            scenario.build_tree(profile, (1,))
        assert errors.SC_EMPTY_QUANTILES in mock_log_and_raise.call_args[0]

    def test_negative_realization__raises(self, mock_log_and_raise, two_bus):
        profile = ForecastProfile.from_case(two_bus, quantiles=(QuantileBin(1.0, wind_dev=-1.5),))
        with pytest.raises(ScenarioError):
            scenario.build_tree(profile, (1,))
        assert errors.SC_NEGATIVE_REALIZATION in mock_log_and_raise.call_args[0]

    def test_unknown_node__raises(self, mock_log_and_raise, two_bus):
        tree = scenario.deterministic_tree(ForecastProfile.from_case(two_bus))
        with pytest.raises(ScenarioError):
            tree.node(5)
        assert errors.SC_UNKNOWN_NODE in mock_log_and_raise.call_args[0]
