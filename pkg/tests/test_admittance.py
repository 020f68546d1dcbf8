from dataclasses import replace
from typing import Callable, Type, Optional
import pathlib

import numpy as np
import pytest
import yaml

import admittance
import case_parser
import errors
from admittance import AdmittanceError, DeviceConfig, SingularMatrixError

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
        "admittance.utils.log_and_raise",
    )
    mock.side_effect = mock_log_and_raise_func

    return mock


@pytest.fixture
def two_bus():
    return case_parser.load_case(CASES_DIR / "two_bus.yml")


@pytest.fixture
def toy_case():
    return case_parser.load_case(CASES_DIR / "toy_3sg.yml")


class TestBuildY0:
    def test_two_bus_pi_model(self, two_bus):
        ys = 1.0 / complex(0.01, 0.1)
        expected = np.array([[ys, -ys], [-ys, ys]])
        assert np.allclose(admittance.build_y0(two_bus), expected)

    def test_line_charging_on_diagonal(self, toy_case):
        y0 = admittance.build_y0(toy_case)
        assert np.allclose(y0, y0.T)
        # two lines of b_sh 0.02 meet at every bus, each adds half
        assert np.allclose(y0.sum(axis=1), 0.02j * np.ones(3))


class TestBuildYg:
    def test_devices_on_diagonal(self, toy_case):
        yg = admittance.build_yg(toy_case, (1, 0, 1), (0.5,))
        expected = np.diag([1 / 0.4j + 1 / 0.5j, 0.0, 0.5 / 0.3j])
        assert np.allclose(yg, expected)

    def test_fleet_mismatch__raises(self, mock_log_and_raise, toy_case):
        with pytest.raises(AdmittanceError):
            admittance.build_yg(toy_case, (1, 1), (1.0,))
        assert errors.AD_BAD_CONFIG in mock_log_and_raise.call_args[0]

    def test_alpha_out_of_range__raises(self, mock_log_and_raise, toy_case):
        with pytest.raises(AdmittanceError):
            admittance.build_yg(toy_case, (1, 1, 1), (1.5,))
        assert errors.AD_BAD_CONFIG in mock_log_and_raise.call_args[0]


class TestZRatios:
    def test_two_bus_self_ratio(self, two_bus):
        ratios = admittance.z_ratios(two_bus, DeviceConfig(commitments=(1,), alphas=()))
        # Z22 = j0.25 + (0.01 + j0.1)
        assert ratios.labels == ("2",)
        assert ratios.self_ratio[0] == pytest.approx(1.0 / abs(complex(0.01, 0.35)))
        assert ratios.mutual_ratio == {}

    def test_no_grid_forming_device__raises(self, mock_log_and_raise, two_bus):
        with pytest.raises(SingularMatrixError):
            admittance.z_ratios(two_bus, DeviceConfig(commitments=(0,), alphas=()))
        assert errors.AD_SINGULAR in mock_log_and_raise.call_args[0]

    def test_more_devices_strengthen_the_grid(self, toy_case):
        weak = admittance.strength_indicator(toy_case, DeviceConfig((1, 0, 0), (0.0,)))
        strong = admittance.strength_indicator(toy_case, admittance.reference_config(toy_case))
        assert strong.mean > weak.mean

    def test_mutual_ratios_and_labels(self, toy_case):
        second = replace(toy_case.gfl_ibgs[0], bus=2, name="w2")
        case = replace(toy_case, gfl_ibgs=toy_case.gfl_ibgs + (second,))
        ratios = admittance.z_ratios(case, admittance.reference_config(case))
        assert ratios.labels == ("3", "2")
        assert set(ratios.mutual_ratio) == {(0, 1), (1, 0)}
        assert all(0.0 < value < 1.0 for value in ratios.mutual_ratio.values())
        assert set(ratios.as_targets()) == set(admittance.target_names(case))
        assert admittance.target_names(case) == ("z1_3", "z2_3", "z1_2", "z3_2")

    def test_shared_bus_labels(self, toy_case):
        case = replace(toy_case, gfl_ibgs=toy_case.gfl_ibgs * 2)
        assert admittance.ibg_labels(case) == ("3.0", "3.1")

    def test_reference_config(self, toy_case):
        config = admittance.reference_config(toy_case)
        assert config.commitments == (1, 1, 1)
        assert config.alphas == (1.0,)
        assert config.sc_on == ()


def chain_case(n_bus: int, rng) -> dict:
    """A connected chain of `n_bus` buses with SGs at random buses and one IBG at the far end."""
    document = yaml.safe_load((CASES_DIR / "two_bus.yml").read_text(encoding="utf-8"))
    template = document["sync_gens"][0]
    document["buses"] = [{"id": i + 1, "v_min": 0.9, "v_max": 1.1, "reference": i == 0} for i in range(n_bus)]
    document["lines"] = [
        {"from": i + 1, "to": i + 2, "r": float(rng.uniform(0.0, 0.05)), "x": float(rng.uniform(0.05, 0.5)),
         "b_sh": float(rng.uniform(0.0, 0.05))}
        for i in range(n_bus - 1)
    ]
    document["sync_gens"] = [
        dict(template, name=f"g{k}", bus=int(bus), x_transient=float(rng.uniform(0.1, 0.5)))
        for k, bus in enumerate(rng.integers(1, n_bus + 1, size=int(rng.integers(1, 4))))
    ]
    document["gfl_ibgs"][0]["bus"] = n_bus
    return document


class TestImpedanceOracle:
    def test_hand_derived_two_bus(self):
        document = yaml.safe_load((CASES_DIR / "two_bus.yml").read_text(encoding="utf-8"))
        document["lines"][0].update({"r": 0.0, "x": 0.1})
        document["sync_gens"][0]["x_transient"] = 0.2
        case = case_parser.parse_case(document)
        z = admittance.compute_z(admittance.build_model(case, DeviceConfig((1,), ()))).z
        assert z[0, 0] == pytest.approx(0.2j)
        assert z[1, 1] == pytest.approx(0.3j)
        assert z[0, 1] == pytest.approx(0.2j)

    def test_random_cases_invert(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n_bus = int(rng.integers(2, 7))
            case = case_parser.parse_case(chain_case(n_bus, rng))
            model = admittance.build_model(case, admittance.reference_config(case))
            z = admittance.compute_z(model).z
            assert np.allclose(model.y @ z, np.eye(n_bus), atol=1e-9)
