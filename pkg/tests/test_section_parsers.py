from typing import Callable, Type, Optional

import pytest

import const
import errors
import section_parsers
from grid_case import ShuntDeviceKind
from section_parsers import CaseParseError


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
        "section_parsers.utils.log_and_raise",
    )
    mock.side_effect = mock_log_and_raise_func

    return mock


class TestSectionParsers:
    def test_parse_bus_defaults(self):
        bus = section_parsers.parse_bus({const.BUS_ID: 4, const.V_MIN: 0.9, const.V_MAX: 1.1}, "buses[0]")
        assert bus.id == 4
        assert bus.p_load == 0.0
        assert not bus.is_reference

    def test_parse_bus_missing_nodes__raises(self, mock_log_and_raise):
        with pytest.raises(CaseParseError) as err:
            section_parsers.parse_bus({const.BUS_ID: 4}, "buses[2]")
        assert err.value.field_path == "buses[2]"
        assert errors.SP_MISSING_FIELDS in mock_log_and_raise.call_args[0]

    def test_entry_not_a_mapping__raises(self, mock_log_and_raise):
        with pytest.raises(CaseParseError):
            section_parsers.parse_line([1, 2], "lines[0]")
        assert errors.SP_BAD_SECTION_TYPE in mock_log_and_raise.call_args[0]

    def test_non_numeric_field__raises(self, mock_log_and_raise):
        entry = {const.FROM_BUS: 1, const.TO_BUS: 2, const.R: 0.01, const.X: "big"}
        with pytest.raises(CaseParseError) as err:
            section_parsers.parse_line(entry, "lines[3]")
        assert err.value.field_path == "lines[3].x"
        assert errors.SP_BAD_FIELD_TYPE in mock_log_and_raise.call_args[0]

    def test_boolean_is_not_a_number__raises(self, mock_log_and_raise):
        entry = {const.FROM_BUS: 1, const.TO_BUS: 2, const.R: True, const.X: 0.1}
        with pytest.raises(CaseParseError):
            section_parsers.parse_line(entry, "lines[0]")
        assert errors.SP_BAD_FIELD_TYPE in mock_log_and_raise.call_args[0]

    def test_float_bus_id__raises(self, mock_log_and_raise):
        with pytest.raises(CaseParseError) as err:
            section_parsers.parse_bus({const.BUS_ID: 1.5, const.V_MIN: 0.9, const.V_MAX: 1.1}, "buses[0]")
        assert err.value.field_path == "buses[0].id"

    def test_line_rating_is_optional(self):
        entry = {const.FROM_BUS: 1, const.TO_BUS: 2, const.R: 0.01, const.X: 0.1}
        line = section_parsers.parse_line(entry, "lines[0]")
        assert line.rating is None
        assert line.b_sh == 0.0

    def test_map_device_kind(self):
        assert section_parsers.map_device_kind("statcom", "x") == ShuntDeviceKind.STATCOM
        assert section_parsers.map_device_kind("synchronous_condenser", "x") == ShuntDeviceKind.SYNCHRONOUS_CONDENSER

    def test_invalid_device_kind__raises(self, mock_log_and_raise):
        entry = {const.KIND: "svc", const.BUS: 3, const.Q_RATING_MVAR: 10}
        with pytest.raises(CaseParseError) as err:
            section_parsers.parse_shunt_device(entry, "shunt_devices[0]")
        assert err.value.field_path == "shunt_devices[0].kind"
        assert errors.SP_INVALID_DEVICE_KIND in mock_log_and_raise.call_args[0]

    def test_gfl_ibg_default_rating(self):
        entry = {const.BUS: 3, const.AVAILABLE_MW: [10, 20]}
        ibg = section_parsers.parse_gfl_ibg(entry, "gfl_ibgs[0]", base_mva=250.0)
        assert ibg.s_max == 250.0
        assert ibg.available_profile == (10.0, 20.0)
        assert not ibg.si_capable

    def test_gfl_ibg_bad_profile__raises(self, mock_log_and_raise):
        with pytest.raises(CaseParseError):
            section_parsers.parse_gfl_ibg({const.BUS: 3, const.AVAILABLE_MW: 12}, "gfl_ibgs[0]")
        assert errors.SP_BAD_FIELD_TYPE in mock_log_and_raise.call_args[0]

    def test_frequency_default_f0(self):
        entry = {const.DP_L_MW: 30, const.DF_LIM_HZ: 0.5, const.T_D: 10, const.DAMPING_D: 0.5, const.ROCOF_MAX: 1}
        freq = section_parsers.parse_frequency(entry, "frequency")
        assert freq.f0 == 50.0
        assert freq.dp_l == 30.0

    def test_profile_deterministic_by_default(self):
        profile = section_parsers.parse_profile({const.LOAD_FACTOR: [1.0, 0.9, 0.8]}, "profile")
        assert profile.horizon == 3
        assert len(profile.quantiles) == 1
        assert profile.quantiles[0].mass == 1.0
        assert profile.branching_hours == ()

    def test_profile_quantiles(self):
        entry = {
            const.LOAD_FACTOR: [1.0, 1.0],
            const.HORIZON: 2,
            const.BRANCHING_HOURS: [1],
            const.QUANTILES: [{const.MASS: 0.5, const.WIND_DEV: -0.1}, {const.MASS: 0.5, const.LOAD_DEV: 0.02}],
        }
        profile = section_parsers.parse_profile(entry, "profile")
        assert profile.quantiles[0].wind_dev == -0.1
        assert profile.quantiles[1].load_dev == 0.02
        assert profile.branching_hours == (1,)

    def test_profile_bad_branching__raises(self, mock_log_and_raise):
        entry = {const.LOAD_FACTOR: [1.0], const.BRANCHING_HOURS: [0.5]}
        with pytest.raises(CaseParseError) as err:
            section_parsers.parse_profile(entry, "profile")
        assert err.value.field_path == "profile.branching_hours"

    def test_parse_costs(self):
        assert section_parsers.parse_costs({const.SHED_COST: 5000}, "costs") == 5000.0
