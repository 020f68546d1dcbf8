from dataclasses import replace
import pathlib

import pytest

import case_parser
import errors
import grid_case
from grid_case import Bus, FrequencyParams, Line, QuantileBin, Severity, ShuntDeviceKind, ShuntReactiveDevice

CASES_DIR = pathlib.Path(__file__).resolve().parent.parent / "cases"


@pytest.fixture
def toy_case():
    return case_parser.load_case(CASES_DIR / "toy_3sg.yml")


@pytest.fixture
def raw_toy_case(toy_case):
    return grid_case.denormalize(toy_case)


def _keys(diagnostics):
    return [d.key for d in diagnostics]


class TestNormalize:
    def test_per_unit_values(self, toy_case):
        assert toy_case.per_unit
        assert toy_case.buses[1].p_load == pytest.approx(0.6)
        assert toy_case.sync_gens[0].p_max == pytest.approx(0.6)
        assert toy_case.gfl_ibgs[0].s_max == pytest.approx(0.5)
        assert toy_case.gfl_ibgs[0].available_profile[1] == pytest.approx(0.45)
        assert toy_case.shunt_devices[0].q_rating == pytest.approx(0.2)
        assert toy_case.lines[0].rating == pytest.approx(1.5)

    def test_costs_follow_dispatch_unit(self, toy_case):
        gen = toy_case.sync_gens[0]
        assert gen.cost_lin == pytest.approx(18 * 100)
        assert gen.cost_quad == pytest.approx(0.02 * 100 * 100)
        assert toy_case.shed_cost == pytest.approx(10000 * 100)

    def test_frequency_in_per_unit_of_f0(self, toy_case):
        assert toy_case.freq_params.dp_l == pytest.approx(0.1)
        assert toy_case.freq_params.df_lim == pytest.approx(0.01)
        assert toy_case.freq_params.rocof_max == pytest.approx(2.0)

    def test_idempotent(self, toy_case):
        assert grid_case.normalize(toy_case) is toy_case

    def test_denormalize_inverts(self, toy_case, raw_toy_case):
        assert not raw_toy_case.per_unit
        assert raw_toy_case.buses[1].p_load == pytest.approx(60)
        assert raw_toy_case.freq_params.df_lim == pytest.approx(0.5)
        again = grid_case.normalize(raw_toy_case)
        assert again.sync_gens[2].cost_quad == pytest.approx(toy_case.sync_gens[2].cost_quad)
        assert again.gfl_ibgs[0].available_profile == pytest.approx(toy_case.gfl_ibgs[0].available_profile)


class TestGridCase:
    def test_bus_lookup(self, toy_case):
        assert toy_case.bus_ids == [1, 2, 3]
        assert toy_case.bus_position(3) == 2
        assert toy_case.has_bus(2)
        assert not toy_case.has_bus(7)

    def test_device_views(self, toy_case):
        assert len(toy_case.statcoms) == 1
        assert toy_case.condensers == []
        assert toy_case.ibg_buses == [3]

    def test_profile_hours_is_shortest_profile(self, toy_case):
        assert toy_case.profile_hours == 4
        short = replace(toy_case.gfl_ibgs[0], available_profile=(0.1, 0.2))
        assert replace(toy_case, gfl_ibgs=(short,)).profile_hours == 2

    def test_alpha_grid(self):
        assert grid_case.alpha_grid(3) == (0.0, 0.5, 1.0)
        assert grid_case.alpha_grid(2) == (0.0, 1.0)


class TestValidateCase:
    def test_bundled_case_is_valid(self, toy_case):
        assert grid_case.validate_case(toy_case) == []

    def test_dangling_bus_reference(self, raw_toy_case):
        lines = raw_toy_case.lines + (Line(from_bus=3, to_bus=9, r=0.01, x=0.1),)
        found = grid_case.validate_case(replace(raw_toy_case, lines=lines))
        assert errors.GC_DANGLING_BUS_REF in _keys(found)
        assert any(d.location == "lines[3].to" for d in found)

    def test_duplicate_bus_and_two_references(self, raw_toy_case):
        buses = raw_toy_case.buses + (Bus(id=1, v_min=0.9, v_max=1.1, is_reference=True),)
        found = _keys(grid_case.validate_case(replace(raw_toy_case, buses=buses)))
        assert errors.GC_DUPLICATE_BUS in found
        assert errors.GC_MULTIPLE_REFERENCE_BUSES in found

    def test_bad_voltage_bounds(self, raw_toy_case):
        buses = (replace(raw_toy_case.buses[0], v_min=1.1, v_max=1.0),) + raw_toy_case.buses[1:]
        assert errors.GC_BAD_VOLTAGE_BOUNDS in _keys(grid_case.validate_case(replace(raw_toy_case, buses=buses)))

    def test_non_positive_reactance(self, raw_toy_case):
        lines = (replace(raw_toy_case.lines[0], x=0.0),) + raw_toy_case.lines[1:]
        assert errors.GC_BAD_LINE in _keys(grid_case.validate_case(replace(raw_toy_case, lines=lines)))

    def test_disconnected_network(self, raw_toy_case):
        buses = raw_toy_case.buses + (Bus(id=4, v_min=0.9, v_max=1.1),)
        found = grid_case.validate_case(replace(raw_toy_case, buses=buses))
        assert _keys(found) == [errors.GC_DISCONNECTED]
        assert "[4]" in found[0].message

    def test_statcom_without_current_limit(self, raw_toy_case):
        devices = (ShuntReactiveDevice(kind=ShuntDeviceKind.STATCOM, bus=2, q_rating=10.0),)
        found = grid_case.validate_case(replace(raw_toy_case, shunt_devices=devices))
        assert _keys(found) == [errors.GC_BAD_SHUNT_DEVICE]

    def test_condenser_needs_reactance(self, raw_toy_case):
        devices = (ShuntReactiveDevice(kind=ShuntDeviceKind.SYNCHRONOUS_CONDENSER, bus=2, q_rating=10.0),)
        assert _keys(grid_case.validate_case(replace(raw_toy_case, shunt_devices=devices))) == [
            errors.GC_BAD_SHUNT_DEVICE
        ]

    def test_sync_gen_limits(self, raw_toy_case):
        gens = (replace(raw_toy_case.sync_gens[0], p_min=80.0, min_up=0),) + raw_toy_case.sync_gens[1:]
        found = grid_case.validate_case(replace(raw_toy_case, sync_gens=gens))
        assert _keys(found) == [errors.GC_BAD_SYNC_GEN, errors.GC_BAD_SYNC_GEN]
        assert all(d.severity == Severity.ERROR for d in found)

    def test_frequency_nadir_constant_must_be_real(self, raw_toy_case):
        # 10 MW / 100 MVA over 0.5 Hz / 50 Hz is 10, so damping 12 makes the nadir constant imaginary
        freq = replace(raw_toy_case.freq_params, damping_d=12.0)
        assert _keys(grid_case.validate_case(replace(raw_toy_case, freq_params=freq))) == [
            errors.GC_FREQUENCY_NOT_REAL
        ]

    def test_frequency_must_be_positive(self, raw_toy_case):
        freq = FrequencyParams(dp_l=10, df_lim=0.0, t_d=5, damping_d=1, rocof_max=2)
        assert _keys(grid_case.validate_case(replace(raw_toy_case, freq_params=freq))) == [
            errors.GC_BAD_FREQUENCY_PARAMS
        ]

    def test_quantile_masses_must_sum_to_one(self, raw_toy_case):
        profile = replace(raw_toy_case.profile, quantiles=(QuantileBin(0.5), QuantileBin(0.4)))
        assert _keys(grid_case.validate_case(replace(raw_toy_case, profile=profile))) == [errors.GC_BAD_PROFILE]

    def test_bad_base(self, raw_toy_case):
        assert errors.GC_BAD_BASE_MVA in _keys(grid_case.validate_case(replace(raw_toy_case, base_mva=0.0)))

    def test_diagnostic_str(self):
        diagnostic = grid_case.Diagnostic(Severity.ERROR, "lines[3].to", "Bus 9 does not exist.")
        assert str(diagnostic) == "ERROR lines[3].to: Bus 9 does not exist."


class TestSerializeCase:
    def test_round_trip(self, toy_case):
        document = grid_case.serialize_case(toy_case)
        assert document["buses"][1]["p_load_mw"] == pytest.approx(60)
        assert "reference" not in document["buses"][1]
        again = case_parser.parse_case(document)
        assert again.bus_ids == toy_case.bus_ids
        assert again.shunt_devices[0].kind == ShuntDeviceKind.STATCOM
        assert again.sync_gens[1].cost_lin == pytest.approx(toy_case.sync_gens[1].cost_lin)
        assert again.profile.quantiles == toy_case.profile.quantiles
