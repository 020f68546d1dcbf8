"""Contains parsing functions for each section of a case document.

This exists separately from the grid_case dataclasses in order to decouple changes
to the input file from the classes themselves. Parsers read physical units; per-unit
conversion happens afterwards in `grid_case.normalize`.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence

import const
import errors
import utils
from grid_case import (
    Bus,
    FrequencyParams,
    GridFollowingIbg,
    GridFormingUnit,
    Line,
    ProfileSettings,
    QuantileBin,
    ShuntDeviceKind,
    ShuntReactiveDevice,
    SyncGen,
)

logger = logging.getLogger(__name__)

_MISSING = object()

REQUIRED_BUS_NODES = [const.BUS_ID, const.V_MIN, const.V_MAX]
REQUIRED_LINE_NODES = [const.FROM_BUS, const.TO_BUS, const.R, const.X]
REQUIRED_SYNC_GEN_NODES = [
    const.BUS,
    const.P_MIN_MW,
    const.P_MAX_MW,
    const.Q_MIN_MVAR,
    const.Q_MAX_MVAR,
    const.COST_QUAD,
    const.COST_LIN,
    const.COST_NOLOAD,
    const.COST_STARTUP,
    const.MIN_UP,
    const.MIN_DOWN,
    const.RAMP_MW_PER_H,
    const.X_TRANSIENT,
    const.INERTIA_H,
    const.PFR_GAIN,
]
REQUIRED_GFM_NODES = [const.BUS, const.X_TRANSIENT, const.P_MAX_MW, const.ALPHA_LEVELS]
REQUIRED_IBG_NODES = [const.BUS, const.AVAILABLE_MW]
REQUIRED_SHUNT_NODES = [const.KIND, const.BUS, const.Q_RATING_MVAR]
REQUIRED_FREQUENCY_NODES = [const.DP_L_MW, const.DF_LIM_HZ, const.T_D, const.DAMPING_D, const.ROCOF_MAX]
REQUIRED_PROFILE_NODES = [const.LOAD_FACTOR]
REQUIRED_QUANTILE_NODES = [const.MASS]

DEVICE_KINDS = [const.KIND_STATCOM, const.KIND_SYNCHRONOUS_CONDENSER]


class CaseParseError(ValueError):
    """Raised for any malformed case document.

    Attributes:
        field_path: Location of the offending entry, e.g. `lines[3].to`.
    """

    def __init__(self, message: str, field_path: str):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


def _require(entry: Any, required: Sequence[str], path: str) -> Dict[str, Any]:
    if not isinstance(entry, dict):
        utils.log_and_raise(
            logger.error,
            f"Section entry at {path} must be a mapping.",
            CaseParseError("expected a mapping", path),
            errors.SP_BAD_SECTION_TYPE,
        )
    if any(x not in entry for x in required):
        missing_nodes = filter(lambda x: x not in entry, [node for node in required])
        missing = ",".join(missing_nodes)
        utils.log_and_raise(
            logger.error,
            f"Entry at {path} missing nodes {missing}",
            CaseParseError(f"missing {missing}", path),
            errors.SP_MISSING_FIELDS,
        )
    return entry


def _number(entry: Dict[str, Any], key: str, path: str, default: Any = _MISSING) -> Optional[float]:
    value = entry.get(key, default)
    if value is _MISSING:
        utils.log_and_raise(
            logger.error, f"Missing {key} at {path}.", CaseParseError(f"missing {key}", path), errors.SP_MISSING_FIELDS
        )
    if value is None or value is default:
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        field_path = f"{path}.{key}"
        utils.log_and_raise(
            logger.error,
            f"Field {field_path} must be numeric, got {value!r}.",
            CaseParseError("expected a number", field_path),
            errors.SP_BAD_FIELD_TYPE,
        )
    return float(value)


def _integer(entry: Dict[str, Any], key: str, path: str, default: Any = _MISSING) -> int:
    value = entry.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        field_path = f"{path}.{key}"
        utils.log_and_raise(
            logger.error,
            f"Field {field_path} must be an integer, got {value!r}.",
            CaseParseError("expected an integer", field_path),
            errors.SP_BAD_FIELD_TYPE,
        )
    return value


def _boolean(entry: Dict[str, Any], key: str, path: str, default: bool = False) -> bool:
    value = entry.get(key, default)
    if not isinstance(value, bool):
        field_path = f"{path}.{key}"
        utils.log_and_raise(
            logger.error,
            f"Field {field_path} must be true or false, got {value!r}.",
            CaseParseError("expected a boolean", field_path),
            errors.SP_BAD_FIELD_TYPE,
        )
    return value


def _numbers(entry: Dict[str, Any], key: str, path: str) -> List[float]:
    values = entry.get(key)
    field_path = f"{path}.{key}"
    if not isinstance(values, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values):
        utils.log_and_raise(
            logger.error,
            f"Field {field_path} must be a list of numbers.",
            CaseParseError("expected a list of numbers", field_path),
            errors.SP_BAD_FIELD_TYPE,
        )
    return [float(v) for v in values]


def parse_scalar(entry: Dict[str, Any], key: str, path: str) -> float:
    """Reads one required numeric field."""
    return _number(entry, key, path)


def map_device_kind(kind: str, path: str) -> ShuntDeviceKind:
    if kind == const.KIND_STATCOM:
        return ShuntDeviceKind.STATCOM
    elif kind == const.KIND_SYNCHRONOUS_CONDENSER:
        return ShuntDeviceKind.SYNCHRONOUS_CONDENSER
    else:
        field_path = f"{path}.{const.KIND}"
        utils.log_and_raise(
            logger.error,
            f"Invalid device kind {kind} at {field_path}, expected one of {DEVICE_KINDS}.",
            CaseParseError(f"invalid kind {kind}", field_path),
            errors.SP_INVALID_DEVICE_KIND,
        )


def parse_bus(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> Bus:
    """Creates a Bus from configuration."""
    _require(entry, REQUIRED_BUS_NODES, path)
    return Bus(
        id=_integer(entry, const.BUS_ID, path),
        v_min=_number(entry, const.V_MIN, path),
        v_max=_number(entry, const.V_MAX, path),
        p_load=_number(entry, const.P_LOAD_MW, path, 0.0),
        q_load=_number(entry, const.Q_LOAD_MVAR, path, 0.0),
        is_reference=_boolean(entry, const.REFERENCE, path),
    )


def parse_line(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> Line:
    """Creates a Line from configuration. r, x and b_sh are already per-unit."""
    _require(entry, REQUIRED_LINE_NODES, path)
    return Line(
        from_bus=_integer(entry, const.FROM_BUS, path),
        to_bus=_integer(entry, const.TO_BUS, path),
        r=_number(entry, const.R, path),
        x=_number(entry, const.X, path),
        b_sh=_number(entry, const.B_SH, path, 0.0),
        rating=_number(entry, const.RATING_MVA, path, None),
    )


def parse_sync_gen(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> SyncGen:
    """Creates a SyncGen from configuration."""
    _require(entry, REQUIRED_SYNC_GEN_NODES, path)
    return SyncGen(
        bus=_integer(entry, const.BUS, path),
        p_min=_number(entry, const.P_MIN_MW, path),
        p_max=_number(entry, const.P_MAX_MW, path),
        q_min=_number(entry, const.Q_MIN_MVAR, path),
        q_max=_number(entry, const.Q_MAX_MVAR, path),
        cost_quad=_number(entry, const.COST_QUAD, path),
        cost_lin=_number(entry, const.COST_LIN, path),
        cost_noload=_number(entry, const.COST_NOLOAD, path),
        cost_startup=_number(entry, const.COST_STARTUP, path),
        min_up=_integer(entry, const.MIN_UP, path),
        min_down=_integer(entry, const.MIN_DOWN, path),
        ramp=_number(entry, const.RAMP_MW_PER_H, path),
        x_transient=_number(entry, const.X_TRANSIENT, path),
        inertia_h=_number(entry, const.INERTIA_H, path),
        pfr_gain=_number(entry, const.PFR_GAIN, path),
        name=str(entry.get(const.DEVICE_NAME, "")),
    )


def parse_gfm_unit(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> GridFormingUnit:
    """Creates a GridFormingUnit from configuration."""
    _require(entry, REQUIRED_GFM_NODES, path)
    return GridFormingUnit(
        bus=_integer(entry, const.BUS, path),
        x_transient=_number(entry, const.X_TRANSIENT, path),
        p_max=_number(entry, const.P_MAX_MW, path),
        alpha_levels=_integer(entry, const.ALPHA_LEVELS, path),
        inertia_h=_number(entry, const.INERTIA_H, path, 0.0),
        name=str(entry.get(const.DEVICE_NAME, "")),
    )


def parse_gfl_ibg(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> GridFollowingIbg:
    """Creates a GridFollowingIbg from configuration.

    A missing `s_max_mva` defaults to one system base (1.0 p.u.).
    """
    _require(entry, REQUIRED_IBG_NODES, path)
    return GridFollowingIbg(
        bus=_integer(entry, const.BUS, path),
        available_profile=tuple(_numbers(entry, const.AVAILABLE_MW, path)),
        s_max=_number(entry, const.S_MAX_MVA, path, base_mva),
        si_capable=_boolean(entry, const.SI_CAPABLE, path),
        h_si_max=_number(entry, const.H_SI_MAX, path, 0.0),
        name=str(entry.get(const.DEVICE_NAME, "")),
    )


def parse_shunt_device(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> ShuntReactiveDevice:
    """Creates a STATCOM or synchronous condenser from configuration."""
    _require(entry, REQUIRED_SHUNT_NODES, path)
    return ShuntReactiveDevice(
        kind=map_device_kind(entry[const.KIND], path),
        bus=_integer(entry, const.BUS, path),
        q_rating=_number(entry, const.Q_RATING_MVAR, path),
        i_max=_number(entry, const.I_MAX, path, None),
        x_transient=_number(entry, const.X_TRANSIENT, path, None),
        name=str(entry.get(const.DEVICE_NAME, "")),
    )


def parse_frequency(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> FrequencyParams:
    """Creates FrequencyParams from configuration. `df_lim_hz` is in Hz, `dp_l_mw` in MW."""
    _require(entry, REQUIRED_FREQUENCY_NODES, path)
    return FrequencyParams(
        dp_l=_number(entry, const.DP_L_MW, path),
        df_lim=_number(entry, const.DF_LIM_HZ, path),
        t_d=_number(entry, const.T_D, path),
        damping_d=_number(entry, const.DAMPING_D, path),
        rocof_max=_number(entry, const.ROCOF_MAX, path),
        f0=_number(entry, const.F0_HZ, path, 50.0),
    )


def parse_costs(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> float:
    """Returns the load-shedding penalty in $/MWh."""
    _require(entry, [const.SHED_COST], path)
    return _number(entry, const.SHED_COST, path)


def parse_quantile(entry: Dict[str, Any], path: str) -> QuantileBin:
    _require(entry, REQUIRED_QUANTILE_NODES, path)
    return QuantileBin(
        mass=_number(entry, const.MASS, path),
        wind_dev=_number(entry, const.WIND_DEV, path, 0.0),
        load_dev=_number(entry, const.LOAD_DEV, path, 0.0),
    )


def parse_profile(entry: Dict[str, Any], path: str, base_mva: float = 100.0) -> ProfileSettings:
    """Creates ProfileSettings from configuration.

    Without `quantiles` the profile is deterministic; `horizon` defaults to the
    length of `load_factor`.
    """
    _require(entry, REQUIRED_PROFILE_NODES, path)
    load_factor = tuple(_numbers(entry, const.LOAD_FACTOR, path))
    quantile_entries = entry.get(const.QUANTILES, [{const.MASS: 1.0}])
    if not isinstance(quantile_entries, list):
        field_path = f"{path}.{const.QUANTILES}"
        utils.log_and_raise(
            logger.error,
            f"Field {field_path} must be a list.",
            CaseParseError("expected a list", field_path),
            errors.SP_BAD_FIELD_TYPE,
        )
    quantiles = tuple(
        parse_quantile(q, f"{path}.{const.QUANTILES}[{pos}]") for pos, q in enumerate(quantile_entries)
    )
    branching = entry.get(const.BRANCHING_HOURS, [])
    if not isinstance(branching, list) or any(isinstance(h, bool) or not isinstance(h, int) for h in branching):
        field_path = f"{path}.{const.BRANCHING_HOURS}"
        utils.log_and_raise(
            logger.error,
            f"Field {field_path} must be a list of integers.",
            CaseParseError("expected a list of integers", field_path),
            errors.SP_BAD_FIELD_TYPE,
        )
    return ProfileSettings(
        horizon=_integer(entry, const.HORIZON, path, len(load_factor)),
        load_factor=load_factor,
        quantiles=quantiles,
        branching_hours=tuple(branching),
    )
