"""Grid data model: buses, lines, the device fleet and per-unit handling.

Cases come out of `case_parser.parse_case` already normalized. Everything in this
module is immutable; sweeps build patched copies with `dataclasses.replace`.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple
import logging
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

import const
import errors

logger = logging.getLogger(__name__)


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    """A validation finding.

    Attributes:
        severity: ERROR findings make a case unusable, WARNING findings do not.
        location: Field path of the offending entry, e.g. `lines[3].to`.
        message: Human readable description.
        key: The error key from errors.py.
    """

    severity: Severity
    location: str
    message: str
    key: Optional[str] = None

    def __str__(self) -> str:
        return f"{self.severity.value.upper()} {self.location}: {self.message}"


class ShuntDeviceKind(Enum):
    STATCOM = const.KIND_STATCOM
    SYNCHRONOUS_CONDENSER = const.KIND_SYNCHRONOUS_CONDENSER


@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float
    v_max: float
    p_load: float = 0.0
    q_load: float = 0.0
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_sh: float = 0.0
    rating: Optional[float] = None


@dataclass(frozen=True)
class SyncGen:
    """A synchronous generator.

    Costs are in $/h (`cost_quad` multiplies P squared, `cost_lin` multiplies P) and
    follow the dispatch unit of the case, so they are rescaled by `normalize`.
    `inertia_h` is on the machine rating (`p_max`); `pfr_gain` is the primary
    response contribution to R in p.u.
    """

    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost_quad: float
    cost_lin: float
    cost_noload: float
    cost_startup: float
    min_up: int
    min_down: int
    ramp: float
    x_transient: float
    inertia_h: float
    pfr_gain: float
    name: str = ""


@dataclass(frozen=True)
class GridFormingUnit:
    bus: int
    x_transient: float
    p_max: float
    alpha_levels: int
    inertia_h: float = 0.0
    name: str = ""

    @property
    def alpha_grid(self) -> Tuple[float, ...]:
        return alpha_grid(self.alpha_levels)


@dataclass(frozen=True)
class GridFollowingIbg:
    bus: int
    available_profile: Tuple[float, ...]
    s_max: float = 1.0
    si_capable: bool = False
    h_si_max: float = 0.0
    name: str = ""


@dataclass(frozen=True)
class ShuntReactiveDevice:
    kind: ShuntDeviceKind
    bus: int
    q_rating: float
    i_max: Optional[float] = None
    x_transient: Optional[float] = None
    name: str = ""


@dataclass(frozen=True)
class FrequencyParams:
    """Frequency security data.

    `df_lim` is in Hz before normalization and in p.u. of `f0` afterwards. `rocof_max`
    stays in Hz/s.
    """

    dp_l: float
    df_lim: float
    t_d: float
    damping_d: float
    rocof_max: float
    f0: float = 50.0


@dataclass(frozen=True)
class QuantileBin:
    """One forecast-error bin: probability mass and multiplicative deviations."""

    mass: float
    wind_dev: float = 0.0
    load_dev: float = 0.0


@dataclass(frozen=True)
class ProfileSettings:
    horizon: int
    load_factor: Tuple[float, ...]
    quantiles: Tuple[QuantileBin, ...] = (QuantileBin(1.0),)
    branching_hours: Tuple[int, ...] = ()


@dataclass(frozen=True)
class GridCase:
    """A complete case.

    Attributes:
        name: Case label used in result tables.
        base_mva: System base.
        buses, lines, sync_gens, gfm_units, gfl_ibgs, shunt_devices: The network and fleet.
        freq_params: Frequency security data.
        shed_cost: Load-shedding penalty ($/MWh on disk, $/p.u.h once normalized).
        profile: Hourly load factors and forecast-error bins.
        per_unit: True once `normalize` ran.
    """

    name: str
    base_mva: float
    buses: Tuple[Bus, ...]
    lines: Tuple[Line, ...]
    sync_gens: Tuple[SyncGen, ...] = ()
    gfm_units: Tuple[GridFormingUnit, ...] = ()
    gfl_ibgs: Tuple[GridFollowingIbg, ...] = ()
    shunt_devices: Tuple[ShuntReactiveDevice, ...] = ()
    freq_params: Optional[FrequencyParams] = None
    shed_cost: float = 10000.0
    profile: Optional[ProfileSettings] = None
    per_unit: bool = False
    _bus_index: Dict[int, int] = field(default=None, init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_bus_index", {bus.id: pos for pos, bus in enumerate(self.buses)})

    @property
    def bus_ids(self) -> List[int]:
        return [bus.id for bus in self.buses]

    def bus_position(self, bus_id: int) -> int:
        """Row/column of `bus_id` in every bus-indexed matrix."""
        return self._bus_index[bus_id]

    def has_bus(self, bus_id: int) -> bool:
        return bus_id in self._bus_index

    @property
    def statcoms(self) -> List[ShuntReactiveDevice]:
        return [dev for dev in self.shunt_devices if dev.kind == ShuntDeviceKind.STATCOM]

    @property
    def condensers(self) -> List[ShuntReactiveDevice]:
        return [dev for dev in self.shunt_devices if dev.kind == ShuntDeviceKind.SYNCHRONOUS_CONDENSER]

    @property
    def ibg_buses(self) -> List[int]:
        return [ibg.bus for ibg in self.gfl_ibgs]

    @property
    def profile_hours(self) -> int:
        """Hours covered by both the load factors and every IBG profile."""
        lengths = [len(ibg.available_profile) for ibg in self.gfl_ibgs]
        if self.profile is not None:
            lengths.append(len(self.profile.load_factor))
        return min(lengths) if lengths else 0


def alpha_grid(levels: int) -> Tuple[float, ...]:
    """Uniform grid on [0, 1] with both endpoints."""
    return tuple(float(level) / (levels - 1) for level in range(levels))


def normalize(case: GridCase) -> GridCase:
    """Converts MW/MVAr/MVA/Hz quantities to per-unit. Idempotent."""
    if case.per_unit:
        return case

    base = case.base_mva
    buses = tuple(replace(bus, p_load=bus.p_load / base, q_load=bus.q_load / base) for bus in case.buses)
    lines = tuple(
        replace(line, rating=None if line.rating is None else line.rating / base) for line in case.lines
    )
    sync_gens = tuple(
        replace(
            gen,
            p_min=gen.p_min / base,
            p_max=gen.p_max / base,
            q_min=gen.q_min / base,
            q_max=gen.q_max / base,
            ramp=gen.ramp / base,
            cost_quad=gen.cost_quad * base * base,
            cost_lin=gen.cost_lin * base,
        )
        for gen in case.sync_gens
    )
    gfm_units = tuple(replace(unit, p_max=unit.p_max / base) for unit in case.gfm_units)
    gfl_ibgs = tuple(
        replace(
            ibg,
            s_max=ibg.s_max / base,
            available_profile=tuple(value / base for value in ibg.available_profile),
        )
        for ibg in case.gfl_ibgs
    )
    shunt_devices = tuple(replace(dev, q_rating=dev.q_rating / base) for dev in case.shunt_devices)
    freq = case.freq_params
    if freq is not None:
        freq = replace(freq, dp_l=freq.dp_l / base, df_lim=freq.df_lim / freq.f0)

    return replace(
        case,
        buses=buses,
        lines=lines,
        sync_gens=sync_gens,
        gfm_units=gfm_units,
        gfl_ibgs=gfl_ibgs,
        shunt_devices=shunt_devices,
        freq_params=freq,
        shed_cost=case.shed_cost * base,
        per_unit=True,
    )


def denormalize(case: GridCase) -> GridCase:
    """Inverse of `normalize`."""
    if not case.per_unit:
        return case

    base = case.base_mva
    buses = tuple(replace(bus, p_load=bus.p_load * base, q_load=bus.q_load * base) for bus in case.buses)
    lines = tuple(
        replace(line, rating=None if line.rating is None else line.rating * base) for line in case.lines
    )
    sync_gens = tuple(
        replace(
            gen,
            p_min=gen.p_min * base,
            p_max=gen.p_max * base,
            q_min=gen.q_min * base,
            q_max=gen.q_max * base,
            ramp=gen.ramp * base,
            cost_quad=gen.cost_quad / (base * base),
            cost_lin=gen.cost_lin / base,
        )
        for gen in case.sync_gens
    )
    gfm_units = tuple(replace(unit, p_max=unit.p_max * base) for unit in case.gfm_units)
    gfl_ibgs = tuple(
        replace(
            ibg,
            s_max=ibg.s_max * base,
            available_profile=tuple(value * base for value in ibg.available_profile),
        )
        for ibg in case.gfl_ibgs
    )
    shunt_devices = tuple(replace(dev, q_rating=dev.q_rating * base) for dev in case.shunt_devices)
    freq = case.freq_params
    if freq is not None:
        freq = replace(freq, dp_l=freq.dp_l * base, df_lim=freq.df_lim * freq.f0)

    return replace(
        case,
        buses=buses,
        lines=lines,
        sync_gens=sync_gens,
        gfm_units=gfm_units,
        gfl_ibgs=gfl_ibgs,
        shunt_devices=shunt_devices,
        freq_params=freq,
        shed_cost=case.shed_cost / base,
        per_unit=False,
    )


def _error(location: str, message: str, key: str) -> Diagnostic:
    return Diagnostic(Severity.ERROR, location, message, key)


def _check_buses(case: GridCase) -> List[Diagnostic]:
    found = []
    seen = set()
    references = []
    for pos, bus in enumerate(case.buses):
        location = f"{const.BUSES}[{pos}]"
        if bus.id in seen:
            found.append(_error(location, f"Bus id {bus.id} appears more than once.", errors.GC_DUPLICATE_BUS))
        seen.add(bus.id)
        if not (0 < bus.v_min <= bus.v_max):
            found.append(
                _error(
                    location,
                    f"Voltage bounds must satisfy 0 < v_min <= v_max, got [{bus.v_min}, {bus.v_max}].",
                    errors.GC_BAD_VOLTAGE_BOUNDS,
                )
            )
        if bus.is_reference:
            references.append(bus.id)
    if len(references) > 1:
        found.append(
            _error(
                const.BUSES,
                f"At most one reference bus is allowed, found {references}.",
                errors.GC_MULTIPLE_REFERENCE_BUSES,
            )
        )
    return found


def _check_bus_ref(case: GridCase, bus_id: int, location: str) -> List[Diagnostic]:
    if case.has_bus(bus_id):
        return []
    return [_error(location, f"Bus {bus_id} does not exist.", errors.GC_DANGLING_BUS_REF)]


def _check_lines(case: GridCase) -> List[Diagnostic]:
    found = []
    for pos, line in enumerate(case.lines):
        location = f"{const.LINES}[{pos}]"
        found.extend(_check_bus_ref(case, line.from_bus, f"{location}.{const.FROM_BUS}"))
        found.extend(_check_bus_ref(case, line.to_bus, f"{location}.{const.TO_BUS}"))
        if line.from_bus == line.to_bus:
            found.append(_error(location, "Line endpoints must differ.", errors.GC_BAD_LINE))
        if not line.x > 0:
            found.append(_error(f"{location}.{const.X}", f"Reactance must be positive, got {line.x}.", errors.GC_BAD_LINE))
        if line.rating is not None and line.rating <= 0:
            found.append(_error(f"{location}.{const.RATING_MVA}", "Rating must be positive.", errors.GC_BAD_LINE))
    return found


def _check_sync_gens(case: GridCase) -> List[Diagnostic]:
    found = []
    for pos, gen in enumerate(case.sync_gens):
        location = f"{const.SYNC_GENS}[{pos}]"
        found.extend(_check_bus_ref(case, gen.bus, f"{location}.{const.BUS}"))
        problems = []
        if gen.p_min > gen.p_max:
            problems.append(f"p_min {gen.p_min} exceeds p_max {gen.p_max}")
        if gen.q_min > gen.q_max:
            problems.append(f"q_min {gen.q_min} exceeds q_max {gen.q_max}")
        if not gen.x_transient > 0:
            problems.append("x_transient must be positive")
        if gen.inertia_h < 0:
            problems.append("inertia_h must be non-negative")
        if gen.min_up < 1 or gen.min_down < 1:
            problems.append("min_up and min_down must be at least 1")
        if gen.ramp < 0 or gen.pfr_gain < 0:
            problems.append("ramp and pfr_gain must be non-negative")
        if gen.cost_quad < 0:
            problems.append("cost_quad must be non-negative")
        found.extend(_error(location, problem + ".", errors.GC_BAD_SYNC_GEN) for problem in problems)
    return found


def _check_gfm_units(case: GridCase) -> List[Diagnostic]:
    found = []
    for pos, unit in enumerate(case.gfm_units):
        location = f"{const.GFM_UNITS}[{pos}]"
        found.extend(_check_bus_ref(case, unit.bus, f"{location}.{const.BUS}"))
        if not unit.x_transient > 0:
            found.append(_error(location, "x_transient must be positive.", errors.GC_BAD_GFM_UNIT))
        if unit.alpha_levels < 2:
            found.append(_error(location, "alpha_levels must be at least 2.", errors.GC_BAD_GFM_UNIT))
        if unit.p_max < 0 or unit.inertia_h < 0:
            found.append(_error(location, "p_max and inertia_h must be non-negative.", errors.GC_BAD_GFM_UNIT))
    return found


def _check_gfl_ibgs(case: GridCase) -> List[Diagnostic]:
    found = []
    for pos, ibg in enumerate(case.gfl_ibgs):
        location = f"{const.GFL_IBGS}[{pos}]"
        found.extend(_check_bus_ref(case, ibg.bus, f"{location}.{const.BUS}"))
        if not ibg.s_max > 0:
            found.append(_error(location, "s_max must be positive.", errors.GC_BAD_GFL_IBG))
        if any(value < 0 for value in ibg.available_profile):
            found.append(
                _error(f"{location}.{const.AVAILABLE_MW}", "Availability must be non-negative.", errors.GC_BAD_GFL_IBG)
            )
        if ibg.h_si_max < 0:
            found.append(_error(location, "h_si_max must be non-negative.", errors.GC_BAD_GFL_IBG))
    return found


def _check_shunt_devices(case: GridCase) -> List[Diagnostic]:
    found = []
    for pos, dev in enumerate(case.shunt_devices):
        location = f"{const.SHUNT_DEVICES}[{pos}]"
        found.extend(_check_bus_ref(case, dev.bus, f"{location}.{const.BUS}"))
        if dev.q_rating < 0:
            found.append(_error(location, "q_rating must be non-negative.", errors.GC_BAD_SHUNT_DEVICE))
        if dev.kind == ShuntDeviceKind.STATCOM:
            if dev.i_max is None or not dev.i_max > 0:
                found.append(_error(location, "A STATCOM needs i_max > 0.", errors.GC_BAD_SHUNT_DEVICE))
            if dev.x_transient is not None:
                found.append(_error(location, "A STATCOM has no x_transient.", errors.GC_BAD_SHUNT_DEVICE))
        elif dev.x_transient is None or not dev.x_transient > 0:
            found.append(_error(location, "A synchronous condenser needs x_transient > 0.", errors.GC_BAD_SHUNT_DEVICE))
    return found


def _check_frequency(case: GridCase) -> List[Diagnostic]:
    freq = case.freq_params
    if freq is None:
        return []
    location = const.FREQUENCY
    values = [freq.dp_l, freq.df_lim, freq.t_d, freq.damping_d, freq.rocof_max, freq.f0]
    if any(not (math.isfinite(value) and value > 0) for value in values):
        return [_error(location, "All frequency parameters must be positive.", errors.GC_BAD_FREQUENCY_PARAMS)]
    if not case.base_mva > 0:
        return []

    dp_l, df_lim = freq.dp_l, freq.df_lim
    if not case.per_unit:
        dp_l, df_lim = dp_l / case.base_mva, df_lim / freq.f0
    if dp_l / df_lim <= freq.damping_d:
        return [
            _error(
                location,
                f"Nadir constant is not real: dp_l/df_lim = {dp_l / df_lim:.6g} must exceed damping_d = "
                f"{freq.damping_d}.",
                errors.GC_FREQUENCY_NOT_REAL,
            )
        ]
    return []


def _check_costs_and_profile(case: GridCase) -> List[Diagnostic]:
    found = []
    if case.shed_cost < 0:
        found.append(_error(const.COSTS, "shed_cost must be non-negative.", errors.GC_BAD_COSTS))
    profile = case.profile
    if profile is None:
        return found
    location = const.PROFILE
    if profile.horizon < 1:
        found.append(_error(location, "horizon must be at least 1.", errors.GC_BAD_PROFILE))
    if any(value < 0 for value in profile.load_factor):
        found.append(_error(f"{location}.{const.LOAD_FACTOR}", "Load factors must be non-negative.", errors.GC_BAD_PROFILE))
    if len(profile.quantiles) == 0:
        found.append(_error(f"{location}.{const.QUANTILES}", "At least one quantile is required.", errors.GC_BAD_PROFILE))
    elif abs(sum(q.mass for q in profile.quantiles) - 1.0) > 1e-9:
        found.append(_error(f"{location}.{const.QUANTILES}", "Quantile masses must sum to 1.", errors.GC_BAD_PROFILE))
    if any(q.wind_dev < -1 or q.load_dev < -1 for q in profile.quantiles):
        found.append(
            _error(f"{location}.{const.QUANTILES}", "Deviations below -100% give negative realizations.", errors.GC_BAD_PROFILE)
        )
    return found


def _check_connectivity(case: GridCase) -> List[Diagnostic]:
    n_bus = len(case.buses)
    if n_bus <= 1:
        return []
    rows, cols = [], []
    for line in case.lines:
        if case.has_bus(line.from_bus) and case.has_bus(line.to_bus):
            rows.append(case.bus_position(line.from_bus))
            cols.append(case.bus_position(line.to_bus))
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_bus, n_bus))
    n_components, labels = connected_components(graph, directed=False)
    if n_components == 1:
        return []
    islanded = [case.buses[pos].id for pos in np.flatnonzero(labels != labels[0])]
    return [
        _error(
            const.LINES,
            f"Network has {n_components} islands; buses {islanded} are not connected to bus {case.buses[0].id}.",
            errors.GC_DISCONNECTED,
        )
    ]


def validate_case(case: GridCase) -> List[Diagnostic]:
    """Checks every type invariant of `case`.

    Args:
        case: A parsed or hand-built case, normalized or not.

    Returns:
        Diagnostics with severity and field path, empty when the case is valid.
    """
    found: List[Diagnostic] = []
    if not case.base_mva > 0:
        found.append(_error(const.BASE_MVA, "base_mva must be positive.", errors.GC_BAD_BASE_MVA))
    for check in (
        _check_buses,
        _check_lines,
        _check_sync_gens,
        _check_gfm_units,
        _check_gfl_ibgs,
        _check_shunt_devices,
        _check_frequency,
        _check_costs_and_profile,
        _check_connectivity,
    ):
        found.extend(check(case))
    return found


def _compact(document: Dict[str, Any], defaults: Dict[str, Any]) -> Dict[str, Any]:
    return {key: value for key, value in document.items() if key not in defaults or defaults[key] != value}


def serialize_case(case: GridCase) -> Dict[str, Any]:
    """Renders `case` as a case document in physical units, the inverse of parse_case."""
    raw = denormalize(case)
    document: Dict[str, Any] = {const.NAME: raw.name, const.BASE_MVA: raw.base_mva}
    document[const.BUSES] = [
        _compact(
            {
                const.BUS_ID: bus.id,
                const.V_MIN: bus.v_min,
                const.V_MAX: bus.v_max,
                const.P_LOAD_MW: bus.p_load,
                const.Q_LOAD_MVAR: bus.q_load,
                const.REFERENCE: bus.is_reference,
            },
            {const.P_LOAD_MW: 0.0, const.Q_LOAD_MVAR: 0.0, const.REFERENCE: False},
        )
        for bus in raw.buses
    ]
    document[const.LINES] = [
        _compact(
            {
                const.FROM_BUS: line.from_bus,
                const.TO_BUS: line.to_bus,
                const.R: line.r,
                const.X: line.x,
                const.B_SH: line.b_sh,
                const.RATING_MVA: line.rating,
            },
            {const.B_SH: 0.0, const.RATING_MVA: None},
        )
        for line in raw.lines
    ]
    document[const.SYNC_GENS] = [
        _compact(
            {
                const.DEVICE_NAME: gen.name,
                const.BUS: gen.bus,
                const.P_MIN_MW: gen.p_min,
                const.P_MAX_MW: gen.p_max,
                const.Q_MIN_MVAR: gen.q_min,
                const.Q_MAX_MVAR: gen.q_max,
                const.COST_QUAD: gen.cost_quad,
                const.COST_LIN: gen.cost_lin,
                const.COST_NOLOAD: gen.cost_noload,
                const.COST_STARTUP: gen.cost_startup,
                const.MIN_UP: gen.min_up,
                const.MIN_DOWN: gen.min_down,
                const.RAMP_MW_PER_H: gen.ramp,
                const.X_TRANSIENT: gen.x_transient,
                const.INERTIA_H: gen.inertia_h,
                const.PFR_GAIN: gen.pfr_gain,
            },
            {const.DEVICE_NAME: ""},
        )
        for gen in raw.sync_gens
    ]
    document[const.GFM_UNITS] = [
        _compact(
            {
                const.DEVICE_NAME: unit.name,
                const.BUS: unit.bus,
                const.X_TRANSIENT: unit.x_transient,
                const.P_MAX_MW: unit.p_max,
                const.ALPHA_LEVELS: unit.alpha_levels,
                const.INERTIA_H: unit.inertia_h,
            },
            {const.DEVICE_NAME: "", const.INERTIA_H: 0.0},
        )
        for unit in raw.gfm_units
    ]
    document[const.GFL_IBGS] = [
        _compact(
            {
                const.DEVICE_NAME: ibg.name,
                const.BUS: ibg.bus,
                const.S_MAX_MVA: ibg.s_max,
                const.AVAILABLE_MW: list(ibg.available_profile),
                const.SI_CAPABLE: ibg.si_capable,
                const.H_SI_MAX: ibg.h_si_max,
            },
            {const.DEVICE_NAME: ""},
        )
        for ibg in raw.gfl_ibgs
    ]
    document[const.SHUNT_DEVICES] = [
        _compact(
            {
                const.DEVICE_NAME: dev.name,
                const.KIND: dev.kind.value,
                const.BUS: dev.bus,
                const.Q_RATING_MVAR: dev.q_rating,
                const.I_MAX: dev.i_max,
                const.X_TRANSIENT: dev.x_transient,
            },
            {const.DEVICE_NAME: "", const.I_MAX: None, const.X_TRANSIENT: None},
        )
        for dev in raw.shunt_devices
    ]
    if raw.freq_params is not None:
        freq = raw.freq_params
        document[const.FREQUENCY] = {
            const.DP_L_MW: freq.dp_l,
            const.DF_LIM_HZ: freq.df_lim,
            const.T_D: freq.t_d,
            const.DAMPING_D: freq.damping_d,
            const.ROCOF_MAX: freq.rocof_max,
            const.F0_HZ: freq.f0,
        }
    document[const.COSTS] = {const.SHED_COST: raw.shed_cost}
    if raw.profile is not None:
        profile = raw.profile
        document[const.PROFILE] = {
            const.HORIZON: profile.horizon,
            const.LOAD_FACTOR: list(profile.load_factor),
            const.QUANTILES: [
                {const.MASS: q.mass, const.WIND_DEV: q.wind_dev, const.LOAD_DEV: q.load_dev} for q in profile.quantiles
            ],
            const.BRANCHING_HOURS: list(profile.branching_hours),
        }
    return document
