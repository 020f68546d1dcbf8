"""Case patches applied at each sweep point.

Every patch takes a normalized case and a sweep value in physical units (MW, MVAr or a
bus id) and returns a new case; the input is never mutated.
"""
from typing import Dict, Optional, Type
from dataclasses import replace
from enum import Enum
from abc import ABC
import abc
import logging
import math

import errors
import utils
from grid_case import GridCase, ShuntDeviceKind, ShuntReactiveDevice

logger = logging.getLogger(__name__)

DEFAULT_SC_MACHINE_REACTANCE = 0.3


class PatchError(Exception):
    pass


class SweepAxis(Enum):
    """What a sweep varies."""

    WIND_CAPACITY = "wind_capacity"
    STATCOM_RATING = "statcom_rating"
    STATCOM_SITE = "statcom_site"
    SC_RATING = "sc_rating"
    NONE = "none"


class CasePatch(ABC):
    """Turns a sweep value into a modified case.

    Attributes:
        retrains_surrogate: True when the patch changes Yg, so the fitted Z-ratio model
            of the unpatched case no longer applies.
    """

    retrains_surrogate = False

    def __init__(self, site_bus: Optional[int] = None, machine_reactance: float = DEFAULT_SC_MACHINE_REACTANCE):
        self.site_bus = site_bus
        self.machine_reactance = machine_reactance

    @abc.abstractmethod
    def apply(self, case: GridCase, value: float) -> GridCase:
        raise NotImplementedError()

    def _check_value(self, value: float) -> None:
        if not math.isfinite(value) or value < 0:
            utils.log_and_raise(logger.error, f"{type(self).__name__} needs a finite non-negative value, got {value}.",
                                PatchError("bad value"), errors.PA_BAD_VALUE)


class NullPatch(CasePatch):
    def apply(self, case: GridCase, value: float) -> GridCase:
        return case


class WindCapacityPatch(CasePatch):
    """Scales every GFL IBG's availability and s_max so installed capacity totals `value` MW."""

    def apply(self, case: GridCase, value: float) -> GridCase:
        self._check_value(value)
        installed = sum(ibg.s_max for ibg in case.gfl_ibgs) * case.base_mva
        if installed <= 0:
            utils.log_and_raise(logger.error, f"Case {case.name} has no installed wind to scale.",
                                PatchError("no wind"), errors.PA_NO_DEVICE)
        factor = value / installed
        logger.debug("Scaling wind of %s by %.4f to %.1f MW", case.name, factor, value)
        gfl_ibgs = tuple(
            replace(
                ibg,
                s_max=ibg.s_max * factor,
                available_profile=tuple(a * factor for a in ibg.available_profile),
            )
            for ibg in case.gfl_ibgs
        )
        return replace(case, gfl_ibgs=gfl_ibgs)


class StatcomRatingPatch(CasePatch):
    """Sets every STATCOM's rating and current limit to `value` MVAr."""

    def apply(self, case: GridCase, value: float) -> GridCase:
        self._check_value(value)
        if len(case.statcoms) == 0:
            utils.log_and_raise(logger.error, f"Case {case.name} has no STATCOM to rate.",
                                PatchError("no statcom"), errors.PA_NO_DEVICE)
        rating = value / case.base_mva
        devices = tuple(
            replace(dev, q_rating=rating, i_max=rating) if dev.kind == ShuntDeviceKind.STATCOM else dev
            for dev in case.shunt_devices
        )
        return replace(case, shunt_devices=devices)


class StatcomSitePatch(CasePatch):
    """Moves every STATCOM to bus `value`."""

    def apply(self, case: GridCase, value: float) -> GridCase:
        if len(case.statcoms) == 0:
            utils.log_and_raise(logger.error, f"Case {case.name} has no STATCOM to move.",
                                PatchError("no statcom"), errors.PA_NO_DEVICE)
        bus = int(value)
        if bus != value or not case.has_bus(bus):
            utils.log_and_raise(logger.error, f"STATCOM site {value} is not a bus of {case.name}.",
                                PatchError("bad site"), errors.PA_BAD_VALUE)
        devices = tuple(
            replace(dev, bus=bus) if dev.kind == ShuntDeviceKind.STATCOM else dev for dev in case.shunt_devices
        )
        return replace(case, shunt_devices=devices)


class ScRatingPatch(CasePatch):
    """Installs one synchronous condenser of `value` MVAr; 0 removes it.

    The machine reactance is given on the condenser's own rating and converted to the
    system base, so a larger machine contributes more admittance.
    """

    retrains_surrogate = True

    def _site(self, case: GridCase) -> int:
        if self.site_bus is not None:
            site = self.site_bus
        elif len(case.condensers) > 0:
            site = case.condensers[0].bus
        else:
            utils.log_and_raise(logger.error, f"Case {case.name} has no condenser and no site bus was given.",
                                PatchError("no site"), errors.PA_NO_DEVICE)
        if not case.has_bus(site):
            utils.log_and_raise(logger.error, f"Condenser site {site} is not a bus of {case.name}.",
                                PatchError("bad site"), errors.PA_BAD_VALUE)
        return site

    def apply(self, case: GridCase, value: float) -> GridCase:
        self._check_value(value)
        site = self._site(case)
        devices = [dev for dev in case.shunt_devices if dev.kind != ShuntDeviceKind.SYNCHRONOUS_CONDENSER]
        if value > 0:
            devices.append(
                ShuntReactiveDevice(
                    kind=ShuntDeviceKind.SYNCHRONOUS_CONDENSER,
                    bus=site,
                    q_rating=value / case.base_mva,
                    x_transient=self.machine_reactance * case.base_mva / value,
                    name=f"sc_{site}",
                )
            )
        return replace(case, shunt_devices=tuple(devices))


PATCH_MAP: Dict[SweepAxis, Type[CasePatch]] = {
    SweepAxis.NONE: NullPatch,
    SweepAxis.WIND_CAPACITY: WindCapacityPatch,
    SweepAxis.STATCOM_RATING: StatcomRatingPatch,
    SweepAxis.STATCOM_SITE: StatcomSitePatch,
    SweepAxis.SC_RATING: ScRatingPatch,
}


def get_patch(
    axis: SweepAxis, site_bus: Optional[int] = None, machine_reactance: float = DEFAULT_SC_MACHINE_REACTANCE
) -> CasePatch:
    if axis not in PATCH_MAP:
        utils.log_and_raise(logger.error, f"No patch for sweep axis {axis}.", PatchError(str(axis)),
                            errors.PA_NO_PATCH_FOR_AXIS)
    return PATCH_MAP[axis](site_bus=site_bus, machine_reactance=machine_reactance)
