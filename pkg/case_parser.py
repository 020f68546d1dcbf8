"""This module contains functions to parse a GridCase from a case document."""

from typing import Any, Callable, Dict, List, Optional, Type, Union
from dataclasses import dataclass, field
import logging
import os
import pathlib

import yaml

import const
import errors
import grid_case
import matpower_import
import section_parsers
import utils
from grid_case import (
    Bus,
    FrequencyParams,
    GridCase,
    GridFollowingIbg,
    GridFormingUnit,
    Line,
    ProfileSettings,
    Severity,
    ShuntReactiveDevice,
    SyncGen,
)
from section_parsers import CaseParseError

logger = logging.getLogger(__name__)

SPECIAL_KEYS = [const.NAME, const.BASE_MVA, const.COSTS, const.MATPOWER_SOURCE]

REQUIRED_SECTIONS = [const.BASE_MVA, const.BUSES, const.LINES]

SECTION_MAP = {
    const.BUSES: Bus,
    const.LINES: Line,
    const.SYNC_GENS: SyncGen,
    const.GFM_UNITS: GridFormingUnit,
    const.GFL_IBGS: GridFollowingIbg,
    const.SHUNT_DEVICES: ShuntReactiveDevice,
    const.FREQUENCY: FrequencyParams,
    const.PROFILE: ProfileSettings,
}

SINGLE_SECTIONS = [FrequencyParams, ProfileSettings]

PARSER_MAP: Dict[Type, Callable] = {
    Bus: section_parsers.parse_bus,
    Line: section_parsers.parse_line,
    SyncGen: section_parsers.parse_sync_gen,
    GridFormingUnit: section_parsers.parse_gfm_unit,
    GridFollowingIbg: section_parsers.parse_gfl_ibg,
    ShuntReactiveDevice: section_parsers.parse_shunt_device,
    FrequencyParams: section_parsers.parse_frequency,
    ProfileSettings: section_parsers.parse_profile,
}


@dataclass
class ParserState:
    """Maintains state while parsing a case document.

    Attributes:
         objects: Parsed entries of every list section, keyed by class.
         singles: Parsed single-entry sections (frequency, profile), keyed by class.
         base_mva: The system base read first, since IBG defaults depend on it.
         shed_cost: Load-shedding penalty in $/MWh.
    """

    objects: Dict[Type, List[Any]] = field(default_factory=lambda: {})
    singles: Dict[Type, Any] = field(default_factory=lambda: {})
    base_mva: float = 100.0
    shed_cost: float = 10000.0


def _get_klass_for_section(section: str) -> Type:
    """Gets the class associated with a top-level case section like "buses"."""
    klass = SECTION_MAP.get(section, None)
    if klass is None:
        utils.log_and_raise(logger.error, f"Couldn't map case section {section} to a class.",
                            CaseParseError("unknown section", section), errors.CP_UNKNOWN_SECTION)
    return klass


def _get_func_for_klass(klass: Type) -> Callable:
    """Gets the parser function for a given class `klass`."""
    func = PARSER_MAP.get(klass, None)
    if func is None:
        utils.log_and_raise(logger.error, f"Couldn't map class {klass} to parser function",
                            CaseParseError("no parser", klass.__name__), errors.CP_NO_PARSER_FUNC_MAP)
    return func


def _load_document(document: Union[str, Dict[str, Any]]) -> Dict[str, Any]:
    if isinstance(document, str):
        document = yaml.safe_load(document)
    if not isinstance(document, dict):
        utils.log_and_raise(logger.error, "A case document must be a mapping of sections.",
                            CaseParseError("expected a mapping", "<document>"), errors.CP_NOT_A_MAPPING)
    return document


def _check_required_sections(document: Dict[str, Any]) -> None:
    missing = [section for section in REQUIRED_SECTIONS if section not in document]
    if len(missing) > 0:
        utils.log_and_raise(logger.error, f"Case document missing sections {','.join(missing)}",
                            CaseParseError("missing section", missing[0]), errors.CP_MISSING_SECTION)


def _parse_objects(document: Dict[str, Any]) -> ParserState:
    """Iterates over the document and creates one object per section entry."""
    parser_state = ParserState()
    parser_state.base_mva = section_parsers.parse_scalar(document, const.BASE_MVA, "<document>")
    if const.COSTS in document:
        parser_state.shed_cost = section_parsers.parse_costs(document[const.COSTS], const.COSTS)

    for key in document.keys():
        if key in SPECIAL_KEYS:
            continue
        klass = _get_klass_for_section(key)
        parser_func = _get_func_for_klass(klass)

        if klass in SINGLE_SECTIONS:
            parser_state.singles[klass] = parser_func(document[key], key, parser_state.base_mva)
            continue

        entries = document[key] if document[key] is not None else []
        if not isinstance(entries, list):
            utils.log_and_raise(logger.error, f"Section {key} must be a list.",
                                CaseParseError("expected a list", key), errors.SP_BAD_SECTION_TYPE)
        parser_state.objects[klass] = [
            parser_func(entry, f"{key}[{pos}]", parser_state.base_mva) for pos, entry in enumerate(entries)
        ]
    return parser_state


def _build_case(document: Dict[str, Any], parser_state: ParserState) -> GridCase:
    objects = parser_state.objects
    return GridCase(
        name=str(document.get(const.NAME, "case")),
        base_mva=parser_state.base_mva,
        buses=tuple(objects.get(Bus, [])),
        lines=tuple(objects.get(Line, [])),
        sync_gens=tuple(objects.get(SyncGen, [])),
        gfm_units=tuple(objects.get(GridFormingUnit, [])),
        gfl_ibgs=tuple(objects.get(GridFollowingIbg, [])),
        shunt_devices=tuple(objects.get(ShuntReactiveDevice, [])),
        freq_params=parser_state.singles.get(FrequencyParams),
        shed_cost=parser_state.shed_cost,
        profile=parser_state.singles.get(ProfileSettings),
        per_unit=False,
    )


def _raise_on_errors(case: GridCase) -> None:
    diagnostics = grid_case.validate_case(case)
    for diagnostic in diagnostics:
        if diagnostic.severity == Severity.WARNING:
            logger.warning(str(diagnostic))
    failures = [d for d in diagnostics if d.severity == Severity.ERROR]
    if len(failures) == 0:
        return
    for diagnostic in failures[1:]:
        logger.error(str(diagnostic))
    first = failures[0]
    utils.log_and_raise(logger.error, str(first), CaseParseError(first.message, first.location), first.key)


def parse_case(document: Union[str, Dict[str, Any]], base_dir: Optional[pathlib.Path] = None) -> GridCase:
    """Creates a normalized GridCase from a case document.

    Does so by:
        1. Loading the YAML text (or taking an already-loaded mapping)
        2. Merging bus/branch tables from a MATPOWER file when `matpower_source` is set
        3. Parsing every section with its section parser
        4. Validating cross references, connectivity and type invariants
        5. Converting to per-unit

    Args:
         document: YAML text or the mapping it loads to.
         base_dir: Directory that relative `matpower_source` paths resolve against.

    Returns:
        The validated, per-unit GridCase.

    Raises:
        CaseParseError: With the field path of the first problem found.
    """
    document = _load_document(document)
    if const.MATPOWER_SOURCE in document:
        source = pathlib.Path(document[const.MATPOWER_SOURCE])
        if base_dir is not None and not source.is_absolute():
            source = base_dir / source
        document = matpower_import.merge_into_document(document, source)
    _check_required_sections(document)

    parser_state = _parse_objects(document)
    case = _build_case(document, parser_state)
    _raise_on_errors(case)
    return grid_case.normalize(case)


def load_case(path: Union[pathlib.Path, os.PathLike, str]) -> GridCase:
    """Reads and parses the case file at `path`."""
    if not os.path.exists(path):
        utils.log_and_raise(logger.error, f"Path {str(path)} does not exist.",
                            CaseParseError("no such file", str(path)), errors.CP_PATH_DOES_NOT_EXIST)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_case(text, base_dir=pathlib.Path(path).parent)
