"""Reads bus and branch tables from MATPOWER `.m` case files.

Only the network is imported. The device fleet, frequency data and profile always
come from the YAML document naming the file under `matpower_source`. Off-status
branches are dropped; transformer taps and bus shunts are ignored.
"""
from typing import Any, Dict, List
import logging
import os
import pathlib

import numpy as np

import const
import errors
import utils

logger = logging.getLogger(__name__)

BUS_COLUMNS = 13
BRANCH_COLUMNS = 11
REFERENCE_BUS_TYPE = 3


class MatpowerImportError(ValueError):
    pass


def _strip_row(line: str) -> str:
    line = line.split("%", 1)[0].strip()
    return line.rstrip(";").strip()


def _read_table(lines: List[str], start: int, name: str, min_columns: int) -> np.ndarray:
    rows = []
    for linenum in range(start + 1, len(lines)):
        raw = lines[linenum]
        if raw.strip().startswith("];"):
            return np.array(rows, dtype=float).reshape(-1, min_columns)
        content = _strip_row(raw)
        if content == "":
            continue
        values = content.split()
        if len(values) < min_columns:
            utils.log_and_raise(logger.error, f"Row {linenum + 1} of mpc.{name} has {len(values)} columns.",
                                MatpowerImportError(f"short row in mpc.{name}"), errors.MI_BAD_ROW)
        rows.append([float(value) for value in values[:min_columns]])
    utils.log_and_raise(logger.error, f"Could not find end of mpc.{name} section.",
                        MatpowerImportError(f"unterminated mpc.{name}"), errors.MI_MISSING_TABLE)


def read_matpower(path: pathlib.Path) -> Dict[str, Any]:
    """Scans `path` for mpc.baseMVA, mpc.bus and mpc.branch.

    Returns:
        A dictionary with `base_mva` and the `bus` and `branch` tables as arrays.
    """
    if not os.path.exists(path):
        utils.log_and_raise(logger.error, f"Path {str(path)} does not exist.",
                            MatpowerImportError(str(path)), errors.MI_PATH_DOES_NOT_EXIST)
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()

    tables: Dict[str, Any] = {}
    for linenum, line in enumerate(lines):
        words = line.split()
        if len(words) == 0 or not words[0].startswith("mpc."):
            continue
        word = words[0]
        if word == "mpc.baseMVA":
            tables["base_mva"] = float(_strip_row(line.split("=", 1)[1]))
        elif word == "mpc.bus":
            tables["bus"] = _read_table(lines, linenum, "bus", BUS_COLUMNS)
        elif word == "mpc.branch":
            tables["branch"] = _read_table(lines, linenum, "branch", BRANCH_COLUMNS)

    for required in ("base_mva", "bus", "branch"):
        if required not in tables:
            utils.log_and_raise(logger.error, f"{path} has no mpc.{required} entry.",
                                MatpowerImportError(f"missing mpc.{required}"), errors.MI_MISSING_TABLE)
    logger.info("Read %d buses and %d branches from %s", len(tables["bus"]), len(tables["branch"]), path)
    return tables


def _bus_entries(bus: np.ndarray) -> List[Dict[str, Any]]:
    return [
        {
            const.BUS_ID: int(row[0]),
            const.V_MIN: float(row[12]),
            const.V_MAX: float(row[11]),
            const.P_LOAD_MW: float(row[2]),
            const.Q_LOAD_MVAR: float(row[3]),
            const.REFERENCE: bool(int(row[1]) == REFERENCE_BUS_TYPE),
        }
        for row in bus
    ]


def _line_entries(branch: np.ndarray) -> List[Dict[str, Any]]:
    entries = []
    for row in branch:
        if int(row[10]) == 0:
            continue
        entry = {
            const.FROM_BUS: int(row[0]),
            const.TO_BUS: int(row[1]),
            const.R: float(row[2]),
            const.X: float(row[3]),
            const.B_SH: float(row[4]),
        }
        if row[5] > 0:
            entry[const.RATING_MVA] = float(row[5])
        entries.append(entry)
    return entries


def merge_into_document(document: Dict[str, Any], path: pathlib.Path) -> Dict[str, Any]:
    """Returns a copy of `document` with buses, lines and base_mva filled from `path`.

    Sections already present in `document` take precedence over the imported tables.
    """
    tables = read_matpower(path)
    merged = {key: value for key, value in document.items() if key != const.MATPOWER_SOURCE}
    merged.setdefault(const.BASE_MVA, tables["base_mva"])
    if not merged.get(const.BUSES):
        merged[const.BUSES] = _bus_entries(tables["bus"])
    if not merged.get(const.LINES):
        merged[const.LINES] = _line_entries(tables["branch"])
    return merged
