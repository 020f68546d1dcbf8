"""Decodes a solved program point into per-hour and per-node schedule arrays."""
from dataclasses import dataclass
from typing import Optional
import logging

import numpy as np

import formulation as fo
from admittance import DeviceConfig
from conic_program import ConicProgram
from formulation import Mode, VariableMap
from grid_case import GridCase, alpha_grid
from scenario import ScenarioTree

logger = logging.getLogger(__name__)


@dataclass
class ScheduleSolution:
    """A decoded schedule, per-unit.

    First-stage arrays are (horizon, devices); second-stage arrays are (nodes, devices)
    indexed by tree node id. Optional arrays are None when the mode did not build them.
    """

    mode: Mode
    objective: float
    point: np.ndarray
    commitments: np.ndarray
    startups: np.ndarray
    shutdowns: np.ndarray
    alphas: np.ndarray
    sc_on: np.ndarray
    p_g: np.ndarray
    q_g: np.ndarray
    p_gfm: np.ndarray
    q_gfm: np.ndarray
    p_ibg: np.ndarray
    q_ibg: np.ndarray
    h_si: np.ndarray
    q_stat: np.ndarray
    q_sc: np.ndarray
    p_shed: np.ndarray
    c_bus: np.ndarray
    c_line: np.ndarray
    s_line: np.ndarray
    inertia: Optional[np.ndarray] = None
    response: Optional[np.ndarray] = None
    p_hat: Optional[np.ndarray] = None
    q_hat: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.commitments.shape[0]

    def config(self, depth: int) -> DeviceConfig:
        """The device configuration Yg depends on at `depth`."""
        return DeviceConfig(
            commitments=tuple(int(x) for x in self.commitments[depth]),
            alphas=tuple(float(a) for a in self.alphas[depth]),
            sc_on=tuple(int(s) for s in self.sc_on[depth]),
        )

    def voltage(self, node_id: int, bus_pos: int) -> float:
        return float(np.sqrt(max(self.c_bus[node_id, bus_pos], 0.0)))


def _grid(point, variables: VariableMap, symbol: str, n_rows: int, n_cols: int, rounded: bool = False) -> np.ndarray:
    values = np.zeros((n_rows, n_cols))
    for row in range(n_rows):
        for col in range(n_cols):
            if variables.has(symbol, row, col):
                values[row, col] = variables.value(point, symbol, row, col)
    return np.round(values).astype(int) if rounded else values


def _node_vector(point, variables: VariableMap, symbol: str, n_nodes: int) -> Optional[np.ndarray]:
    if not variables.has(symbol, 0, None):
        return None
    return np.array([variables.value(point, symbol, n) for n in range(n_nodes)])


def _optional_grid(point, variables: VariableMap, symbol: str, n_rows: int, n_cols: int) -> Optional[np.ndarray]:
    if n_cols == 0 or not variables.has(symbol, 0, 0):
        return None
    return _grid(point, variables, symbol, n_rows, n_cols)


def extract_schedule(
    case: GridCase,
    tree: ScenarioTree,
    program: ConicProgram,
    variables: VariableMap,
    point: np.ndarray,
    mode: Mode,
    alpha_levels: Optional[int] = None,
) -> ScheduleSolution:
    """Reads every schedule quantity from `point`.

    Args:
        case, tree: The inputs the program was built from.
        program: The built program, used for the objective value.
        variables: Handles returned by `formulation.build`.
        point: An integral solution vector.
        mode: The build mode.
        alpha_levels: The level count the program was built with, None for per-unit defaults.
    """
    horizon, n_nodes = tree.horizon, len(tree.nodes)
    n_sg, n_gfm, n_ibg = len(case.sync_gens), len(case.gfm_units), len(case.gfl_ibgs)
    n_bus, n_line = len(case.buses), len(case.lines)

    alphas = np.zeros((horizon, n_gfm))
    for pos, unit in enumerate(case.gfm_units):
        levels = alpha_grid(alpha_levels or unit.alpha_levels)
        for t in range(horizon):
            selected = [np.round(variables.value(point, fo.LEVEL, t, (pos, l))) for l in range(len(levels))]
            alphas[t, pos] = float(np.dot(selected, levels))

    return ScheduleSolution(
        mode=mode,
        objective=program.evaluate_objective(point),
        point=np.asarray(point, dtype=float),
        commitments=_grid(point, variables, fo.X, horizon, n_sg, rounded=True),
        startups=_grid(point, variables, fo.U, horizon, n_sg, rounded=True),
        shutdowns=_grid(point, variables, fo.V, horizon, n_sg, rounded=True),
        alphas=alphas,
        sc_on=_grid(point, variables, fo.SC_ON, horizon, len(case.condensers), rounded=True),
        p_g=_grid(point, variables, fo.P_G, n_nodes, n_sg),
        q_g=_grid(point, variables, fo.Q_G, n_nodes, n_sg),
        p_gfm=_grid(point, variables, fo.P_GFM, n_nodes, n_gfm),
        q_gfm=_grid(point, variables, fo.Q_GFM, n_nodes, n_gfm),
        p_ibg=_grid(point, variables, fo.P_IBG, n_nodes, n_ibg),
        q_ibg=_grid(point, variables, fo.Q_IBG, n_nodes, n_ibg),
        h_si=_grid(point, variables, fo.H_SI, n_nodes, n_ibg),
        q_stat=_grid(point, variables, fo.Q_STAT, n_nodes, len(case.statcoms)),
        q_sc=_grid(point, variables, fo.Q_SC, n_nodes, len(case.condensers)),
        p_shed=_grid(point, variables, fo.P_SHED, n_nodes, n_bus),
        c_bus=_grid(point, variables, fo.C_BUS, n_nodes, n_bus),
        c_line=_grid(point, variables, fo.C_LINE, n_nodes, n_line),
        s_line=_grid(point, variables, fo.S_LINE, n_nodes, n_line),
        inertia=_node_vector(point, variables, fo.H_SYS, n_nodes),
        response=_node_vector(point, variables, fo.R_SYS, n_nodes),
        p_hat=_optional_grid(point, variables, fo.P_HAT, n_nodes, n_ibg),
        q_hat=_optional_grid(point, variables, fo.Q_HAT, n_nodes, n_ibg),
        gamma=_optional_grid(point, variables, fo.GAMMA, n_nodes, n_ibg),
    )
