"""Quantile scenario trees over the look-ahead horizon.

Depth d of the tree is look-ahead hour d. The root (hour 0) carries the central
forecast. At each branching hour every node spawns one child per quantile bin;
elsewhere a node has a single child with its parent's deviation. Deviations compose
multiplicatively along a path and the wind deviation applies to every GFL IBG alike.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

import errors
import utils
from grid_case import GridCase, QuantileBin

logger = logging.getLogger(__name__)

MASS_TOL = 1e-9
HOUR = 1.0


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class ForecastProfile:
    """Central forecasts for one look-ahead window, per-unit.

    Attributes:
        horizon: Number of hours.
        central_wind: (horizon, n_ibg) available wind per GFL IBG.
        central_load_p: (horizon, n_bus) active load per bus.
        central_load_q: (horizon, n_bus) reactive load per bus.
        error_quantiles: Quantile bins per hour, used when that hour branches.
    """

    horizon: int
    central_wind: np.ndarray
    central_load_p: np.ndarray
    central_load_q: np.ndarray
    error_quantiles: Tuple[Tuple[QuantileBin, ...], ...]

    @classmethod
    def from_case(
        cls,
        case: GridCase,
        start_hour: int = 0,
        horizon: Optional[int] = None,
        quantiles: Optional[Sequence[QuantileBin]] = None,
    ) -> "ForecastProfile":
        """Slices the case's hourly profiles from `start_hour` on.

        Args:
            case: A normalized case.
            start_hour: First hour of the window in the day profile.
            horizon: Window length; the case profile's horizon by default.
            quantiles: Error bins for every hour; the case profile's bins by default.

        Raises:
            ScenarioError: When the day profile does not cover the window.
        """
        profile = case.profile
        if horizon is None:
            horizon = profile.horizon if profile is not None else 1
        if quantiles is None:
            quantiles = profile.quantiles if profile is not None else (QuantileBin(1.0),)

        available = case.profile_hours if (profile is not None or len(case.gfl_ibgs) > 0) else horizon + start_hour
        if start_hour < 0 or start_hour + horizon > available:
            utils.log_and_raise(
                logger.error,
                f"Window [{start_hour}, {start_hour + horizon}) exceeds the {available} profile hours.",
                ScenarioError("profile too short"),
                errors.SC_PROFILE_TOO_SHORT,
            )

        hours = range(start_hour, start_hour + horizon)
        factors = np.array([profile.load_factor[h] if profile is not None else 1.0 for h in hours])
        p_load = np.array([bus.p_load for bus in case.buses])
        q_load = np.array([bus.q_load for bus in case.buses])
        wind = np.array([[ibg.available_profile[h] for ibg in case.gfl_ibgs] for h in hours]).reshape(horizon, -1)
        return cls(
            horizon=horizon,
            central_wind=wind,
            central_load_p=np.outer(factors, p_load),
            central_load_q=np.outer(factors, q_load),
            error_quantiles=tuple(tuple(quantiles) for _ in hours),
        )


@dataclass(frozen=True)
class ScenarioNode:
    """A tree node.

    Attributes:
        id: Position in `ScenarioTree.nodes`; the root is 0.
        parent: Parent id, None for the root.
        depth: Look-ahead hour.
        duration: Delta t in hours.
        probability: pi(n), normalized per depth.
        wind_scale: Product of (1 + wind deviation) along the path.
        load_scale: Product of (1 + load deviation) along the path.
    """

    id: int
    parent: Optional[int]
    depth: int
    duration: float
    probability: float
    wind_scale: float = 1.0
    load_scale: float = 1.0


@dataclass(frozen=True)
class NodeRealization:
    wind: np.ndarray
    load_p: np.ndarray
    load_q: np.ndarray


@dataclass
class ScenarioTree:
    profile: ForecastProfile
    nodes: Tuple[ScenarioNode, ...]
    branching_hours: Tuple[int, ...]
    _children: Dict[int, List[int]] = field(default_factory=lambda: {}, repr=False)

    def __post_init__(self):
        for node in self.nodes:
            self._children.setdefault(node.id, [])
            if node.parent is not None:
                self._children.setdefault(node.parent, []).append(node.id)

    @property
    def horizon(self) -> int:
        return self.profile.horizon

    @property
    def root(self) -> ScenarioNode:
        return self.nodes[0]

    def node(self, node_id: int) -> ScenarioNode:
        if not 0 <= node_id < len(self.nodes):
            utils.log_and_raise(logger.error, f"Tree has no node {node_id}.", ScenarioError(str(node_id)),
                                errors.SC_UNKNOWN_NODE)
        return self.nodes[node_id]

    def children(self, node_id: int) -> List[ScenarioNode]:
        return [self.nodes[child] for child in self._children[self.node(node_id).id]]

    def nodes_at_depth(self, depth: int) -> List[ScenarioNode]:
        return [node for node in self.nodes if node.depth == depth]

    @property
    def leaves(self) -> List[ScenarioNode]:
        return [node for node in self.nodes if len(self._children[node.id]) == 0]

    def path(self, node_id: int) -> List[ScenarioNode]:
        """Nodes from the root down to `node_id`."""
        path = [self.node(node_id)]
        while path[-1].parent is not None:
            path.append(self.nodes[path[-1].parent])
        return list(reversed(path))

    def depth_probability(self, depth: int) -> float:
        return float(sum(node.probability for node in self.nodes_at_depth(depth)))


def _check_quantiles(profile: ForecastProfile, branching_hours: Sequence[int]) -> None:
    for hour in branching_hours:
        bins = profile.error_quantiles[hour]
        if len(bins) == 0:
            utils.log_and_raise(logger.error, f"Hour {hour} branches on an empty quantile list.",
                                ScenarioError("empty quantiles"), errors.SC_EMPTY_QUANTILES)
        if any(q.mass < 0 for q in bins) or abs(sum(q.mass for q in bins) - 1.0) > MASS_TOL:
            utils.log_and_raise(logger.error, f"Quantile masses at hour {hour} must be non-negative and sum to 1.",
                                ScenarioError("bad masses"), errors.SC_BAD_MASSES)
        if any(q.wind_dev < -1.0 or q.load_dev < -1.0 for q in bins):
            utils.log_and_raise(logger.error, f"Quantile deviations at hour {hour} give negative realizations.",
                                ScenarioError("negative realization"), errors.SC_NEGATIVE_REALIZATION)


def _check_branching_hours(horizon: int, branching_hours: Sequence[int]) -> Tuple[int, ...]:
    hours = tuple(sorted(set(int(h) for h in branching_hours)))
    bad = [h for h in hours if not 1 <= h < horizon]
    if len(bad) > 0:
        utils.log_and_raise(logger.error, f"Branching hours {bad} are outside 1..{horizon - 1}.",
                            ScenarioError("bad branching hours"), errors.SC_BAD_BRANCHING_HOURS)
    return hours


def build_tree(profile: ForecastProfile, branching_hours: Sequence[int] = ()) -> ScenarioTree:
    """Builds the quantile tree.

    Args:
        profile: Central forecasts and quantile bins.
        branching_hours: Hours (1..horizon-1) at which every node branches.

    Returns:
        The tree, nodes ordered by depth then by quantile order.
    """
    hours = _check_branching_hours(profile.horizon, branching_hours)
    _check_quantiles(profile, hours)

    nodes = [ScenarioNode(id=0, parent=None, depth=0, duration=HOUR, probability=1.0)]
    frontier = [nodes[0]]
    for depth in range(1, profile.horizon):
        spawned = []
        for parent in frontier:
            if depth in hours:
                outcomes = [(q.mass, 1.0 + q.wind_dev, 1.0 + q.load_dev) for q in profile.error_quantiles[depth]]
            else:
                outcomes = [(1.0, 1.0, 1.0)]
            for mass, wind, load in outcomes:
                spawned.append(
                    ScenarioNode(
                        id=len(nodes) + len(spawned),
                        parent=parent.id,
                        depth=depth,
                        duration=HOUR,
                        probability=parent.probability * mass,
                        wind_scale=parent.wind_scale * wind,
                        load_scale=parent.load_scale * load,
                    )
                )
        total = sum(node.probability for node in spawned)
        spawned = [
            ScenarioNode(n.id, n.parent, n.depth, n.duration, n.probability / total, n.wind_scale, n.load_scale)
            for n in spawned
        ]
        nodes.extend(spawned)
        frontier = spawned

    logger.info("Built scenario tree: %d nodes, %d leaves, branching at %s", len(nodes), len(frontier), list(hours))
    return ScenarioTree(profile=profile, nodes=tuple(nodes), branching_hours=hours)


def node_realization(tree: ScenarioTree, node_id: int) -> NodeRealization:
    """Central forecast at the node's hour scaled by its path deviations."""
    node = tree.node(node_id)
    profile = tree.profile
    return NodeRealization(
        wind=profile.central_wind[node.depth] * node.wind_scale,
        load_p=profile.central_load_p[node.depth] * node.load_scale,
        load_q=profile.central_load_q[node.depth] * node.load_scale,
    )


def deterministic_tree(profile: ForecastProfile) -> ScenarioTree:
    """Single-path tree on the central forecast."""
    return build_tree(profile, ())
