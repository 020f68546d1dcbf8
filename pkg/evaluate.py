"""Ex-post evaluation of solved schedules and the device TCO calculator.

Expected quantities are probability-weighted over tree nodes and averaged over the
look-ahead hours, so a single-node tree reports the node value itself. Power
quantities are converted back to MW/MVAr/MVA with the case base.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np

import admittance
import const
import errors
import frequency
import solver
import surrogate
import utils
from admittance import IllConditionedError, SingularMatrixError, ZRatioSet
from conic_program import ConicProgram
from formulation import TAG_POWER_FLOW
from grid_case import Diagnostic, GridCase, Severity
from scenario import ScenarioTree, node_realization
from schedule import ScheduleSolution

logger = logging.getLogger(__name__)

CONE_TOL = 1e-6
SLACK_TOL = 1e-6
HOURS_PER_YEAR = 8760.0
OANDM_SHARE = 0.01


class EvaluationError(Exception):
    pass


def equivalent_injections(p: Sequence[float], q: Sequence[float], ratios: ZRatioSet) -> Tuple[np.ndarray, np.ndarray]:
    """P_hat_c = P_c + sum over c' != c of ratio(c, c') * P_c', likewise for Q."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    p_hat, q_hat = p.copy(), q.copy()
    for (c, other), ratio in ratios.mutual_ratio.items():
        p_hat[c] += ratio * p[other]
        q_hat[c] += ratio * q[other]
    return p_hat, q_hat


def stability_margin(ratios: ZRatioSet) -> np.ndarray:
    """Gamma_c = 1 / (2 |Z_cc|) with |V| taken as 1."""
    return 0.5 * np.asarray(ratios.self_ratio, dtype=float)


def cone_violated(p_hat: float, q_hat: float, gamma: float, tol: float = CONE_TOL) -> bool:
    """True when P_hat^2 + Q_hat^2 > (Q_hat + Gamma)^2 (1 + tol) or Q_hat + Gamma < 0."""
    if q_hat + gamma < 0:
        return True
    return p_hat ** 2 + q_hat ** 2 > (q_hat + gamma) ** 2 * (1.0 + tol)


@dataclass
class ViolationStats:
    rate_pct: float
    n_pairs: int
    n_violated: int
    diagnostics: List[Diagnostic] = field(default_factory=list)


def _count_violations(schedule: ScheduleSolution, tree: ScenarioTree, ratios_for_depth) -> ViolationStats:
    n_pairs = n_violated = 0
    diagnostics = []
    for node in tree.nodes:
        p, q = schedule.p_ibg[node.id], schedule.q_ibg[node.id]
        n_pairs += len(p)
        ratios = ratios_for_depth(node.depth)
        if ratios is None:
            n_violated += len(p)
            diagnostics.append(
                Diagnostic(Severity.WARNING, f"node[{node.id}]", "Singular configuration counted as violated.",
                           errors.EV_SINGULAR_CONFIG)
            )
            continue
        p_hat, q_hat = equivalent_injections(p, q, ratios)
        gamma = stability_margin(ratios)
        n_violated += sum(cone_violated(p_hat[c], q_hat[c], gamma[c]) for c in range(len(p)))
    rate = 100.0 * n_violated / n_pairs if n_pairs > 0 else 0.0
    return ViolationStats(rate_pct=rate, n_pairs=n_pairs, n_violated=n_violated, diagnostics=diagnostics)


def violation_rate(schedule: ScheduleSolution, case: GridCase, tree: ScenarioTree) -> ViolationStats:
    """Share of (node, IBG) pairs violating the stability cone under exact Z-ratios."""
    y0 = admittance.build_y0(case)
    cache: Dict[int, Optional[ZRatioSet]] = {}

    def exact(depth: int) -> Optional[ZRatioSet]:
        if depth not in cache:
            try:
                cache[depth] = admittance.z_ratios(case, schedule.config(depth), y0)
            except (SingularMatrixError, IllConditionedError) as err:
                logger.warning("%s: depth %d configuration is singular: %s", errors.EV_SINGULAR_CONFIG, depth, err)
                cache[depth] = None
        return cache[depth]

    return _count_violations(schedule, tree, exact)


def surrogate_violation_rate(
    schedule: ScheduleSolution, tree: ScenarioTree, model: surrogate.SurrogateModel
) -> ViolationStats:
    """Same count with the learned ratios the program was built with."""

    def learned(depth: int) -> ZRatioSet:
        config = schedule.config(depth)
        return surrogate.predict(model, config.commitments + config.sc_on, config.alphas)

    return _count_violations(schedule, tree, learned)


def _hourly_expectation(tree: ScenarioTree, per_node: np.ndarray) -> float:
    weights = np.array([node.probability for node in tree.nodes])
    return float(weights @ per_node) / tree.horizon


def curtailment_and_shed(schedule: ScheduleSolution, tree: ScenarioTree, case: GridCase) -> Tuple[float, float]:
    """Expected hourly wind curtailment and load shedding in MW."""
    available = np.array([node_realization(tree, node.id).wind for node in tree.nodes]).reshape(len(tree.nodes), -1)
    curtailed = np.clip(available - schedule.p_ibg, 0.0, None).sum(axis=1)
    shed = schedule.p_shed.sum(axis=1)
    return (
        _hourly_expectation(tree, curtailed) * case.base_mva,
        _hourly_expectation(tree, shed) * case.base_mva,
    )


@dataclass(frozen=True)
class FrequencySlacks:
    nadir_slack: float
    rocof_slack: float
    violation_rate_pct: float


def system_inertia(case: GridCase, schedule: ScheduleSolution, node_id: int, depth: int) -> float:
    h = sum(gen.inertia_h * gen.p_max * schedule.commitments[depth, g] for g, gen in enumerate(case.sync_gens))
    h += sum(unit.inertia_h * unit.p_max * schedule.alphas[depth, v] for v, unit in enumerate(case.gfm_units))
    h += sum(schedule.h_si[node_id, c] for c, ibg in enumerate(case.gfl_ibgs) if ibg.si_capable)
    return float(h)


def system_response(case: GridCase, schedule: ScheduleSolution, depth: int) -> float:
    return float(sum(gen.pfr_gain * schedule.commitments[depth, g] for g, gen in enumerate(case.sync_gens)))


def frequency_slacks(schedule: ScheduleSolution, case: GridCase, tree: ScenarioTree) -> FrequencySlacks:
    """Minimum nadir and RoCoF slacks over nodes, recomputed from commitments."""
    freq = case.freq_params
    if freq is None:
        return FrequencySlacks(math.nan, math.nan, 0.0)
    nadir, rocof = [], []
    for node in tree.nodes:
        h = system_inertia(case, schedule, node.id, node.depth)
        r = system_response(case, schedule, node.depth)
        h_si = [schedule.h_si[node.id, c] for c, ibg in enumerate(case.gfl_ibgs) if ibg.si_capable]
        nadir.append(frequency.nadir_slack(freq, h, r, h_si))
        rocof.append(frequency.rocof_slack(freq, h))
    nadir, rocof = np.array(nadir), np.array(rocof)
    violated = np.sum((nadir < -SLACK_TOL) | (rocof < -SLACK_TOL))
    return FrequencySlacks(
        nadir_slack=float(nadir.min()),
        rocof_slack=float(rocof.min()),
        violation_rate_pct=100.0 * float(violated) / len(tree.nodes),
    )


def soc_gap(schedule: ScheduleSolution, program: ConicProgram) -> Tuple[float, float]:
    """Mean and max residual of the power-flow rotated cones at the schedule point."""
    residuals = solver.soc_residuals(program, schedule.point, tags=[TAG_POWER_FLOW])
    return residuals.mean, residuals.max


def rank1_deviation(schedule: ScheduleSolution, case: GridCase) -> float:
    """mean((c_ii c_jj - c_ij^2 - s_ij^2) / max(1, c_ii c_jj)) over lines and nodes."""
    if len(case.lines) == 0:
        return 0.0
    i = [case.bus_position(line.from_bus) for line in case.lines]
    j = [case.bus_position(line.to_bus) for line in case.lines]
    product = schedule.c_bus[:, i] * schedule.c_bus[:, j]
    deviation = (product - schedule.c_line ** 2 - schedule.s_line ** 2) / np.maximum(1.0, product)
    return float(deviation.mean())


def strength_reference(case: GridCase) -> float:
    """Mean IBG strength at the all-online, full-strength configuration."""
    if len(case.gfl_ibgs) == 0:
        return 0.0
    return admittance.strength_indicator(case, admittance.reference_config(case)).mean


def strength_scheduled(schedule: ScheduleSolution, case: GridCase, tree: ScenarioTree) -> float:
    """Probability-weighted mean IBG strength at the scheduled configurations; singular hours count 0."""
    if len(case.gfl_ibgs) == 0:
        return 0.0
    y0 = admittance.build_y0(case)
    per_depth = {}
    for depth in range(tree.horizon):
        try:
            per_depth[depth] = admittance.strength_indicator(case, schedule.config(depth), y0).mean
        except (SingularMatrixError, IllConditionedError):
            per_depth[depth] = 0.0
    return _hourly_expectation(tree, np.array([per_depth[node.depth] for node in tree.nodes]))


def ibg_voltage_and_margin(
    schedule: ScheduleSolution, case: GridCase, tree: ScenarioTree
) -> Tuple[Dict[str, float], Dict[str, float]]:
    """Expected voltage magnitude and exact Gamma (MVA) per IBG label."""
    labels = admittance.ibg_labels(case)
    positions = [case.bus_position(bus) for bus in case.ibg_buses]
    y0 = admittance.build_y0(case)
    margins = {}
    for depth in range(tree.horizon):
        try:
            margins[depth] = stability_margin(admittance.z_ratios(case, schedule.config(depth), y0))
        except (SingularMatrixError, IllConditionedError):
            margins[depth] = np.zeros(len(labels))

    voltages, gammas = {}, {}
    for c, label in enumerate(labels):
        v = np.array([schedule.voltage(node.id, positions[c]) for node in tree.nodes])
        g = np.array([margins[node.depth][c] for node in tree.nodes])
        voltages[label] = _hourly_expectation(tree, v)
        gammas[label] = _hourly_expectation(tree, g) * case.base_mva
    return voltages, gammas


def statcom_usage(schedule: ScheduleSolution, tree: ScenarioTree, case: GridCase) -> float:
    """Expected absolute STATCOM output in MVAr."""
    if schedule.q_stat.size == 0:
        return 0.0
    return _hourly_expectation(tree, np.abs(schedule.q_stat).sum(axis=1)) * case.base_mva


@dataclass(frozen=True)
class TcoReport:
    """Annual loss and O&M figures for a shunt device.

    Attributes:
        p_loss: MW.
        e_loss: MWh/yr, exactly 8760 * p_loss.
        c_loss: $/yr.
        c_oandm: $/yr, 1% of CAPEX.
    """

    p_loss: float
    e_loss: float
    c_loss: float
    c_oandm: float

    @property
    def annual_total(self) -> float:
        return self.c_loss + self.c_oandm


def tco(rating_mvar: float, loss_fraction: float, energy_price: float = 0.0, capex: float = 0.0) -> TcoReport:
    for name, value in (("rating", rating_mvar), ("loss fraction", loss_fraction), ("energy price", energy_price),
                        ("capex", capex)):
        if value < 0:
            utils.log_and_raise(logger.error, f"TCO input {name} must be non-negative, got {value}.",
                                EvaluationError(name), errors.EV_NEGATIVE_INPUT)
    p_loss = loss_fraction * rating_mvar
    e_loss = HOURS_PER_YEAR * p_loss
    return TcoReport(p_loss=p_loss, e_loss=e_loss, c_loss=energy_price * e_loss, c_oandm=OANDM_SHARE * capex)


@dataclass
class MetricsReport:
    cost_expected: float
    violation_rate_pct: float
    violation_rate_surrogate_pct: float
    curtailment_mw: float
    shed_mw: float
    freq_violation_pct: float
    nadir_slack_min: float
    rocof_slack_min: float
    soc_gap_mean: float
    soc_gap_max: float
    rank1_mean: float
    strength_ref: float
    strength_sched: float
    statcom_usage_mvar: float
    voltage: Dict[str, float] = field(default_factory=dict)
    gamma_mva: Dict[str, float] = field(default_factory=dict)
    diagnostics: List[Diagnostic] = field(default_factory=list)

    def as_row(self) -> Dict[str, float]:
        row = {
            const.COL_COST: self.cost_expected,
            const.COL_VIOL: self.violation_rate_pct,
            const.COL_VIOL_SURROGATE: self.violation_rate_surrogate_pct,
            const.COL_CURTAIL: self.curtailment_mw,
            const.COL_SHED: self.shed_mw,
            const.COL_FREQ_VIOL: self.freq_violation_pct,
            const.COL_NADIR_SLACK: self.nadir_slack_min,
            const.COL_ROCOF_SLACK: self.rocof_slack_min,
            const.COL_SOC_GAP_MEAN: self.soc_gap_mean,
            const.COL_SOC_GAP_MAX: self.soc_gap_max,
            const.COL_RANK1_MEAN: self.rank1_mean,
            const.COL_STRENGTH_REF: self.strength_ref,
            const.COL_STRENGTH_SCHED: self.strength_sched,
            const.COL_STATCOM_USAGE: self.statcom_usage_mvar,
        }
        for label, value in self.voltage.items():
            row[const.COL_VOLTAGE_PREFIX + label] = value
        for label, value in self.gamma_mva.items():
            row[const.COL_GAMMA_PREFIX + label] = value
        return row


def evaluate_schedule(
    schedule: ScheduleSolution,
    case: GridCase,
    tree: ScenarioTree,
    program: ConicProgram,
    model: Optional[surrogate.SurrogateModel] = None,
) -> MetricsReport:
    """Every metric of one solved schedule.

    Args:
        schedule: Decoded solution.
        case: The (patched) case it was solved on, per-unit.
        tree: The tree it was solved on.
        program: The built program, for cone residuals.
        model: The surrogate used by VSC modes; the surrogate-consistency rate is NaN without one.
    """
    exact = violation_rate(schedule, case, tree)
    learned = surrogate_violation_rate(schedule, tree, model).rate_pct if model is not None else math.nan
    curtail, shed = curtailment_and_shed(schedule, tree, case)
    slacks = frequency_slacks(schedule, case, tree)
    gap_mean, gap_max = soc_gap(schedule, program)
    voltages, gammas = ibg_voltage_and_margin(schedule, case, tree)
    return MetricsReport(
        cost_expected=schedule.objective / tree.horizon,
        violation_rate_pct=exact.rate_pct,
        violation_rate_surrogate_pct=learned,
        curtailment_mw=curtail,
        shed_mw=shed,
        freq_violation_pct=slacks.violation_rate_pct,
        nadir_slack_min=slacks.nadir_slack,
        rocof_slack_min=slacks.rocof_slack,
        soc_gap_mean=gap_mean,
        soc_gap_max=gap_max,
        rank1_mean=rank1_deviation(schedule, case),
        strength_ref=strength_reference(case),
        strength_sched=strength_scheduled(schedule, case, tree),
        statcom_usage_mvar=statcom_usage(schedule, tree, case),
        voltage=voltages,
        gamma_mva=gammas,
        diagnostics=exact.diagnostics,
    )
