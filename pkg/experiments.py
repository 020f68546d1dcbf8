"""Solve drivers: single points, parameter sweeps, the rolling horizon and plot data."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import logging
import math
import os
import pathlib

import cvxpy
import numpy as np
import pandas as pd
import scipy

import admittance
import case_parser
import const
import errors
import evaluate
import formulation
import solver
import surrogate
import utils
from case_patches import SweepAxis, get_patch, DEFAULT_SC_MACHINE_REACTANCE
from conic_program import ConicProgram
from formulation import BuildOptions, BuildReport, InitialUnitState, Mode
from grid_case import Diagnostic, GridCase, QuantileBin, Severity
from run_context import RunContext
from scenario import ForecastProfile, ScenarioTree, build_tree
from schedule import ScheduleSolution, extract_schedule

logger = logging.getLogger(__name__)

STATUS_FAILED = "failed"
STATUS_DRY_RUN = "dry_run"

BASE_COLUMNS = [
    const.COL_EXPERIMENT,
    const.COL_SWEEP_VALUE,
    const.COL_MODE,
    const.COL_STATUS,
    const.COL_COST,
    const.COL_VIOL,
    const.COL_VIOL_SURROGATE,
    const.COL_CURTAIL,
    const.COL_SHED,
    const.COL_FREQ_VIOL,
    const.COL_NADIR_SLACK,
    const.COL_ROCOF_SLACK,
    const.COL_SOC_GAP_MEAN,
    const.COL_SOC_GAP_MAX,
    const.COL_RANK1_MEAN,
    const.COL_STRENGTH_REF,
    const.COL_STRENGTH_SCHED,
    const.COL_STATCOM_USAGE,
]
SOLVE_COLUMNS = [const.COL_REL_GAP, const.COL_BOUND, const.COL_NODES, const.COL_WALL_TIME, const.COL_ERROR]


class ExperimentError(Exception):
    pass


class PlotDataError(Exception):
    pass


class RollingAbortError(Exception):
    """A rolling step had no feasible schedule.

    Attributes:
        step: Index of the failing step.
        diagnostics: What the build reported for that step.
    """

    def __init__(self, message: str, step: int, diagnostics: Optional[List[Diagnostic]] = None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or []


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment document.

    Attributes:
        name: Experiment label, used for file names and the `experiment` column.
        case_path: Case document path.
        modes: Modes solved at every sweep value.
        axis: What the sweep varies.
        values: Sweep values in physical units, sorted ascending.
        site_bus: Condenser site for SC sweeps.
        sc_machine_reactance: Condenser reactance on its own rating.
        horizon: Look-ahead hours; the case profile's horizon when None.
        branching_hours: Tree branching hours; the case profile's when None.
        quantiles: Forecast-error bins; the case profile's when None.
        start_hour: First hour of the window.
        rolling_steps: Steps for `run_rolling`.
        solver: Raw `solver` block.
        surrogate: Raw `surrogate` block.
        out: Output directory.
    """

    name: str
    case_path: pathlib.Path
    modes: Tuple[Mode, ...]
    axis: SweepAxis = SweepAxis.NONE
    values: Tuple[float, ...] = (0.0,)
    site_bus: Optional[int] = None
    sc_machine_reactance: float = DEFAULT_SC_MACHINE_REACTANCE
    horizon: Optional[int] = None
    branching_hours: Optional[Tuple[int, ...]] = None
    quantiles: Optional[Tuple[QuantileBin, ...]] = None
    start_hour: int = 0
    rolling_steps: int = 1
    solver: Dict[str, Any] = field(default_factory=lambda: {})
    surrogate: Dict[str, Any] = field(default_factory=lambda: {})
    out: Optional[str] = None


def _bad_spec(message: str, key: str = errors.EX_BAD_SPEC) -> None:
    utils.log_and_raise(logger.error, message, ExperimentError(message), key)


def parse_mode(value: str) -> Mode:
    try:
        return Mode(str(value).lower())
    except ValueError:
        _bad_spec(f"Unknown mode {value}; expected one of {[m.value for m in Mode]}.")


def parse_axis(value: str) -> SweepAxis:
    try:
        return SweepAxis(str(value).lower())
    except ValueError:
        _bad_spec(f"Unknown sweep axis {value}; expected one of {[a.value for a in SweepAxis]}.")


def parse_quantiles(entries: Sequence[Dict[str, Any]]) -> Tuple[QuantileBin, ...]:
    bins = []
    for entry in entries:
        if not isinstance(entry, dict) or const.MASS not in entry:
            _bad_spec(f"Quantile entry {entry} needs a `{const.MASS}`.")
        bins.append(
            QuantileBin(
                mass=float(entry[const.MASS]),
                wind_dev=float(entry.get(const.WIND_DEV, 0.0)),
                load_dev=float(entry.get(const.LOAD_DEV, 0.0)),
            )
        )
    return tuple(bins)


def check_values(values: Sequence[float]) -> Tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if any(not math.isfinite(v) for v in values):
        _bad_spec(f"Sweep values {list(values)} must be finite.", errors.EX_UNSORTED_VALUES)
    if any(b < a for a, b in zip(values, values[1:])):
        _bad_spec(f"Sweep values {list(values)} must be sorted ascending.", errors.EX_UNSORTED_VALUES)
    return values


def parse_experiment_spec(document: Dict[str, Any], base_dir: Optional[pathlib.Path] = None) -> ExperimentSpec:
    """Creates an ExperimentSpec from a loaded experiment document.

    Relative case paths resolve against `base_dir`, then against the working directory.
    """
    if not isinstance(document, dict):
        _bad_spec("An experiment document must be a mapping.")
    if const.EXPERIMENT_CASE not in document:
        _bad_spec(f"Experiment document has no `{const.EXPERIMENT_CASE}`.")

    case_path = pathlib.Path(document[const.EXPERIMENT_CASE])
    if base_dir is not None and not case_path.is_absolute() and not case_path.exists():
        case_path = base_dir / case_path

    modes = document.get(const.EXPERIMENT_MODES, [])
    if not isinstance(modes, list) or len(modes) == 0:
        _bad_spec("An experiment needs at least one mode.", errors.EX_NO_MODES)

    sweep = document.get(const.EXPERIMENT_SWEEP) or {}
    axis = parse_axis(sweep.get(const.SWEEP_AXIS, SweepAxis.NONE.value))
    values = check_values(sweep.get(const.SWEEP_VALUES, [0.0]))
    if len(values) == 0:
        _bad_spec("A sweep needs at least one value.")

    tree = document.get(const.EXPERIMENT_TREE) or {}
    quantiles = tree.get(const.QUANTILES)
    branching = tree.get(const.BRANCHING_HOURS)
    return ExperimentSpec(
        name=str(document.get(const.NAME, case_path.stem)),
        case_path=case_path,
        modes=tuple(parse_mode(m) for m in modes),
        axis=axis,
        values=values,
        site_bus=sweep.get(const.SWEEP_SITE_BUS),
        sc_machine_reactance=float(sweep.get(const.SWEEP_SC_REACTANCE, DEFAULT_SC_MACHINE_REACTANCE)),
        horizon=tree.get(const.HORIZON),
        branching_hours=tuple(branching) if branching is not None else None,
        quantiles=parse_quantiles(quantiles) if quantiles is not None else None,
        start_hour=int(document.get(const.START_HOUR, 0)),
        rolling_steps=int(document.get(const.ROLLING_STEPS, 1)),
        solver=dict(document.get(const.EXPERIMENT_SOLVER) or {}),
        surrogate=dict(document.get(const.EXPERIMENT_SURROGATE) or {}),
        out=document.get(const.EXPERIMENT_OUT),
    )


def load_experiment_spec(path: Union[pathlib.Path, os.PathLike, str]) -> ExperimentSpec:
    document = utils.get_config(path, logger)
    return parse_experiment_spec(document, base_dir=pathlib.Path(path).parent)


def make_tree(
    case: GridCase,
    start_hour: int = 0,
    horizon: Optional[int] = None,
    branching_hours: Optional[Sequence[int]] = None,
    quantiles: Optional[Sequence[QuantileBin]] = None,
) -> ScenarioTree:
    profile = ForecastProfile.from_case(case, start_hour=start_hour, horizon=horizon, quantiles=quantiles)
    if branching_hours is None:
        branching_hours = case.profile.branching_hours if case.profile is not None else ()
    branching_hours = [h for h in branching_hours if h < profile.horizon]
    return build_tree(profile, branching_hours)


def needs_surrogate(case: GridCase, modes: Sequence[Mode]) -> bool:
    return len(case.gfl_ibgs) > 0 and any(mode.stability_cone for mode in modes)


def train_surrogate(case: GridCase, context: RunContext) -> surrogate.SurrogateModel:
    model = surrogate.fit_case(case, n_v=context.n_v, prune_threshold=context.prune_threshold,
                               workers=context.workers)
    for diagnostic in model.diagnostics:
        logger.debug(str(diagnostic))
    return model


@dataclass
class PointOutcome:
    """Everything one solve produced.

    `schedule` and `metrics` are None when no integral solution was found or on a dry run.
    """

    mode: Mode
    status: str
    program: ConicProgram
    report: BuildReport
    result: Optional[solver.BnbResult] = None
    schedule: Optional[ScheduleSolution] = None
    metrics: Optional[evaluate.MetricsReport] = None

    @property
    def solved(self) -> bool:
        return self.schedule is not None


def run_point(
    case: GridCase,
    tree: ScenarioTree,
    mode: Mode,
    context: RunContext,
    model: Optional[surrogate.SurrogateModel] = None,
    initial_state: Optional[Tuple[InitialUnitState, ...]] = None,
) -> PointOutcome:
    """Builds, solves, decodes and evaluates one (case, tree, mode)."""
    options = BuildOptions(mode=mode, alpha_levels=context.n_v, initial_state=initial_state)
    program, variables, report = formulation.build(case, tree, model if mode.stability_cone else None, options)
    if context.dry_run:
        logger.info("Dry run %s: %s", mode.value, report.counts)
        return PointOutcome(mode=mode, status=STATUS_DRY_RUN, program=program, report=report)

    result = solver.solve_misocp(
        program,
        rel_gap=context.rel_gap,
        node_limit=context.node_limit,
        time_limit=context.time_limit,
        int_tol=context.integrality_tol,
        solver=context.subproblem_solver(),
        trace=context.trace,
    )
    outcome = PointOutcome(mode=mode, status=result.status.value, program=program, report=report, result=result)
    if not result.has_incumbent:
        return outcome

    outcome.schedule = extract_schedule(case, tree, program, variables, result.incumbent, mode,
                                       alpha_levels=context.n_v)
    outcome.metrics = evaluate.evaluate_schedule(outcome.schedule, case, tree, program, model)
    return outcome


def point_row(outcome: PointOutcome, experiment: str, sweep_value: float) -> Dict[str, Any]:
    row: Dict[str, Any] = {
        const.COL_EXPERIMENT: experiment,
        const.COL_SWEEP_VALUE: sweep_value,
        const.COL_MODE: outcome.mode.value,
        const.COL_STATUS: outcome.status,
    }
    if outcome.metrics is not None:
        row.update(outcome.metrics.as_row())
    if outcome.result is not None:
        row[const.COL_REL_GAP] = outcome.result.rel_gap
        row[const.COL_BOUND] = outcome.result.best_bound
        row[const.COL_NODES] = outcome.result.node_count
        row[const.COL_WALL_TIME] = outcome.result.wall_time
    return row


def failed_row(experiment: str, sweep_value: float, mode: Mode, error: BaseException) -> Dict[str, Any]:
    return {
        const.COL_EXPERIMENT: experiment,
        const.COL_SWEEP_VALUE: sweep_value,
        const.COL_MODE: mode.value,
        const.COL_STATUS: STATUS_FAILED,
        const.COL_ERROR: f"{type(error).__name__}: {error}",
    }


def table_columns(labels: Sequence[str]) -> List[str]:
    """Stable metrics column order for IBG labels `labels`."""
    columns = list(BASE_COLUMNS)
    columns.extend(const.COL_VOLTAGE_PREFIX + label for label in labels)
    columns.extend(const.COL_GAMMA_PREFIX + label for label in labels)
    return columns + SOLVE_COLUMNS


def _sweep_task(
    args: Tuple[str, float, GridCase, ScenarioTree, Mode, RunContext, Optional[surrogate.SurrogateModel]]
) -> Dict[str, Any]:
    experiment, value, case, tree, mode, context, model = args
    try:
        return point_row(run_point(case, tree, mode, context, model), experiment, value)
    except Exception as err:
        logger.warning("%s: %s at %s=%g failed: %s", errors.EX_POINT_FAILED, mode.value, experiment, value, err)
        return failed_row(experiment, value, mode, err)


def _sweep_tasks(spec: ExperimentSpec, case: GridCase, context: RunContext) -> List[Tuple]:
    patch = get_patch(spec.axis, spec.site_bus, spec.sc_machine_reactance)
    shared_model = None
    if needs_surrogate(case, spec.modes) and not patch.retrains_surrogate:
        shared_model = train_surrogate(case, context)

    tasks = []
    for value in spec.values:
        patched = patch.apply(case, value)
        model = shared_model
        if patch.retrains_surrogate and needs_surrogate(patched, spec.modes):
            model = train_surrogate(patched, context)
        tree = make_tree(patched, spec.start_hour, spec.horizon, spec.branching_hours, spec.quantiles)
        tasks.extend((spec.name, value, patched, tree, mode, context, model) for mode in spec.modes)
    return tasks


def run_sweep(spec: ExperimentSpec, context: RunContext, case: Optional[GridCase] = None) -> pd.DataFrame:
    """Solves every (sweep value, mode) pair and writes the metrics CSV and manifest.

    Per-point failures become rows with status `failed`; the sweep goes on.

    Args:
        spec: The experiment.
        context: Solver and output settings.
        case: Preloaded case; read from `spec.case_path` when None.

    Returns:
        The metrics table, one row per (sweep value, mode) in sweep order.
    """
    if case is None:
        case = case_parser.load_case(spec.case_path)
    tasks = _sweep_tasks(spec, case, context)
    logger.info("Sweep %s: %d points on %d worker(s)", spec.name, len(tasks), context.workers)

    if context.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=context.workers) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(task) for task in tasks]

    table = pd.DataFrame(rows).reindex(columns=table_columns(admittance.ibg_labels(case)))
    write_results(spec, context, table)
    return table


def failure_count(table: pd.DataFrame) -> int:
    """Rows without a solved schedule, dry runs excluded."""
    if table.empty:
        return 0
    unsolved = table[const.COL_COST].isna() & (table[const.COL_STATUS] != STATUS_DRY_RUN)
    return int(unsolved.sum())


def write_results(spec: ExperimentSpec, context: RunContext, table: pd.DataFrame) -> pathlib.Path:
    """Writes `<name>.csv` and `<name>_manifest.yml` under the output directory."""
    out_dir = pathlib.Path(context.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{spec.name}.csv"
    table.to_csv(csv_path, index=False, encoding="utf-8")

    settings = {
        "case": str(spec.case_path),
        "modes": [m.value for m in spec.modes],
        "axis": spec.axis.value,
        "values": list(spec.values),
        "start_hour": spec.start_hour,
        "solver": context.as_document(),
    }
    manifest = {
        "experiment": spec.name,
        "config_hash": utils.config_hash(settings),
        "created": datetime.now(timezone.utc).isoformat(),
        "settings": settings,
        "versions": package_versions(),
        "rows": int(len(table)),
        "failures": failure_count(table),
    }
    utils.write_yaml(out_dir / f"{spec.name}_manifest.yml", manifest)
    logger.info("Wrote %s", csv_path)
    return csv_path


def package_versions() -> Dict[str, str]:
    return {"numpy": np.__version__, "scipy": scipy.__version__, "cvxpy": cvxpy.__version__,
            "pandas": pd.__version__}


@dataclass
class RollingStep:
    """The implemented first hour of one rolling step."""

    step: int
    commitments: np.ndarray
    alphas: np.ndarray
    p_g: np.ndarray
    cost: float
    schedule: ScheduleSolution
    metrics: evaluate.MetricsReport


@dataclass
class RollingResult:
    mode: Mode
    steps: List[RollingStep] = field(default_factory=list)

    @property
    def implemented_commitments(self) -> np.ndarray:
        return np.array([step.commitments for step in self.steps])

    @property
    def implemented_dispatch(self) -> np.ndarray:
        return np.array([step.p_g for step in self.steps])

    def summary(self) -> pd.DataFrame:
        """One metrics row per step, plus its implemented cost."""
        rows = []
        for step in self.steps:
            row = {"step": step.step, "implemented_cost": step.cost}
            row.update(step.metrics.as_row())
            rows.append(row)
        return pd.DataFrame(rows)

    def daily(self) -> Dict[str, float]:
        """Aggregates over the implemented hours."""
        table = self.summary()
        if table.empty:
            return {"implemented_cost": 0.0}
        return {
            "implemented_cost": float(table["implemented_cost"].sum()),
            const.COL_VIOL: float(table[const.COL_VIOL].mean()),
            const.COL_CURTAIL: float(table[const.COL_CURTAIL].mean()),
            const.COL_SHED: float(table[const.COL_SHED].mean()),
            const.COL_NADIR_SLACK: float(table[const.COL_NADIR_SLACK].min()),
            const.COL_ROCOF_SLACK: float(table[const.COL_ROCOF_SLACK].min()),
        }


def implemented_cost(case: GridCase, schedule: ScheduleSolution) -> float:
    """Root-node cost of hour one, $ for one hour."""
    cost = 0.0
    for g, gen in enumerate(case.sync_gens):
        p, x = schedule.p_g[0, g], schedule.commitments[0, g]
        cost += gen.cost_quad * p * p + gen.cost_lin * p + gen.cost_noload * x
        cost += gen.cost_startup * schedule.startups[0, g]
    return cost + case.shed_cost * float(schedule.p_shed[0].sum())


def next_state(
    case: GridCase, schedule: ScheduleSolution, previous: Optional[Tuple[InitialUnitState, ...]]
) -> Tuple[InitialUnitState, ...]:
    """Carries hour one of `schedule` into the next step's initial state.

    Without a previous state hour one had no transition, so the unit counts as having
    satisfied its minimum up/down time.
    """
    states = []
    for g, gen in enumerate(case.sync_gens):
        on = bool(schedule.commitments[0, g])
        if previous is None:
            hours = max(gen.min_up, gen.min_down)
        elif previous[g].on == on:
            hours = previous[g].hours_in_state + 1
        else:
            hours = 1
        states.append(InitialUnitState(on=on, hours_in_state=hours, p_prev=float(schedule.p_g[0, g])))
    return tuple(states)


def run_rolling(
    case: GridCase,
    mode: Mode,
    context: RunContext,
    steps: int,
    horizon: Optional[int] = None,
    branching_hours: Optional[Sequence[int]] = None,
    quantiles: Optional[Sequence[QuantileBin]] = None,
    model: Optional[surrogate.SurrogateModel] = None,
    initial_state: Optional[Tuple[InitialUnitState, ...]] = None,
) -> RollingResult:
    """Solves `steps` overlapping windows, implementing hour one of each.

    Step s covers hours [s, s + horizon) of the case profile; the tree is rebuilt from
    that window's forecasts and the commitment state is carried forward.

    Raises:
        RollingAbortError: When a step has no feasible schedule.
    """
    if model is None and needs_surrogate(case, [mode]):
        model = train_surrogate(case, context)

    result = RollingResult(mode=mode)
    state = initial_state
    for step in range(steps):
        tree = make_tree(case, step, horizon, branching_hours, quantiles)
        outcome = run_point(case, tree, mode, context, model, state)
        if not outcome.solved:
            utils.log_and_raise(
                logger.error,
                f"Rolling step {step} ended {outcome.status} without a schedule.",
                RollingAbortError(f"step {step} infeasible", step, outcome.report.diagnostics),
                errors.EX_ROLLING_INFEASIBLE,
            )
        schedule = outcome.schedule
        result.steps.append(
            RollingStep(
                step=step,
                commitments=schedule.commitments[0].copy(),
                alphas=schedule.alphas[0].copy(),
                p_g=schedule.p_g[0].copy(),
                cost=implemented_cost(case, schedule),
                schedule=schedule,
                metrics=outcome.metrics,
            )
        )
        state = next_state(case, schedule, state)
        logger.info("Rolling step %d: commitments %s", step, schedule.commitments[0].tolist())
    return result


def verify_commitment_sequence(
    case: GridCase, commitments: np.ndarray, dispatch: Optional[np.ndarray] = None, tol: float = 1e-6
) -> List[Diagnostic]:
    """Re-checks min up/down and ramps over an implemented hourly sequence.

    The run in progress at hour zero counts as already satisfied, as does a run cut
    off by the end of the sequence.
    """
    found = []
    commitments = np.asarray(commitments, dtype=int).reshape(len(commitments), -1)
    for g, gen in enumerate(case.sync_gens):
        column = commitments[:, g]
        t = 1
        while t < len(column):
            if column[t] != column[t - 1]:
                end = t
                while end < len(column) and column[end] == column[t]:
                    end += 1
                required = gen.min_up if column[t] == 1 else gen.min_down
                if end < len(column) and end - t < required:
                    kind = "up" if column[t] == 1 else "down"
                    found.append(
                        Diagnostic(Severity.ERROR, f"sync_gens[{g}].hour[{t}]",
                                   f"Run of {end - t} h is shorter than min {kind} {required} h.",
                                   errors.EX_ROLLING_INFEASIBLE)
                    )
                t = end
            else:
                t += 1

        if dispatch is None:
            continue
        for t in range(1, len(column)):
            step = dispatch[t, g] - dispatch[t - 1, g]
            allowance = gen.ramp + gen.p_max * (1 if column[t] != column[t - 1] else 0)
            if abs(step) > allowance + tol:
                found.append(
                    Diagnostic(Severity.ERROR, f"sync_gens[{g}].hour[{t}]",
                               f"Dispatch change {step:.4f} exceeds ramp {allowance:.4f}.",
                               errors.EX_ROLLING_INFEASIBLE)
                )
    return found


@dataclass(frozen=True)
class FigureSpec:
    """Columns of one plot-data file.

    Attributes:
        x_label: Name the sweep value takes in the file.
        per_mode: Columns pivoted to one column per mode, named `<column>_<mode>`.
        shared: Columns identical across modes, taken from the first mode.
    """

    x_label: str
    per_mode: Tuple[str, ...]
    shared: Tuple[str, ...] = ()


FIGURES: Dict[str, FigureSpec] = {
    "wind_sweep": FigureSpec("wind_mw", (const.COL_COST, const.COL_VIOL)),
    "curtailment": FigureSpec("wind_mw", (const.COL_CURTAIL, const.COL_SHED)),
    "frequency": FigureSpec("wind_mw", (const.COL_NADIR_SLACK, const.COL_ROCOF_SLACK, const.COL_FREQ_VIOL)),
    "soc_gap": FigureSpec("wind_mw", (const.COL_SOC_GAP_MEAN, const.COL_RANK1_MEAN)),
    "statcom_rating": FigureSpec("statcom_mvar", (const.COL_COST, const.COL_VIOL), (const.COL_STRENGTH_REF,)),
    "statcom_usage": FigureSpec("statcom_mvar", (const.COL_STATCOM_USAGE,)),
    "statcom_siting": FigureSpec("site_bus", (const.COL_COST, const.COL_VIOL)),
    "sc_rating": FigureSpec("sc_mvar", (const.COL_COST, const.COL_VIOL), (const.COL_STRENGTH_REF,)),
}


def plot_frame(table: pd.DataFrame, figure_id: str) -> pd.DataFrame:
    """Projects a metrics table onto one figure's columns, one row per sweep value."""
    if figure_id not in FIGURES:
        utils.log_and_raise(logger.error, f"Unknown figure {figure_id}; known: {sorted(FIGURES)}.",
                            PlotDataError(figure_id), errors.EX_UNKNOWN_FIGURE)
    figure = FIGURES[figure_id]
    required = [const.COL_SWEEP_VALUE, const.COL_MODE, *figure.per_mode, *figure.shared]
    missing = [column for column in required if column not in table.columns]
    if missing:
        utils.log_and_raise(logger.error, f"Figure {figure_id} needs columns {missing}.",
                            PlotDataError(", ".join(missing)), errors.EX_MISSING_COLUMN)

    modes = [m.value for m in Mode if m.value in set(table[const.COL_MODE])]
    frame = pd.DataFrame({figure.x_label: sorted(table[const.COL_SWEEP_VALUE].unique())})
    for column in figure.per_mode:
        for mode in modes:
            selected = table[table[const.COL_MODE] == mode].groupby(const.COL_SWEEP_VALUE)[column].first()
            frame[f"{column}_{mode}"] = frame[figure.x_label].map(selected)
    for column in figure.shared:
        selected = table.groupby(const.COL_SWEEP_VALUE)[column].first()
        frame[column] = frame[figure.x_label].map(selected)
    if table.empty:
        frame = pd.DataFrame(columns=[figure.x_label, *figure.per_mode, *figure.shared])
    return frame


def emit_plotdata(table: pd.DataFrame, figure_id: str, out_dir: Union[pathlib.Path, str]) -> pathlib.Path:
    """Writes `<figure_id>.csv`; an empty table gives a header-only file."""
    frame = plot_frame(table, figure_id)
    out_dir = pathlib.Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{figure_id}.csv"
    frame.to_csv(path, index=False, encoding="utf-8")
    return path
