from dataclasses import replace
from typing import List, Optional, Tuple
import argparse
import logging
import pathlib
import sys

import pandas as pd

import case_parser
import errors
import evaluate
import experiments
import surrogate
import utils
from case_patches import SweepAxis
from experiments import ExperimentSpec
from formulation import Mode
from grid_case import QuantileBin
from run_context import create_run_context

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_HARD_ERROR = 1
EXIT_PARTIAL_FAILURE = 2

STATCOM_LOSS_FRACTION = 0.008
SC_LOSS_FRACTION = 0.015

AXIS_FIGURES = {
    SweepAxis.WIND_CAPACITY: ["wind_sweep", "curtailment", "frequency", "soc_gap"],
    SweepAxis.STATCOM_RATING: ["statcom_rating", "statcom_usage"],
    SweepAxis.STATCOM_SITE: ["statcom_siting"],
    SweepAxis.SC_RATING: ["sc_rating"],
    SweepAxis.NONE: [],
}


def _csv_floats(text: str) -> List[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def _csv_ints(text: str) -> List[int]:
    return [int(item) for item in text.split(",") if item.strip()]


def _quantiles(text: str) -> Tuple[QuantileBin, ...]:
    """`mass:wind_dev:load_dev,...`, deviations optional."""
    bins = []
    for item in text.split(","):
        parts = [float(p) for p in item.split(":")] + [0.0, 0.0]
        bins.append(QuantileBin(mass=parts[0], wind_dev=parts[1], load_dev=parts[2]))
    return tuple(bins)


def _add_solve_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--case", type=str)
    sub.add_argument("--mode", type=str, action="append", help="base_si, vsc_si or vsc_q_si; repeatable")
    sub.add_argument("--gap", type=float)
    sub.add_argument("--threads", type=int)
    sub.add_argument("--out", type=str)
    sub.add_argument("--dry-run", action="store_true")
    sub.add_argument("--single-thread", action="store_true")
    sub.add_argument("--trace", action="store_true")
    sub.add_argument("--horizon", type=int)
    sub.add_argument("--start-hour", type=int, default=0)
    sub.add_argument("--branching", type=_csv_ints, help="comma-separated branching hours")
    sub.add_argument("--quantiles", type=_quantiles, help="mass:wind_dev:load_dev,...")


parser = argparse.ArgumentParser(prog="vscuc")
parser.add_argument("-v", "--verbose", action="count", default=0)
subparsers = parser.add_subparsers(dest="command", required=True)

solve_parser = subparsers.add_parser("solve", help="solve one case in one or more modes")
_add_solve_flags(solve_parser)

sweep_parser = subparsers.add_parser("sweep", help="run an experiment sweep")
_add_solve_flags(sweep_parser)
sweep_parser.add_argument("--config", type=str)
sweep_parser.add_argument("--sweep", type=str, help="|".join(a.value for a in SweepAxis))
sweep_parser.add_argument("--values", type=_csv_floats)

rolling_parser = subparsers.add_parser("rolling", help="rolling-horizon run over the day profile")
_add_solve_flags(rolling_parser)
rolling_parser.add_argument("--config", type=str)
rolling_parser.add_argument("--steps", type=int)

surrogate_parser = subparsers.add_parser("surrogate", help="fit and save the Z-ratio model")
surrogate_parser.add_argument("--case", type=str, required=True)
surrogate_parser.add_argument("--n-v", type=int)
surrogate_parser.add_argument("--prune", type=float)
surrogate_parser.add_argument("--threads", type=int)
surrogate_parser.add_argument("--out", type=str)

tco_parser = subparsers.add_parser("tco", help="annual loss and O&M of a shunt device")
tco_parser.add_argument("--rating", type=float, required=True, help="MVAr")
tco_parser.add_argument("--loss-fraction", type=float, default=STATCOM_LOSS_FRACTION)
tco_parser.add_argument("--price", type=float, default=0.0, help="$/MWh")
tco_parser.add_argument("--capex", type=float, default=0.0, help="$")
tco_parser.add_argument("--compare", action="store_true", help="report STATCOM and SC loss fractions")


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _context(args, spec: Optional[ExperimentSpec] = None):
    solver_block = spec.solver if spec is not None else None
    surrogate_block = spec.surrogate if spec is not None else None
    out = args.out or (spec.out if spec is not None else None)
    return create_run_context(
        solver_block,
        surrogate_block,
        out,
        rel_gap=args.gap,
        threads=args.threads,
        single_thread=args.single_thread or None,
        trace=args.trace or None,
        dry_run=args.dry_run or None,
    )


def _modes(args, default: Tuple[Mode, ...]) -> Tuple[Mode, ...]:
    if not args.mode:
        return default
    return tuple(experiments.parse_mode(m) for m in args.mode)


def _spec_from_args(args) -> ExperimentSpec:
    if getattr(args, "config", None):
        spec = experiments.load_experiment_spec(args.config)
    else:
        if not args.case:
            utils.log_and_raise(logger.error, "Either --config or --case is required.",
                                experiments.ExperimentError("no case"), errors.EX_BAD_SPEC)
        spec = ExperimentSpec(name=pathlib.Path(args.case).stem, case_path=pathlib.Path(args.case),
                              modes=tuple(Mode))

    changes = {"modes": _modes(args, spec.modes), "start_hour": args.start_hour or spec.start_hour}
    if args.case:
        changes["case_path"] = pathlib.Path(args.case)
    if getattr(args, "sweep", None):
        changes["axis"] = experiments.parse_axis(args.sweep)
    if getattr(args, "values", None) is not None:
        changes["values"] = experiments.check_values(args.values)
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.branching is not None:
        changes["branching_hours"] = tuple(args.branching)
    if args.quantiles is not None:
        changes["quantiles"] = args.quantiles
    return replace(spec, **changes)


def run_sweep_command(args) -> int:
    spec = _spec_from_args(args)
    context = _context(args, spec)
    table = experiments.run_sweep(spec, context)
    for figure in AXIS_FIGURES[spec.axis]:
        experiments.emit_plotdata(table, figure, context.out_dir)
    print(table.to_string(index=False))
    failures = experiments.failure_count(table)
    if failures > 0:
        logger.warning("%s: %d of %d points failed", errors.EX_POINT_FAILED, failures, len(table))
        return EXIT_PARTIAL_FAILURE
    return EXIT_OK


def run_rolling_command(args) -> int:
    spec = _spec_from_args(args)
    context = _context(args, spec)
    case = case_parser.load_case(spec.case_path)
    mode = spec.modes[0]
    steps = args.steps if args.steps is not None else spec.rolling_steps
    result = experiments.run_rolling(case, mode, context, steps, spec.horizon, spec.branching_hours,
                                     spec.quantiles)
    violations = experiments.verify_commitment_sequence(case, result.implemented_commitments,
                                                        result.implemented_dispatch)
    for diagnostic in violations:
        logger.warning(str(diagnostic))

    context.out_dir.mkdir(parents=True, exist_ok=True)
    summary = result.summary()
    summary.to_csv(context.out_dir / f"{spec.name}_rolling_{mode.value}.csv", index=False, encoding="utf-8")
    print(summary.to_string(index=False))
    print(pd.Series(result.daily()).to_string())
    return EXIT_OK if not violations else EXIT_HARD_ERROR


def run_surrogate_command(args) -> int:
    context = create_run_context(None, None, args.out, threads=args.threads, prune_threshold=args.prune,
                                 n_v=args.n_v)
    case = case_parser.load_case(args.case)
    model = experiments.train_surrogate(case, context)
    context.out_dir.mkdir(parents=True, exist_ok=True)
    stem = pathlib.Path(args.case).stem
    surrogate.save_model(model, context.out_dir / f"{stem}_surrogate.yml")
    table = surrogate.metrics_table(model)
    table.to_csv(context.out_dir / f"{stem}_surrogate_metrics.csv", index=False, encoding="utf-8")
    print(table.to_string(index=False))
    return EXIT_OK


def run_tco_command(args) -> int:
    fractions = {"device": args.loss_fraction}
    if args.compare:
        fractions = {"statcom": STATCOM_LOSS_FRACTION, "synchronous_condenser": SC_LOSS_FRACTION}
    rows = []
    for device, fraction in fractions.items():
        report = evaluate.tco(args.rating, fraction, args.price, args.capex)
        rows.append({"device": device, "loss_fraction": fraction, "p_loss_mw": report.p_loss,
                     "e_loss_mwh_per_yr": report.e_loss, "c_loss_per_yr": report.c_loss,
                     "c_oandm_per_yr": report.c_oandm})
    print(pd.DataFrame(rows).to_string(index=False))
    return EXIT_OK


COMMAND_MAP = {
    "solve": run_sweep_command,
    "sweep": run_sweep_command,
    "rolling": run_rolling_command,
    "surrogate": run_surrogate_command,
    "tco": run_tco_command,
}


def main(override_args: List[str] = None) -> int:
    args = None
    if override_args is not None:
        args = parser.parse_args(override_args)
    else:
        args = parser.parse_args()

    _configure_logging(args.verbose)
    try:
        return COMMAND_MAP[args.command](args)
    except Exception as err:
        logger.error("%s failed: %s", args.command, err)
        return EXIT_HARD_ERROR


if __name__ == "__main__":
    sys.exit(main())
