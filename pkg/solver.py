"""Continuous conic subproblems and the branch-and-bound driver for binaries.

The subproblem solver is pluggable through `SubproblemSolver`; the shipped
implementation compiles a ConicProgram into one cvxpy problem per program
structure, with binary bounds as parameters so branch-and-bound children only
update parameter values. Incumbents are re-checked by `check_feasibility`, a
plain numpy residual computation independent of the conic backend.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple
import heapq
import logging
import math
import time

import cvxpy as cp
import numpy as np
from scipy.sparse import csr_matrix, vstack

import errors
import utils
from conic_program import Cone, ConeKind, ConicProgram

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-6
GAP_TOL = 1e-9

SUPPORTED_BACKENDS = ("CLARABEL", "ECOS", "SCS")

TIGHT_SETTINGS = {
    "CLARABEL": {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10, "max_iter": 500},
    "ECOS": {"abstol": 1e-10, "reltol": 1e-10, "feastol": 1e-10, "max_iters": 500},
    "SCS": {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 200000},
}


class SolverError(Exception):
    pass


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERIC_FAILURE = "numeric_failure"


@dataclass
class SubproblemResult:
    status: SolveStatus
    x: Optional[np.ndarray] = None
    objective: float = math.nan
    bound: float = -math.inf
    message: str = ""


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    max_violation: float
    worst: str = ""


class SubproblemSolver(ABC):
    """Solves the continuous relaxation of a ConicProgram under given bounds."""

    capabilities = frozenset({"linear", "soc", "rotated_soc", "diagonal_quadratic_objective"})

    @abstractmethod
    def solve(self, program: ConicProgram, lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
              tightened: bool = False) -> SubproblemResult:
        pass


@dataclass
class _CompiledProgram:
    source: ConicProgram
    problem: cp.Problem
    x: cp.Variable
    lb_param: cp.Parameter
    ub_param: cp.Parameter
    binary_index: np.ndarray


def _cone_group_constraints(x: cp.Variable, cones: Sequence[Cone]) -> List[cp.Constraint]:
    """One vectorized cp.SOC per cone dimension; rotated cones are mapped to SOC form.

    ||u||^2 <= 2 t1 t2 with t1, t2 >= 0 is ||(sqrt(2) u, t1 - t2)|| <= t1 + t2.
    """
    groups: Dict[int, List[Tuple[csr_matrix, np.ndarray]]] = {}
    for cone in cones:
        if cone.kind == ConeKind.ROTATED:
            t1, t2 = cone.matrix[0], cone.matrix[1]
            o1, o2 = cone.offset[0], cone.offset[1]
            matrix = vstack([t1 + t2, t1 - t2, math.sqrt(2.0) * cone.matrix[2:]]).tocsr()
            offset = np.concatenate([[o1 + o2, o1 - o2], math.sqrt(2.0) * cone.offset[2:]])
        else:
            matrix, offset = cone.matrix, cone.offset
        groups.setdefault(matrix.shape[0], []).append((matrix, offset))

    constraints = []
    for dim in sorted(groups):
        members = groups[dim]
        t_matrix = vstack([m[0] for m, _ in members]).tocsr()
        t_offset = np.array([o[0] for _, o in members])
        u_matrix = vstack([m[1:] for m, _ in members]).tocsr()
        u_offset = np.concatenate([o[1:] for _, o in members])
        t = t_matrix @ x + t_offset
        u = cp.reshape(u_matrix @ x + u_offset, (dim - 1, len(members)), order="F")
        constraints.append(cp.SOC(t, u, axis=0))
    return constraints


def compile_program(program: ConicProgram) -> _CompiledProgram:
    n = program.n_vars
    x = cp.Variable(n)
    binary_index = program.binary_indices
    n_bin = max(len(binary_index), 1)
    lb_param = cp.Parameter(n_bin)
    ub_param = cp.Parameter(n_bin)

    constraints: List[cp.Constraint] = []
    continuous = np.flatnonzero(~program.is_binary)
    finite_lb = continuous[np.isfinite(program.lb[continuous])]
    finite_ub = continuous[np.isfinite(program.ub[continuous])]
    if finite_lb.size > 0:
        constraints.append(x[finite_lb] >= program.lb[finite_lb])
    if finite_ub.size > 0:
        constraints.append(x[finite_ub] <= program.ub[finite_ub])
    if len(binary_index) > 0:
        constraints.append(x[binary_index] >= lb_param)
        constraints.append(x[binary_index] <= ub_param)
    if program.a_eq.shape[0] > 0:
        constraints.append(program.a_eq @ x == program.b_eq)
    if program.a_ub.shape[0] > 0:
        constraints.append(program.a_ub @ x <= program.b_ub)
    constraints.extend(_cone_group_constraints(x, program.cones))

    objective = program.c @ x + program.c0
    quadratic = np.flatnonzero(program.q_diag)
    if quadratic.size > 0:
        objective = objective + cp.sum(cp.multiply(program.q_diag[quadratic], cp.square(x[quadratic])))
    problem = cp.Problem(cp.Minimize(objective), constraints)
    return _CompiledProgram(program, problem, x, lb_param, ub_param, binary_index)


class CvxpySubproblemSolver(SubproblemSolver):
    """Conic interior-point subproblems through cvxpy.

    Attributes:
        backend: cvxpy solver name, CLARABEL by default.
    """

    def __init__(self, backend: str = "CLARABEL"):
        backend = backend.upper()
        if backend not in SUPPORTED_BACKENDS or backend not in cp.installed_solvers():
            utils.log_and_raise(logger.error, f"Backend {backend} is not available; installed: {cp.installed_solvers()}",
                                SolverError(backend), errors.SO_UNKNOWN_BACKEND)
        self.backend = backend
        self._compiled: Dict[int, _CompiledProgram] = {}

    def _compiled_for(self, program: ConicProgram) -> _CompiledProgram:
        key = id(program.a_eq)
        compiled = self._compiled.get(key)
        if compiled is None or compiled.source.a_eq is not program.a_eq:
            compiled = compile_program(program)
            self._compiled[key] = compiled
        return compiled

    def solve(self, program: ConicProgram, lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
              tightened: bool = False) -> SubproblemResult:
        lb = program.lb if lb is None else lb
        ub = program.ub if ub is None else ub
        compiled = self._compiled_for(program)
        if len(compiled.binary_index) > 0:
            compiled.lb_param.value = np.asarray(lb, dtype=float)[compiled.binary_index]
            compiled.ub_param.value = np.asarray(ub, dtype=float)[compiled.binary_index]
        else:
            compiled.lb_param.value = np.zeros(1)
            compiled.ub_param.value = np.ones(1)

        settings = TIGHT_SETTINGS.get(self.backend, {}) if tightened else {}
        try:
            compiled.problem.solve(solver=self.backend, **settings)
        except cp.error.SolverError as err:
            logger.debug("%s: %s", errors.SO_NUMERIC_FAILURE, err)
            return SubproblemResult(SolveStatus.NUMERIC_FAILURE, message=str(err))

        status = compiled.problem.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            return SubproblemResult(SolveStatus.INFEASIBLE, message=status)
        if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
            return SubproblemResult(SolveStatus.UNBOUNDED, objective=-math.inf, message=status)
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or compiled.x.value is None:
            return SubproblemResult(SolveStatus.NUMERIC_FAILURE, message=str(status))

        point = np.asarray(compiled.x.value, dtype=float)
        if status == cp.OPTIMAL_INACCURATE:
            relaxed = program.with_bounds(lb, ub)
            report = check_feasibility(relaxed, point, check_integrality=False)
            if not report.feasible:
                return SubproblemResult(SolveStatus.NUMERIC_FAILURE, message=f"inaccurate: {report.worst}")
        objective = program.evaluate_objective(point)
        return SubproblemResult(SolveStatus.OPTIMAL, x=point, objective=objective, bound=objective, message=status)


def solve_relaxation(program: ConicProgram, solver: Optional[SubproblemSolver] = None) -> SubproblemResult:
    """Solves `program` with every binary relaxed to its [lb, ub] interval."""
    solver = solver or CvxpySubproblemSolver()
    result = solver.solve(program)
    if result.status == SolveStatus.NUMERIC_FAILURE:
        logger.warning("%s: relaxation failed (%s); retrying with tightened settings", errors.SO_NUMERIC_FAILURE,
                       result.message)
        result = solver.solve(program, tightened=True)
    return result


def _check_dimension(program: ConicProgram, point: np.ndarray) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if point.shape != (program.n_vars,):
        utils.log_and_raise(logger.error, f"Point has shape {point.shape}, program has {program.n_vars} variables.",
                            SolverError("dimension mismatch"), errors.SO_DIMENSION_MISMATCH)
    return point


def check_feasibility(
    program: ConicProgram, point: np.ndarray, tol: float = FEASIBILITY_TOL, check_integrality: bool = True
) -> FeasibilityReport:
    """Scaled residuals of every bound, row, cone and integrality requirement."""
    point = _check_dimension(program, point)
    worst, worst_label = 0.0, ""

    def consider(values: np.ndarray, label: str) -> None:
        nonlocal worst, worst_label
        if values.size == 0:
            return
        pos = int(np.argmax(values))
        if values[pos] > worst:
            worst, worst_label = float(values[pos]), f"{label}[{pos}]"

    with np.errstate(invalid="ignore"):
        consider(np.nan_to_num(program.lb - point, nan=0.0, neginf=0.0), "lower_bound")
        consider(np.nan_to_num(point - program.ub, nan=0.0, neginf=0.0), "upper_bound")
    if program.a_eq.shape[0] > 0:
        consider(np.abs(program.a_eq @ point - program.b_eq) / np.maximum(1.0, np.abs(program.b_eq)), "equality")
    if program.a_ub.shape[0] > 0:
        consider((program.a_ub @ point - program.b_ub) / np.maximum(1.0, np.abs(program.b_ub)), "inequality")
    if check_integrality and np.any(program.is_binary):
        binary = point[program.is_binary]
        consider(np.abs(binary - np.round(binary)), "integrality")
    for pos, cone in enumerate(program.cones):
        values = cone.values(point)
        if cone.kind == ConeKind.SOC:
            violation = (np.linalg.norm(values[1:]) - values[0]) / max(1.0, abs(values[0]))
        else:
            product = 2.0 * values[0] * values[1]
            violation = max(
                (float(values[2:] @ values[2:]) - product) / max(1.0, abs(product)), -values[0], -values[1]
            )
        consider(np.array([violation]), f"cone:{cone.tag}:{pos}")

    return FeasibilityReport(feasible=worst <= tol, max_violation=worst, worst=worst_label)


@dataclass(frozen=True)
class SocResiduals:
    values: np.ndarray
    mean: float
    max: float


def soc_residuals(program: ConicProgram, point: np.ndarray, tags: Optional[Sequence[str]] = None) -> SocResiduals:
    """Per-cone residuals.

    Rotated cones give max(0, ||u||^2 - 2 t1 t2) / max(1, 2 t1 t2); SOC rows give
    max(0, ||u|| - t) / max(1, t).

    Args:
        program: The program the point belongs to.
        point: Full variable vector.
        tags: Restrict to cones with these tags; all cones when None.
    """
    point = _check_dimension(program, point)
    residuals = []
    for cone in program.cones:
        if tags is not None and cone.tag not in tags:
            continue
        values = cone.values(point)
        if cone.kind == ConeKind.ROTATED:
            product = 2.0 * values[0] * values[1]
            residuals.append(max(0.0, float(values[2:] @ values[2:]) - product) / max(1.0, product))
        else:
            residuals.append(max(0.0, float(np.linalg.norm(values[1:])) - values[0]) / max(1.0, values[0]))
    values = np.array(residuals, dtype=float)
    if values.size == 0:
        return SocResiduals(values=values, mean=0.0, max=0.0)
    return SocResiduals(values=values, mean=float(values.mean()), max=float(values.max()))


class BnbStatus(Enum):
    OPTIMAL = "optimal"
    NODE_LIMIT = "node_limit"
    TIME_LIMIT = "time_limit"
    BOUND_ONLY = "bound_only"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(order=True)
class BBNode:
    """An open node; the heap orders by parent bound, then creation order."""

    priority: float
    node_id: int
    depth: int = field(compare=False, default=0)
    lb: np.ndarray = field(compare=False, default=None)
    ub: np.ndarray = field(compare=False, default=None)


@dataclass
class BBStats:
    nodes_explored: int = 0
    nodes_pruned: int = 0
    nodes_infeasible: int = 0
    numeric_failures: int = 0
    heuristic_solutions: int = 0


@dataclass
class BnbResult:
    """Outcome of `solve_misocp`.

    Attributes:
        status: Why the search stopped.
        incumbent: Best verified integral point, None when none was found.
        objective: Objective of the incumbent, +inf without one.
        best_bound: Valid lower bound on the optimum.
        rel_gap: (objective - best_bound) / max(1, |objective|).
        node_count: Subproblems solved.
        wall_time: Seconds.
    """

    status: BnbStatus
    incumbent: Optional[np.ndarray]
    objective: float
    best_bound: float
    rel_gap: float
    node_count: int
    wall_time: float
    stats: BBStats = field(default_factory=BBStats)

    @property
    def has_incumbent(self) -> bool:
        return self.incumbent is not None


def relative_gap(objective: float, bound: float) -> float:
    if not math.isfinite(objective):
        return math.inf
    if not math.isfinite(bound):
        return math.inf
    return (objective - bound) / max(1.0, abs(objective))


def _most_fractional(point: np.ndarray, binary: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                     int_tol: float) -> Optional[int]:
    free = binary[lb[binary] < ub[binary]]
    values = point[free]
    fractionality = np.abs(values - np.round(values))
    candidates = np.flatnonzero(fractionality > int_tol)
    if candidates.size == 0:
        return None
    distance = np.abs(values[candidates] - 0.5)
    return int(free[candidates[int(np.argmin(distance))]])


def _first_free(binary: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> Optional[int]:
    free = binary[lb[binary] < ub[binary]]
    return int(free[0]) if free.size > 0 else None


class _Search:
    def __init__(self, program: ConicProgram, solver: SubproblemSolver, rel_gap: float, int_tol: float, trace: bool):
        self.program = program
        self.solver = solver
        self.rel_gap = rel_gap
        self.int_tol = int_tol
        self.trace = trace
        self.binary = program.binary_indices
        self.incumbent: Optional[np.ndarray] = None
        self.objective = math.inf
        self.pruned_bound = math.inf
        self.stats = BBStats()

    def solve_node(self, lb: np.ndarray, ub: np.ndarray) -> SubproblemResult:
        result = self.solver.solve(self.program, lb, ub)
        if result.status == SolveStatus.NUMERIC_FAILURE:
            result = self.solver.solve(self.program, lb, ub, tightened=True)
            if result.status == SolveStatus.NUMERIC_FAILURE:
                self.stats.numeric_failures += 1
                logger.warning("%s: node re-solve failed (%s); keeping it open with bound -inf",
                               errors.SO_NUMERIC_FAILURE, result.message)
        return result

    def can_prune(self, bound: float) -> bool:
        if self.incumbent is None:
            return False
        return self.objective - bound <= self.rel_gap * max(1.0, abs(self.objective))

    def try_incumbent(self, point: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> bool:
        """Snaps binaries, verifies, and re-solves with binaries fixed if the snap fails."""
        snapped = point.copy()
        snapped[self.binary] = np.round(snapped[self.binary])
        candidate = snapped
        if not check_feasibility(self.program, snapped).feasible:
            fixed_lb, fixed_ub = lb.copy(), ub.copy()
            fixed_lb[self.binary] = snapped[self.binary]
            fixed_ub[self.binary] = snapped[self.binary]
            result = self.solver.solve(self.program, fixed_lb, fixed_ub, tightened=True)
            if result.status != SolveStatus.OPTIMAL:
                return False
            candidate = result.x.copy()
            candidate[self.binary] = snapped[self.binary]
            if not check_feasibility(self.program, candidate).feasible:
                return False
        objective = self.program.evaluate_objective(candidate)
        if objective < self.objective:
            self.incumbent, self.objective = candidate, objective
            return True
        return False

    def root_rounding(self, point: np.ndarray) -> None:
        lb, ub = self.program.lb.copy(), self.program.ub.copy()
        rounded = np.round(point[self.binary])
        lb[self.binary] = rounded
        ub[self.binary] = rounded
        result = self.solve_node(lb, ub)
        if result.status == SolveStatus.OPTIMAL and self.try_incumbent(result.x, lb, ub):
            self.stats.heuristic_solutions += 1
            logger.info("Root rounding found incumbent %.6g", self.objective)

    def log_node(self, node: BBNode, bound: float, status: str) -> None:
        if self.trace:
            logger.debug("node=%d depth=%d bound=%.10g status=%s", node.node_id, node.depth, bound, status)


def solve_misocp(
    program: ConicProgram,
    rel_gap: float = 0.02,
    node_limit: int = 5000,
    time_limit: float = 600.0,
    int_tol: float = INTEGRALITY_TOL,
    solver: Optional[SubproblemSolver] = None,
    trace: bool = False,
    rounding: bool = True,
) -> BnbResult:
    """Best-first branch-and-bound on fractional binaries.

    Args:
        program: Program with binaries flagged in `is_binary`.
        rel_gap: Stop when (incumbent - bound) / max(1, |incumbent|) <= rel_gap.
        node_limit: Maximum subproblems solved.
        time_limit: Wall-clock seconds.
        int_tol: Integrality tolerance for relaxation values.
        solver: Subproblem solver, cvxpy/CLARABEL by default.
        trace: Emit one DEBUG line per node.
        rounding: Try rounding the root relaxation for a first incumbent.

    Returns:
        The result; node ordering is deterministic for a fixed program and solver.
    """
    started = time.perf_counter()
    search = _Search(program, solver or CvxpySubproblemSolver(), rel_gap, int_tol, trace)
    heap: List[BBNode] = [BBNode(priority=-math.inf, node_id=0, depth=0, lb=program.lb.copy(), ub=program.ub.copy())]
    next_id = 1
    explored = 0
    stop: Optional[BnbStatus] = None

    while heap:
        if explored >= node_limit:
            stop = BnbStatus.NODE_LIMIT
            break
        if time.perf_counter() - started > time_limit:
            stop = BnbStatus.TIME_LIMIT
            break
        if search.can_prune(heap[0].priority):
            break

        node = heapq.heappop(heap)
        result = search.solve_node(node.lb, node.ub)
        explored += 1

        if result.status == SolveStatus.INFEASIBLE:
            search.stats.nodes_infeasible += 1
            search.log_node(node, math.inf, result.status.value)
            continue
        if result.status == SolveStatus.UNBOUNDED:
            search.log_node(node, -math.inf, result.status.value)
            if node.node_id == 0:
                return BnbResult(BnbStatus.UNBOUNDED, None, -math.inf, -math.inf, math.inf, explored,
                                 time.perf_counter() - started, search.stats)
            continue

        if result.status == SolveStatus.NUMERIC_FAILURE:
            bound = -math.inf
            branch_on = _first_free(search.binary, node.lb, node.ub)
            if branch_on is None:
                search.pruned_bound = -math.inf
                search.log_node(node, bound, result.status.value)
                continue
        else:
            bound = max(result.objective, node.priority)
            search.log_node(node, bound, result.status.value)
            if search.can_prune(bound):
                search.stats.nodes_pruned += 1
                search.pruned_bound = min(search.pruned_bound, bound)
                continue
            if node.node_id == 0 and rounding and len(search.binary) > 0:
                search.root_rounding(result.x)
            branch_on = _most_fractional(result.x, search.binary, node.lb, node.ub, int_tol)
            if branch_on is None:
                search.try_incumbent(result.x, node.lb, node.ub)
                continue

        for value in (0.0, 1.0):
            lb, ub = node.lb.copy(), node.ub.copy()
            lb[branch_on] = ub[branch_on] = value
            heapq.heappush(heap, BBNode(priority=bound, node_id=next_id, depth=node.depth + 1, lb=lb, ub=ub))
            next_id += 1

    search.stats.nodes_explored = explored
    open_bound = min((n.priority for n in heap), default=math.inf)
    best_bound = min(open_bound, search.pruned_bound, search.objective)
    wall_time = time.perf_counter() - started

    if search.incumbent is None:
        proven = stop is None and search.stats.numeric_failures == 0
        status = BnbStatus.INFEASIBLE if proven else BnbStatus.BOUND_ONLY
        if status == BnbStatus.INFEASIBLE:
            best_bound = math.inf
        logger.info("Branch-and-bound finished %s after %d nodes", status.value, explored)
        return BnbResult(status, None, math.inf, best_bound, math.inf, explored, wall_time, search.stats)

    gap = relative_gap(search.objective, best_bound)
    status = BnbStatus.OPTIMAL if stop is None else stop
    if status == BnbStatus.OPTIMAL and not gap <= rel_gap + GAP_TOL:
        # a dropped numeric-failure leaf leaves the bound unproven
        status = BnbStatus.BOUND_ONLY
        logger.warning("%s: incumbent %.6g not proven within rel_gap %.4g (bound %.6g)",
                       errors.SO_NUMERIC_FAILURE, search.objective, rel_gap, best_bound)
    logger.info("Branch-and-bound finished %s: objective=%.6g bound=%.6g gap=%.4g nodes=%d time=%.1fs",
                status.value, search.objective, best_bound, gap, explored, wall_time)
    return BnbResult(status, search.incumbent, search.objective, best_bound, gap, explored, wall_time, search.stats)
