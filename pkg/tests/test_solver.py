from typing import Callable, Type, Optional
import itertools
import math

import numpy as np
import pytest

import conic_program
import errors
import solver
from conic_program import ProgramBuilder
from solver import BnbStatus, SolveStatus, SolverError, SubproblemResult, SubproblemSolver


def mock_log_and_raise_func(
    logger_func: Callable,
    error_message: str,
    exception: Type[BaseException],
    error_key: Optional[str] = None,
):
    raise exception


@pytest.fixture(autouse=True)
def mock_log_and_raise(mocker):
    mock = mocker.patch(
        "solver.utils.log_and_raise",
    )
    mock.side_effect = mock_log_and_raise_func

    return mock


def knapsack(extra_cover: bool = False):
    """max 5a + 4b s.t. 6a + 4b <= 9 over binaries; optimum a=1, b=0."""
    builder = ProgramBuilder()
    a = builder.add_var("a", binary=True)
    b = builder.add_var("b", binary=True)
    builder.add_le(6 * a + 4 * b, 9.0, tag="weight")
    builder.add_soc(1.5, [a, b], tag="ball")
    if extra_cover:
        builder.add_ge(a + b, 3.0, tag="cover")
    builder.add_objective(-5 * a - 4 * b)
    return builder.build()


def parabola():
    """min t s.t. x^2 <= t, x >= 1; no binaries."""
    builder = ProgramBuilder()
    x = builder.add_var("x", lb=1.0, ub=10.0)
    t = builder.add_var("t", lb=0.0)
    builder.add_rotated(t, 0.5, [x], tag="pf")
    builder.add_objective(t)
    return builder.build()


class FailingSolver(SubproblemSolver):
    def __init__(self):
        self.calls = 0

    def solve(self, program, lb=None, ub=None, tightened=False):
        self.calls += 1
        return SubproblemResult(SolveStatus.NUMERIC_FAILURE, message="always fails")


class LeafFailingSolver(SubproblemSolver):
    """Fails numerically at the fixed leaf a=1, b=0 and delegates everywhere else."""

    def __init__(self):
        self.inner = solver.CvxpySubproblemSolver()

    def solve(self, program, lb=None, ub=None, tightened=False):
        if lb is not None and lb[:2].tolist() == [1.0, 0.0] and ub[:2].tolist() == [1.0, 0.0]:
            return SubproblemResult(SolveStatus.NUMERIC_FAILURE, message="leaf fails")
        return self.inner.solve(program, lb, ub, tightened=tightened)


class TestBranchAndBound:
    def test_knapsack_optimum(self):
        result = solver.solve_misocp(knapsack(), rel_gap=0.0)
        assert result.status == BnbStatus.OPTIMAL
        assert result.has_incumbent
        assert result.incumbent[:2].tolist() == [1.0, 0.0]
        assert result.objective == pytest.approx(-5.0, abs=1e-6)
        assert result.best_bound <= result.objective + 1e-6
        assert result.node_count >= 3

    def test_relaxation_bound(self):
        relaxed = solver.solve_relaxation(knapsack())
        assert relaxed.status == SolveStatus.OPTIMAL
        # b = 1, a = 5/6
        assert relaxed.objective == pytest.approx(-5 * 5 / 6 - 4, abs=1e-5)

    def test_infeasible(self):
        result = solver.solve_misocp(knapsack(extra_cover=True))
        assert result.status == BnbStatus.INFEASIBLE
        assert not result.has_incumbent
        assert result.objective == math.inf

    def test_node_limit_keeps_bound(self):
        result = solver.solve_misocp(knapsack(), rel_gap=0.0, node_limit=1)
        assert result.status == BnbStatus.BOUND_ONLY
        assert not result.has_incumbent
        assert result.node_count == 1
        assert result.best_bound == pytest.approx(-5 * 5 / 6 - 4, abs=1e-5)

    def test_continuous_program(self):
        result = solver.solve_misocp(parabola())
        assert result.status == BnbStatus.OPTIMAL
        assert result.objective == pytest.approx(1.0, abs=1e-5)
        assert result.node_count == 1

    def test_numeric_failures_never_claim_infeasible(self):
        failing = FailingSolver()
        result = solver.solve_misocp(knapsack(), solver=failing, rounding=False)
        assert result.status == BnbStatus.BOUND_ONLY
        assert result.best_bound == -math.inf
        assert result.stats.numeric_failures == 7
        assert failing.calls == 14

    def test_failed_leaf_never_claims_optimal(self):
        result = solver.solve_misocp(knapsack(), rel_gap=0.0, solver=LeafFailingSolver())
        assert result.status == BnbStatus.BOUND_ONLY
        assert result.has_incumbent
        assert result.incumbent[:2].tolist() == [0.0, 1.0]
        assert result.objective == pytest.approx(-4.0, abs=1e-6)
        assert result.best_bound == -math.inf
        assert result.rel_gap == math.inf
        assert result.stats.numeric_failures == 1


class TestFeasibility:
    def test_feasible_point(self):
        report = solver.check_feasibility(knapsack(), np.array([1.0, 0.0]))
        assert report.feasible
        assert report.max_violation == 0.0

    def test_violated_row(self):
        report = solver.check_feasibility(knapsack(), np.array([1.0, 1.0]))
        assert not report.feasible
        assert report.worst == "inequality[0]"

    def test_fractional_binary(self):
        program = knapsack()
        assert not solver.check_feasibility(program, np.array([0.5, 0.0])).feasible
        assert solver.check_feasibility(program, np.array([0.5, 0.0]), check_integrality=False).feasible

    def test_dimension_mismatch__raises(self, mock_log_and_raise):
        with pytest.raises(SolverError):
            solver.check_feasibility(knapsack(), np.zeros(3))
        assert errors.SO_DIMENSION_MISMATCH in mock_log_and_raise.call_args[0]

    def test_soc_residuals(self):
        program = parabola()
        exact = solver.soc_residuals(program, np.array([2.0, 4.0]))
        assert exact.max == 0.0
        loose = solver.soc_residuals(program, np.array([2.0, 2.0]), tags=["pf"])
        # (4 - 2) / max(1, 2)
        assert loose.values.tolist() == [1.0]
        assert solver.soc_residuals(program, np.array([2.0, 2.0]), tags=["other"]).mean == 0.0

    def test_relative_gap(self):
        assert solver.relative_gap(100.0, 98.0) == pytest.approx(0.02)
        assert solver.relative_gap(0.5, 0.0) == pytest.approx(0.5)
        assert solver.relative_gap(math.inf, 0.0) == math.inf


class TestBackends:
    def test_unknown_backend__raises(self, mock_log_and_raise):
        with pytest.raises(SolverError):
            solver.CvxpySubproblemSolver(backend="nosuchsolver")
        assert errors.SO_UNKNOWN_BACKEND in mock_log_and_raise.call_args[0]

    def test_ecos_agrees(self):
        result = solver.solve_misocp(knapsack(), rel_gap=0.0, solver=solver.CvxpySubproblemSolver("ECOS"))
        assert result.objective == pytest.approx(-5.0, abs=1e-6)


def random_instance(seed: int, n_binary: int = 4):
    """min c.b + t s.t. t >= ||(g.b - 1.5, h.b - 0.5)||, w.b <= cap; returns the program and its oracle."""
    rng = np.random.default_rng(seed)
    c = rng.uniform(-1.0, 1.0, n_binary)
    g, h = rng.uniform(0.0, 1.0, n_binary), rng.uniform(0.0, 1.0, n_binary)
    w = rng.uniform(0.5, 1.5, n_binary)
    cap = 0.5 * w.sum()

    builder = ProgramBuilder()
    b = [builder.add_var(f"b{i}", binary=True) for i in range(n_binary)]
    t = builder.add_var("t", lb=0.0)

    def dot(coef):
        return conic_program.expr_sum(float(k) * var for k, var in zip(coef, b))

    builder.add_le(dot(w), cap, tag="weight")
    builder.add_soc(t, [dot(g) - 1.5, dot(h) - 0.5], tag="coupling")
    builder.add_objective(dot(c) + t)

    best = math.inf
    for assignment in itertools.product((0.0, 1.0), repeat=n_binary):
        x = np.array(assignment)
        if w @ x <= cap:
            best = min(best, c @ x + math.hypot(g @ x - 1.5, h @ x - 0.5))
    return builder.build(), best


class TestAgainstEnumeration:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_enumeration(self, seed):
        program, oracle = random_instance(seed)
        result = solver.solve_misocp(program, rel_gap=0.0)
        assert result.status == BnbStatus.OPTIMAL
        assert result.objective == pytest.approx(oracle, rel=1e-6, abs=1e-6)
        assert result.best_bound <= result.objective + 1e-6
        assert result.node_count <= 2 ** (4 + 1)
