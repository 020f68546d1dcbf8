from typing import Dict, Any, Optional
import pathlib
from dataclasses import dataclass, replace

import const
import solver

DEFAULT_REL_GAP = 0.02
DEFAULT_NODE_LIMIT = 5000
DEFAULT_TIME_LIMIT = 600.0
DEFAULT_THREADS = 1
DEFAULT_BACKEND = "CLARABEL"
DEFAULT_PRUNE_THRESHOLD = 1e-4
DEFAULT_OUT_DIR = "results"


@dataclass(frozen=True)
class RunContext:
    """Solver and output settings shared by every solve of one run.

    `threads` parallelizes independent sweep points; each branch and bound runs on one
    thread.
    """

    rel_gap: float = DEFAULT_REL_GAP
    node_limit: int = DEFAULT_NODE_LIMIT
    time_limit: float = DEFAULT_TIME_LIMIT
    threads: int = DEFAULT_THREADS
    integrality_tol: float = solver.INTEGRALITY_TOL
    backend: str = DEFAULT_BACKEND
    single_thread: bool = False
    trace: bool = False
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD
    n_v: Optional[int] = None
    out_dir: pathlib.Path = pathlib.Path(DEFAULT_OUT_DIR)
    dry_run: bool = False

    @property
    def workers(self) -> int:
        return 1 if self.single_thread else max(1, self.threads)

    def subproblem_solver(self) -> solver.SubproblemSolver:
        return solver.CvxpySubproblemSolver(backend=self.backend)

    def as_document(self) -> Dict[str, Any]:
        return {
            const.REL_GAP: self.rel_gap,
            const.NODE_LIMIT: self.node_limit,
            const.TIME_LIMIT: self.time_limit,
            const.THREADS: self.threads,
            const.INTEGRALITY_TOL: self.integrality_tol,
            const.BACKEND: self.backend,
            const.SINGLE_THREAD: self.single_thread,
            const.TRACE: self.trace,
            const.PRUNE_THRESHOLD: self.prune_threshold,
            const.N_V: self.n_v,
        }


def create_run_context(
    solver_block: Optional[Dict[str, Any]] = None,
    surrogate_block: Optional[Dict[str, Any]] = None,
    out_dir: Optional[str] = None,
    **overrides: Any,
) -> RunContext:
    """Builds the run context from the YAML `solver` and `surrogate` blocks.

    Keyword overrides (CLI flags) win over the blocks; None overrides are ignored.
    """
    solver_block = solver_block or {}
    surrogate_block = surrogate_block or {}
    context = RunContext(
        rel_gap=float(solver_block.get(const.REL_GAP, DEFAULT_REL_GAP)),
        node_limit=int(solver_block.get(const.NODE_LIMIT, DEFAULT_NODE_LIMIT)),
        time_limit=float(solver_block.get(const.TIME_LIMIT, DEFAULT_TIME_LIMIT)),
        threads=int(solver_block.get(const.THREADS, DEFAULT_THREADS)),
        integrality_tol=float(solver_block.get(const.INTEGRALITY_TOL, solver.INTEGRALITY_TOL)),
        backend=str(solver_block.get(const.BACKEND, DEFAULT_BACKEND)).upper(),
        single_thread=bool(solver_block.get(const.SINGLE_THREAD, False)),
        trace=bool(solver_block.get(const.TRACE, False)),
        prune_threshold=float(surrogate_block.get(const.PRUNE_THRESHOLD, DEFAULT_PRUNE_THRESHOLD)),
        n_v=surrogate_block.get(const.N_V),
        out_dir=pathlib.Path(out_dir if out_dir is not None else DEFAULT_OUT_DIR),
    )
    return replace(context, **{key: value for key, value in overrides.items() if value is not None})
