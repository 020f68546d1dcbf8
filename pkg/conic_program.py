"""Solver-neutral intermediate representation for mixed-integer conic programs.

Variables are scalar columns with bounds and an integrality flag. Constraints are
sparse linear rows (equalities and `<=` rows), second-order cones ||u|| <= t and
rotated cones ||u||^2 <= 2 t1 t2 (t1, t2 >= 0). The objective is a constant plus a
linear term plus a diagonal convex quadratic.

    builder = ProgramBuilder()
    x = builder.add_var("x", lb=0.0, ub=1.0, binary=True)
    y = builder.add_var("y", lb=0.0)
    builder.add_ge(x + y, 1.0)
    builder.add_soc(y, [x - 0.5], tag="demo")
    builder.add_objective(2 * x + y)
    program = builder.build()
"""
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union
import io
import logging
import math

import numpy as np
from scipy.sparse import csr_matrix

import errors
import utils

logger = logging.getLogger(__name__)

INF = math.inf

Number = Union[int, float]


class ProgramError(Exception):
    pass


class AffineExpr:
    """Sparse affine expression sum(coef * var) + constant over variable indices."""

    __slots__ = ("terms", "constant")

    def __init__(self, terms: Optional[Dict[int, float]] = None, constant: float = 0.0):
        self.terms: Dict[int, float] = dict(terms) if terms else {}
        self.constant = float(constant)

    @staticmethod
    def lift(value: Union["AffineExpr", Number]) -> "AffineExpr":
        if isinstance(value, AffineExpr):
            return value
        return AffineExpr(constant=float(value))

    def _combine(self, other: Union["AffineExpr", Number], sign: float) -> "AffineExpr":
        other = AffineExpr.lift(other)
        terms = dict(self.terms)
        for index, coef in other.terms.items():
            terms[index] = terms.get(index, 0.0) + sign * coef
        return AffineExpr(terms, self.constant + sign * other.constant)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __radd__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return AffineExpr.lift(other)._combine(self, -1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar: Number) -> "AffineExpr":
        if isinstance(scalar, AffineExpr):
            raise TypeError("AffineExpr products are not affine; linearize them first.")
        scalar = float(scalar)
        return AffineExpr({i: c * scalar for i, c in self.terms.items()}, self.constant * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar: Number) -> "AffineExpr":
        return self * (1.0 / float(scalar))

    def __repr__(self) -> str:
        return f"AffineExpr({self.terms}, {self.constant})"

    @property
    def is_constant(self) -> bool:
        return all(coef == 0.0 for coef in self.terms.values())

    def single_variable(self) -> int:
        """Index of the variable when the expression is exactly 1.0 * var."""
        if self.constant != 0.0 or len(self.terms) != 1 or next(iter(self.terms.values())) != 1.0:
            raise ValueError(f"{self!r} is not a bare variable")
        return next(iter(self.terms))

    def evaluate(self, point: np.ndarray) -> float:
        return self.constant + float(sum(coef * point[index] for index, coef in self.terms.items()))


def expr_sum(items: Iterable[Union[AffineExpr, Number]]) -> AffineExpr:
    total = AffineExpr()
    for item in items:
        total = total + item
    return total


class ConeKind(Enum):
    SOC = "soc"
    ROTATED = "rsoc"


@dataclass(frozen=True)
class Cone:
    """A cone over an affine image: the cone vector is `matrix @ x + offset`.

    SOC rows are (t, u...). Rotated rows are (t1, t2, u...).
    """

    kind: ConeKind
    matrix: csr_matrix
    offset: np.ndarray
    tag: str = ""

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def values(self, point: np.ndarray) -> np.ndarray:
        return self.matrix @ point + self.offset


@dataclass(frozen=True)
class ConicProgram:
    """An immutable program; `with_bounds` derives branch-and-bound children.

    Attributes:
        names: Variable names, index aligned with every vector below.
        lb, ub: Variable bounds, +-inf when free.
        is_binary: Integrality flags (binaries carry bounds within [0, 1]).
        c, c0, q_diag: Objective c0 + c.x + sum(q_diag * x**2).
        a_eq, b_eq: Equality rows a_eq x = b_eq.
        a_ub, b_ub: Inequality rows a_ub x <= b_ub.
        cones: Second-order and rotated cones.
        eq_tags, ub_tags: Row labels for reporting.
    """

    names: Tuple[str, ...]
    lb: np.ndarray
    ub: np.ndarray
    is_binary: np.ndarray
    c: np.ndarray
    c0: float
    q_diag: np.ndarray
    a_eq: csr_matrix
    b_eq: np.ndarray
    a_ub: csr_matrix
    b_ub: np.ndarray
    cones: Tuple[Cone, ...] = ()
    eq_tags: Tuple[str, ...] = ()
    ub_tags: Tuple[str, ...] = ()
    _index: Dict[str, int] = field(default=None, init=False, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {name: pos for pos, name in enumerate(self.names)})

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def binary_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_binary)

    def index(self, name: str) -> int:
        if name not in self._index:
            utils.log_and_raise(logger.error, f"Program has no variable {name}.", ProgramError(name),
                                errors.IR_UNKNOWN_VARIABLE)
        return self._index[name]

    def with_bounds(self, lb: np.ndarray, ub: np.ndarray) -> "ConicProgram":
        return replace(self, lb=np.asarray(lb, dtype=float), ub=np.asarray(ub, dtype=float))

    def cones_tagged(self, tag: str) -> List[Cone]:
        return [cone for cone in self.cones if cone.tag == tag]

    def evaluate_objective(self, point: np.ndarray) -> float:
        return float(self.c0 + self.c @ point + self.q_diag @ (point * point))

    def counts(self) -> Dict[str, int]:
        return {
            "variables": self.n_vars,
            "binaries": int(np.sum(self.is_binary)),
            "equalities": self.a_eq.shape[0],
            "inequalities": self.a_ub.shape[0],
            "soc_cones": sum(1 for cone in self.cones if cone.kind == ConeKind.SOC),
            "rotated_cones": sum(1 for cone in self.cones if cone.kind == ConeKind.ROTATED),
        }

    def to_text(self) -> str:
        """Line-oriented dump used by `--dry-run` debugging and solver interop.

        VAR <name> <lb> <ub> <C|B>, OBJ <name> <lin> <quad>, EQ/LE <tag> <rhs> <i:coef>...,
        CONE <soc|rsoc> <tag> then one ROW line per cone entry.
        """
        out = io.StringIO()
        out.write(f"# {self.counts()}\n")
        for pos, name in enumerate(self.names):
            kind = "B" if self.is_binary[pos] else "C"
            out.write(f"VAR {name} {self.lb[pos]:.10g} {self.ub[pos]:.10g} {kind}\n")
        out.write(f"OBJCONST {self.c0:.10g}\n")
        for pos in np.flatnonzero((self.c != 0) | (self.q_diag != 0)):
            out.write(f"OBJ {self.names[pos]} {self.c[pos]:.10g} {self.q_diag[pos]:.10g}\n")
        for label, matrix, rhs, tags in (("EQ", self.a_eq, self.b_eq, self.eq_tags), ("LE", self.a_ub, self.b_ub, self.ub_tags)):
            for row in range(matrix.shape[0]):
                out.write(f"{label} {tags[row] if row < len(tags) else '-'} {rhs[row]:.10g}{_row_text(matrix, row)}\n")
        for cone in self.cones:
            out.write(f"CONE {cone.kind.value} {cone.tag or '-'} {cone.dim}\n")
            for row in range(cone.dim):
                out.write(f"ROW {cone.offset[row]:.10g}{_row_text(cone.matrix, row)}\n")
        return out.getvalue()


def _row_text(matrix: csr_matrix, row: int) -> str:
    start, end = matrix.indptr[row], matrix.indptr[row + 1]
    return "".join(f" {matrix.indices[k]}:{matrix.data[k]:.10g}" for k in range(start, end))


class _RowStore:
    def __init__(self):
        self.rows: List[int] = []
        self.cols: List[int] = []
        self.vals: List[float] = []
        self.rhs: List[float] = []
        self.tags: List[str] = []

    def append(self, expr: AffineExpr, rhs: float, tag: str) -> None:
        row = len(self.rhs)
        for index, coef in expr.terms.items():
            if coef != 0.0:
                self.rows.append(row)
                self.cols.append(index)
                self.vals.append(coef)
        self.rhs.append(rhs - expr.constant)
        self.tags.append(tag)

    def matrix(self, n_vars: int) -> csr_matrix:
        return csr_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.rhs), n_vars))


class ProgramBuilder:
    """Accumulates variables, rows and cones, then freezes them into a ConicProgram."""

    def __init__(self):
        self._names: List[str] = []
        self._index: Dict[str, int] = {}
        self._lb: List[float] = []
        self._ub: List[float] = []
        self._binary: List[bool] = []
        self._c: Dict[int, float] = {}
        self._c0 = 0.0
        self._q: Dict[int, float] = {}
        self._eq = _RowStore()
        self._ub_rows = _RowStore()
        self._cones: List[Tuple[ConeKind, List[AffineExpr], str]] = []

    @property
    def n_vars(self) -> int:
        return len(self._names)

    def has_var(self, name: str) -> bool:
        return name in self._index

    def add_var(self, name: str, lb: float = -INF, ub: float = INF, binary: bool = False) -> AffineExpr:
        if name in self._index:
            utils.log_and_raise(logger.error, f"Variable {name} already exists.", ProgramError(name),
                                errors.IR_DUPLICATE_VARIABLE)
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            utils.log_and_raise(logger.error, f"Variable {name} has lb {lb} > ub {ub}.", ProgramError(name),
                                errors.IR_BAD_BOUNDS)
        self._index[name] = len(self._names)
        self._names.append(name)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._binary.append(binary)
        return AffineExpr({self._index[name]: 1.0})

    def var(self, name: str) -> AffineExpr:
        if name not in self._index:
            utils.log_and_raise(logger.error, f"Unknown variable {name}.", ProgramError(name),
                                errors.IR_UNKNOWN_VARIABLE)
        return AffineExpr({self._index[name]: 1.0})

    def bounds(self, expr: AffineExpr) -> Tuple[float, float]:
        """Interval bounds of an affine expression from variable bounds."""
        lo = hi = expr.constant
        for index, coef in expr.terms.items():
            a, b = coef * self._lb[index], coef * self._ub[index]
            lo += min(a, b) if coef != 0.0 else 0.0
            hi += max(a, b) if coef != 0.0 else 0.0
        return lo, hi

    def set_bounds(self, expr: AffineExpr, lb: float, ub: float) -> None:
        index = expr.single_variable()
        self._lb[index], self._ub[index] = float(lb), float(ub)

    def _check(self, expr: AffineExpr) -> AffineExpr:
        expr = AffineExpr.lift(expr)
        bad = [index for index in expr.terms if not 0 <= index < self.n_vars]
        if len(bad) > 0:
            utils.log_and_raise(logger.error, f"Expression references unknown variables {bad}.",
                                ProgramError(str(bad)), errors.IR_UNKNOWN_VARIABLE)
        return expr

    def _difference(self, lhs, rhs) -> AffineExpr:
        return self._check(AffineExpr.lift(lhs) - rhs)

    def add_eq(self, lhs, rhs: Union[AffineExpr, Number] = 0.0, tag: str = "") -> None:
        self._eq.append(self._difference(lhs, rhs), 0.0, tag)

    def add_le(self, lhs, rhs: Union[AffineExpr, Number] = 0.0, tag: str = "") -> None:
        self._ub_rows.append(self._difference(lhs, rhs), 0.0, tag)

    def add_ge(self, lhs, rhs: Union[AffineExpr, Number] = 0.0, tag: str = "") -> None:
        self._ub_rows.append(self._difference(rhs, lhs), 0.0, tag)

    def add_soc(self, t, us: Sequence, tag: str = "") -> None:
        """||us|| <= t."""
        if len(us) == 0:
            utils.log_and_raise(logger.error, f"Cone {tag} has no members.", ProgramError(tag), errors.IR_EMPTY_CONE)
        self._cones.append((ConeKind.SOC, [self._check(t)] + [self._check(u) for u in us], tag))

    def add_rotated(self, t1, t2, us: Sequence, tag: str = "") -> None:
        """||us||^2 <= 2 t1 t2 with t1, t2 >= 0."""
        if len(us) == 0:
            utils.log_and_raise(logger.error, f"Cone {tag} has no members.", ProgramError(tag), errors.IR_EMPTY_CONE)
        self._cones.append((ConeKind.ROTATED, [self._check(t1), self._check(t2)] + [self._check(u) for u in us], tag))

    def add_objective(self, expr) -> None:
        expr = self._check(expr)
        self._c0 += expr.constant
        for index, coef in expr.terms.items():
            self._c[index] = self._c.get(index, 0.0) + coef

    def add_quadratic(self, var: AffineExpr, coef: float) -> None:
        """Adds coef * var**2 to the objective; `var` must be a bare variable."""
        if coef < 0:
            utils.log_and_raise(logger.error, f"Quadratic coefficient {coef} is negative.", ProgramError(str(coef)),
                                errors.IR_NEGATIVE_QUADRATIC)
        index = var.single_variable()
        self._q[index] = self._q.get(index, 0.0) + coef

    def build(self) -> ConicProgram:
        n = self.n_vars
        c = np.zeros(n)
        for index, coef in self._c.items():
            c[index] = coef
        q = np.zeros(n)
        for index, coef in self._q.items():
            q[index] = coef

        cones = []
        for kind, members, tag in self._cones:
            rows, cols, vals = [], [], []
            for row, member in enumerate(members):
                for index, coef in member.terms.items():
                    if coef != 0.0:
                        rows.append(row)
                        cols.append(index)
                        vals.append(coef)
            matrix = csr_matrix((vals, (rows, cols)), shape=(len(members), n))
            cones.append(Cone(kind, matrix, np.array([m.constant for m in members]), tag))

        program = ConicProgram(
            names=tuple(self._names),
            lb=np.array(self._lb, dtype=float),
            ub=np.array(self._ub, dtype=float),
            is_binary=np.array(self._binary, dtype=bool),
            c=c,
            c0=self._c0,
            q_diag=q,
            a_eq=self._eq.matrix(n),
            b_eq=np.array(self._eq.rhs, dtype=float),
            a_ub=self._ub_rows.matrix(n),
            b_ub=np.array(self._ub_rows.rhs, dtype=float),
            cones=tuple(cones),
            eq_tags=tuple(self._eq.tags),
            ub_tags=tuple(self._ub_rows.tags),
        )
        logger.debug("Built program %s", program.counts())
        return program
