"""Builds the stochastic VSC-constrained unit commitment as a ConicProgram.

Commitment, GFM strength levels and condenser status are first-stage decisions
indexed by tree depth (one hour per depth) and shared by every node at that depth.
Dispatch, network, IBG and frequency variables are indexed by tree node.

    program, variables, report = formulation.build(case, tree, model, options)
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple
import logging
import math

import numpy as np

import admittance
import errors
import frequency
import utils
from conic_program import AffineExpr, ConicProgram, ProgramBuilder, expr_sum
from grid_case import Diagnostic, GridCase, Severity, alpha_grid
from scenario import NodeRealization, ScenarioTree, node_realization
from surrogate import SurrogateModel

logger = logging.getLogger(__name__)

# Variable symbols. First-stage symbols are keyed by depth, the rest by node id.
X, U, V, LEVEL, SC_ON = "x", "u", "v", "lvl", "sc_on"
P_G, Q_G, P_GFM, Q_GFM, P_IBG, Q_IBG, H_SI = "p_g", "q_g", "p_gv", "q_gv", "p_c", "q_c", "h_si"
Q_STAT, Q_SC, P_SHED = "q_stat", "q_sc", "p_shed"
C_BUS, C_LINE, S_LINE = "c", "cc", "ss"
H_SYS, R_SYS = "H", "R"
P_HAT, Q_HAT, GAMMA = "p_hat", "q_hat", "gamma"
PRODUCT = "w"

FIRST_STAGE = (X, U, V, LEVEL, SC_ON)

# Cone tags.
TAG_POWER_FLOW = "pf"
TAG_THERMAL = "thermal"
TAG_CAPABILITY = "capability"
TAG_STABILITY = "stability"
TAG_STATCOM = "statcom"
TAG_NADIR = "nadir"


class FormulationError(Exception):
    pass


class Mode(Enum):
    BASE_SI = "base_si"
    VSC_SI = "vsc_si"
    VSC_Q_SI = "vsc_q_si"

    @property
    def stability_cone(self) -> bool:
        return self != Mode.BASE_SI

    @property
    def ibg_reactive(self) -> bool:
        return self == Mode.VSC_Q_SI


@dataclass(frozen=True)
class InitialUnitState:
    """State of one SG before the first look-ahead hour.

    Attributes:
        on: Committed in the previous hour.
        hours_in_state: Consecutive hours spent on (or off).
        p_prev: Previous dispatch in p.u.; None skips the first-hour ramp rows.
    """

    on: bool
    hours_in_state: int = 0
    p_prev: Optional[float] = None


@dataclass(frozen=True)
class BuildOptions:
    mode: Mode = Mode.BASE_SI
    statcom_enabled: bool = True
    freq_enabled: bool = True
    rocof_enabled: bool = True
    line_limits: bool = True
    alpha_levels: Optional[int] = None
    initial_state: Optional[Tuple[InitialUnitState, ...]] = None


class VariableMap:
    """Named handles for every decision variable, one per (symbol, key, device)."""

    def __init__(self):
        self._handles: Dict[Tuple[str, Any, Any], int] = {}

    def __len__(self) -> int:
        return len(self._handles)

    def register(
        self,
        builder: ProgramBuilder,
        symbol: str,
        key: Any,
        device: Any = None,
        lb: float = -math.inf,
        ub: float = math.inf,
        binary: bool = False,
    ) -> AffineExpr:
        handle = (symbol, key, device)
        if handle in self._handles:
            utils.log_and_raise(logger.error, f"Handle {handle} registered twice.", FormulationError(str(handle)),
                                errors.FO_DUPLICATE_HANDLE)
        name = f"{symbol}[{key}]" if device is None else f"{symbol}[{key},{device}]"
        expr = builder.add_var(name, lb=lb, ub=ub, binary=binary)
        self._handles[handle] = expr.single_variable()
        return expr

    def has(self, symbol: str, key: Any, device: Any = None) -> bool:
        return (symbol, key, device) in self._handles

    def index(self, symbol: str, key: Any, device: Any = None) -> int:
        handle = (symbol, key, device)
        if handle not in self._handles:
            utils.log_and_raise(logger.error, f"No variable for handle {handle}.", FormulationError(str(handle)),
                                errors.FO_UNKNOWN_HANDLE)
        return self._handles[handle]

    def expr(self, symbol: str, key: Any, device: Any = None) -> AffineExpr:
        return AffineExpr({self.index(symbol, key, device): 1.0})

    def value(self, point: np.ndarray, symbol: str, key: Any, device: Any = None) -> float:
        return float(point[self.index(symbol, key, device)])

    def handles(self, symbol: str) -> List[Tuple[Any, Any]]:
        return [(key, device) for (sym, key, device) in self._handles if sym == symbol]


Monomial = Tuple[int, ...]


class ProductLinearizer:
    """McCormick auxiliaries for products of binaries and bounded continuous factors.

    A monomial is a sorted tuple of binary variable indices. Degree-2 monomials get a
    [0, 1] auxiliary z = b1*b2; a monomial times a continuous factor y in [L, U] gets
    w with w <= U*b, w >= L*b, w <= y - L(1-b), w >= y - U(1-b). Both are memoized.
    """

    def __init__(self, builder: ProgramBuilder, variables: VariableMap):
        self._builder = builder
        self._vars = variables
        self._monomials: Dict[Monomial, AffineExpr] = {}
        self._products: Dict[Tuple[Monomial, int], AffineExpr] = {}

    @property
    def n_auxiliaries(self) -> int:
        return len(self._products) + sum(1 for mon in self._monomials if len(mon) > 1)

    def monomial(self, mon: Monomial) -> AffineExpr:
        if mon in self._monomials:
            return self._monomials[mon]
        if len(mon) == 1:
            expr = AffineExpr({mon[0]: 1.0})
        elif len(mon) == 2:
            a, b = AffineExpr({mon[0]: 1.0}), AffineExpr({mon[1]: 1.0})
            expr = self._vars.register(self._builder, PRODUCT, mon, None, lb=0.0, ub=1.0)
            self._builder.add_le(expr, a, tag="mccormick")
            self._builder.add_le(expr, b, tag="mccormick")
            self._builder.add_ge(expr, a + b - 1.0, tag="mccormick")
        else:
            utils.log_and_raise(logger.error, f"Monomial {mon} has degree above 2.",
                                errors.ImpossibleStateException(str(mon)), errors.FO_MONOMIAL_DEGREE)
        self._monomials[mon] = expr
        return expr

    def times(self, mon: Monomial, y: AffineExpr) -> AffineExpr:
        index = y.single_variable()
        key = (mon, index)
        if key in self._products:
            return self._products[key]
        lower, upper = self._builder.bounds(y)
        if not (math.isfinite(lower) and math.isfinite(upper)):
            utils.log_and_raise(logger.error, f"Factor {y!r} has unbounded range [{lower}, {upper}].",
                                FormulationError("unbounded factor"), errors.FO_UNBOUNDED_FACTOR)
        b = self.monomial(mon)
        w = self._vars.register(self._builder, PRODUCT, mon, index, lb=min(lower, 0.0), ub=max(upper, 0.0))
        self._builder.add_le(w, upper * b, tag="mccormick")
        self._builder.add_ge(w, lower * b, tag="mccormick")
        self._builder.add_le(w, y - lower * (1.0 - b), tag="mccormick")
        self._builder.add_ge(w, y - upper * (1.0 - b), tag="mccormick")
        self._products[key] = w
        return w


@dataclass
class BuildReport:
    diagnostics: List[Diagnostic] = field(default_factory=list)
    counts: Dict[str, int] = field(default_factory=dict)


@dataclass
class BuildContext:
    case: GridCase
    tree: ScenarioTree
    options: BuildOptions
    surrogate: Optional[SurrogateModel]
    builder: ProgramBuilder = field(default_factory=ProgramBuilder)
    vars: VariableMap = field(default_factory=VariableMap)
    realizations: Dict[int, NodeRealization] = field(default_factory=lambda: {})
    diagnostics: List[Diagnostic] = field(default_factory=list)
    linearizer: Optional[ProductLinearizer] = None

    def __post_init__(self):
        self.linearizer = ProductLinearizer(self.builder, self.vars)
        self.realizations = {node.id: node_realization(self.tree, node.id) for node in self.tree.nodes}

    def levels(self, unit_pos: int) -> Tuple[float, ...]:
        n_v = self.options.alpha_levels or self.case.gfm_units[unit_pos].alpha_levels
        return alpha_grid(n_v)

    def alpha(self, depth: int, unit_pos: int) -> AffineExpr:
        levels = self.levels(unit_pos)
        return expr_sum(level * self.vars.expr(LEVEL, depth, (unit_pos, pos)) for pos, level in enumerate(levels))

    def base_features(self, depth: int) -> List[Dict[Monomial, float]]:
        """Surrogate base entries at `depth` as sums of binary monomials."""
        base = [{(self.vars.index(X, depth, g),): 1.0} for g in range(len(self.case.sync_gens))]
        base.extend({(self.vars.index(SC_ON, depth, k),): 1.0} for k in range(len(self.case.condensers)))
        for unit_pos in range(len(self.case.gfm_units)):
            base.append(
                {
                    (self.vars.index(LEVEL, depth, (unit_pos, pos)),): level
                    for pos, level in enumerate(self.levels(unit_pos))
                    if level != 0.0
                }
            )
        return base


def new_context(
    case: GridCase, tree: ScenarioTree, surrogate: Optional[SurrogateModel], options: BuildOptions
) -> BuildContext:
    return BuildContext(case=case, tree=tree, options=options, surrogate=surrogate)


def _statcom_active(ctx: BuildContext) -> bool:
    return ctx.options.statcom_enabled and len(ctx.case.statcoms) > 0


def register_variables(ctx: BuildContext) -> None:
    """Creates every first-stage and per-node variable with its box bounds."""
    case, builder, variables = ctx.case, ctx.builder, ctx.vars
    q_ibg = ctx.options.mode.ibg_reactive

    for depth in range(ctx.tree.horizon):
        for g in range(len(case.sync_gens)):
            for symbol in (X, U, V):
                variables.register(builder, symbol, depth, g, binary=True)
        for unit_pos in range(len(case.gfm_units)):
            for pos in range(len(ctx.levels(unit_pos))):
                variables.register(builder, LEVEL, depth, (unit_pos, pos), binary=True)
        for k in range(len(case.condensers)):
            variables.register(builder, SC_ON, depth, k, binary=True)

    for node in ctx.tree.nodes:
        n = node.id
        realized = ctx.realizations[n]
        for g, gen in enumerate(case.sync_gens):
            variables.register(builder, P_G, n, g, lb=0.0, ub=gen.p_max)
            variables.register(builder, Q_G, n, g, lb=min(gen.q_min, 0.0), ub=max(gen.q_max, 0.0))
        for unit_pos, unit in enumerate(case.gfm_units):
            variables.register(builder, P_GFM, n, unit_pos, lb=0.0, ub=unit.p_max)
            variables.register(builder, Q_GFM, n, unit_pos, lb=-unit.p_max, ub=unit.p_max)
        for c, ibg in enumerate(case.gfl_ibgs):
            variables.register(builder, P_IBG, n, c, lb=0.0, ub=max(float(realized.wind[c]), 0.0))
            q_bound = ibg.s_max if q_ibg else 0.0
            variables.register(builder, Q_IBG, n, c, lb=-q_bound, ub=q_bound)
            if ibg.si_capable:
                variables.register(builder, H_SI, n, c, lb=0.0, ub=ibg.h_si_max)
        if _statcom_active(ctx):
            for k, dev in enumerate(case.statcoms):
                variables.register(builder, Q_STAT, n, k, lb=-dev.q_rating, ub=dev.q_rating)
        for k, dev in enumerate(case.condensers):
            variables.register(builder, Q_SC, n, k, lb=-dev.q_rating, ub=dev.q_rating)
        for b, bus in enumerate(case.buses):
            load = float(realized.load_p[b])
            if load > 0:
                variables.register(builder, P_SHED, n, b, lb=0.0, ub=load)
            variables.register(builder, C_BUS, n, b, lb=bus.v_min ** 2, ub=bus.v_max ** 2)
        for l, line in enumerate(case.lines):
            i, j = case.bus_position(line.from_bus), case.bus_position(line.to_bus)
            limit = case.buses[i].v_max * case.buses[j].v_max
            variables.register(builder, C_LINE, n, l, lb=-limit, ub=limit)
            variables.register(builder, S_LINE, n, l, lb=-limit, ub=limit)


def add_commitment(ctx: BuildContext) -> None:
    """Transitions, min up/down windows, ramps, SG capacity, GFM strength and SC status."""
    case, builder, variables = ctx.case, ctx.builder, ctx.vars
    horizon = ctx.tree.horizon
    initial = ctx.options.initial_state

    if initial is not None and len(initial) != len(case.sync_gens):
        utils.log_and_raise(logger.error, f"{len(initial)} initial states for {len(case.sync_gens)} SGs.",
                            FormulationError("initial state size"), errors.FO_FLEET_MISMATCH)

    for g, gen in enumerate(case.sync_gens):
        state = initial[g] if initial is not None else None
        if gen.min_up > horizon or gen.min_down > horizon:
            message = f"Horizon {horizon} is shorter than min up/down ({gen.min_up}/{gen.min_down}); windows truncated."
            logger.warning("%s: %s", errors.FO_WINDOW_TRUNCATED, message)
            ctx.diagnostics.append(
                Diagnostic(Severity.WARNING, f"sync_gens[{g}]", message, errors.FO_WINDOW_TRUNCATED)
            )

        for t in range(horizon):
            x, u, v = variables.expr(X, t, g), variables.expr(U, t, g), variables.expr(V, t, g)
            builder.add_le(u + v, 1.0, tag="startup_shutdown")
            if t > 0:
                builder.add_eq(x - variables.expr(X, t - 1, g), u - v, tag="transition")
            elif state is not None:
                builder.add_eq(x - (1.0 if state.on else 0.0), u - v, tag="transition")
            else:
                builder.set_bounds(u, 0.0, 0.0)
                builder.set_bounds(v, 0.0, 0.0)

            up_window = range(max(0, t - gen.min_up + 1), t + 1)
            builder.add_le(expr_sum(variables.expr(U, tau, g) for tau in up_window), x, tag="min_up")
            down_window = range(max(0, t - gen.min_down + 1), t + 1)
            builder.add_le(expr_sum(variables.expr(V, tau, g) for tau in down_window), 1.0 - x, tag="min_down")

        if state is not None:
            remaining = (gen.min_up if state.on else gen.min_down) - state.hours_in_state
            for t in range(min(max(remaining, 0), horizon)):
                builder.add_eq(variables.expr(X, t, g), 1.0 if state.on else 0.0, tag="carry_over")

        for node in ctx.tree.nodes:
            t, n = node.depth, node.id
            x = variables.expr(X, t, g)
            p, q = variables.expr(P_G, n, g), variables.expr(Q_G, n, g)
            builder.add_ge(p, gen.p_min * x, tag="capacity")
            builder.add_le(p, gen.p_max * x, tag="capacity")
            builder.add_ge(q, gen.q_min * x, tag="capacity")
            builder.add_le(q, gen.q_max * x, tag="capacity")

            if node.parent is not None:
                previous = variables.expr(P_G, node.parent, g)
            elif state is not None and state.p_prev is not None:
                previous = AffineExpr.lift(state.p_prev)
            else:
                continue
            builder.add_le(p - previous, gen.ramp + gen.p_max * variables.expr(U, t, g), tag="ramp")
            builder.add_le(previous - p, gen.ramp + gen.p_max * variables.expr(V, t, g), tag="ramp")

    for t in range(horizon):
        for unit_pos in range(len(case.gfm_units)):
            levels = range(len(ctx.levels(unit_pos)))
            builder.add_eq(expr_sum(variables.expr(LEVEL, t, (unit_pos, pos)) for pos in levels), 1.0,
                           tag="one_hot")

    for node in ctx.tree.nodes:
        n = node.id
        for unit_pos, unit in enumerate(case.gfm_units):
            cap = unit.p_max * ctx.alpha(node.depth, unit_pos)
            builder.add_le(variables.expr(P_GFM, n, unit_pos), cap, tag="gfm_capacity")
            builder.add_le(variables.expr(Q_GFM, n, unit_pos), cap, tag="gfm_capacity")
            builder.add_ge(variables.expr(Q_GFM, n, unit_pos), -1.0 * cap, tag="gfm_capacity")
        for k, dev in enumerate(case.condensers):
            on = variables.expr(SC_ON, node.depth, k)
            builder.add_le(variables.expr(Q_SC, n, k), dev.q_rating * on, tag="sc_capacity")
            builder.add_ge(variables.expr(Q_SC, n, k), -dev.q_rating * on, tag="sc_capacity")


def line_flows(ctx: BuildContext, node_id: int, line_pos: int) -> Tuple[AffineExpr, AffineExpr, AffineExpr, AffineExpr]:
    """(P_ij, Q_ij, P_ji, Q_ji) of one line as affine expressions in (c, s)."""
    case, variables = ctx.case, ctx.vars
    line = case.lines[line_pos]
    i, j = case.bus_position(line.from_bus), case.bus_position(line.to_bus)
    y = 1.0 / complex(line.r, line.x)
    g, b = y.real, y.imag
    c_ii, c_jj = variables.expr(C_BUS, node_id, i), variables.expr(C_BUS, node_id, j)
    c_ij, s_ij = variables.expr(C_LINE, node_id, line_pos), variables.expr(S_LINE, node_id, line_pos)
    p_ij = g * c_ii - g * c_ij + b * s_ij
    q_ij = -(b + line.b_sh / 2.0) * c_ii + b * c_ij + g * s_ij
    p_ji = g * c_jj - g * c_ij - b * s_ij
    q_ji = -(b + line.b_sh / 2.0) * c_jj + b * c_ij - g * s_ij
    return p_ij, q_ij, p_ji, q_ji


def _bus_injections(ctx: BuildContext, node_id: int) -> Tuple[List[AffineExpr], List[AffineExpr]]:
    case, variables = ctx.case, ctx.vars
    n_bus = len(case.buses)
    p_inj = [AffineExpr() for _ in range(n_bus)]
    q_inj = [AffineExpr() for _ in range(n_bus)]
    for g, gen in enumerate(case.sync_gens):
        b = case.bus_position(gen.bus)
        p_inj[b] = p_inj[b] + variables.expr(P_G, node_id, g)
        q_inj[b] = q_inj[b] + variables.expr(Q_G, node_id, g)
    for unit_pos, unit in enumerate(case.gfm_units):
        b = case.bus_position(unit.bus)
        p_inj[b] = p_inj[b] + variables.expr(P_GFM, node_id, unit_pos)
        q_inj[b] = q_inj[b] + variables.expr(Q_GFM, node_id, unit_pos)
    for c, ibg in enumerate(case.gfl_ibgs):
        b = case.bus_position(ibg.bus)
        p_inj[b] = p_inj[b] + variables.expr(P_IBG, node_id, c)
        q_inj[b] = q_inj[b] + variables.expr(Q_IBG, node_id, c)
    if _statcom_active(ctx):
        for k, dev in enumerate(case.statcoms):
            b = case.bus_position(dev.bus)
            q_inj[b] = q_inj[b] + variables.expr(Q_STAT, node_id, k)
    for k, dev in enumerate(case.condensers):
        b = case.bus_position(dev.bus)
        q_inj[b] = q_inj[b] + variables.expr(Q_SC, node_id, k)
    for b in range(n_bus):
        if variables.has(P_SHED, node_id, b):
            p_inj[b] = p_inj[b] + variables.expr(P_SHED, node_id, b)
    return p_inj, q_inj


def add_soc_power_flow(ctx: BuildContext) -> None:
    """Nodal balances, rotated line cones and optional thermal limits per tree node."""
    case, builder, variables = ctx.case, ctx.builder, ctx.vars
    n_bus = len(case.buses)
    for node in ctx.tree.nodes:
        n = node.id
        realized = ctx.realizations[n]
        p_inj, q_inj = _bus_injections(ctx, n)
        p_out = [AffineExpr() for _ in range(n_bus)]
        q_out = [AffineExpr() for _ in range(n_bus)]
        for l, line in enumerate(case.lines):
            i, j = case.bus_position(line.from_bus), case.bus_position(line.to_bus)
            p_ij, q_ij, p_ji, q_ji = line_flows(ctx, n, l)
            p_out[i] = p_out[i] + p_ij
            q_out[i] = q_out[i] + q_ij
            p_out[j] = p_out[j] + p_ji
            q_out[j] = q_out[j] + q_ji

            builder.add_rotated(
                variables.expr(C_BUS, n, i),
                0.5 * variables.expr(C_BUS, n, j),
                [variables.expr(C_LINE, n, l), variables.expr(S_LINE, n, l)],
                tag=TAG_POWER_FLOW,
            )
            if ctx.options.line_limits and line.rating is not None:
                builder.add_soc(AffineExpr.lift(line.rating), [p_ij, q_ij], tag=TAG_THERMAL)

        for b in range(n_bus):
            builder.add_eq(p_inj[b] - p_out[b], float(realized.load_p[b]), tag="balance_p")
            builder.add_eq(q_inj[b] - q_out[b], float(realized.load_q[b]), tag="balance_q")


def _check_surrogate(ctx: BuildContext) -> SurrogateModel:
    if ctx.surrogate is None:
        utils.log_and_raise(logger.error, f"Mode {ctx.options.mode.value} needs a fitted surrogate.",
                            FormulationError("missing surrogate"), errors.FO_MISSING_SURROGATE)
    if not ctx.surrogate.matches(ctx.case):
        utils.log_and_raise(logger.error, "Surrogate was fitted for a different fleet or IBG placement.",
                            FormulationError("fleet mismatch"), errors.FO_FLEET_MISMATCH)
    grid = tuple(len(ctx.levels(pos)) for pos in range(len(ctx.case.gfm_units)))
    trained = ctx.surrogate.alpha_levels
    if len(trained) > 0 and trained != grid:
        utils.log_and_raise(logger.error, f"Surrogate was fitted on alpha levels {trained}, program uses {grid}.",
                            FormulationError("alpha grid mismatch"), errors.FO_ALPHA_GRID_MISMATCH)
    return ctx.surrogate


def learned_ratio(ctx: BuildContext, target: str, depth: int) -> Dict[Monomial, float]:
    """A surrogate target at `depth` expanded into binary monomials."""
    fitted = ctx.surrogate.fits.get(target)
    if fitted is None:
        return {}
    base = ctx.base_features(depth)
    expansion: Dict[Monomial, float] = {}
    for coef, term in zip(fitted.coefficients, ctx.surrogate.layout.feature_terms()):
        if coef == 0.0:
            continue
        if len(term) == 1:
            products = base[term[0]].items()
        else:
            products = [
                (tuple(sorted(set(m1 + m2))), c1 * c2)
                for m1, c1 in base[term[0]].items()
                for m2, c2 in base[term[1]].items()
            ]
        for mon, value in products:
            expansion[mon] = expansion.get(mon, 0.0) + coef * value
    return expansion


def add_ibg_and_vsc(ctx: BuildContext) -> None:
    """IBG capability cones and, in VSC modes, the learned voltage-stability cones."""
    case, builder, variables = ctx.case, ctx.builder, ctx.vars
    for node in ctx.tree.nodes:
        for c, ibg in enumerate(case.gfl_ibgs):
            builder.add_soc(
                AffineExpr.lift(ibg.s_max),
                [variables.expr(P_IBG, node.id, c), variables.expr(Q_IBG, node.id, c)],
                tag=TAG_CAPABILITY,
            )

    if not ctx.options.mode.stability_cone or len(case.gfl_ibgs) == 0:
        return
    model = _check_surrogate(ctx)
    labels = model.labels
    linearizer = ctx.linearizer
    reactive = ctx.options.mode.ibg_reactive

    for node in ctx.tree.nodes:
        n, t = node.id, node.depth
        for c, label in enumerate(labels):
            self_ratio = learned_ratio(ctx, admittance.self_target_name(label), t)
            gamma_expr = 0.5 * expr_sum(coef * linearizer.monomial(mon) for mon, coef in self_ratio.items())

            p_hat_expr = variables.expr(P_IBG, n, c)
            q_hat_expr = variables.expr(Q_IBG, n, c)
            for other, other_label in enumerate(labels):
                if other == c:
                    continue
                mutual = learned_ratio(ctx, admittance.mutual_target_name(label, other_label), t)
                p_other = variables.expr(P_IBG, n, other)
                p_hat_expr = p_hat_expr + expr_sum(coef * linearizer.times(mon, p_other) for mon, coef in mutual.items())
                if reactive:
                    q_other = variables.expr(Q_IBG, n, other)
                    q_hat_expr = q_hat_expr + expr_sum(
                        coef * linearizer.times(mon, q_other) for mon, coef in mutual.items()
                    )

            p_hat = variables.register(builder, P_HAT, n, c)
            q_hat = variables.register(builder, Q_HAT, n, c)
            gamma = variables.register(builder, GAMMA, n, c)
            builder.add_eq(p_hat, p_hat_expr, tag="equivalent_p")
            builder.add_eq(q_hat, q_hat_expr, tag="equivalent_q")
            builder.add_eq(gamma, gamma_expr, tag="margin")
            builder.add_ge(q_hat + gamma, 0.0, tag="margin_sign")
            builder.add_soc(q_hat + gamma, [p_hat, q_hat], tag=TAG_STABILITY)


def add_statcom(ctx: BuildContext) -> None:
    """Voltage-scaled current limit Q^2 <= I_max^2 c_bb; the box is on the variable."""
    if not _statcom_active(ctx):
        return
    case, builder, variables = ctx.case, ctx.builder, ctx.vars
    for node in ctx.tree.nodes:
        for k, dev in enumerate(case.statcoms):
            if dev.i_max is None:
                continue
            c_bb = variables.expr(C_BUS, node.id, case.bus_position(dev.bus))
            builder.add_rotated(dev.i_max ** 2 * c_bb, AffineExpr.lift(0.5), [variables.expr(Q_STAT, node.id, k)],
                                tag=TAG_STATCOM)


def inertia_expr(ctx: BuildContext, node_id: int, depth: int) -> AffineExpr:
    case, variables = ctx.case, ctx.vars
    h = expr_sum(gen.inertia_h * gen.p_max * variables.expr(X, depth, g) for g, gen in enumerate(case.sync_gens))
    h = h + expr_sum(unit.inertia_h * unit.p_max * ctx.alpha(depth, pos) for pos, unit in enumerate(case.gfm_units))
    return h + expr_sum(
        variables.expr(H_SI, node_id, c) for c, ibg in enumerate(case.gfl_ibgs) if ibg.si_capable
    )


def response_expr(ctx: BuildContext, depth: int) -> AffineExpr:
    return expr_sum(gen.pfr_gain * ctx.vars.expr(X, depth, g) for g, gen in enumerate(ctx.case.sync_gens))


def add_frequency(ctx: BuildContext) -> None:
    """Nadir rotated cone ||(x1, sqrt(k) h_si)||^2 <= 2 H (R/2) and the RoCoF row."""
    freq = ctx.case.freq_params
    if not ctx.options.freq_enabled or freq is None:
        return
    builder, variables = ctx.builder, ctx.vars
    x1 = math.sqrt(max(frequency.x1_squared(freq), 0.0))
    root_k = math.sqrt(frequency.si_coefficient(freq))
    h_min = frequency.rocof_min_inertia(freq)

    for node in ctx.tree.nodes:
        n = node.id
        h = variables.register(builder, H_SYS, n, None, lb=0.0)
        r = variables.register(builder, R_SYS, n, None, lb=0.0)
        builder.add_eq(h, inertia_expr(ctx, n, node.depth), tag="inertia")
        builder.add_eq(r, response_expr(ctx, node.depth), tag="response")
        members = [AffineExpr.lift(x1)]
        members.extend(
            root_k * variables.expr(H_SI, n, c) for c, ibg in enumerate(ctx.case.gfl_ibgs) if ibg.si_capable
        )
        builder.add_rotated(h, 0.5 * r, members, tag=TAG_NADIR)
        if ctx.options.rocof_enabled:
            builder.add_ge(h, h_min, tag="rocof")


def add_objective(ctx: BuildContext) -> None:
    """Expected generation, startup and shedding cost over tree nodes."""
    case, builder, variables = ctx.case, ctx.builder, ctx.vars
    for node in ctx.tree.nodes:
        n, t = node.id, node.depth
        weight = node.probability
        dt = node.duration
        for g, gen in enumerate(case.sync_gens):
            p = variables.expr(P_G, n, g)
            builder.add_objective(weight * dt * (gen.cost_lin * p + gen.cost_noload * variables.expr(X, t, g)))
            builder.add_objective(weight * gen.cost_startup * variables.expr(U, t, g))
            if gen.cost_quad > 0:
                builder.add_quadratic(p, weight * dt * gen.cost_quad)
        for b in range(len(case.buses)):
            if variables.has(P_SHED, n, b):
                builder.add_objective(weight * dt * case.shed_cost * variables.expr(P_SHED, n, b))


def linearize_products(ctx: BuildContext) -> int:
    """Number of McCormick auxiliaries; they are created on demand by `add_ibg_and_vsc`."""
    return ctx.linearizer.n_auxiliaries


def build(
    case: GridCase, tree: ScenarioTree, surrogate: Optional[SurrogateModel], options: BuildOptions
) -> Tuple[ConicProgram, VariableMap, BuildReport]:
    """Assembles the full program for one mode.

    Args:
        case: A normalized, validated case.
        tree: Scenario tree over the look-ahead window.
        surrogate: Fitted Z-ratio model; required by the VSC modes.
        options: Mode and feature switches.

    Returns:
        The frozen program, its variable handles and a build report.
    """
    if options.mode.stability_cone and surrogate is None and len(case.gfl_ibgs) > 0:
        utils.log_and_raise(logger.error, f"Mode {options.mode.value} needs a fitted surrogate.",
                            FormulationError("missing surrogate"), errors.FO_MISSING_SURROGATE)
    ctx = new_context(case, tree, surrogate, options)
    register_variables(ctx)
    add_commitment(ctx)
    add_soc_power_flow(ctx)
    add_ibg_and_vsc(ctx)
    add_statcom(ctx)
    add_frequency(ctx)
    add_objective(ctx)
    n_aux = linearize_products(ctx)

    program = ctx.builder.build()
    counts = program.counts()
    counts["nodes"] = len(tree.nodes)
    counts["product_auxiliaries"] = n_aux
    logger.info("Built %s program for %s: %s", options.mode.value, case.name, counts)
    return program, ctx.vars, BuildReport(diagnostics=ctx.diagnostics, counts=counts)
