"""Bus admittance assembly, inversion to Z, and the exact Z-ratios.

Y = Y0 + Yg. Y0 is the pi-model line admittance, Yg the diagonal device
contribution 1/(jX) of every committed SG, every GFM scaled by its strength
setting alpha, and every online synchronous condenser. GFL IBGs and STATCOMs add
nothing. The reference bus is kept; device admittances ground the network.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy.sparse import csr_matrix, diags

import errors
import utils
from grid_case import GridCase

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-9
CONDITION_LIMIT = 1e12
SINGULAR_TOL = 1e-12


class AdmittanceError(Exception):
    pass


class SingularMatrixError(AdmittanceError):
    """No voltage-regulating device is online, Y has the all-ones null vector."""


class IllConditionedError(AdmittanceError):
    """Y is invertible in exact arithmetic but too close to singular to trust Z."""


@dataclass(frozen=True)
class DeviceConfig:
    """The device state Yg depends on.

    Attributes:
        commitments: x per SG, 0 or 1.
        alphas: Strength setting per GFM in [0, 1].
        sc_on: Status per synchronous condenser, 0 or 1.
    """

    commitments: Tuple[int, ...]
    alphas: Tuple[float, ...]
    sc_on: Tuple[int, ...] = ()


@dataclass(frozen=True)
class AdmittanceModel:
    y0: np.ndarray
    yg: np.ndarray

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.yg


@dataclass(frozen=True)
class ImpedanceModel:
    z: np.ndarray
    config: Optional[DeviceConfig] = None
    residual: float = 0.0
    condition: float = 1.0


@dataclass(frozen=True)
class ZRatioSet:
    """Exact (or predicted) impedance ratios at the IBG buses.

    Attributes:
        labels: One label per IBG, its bus id (suffixed with the IBG position when
            two IBGs share a bus).
        self_ratio: 1/|Z_cc| per IBG.
        mutual_ratio: |Z_cc'|/|Z_cc| keyed by the ordered IBG position pair (c, c').
    """

    labels: Tuple[str, ...]
    self_ratio: Tuple[float, ...]
    mutual_ratio: Dict[Tuple[int, int], float] = field(default_factory=dict)

    def as_targets(self) -> Dict[str, float]:
        """Flattens to {target name: value}, e.g. {"z1_23": ..., "z24_23": ...}."""
        targets = {}
        for c, label in enumerate(self.labels):
            targets[self_target_name(label)] = self.self_ratio[c]
            for other, other_label in enumerate(self.labels):
                if other != c:
                    targets[mutual_target_name(label, other_label)] = self.mutual_ratio[(c, other)]
        return targets


@dataclass(frozen=True)
class StrengthReport:
    per_ibg: Tuple[float, ...]
    mean: float


def self_target_name(label: str) -> str:
    return f"z1_{label}"


def mutual_target_name(label: str, other_label: str) -> str:
    return f"z{other_label}_{label}"


def ibg_labels(case: GridCase) -> Tuple[str, ...]:
    buses = case.ibg_buses
    return tuple(
        str(bus) if buses.count(bus) == 1 else f"{bus}.{pos}" for pos, bus in enumerate(buses)
    )


def target_names(case: GridCase) -> Tuple[str, ...]:
    """All ratio targets of `case` in a fixed order: per IBG, self first, then mutuals."""
    labels = ibg_labels(case)
    names = []
    for c, label in enumerate(labels):
        names.append(self_target_name(label))
        names.extend(mutual_target_name(label, other) for o, other in enumerate(labels) if o != c)
    return tuple(names)


def reference_config(case: GridCase) -> DeviceConfig:
    """Everything online, every GFM at full strength."""
    return DeviceConfig(
        commitments=tuple(1 for _ in case.sync_gens),
        alphas=tuple(1.0 for _ in case.gfm_units),
        sc_on=tuple(1 for _ in case.condensers),
    )


def build_y0(case: GridCase) -> np.ndarray:
    """Standard pi-model bus admittance from lines only.

    Args:
        case: A valid case.

    Returns:
        Dense complex (n_bus, n_bus) matrix.
    """
    n_bus = len(case.buses)
    n_line = len(case.lines)
    if n_line == 0:
        return np.zeros((n_bus, n_bus), dtype=complex)

    f = np.array([case.bus_position(line.from_bus) for line in case.lines])
    t = np.array([case.bus_position(line.to_bus) for line in case.lines])
    ys = np.array([1.0 / complex(line.r, line.x) for line in case.lines])
    bc = np.array([line.b_sh for line in case.lines])

    ytt = ys + 1j * bc / 2
    yff = ytt
    yft = -ys
    ytf = -ys

    rows = np.arange(n_line)
    cf = csr_matrix((np.ones(n_line), (rows, f)), shape=(n_line, n_bus))
    ct = csr_matrix((np.ones(n_line), (rows, t)), shape=(n_line, n_bus))

    yf = diags(yff) @ cf + diags(yft) @ ct
    yt = diags(ytf) @ cf + diags(ytt) @ ct
    ybus = cf.T @ yf + ct.T @ yt
    return np.asarray(ybus.toarray(), dtype=complex)


def _check_config(case: GridCase, commitments: Sequence[int], alphas: Sequence[float], sc_on: Sequence[int]) -> None:
    if len(commitments) != len(case.sync_gens) or len(alphas) != len(case.gfm_units) or len(sc_on) != len(case.condensers):
        utils.log_and_raise(
            logger.error,
            f"Configuration sizes ({len(commitments)}, {len(alphas)}, {len(sc_on)}) do not match the fleet "
            f"({len(case.sync_gens)}, {len(case.gfm_units)}, {len(case.condensers)}).",
            AdmittanceError("configuration does not match fleet"),
            errors.AD_BAD_CONFIG,
        )
    if any(x not in (0, 1) for x in commitments) or any(s not in (0, 1) for s in sc_on):
        utils.log_and_raise(logger.error, "Commitments and SC status must be 0 or 1.",
                            AdmittanceError("non-binary status"), errors.AD_BAD_CONFIG)
    if any(not 0.0 <= a <= 1.0 for a in alphas):
        utils.log_and_raise(logger.error, f"GFM strength settings {alphas} must lie in [0, 1].",
                            AdmittanceError("alpha out of range"), errors.AD_BAD_CONFIG)


def build_yg(
    case: GridCase, commitments: Sequence[int], alphas: Sequence[float], sc_on: Sequence[int] = ()
) -> np.ndarray:
    """Diagonal device admittance for one configuration."""
    _check_config(case, commitments, alphas, sc_on)
    diagonal = np.zeros(len(case.buses), dtype=complex)
    for gen, x in zip(case.sync_gens, commitments):
        diagonal[case.bus_position(gen.bus)] += x / (1j * gen.x_transient)
    for unit, alpha in zip(case.gfm_units, alphas):
        diagonal[case.bus_position(unit.bus)] += alpha / (1j * unit.x_transient)
    for condenser, on in zip(case.condensers, sc_on):
        diagonal[case.bus_position(condenser.bus)] += on / (1j * condenser.x_transient)
    return np.diag(diagonal)


def build_model(case: GridCase, config: DeviceConfig, y0: Optional[np.ndarray] = None) -> AdmittanceModel:
    """Y0 plus Yg for `config`. Pass a precomputed `y0` when evaluating many configurations."""
    if y0 is None:
        y0 = build_y0(case)
    return AdmittanceModel(y0=y0, yg=build_yg(case, config.commitments, config.alphas, config.sc_on))


def compute_z(model: AdmittanceModel, config: Optional[DeviceConfig] = None) -> ImpedanceModel:
    """Inverts Y by dense LU.

    Raises:
        SingularMatrixError: Y annihilates the all-ones vector or LU breaks down.
        IllConditionedError: Condition estimate above 1e12 or residual ||YZ - I|| >= 1e-9.
    """
    y = model.y
    n_bus = y.shape[0]
    scale = max(np.max(np.abs(y)), 1.0) if n_bus > 0 else 1.0
    if n_bus == 0 or np.max(np.abs(y.sum(axis=1))) < SINGULAR_TOL * scale:
        utils.log_and_raise(logger.debug, "Y is singular: no voltage-regulating device is online.",
                            SingularMatrixError("no voltage-regulating device online"), errors.AD_SINGULAR)

    condition = np.linalg.cond(y)
    if not np.isfinite(condition):
        utils.log_and_raise(logger.debug, "Y is singular: infinite condition number.",
                            SingularMatrixError("infinite condition number"), errors.AD_SINGULAR)
    if condition > CONDITION_LIMIT:
        utils.log_and_raise(logger.debug, f"Condition estimate {condition:.3e} exceeds {CONDITION_LIMIT:.0e}.",
                            IllConditionedError(f"condition {condition:.3e}"), errors.AD_ILL_CONDITIONED)

    try:
        z = np.linalg.inv(y)
    except np.linalg.LinAlgError as err:
        utils.log_and_raise(logger.debug, f"LU factorization failed: {err}", SingularMatrixError(str(err)),
                            errors.AD_SINGULAR)

    residual = float(np.linalg.norm(y @ z - np.eye(n_bus), ord=np.inf))
    if residual >= RESIDUAL_TOL:
        utils.log_and_raise(logger.debug, f"Inversion residual {residual:.3e} is not below {RESIDUAL_TOL}.",
                            IllConditionedError(f"residual {residual:.3e}"), errors.AD_ILL_CONDITIONED)
    return ImpedanceModel(z=z, config=config, residual=residual, condition=float(condition))


def z_ratios(case: GridCase, config: DeviceConfig, y0: Optional[np.ndarray] = None) -> ZRatioSet:
    """Exact self and mutual ratios at the IBG buses for `config`."""
    impedance = compute_z(build_model(case, config, y0), config)
    magnitudes = np.abs(impedance.z)
    positions = [case.bus_position(bus) for bus in case.ibg_buses]

    self_ratio = tuple(1.0 / magnitudes[p, p] for p in positions)
    mutual_ratio = {}
    for c, p in enumerate(positions):
        for other, q in enumerate(positions):
            if other != c:
                mutual_ratio[(c, other)] = magnitudes[p, q] / magnitudes[p, p]
    return ZRatioSet(labels=ibg_labels(case), self_ratio=self_ratio, mutual_ratio=mutual_ratio)


def strength_indicator(case: GridCase, config: DeviceConfig, y0: Optional[np.ndarray] = None) -> StrengthReport:
    """Per-IBG strength 1/|Z_cc| and its mean over IBG buses."""
    ratios = z_ratios(case, config, y0)
    per_ibg = ratios.self_ratio
    mean = float(np.mean(per_ibg)) if len(per_ibg) > 0 else 0.0
    return StrengthReport(per_ibg=per_ibg, mean=mean)
