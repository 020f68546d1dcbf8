"""Frequency-security arithmetic shared by the formulation and the evaluator.

Quantities are per-unit on the system base: H in seconds, R and dp_l in p.u. power,
df_lim in p.u. of f0. The nadir condition is

    H * R >= x1^2 + k * sum(gamma_j * h_j^2),   k = dp_l * t_d / 4,
    x1^2 = k * (dp_l / df_lim - D),

and the RoCoF condition is H >= dp_l * f0 / (2 * rocof_max).
"""
from dataclasses import dataclass
from typing import Sequence
import logging
import math

import numpy as np
from scipy.integrate import solve_ivp

from grid_case import FrequencyParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NadirTrace:
    nadir: float
    t_nadir: float


def si_coefficient(freq: FrequencyParams) -> float:
    return freq.dp_l * freq.t_d / 4.0


def x1_squared(freq: FrequencyParams) -> float:
    return si_coefficient(freq) * (freq.dp_l / freq.df_lim - freq.damping_d)


def nadir_requirement(freq: FrequencyParams, h_si: Sequence[float] = (), gamma: Sequence[float] = ()) -> float:
    h_si = np.asarray(h_si, dtype=float)
    gamma = np.asarray(gamma, dtype=float) if len(gamma) > 0 else np.ones_like(h_si)
    return x1_squared(freq) + si_coefficient(freq) * float(np.sum(gamma * h_si ** 2))


def nadir_slack(
    freq: FrequencyParams, h: float, r: float, h_si: Sequence[float] = (), gamma: Sequence[float] = ()
) -> float:
    """H*R minus the nadir requirement; negative when violated."""
    return h * r - nadir_requirement(freq, h_si, gamma)


def rocof_min_inertia(freq: FrequencyParams) -> float:
    return freq.dp_l * freq.f0 / (2.0 * freq.rocof_max)


def rocof_slack(freq: FrequencyParams, h: float) -> float:
    """rocof_max minus the initial RoCoF dp_l*f0/(2H) in Hz/s."""
    if h <= 0:
        return -math.inf
    return freq.rocof_max - freq.dp_l * freq.f0 / (2.0 * h)


def simulate_nadir(freq: FrequencyParams, h: float, r: float, t_end: float = None) -> NadirTrace:
    """Integrates the aggregate swing equation after losing dp_l.

    2H d(df)/dt = -dp_l + R * min(t / t_d, 1) - D * df, df(0) = 0.

    Returns:
        The most negative deviation in p.u. of f0 and when it occurs.
    """
    if t_end is None:
        t_end = max(6.0 * freq.t_d, 60.0)

    def rhs(t, x):
        response = r * min(t / freq.t_d, 1.0)
        return [(-freq.dp_l + response - freq.damping_d * x[0]) / (2.0 * h)]

    times = np.linspace(0.0, t_end, 6001)
    sol = solve_ivp(rhs, [0.0, t_end], [0.0], t_eval=times, method="RK45", max_step=freq.t_d / 200.0)
    trace = sol.y[0]
    pos = int(np.argmin(trace))
    logger.debug("Simulated nadir %.6f p.u. at t=%.3f s for H=%.3f R=%.3f", trace[pos], sol.t[pos], h, r)
    return NadirTrace(nadir=float(trace[pos]), t_nadir=float(sol.t[pos]))
