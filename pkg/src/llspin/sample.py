"""Liquid-crystal sample model: order parameter, dipolar coupling and heating schedules."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .relaxation import RelaxationModel

T_C = 302.0  # K, nematic-isotropic transition
BETA = 0.2
D_MAX = 1500.0  # Hz, fully ordered residual coupling
ANCHOR = (294.0, 640.0)  # (K, Hz) coupling measured in the ordered phase
OMEGA_HZ = 46.6
J_HZ = 3.1


@dataclass(frozen=True)
class ReferenceRow:
    phase: str
    temperature: float  # K
    t1: float  # s
    t_lls: float  # s
    d_ste: float  # m^2/s
    d_lls: float  # m^2/s


REFERENCE_ROWS = (
    ReferenceRow("POP", 294.0, 1.1, 3.7, 1.29e-10, 1.32e-10),
    ReferenceRow("POP", 296.0, 1.2, 3.9, 1.34e-10, 1.34e-10),
    ReferenceRow("POP", 297.0, 1.3, 4.3, 1.37e-10, 1.37e-10),
    ReferenceRow("POP", 298.0, 1.6, 4.6, 1.55e-10, 1.45e-10),
    ReferenceRow("IP", 305.0, 1.5, 8.1, 1.81e-10, 1.92e-10),
)
TRANSPHASE_LIFETIME = 6.3  # s, survival across the transition (plausibility anchor only)


@dataclass(frozen=True)
class OrderParameterMap:
    """``S(T) = s0 (1 - T/t_c)^beta`` below ``t_c`` and 0 above, or a monotone table.

    ``s0`` defaults to the value placing ``D(anchor T) = anchor D``.  A table
    is a sequence of ``(T, S)`` pairs interpolated with a monotone cubic and
    held constant outside its range.
    """

    t_c: float = T_C
    beta: float = BETA
    s0: float | None = None
    d_max: float = D_MAX
    table: tuple | None = None
    anchor: tuple = ANCHOR
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (self.t_c > 0 and self.beta > 0 and self.d_max >= 0):
            raise ValueError("t_c and beta must be positive and d_max non-negative")
        if self.table is not None:
            pts = sorted((float(t), float(s)) for t, s in self.table)
            temps = np.array([p[0] for p in pts])
            vals = np.array([p[1] for p in pts])
            if len(pts) < 2 or np.any(np.diff(temps) <= 0):
                raise ValueError("order-parameter table needs >= 2 distinct temperatures")
            if np.any(np.diff(vals) > 0):
                raise ValueError("order-parameter table must be non-increasing in temperature")
            if np.any(vals < 0) or np.any(vals > 1):
                raise ValueError("order-parameter table values must lie in [0, 1]")
            object.__setattr__(self, "table", tuple(pts))
            object.__setattr__(self, "_interp", PchipInterpolator(temps, vals, extrapolate=False))
        elif self.s0 is None:
            t_a, d_a = self.anchor
            if not t_a < self.t_c:
                raise ValueError("anchor temperature must lie below t_c")
            s0 = d_a / (self.d_max * (1 - t_a / self.t_c) ** self.beta)
            object.__setattr__(self, "s0", s0)
        if self.table is None and not 0 <= self.s0 <= 1:
            raise ValueError(f"s0 = {self.s0:.4g} outside [0, 1]; raise d_max or lower the anchor coupling")

    def s(self, temperature: float) -> float:
        if not temperature > 0:
            raise ValueError(f"temperature must be > 0 K, got {temperature!r}")
        if self._interp is not None:
            lo, hi = self.table[0], self.table[-1]
            if temperature <= lo[0]:
                return lo[1]
            if temperature >= hi[0]:
                return hi[1]
            return float(self._interp(temperature))
        if temperature >= self.t_c:
            return 0.0
        return float(self.s0 * (1 - temperature / self.t_c) ** self.beta)

    def d(self, temperature: float) -> float:
        return self.s(temperature) * self.d_max


DEFAULT_ORDER_MAP = OrderParameterMap()


def order_parameter(temperature: float, order_map: OrderParameterMap = DEFAULT_ORDER_MAP) -> float:
    return order_map.s(temperature)


def dipolar_coupling(temperature: float, order_map: OrderParameterMap = DEFAULT_ORDER_MAP) -> float:
    return order_map.d(temperature)


SHAPES = ("linear", "sigmoid")
_SIGMOID_K = 10.0


@dataclass(frozen=True)
class PhaseSchedule:
    """Temperature profile ``T(t)`` and derived coupling ``D(t) = S(T(t)) D_max``.

    The temperature moves from ``t_start_k`` to ``t_end_k`` between
    ``ramp_start`` and ``ramp_start + ramp_duration`` (a zero duration is a
    step at ``ramp_start``) and is constant outside.
    """

    t_start_k: float
    t_end_k: float
    ramp_start: float = 0.0
    ramp_duration: float = 0.0
    shape: str = "linear"
    order_map: OrderParameterMap = DEFAULT_ORDER_MAP
    horizon: float = math.inf
    label: str = ""

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"ramp shape must be one of {SHAPES}")
        if self.ramp_duration < 0 or self.ramp_start < 0:
            raise ValueError("ramp start and duration must be >= 0")
        if not (self.t_start_k > 0 and self.t_end_k > 0):
            raise ValueError("temperatures must be > 0 K")

    @property
    def ramp_end(self) -> float:
        return self.ramp_start + self.ramp_duration

    def progress(self, t: float) -> float:
        """Fraction of the temperature change completed at time ``t``."""
        if t < self.ramp_start:
            return 0.0
        if t >= self.ramp_end:
            return 1.0
        u = (t - self.ramp_start) / self.ramp_duration
        if self.shape == "linear":
            return u
        lo, hi = _logistic(-_SIGMOID_K / 2), _logistic(_SIGMOID_K / 2)
        return (_logistic(_SIGMOID_K * (u - 0.5)) - lo) / (hi - lo)

    def temperature(self, t: float) -> float:
        return self.t_start_k + (self.t_end_k - self.t_start_k) * self.progress(t)

    def d_at(self, t: float) -> float:
        return self.order_map.d(self.temperature(t))

    def sample(self, times) -> np.ndarray:
        return np.array([self.d_at(t) for t in np.atleast_1d(times)])

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.ramp_start, self.ramp_end)

    def is_constant(self, a: float, b: float) -> bool:
        """True if ``D`` (and the temperature) cannot change inside ``(a, b)``."""
        if self.t_start_k == self.t_end_k:
            return True
        if b <= self.ramp_start or a >= self.ramp_end:
            return True
        return False

    def channels(self, before: RelaxationModel, after: RelaxationModel):
        """Relaxation rates following the temperature progress: ``before`` at the start, ``after`` at the end."""

        def rates_at(t: float) -> RelaxationModel:
            return before.blend(after, self.progress(t))

        return rates_at


def _logistic(x: float) -> float:
    return 1 / (1 + math.exp(-x))


def transition_ramp(t_start_k: float, t_end_k: float, duration: float, shape: str = "linear", start: float = 0.0,
                    order_map: OrderParameterMap = DEFAULT_ORDER_MAP, horizon: float = math.inf) -> PhaseSchedule:
    if duration < 0:
        raise ValueError("ramp duration must be >= 0")
    return PhaseSchedule(t_start_k, t_end_k, start, duration, shape, order_map, horizon, label=f"ramp:{shape}")


def constant_schedule(temperature: float, order_map: OrderParameterMap = DEFAULT_ORDER_MAP,
                      horizon: float = math.inf) -> PhaseSchedule:
    return PhaseSchedule(temperature, temperature, order_map=order_map, horizon=horizon, label="constant")


def system_at(temperature: float, order_map: OrderParameterMap = DEFAULT_ORDER_MAP, omega: float = OMEGA_HZ,
              j: float = J_HZ):
    """Spin system of the sample at ``temperature``."""
    from .spin import SpinSystem

    return SpinSystem(omega, j, order_map.d(temperature), label=f"{temperature:g} K")
