"""Propagation of density operators and z-ensembles through pulse programs.

Every step is represented as an affine map on the row-major vectorised
density operator, ``vec(rho) -> S vec(rho) + c``, packed into a 17x17
augmented matrix ``[[S, c], [0, 1]]``.  Unitary steps have ``c = 0``; the
constant ``c`` arises when dissipators act on the deviation from thermal
equilibrium.  Augmented maps compose by matrix product, which lets echo
trains and lock cycles be precomputed and cached.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from . import relaxation
from .ensemble import ZEnsemble
from .errors import ProgramError, SimulationError
from .program import Acquire, CpmgBlock, Delay, Gradient, Lock, Pulse, PulseProgram, StorageMarker
from .spin import (
    HERMITIAN_TOL,
    SpinSystem,
    _hamiltonian,
    check_operator,
    rotation,
    thermal_deviation,
    total,
)

log = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 1e-3  # s, sampling of time-dependent couplings
DEFAULT_LOCK_RF = 1000.0  # Hz, WALTZ-16 nutation frequency
STEP_TOL = 1e-6
DRIFT_WARN = 1e-9  # drift above this is logged as a warning, smaller repairs at debug level

# WALTZ-16: Q = 3' 4 2' 3 1' 2 4' 2 3' in units of 90 degrees (prime = -x), cycle Q Q Q' Q'
_WALTZ_Q = ((3, True), (4, False), (2, True), (3, False), (1, True), (2, False), (4, True), (2, False), (3, True))
WALTZ16_CYCLE = _WALTZ_Q + _WALTZ_Q + tuple((m, not b) for m, b in _WALTZ_Q) * 2


# -- primitive maps -------------------------------------------------------------
def _check_duration(t: float):
    if not t >= 0:
        raise ValueError(f"duration must be >= 0, got {t!r}")


def superop_unitary(u: np.ndarray) -> np.ndarray:
    # vec(U X U^+) = kron(U, conj(U)) vec(X) for row-major vec
    return np.kron(u, u.conj())


def commutator_superop(h: np.ndarray) -> np.ndarray:
    e = np.eye(4)
    return -1j * (np.kron(h, e) - np.kron(e, h.T))


def liouvillian(h: np.ndarray, channels=None) -> np.ndarray:
    """16x16 generator of ``-i[H, X] + sum_c D_c(X)``."""
    return commutator_superop(h) + relaxation.dissipator_superoperator(channels)


def augmented_generator(h: np.ndarray, channels=None, rho_eq: np.ndarray | None = None) -> np.ndarray:
    """17x17 generator of ``d rho/dt = -i[H, rho] + D(rho - rho_eq)``."""
    d = relaxation.dissipator_superoperator(channels)
    eq = thermal_deviation() if rho_eq is None else rho_eq
    g = np.zeros((17, 17), dtype=complex)
    g[:16, :16] = commutator_superop(h) + d
    g[:16, 16] = -d @ np.asarray(eq, dtype=complex).reshape(16)
    return g


def augment(s: np.ndarray, c: np.ndarray | None = None) -> np.ndarray:
    a = np.zeros((17, 17), dtype=complex)
    a[:16, :16] = s
    if c is not None:
        a[:16, 16] = c
    a[16, 16] = 1
    return a


def _freeze(a):
    a.setflags(write=False)
    return a


@lru_cache(maxsize=4096)
def pulse_map(flip: float, phase: float) -> np.ndarray:
    """Augmented map of an ideal hard pulse (radians)."""
    return _freeze(augment(superop_unitary(rotation(flip, phase))))


@lru_cache(maxsize=16384)
def _segment_map_cached(omega: float, j: float, d: float, dt: float, key: tuple) -> np.ndarray:
    channels = [relaxation.RelaxationChannel(kind, rate) for kind, rate in key]
    return _freeze(_segment_map(_hamiltonian(omega, j, d), channels, dt))


def _segment_map(h: np.ndarray, channels, dt: float) -> np.ndarray:
    if not relaxation.as_channels(channels):
        return augment(superop_unitary(expm(-1j * h * dt)))
    return expm(augmented_generator(h, channels) * dt)


def segment_map(omega: float, j: float, d: float, dt: float, channels=None) -> np.ndarray:
    """Augmented map of free evolution under constant couplings for ``dt`` seconds."""
    key = relaxation.channels_key(channels)
    if key is None:
        return _segment_map(_hamiltonian(omega, j, d), channels, dt)
    return _segment_map_cached(float(omega), float(j), float(d), float(dt), key)


def apply_map(rho: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (a[:16, :16] @ rho.reshape(16) + a[:16, 16]).reshape(4, 4)


# -- public single-operator operations -----------------------------------------
def propagator(h: np.ndarray, t: float) -> np.ndarray:
    _check_duration(t)
    return expm(-1j * np.asarray(h) * t)


def evolve_coherent(rho, h, t: float) -> np.ndarray:
    """``exp(-iHt) rho exp(iHt)``."""
    _check_duration(t)
    rho = check_operator(rho, "rho")
    h = check_operator(h, "H", hermitian=True)
    u = expm(-1j * h * t)
    return u @ rho @ u.conj().T


def apply_pulse(rho, flip: float, phase: float) -> np.ndarray:
    """Ideal collective hard pulse; ``flip`` and ``phase`` in radians (phase 0 = x)."""
    rho = check_operator(rho, "rho")
    r = rotation(float(flip), float(phase))
    return r @ rho @ r.conj().T


def rk4_map(g: np.ndarray, t: float, n: int) -> np.ndarray:
    """``n`` fixed RK4 steps of the linear system ``dx/dt = g x``; for linear g one step is the quartic Taylor polynomial."""
    h = t / n
    hg = h * g
    step = np.eye(g.shape[0], dtype=complex)
    term = step.copy()
    for k in range(1, 5):
        term = term @ hg / k
        step = step + term
    return np.linalg.matrix_power(step, n)


def rk4_propagate(g: np.ndarray, t: float, tol: float = STEP_TOL, max_steps: int = 2**24) -> np.ndarray:
    """RK4 with step halving until the propagated map changes by less than ``tol``."""
    norm = float(np.linalg.norm(g, 2))
    n = max(1, math.ceil(norm * t / 0.5))
    prev = rk4_map(g, t, n)
    history = []
    while True:
        n *= 2
        cur = rk4_map(g, t, n)
        change = float(np.max(np.abs(cur - prev)))
        history.append((n, change))
        if change < tol:
            return cur
        if n >= max_steps:
            raise SimulationError(
                f"RK4 did not converge: change {change:.3e} at {n} steps (tol {tol:g})",
                diagnostics={"steps_and_change": history, "generator_norm": norm, "t": t},
            )
        prev = cur


def evolve_dissipative(rho, h, channels, t: float, method: str = "expm", tol: float = STEP_TOL, rho_eq=None) -> np.ndarray:
    """Integrate ``d rho/dt = -i[H, rho] + sum_c D_c(rho - rho_eq)`` for ``t`` seconds.

    ``method="expm"`` exponentiates the augmented generator exactly;
    ``method="rk4"`` uses fixed-step RK4 with step halving to ``tol``.
    """
    _check_duration(t)
    rho = check_operator(rho, "rho")
    h = check_operator(h, "H", hermitian=True)
    if not relaxation.as_channels(channels):
        return evolve_coherent(rho, h, t)
    g = augmented_generator(h, channels, rho_eq)
    if method == "expm":
        a = expm(g * t)
    elif method == "rk4":
        a = rk4_propagate(g, t, tol)
    else:
        raise ValueError(f"unknown integration method {method!r}")
    out = apply_map(rho, a)
    return (out + out.conj().T) / 2


# -- spin lock -------------------------------------------------------------------
def waltz16_cycle_time(rf_hz: float) -> float:
    return sum(m for m, _ in WALTZ16_CYCLE) / (4 * rf_hz)


def waltz16_map(omega: float, j: float, d: float, t: float, rf_hz: float = DEFAULT_LOCK_RF, channels=None) -> np.ndarray:
    """Augmented map of ``t`` seconds of explicit WALTZ-16 irradiation (truncated inside the last element)."""
    key = relaxation.channels_key(channels)
    if key is not None:
        return _waltz16_cached(float(omega), float(j), float(d), float(t), float(rf_hz), key)
    return _waltz16(omega, j, d, t, rf_hz, channels)


@lru_cache(maxsize=1024)
def _waltz16_cached(omega, j, d, t, rf_hz, key):
    channels = [relaxation.RelaxationChannel(kind, rate) for kind, rate in key]
    return _freeze(_waltz16(omega, j, d, t, rf_hz, channels))


def _waltz16(omega, j, d, t, rf_hz, channels):
    h0 = _hamiltonian(omega, j, d)
    fx, fy = total("x"), total("y")
    elem_maps = {}

    def elem(mult: int, barred: bool, dt: float) -> np.ndarray:
        key = (mult, barred, dt)
        if key not in elem_maps:
            h = h0 + 2 * math.pi * rf_hz * (-fx if barred else fx)
            elem_maps[key] = _segment_map(h, channels, dt)
        return elem_maps[key]

    unit = 1 / (4 * rf_hz)
    cycle = np.eye(17, dtype=complex)
    for mult, barred in WALTZ16_CYCLE:
        cycle = elem(mult, barred, mult * unit) @ cycle
    period = waltz16_cycle_time(rf_hz)
    n_cycles = int(t // period)
    out = np.linalg.matrix_power(cycle, n_cycles)
    rest = t - n_cycles * period
    for mult, barred in WALTZ16_CYCLE:
        if rest <= 1e-15:
            break
        dt = min(rest, mult * unit)
        out = elem(mult, barred, dt) @ out
        rest -= dt
    return out


# -- trajectories ----------------------------------------------------------------
@dataclass
class Trajectory:
    """Observable expectations sampled at event boundaries (plus oversampling).

    Instantaneous events (pulses, gradients) produce samples that share the
    timestamp of the preceding sample, so ``times`` is non-decreasing and
    samples are ordered by index.
    """

    times: np.ndarray
    values: dict[str, np.ndarray]
    labels: tuple[str, ...]
    final_state: object = None
    acquired: dict[str, float] | None = None
    slice_signals: dict[str, np.ndarray] | None = None
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __len__(self) -> int:
        return len(self.times)

    def peak_index(self, name: str, absolute: bool = True) -> int:
        v = self.values[name]
        return int(np.argmax(np.abs(v) if absolute else v))

    def window(self, label: str) -> np.ndarray:
        """Indices of samples recorded inside events carrying ``label``."""
        return np.array([i for i, lab in enumerate(self.labels) if lab == label], dtype=int)

    def to_rows(self):
        names = list(self.values)
        for i, t in enumerate(self.times):
            yield [t, self.labels[i]] + [self.values[n][i] for n in names]


def _resolve_observables(observables) -> dict[str, np.ndarray]:
    from .spin import observable

    if observables is None:
        return {}
    if isinstance(observables, dict):
        return {k: check_operator(v, k, hermitian=True) for k, v in observables.items()}
    if isinstance(observables, str):
        observables = [observables]
    return {name: observable(name) for name in observables}


class _Runner:
    def __init__(self, sys: SpinSystem, schedule, channels, resolution, oversample, diffusion, diffusion_method,
                 lock_rf_hz, t0, observables):
        self.sys = sys
        self.schedule = schedule
        self.channels = channels
        self.resolution = float(resolution)
        self.oversample = int(oversample)
        self.diffusion = float(diffusion)
        self.diffusion_method = diffusion_method
        self.lock_rf_hz = float(lock_rf_hz)
        self.t = float(t0)
        self.obs = observables
        self.pending = 0.0
        self.times, self.labels = [], []
        self.values = {name: [] for name in observables}
        self.max_drift = 0.0

    # couplings and channels at time t
    def d_at(self, t: float) -> float:
        return self.sys.d if self.schedule is None else float(self.schedule.d_at(t))

    def channels_at(self, t: float):
        return self.channels(t) if callable(self.channels) else self.channels

    def constant_on(self, a: float, b: float) -> bool:
        return self.schedule is None or self.schedule.is_constant(a, b)

    def segments(self, a: float, b: float):
        if b <= a:
            return
        if self.constant_on(a, b):
            yield a, b
            return
        res = self.resolution
        grid = np.arange(math.floor(a / res) + 1, math.ceil(b / res)) * res
        cuts = set(g for g in grid if a < g < b)
        cuts.update(x for x in getattr(self.schedule, "breakpoints", ()) if a < x < b)
        edges = [a] + sorted(cuts) + [b]
        yield from zip(edges[:-1], edges[1:])

    def free_map(self, a: float, b: float, lock: str | None = None) -> np.ndarray:
        if lock == "waltz16":
            return self.waltz_map(a, b)
        omega = 0.0 if lock == "ideal" else self.sys.omega
        total_map = np.eye(17, dtype=complex)
        for lo, hi in self.segments(a, b):
            mid = (lo + hi) / 2
            m = segment_map(omega, self.sys.j, self.d_at(mid), hi - lo, self.channels_at(mid))
            total_map = m @ total_map
        return total_map

    def waltz_map(self, a: float, b: float) -> np.ndarray:
        # couplings are sampled once per supercycle so the cycle phase is never restarted
        if self.constant_on(a, b):
            mid = (a + b) / 2
            return waltz16_map(self.sys.omega, self.sys.j, self.d_at(mid), b - a, self.lock_rf_hz, self.channels_at(mid))
        period = waltz16_cycle_time(self.lock_rf_hz)
        total_map = np.eye(17, dtype=complex)
        t = a
        while t < b - 1e-15:
            dt = min(period, b - t)
            mid = t + dt / 2
            m = waltz16_map(self.sys.omega, self.sys.j, self.d_at(mid), dt, self.lock_rf_hz, self.channels_at(mid))
            total_map = m @ total_map
            t += dt
        return total_map

    def record(self, ens: ZEnsemble, label: str):
        drift = ens.hermiticity_drift()
        if drift > HERMITIAN_TOL:
            level = logging.WARNING if drift > DRIFT_WARN else logging.DEBUG
            log.log(level, "Hermiticity drift %.3e repaired at t=%.6g s", drift, self.t)
            ens.hermitize()
        self.max_drift = max(self.max_drift, drift)
        if not self.obs:
            return
        if self.times and self.times[-1] > self.t:
            raise SimulationError("trajectory time went backwards")
        self.times.append(self.t)
        self.labels.append(label)
        for name, o in self.obs.items():
            self.values[name].append(ens.expectation(o))

    def flush_diffusion(self, ens: ZEnsemble):
        if self.pending <= 0 or self.diffusion == 0:
            self.pending = 0.0
            return
        method = self.diffusion_method or ("monte-carlo" if ens.mode == "slices" else "analytic")
        if method == "monte-carlo":
            ens.random_walk(self.diffusion, self.pending)
        elif method == "analytic":
            ens.attenuate(self.diffusion, self.pending)
        else:
            raise ValueError(f"unknown diffusion method {method!r}")
        self.pending = 0.0

    def advance(self, ens: ZEnsemble, duration: float, label: str, lock: str | None = None):
        pieces = self.oversample + 1 if self.obs and lock != "waltz16" else 1
        edges = np.linspace(self.t, self.t + duration, pieces + 1)
        for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            m = self.free_map(a, b, lock)
            ens.apply_affine(m[:16, :16], m[:16, 16])
            self.pending += b - a
            self.t = b
            if i < pieces - 1:
                self.record(ens, label)
        self.t = float(edges[-1])

    def cpmg(self, ens: ZEnsemble, ev: CpmgBlock):
        half = ev.tau / 2
        pi_map = self.pi_map(ev.composite)
        end = self.t + ev.duration
        if self.constant_on(self.t, end) and not (self.oversample and self.obs):
            echo = self.free_map(self.t + half, self.t + ev.tau) @ pi_map @ self.free_map(self.t, self.t + half)
            m = np.linalg.matrix_power(echo, ev.n)
            ens.apply_affine(m[:16, :16], m[:16, 16])
            self.pending += ev.duration
            self.t = end
            return
        for k in range(ev.n):
            start = self.t
            m = self.free_map(start + half, start + ev.tau) @ pi_map @ self.free_map(start, start + half)
            ens.apply_affine(m[:16, :16], m[:16, 16])
            self.pending += ev.tau
            self.t = start + ev.tau
            if self.oversample and self.obs and k < ev.n - 1:
                self.record(ens, "cpmg")
        self.t = end

    @staticmethod
    def pi_map(composite: bool) -> np.ndarray:
        if not composite:
            return pulse_map(math.pi, 0.0)
        # 90x - 180y - 90x
        return pulse_map(math.pi / 2, 0.0) @ pulse_map(math.pi, math.pi / 2) @ pulse_map(math.pi / 2, 0.0)


def run_program(
    state,
    program: PulseProgram,
    sys: SpinSystem,
    schedule=None,
    channels=None,
    observables=("Fx",),
    resolution: float = DEFAULT_RESOLUTION,
    oversample: int = 0,
    diffusion: float = 0.0,
    diffusion_method: str | None = None,
    lock_rf_hz: float = DEFAULT_LOCK_RF,
    t0: float = 0.0,
) -> Trajectory:
    """Execute ``program`` on ``state`` (a 4x4 density operator or a :class:`ZEnsemble`).

    During free evolution the dipolar coupling follows ``schedule.d_at(t)``
    (piecewise constant on a global grid of spacing ``resolution``) and
    ``channels`` may be a callable ``t -> channels`` sampled the same way.
    ``oversample`` adds that many interior samples to every timed event and
    one sample per echo inside CPMG blocks.  The returned trajectory carries
    the final state, the observables at ``Acquire`` (if present), and for
    explicit-slice ensembles the per-slice signals at acquisition.
    """
    if not isinstance(program, PulseProgram):
        raise TypeError("program must be a PulseProgram")
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    if schedule is not None:
        horizon = getattr(schedule, "horizon", math.inf)
        if t0 + program.duration > horizon + 1e-12:
            raise SimulationError(
                f"program runs to {t0 + program.duration:.6g} s but the schedule ends at {horizon:.6g} s",
                diagnostics={"program_duration": program.duration, "horizon": horizon},
            )
    obs = _resolve_observables(observables)
    plain = not isinstance(state, ZEnsemble)
    ens = ZEnsemble(state) if plain else state.copy()
    run = _Runner(sys, schedule, channels, resolution, oversample, diffusion, diffusion_method, lock_rf_hz, t0, obs)
    acquired = slices = None
    run.record(ens, "start")
    for i, ev in enumerate(program.events):
        if isinstance(ev, Pulse):
            m = pulse_map(math.radians(ev.flip), math.radians(ev.phase))
            ens.apply_affine(m[:16, :16])
            run.record(ens, "pulse")
        elif isinstance(ev, Delay):
            run.advance(ens, ev.t, "delay")
            run.record(ens, "delay")
        elif isinstance(ev, CpmgBlock):
            run.cpmg(ens, ev)
            run.record(ens, "cpmg")
        elif isinstance(ev, Gradient):
            run.flush_diffusion(ens)
            ens.apply_gradient(ev.area, gamma=sys.gamma, bipolar=ev.bipolar)
            run.record(ens, "gradient")
        elif isinstance(ev, Lock):
            run.advance(ens, ev.t, "lock", lock=ev.mode)
            run.record(ens, "lock")
        elif isinstance(ev, StorageMarker):
            run.advance(ens, ev.t, "store", lock=ev.lock)
            run.record(ens, "store")
        elif isinstance(ev, Acquire):
            run.flush_diffusion(ens)
            acquired = {name: ens.expectation(o) for name, o in obs.items()}
            if ens.mode == "slices":
                slices = {name: ens.slice_expectations(o) for name, o in obs.items()}
            run.record(ens, "acquire")
        else:  # pragma: no cover - PulseProgram validates kinds
            raise ProgramError(f"unknown event kind {type(ev).__name__}", index=i)
    run.flush_diffusion(ens)
    final = ens.mean() if plain else ens
    return Trajectory(
        times=np.array(run.times),
        values={k: np.array(v) for k, v in run.values.items()},
        labels=tuple(run.labels),
        final_state=final,
        acquired=acquired,
        slice_signals=slices,
        diagnostics={"max_hermiticity_drift": run.max_drift, "n_pathways": ens.n_pathways},
    )


def resolution_check(state, program, sys, schedule, channels=None, observables=("Fx",), resolution=DEFAULT_RESOLUTION, **kw) -> float:
    """Richardson-style check: largest change in acquired observables when the sampling resolution is halved."""
    a = run_program(state, program, sys, schedule, channels, observables, resolution=resolution, **kw)
    b = run_program(state, program, sys, schedule, channels, observables, resolution=resolution / 2, **kw)
    if a.acquired is None:
        mean = lambda s: s.mean() if isinstance(s, ZEnsemble) else s  # noqa: E731
        return float(np.max(np.abs(mean(a.final_state) - mean(b.final_state))))
    return max(abs(a.acquired[k] - b.acquired[k]) for k in a.acquired)
