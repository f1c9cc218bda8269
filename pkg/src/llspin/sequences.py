"""Resonance conditions and built-in pulse programs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .ensemble import DEFAULT_SAMPLE_LENGTH, full_dephasing_area
from .errors import PhysicsError
from .program import Acquire, CpmgBlock, Delay, Gradient, Pulse, PulseProgram, StorageMarker
from .spin import SpinSystem, thermal_deviation

X, Y, MINUS_X, MINUS_Y = 0.0, 90.0, 180.0, 270.0
SPOIL_FACTOR = 10.0
# the readout purge uses a different spoil area so that no pathway is refocused by the two spoils together
PURGE_SPOIL_RATIO = 1.37
CL_REGIME_THRESHOLD = 0.2
CL_CONTRACT = 0.95
SINGLET_ORDER_CEILING = 2.0  # max <S0|rho|S0> - <T0|rho|T0> reachable unitarily from I1z + I2z


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ResonanceParams:
    theta: float  # rad
    nu_eff: float  # Hz
    tau: float  # s
    n1: int
    n2: int


def resonance_params(sys: SpinSystem) -> ResonanceParams:
    """Echo spacing and echo counts that drive T0 <-> S0 transfer in a strongly coupled pair."""
    if sys.omega == 0:
        raise PhysicsError("no singlet-triplet coupling: omega = 0 leaves T0 and S0 unmixed")
    if sys.j == sys.d:
        raise PhysicsError("J = D: mixing angle is pi/2 (pure shift-driven mixing), echo counts degenerate")
    nu_eff = math.hypot(sys.omega, sys.j - sys.d)
    theta = math.atan(abs(sys.omega) / abs(sys.j - sys.d))
    return ResonanceParams(
        theta=theta,
        nu_eff=nu_eff,
        tau=1 / (2 * nu_eff),
        n1=round_half_up(math.pi / (2 * theta)),
        n2=round_half_up(math.pi / (4 * theta)),
    )


def default_spoil_area(sys: SpinSystem | None = None, sample_length: float = DEFAULT_SAMPLE_LENGTH) -> float:
    if sys is None:
        return SPOIL_FACTOR * full_dephasing_area(sample_length)
    return SPOIL_FACTOR * full_dephasing_area(sample_length, sys.gamma)


def cpmg(tau: float, n: int, composite: bool = False) -> PulseProgram:
    if not tau > 0:
        raise ValueError("tau must be > 0")
    if int(n) != n or n < 1:
        raise ValueError("n must be an integer >= 1")
    return PulseProgram((CpmgBlock(float(tau), int(n), bool(composite)),), label="cpmg")


def m2s(sys: SpinSystem, spoil_area: float | None = None, composite: bool = False) -> PulseProgram:
    """Magnetization-to-singlet: (pi/2)_y, CPMG(n1), (pi/2)_x, tau/2, CPMG(n2), spoil."""
    p = resonance_params(sys)
    spoil = default_spoil_area(sys) if spoil_area is None else spoil_area
    return PulseProgram(
        (
            Pulse(90, Y),
            CpmgBlock(p.tau, p.n1, composite),
            Pulse(90, X),
            Delay(p.tau / 2),
            CpmgBlock(p.tau, p.n2, composite),
            Gradient(spoil),
        ),
        label="m2s",
    )


def s2m(sys: SpinSystem, spoil_area: float | None = None, composite: bool = False) -> PulseProgram:
    """Singlet-to-magnetization readout.

    A (pi/2)_y purge plus spoil removes recovered longitudinal magnetization,
    then the transfer blocks of :func:`m2s` run in reverse order.  The
    readout ends on the last CPMG block: the state there is already in-phase
    transverse magnetization, so no closing pulse is applied.
    """
    p = resonance_params(sys)
    spoil = PURGE_SPOIL_RATIO * default_spoil_area(sys) if spoil_area is None else spoil_area
    return PulseProgram(
        (
            Pulse(90, Y),
            Gradient(spoil),
            CpmgBlock(p.tau, p.n2, composite),
            Delay(p.tau / 2),
            Pulse(90, X),
            CpmgBlock(p.tau, p.n1, composite),
        ),
        label="s2m",
    )


# -- weak-coupling (CL) preparation and readout ------------------------------------
@dataclass(frozen=True)
class ClDelays:
    t_j: float  # each half of the J-refocused echo
    t_shift: float  # chemical-shift evolution before the second pulse
    t_final: float  # shift evolution after the second pulse (and before the readout pulse)

    @classmethod
    def default(cls, sys: SpinSystem) -> "ClDelays":
        return cls(1 / (4 * abs(sys.j)), 1 / (2 * abs(sys.omega)), 1 / (4 * abs(sys.omega)))


def _check_cl_regime(sys: SpinSystem, threshold: float = CL_REGIME_THRESHOLD):
    if sys.omega == 0 or sys.j == 0:
        raise PhysicsError("weak-coupling preparation needs nonzero omega and J")
    if abs(sys.j / sys.omega) > threshold:
        warnings.warn(f"|J/omega| = {abs(sys.j / sys.omega):.3f} exceeds the weak-coupling threshold {threshold}", stacklevel=3)
    if abs(sys.d) > threshold * abs(sys.omega):
        warnings.warn(f"|D| = {abs(sys.d):g} Hz is not small; weak-coupling preparation assumes D close to 0", stacklevel=3)


def _cl_prepare_program(delays: ClDelays) -> PulseProgram:
    return PulseProgram(
        (
            Pulse(90, X),
            Delay(delays.t_j),
            Pulse(180, Y),
            Delay(delays.t_j),
            Delay(delays.t_shift),
            Pulse(90, Y),
            Delay(delays.t_final),
        ),
        label="cl_prepare",
    )


def cl_singlet_order(sys: SpinSystem, delays: ClDelays) -> float:
    """Singlet order ``<S0|rho|S0> - <T0|rho|T0>`` left by the preparation, relaxation-free."""
    from .evolution import run_program

    traj = run_program(thermal_deviation(), _cl_prepare_program(delays), sys, observables=("singlet_order",))
    return float(traj["singlet_order"][-1])


@lru_cache(maxsize=256)
def cl_delays(sys: SpinSystem, contract: float = CL_CONTRACT) -> ClDelays:
    """Preparation delays meeting the singlet-order contract, refined on a grid if the defaults miss it."""
    base = ClDelays.default(sys)
    if cl_singlet_order(sys, base) >= contract * SINGLET_ORDER_CEILING:
        return base
    best, best_val = base, cl_singlet_order(sys, base)
    scales = np.linspace(0.5, 1.5, 41)
    for a in scales:  # 1-D over the J delay, then 2-D with the final delay
        cand = ClDelays(base.t_j * a, base.t_shift, base.t_final)
        val = cl_singlet_order(sys, cand)
        if val > best_val:
            best, best_val = cand, val
    if best_val < contract * SINGLET_ORDER_CEILING:
        for a in scales:
            for b in scales:
                cand = ClDelays(base.t_j * a, base.t_shift, base.t_final * b)
                val = cl_singlet_order(sys, cand)
                if val > best_val:
                    best, best_val = cand, val
    if best_val < contract * SINGLET_ORDER_CEILING:
        raise PhysicsError(
            f"weak-coupling preparation reaches only {best_val / SINGLET_ORDER_CEILING:.1%} of the singlet-order ceiling"
        )
    return best


def cl_prepare(sys: SpinSystem, delays: ClDelays | None = None) -> PulseProgram:
    """Weak-coupling preparation of singlet order from thermal magnetization.

    (pi/2)_x, J-refocused echo of total length 1/(2J), shift evolution
    1/(2 omega), (pi/2)_y, shift evolution 1/(4 omega).  The delays are
    checked against the singlet-order contract and refined if needed.
    """
    _check_cl_regime(sys)
    return _cl_prepare_program(cl_delays(sys) if delays is None else delays)


def cl_read(sys: SpinSystem, delays: ClDelays | None = None) -> PulseProgram:
    """Singlet order to anti-phase transverse magnetization: shift delay 1/(4 omega), (pi/2)_x."""
    _check_cl_regime(sys)
    d = cl_delays(sys) if delays is None else delays
    return PulseProgram((Delay(d.t_final), Pulse(90, X)), label="cl_read")


def inphase_conversion(sys: SpinSystem) -> PulseProgram:
    """J-evolution spin echo turning anti-phase magnetization into in-phase I1y - I2y."""
    t = 1 / (4 * abs(sys.j))
    return PulseProgram((Delay(t), Pulse(180, X), Delay(t)), label="inphase")


# -- composite experiments ------------------------------------------------------
def _encode_after_first_pulse(program: PulseProgram, area: float) -> PulseProgram:
    head, tail = program.events[:1], program.events[1:]
    return PulseProgram(head + (Gradient(area, bipolar=True),) + tail, label=program.label)


def stellar(
    sys_pop: SpinSystem,
    sys_ip: SpinSystem,
    grad_area: float,
    store_t: float = 0.0,
    lock: str | None = "ideal",
    decode_area: float | None = None,
    spoil_area: float | None = None,
) -> PulseProgram:
    """Gradient-filtered hybrid: M2S preparation in the ordered phase, weak-coupling readout after the transition.

    The encoding bipolar pair follows the excitation pulse of the M2S block
    (the thermal state carries no transverse coherence to encode).  The
    decoding pair follows the readout, before in-phase conversion.
    """
    decode = grad_area if decode_area is None else decode_area
    prep = _encode_after_first_pulse(m2s(sys_pop, spoil_area), grad_area)
    events = (
        prep.events
        + (StorageMarker(store_t, lock),)
        + cl_read(sys_ip).events
        + (Gradient(decode, bipolar=True),)
        + inphase_conversion(sys_ip).events
        + (Acquire(),)
    )
    return PulseProgram(events, label="stellar")


def one_pulse() -> PulseProgram:
    return PulseProgram((Pulse(90, Y), Acquire()), label="one_pulse")


def inversion_recovery(t_list) -> list[PulseProgram]:
    out = []
    for t in t_list:
        if not t >= 0:
            raise ValueError(f"recovery delay must be >= 0, got {t!r}")
        out.append(PulseProgram((Pulse(180, X), Delay(float(t)), Pulse(90, Y), Acquire()), label="inversion_recovery"))
    return out


def m2s_s2m(sys: SpinSystem, store_t: float, lock: str | None = None) -> PulseProgram:
    return (m2s(sys) + PulseProgram((StorageMarker(store_t, lock),)) + s2m(sys)).then(
        Acquire(), label="m2s_s2m"
    )


def cl_cl(sys: SpinSystem, store_t: float, lock: str | None = "ideal") -> PulseProgram:
    events = cl_prepare(sys).events + (StorageMarker(store_t, lock),) + cl_read(sys).events + inphase_conversion(sys).events
    return PulseProgram(events + (Acquire(),), label="cl_cl")


def ste(area: float, store_t: float, spoil_area: float | None = None, sys: SpinSystem | None = None) -> PulseProgram:
    """Stimulated echo: excite, encode, store along z, spoil, read, decode."""
    spoil = default_spoil_area(sys) if spoil_area is None else spoil_area
    return PulseProgram(
        (
            Pulse(90, Y),
            Gradient(area, bipolar=True),
            Pulse(90, MINUS_Y),
            Gradient(spoil),
            StorageMarker(store_t),
            Pulse(90, Y),
            Gradient(area, bipolar=True),
            Acquire(),
        ),
        label="ste",
    )


def lls_diffusion_pop(sys: SpinSystem, area: float, store_t: float) -> PulseProgram:
    """Singlet-stored diffusion encoding with M2S/S2M transfer."""
    prep = _encode_after_first_pulse(m2s(sys), area)
    events = prep.events + (StorageMarker(store_t),) + s2m(sys).events + (Gradient(area, bipolar=True), Acquire())
    return PulseProgram(events, label="lls_diffusion_pop")


def lls_diffusion_ip(sys: SpinSystem, area: float, store_t: float, lock: str | None = "ideal") -> PulseProgram:
    """Singlet-stored diffusion encoding with weak-coupling transfer and a lock during storage."""
    prep = _encode_after_first_pulse(cl_prepare(sys), area)
    events = (
        prep.events
        + (StorageMarker(store_t, lock),)
        + cl_read(sys).events
        + (Gradient(area, bipolar=True),)
        + inphase_conversion(sys).events
        + (Acquire(),)
    )
    return PulseProgram(events, label="lls_diffusion_ip")


def encode_decode_interval(program: PulseProgram) -> float:
    """Time between the first and last gradient pairs flagged bipolar (the diffusion interval)."""
    t, marks = 0.0, []
    for ev in program.events:
        if isinstance(ev, Gradient) and ev.bipolar:
            marks.append(t)
        t += ev.duration
    if len(marks) < 2:
        raise ValueError("program has fewer than two bipolar gradient pairs")
    return marks[-1] - marks[0]
