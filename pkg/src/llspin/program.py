"""Pulse-program events and the immutable program container.

Pulse flip angles and phases are stored in degrees (phase 0 = x, 90 = y),
times in seconds and gradient areas in T s / m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ProgramError

LOCK_MODES = ("ideal", "waltz16")


@dataclass(frozen=True)
class Pulse:
    flip: float
    phase: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.flip) and math.isfinite(self.phase)):
            raise ValueError("pulse flip and phase must be finite")
        phase = float(self.phase) % 360.0
        object.__setattr__(self, "phase", 0.0 if phase == 360.0 else phase)  # tiny negatives round up to 360

    duration = 0.0


@dataclass(frozen=True)
class Delay:
    t: float

    @property
    def duration(self) -> float:
        return self.t


@dataclass(frozen=True)
class CpmgBlock:
    """``n`` repetitions of ``tau/2 - pi_x - tau/2``."""

    tau: float
    n: int
    composite: bool = False

    @property
    def duration(self) -> float:
        return self.n * self.tau


@dataclass(frozen=True)
class Gradient:
    """Instantaneous gradient of net area ``area``; ``bipolar`` adds the refocusing pi_x between lobes."""

    area: float
    bipolar: bool = False

    duration = 0.0


@dataclass(frozen=True)
class Lock:
    mode: str
    t: float

    @property
    def duration(self) -> float:
        return self.t


@dataclass(frozen=True)
class StorageMarker:
    """Storage interval; free evolution unless ``lock`` names a lock mode."""

    t: float
    lock: str | None = None

    @property
    def duration(self) -> float:
        return self.t


@dataclass(frozen=True)
class Acquire:
    duration = 0.0


EVENT_TYPES = (Pulse, Delay, CpmgBlock, Gradient, Lock, StorageMarker, Acquire)


def check_event(ev, index: int | None = None):
    """Semantic validation of one event; raises :class:`ProgramError` tagged with ``index``."""
    if not isinstance(ev, EVENT_TYPES):
        raise ProgramError(f"unknown event kind {type(ev).__name__}", index=index)
    for name in ("t", "tau", "area"):
        value = getattr(ev, name, None)
        if value is not None and not math.isfinite(value):
            raise ProgramError(f"{type(ev).__name__}.{name} must be finite", index=index)
    if isinstance(ev, (Delay, Lock, StorageMarker)) and ev.t < 0:
        raise ProgramError(f"negative duration {ev.t!r}", index=index)
    if isinstance(ev, CpmgBlock):
        if not ev.tau > 0:
            raise ProgramError("cpmg tau must be > 0", index=index)
        if int(ev.n) != ev.n or ev.n < 1:
            raise ProgramError("cpmg n must be an integer >= 1", index=index)
    if isinstance(ev, Lock) and ev.mode not in LOCK_MODES:
        raise ProgramError(f"unknown lock mode {ev.mode!r}", index=index)
    if isinstance(ev, StorageMarker) and ev.lock is not None and ev.lock not in LOCK_MODES:
        raise ProgramError(f"unknown lock mode {ev.lock!r}", index=index)


@dataclass(frozen=True)
class PulseProgram:
    events: tuple = ()
    label: str = field(default="", compare=False)

    def __post_init__(self):
        events = tuple(self.events)
        object.__setattr__(self, "events", events)
        for i, ev in enumerate(events):
            check_event(ev, i)
            if isinstance(ev, Acquire) and i != len(events) - 1:
                raise ProgramError("acquire must be the last event (at most one per program)", index=i)

    @property
    def duration(self) -> float:
        return float(sum(ev.duration for ev in self.events))

    @property
    def has_acquire(self) -> bool:
        return bool(self.events) and isinstance(self.events[-1], Acquire)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __add__(self, other: "PulseProgram") -> "PulseProgram":
        label = "+".join(x for x in (self.label, other.label) if x)
        return PulseProgram(self.events + tuple(other.events), label=label)

    def then(self, *events, label: str | None = None) -> "PulseProgram":
        return PulseProgram(self.events + tuple(events), label=self.label if label is None else label)

    def relabel(self, label: str) -> "PulseProgram":
        return PulseProgram(self.events, label=label)

    def without_acquire(self) -> "PulseProgram":
        if self.has_acquire:
            return PulseProgram(self.events[:-1], label=self.label)
        return self
