"""Phenomenological relaxation channels.

Each channel is a set of generators ``G`` entering a unital Lindblad
dissipator ``rate * sum_G (G X G^+ - {G^+ G, X} / 2)`` that acts on the
deviation from thermal equilibrium.  Three stock channels are provided:

``exchange-symmetric-dipolar``
    the five rank-2 two-spin tensors; none of them connects the singlet to the
    triplets, so singlet population is untouched.
``uncorrelated-random-field``
    independent isotropic fields on each spin; breaks singlet immunity.
``correlated-random-field``
    a common isotropic field on both spins; preserves the singlet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .spin import exchange_operator, op

SYMMETRIC_DIPOLAR = "exchange-symmetric-dipolar"
UNCORRELATED = "uncorrelated-random-field"
CORRELATED = "correlated-random-field"
KINDS = (SYMMETRIC_DIPOLAR, UNCORRELATED, CORRELATED)


@lru_cache(maxsize=None)
def stock_generators(kind: str) -> tuple[np.ndarray, ...]:
    """Hermitian generators of a stock channel, each normalised to ``Tr(G^2) = 1``."""
    i1 = {a: op(f"I1{a}") for a in "xyz"}
    i2 = {a: op(f"I2{a}") for a in "xyz"}
    if kind == SYMMETRIC_DIPOLAR:
        gens = [
            2 * i1["z"] @ i2["z"] - i1["x"] @ i2["x"] - i1["y"] @ i2["y"],
            i1["x"] @ i2["z"] + i1["z"] @ i2["x"],
            i1["y"] @ i2["z"] + i1["z"] @ i2["y"],
            i1["x"] @ i2["x"] - i1["y"] @ i2["y"],
            i1["x"] @ i2["y"] + i1["y"] @ i2["x"],
        ]
    elif kind == UNCORRELATED:
        gens = [i1[a] for a in "xyz"] + [i2[a] for a in "xyz"]
    elif kind == CORRELATED:
        gens = [i1[a] + i2[a] for a in "xyz"]
    else:
        raise ValueError(f"unknown channel kind {kind!r}; expected one of {KINDS}")
    out = []
    for g in gens:
        g = g / math.sqrt(np.trace(g @ g).real)
        g.setflags(write=False)
        out.append(g)
    return tuple(out)


@dataclass(frozen=True)
class RelaxationChannel:
    kind: str
    rate: float
    generators: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}; expected one of {KINDS}")
        if not self.rate >= 0:
            raise ValueError(f"relaxation rate must be >= 0, got {self.rate!r}")
        if self.generators is None:
            object.__setattr__(self, "generators", stock_generators(self.kind))
        else:
            gens = tuple(np.asarray(g, dtype=complex) for g in self.generators)
            object.__setattr__(self, "generators", gens)
        if self.kind == SYMMETRIC_DIPOLAR:
            p = exchange_operator()
            for g in self.generators:
                if np.max(np.abs(p @ g @ p - g)) > 1e-12:
                    raise ValueError("exchange-symmetric channel has a generator that is not exchange symmetric")

    @property
    def key(self) -> tuple:
        return (self.kind, float(self.rate))

    @property
    def is_stock(self) -> bool:
        return self.generators is stock_generators(self.kind)

    def superoperator(self) -> np.ndarray:
        if self.is_stock:
            return self.rate * _dissipator(self.kind)
        return self.rate * sum(_lindblad(g) for g in self.generators)


def _lindblad(g: np.ndarray) -> np.ndarray:
    # row-major vectorisation: vec(A X B) = kron(A, B.T) vec(X)
    e = np.eye(4)
    gg = g.conj().T @ g
    return np.kron(g, g.conj()) - 0.5 * np.kron(gg, e) - 0.5 * np.kron(e, gg.T)


@lru_cache(maxsize=None)
def _dissipator(kind: str) -> np.ndarray:
    s = sum(_lindblad(g) for g in stock_generators(kind))
    s.setflags(write=False)
    return s


@dataclass(frozen=True)
class RelaxationModel:
    """Rates (1/s) of the three stock channels."""

    symmetric: float = 0.0
    uncorrelated: float = 0.0
    correlated: float = 0.0

    def __post_init__(self):
        for name in ("symmetric", "uncorrelated", "correlated"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} rate must be >= 0")

    @property
    def channels(self) -> list[RelaxationChannel]:
        pairs = ((SYMMETRIC_DIPOLAR, self.symmetric), (UNCORRELATED, self.uncorrelated), (CORRELATED, self.correlated))
        return [RelaxationChannel(k, r) for k, r in pairs if r > 0]

    @property
    def key(self) -> tuple:
        return (float(self.symmetric), float(self.uncorrelated), float(self.correlated))

    def is_zero(self) -> bool:
        return not any(self.key)

    def blend(self, other: "RelaxationModel", w: float) -> "RelaxationModel":
        """Linear interpolation: ``w = 0`` gives self, ``w = 1`` gives other."""
        return RelaxationModel(*((1 - w) * a + w * b for a, b in zip(self.key, other.key)))


NO_RELAXATION = RelaxationModel()


def dissipator_superoperator(channels) -> np.ndarray:
    """Sum of channel dissipators as a 16x16 row-major superoperator."""
    channels = as_channels(channels)
    total = np.zeros((16, 16), dtype=complex)
    for ch in channels:
        total = total + ch.superoperator()
    return total


def as_channels(channels) -> list[RelaxationChannel]:
    if channels is None:
        return []
    if isinstance(channels, RelaxationModel):
        return channels.channels
    if isinstance(channels, RelaxationChannel):
        return [channels]
    return list(channels)


def channels_key(channels) -> tuple | None:
    """Hashable identity of a channel list, or ``None`` if it holds custom generators."""
    channels = as_channels(channels)
    if not all(ch.is_stock for ch in channels):
        return None
    return tuple(sorted(ch.key for ch in channels if ch.rate > 0))


def decay_rate(channels, observable: np.ndarray) -> float:
    """Initial decay rate ``-<A|L A> / <A|A>`` of ``observable`` under the dissipators alone."""
    s = dissipator_superoperator(channels)
    a = np.asarray(observable, dtype=complex).reshape(16)
    return float(-(a.conj() @ s @ a).real / (a.conj() @ a).real)
