"""Two-spin Hilbert-space algebra.

Operators are plain ``(4, 4)`` complex numpy arrays in the computational
basis ``|00>, |01>, |10>, |11>`` with spin 1 as the left tensor factor and
``|0>`` the ``m = +1/2`` state.  Hamiltonians are in rad/s; every coupling
supplied by the user is in Hz.

The singlet-triplet basis is ordered ``|T+1>, |T0>, |S0>, |T-1>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GAMMA_1H = 2.6752218744e8  # rad s^-1 T^-1

HERMITIAN_TOL = 1e-12

_SX = np.array([[0, 1], [1, 0]], dtype=complex) / 2
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
_SZ = np.array([[1, 0], [0, -1]], dtype=complex) / 2
_E2 = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class SpinSystem:
    """Homonuclear spin pair.

    ``omega`` is the chemical-shift difference, ``j`` the scalar coupling and
    ``d`` the residual dipolar coupling, all in Hz.
    """

    omega: float
    j: float
    d: float
    gamma: float = GAMMA_1H
    label: str = ""

    def __post_init__(self):
        for name in ("omega", "j", "d", "gamma"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")

    def replace(self, **changes) -> "SpinSystem":
        fields = dict(omega=self.omega, j=self.j, d=self.d, gamma=self.gamma, label=self.label)
        fields.update(changes)
        return SpinSystem(**fields)


@dataclass(frozen=True)
class BasisTransform:
    matrix: np.ndarray
    labels: tuple[str, ...]
    total_spin: tuple[int, ...]
    m: tuple[int, ...]

    def to_basis(self, op: np.ndarray) -> np.ndarray:
        """Express a computational-basis operator in this basis."""
        return self.matrix.conj().T @ op @ self.matrix

    def from_basis(self, op: np.ndarray) -> np.ndarray:
        return self.matrix @ op @ self.matrix.conj().T

    def column(self, label: str) -> np.ndarray:
        return self.matrix[:, self.labels.index(label)]

    def projector(self, label: str) -> np.ndarray:
        v = self.column(label)
        return np.outer(v, v.conj())


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def product_operators() -> dict[str, np.ndarray]:
    """Cartesian product operators of the pair.

    Keys are ``"E"``, ``"I1x"`` ... ``"I2z"`` and the raising/lowering
    operators ``"I1p"``, ``"I1m"``, ``"I2p"``, ``"I2m"``.
    """
    single = {"x": _SX, "y": _SY, "z": _SZ}
    ops: dict[str, np.ndarray] = {"E": np.eye(4, dtype=complex)}
    for a, m in single.items():
        ops[f"I1{a}"] = np.kron(m, _E2)
        ops[f"I2{a}"] = np.kron(_E2, m)
    for i in (1, 2):
        ops[f"I{i}p"] = ops[f"I{i}x"] + 1j * ops[f"I{i}y"]
        ops[f"I{i}m"] = ops[f"I{i}x"] - 1j * ops[f"I{i}y"]
    return {k: _freeze(v) for k, v in ops.items()}


def op(name: str) -> np.ndarray:
    return product_operators()[name]


@lru_cache(maxsize=None)
def product_basis() -> dict[str, np.ndarray]:
    """The sixteen operators ``2^(k-1) I1a I2b`` (identity included), orthogonal under the trace."""
    single = {"E": _E2, "x": _SX, "y": _SY, "z": _SZ}
    basis = {}
    for a, ma in single.items():
        for b, mb in single.items():
            nfactors = (a != "E") + (b != "E")
            scale = 2.0 ** (nfactors - 1) if nfactors else 1.0
            basis[a + b] = _freeze(scale * np.kron(ma, mb))
    return basis


def total(axis: str) -> np.ndarray:
    """``I1a + I2a``."""
    return op(f"I1{axis}") + op(f"I2{axis}")


def dot12() -> np.ndarray:
    return sum(op(f"I1{a}") @ op(f"I2{a}") for a in "xyz")


@lru_cache(maxsize=None)
def singlet_triplet_basis() -> BasisTransform:
    s = 1 / math.sqrt(2)
    cols = np.zeros((4, 4), dtype=complex)
    cols[0, 0] = 1  # T+1 = |00>
    cols[1, 1] = cols[2, 1] = s  # T0
    cols[1, 2], cols[2, 2] = s, -s  # S0
    cols[3, 3] = 1  # T-1 = |11>
    return BasisTransform(
        matrix=_freeze(cols),
        labels=("T+1", "T0", "S0", "T-1"),
        total_spin=(1, 1, 0, 1),
        m=(1, 0, 0, -1),
    )


def hamiltonian(sys: SpinSystem) -> np.ndarray:
    """Secular rotating-frame Hamiltonian of the pair in rad/s."""
    return _hamiltonian(sys.omega, sys.j, sys.d)


@lru_cache(maxsize=4096)
def _hamiltonian(omega: float, j: float, d: float) -> np.ndarray:
    pi = math.pi
    i1z, i2z = op("I1z"), op("I2z")
    ii = dot12()
    h = -pi * omega * i1z + pi * omega * i2z + 2 * pi * j * ii + 2 * pi * d * (3 * i1z @ i2z - ii)
    return _freeze(h)


def hamiltonian_st_basis(sys: SpinSystem) -> np.ndarray:
    """The same Hamiltonian written directly in the singlet-triplet basis."""
    j, d, w = sys.j, sys.d, sys.omega
    m = np.array(
        [
            [j + 2 * d, 0, 0, 0],
            [0, j - 4 * d, -2 * w, 0],
            [0, -2 * w, -3 * j, 0],
            [0, 0, 0, j + 2 * d],
        ],
        dtype=complex,
    )
    return (math.pi / 2) * m


@lru_cache(maxsize=None)
def exchange_operator() -> np.ndarray:
    p = np.zeros((4, 4), dtype=complex)
    for a in (0, 1):
        for b in (0, 1):
            p[2 * b + a, 2 * a + b] = 1
    return _freeze(p)


def thermal_deviation() -> np.ndarray:
    """Traceless thermal state ``I1z + I2z`` (Boltzmann prefactor set to one)."""
    return total("z").copy()


def singlet_order() -> np.ndarray:
    """Population difference observable ``|S0><S0| - |T0><T0|``."""
    st = singlet_triplet_basis()
    return st.projector("S0") - st.projector("T0")


def singlet_population() -> np.ndarray:
    return singlet_triplet_basis().projector("S0")


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - a.conj().T)) <= tol)


def check_operator(a, name: str = "operator", hermitian: bool = False) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.shape != (4, 4):
        raise ValueError(f"{name} must have shape (4, 4), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    if hermitian and not is_hermitian(a):
        raise ValueError(f"{name} is not Hermitian")
    return a


def expectation(rho: np.ndarray, obs: np.ndarray) -> float:
    """``Tr(rho @ obs)`` for a Hermitian observable."""
    obs = check_operator(obs, "observable", hermitian=True)
    value = np.trace(np.asarray(rho) @ obs)
    scale = max(1.0, float(np.max(np.abs(rho))) * float(np.max(np.abs(obs))))
    if abs(value.imag) > 1e-12 * scale * 4:
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}; is rho Hermitian?")
    return float(value.real)


def hermitize(rho: np.ndarray) -> np.ndarray:
    return (rho + rho.conj().T) / 2


@lru_cache(maxsize=None)
def _named_observables() -> dict[str, np.ndarray]:
    st = singlet_triplet_basis()
    i1 = {a: op(f"I1{a}") for a in "xyz"}
    i2 = {a: op(f"I2{a}") for a in "xyz"}
    obs = {
        "Fx": total("x"),
        "Fy": total("y"),
        "Fz": total("z"),
        "rho1": i1["x"] + i2["x"],
        "rho2": i1["y"] - i2["y"],
        "rho3": i1["z"] - i2["z"],
        "rho4": 2 * i1["y"] @ i2["x"] - 2 * i1["x"] @ i2["y"],
        "rho5": singlet_order(),
        "S0": st.projector("S0"),
        "T0": st.projector("T0"),
        "T+1": st.projector("T+1"),
        "T-1": st.projector("T-1"),
        "singlet_order": singlet_order(),
        "antiphase_x": 2 * i1["x"] @ i2["z"] - 2 * i1["z"] @ i2["x"],
        "antiphase_y": 2 * i1["y"] @ i2["z"] - 2 * i1["z"] @ i2["y"],
        "Ix_diff": i1["x"] - i2["x"],
    }
    return {k: _freeze(np.array(v)) for k, v in obs.items()}


OBSERVABLE_NAMES = ("Fx", "Fy", "Fz", "rho1", "rho2", "rho3", "rho4", "rho5", "S0", "T0", "T+1", "T-1",
                    "singlet_order", "antiphase_x", "antiphase_y", "Ix_diff")


def observable(name: str) -> np.ndarray:
    """Named observable.

    ``rho1`` ... ``rho5`` are the states of the magnetization-to-singlet chain
    (``I1x+I2x``, ``I1y-I2y``, ``I1z-I2z``, ``2I1yI2x-2I1xI2y`` and the singlet
    order ``|S0><S0| - |T0><T0|``); ``S0``, ``T0``, ``T+1``, ``T-1`` are
    projectors.
    """
    try:
        return _named_observables()[name]
    except KeyError:
        raise ValueError(f"unknown observable {name!r}; known: {', '.join(OBSERVABLE_NAMES)}") from None


def chain_norm(name: str) -> float:
    """Largest attainable ``|<obs>|`` for a state of the form ``obs`` itself, used to normalise overlaps."""
    o = observable(name)
    return float(np.trace(o @ o).real)


@lru_cache(maxsize=1024)
def rotation(flip: float, phase: float) -> np.ndarray:
    """Collective hard-pulse propagator ``exp(-i flip (Fx cos(phase) + Fy sin(phase)))`` (radians)."""
    c, s = math.cos(flip / 2), math.sin(flip / 2)
    axis = math.cos(phase) * _SX + math.sin(phase) * _SY
    single = c * _E2 - 2j * s * axis
    return _freeze(np.kron(single, single))


def eigen_singlet_order(sys: SpinSystem) -> np.ndarray:
    """Population difference of the singlet-like and T0-like eigenstates of ``hamiltonian(sys)``.

    Without relaxation this is conserved exactly; it coincides with
    :func:`singlet_order` when omega = 0.
    """
    st = singlet_triplet_basis()
    block = hamiltonian_st_basis(sys)[1:3, 1:3]
    _, vecs = np.linalg.eigh(block)
    i_s = int(np.argmax(np.abs(vecs[1, :])))  # row 1 of the block is S0
    cols = st.matrix[:, 1:3] @ vecs
    s_like, t_like = cols[:, i_s], cols[:, 1 - i_s]
    return np.outer(s_like, s_like.conj()) - np.outer(t_like, t_like.conj())
