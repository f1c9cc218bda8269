"""Spatially resolved ensembles for gradient and diffusion physics.

A pulsed field gradient of area ``A`` imprints ``exp(-i p gamma A z)`` on every
coherence-order-``p`` element of the density operator at height ``z``.  All
other events are identical for every slice, so the ensemble is stored as a
set of *pathways*: one shared 4x4 operator per history of coherence orders at
the gradients, plus the spatial phase that history accumulated.  The state of
slice ``j`` is ``sum_p X_p exp(-i phi_pj)``.

Three averaging modes are supported:

``"ideal"``
    infinitely long uniform sample; a pathway survives averaging only if its
    net wavenumber is zero.  Diffusion is applied analytically.
``"continuum"``
    uniform sample of finite length ``L``; a pathway of wavenumber ``k`` is
    weighted by ``sinc(k L / 2)``.  Diffusion is applied analytically.
``"slices"``
    ``N_z`` explicit slices.  Positions start on a uniform grid across the
    sample and random-walk under diffusion (Monte Carlo).
"""

from __future__ import annotations

import math

import numpy as np

from .spin import GAMMA_1H, check_operator, rotation

MODES = ("ideal", "continuum", "slices")
DEFAULT_SAMPLE_LENGTH = 0.02  # m
PRUNE_TOL = 1e-13
BLOCK = 1024

# magnetic quantum number of |00>, |01>, |10>, |11>
_M = np.array([1, 0, 0, -1])
_ORDER = _M[:, None] - _M[None, :]
ORDER_MASKS = {p: (_ORDER == p) for p in range(-2, 3)}


def full_dephasing_area(sample_length: float = DEFAULT_SAMPLE_LENGTH, gamma: float = GAMMA_1H) -> float:
    """Smallest gradient area (T s / m) winding single-quantum phase once across the sample."""
    return 2 * math.pi / (gamma * sample_length)


def coherence_orders(rho: np.ndarray) -> dict[int, np.ndarray]:
    """Split an operator into its coherence-order components."""
    return {p: np.where(mask, rho, 0) for p, mask in ORDER_MASKS.items() if np.any(rho[mask] != 0)}


class ZEnsemble:
    def __init__(
        self,
        rho,
        mode: str = "ideal",
        n_slices: int = 1,
        sample_length: float = DEFAULT_SAMPLE_LENGTH,
        positions=None,
        seed: int = 0,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        rho = check_operator(rho, "rho")
        self.mode = mode
        self.sample_length = float(sample_length)
        if not self.sample_length > 0:
            raise ValueError("sample_length must be positive")
        self.seed = int(seed)
        self._walk_steps = 0
        if mode == "slices":
            if positions is None:
                if n_slices < 1:
                    raise ValueError("n_slices must be >= 1")
                positions = (np.arange(n_slices) + 0.5) / n_slices * self.sample_length - self.sample_length / 2
            self.z = np.array(positions, dtype=float)
            self.phases = np.zeros((1, self.z.size))
        else:
            self.z = None
            self.phases = None
        self.ops = rho[None].copy()
        self.k = np.zeros(1)
        self.keys: list[tuple[int, ...]] = [()]
        self._invalidate()

    def _invalidate(self):
        self._weights_cache = None
        self._mirror_cache = None

    # -- bookkeeping -----------------------------------------------------
    @property
    def n_slices(self) -> int:
        return 0 if self.z is None else self.z.size

    @property
    def n_pathways(self) -> int:
        return len(self.keys)

    def copy(self) -> "ZEnsemble":
        new = object.__new__(ZEnsemble)
        new.__dict__.update(self.__dict__)
        new.ops = self.ops.copy()
        new.k = self.k.copy()
        new.keys = list(self.keys)
        new.z = None if self.z is None else self.z.copy()
        new.phases = None if self.phases is None else self.phases.copy()
        return new

    def _uniform_index(self) -> int:
        key = (0,) * (len(self.keys[0]) if self.keys else 0)
        try:
            return self.keys.index(key)
        except ValueError:
            self.keys.append(key)
            self.ops = np.concatenate([self.ops, np.zeros((1, 4, 4), complex)])
            self.k = np.append(self.k, 0.0)
            if self.phases is not None:
                self.phases = np.vstack([self.phases, np.zeros(self.z.size)])
            self._invalidate()
            return len(self.keys) - 1

    def prune(self, tol: float = PRUNE_TOL):
        keep = np.max(np.abs(self.ops), axis=(1, 2)) > tol
        if keep.all():
            return
        self.ops = self.ops[keep]
        self.k = self.k[keep]
        self.keys = [key for key, kept in zip(self.keys, keep) if kept]
        if self.phases is not None:
            self.phases = self.phases[keep]
        self._invalidate()

    # -- linear maps shared by every slice ---------------------------------
    def apply_unitary(self, u: np.ndarray):
        self.ops = u @ self.ops @ u.conj().T

    def apply_affine(self, m: np.ndarray, c: np.ndarray | None = None):
        """``X -> M vec(X)`` for every pathway, plus ``c`` on the spatially uniform one."""
        flat = self.ops.reshape(len(self.keys), 16) @ m.T
        self.ops = flat.reshape(-1, 4, 4)
        if c is not None and np.any(c != 0):
            i = self._uniform_index()
            self.ops[i] += c.reshape(4, 4)

    def _mirror(self) -> np.ndarray:
        if self._mirror_cache is None:
            index = {key: i for i, key in enumerate(self.keys)}
            self._mirror_cache = np.array([index.get(tuple(-p for p in key), -1) for key in self.keys])
        return self._mirror_cache

    def hermiticity_drift(self) -> float:
        """Largest deviation from ``X_key = X_mirror^+`` (mirror = all orders negated)."""
        mirror = self._mirror()
        ok = mirror >= 0
        if not ok.any():
            return 0.0
        partner = self.ops[mirror[ok]].conj().transpose(0, 2, 1)
        return float(np.max(np.abs(self.ops[ok] - partner)))

    def hermitize(self) -> float:
        """Symmetrise mirrored pathway pairs; returns the drift that was removed."""
        drift = self.hermiticity_drift()
        mirror = self._mirror()
        ok = mirror >= 0
        if ok.any():
            ops = self.ops.copy()
            ops[ok] = (self.ops[ok] + self.ops[mirror[ok]].conj().transpose(0, 2, 1)) / 2
            self.ops = ops
        return drift

    # -- gradients and diffusion -----------------------------------------
    def apply_gradient(self, area: float, gamma: float = GAMMA_1H, bipolar: bool = False):
        """Apply a gradient (or bipolar pair with refocusing pi_x) of net area ``area``."""
        if bipolar:
            pi_x = rotation(math.pi, 0.0)
        new_ops, new_k, new_keys, new_phases = [], [], [], []
        for i, key in enumerate(self.keys):
            for p, part in coherence_orders(self.ops[i]).items():
                if bipolar:
                    part = pi_x @ part @ pi_x.conj().T
                new_ops.append(part)
                new_k.append(self.k[i] + p * gamma * area)
                new_keys.append(key + (p,))
                if self.phases is not None:
                    new_phases.append(self.phases[i] + p * gamma * area * self.z)
        if not new_ops:
            new_ops, new_k, new_keys = [np.zeros((4, 4), complex)], [0.0], [tuple(0 for _ in range(len(self.keys[0]) + 1))]
            if self.phases is not None:
                new_phases = [np.zeros(self.z.size)]
        self.ops = np.array(new_ops)
        self.k = np.array(new_k)
        self.keys = new_keys
        if self.phases is not None:
            self.phases = np.array(new_phases)
        self._invalidate()
        self._merge()
        self.prune()

    def _merge(self):
        if len(set(self.keys)) == len(self.keys):
            return
        index: dict[tuple, int] = {}
        for i, key in enumerate(self.keys):
            if key in index:
                self.ops[index[key]] += self.ops[i]
            else:
                index[key] = i
        rows = sorted(index.values())
        self.ops = self.ops[rows]
        self.k = self.k[rows]
        self.keys = [self.keys[i] for i in rows]
        if self.phases is not None:
            self.phases = self.phases[rows]
        self._invalidate()

    def attenuate(self, diffusion: float, t: float):
        """Analytic diffusion: each pathway decays by ``exp(-D k^2 t)``."""
        if diffusion == 0 or t == 0:
            return
        self.ops *= np.exp(-diffusion * self.k**2 * t)[:, None, None]

    def random_walk(self, diffusion: float, t: float):
        """Monte Carlo diffusion: Gaussian displacement of variance ``2 D t`` per slice.

        Each block of ``BLOCK`` consecutive slices draws from its own stream seeded
        by ``(seed, step, block)``, so results do not depend on how slices are
        partitioned across workers.
        """
        if self.z is None:
            raise ValueError("random walk needs an explicit-slice ensemble")
        step = self._walk_steps
        self._walk_steps += 1
        if diffusion == 0 or t == 0:
            return
        sigma = math.sqrt(2 * diffusion * t)
        n = self.z.size
        draws = np.empty(n)
        for b, start in enumerate(range(0, n, BLOCK)):
            stop = min(n, start + BLOCK)
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, step, b]))
            draws[start:stop] = rng.standard_normal(stop - start)
        self.z = self.z + sigma * draws

    # -- averaging -------------------------------------------------------
    def weights(self) -> np.ndarray:
        """Complex averaging weight of each pathway (depends only on gradient history)."""
        if self._weights_cache is None:
            self._weights_cache = self._compute_weights()
        return self._weights_cache

    def _compute_weights(self) -> np.ndarray:
        if self.mode == "ideal":
            scale = max(1.0, float(np.max(np.abs(self.k)))) if self.k.size else 1.0
            return (np.abs(self.k) <= 1e-9 * scale).astype(complex)
        if self.mode == "continuum":
            return np.sinc(self.k * self.sample_length / (2 * math.pi)).astype(complex)
        return np.mean(np.exp(-1j * self.phases), axis=1)

    def mean(self) -> np.ndarray:
        """Unweighted ensemble-average density operator."""
        w = self.weights()
        return np.tensordot(w, self.ops, axes=1)

    def expectation(self, obs: np.ndarray) -> float:
        value = np.trace(self.mean() @ obs)
        return float(value.real)

    def slice_state(self, j: int) -> np.ndarray:
        if self.z is None:
            raise ValueError("slice states exist only in 'slices' mode")
        return np.tensordot(np.exp(-1j * self.phases[:, j]), self.ops, axes=1)

    def slice_expectations(self, obs: np.ndarray) -> np.ndarray:
        """Per-slice ``Tr(rho_j obs)``; their mean is :meth:`expectation`."""
        if self.z is None:
            raise ValueError("slice expectations exist only in 'slices' mode")
        traces = np.einsum("pab,ba->p", self.ops, obs)
        return (traces[:, None] * np.exp(-1j * self.phases)).sum(axis=0).real


def apply_gradient(ens: ZEnsemble, area: float, gamma: float = GAMMA_1H, bipolar: bool = False) -> ZEnsemble:
    out = ens.copy()
    out.apply_gradient(area, gamma=gamma, bipolar=bipolar)
    return out


def diffuse(ens: ZEnsemble, diffusion: float, t: float, seed: int | None = None, method: str | None = None) -> ZEnsemble:
    """Translational diffusion for time ``t``.

    ``method="monte-carlo"`` random-walks the slices (explicit-slice ensembles
    only); ``method="analytic"`` attenuates each pathway by
    ``exp(-D k^2 t)``.  The default is Monte Carlo for explicit slices and
    analytic otherwise.
    """
    if diffusion < 0 or t < 0:
        raise ValueError("diffusion coefficient and time must be non-negative")
    out = ens.copy()
    if seed is not None:
        out.seed = int(seed)
    if method is None:
        method = "monte-carlo" if ens.mode == "slices" else "analytic"
    if method == "monte-carlo":
        out.random_walk(diffusion, t)
    elif method == "analytic":
        out.attenuate(diffusion, t)
    else:
        raise ValueError(f"unknown diffusion method {method!r}")
    return out
