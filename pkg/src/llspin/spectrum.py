"""Stick spectra from eigen-decomposition of the pair Hamiltonian."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spin import check_operator, op, total

# tiny Zeeman-like term that lifts degeneracies between blocks of different total m
_M_SPLIT = 1e-9


@dataclass(frozen=True)
class StickSpectrum:
    frequencies: np.ndarray  # Hz, ascending
    amplitudes: np.ndarray  # real line intensities

    def __len__(self) -> int:
        return len(self.frequencies)

    @property
    def lines(self) -> list[tuple[float, float]]:
        return list(zip(self.frequencies.tolist(), self.amplitudes.tolist()))

    def strongest(self, n: int) -> "StickSpectrum":
        idx = np.sort(np.argsort(-np.abs(self.amplitudes), kind="stable")[:n])
        return StickSpectrum(self.frequencies[idx], self.amplitudes[idx])

    def total_intensity(self) -> float:
        return float(np.sum(self.amplitudes))


def stick_spectrum(rho, h, phase: float = 0.0, threshold: float = 1e-12) -> StickSpectrum:
    """Lines of the free-induction signal ``Tr(rho(t) F+)`` under ``h`` (rad/s).

    Eigenvectors are taken within blocks of fixed total magnetic quantum
    number, so each line is a single-quantum transition ``i -> j`` at
    ``(E_j - E_i) / 2 pi`` with complex weight ``rho_ij (F+)_ji``.  The
    reported amplitude is the real part after receiver phase ``phase``
    (radians).  Only lines with ``|weight| > threshold`` are kept.
    """
    rho = check_operator(rho, "rho")
    h = check_operator(h, "H", hermitian=True)
    fz = total("z")
    # secular H commutes with Fz; the split orders eigenvectors by m without mixing blocks
    evals, vecs = np.linalg.eigh(h + _M_SPLIT * fz)
    evals = evals - _M_SPLIT * np.real(np.einsum("ai,ab,bi->i", vecs.conj(), fz, vecs))
    fplus = op("I1p") + op("I2p")
    r = vecs.conj().T @ rho @ vecs
    f = vecs.conj().T @ fplus @ vecs
    freqs, amps = [], []
    rot = complex(math.cos(phase), -math.sin(phase))
    for i in range(4):
        for j in range(4):
            w = r[i, j] * f[j, i]
            if abs(f[j, i]) > 1e-12 and abs(w) > threshold:
                freqs.append((evals[j] - evals[i]) / (2 * math.pi))
                amps.append((w * rot).real)
    order = np.argsort(freqs, kind="stable")
    return StickSpectrum(np.array(freqs)[order], np.array(amps)[order])


def ab_line_positions(omega: float, j: float) -> np.ndarray:
    """Closed-form line positions (Hz) of a scalar-coupled pair with shift difference ``omega``."""
    c = math.hypot(omega, j) / 2
    return np.sort(np.array([-j / 2 - c, -j / 2 + c, j / 2 - c, j / 2 + c]))


def strong_line_positions(omega: float, j: float, d: float) -> np.ndarray:
    """Closed-form line positions (Hz) with residual dipolar coupling ``d``."""
    nu = math.hypot(omega, j - d)
    a = j + 2 * d
    return np.sort(np.array([(a + nu) / 2, (a - nu) / 2, -(a + nu) / 2, -(a - nu) / 2]))
