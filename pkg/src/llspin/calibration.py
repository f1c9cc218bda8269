"""Calibration of relaxation-channel rates to target T1 and singlet lifetimes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import PhysicsError, SimulationError
from .experiments import run_lifetime_experiment
from .fitting import fit_inversion_recovery, fit_monoexponential
from .relaxation import SYMMETRIC_DIPOLAR, UNCORRELATED, RelaxationChannel, RelaxationModel, decay_rate
from .spin import SpinSystem, singlet_order, thermal_deviation

CAL_TOL = 2e-3  # relative mismatch accepted inside the loop


@dataclass(frozen=True)
class RateCalibration:
    targets: tuple[float, float]  # (T1, T_LLS), s
    achieved: tuple[float, float]
    model: RelaxationModel
    kind: str  # lifetime experiment used for the singlet lifetime
    iterations: int
    label: str = ""

    @property
    def symmetric_rate(self) -> float:
        return self.model.symmetric

    @property
    def uncorrelated_rate(self) -> float:
        return self.model.uncorrelated

    def relative_errors(self) -> tuple[float, float]:
        return tuple(abs(a / t - 1) for a, t in zip(self.achieved, self.targets))

    def report(self) -> dict:
        return {
            "label": self.label,
            "target_T1": self.targets[0],
            "target_T_LLS": self.targets[1],
            "T1": self.achieved[0],
            "T_LLS": self.achieved[1],
            "symmetric_rate": self.model.symmetric,
            "uncorrelated_rate": self.model.uncorrelated,
            "lls_experiment": self.kind,
            "iterations": self.iterations,
        }


def recovery_grid(t1: float) -> np.ndarray:
    return np.linspace(0.0, 4.0 * t1, 9)


def storage_grid(t_lls: float) -> np.ndarray:
    """Storage times late enough that triplet-manifold components (T1 scale) have died out.

    The read-out sees every population difference that the transfer blocks
    map onto signal, so early points mix the slow singlet mode with faster
    ones; from two lifetimes on the decay is single-exponential.
    """
    return np.linspace(2.0, 4.0, 8) * t_lls


def lls_kind(sys: SpinSystem) -> str:
    """Singlet experiment suited to the coupling regime: M2S/S2M when D is nonzero, weak-coupling otherwise."""
    return "LLS-pop" if sys.d != 0 else "LLS-ip"


def measure_t1(sys: SpinSystem, model: RelaxationModel, grid) -> float:
    curve = run_lifetime_experiment("T1", grid, sys, model)
    return fit_inversion_recovery(curve)["T1"]


def measure_t_lls(sys: SpinSystem, model: RelaxationModel, grid, kind: str | None = None) -> float:
    curve = run_lifetime_experiment(kind or lls_kind(sys), grid, sys, model)
    return fit_monoexponential(curve)["lifetime"]


def model_frontier() -> str:
    return "T_LLS >= T1/2 (uncorrelated fields alone); calibration requires T_LLS > T1 > 0"


def _bracket_root(f, lo: float, hi: float, grow: float = 3.0, max_tries: int = 12):
    flo, fhi = f(lo), f(hi)
    tries = 0
    while flo * fhi > 0 and tries < max_tries:
        if abs(flo) < abs(fhi):
            lo = lo / grow
            flo = f(lo)
        else:
            hi = hi * grow
            fhi = f(hi)
        tries += 1
    if flo * fhi > 0:
        raise SimulationError("could not bracket the calibration root", diagnostics={"bracket": (lo, hi), "f": (flo, fhi)})
    return lo, hi


def calibrate_rates(targets, sys: SpinSystem, kind: str | None = None, tol: float = CAL_TOL,
                    max_rounds: int = 8, label: str = "") -> RateCalibration:
    """Find (symmetric-dipolar, uncorrelated-field) rates reproducing target (T1, T_LLS).

    Lifetimes are measured exactly as the experiment drivers measure them
    (inversion recovery and singlet storage curves, each fitted), and the
    two rates are adjusted by alternating bracketed one-dimensional root
    finds, seeded from the channels' initial decay rates.
    """
    t1, t_lls = (float(x) for x in targets)
    if not (t1 > 0 and t_lls > t1):
        raise PhysicsError(f"infeasible targets T1={t1:g} s, T_LLS={t_lls:g} s; model frontier: {model_frontier()}")
    kind = kind or lls_kind(sys)
    g_t1, g_lls = recovery_grid(t1), storage_grid(t_lls)

    c_sym = decay_rate(RelaxationChannel(SYMMETRIC_DIPOLAR, 1.0), thermal_deviation())
    c_unc = decay_rate(RelaxationChannel(UNCORRELATED, 1.0), thermal_deviation())
    s_unc = decay_rate(RelaxationChannel(UNCORRELATED, 1.0), singlet_order())
    b = 1 / (s_unc * t_lls)
    a = max((1 / t1 - c_unc * b) / c_sym, 0.0)

    def lls_residual(bb):
        return measure_t_lls(sys, RelaxationModel(a, bb), g_lls, kind) / t_lls - 1

    def t1_residual(aa):
        return measure_t1(sys, RelaxationModel(aa, b), g_t1) / t1 - 1

    achieved = None
    for rounds in range(1, max_rounds + 1):
        if abs(lls_residual(b)) > tol / 4:
            lo, hi = _bracket_root(lls_residual, b / 2, b * 2)
            b = brentq(lls_residual, lo, hi, rtol=1e-6, xtol=1e-12)
        if abs(t1_residual(a)) > tol / 4:
            hi = max(a * 2, 1 / t1)
            if t1_residual(0.0) < 0:
                raise PhysicsError(f"T1 target {t1:g} s unreachable with uncorrelated rate {b:.4g}/s; {model_frontier()}")
            _, hi = _bracket_root(t1_residual, 0.0, hi)
            a = brentq(t1_residual, 0.0, hi, rtol=1e-6, xtol=1e-12)
        model = RelaxationModel(a, b)
        achieved = (float(measure_t1(sys, model, g_t1)), float(measure_t_lls(sys, model, g_lls, kind)))
        if abs(achieved[0] / t1 - 1) < tol and abs(achieved[1] / t_lls - 1) < tol:
            return RateCalibration((t1, t_lls), achieved, model, kind, rounds, label)
    raise SimulationError(
        f"rate calibration did not converge in {max_rounds} rounds",
        diagnostics={"targets": (t1, t_lls), "achieved": achieved, "rates": (a, b)},
    )
