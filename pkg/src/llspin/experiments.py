"""Drivers for lifetime and diffusion experiments, and the curve container they return."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ensemble import DEFAULT_SAMPLE_LENGTH, ZEnsemble
from .evolution import run_program
from .relaxation import NO_RELAXATION, RelaxationModel
from .sample import PhaseSchedule, transition_ramp
from .sequences import (
    cl_cl,
    encode_decode_interval,
    inversion_recovery,
    lls_diffusion_ip,
    lls_diffusion_pop,
    m2s,
    m2s_s2m,
    ste,
    stellar,
)
from .spin import GAMMA_1H, SpinSystem, thermal_deviation

THERMAL_SIGNAL = 2.0  # <I1x + I2x> right after a (pi/2)_y pulse on I1z + I2z
LIFETIME_KINDS = ("T1", "LLS-pop", "LLS-ip", "transphase")
DIFFUSION_MODES = ("STE", "LLS-pop", "LLS-ip")
BACKENDS = ("analytic", "monte-carlo")

# filter gradients used for the gradient-filtered hybrid experiment
FILTER_DELTA = 320e-6  # s
FILTER_G = 0.025  # T/m
SINE_SHAPE = 2 / math.pi


@dataclass
class ExperimentCurve:
    control: np.ndarray
    signal: np.ndarray
    sigma: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.control = np.asarray(self.control, dtype=float)
        self.signal = np.asarray(self.signal, dtype=float)
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.signal.shape:
                raise ValueError("sigma must match signal length")
        if self.control.ndim != 1 or self.control.shape != self.signal.shape:
            raise ValueError("control and signal must be 1-D and of equal length")
        if np.any(np.diff(self.control) <= 0):
            raise ValueError("control values must be strictly increasing")

    def __len__(self) -> int:
        return len(self.control)

    def to_csv(self, fh=None) -> str:
        """CSV with columns ``control,signal[,sigma]``; floats use shortest round-trip repr."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["control", "signal"] + (["sigma"] if self.sigma is not None else [])
        w.writerow(header)
        for i in range(len(self)):
            row = [repr(float(self.control[i])), repr(float(self.signal[i]))]
            if self.sigma is not None:
                row.append(repr(float(self.sigma[i])))
            w.writerow(row)
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "ExperimentCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:2] != ["control", "signal"]:
            raise ValueError("curve CSV must start with a 'control,signal[,sigma]' header")
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(rows[0]))
        sigma = data[:, 2] if data.shape[1] > 2 else None
        return cls(data[:, 0], data[:, 1], sigma, dict(metadata or {}))


@dataclass(frozen=True)
class DiffusionSettings:
    """Gradient-encoding parameters; ``kappa = gamma q G delta shape``."""

    delta: float = FILTER_DELTA
    big_delta: float = 1.0
    shape: float = SINE_SHAPE
    q: int = 1
    gamma: float = GAMMA_1H
    G: float = 0.0

    def __post_init__(self):
        if not self.big_delta > 0:
            raise ValueError("diffusion interval must be > 0")
        if not self.delta > 0:
            raise ValueError("gradient duration must be > 0")

    def area(self, G=None):
        """Net encoding area (T s / m) that imprints ``kappa`` on single-quantum coherence."""
        g = self.G if G is None else G
        return self.q * np.asarray(g, dtype=float) * self.delta * self.shape

    def kappa(self, G=None):
        return self.gamma * self.area(G)


def filter_area(G: float = FILTER_G, delta: float = FILTER_DELTA, shape: float = SINE_SHAPE) -> float:
    return G * delta * shape


def _map(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))  # ordered results, deterministic reduction


def _add_noise(signal: np.ndarray, noise_sigma: float, seed: int) -> np.ndarray:
    if noise_sigma <= 0:
        return signal
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x6E6F6973]))
    return signal + rng.normal(0.0, noise_sigma, size=signal.shape)


RAMP_FRACTION = 0.5  # share of each storage interval spent heating


def transphase_schedule(sys_pop: SpinSystem, t_start_k: float = 294.0, t_end_k: float = 305.0, ramp_s: float = 5.0,
                        shape: str = "linear", order_map=None) -> PhaseSchedule:
    """Heating ramp that starts when storage begins (right after the M2S block)."""
    kw = {} if order_map is None else {"order_map": order_map}
    return transition_ramp(t_start_k, t_end_k, ramp_s, shape, start=m2s(sys_pop).duration, **kw)


def lifetime_program(kind: str, t: float, sys: SpinSystem, lock: str | None = "ideal"):
    """Program and read-out observable of one T1 / LLS-pop / LLS-ip point."""
    if kind == "T1":
        return inversion_recovery([t])[0], "Fx"
    if kind == "LLS-pop":
        return m2s_s2m(sys, t), "Fx"
    if kind == "LLS-ip":
        return cl_cl(sys, t, lock=lock), "rho2"
    raise ValueError(f"no single-system program for lifetime kind {kind!r}")


def run_lifetime_experiment(
    kind: str,
    storage_times,
    sys: SpinSystem,
    rates: RelaxationModel = NO_RELAXATION,
    seed: int = 0,
    *,
    sys_ip: SpinSystem | None = None,
    rates_ip: RelaxationModel | None = None,
    schedule: PhaseSchedule | None = None,
    grad_area: float | None = None,
    decode_area: float | None = None,
    lock: str | None = "ideal",
    ensemble: str = "ideal",
    n_slices: int = 256,
    ramp_fraction: float = RAMP_FRACTION,
    ramp_temperatures: tuple[float, float] = (294.0, 305.0),
    ramp_shape: str = "linear",
    order_map=None,
    noise_sigma: float = 0.0,
    threads: int = 1,
    resolution: float = 1e-3,
) -> ExperimentCurve:
    """Simulate one scalar signal per storage (or recovery) time.

    ``T1``: inversion recovery, signal ``<I1x+I2x>``.  ``LLS-pop``: M2S, free
    storage, S2M, signal ``<I1x+I2x>``.  ``LLS-ip``: weak-coupling
    preparation, locked storage, readout and in-phase conversion, signal
    ``<I1y-I2y>``.  ``transphase``: gradient-filtered hybrid across a heating
    ramp, signal ``<I1y-I2y>``.  Signals are divided by the thermal one-pulse
    signal.

    Without an explicit ``schedule`` the transphase ramp (``ramp_temperatures``) starts
    with storage and lasts ``ramp_fraction`` of it, so every readout happens
    in the isotropic phase and each point spends the same share of its
    storage in each phase.
    """
    if kind not in LIFETIME_KINDS:
        raise ValueError(f"kind must be one of {LIFETIME_KINDS}")
    times = np.asarray(storage_times, dtype=float)
    if times.size == 0:
        raise ValueError("storage-time grid is empty")
    meta = {"kind": kind, "seed": int(seed), "rates": rates.key, "system": (sys.omega, sys.j, sys.d)}

    if kind != "transphase":
        def point(i):
            prog, obs = lifetime_program(kind, times[i], sys, lock)
            return run_program(thermal_deviation(), prog, sys, channels=rates, observables=(obs,)).acquired[obs]

    else:
        if sys_ip is None or rates_ip is None:
            raise ValueError("transphase needs sys_ip and rates_ip")
        if schedule is None and not 0 < ramp_fraction <= 1:
            raise ValueError("ramp_fraction must lie in (0, 1]")
        area = filter_area() if grad_area is None else grad_area
        meta.update(grad_area=area, decode_area=area if decode_area is None else decode_area)
        if schedule is not None:
            meta.update(schedule=schedule.label,
                        ramp=(schedule.t_start_k, schedule.t_end_k, schedule.ramp_start, schedule.ramp_duration))
        else:
            meta.update(schedule="proportional", ramp_fraction=ramp_fraction)

        def point(i):
            sched = schedule if schedule is not None else transphase_schedule(
                sys, *ramp_temperatures, ramp_s=ramp_fraction * times[i], shape=ramp_shape, order_map=order_map)
            prog = stellar(sys, sys_ip, area, times[i], lock=lock, decode_area=decode_area)
            state = thermal_deviation()
            if ensemble != "ideal":
                seed_i = int(np.random.SeedSequence([int(seed), i]).generate_state(1)[0])
                state = ZEnsemble(state, mode=ensemble, n_slices=n_slices, seed=seed_i)
            traj = run_program(state, prog, sys, schedule=sched, channels=sched.channels(rates, rates_ip),
                               observables=("rho2",), resolution=resolution)
            return traj.acquired["rho2"]

    raw = np.array(_map(point, range(times.size), threads)) / THERMAL_SIGNAL
    signal = _add_noise(raw, noise_sigma, seed)
    sigma = np.full(times.size, noise_sigma) if noise_sigma > 0 else None
    return ExperimentCurve(times, signal, sigma, meta)


def diffusion_program(mode: str, sys: SpinSystem, area: float, big_delta: float, lock: str | None = "ideal"):
    """Encode/store/decode program whose encode-to-decode interval equals ``big_delta``."""
    if mode == "STE":
        build = lambda store: ste(area, store, sys=sys)  # noqa: E731
        obs = "Fx"
    elif mode == "LLS-pop":
        build = lambda store: lls_diffusion_pop(sys, area, store)  # noqa: E731
        obs = "Fx"
    elif mode == "LLS-ip":
        build = lambda store: lls_diffusion_ip(sys, area, store, lock)  # noqa: E731
        obs = "rho2"
    else:
        raise ValueError(f"mode must be one of {DIFFUSION_MODES}")
    overhead = encode_decode_interval(build(0.0))
    store = big_delta - overhead
    if store < 0:
        raise ValueError(f"diffusion interval {big_delta} s is shorter than the transfer blocks ({overhead:.4g} s)")
    return build(store), obs


def _ratio_and_sigma(sig: np.ndarray, ref: np.ndarray) -> tuple[float, float]:
    """Ratio estimator ``sum(sig) / sum(ref)`` and its delta-method standard error."""
    n = sig.size
    ratio = float(np.sum(sig) / np.sum(ref))
    resid = sig - ratio * ref
    se = math.sqrt(float(np.sum(resid**2)) / (n * (n - 1))) / abs(float(np.mean(ref))) if n > 1 else math.nan
    return ratio, se


def run_diffusion_experiment(
    mode: str,
    gradients,
    settings: DiffusionSettings,
    d_true: float,
    sys: SpinSystem,
    seed: int = 0,
    *,
    backend: str = "analytic",
    n_slices: int = 10_000,
    sample_length: float = DEFAULT_SAMPLE_LENGTH,
    rates: RelaxationModel = NO_RELAXATION,
    lock: str | None = "ideal",
    threads: int = 1,
) -> ExperimentCurve:
    """Diffusion attenuation ``S(G; D) / S(G; 0)`` over a gradient sweep.

    Each point is simulated twice on the same initial ensemble, with and
    without translational diffusion, so the ratio isolates the attenuation
    of the encoded pathway.  ``backend="analytic"`` uses an infinite sample
    with exact Gaussian attenuation of every pathway; ``"monte-carlo"``
    random-walks ``n_slices`` explicit slices and also returns the standard
    error of each ratio.
    """
    if mode not in DIFFUSION_MODES:
        raise ValueError(f"mode must be one of {DIFFUSION_MODES}")
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    if d_true < 0:
        raise ValueError("diffusion coefficient must be >= 0")
    grads = np.asarray(gradients, dtype=float)
    if grads.size == 0:
        raise ValueError("gradient grid is empty")

    def point(i):
        prog, obs = diffusion_program(mode, sys, float(settings.area(grads[i])), settings.big_delta, lock)
        if backend == "analytic":
            state = ZEnsemble(thermal_deviation(), mode="ideal")
        else:
            seed_i = int(np.random.SeedSequence([int(seed), i]).generate_state(1)[0])
            state = ZEnsemble(thermal_deviation(), mode="slices", n_slices=n_slices, sample_length=sample_length, seed=seed_i)
        kw = dict(channels=rates, observables=(obs,))
        with_d = run_program(state, prog, sys, diffusion=d_true, **kw)
        ref = run_program(state, prog, sys, diffusion=0.0, **kw)
        if backend == "analytic":
            return with_d.acquired[obs] / ref.acquired[obs], 0.0
        return _ratio_and_sigma(with_d.slice_signals[obs], ref.slice_signals[obs])

    out = _map(point, range(grads.size), threads)
    ratio = np.array([r for r, _ in out])
    sigma = np.array([s for _, s in out]) if backend == "monte-carlo" else None
    meta = {"kind": f"diffusion-{mode}", "seed": int(seed), "backend": backend, "settings": settings,
            "d_true": d_true, "n_slices": n_slices if backend == "monte-carlo" else None}
    return ExperimentCurve(grads, ratio, sigma, meta)
