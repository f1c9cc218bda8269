"""Run configuration: flat ``[section]`` / ``key = value`` files.

Sections and keys (all optional unless noted)::

    [system]        omega_hz (required), j_hz (required), d_hz | temperature_k, gamma
    [schedule]      t_start_k, t_end_k, ramp_s, shape, t_c_k, beta, s0, d_max_hz, anchor_k, anchor_d_hz, table
    [relaxation]    mode = none | explicit | calibrate
                    symmetric, uncorrelated, correlated           (explicit)
                    t1, t_lls                                     (calibrate)
                    ip_symmetric, ip_uncorrelated, ip_correlated  (explicit, transphase)
                    ip_t1, ip_t_lls                               (calibrate, transphase)
    [experiment]    kind (required) = T1 | LLS-pop | LLS-ip | transphase | diffusion | trajectory
                    times, gradients, seed, ensemble, n_slices, noise_sigma, resolution, lock,
                    grad_area, decode_area, ramp_fraction,
                    diffusion_mode, backend, d_true, delta, big_delta, shape_factor, q, sample_length,
                    program, storage_t, observables, oversample
    [output]        directory, formats, trajectory

Grids are comma lists (``0.5, 1, 2``) or ``linspace(start, stop, n)``.
"""

from __future__ import annotations

import configparser
import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .experiments import BACKENDS, DIFFUSION_MODES, FILTER_DELTA, LIFETIME_KINDS, RAMP_FRACTION, SINE_SHAPE
from .program import LOCK_MODES
from .sample import BETA, D_MAX, T_C, OrderParameterMap
from .spin import GAMMA_1H, OBSERVABLE_NAMES

EXPERIMENT_KINDS = LIFETIME_KINDS + ("diffusion", "trajectory")
RELAXATION_MODES = ("none", "explicit", "calibrate")
ENSEMBLE_MODES = ("ideal", "continuum", "slices")
FORMATS = ("csv",)

_KEYS = {
    "system": {"omega_hz", "j_hz", "d_hz", "temperature_k", "gamma"},
    "schedule": {"t_start_k", "t_end_k", "ramp_s", "shape", "t_c_k", "beta", "s0", "d_max_hz", "anchor_k",
                 "anchor_d_hz", "table"},
    "relaxation": {"mode", "symmetric", "uncorrelated", "correlated", "t1", "t_lls", "ip_symmetric",
                   "ip_uncorrelated", "ip_correlated", "ip_t1", "ip_t_lls"},
    "experiment": {"kind", "times", "gradients", "seed", "ensemble", "n_slices", "noise_sigma", "resolution",
                   "lock", "grad_area", "decode_area", "ramp_fraction", "diffusion_mode", "backend", "d_true",
                   "delta", "big_delta", "shape_factor", "q", "sample_length", "program", "storage_t",
                   "observables", "oversample"},
    "output": {"directory", "formats", "trajectory"},
}
_LINSPACE = re.compile(r"linspace\(\s*([^,]+),([^,]+),([^,]+)\)\Z")


def parse_grid(text: str, name: str = "grid") -> np.ndarray:
    text = text.strip()
    m = _LINSPACE.match(text)
    try:
        if m:
            n = int(m.group(3))
            if n < 1:
                raise ConfigError(f"{name}: linspace needs n >= 1")
            grid = np.linspace(float(m.group(1)), float(m.group(2)), n)
        else:
            grid = np.array([float(x) for x in text.split(",") if x.strip()], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse grid {text!r} ({exc})") from None
    if grid.size == 0:
        raise ConfigError(f"{name}: grid is empty")
    if not np.all(np.isfinite(grid)):
        raise ConfigError(f"{name}: grid values must be finite")
    return grid


@dataclass
class RunConfig:
    system: dict
    schedule: dict
    relaxation: dict
    experiment: dict
    output: dict
    source: str = ""
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()

    @property
    def kind(self) -> str:
        return self.experiment["kind"]

    @property
    def seed(self) -> int | None:
        return self.experiment.get("seed")

    @property
    def needs_seed(self) -> bool:
        e = self.experiment
        return (e.get("backend") == "monte-carlo" or e.get("ensemble", "ideal") != "ideal"
                or e.get("noise_sigma", 0.0) > 0)

    def order_map(self) -> OrderParameterMap:
        s = self.schedule
        try:
            if "table" in s:
                return OrderParameterMap(table=_read_table(s["table"]), d_max=s.get("d_max_hz", D_MAX))
        except ValueError as exc:
            raise ConfigError(f"[schedule] table: {exc}") from None
        kw = dict(t_c=s.get("t_c_k", T_C), beta=s.get("beta", BETA), d_max=s.get("d_max_hz", D_MAX))
        if "s0" in s:
            kw["s0"] = s["s0"]
        if "anchor_k" in s or "anchor_d_hz" in s:
            kw["anchor"] = (s.get("anchor_k", 294.0), s.get("anchor_d_hz", 640.0))
        try:
            return OrderParameterMap(**kw)
        except ValueError as exc:
            raise ConfigError(f"[schedule]: {exc}") from None

    def spin_system(self, temperature: float | None = None):
        from .spin import SpinSystem

        sysc = self.system
        if temperature is None and "d_hz" in sysc:
            d = sysc["d_hz"]
        else:
            t = temperature if temperature is not None else sysc.get("temperature_k")
            if t is None:
                raise ConfigError("[system] needs d_hz or temperature_k")
            d = self.order_map().d(t)
        return SpinSystem(sysc["omega_hz"], sysc["j_hz"], d, gamma=sysc["gamma"])


def _read_table(path: Path):
    rows = []
    for ln in path.read_text().splitlines():
        ln = ln.split("#", 1)[0].strip()
        if not ln or not (ln[0].isdigit() or ln[0] in "+-."):
            continue
        parts = [p for p in re.split(r"[,\s]+", ln) if p]
        if len(parts) != 2:
            raise ConfigError(f"{path}: order-parameter table rows need two columns (T, S)")
        rows.append((float(parts[0]), float(parts[1])))
    return rows


def _float(sec: str, key: str, text: str, *, positive=False, nonneg=False) -> float:
    try:
        x = float(text)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected a number, got {text!r}") from None
    if not math.isfinite(x):
        raise ConfigError(f"[{sec}] {key}: must be finite")
    if positive and not x > 0:
        raise ConfigError(f"[{sec}] {key}: must be > 0")
    if nonneg and x < 0:
        raise ConfigError(f"[{sec}] {key}: must be >= 0")
    return x


def _int(sec: str, key: str, text: str, lo: int = 0) -> int:
    try:
        x = int(text)
    except ValueError:
        raise ConfigError(f"[{sec}] {key}: expected an integer, got {text!r}") from None
    if x < lo:
        raise ConfigError(f"[{sec}] {key}: must be >= {lo}")
    return x


def _choice(sec: str, key: str, text: str, choices) -> str:
    if text not in choices:
        raise ConfigError(f"[{sec}] {key}: {text!r} not one of {', '.join(choices)}")
    return text


def _bool(sec: str, key: str, text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{sec}] {key}: expected true/false, got {text!r}")


def _path(sec: str, key: str, text: str, base: Path) -> Path:
    p = Path(text)
    if not p.is_absolute():
        p = base / p
    if not p.is_file():
        raise ConfigError(f"[{sec}] {key}: file not found: {p}")
    return p


_SYSTEM_FLOATS = {"omega_hz": {}, "j_hz": {}, "d_hz": {}, "temperature_k": {"positive": True},
                  "gamma": {"positive": True}}
_SCHEDULE_FLOATS = {"t_start_k": {"positive": True}, "t_end_k": {"positive": True}, "ramp_s": {"nonneg": True},
                    "t_c_k": {"positive": True}, "beta": {"positive": True}, "s0": {"nonneg": True},
                    "d_max_hz": {"nonneg": True}, "anchor_k": {"positive": True}, "anchor_d_hz": {"nonneg": True}}
_RATE_KEYS = ("symmetric", "uncorrelated", "correlated", "ip_symmetric", "ip_uncorrelated", "ip_correlated")
_TARGET_KEYS = ("t1", "t_lls", "ip_t1", "ip_t_lls")
_EXP_FLOATS = {"noise_sigma": {"nonneg": True}, "resolution": {"positive": True}, "grad_area": {},
               "decode_area": {}, "ramp_fraction": {"positive": True}, "d_true": {"nonneg": True},
               "delta": {"positive": True}, "big_delta": {"positive": True}, "shape_factor": {"positive": True},
               "sample_length": {"positive": True}, "storage_t": {"nonneg": True}}


def load_config(path, seed: int | None = None, out: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent, seed=seed, out=out)


def parse_config(text: str, base_dir: Path | None = None, seed: int | None = None, out: str | None = None) -> RunConfig:
    """Parse and validate a run configuration; ``seed`` / ``out`` override the file."""
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in _KEYS[sec]:
                raise ConfigError(f"[{sec}] unknown key {key!r}")
    raw = {sec: dict(cp[sec]) if cp.has_section(sec) else {} for sec in _KEYS}

    system = {}
    for key, kw in _SYSTEM_FLOATS.items():
        if key in raw["system"]:
            system[key] = _float("system", key, raw["system"][key], **kw)
    for key in ("omega_hz", "j_hz"):
        if key not in system:
            raise ConfigError(f"[system] {key} is required")
    system.setdefault("gamma", GAMMA_1H)

    schedule = {}
    for key, kw in _SCHEDULE_FLOATS.items():
        if key in raw["schedule"]:
            schedule[key] = _float("schedule", key, raw["schedule"][key], **kw)
    if "shape" in raw["schedule"]:
        schedule["shape"] = _choice("schedule", "shape", raw["schedule"]["shape"], ("linear", "sigmoid"))
    if "table" in raw["schedule"]:
        schedule["table"] = _path("schedule", "table", raw["schedule"]["table"], base)

    rel = {"mode": _choice("relaxation", "mode", raw["relaxation"].get("mode", "none"), RELAXATION_MODES)}
    for key in _RATE_KEYS:
        if key in raw["relaxation"]:
            rel[key] = _float("relaxation", key, raw["relaxation"][key], nonneg=True)
    for key in _TARGET_KEYS:
        if key in raw["relaxation"]:
            rel[key] = _float("relaxation", key, raw["relaxation"][key], positive=True)
    if rel["mode"] == "calibrate" and not ("t1" in rel and "t_lls" in rel):
        raise ConfigError("[relaxation] mode = calibrate needs t1 and t_lls")

    er = raw["experiment"]
    if "kind" not in er:
        raise ConfigError("[experiment] kind is required")
    exp = {"kind": _choice("experiment", "kind", er["kind"], EXPERIMENT_KINDS)}
    for key, kw in _EXP_FLOATS.items():
        if key in er:
            exp[key] = _float("experiment", key, er[key], **kw)
    for key, lo in (("n_slices", 1), ("q", 1), ("oversample", 0)):
        if key in er:
            exp[key] = _int("experiment", key, er[key], lo)
    if seed is not None:
        exp["seed"] = int(seed)
    elif "seed" in er:
        exp["seed"] = _int("experiment", "seed", er["seed"])
    exp["ensemble"] = _choice("experiment", "ensemble", er.get("ensemble", "ideal"), ENSEMBLE_MODES)
    exp["backend"] = _choice("experiment", "backend", er.get("backend", "analytic"), BACKENDS)
    exp["lock"] = _choice("experiment", "lock", er.get("lock", "ideal"), LOCK_MODES + ("none",))
    exp["diffusion_mode"] = _choice("experiment", "diffusion_mode", er.get("diffusion_mode", "STE"), DIFFUSION_MODES)
    exp.setdefault("delta", FILTER_DELTA)
    exp.setdefault("shape_factor", SINE_SHAPE)
    exp.setdefault("ramp_fraction", RAMP_FRACTION)
    if exp["ramp_fraction"] > 1:
        raise ConfigError("[experiment] ramp_fraction must lie in (0, 1]")
    if "times" in er:
        exp["times"] = parse_grid(er["times"], "[experiment] times")
    if "gradients" in er:
        exp["gradients"] = parse_grid(er["gradients"], "[experiment] gradients")
    if "program" in er:
        exp["program"] = er["program"] if er["program"] in ("m2s-s2m",) else _path("experiment", "program", er["program"], base)
    if "observables" in er:
        names = [x.strip() for x in er["observables"].split(",") if x.strip()]
        for n in names:
            if n not in OBSERVABLE_NAMES:
                raise ConfigError(f"[experiment] observables: unknown observable {n!r}")
        exp["observables"] = tuple(names)

    kind = exp["kind"]
    if kind in LIFETIME_KINDS and "times" not in exp:
        raise ConfigError(f"[experiment] kind = {kind} needs a times grid")
    if kind == "diffusion":
        for key in ("gradients", "d_true", "big_delta"):
            if key not in exp:
                raise ConfigError(f"[experiment] kind = diffusion needs {key}")
    if kind == "trajectory" and "program" not in exp:
        raise ConfigError("[experiment] kind = trajectory needs program (a pulse-language file or m2s-s2m)")
    if kind == "transphase":
        if rel["mode"] == "calibrate" and not ("ip_t1" in rel and "ip_t_lls" in rel):
            raise ConfigError("[relaxation] transphase calibration needs ip_t1 and ip_t_lls")
    if "d_hz" not in system and "temperature_k" not in system and kind != "transphase":
        raise ConfigError("[system] needs d_hz or temperature_k")

    outc = {"directory": out if out is not None else raw["output"].get("directory", "out")}
    formats = tuple(x.strip() for x in raw["output"].get("formats", "csv").split(",") if x.strip())
    for f in formats:
        _choice("output", "formats", f, FORMATS)
    outc["formats"] = formats
    outc["trajectory"] = _bool("output", "trajectory", raw["output"].get("trajectory", "false"))

    cfg = RunConfig(system, schedule, rel, exp, outc, source=text, base_dir=base)
    if cfg.needs_seed and cfg.seed is None:
        raise ConfigError("a seed is required when Monte Carlo sampling or noise is enabled ([experiment] seed or --seed)")
    if "table" in schedule:
        cfg.order_map()  # validate the table now
    return cfg

