"""Command-line entry point: ``llspin {params,run,parse,calibrate}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import calibrate_rates
from .config import RunConfig, load_config
from .errors import ConfigError, PhysicsError, ProgramError, SimulationError
from .evolution import run_program
from .experiments import (
    DiffusionSettings,
    lifetime_program,
    run_diffusion_experiment,
    run_lifetime_experiment,
    transphase_schedule,
)
from .fitting import fit_gaussian_attenuation, fit_inversion_recovery, fit_monoexponential
from .pulselang import parse_program, serialize
from .relaxation import NO_RELAXATION, RelaxationModel
from .sequences import m2s_s2m, resonance_params
from .spin import hamiltonian, thermal_deviation

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_SIMULATION = 0, 2, 3, 4
TRAJECTORY_OBSERVABLES = ("rho1", "rho2", "rho3", "rho4", "rho5", "Fx")

log = logging.getLogger("llspin")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _kv_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in rows:
        w.writerow([k, _fmt(v)])
    return buf.getvalue()


def _trajectory_csv(traj) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "event"] + list(traj.values))
    for row in traj.to_rows():
        w.writerow([_fmt(row[0]), row[1]] + [_fmt(float(x)) for x in row[2:]])
    return buf.getvalue()


class _Outputs:
    """Collects output files and writes them with a manifest of content hashes."""

    def __init__(self, directory: Path):
        self.dir = Path(directory)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def write(self, manifest: dict):
        self.dir.mkdir(parents=True, exist_ok=True)
        hashes = {}
        for name, text in self.files.items():
            data = text.encode()
            (self.dir / name).write_bytes(data)
            hashes[name] = hashlib.sha256(data).hexdigest()
        manifest = dict(manifest, files=hashes)
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _diagnostics(directory: Path, exc: Exception):
    directory.mkdir(parents=True, exist_ok=True)
    info = {"error": type(exc).__name__, "message": str(exc), "diagnostics": getattr(exc, "diagnostics", {})}
    path = directory / "diagnostics.json"
    path.write_text(json.dumps(info, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _rates(cfg: RunConfig, sys, prefix: str = "", targets: tuple | None = None) -> RelaxationModel:
    rel = cfg.relaxation
    if rel["mode"] == "none":
        return NO_RELAXATION
    if rel["mode"] == "explicit":
        return RelaxationModel(*(rel.get(prefix + k, 0.0) for k in ("symmetric", "uncorrelated", "correlated")))
    if targets is None:
        targets = (rel[prefix + "t1"], rel[prefix + "t_lls"])
    return calibrate_rates(targets, sys).model


def _ramp_temperatures(cfg: RunConfig) -> tuple[float, float]:
    s = cfg.schedule
    return s.get("t_start_k", 294.0), s.get("t_end_k", 305.0)


def _run_lifetime(cfg: RunConfig, threads: int, out: _Outputs) -> dict:
    e = cfg.experiment
    kind = e["kind"]
    lock = None if e["lock"] == "none" else e["lock"]
    seed = cfg.seed or 0
    common = dict(seed=seed, lock=lock, noise_sigma=e.get("noise_sigma", 0.0), threads=threads)
    if kind == "transphase":
        t_pop, t_ip = _ramp_temperatures(cfg)
        omap = cfg.order_map()
        sys_pop, sys_ip = cfg.spin_system(t_pop), cfg.spin_system(t_ip)
        rates = _rates(cfg, sys_pop)
        rates_ip = _rates(cfg, sys_ip, prefix="ip_")
        schedule = None
        if "ramp_s" in cfg.schedule:
            schedule = transphase_schedule(sys_pop, t_pop, t_ip, cfg.schedule["ramp_s"],
                                           cfg.schedule.get("shape", "linear"), omap)
        curve = run_lifetime_experiment(
            kind, e["times"], sys_pop, rates, sys_ip=sys_ip, rates_ip=rates_ip, schedule=schedule,
            grad_area=e.get("grad_area"), decode_area=e.get("decode_area"), ensemble=e["ensemble"],
            n_slices=e.get("n_slices", 256), ramp_fraction=e["ramp_fraction"], ramp_temperatures=(t_pop, t_ip),
            ramp_shape=cfg.schedule.get("shape", "linear"), order_map=omap,
            resolution=e.get("resolution", 1e-3), **common)
        report = [("rates_symmetric", rates.symmetric), ("rates_uncorrelated", rates.uncorrelated),
                  ("ip_rates_symmetric", rates_ip.symmetric), ("ip_rates_uncorrelated", rates_ip.uncorrelated)]
    else:
        sys_ = cfg.spin_system()
        rates = _rates(cfg, sys_)
        curve = run_lifetime_experiment(kind, e["times"], sys_, rates, **common)
        report = [("rates_symmetric", rates.symmetric), ("rates_uncorrelated", rates.uncorrelated),
                  ("rates_correlated", rates.correlated)]
        if cfg.output["trajectory"]:
            prog, _ = lifetime_program(kind, float(e["times"][0]), sys_, lock)
            traj = run_program(thermal_deviation(), prog, sys_, channels=rates, observables=TRAJECTORY_OBSERVABLES,
                               oversample=e.get("oversample", 0))
            out.add("trajectory.csv", _trajectory_csv(traj))
    out.add("curve.csv", curve.to_csv())
    if kind == "T1":
        fit = fit_inversion_recovery(curve)
        report += [("fit_M0", fit["M0"]), ("fit_T1", fit["T1"]), ("fit_T1_stderr", fit["stderr"]["T1"])]
    else:
        fit = fit_monoexponential(curve)
        report += [("fit_amplitude", fit["amplitude"]), ("fit_lifetime", fit["lifetime"]),
                   ("fit_lifetime_stderr", fit["stderr"]["lifetime"])]
    out.add("fit.csv", _kv_csv([("kind", kind)] + report))
    return {"kind": kind}


def _run_diffusion(cfg: RunConfig, threads: int, out: _Outputs) -> dict:
    e = cfg.experiment
    sys_ = cfg.spin_system()
    settings = DiffusionSettings(delta=e["delta"], big_delta=e["big_delta"], shape=e["shape_factor"],
                                 q=e.get("q", 1), gamma=cfg.system["gamma"])
    kw = dict(backend=e["backend"], n_slices=e.get("n_slices", 10_000), rates=_rates(cfg, sys_),
              lock=None if e["lock"] == "none" else e["lock"], threads=threads)
    if "sample_length" in e:
        kw["sample_length"] = e["sample_length"]
    curve = run_diffusion_experiment(e["diffusion_mode"], e["gradients"], settings, e["d_true"], sys_,
                                     seed=cfg.seed or 0, **kw)
    out.add("curve.csv", curve.to_csv())
    fit = fit_gaussian_attenuation(curve, settings)
    out.add("fit.csv", _kv_csv([("kind", f"diffusion-{e['diffusion_mode']}"), ("backend", e["backend"]),
                                ("d_true", e["d_true"]), ("fit_D", fit["D"]), ("fit_D_stderr", fit["stderr"]["D"]),
                                ("fit_amplitude", fit["amplitude"])]))
    return {"kind": "diffusion"}


def _run_trajectory(cfg: RunConfig, threads: int, out: _Outputs) -> dict:
    e = cfg.experiment
    sys_ = cfg.spin_system()
    if e["program"] == "m2s-s2m":
        prog = m2s_s2m(sys_, e.get("storage_t", 0.0))
    else:
        prog = parse_program(Path(e["program"]).read_text(), label=Path(e["program"]).stem)
    obs = e.get("observables", TRAJECTORY_OBSERVABLES)
    traj = run_program(thermal_deviation(), prog, sys_, channels=_rates(cfg, sys_), observables=obs,
                       oversample=e.get("oversample", 0), resolution=e.get("resolution", 1e-3))
    out.add("trajectory.csv", _trajectory_csv(traj))
    out.add("program.txt", serialize(prog))
    return {"kind": "trajectory"}


def cmd_params(args) -> int:
    cfg = load_config(args.config)
    sys_ = cfg.spin_system()
    p = resonance_params(sys_)
    evals = np.linalg.eigvalsh(hamiltonian(sys_)) / (2 * math.pi)
    rows = [
        ("omega_hz", sys_.omega), ("j_hz", sys_.j), ("d_hz", sys_.d),
        ("theta_rad", p.theta), ("theta_deg", math.degrees(p.theta)), ("nu_eff_hz", p.nu_eff),
        ("tau_s", p.tau), ("tau_us", p.tau * 1e6), ("n1", p.n1), ("n2", p.n2),
    ] + [(f"eigenvalue_{i}_hz", v) for i, v in enumerate(evals)]
    for k, v in rows:
        print(f"{k} = {_fmt(v)}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    out = _Outputs(Path(cfg.output["directory"]))
    try:
        kind = cfg.kind
        if kind == "diffusion":
            info = _run_diffusion(cfg, args.threads, out)
        elif kind == "trajectory":
            info = _run_trajectory(cfg, args.threads, out)
        else:
            info = _run_lifetime(cfg, args.threads, out)
    except SimulationError as exc:
        path = _diagnostics(out.dir, exc)
        print(f"simulation failed: {exc} (diagnostics in {path})", file=sys.stderr)
        return EXIT_SIMULATION
    manifest = {"tool": "llspin", "version": __version__, "config_sha256": cfg.sha256,
                "seed": cfg.seed, "kind": info["kind"], "format": args.format}
    out.write(manifest)
    print(f"wrote {len(out.files) + 1} files to {out.dir}")
    return EXIT_OK


def cmd_parse(args) -> int:
    try:
        text = Path(args.file).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.file}: {exc}") from None
    prog = parse_program(text)
    sys.stdout.write(serialize(prog))
    print(f"# duration_s = {_fmt(prog.duration)}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config, seed=args.seed, out=args.out)
    rel = cfg.relaxation
    if not ("t1" in rel and "t_lls" in rel):
        raise ConfigError("calibrate needs [relaxation] t1 and t_lls")
    jobs = []
    if cfg.kind == "transphase":
        t_pop, t_ip = _ramp_temperatures(cfg)
        jobs.append(("pop", cfg.spin_system(t_pop), (rel["t1"], rel["t_lls"])))
        if "ip_t1" in rel and "ip_t_lls" in rel:
            jobs.append(("ip", cfg.spin_system(t_ip), (rel["ip_t1"], rel["ip_t_lls"])))
    else:
        jobs.append(("main", cfg.spin_system(), (rel["t1"], rel["t_lls"])))
    rows = []
    try:
        for name, sys_, targets in jobs:
            cal = calibrate_rates(targets, sys_, label=name)
            rows += [(f"{name}_{k}", v) for k, v in cal.report().items() if k != "label"]
    except SimulationError as exc:
        path = _diagnostics(Path(cfg.output["directory"]), exc)
        print(f"calibration failed: {exc} (diagnostics in {path})", file=sys.stderr)
        return EXIT_SIMULATION
    text = _kv_csv(rows)
    sys.stdout.write(text)
    if args.out is not None:
        out = _Outputs(Path(cfg.output["directory"]))
        out.add("calibration.csv", text)
        out.write({"tool": "llspin", "version": __version__, "config_sha256": cfg.sha256, "seed": cfg.seed,
                   "kind": "calibration", "format": args.format})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run configuration file")
    common.add_argument("--seed", type=int, default=None, help="seed (overrides [experiment] seed)")
    common.add_argument("--out", default=None, help="output directory (overrides [output] directory)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent sweep points")
    common.add_argument("--format", choices=("csv",), default="csv")

    ap = argparse.ArgumentParser(prog="llspin", description="Two-spin singlet-state NMR simulations.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("params", parents=[common], help="resonance parameters and energy levels").set_defaults(fn=cmd_params)
    sub.add_parser("run", parents=[common], help="run the configured experiment").set_defaults(fn=cmd_run)
    sub.add_parser("calibrate", parents=[common], help="calibrate relaxation rates to target lifetimes").set_defaults(
        fn=cmd_calibrate)
    p = sub.add_parser("parse", help="parse a pulse program and print its canonical form")
    p.add_argument("file")
    p.set_defaults(fn=cmd_parse)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.fn(args)
    except (ConfigError, ProgramError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsError as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except ValueError as exc:  # invalid values reaching the library (e.g. too short a diffusion interval)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
