"""Command line front end: single runs, (p, T) sweeps, limit checks.

The configuration is a JSON file with nested sections, every field of which
has a default mirroring the standard experimental setup (2:1 resonant spring,
tolerance 1.49012e-8, reset window 100 s).  Command line flags override file
values.  All outputs are plain CSV files plus a JSON manifest that echoes the
full configuration, so any run can be reproduced from its output directory.

Exit codes: 0 on success, 2 on configuration or I/O errors, 3 on numerical
failure (instability, step-size collapse, failed limit check).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .averaging import AveragingConfig, build_tables
from .diagnostics import (
    exact_baseline,
    check_limit_T0,
    check_limit_Tinf,
    l2_relative_errors,
    run_error_sweep,
    write_trajectory_csv,
)
from .integrators import (
    NonFiniteStateError,
    SolverSettings,
    StepSizeUnderflowError,
    integrate_with_reset,
)
from .models import SpringParams, back_transform, initial_state, swing_spring_model

__all__ = ["ConfigError", "RunConfig", "SWEEP_PRESETS", "main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

MODES = ("simulate", "sweep", "limits", "compare")


def _small_T_grid() -> list[float]:
    return [0.001 + 0.0025 * k for k in range(20)] + [0.05]


def _mid_T_grid() -> list[float]:
    return [0.05 * k for k in range(1, 11)]


SWEEP_PRESETS = {
    "small-T": {"p_values": list(range(6)), "T_values": _small_T_grid()},
    "mid-T": {"p_values": list(range(11)), "T_values": _mid_T_grid()},
    "reset-study": {
        "p_values": list(range(11)),
        "T_values": _mid_T_grid(),
        "reset_windows": [0.1, 100.0],
    },
}


class ConfigError(ValueError):
    """Aggregated configuration problems; one message per offending field."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))
        self.problems = problems


@dataclass
class RunConfig:
    """Everything a run needs; defaults reproduce the standard setup."""

    mode: str = "simulate"
    # spring parameters
    mass: float = 1.0
    length: float = 1.0
    gravity: float = math.pi ** 2
    spring_k: float = 4.0 * math.pi ** 2
    positions: tuple = (0.006, 0.0, 0.012)
    velocities: tuple = (0.0, 0.00489, 0.0)
    # averaging
    p: int = 6
    T: float = 0.2
    # time integration
    tf: float = 167.0
    reset_dt: float = 100.0
    rtol: float = 1.49012e-8
    atol: float = 1.49012e-8
    sample_dt: float = 0.01
    # sweep grids
    preset: Optional[str] = None
    p_values: Optional[list] = None
    T_values: Optional[list] = None
    # limit checks
    limit_T_small: float = 0.005
    limit_T0_horizon: float = 10.0
    limit_T_large: float = 10.0
    limit_Tinf_horizon: float = 167.0
    # bookkeeping
    out_dir: str = "out"
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)

    _SECTIONS = {
        "mode": None,
        "jobs": None,
        "spring": ("mass", "length", "gravity", "spring_k"),
        "initial": ("positions", "velocities"),
        "averaging": ("p", "T"),
        "run": ("tf", "reset_dt"),
        "solver": ("rtol", "atol", "sample_dt"),
        "sweep": ("preset", "p_values", "T_values"),
        "limits": ("limit_T_small", "limit_T0_horizon", "limit_T_large", "limit_Tinf_horizon"),
        "output": ("out_dir",),
    }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        problems: list[str] = []
        kwargs: dict = {}
        for key, value in data.items():
            if key not in cls._SECTIONS:
                problems.append(f"unknown section {key!r}")
                continue
            fields = cls._SECTIONS[key]
            if fields is None:
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                problems.append(f"section {key!r} must be a mapping")
                continue
            for sub, subval in value.items():
                target = sub if sub in fields else f"limit_{sub}" if f"limit_{sub}" in fields else None
                if key == "output" and sub == "dir":
                    target = "out_dir"
                if target is None or target not in fields:
                    problems.append(f"unknown field {key}.{sub}")
                    continue
                kwargs[target] = subval
        if problems:
            raise ConfigError(problems)
        cfg = cls(**kwargs)
        cfg.normalize()
        return cfg

    def normalize(self) -> None:
        if isinstance(self.reset_dt, str):
            self.reset_dt = float(self.reset_dt)
        self.positions = tuple(float(v) for v in np.asarray(self.positions, dtype=float).ravel())
        self.velocities = tuple(float(v) for v in np.asarray(self.velocities, dtype=float).ravel())

    def to_dict(self) -> dict:
        out: dict = {"mode": self.mode, "jobs": self.jobs}
        for section, fields in self._SECTIONS.items():
            if fields is None:
                continue
            sec: dict = {}
            for f in fields:
                key = f[len("limit_"):] if f.startswith("limit_") else ("dir" if f == "out_dir" else f)
                val = getattr(self, f)
                if isinstance(val, tuple):
                    val = list(val)
                if isinstance(val, float) and math.isinf(val):
                    val = "inf"
                sec[key] = val
            out[section] = sec
        return out

    def validate(self) -> None:
        problems: list[str] = []
        if self.mode not in MODES:
            problems.append(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("mass", "length", "gravity", "spring_k"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                problems.append(f"spring.{name} must be positive and finite, got {v!r}")
        for name in ("positions", "velocities"):
            if len(getattr(self, name)) != 3:
                problems.append(f"initial.{name} must have three entries")
        if not (isinstance(self.p, int) and 0 <= self.p <= 12):
            problems.append(f"averaging.p must be an integer in [0, 12], got {self.p!r}")
        if not (isinstance(self.T, (int, float)) and self.T > 0 and math.isfinite(self.T)):
            problems.append(f"averaging.T must be positive and finite, got {self.T!r}")
        if not (isinstance(self.tf, (int, float)) and self.tf > 0 and math.isfinite(self.tf)):
            problems.append(f"run.tf must be positive and finite, got {self.tf!r}")
        if not (isinstance(self.reset_dt, (int, float)) and self.reset_dt > 0):
            problems.append(f"run.reset_dt must be positive (inf allowed), got {self.reset_dt!r}")
        for name in ("rtol", "atol", "sample_dt"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                problems.append(f"solver.{name} must be positive and finite, got {v!r}")
        if isinstance(self.tf, (int, float)) and isinstance(self.sample_dt, (int, float)):
            if 0 < self.tf < self.sample_dt:
                problems.append(f"run.tf={self.tf} is smaller than solver.sample_dt={self.sample_dt}")
        if not (isinstance(self.jobs, int) and self.jobs >= 1):
            problems.append(f"jobs must be a positive integer, got {self.jobs!r}")
        if self.mode == "sweep":
            if self.preset is not None and self.preset not in SWEEP_PRESETS:
                problems.append(
                    f"unknown preset {self.preset!r}; valid presets: {sorted(SWEEP_PRESETS)}"
                )
            if self.preset is None and (self.p_values is None or self.T_values is None):
                problems.append("sweep mode needs either a preset or explicit p_values and T_values")
        if problems:
            raise ConfigError(problems)

    def spring_params(self) -> SpringParams:
        return SpringParams(
            mass=self.mass, length=self.length, gravity=self.gravity, spring_k=self.spring_k
        )

    def solver_settings(self) -> SolverSettings:
        return SolverSettings(rtol=self.rtol, atol=self.atol, sample_dt=self.sample_dt)


def _load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config file {path}: {exc}"])
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file {path} is not valid JSON: {exc}"])
    if not isinstance(data, dict):
        raise ConfigError([f"config file {path} must contain a JSON object"])
    return RunConfig.from_dict(data)


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> None:
    cfg.mode = args.mode
    overrides = {
        "out": "out_dir",
        "p": "p",
        "T": "T",
        "reset_dt": "reset_dt",
        "tf": "tf",
        "rtol": "rtol",
        "atol": "atol",
        "sample_dt": "sample_dt",
        "preset": "preset",
        "jobs": "jobs",
    }
    for flag, attr in overrides.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, attr, value)


def _write_manifest(out_dir: str, cfg: RunConfig, extra: dict) -> None:
    params = cfg.spring_params()
    manifest = {
        "config": cfg.to_dict(),
        "derived": {
            "omega_r": params.omega_r,
            "omega_z": params.omega_z,
            "freq_ratio": params.freq_ratio,
            "rest_length": params.rest_length,
            "coupling": params.coupling,
        },
        "versions": {"phaseavg": __version__, "numpy": np.__version__},
    }
    manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_fallback)
        fh.write("\n")


def _json_fallback(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _dump_run(out_dir: str, stem: str, times, v_states, params: SpringParams) -> list[str]:
    v_path = os.path.join(out_dir, f"{stem}_v0.csv")
    u_path = os.path.join(out_dir, f"{stem}_u0.csv")
    write_trajectory_csv(v_path, times, v_states)
    write_trajectory_csv(u_path, times, back_transform(times, v_states, params))
    return [v_path, u_path]


def cmd_simulate(cfg: RunConfig) -> int:
    params = cfg.spring_params()
    model = swing_spring_model(params)
    u0 = initial_state(cfg.positions, cfg.velocities, params)
    settings = cfg.solver_settings()
    os.makedirs(cfg.out_dir, exist_ok=True)

    files: list[str] = []
    run_info: dict = {}

    exact = exact_baseline(model, u0, cfg.tf, settings)
    files += _dump_run(cfg.out_dir, "exact", exact.times, exact.states, params)
    run_info["exact"] = _stats_dict(exact)

    for stem, degree in (("averaged_p0", 0), ("higher_p%d" % cfg.p, cfg.p)):
        acfg = AveragingConfig(p=degree, T=cfg.T)
        tables = build_tables(acfg, model.frequencies, allow_ill_conditioned=True)
        try:
            traj = integrate_with_reset(
                model, acfg, tables, u0, cfg.tf, cfg.reset_dt, settings
            )
        except (NonFiniteStateError, StepSizeUnderflowError) as exc:
            print(f"error: averaged run p={degree} failed: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        files += _dump_run(cfg.out_dir, stem, traj.times, traj.states, params)
        run_info[stem] = _stats_dict(traj)
        run_info[stem]["mass_condition"] = tables.mass_condition
        run_info[stem]["ill_conditioned"] = tables.ill_conditioned

    _write_manifest(
        cfg.out_dir, cfg, {"runs": run_info, "files": sorted(os.path.basename(f) for f in files)}
    )
    print(f"wrote {len(files)} trajectory files and manifest.json to {cfg.out_dir}")
    return EXIT_OK


def _stats_dict(traj) -> dict:
    return {
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
        "rhs_evaluations": traj.rhs_evaluations,
        "reset_times": list(map(float, traj.reset_times)),
        "n_samples": int(traj.times.size),
    }


def cmd_sweep(cfg: RunConfig) -> int:
    params = cfg.spring_params()
    model = swing_spring_model(params)
    u0 = initial_state(cfg.positions, cfg.velocities, params)
    settings = cfg.solver_settings()
    os.makedirs(cfg.out_dir, exist_ok=True)

    if cfg.preset is not None:
        preset = SWEEP_PRESETS[cfg.preset]
        p_values = cfg.p_values or preset["p_values"]
        T_values = cfg.T_values or preset["T_values"]
        reset_windows = preset.get("reset_windows", [cfg.reset_dt])
    else:
        p_values, T_values, reset_windows = cfg.p_values, cfg.T_values, [cfg.reset_dt]

    baseline = exact_baseline(model, u0, cfg.tf, settings)
    files = []
    for reset_dt in reset_windows:
        emap = run_error_sweep(
            model,
            u0,
            p_values,
            T_values,
            cfg.tf,
            reset_dt,
            settings,
            jobs=cfg.jobs,
            baseline=baseline,
            meta={"preset": cfg.preset},
        )
        suffix = f"_reset{reset_dt:g}" if len(reset_windows) > 1 else ""
        path = os.path.join(cfg.out_dir, f"error_map{suffix}.csv")
        emap.to_csv(path)
        files.append(path)
        n_failed = int(np.sum(emap.status != "ok"))
        print(f"wrote {path} ({len(p_values)}x{len(T_values)} cells, {n_failed} failed)")

    _write_manifest(
        cfg.out_dir,
        cfg,
        {
            "sweep": {
                "p_values": list(map(int, p_values)),
                "T_values": list(map(float, T_values)),
                "reset_windows": list(map(float, reset_windows)),
            },
            "files": sorted(os.path.basename(f) for f in files),
        },
    )
    return EXIT_OK


def cmd_limits(cfg: RunConfig) -> int:
    params = cfg.spring_params()
    model = swing_spring_model(params)
    u0 = initial_state(cfg.positions, cfg.velocities, params)
    settings = cfg.solver_settings()

    if abs(params.freq_ratio - 2.0) > 1e-12:
        print(
            f"error: the large-window limit check requires resonance "
            f"(frequency ratio exactly 2), got {params.freq_ratio}",
            file=sys.stderr,
        )
        return EXIT_CONFIG

    res0 = check_limit_T0(model, u0, cfg.p, cfg.limit_T_small, cfg.limit_T0_horizon, settings)
    ok0 = res0.discrepancy <= 1e-6 and (cfg.p == 0 or res0.decoupling_ratio >= 1.8)
    print(
        f"small-window limit  (p={cfg.p}, T={cfg.limit_T_small}, horizon={cfg.limit_T0_horizon}s): "
        f"discrepancy={res0.discrepancy:.3e} "
        f"decoupling_ratio={res0.decoupling_ratio:.3g} -> {'PASS' if ok0 else 'FAIL'}"
    )

    resinf = check_limit_Tinf(model, u0, cfg.p, cfg.limit_T_large, cfg.limit_Tinf_horizon, settings)
    bound = 10.0 * settings.rtol * resinf.v0_scale
    okinf = resinf.discrepancy <= bound and resinf.max_higher_block <= 1e-12
    print(
        f"large-window limit  (p={cfg.p}, T={cfg.limit_T_large}, horizon={cfg.limit_Tinf_horizon}s): "
        f"discrepancy={resinf.discrepancy:.3e} (bound {bound:.3e}) "
        f"max_higher_block={resinf.max_higher_block:.3e} -> {'PASS' if okinf else 'FAIL'}"
    )
    return EXIT_OK if (ok0 and okinf) else EXIT_NUMERICAL


def cmd_compare(cfg: RunConfig) -> int:
    params = cfg.spring_params()
    model = swing_spring_model(params)
    u0 = initial_state(cfg.positions, cfg.velocities, params)
    settings = cfg.solver_settings()

    baseline = exact_baseline(model, u0, cfg.tf, settings)
    acfg = AveragingConfig(p=cfg.p, T=cfg.T)
    tables = build_tables(acfg, model.frequencies, allow_ill_conditioned=True)
    try:
        traj = integrate_with_reset(model, acfg, tables, u0, cfg.tf, cfg.reset_dt, settings)
    except (NonFiniteStateError, StepSizeUnderflowError) as exc:
        print(f"error: averaged run failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    errs = l2_relative_errors(traj, baseline)
    for name, err in zip("xyz", errs):
        print(f"L2[{name}] = {err:.6e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phaseavg",
        description="Higher order phase averaging of the swinging spring: "
        "single runs, (p, T) error sweeps and window limit checks.",
    )
    sub = parser.add_subparsers(dest="mode", required=True, metavar="|".join(MODES))
    for mode in MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", type=str, default=None, help="JSON configuration file")
        sp.add_argument("--out", type=str, default=None, help="output directory")
        sp.add_argument("--p", type=int, default=None, help="polynomial degree")
        sp.add_argument("--T", type=float, default=None, help="averaging window (s)")
        sp.add_argument(
            "--reset-dt",
            dest="reset_dt",
            type=float,
            default=None,
            help="reset window in seconds; inf disables resetting",
        )
        sp.add_argument("--tf", type=float, default=None, help="final time (s)")
        sp.add_argument("--rtol", type=float, default=None)
        sp.add_argument("--atol", type=float, default=None)
        sp.add_argument("--sample-dt", dest="sample_dt", type=float, default=None)
        sp.add_argument("--preset", type=str, default=None, help="sweep preset name")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes for sweeps")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        _apply_overrides(cfg, args)
        cfg.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    command = {
        "simulate": cmd_simulate,
        "sweep": cmd_sweep,
        "limits": cmd_limits,
        "compare": cmd_compare,
    }[cfg.mode]
    try:
        return command(cfg)
    except (NonFiniteStateError, StepSizeUnderflowError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
