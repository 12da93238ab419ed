"""Error metrics, (p, T) sweeps and the small/large window limit checks.

All error measures compare sampled trajectories on their shared uniform grid;
time integrals use the trapezoidal rule on that grid.  Sweeps integrate one
exact baseline per call and fan the averaged cells out over a process pool;
cells whose integration blows up are flagged in the result instead of
aborting the sweep.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .averaging import AveragedSystem, AveragingConfig, build_tables
from .integrators import (
    NonFiniteStateError,
    SolverSettings,
    StackedState,
    StepSizeUnderflowError,
    Trajectory,
    integrate,
    integrate_with_reset,
)
from .models import ResonantQuadraticModel

__all__ = [
    "DegenerateReferenceError",
    "ErrorMap",
    "T0LimitResult",
    "TinfLimitResult",
    "check_limit_T0",
    "check_limit_Tinf",
    "exact_baseline",
    "l2_relative_error",
    "l2_relative_errors",
    "read_trajectory_csv",
    "run_error_sweep",
    "write_trajectory_csv",
]

TRAJECTORY_COLUMNS = ("t", "re_x", "im_x", "re_y", "im_y", "re_z", "im_z")
ERROR_MAP_COLUMNS = (
    "p",
    "T",
    "err_x",
    "err_y",
    "err_z",
    "status",
    "accepted_steps",
    "rejected_steps",
)

_DEGENERATE_FLOOR = 1e-30


class DegenerateReferenceError(ValueError):
    """Reference trajectory has (numerically) zero norm in the compared component."""


def _check_shared_grid(traj: Trajectory, ref: Trajectory) -> None:
    if traj.times.shape != ref.times.shape or not np.array_equal(traj.times, ref.times):
        raise ValueError("trajectories do not share the same sample grid")


def l2_relative_error(traj: Trajectory, ref: Trajectory, component: int) -> float:
    """Relative L2-in-time error of one complex component against a reference.

    Both integrals are trapezoidal sums on the shared sample grid; the
    difference uses the complex modulus.
    """
    _check_shared_grid(traj, ref)
    x = traj.states[:, component]
    xe = ref.states[:, component]
    num = math.sqrt(np.trapezoid(np.abs(x - xe) ** 2, traj.times))
    den = math.sqrt(np.trapezoid(np.abs(xe) ** 2, traj.times))
    if den < _DEGENERATE_FLOOR:
        raise DegenerateReferenceError(
            f"reference component {component} has L2 norm {den:.3e}"
        )
    return num / den


def l2_relative_errors(traj: Trajectory, ref: Trajectory) -> np.ndarray:
    """Relative L2 errors of every component."""
    return np.array(
        [l2_relative_error(traj, ref, i) for i in range(ref.states.shape[1])]
    )


def exact_baseline(
    model: ResonantQuadraticModel, y0, t_final: float, settings: Optional[SolverSettings] = None
) -> Trajectory:
    """Integrate the unaveraged modulated system as the shared reference."""
    return integrate(model.modulated_rhs, y0, t_final, settings)


@dataclass
class ErrorMap:
    """Per-component relative L2 error on a (p, T) grid."""

    p_values: np.ndarray
    T_values: np.ndarray
    errors: np.ndarray      # (n_components, n_p, n_T); NaN on failed cells
    status: np.ndarray      # (n_p, n_T) strings: ok | nonfinite | underflow
    accepted: np.ndarray    # (n_p, n_T) accepted step counts
    rejected: np.ndarray
    meta: dict = field(default_factory=dict)

    def error(self, component: int, p: int, T: float) -> float:
        i = int(np.where(self.p_values == p)[0][0])
        j = int(np.argmin(np.abs(self.T_values - T)))
        return float(self.errors[component, i, j])

    def to_csv(self, path) -> None:
        if self.errors.shape[0] != 3:
            raise ValueError("CSV schema expects exactly three components")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(ERROR_MAP_COLUMNS) + "\n")
            for i, p in enumerate(self.p_values):
                for j, T in enumerate(self.T_values):
                    errs = ",".join(_fmt(self.errors[c, i, j]) for c in range(3))
                    fh.write(
                        f"{int(p)},{_fmt(float(T))},{errs},{self.status[i, j]},"
                        f"{int(self.accepted[i, j])},{int(self.rejected[i, j])}\n"
                    )

    @classmethod
    def from_csv(cls, path) -> "ErrorMap":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != ERROR_MAP_COLUMNS:
                raise ValueError(f"unexpected error-map columns {header}")
            rows = [line.strip().split(",") for line in fh if line.strip()]
        if not rows:
            raise ValueError(f"error-map file {path} has no data rows")
        p_values = sorted({int(r[0]) for r in rows})
        T_values = sorted({float(r[1]) for r in rows})
        n_p, n_T = len(p_values), len(T_values)
        errors = np.full((3, n_p, n_T), np.nan)
        status = np.full((n_p, n_T), "missing", dtype=object)
        accepted = np.zeros((n_p, n_T), dtype=int)
        rejected = np.zeros((n_p, n_T), dtype=int)
        for r in rows:
            i = p_values.index(int(r[0]))
            j = T_values.index(float(r[1]))
            for c in range(3):
                errors[c, i, j] = float(r[2 + c])
            status[i, j] = r[5]
            accepted[i, j] = int(r[6])
            rejected[i, j] = int(r[7])
        return cls(
            p_values=np.array(p_values),
            T_values=np.array(T_values),
            errors=errors,
            status=status,
            accepted=accepted,
            rejected=rejected,
        )


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _sweep_cell(args):
    """Worker: integrate one (p, T) cell; never raises, returns a status."""
    model, y0, p, T, t_final, reset_dt, settings = args
    try:
        cfg = AveragingConfig(p=p, T=T)
        tables = build_tables(cfg, model.frequencies, allow_ill_conditioned=True)
        traj = integrate_with_reset(model, cfg, tables, y0, t_final, reset_dt, settings)
        return traj.states, traj.accepted_steps, traj.rejected_steps, "ok"
    except NonFiniteStateError:
        return None, 0, 0, "nonfinite"
    except StepSizeUnderflowError:
        return None, 0, 0, "underflow"


def run_error_sweep(
    model: ResonantQuadraticModel,
    y0,
    p_values: Sequence[int],
    T_values: Sequence[float],
    t_final: float,
    reset_dt: float,
    settings: Optional[SolverSettings] = None,
    *,
    jobs: int = 1,
    baseline: Optional[Trajectory] = None,
    meta: Optional[dict] = None,
) -> ErrorMap:
    """Relative L2 error of every (p, T) cell against one shared exact baseline.

    Cells are independent and are distributed over ``jobs`` worker processes;
    failed integrations (blow-ups at high degree without resets, step-size
    collapse) are recorded in the cell status and leave NaN errors.
    """
    if settings is None:
        settings = SolverSettings()
    p_values = np.array(sorted(int(p) for p in p_values))
    T_values = np.array(sorted(float(T) for T in T_values))
    if baseline is None:
        baseline = exact_baseline(model, y0, t_final, settings)

    cells = [
        (i, j, (model, y0, int(p), float(T), t_final, reset_dt, settings))
        for i, p in enumerate(p_values)
        for j, T in enumerate(T_values)
    ]
    n_p, n_T = p_values.size, T_values.size
    errors = np.full((model.dim, n_p, n_T), np.nan)
    status = np.full((n_p, n_T), "ok", dtype=object)
    accepted = np.zeros((n_p, n_T), dtype=int)
    rejected = np.zeros((n_p, n_T), dtype=int)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_cell, [c[2] for c in cells]))
    else:
        results = [_sweep_cell(c[2]) for c in cells]

    for (i, j, _), (states, acc, rej, stat) in zip(cells, results):
        status[i, j] = stat
        accepted[i, j] = acc
        rejected[i, j] = rej
        if states is not None:
            fake = Trajectory(
                times=baseline.times,
                states=states,
                accepted_steps=acc,
                rejected_steps=rej,
                rhs_evaluations=0,
            )
            errors[:, i, j] = l2_relative_errors(fake, baseline)

    meta_out = {
        "t_final": t_final,
        "reset_dt": reset_dt,
        "rtol": settings.rtol,
        "atol": settings.atol,
        "sample_dt": settings.sample_dt,
        "model": model.label,
    }
    if meta:
        meta_out.update(meta)
    return ErrorMap(
        p_values=p_values,
        T_values=T_values,
        errors=errors,
        status=status,
        accepted=accepted,
        rejected=rejected,
        meta=meta_out,
    )


def _v0_block_sensitivity(
    model: ResonantQuadraticModel,
    p: int,
    T: float,
    y0: np.ndarray,
    perturbation: np.ndarray,
    probe_times: Sequence[float] = (0.0, 0.377, 1.91),
) -> float:
    """Max-norm response of the V_0 tendency row to perturbed higher blocks."""
    if p == 0:
        return 0.0
    tables = build_tables(AveragingConfig(p=p, T=T), model.frequencies, allow_ill_conditioned=True)
    system = AveragedSystem(model, tables)
    base = StackedState.initial(y0, p).blocks
    pert = base.copy()
    pert[1:] += perturbation
    worst = 0.0
    for t in probe_times:
        delta = system.rhs_blocks(t, pert)[0] - system.rhs_blocks(t, base)[0]
        worst = max(worst, float(np.abs(delta).max()))
    return worst


@dataclass(frozen=True)
class T0LimitResult:
    """Outcome of the small-window limit check."""

    discrepancy: float          # max over time of the V_0 max-norm difference
    sensitivity: float          # V_0-row response to higher-block noise at T
    sensitivity_halved: float   # same response at T/2

    @property
    def decoupling_ratio(self) -> float:
        """How much the higher blocks decouple when the window halves."""
        if self.sensitivity_halved == 0.0:
            return math.inf
        return self.sensitivity / self.sensitivity_halved


def check_limit_T0(
    model: ResonantQuadraticModel,
    y0,
    p: int,
    T_small: float,
    horizon: float,
    settings: Optional[SolverSettings] = None,
    *,
    seed: int = 20260810,
) -> T0LimitResult:
    """Verify the averaged system collapses onto the exact one as T -> 0.

    Integrates the degree-``p`` averaged system at window ``T_small`` and the
    exact modulated system over the same horizon and reports the max-over-time
    ``V_0`` discrepancy, together with the response of the ``V_0`` tendency to
    randomized higher blocks at ``T_small`` and ``T_small / 2`` (the response
    must shrink as the window does).
    """
    if settings is None:
        settings = SolverSettings()
    y0 = np.asarray(y0, dtype=complex).ravel()
    exact = integrate(model.modulated_rhs, y0, horizon, settings)
    cfg = AveragingConfig(p=p, T=T_small)
    tables = build_tables(cfg, model.frequencies, allow_ill_conditioned=True)
    avg = integrate_with_reset(model, cfg, tables, y0, horizon, reset_dt=2.0 * horizon, settings=settings)
    discrepancy = float(np.abs(avg.states - exact.states).max())

    rng = np.random.default_rng(seed)
    scale = float(np.abs(y0).max()) or 1.0
    if p > 0:
        perturbation = scale * (
            rng.standard_normal((p, model.dim)) + 1j * rng.standard_normal((p, model.dim))
        )
    else:
        perturbation = np.zeros((0, model.dim), dtype=complex)
    sens = _v0_block_sensitivity(model, p, T_small, y0, perturbation)
    sens_half = _v0_block_sensitivity(model, p, T_small / 2.0, y0, perturbation)
    return T0LimitResult(discrepancy=discrepancy, sensitivity=sens, sensitivity_halved=sens_half)


@dataclass(frozen=True)
class TinfLimitResult:
    """Outcome of the large-window limit check."""

    discrepancy: float        # max over time of the V_0 max-norm difference
    max_higher_block: float   # largest higher-block magnitude seen anywhere
    v0_scale: float           # max |V_0| of the reference, for relative bounds


def check_limit_Tinf(
    model: ResonantQuadraticModel,
    y0,
    p: int,
    T_large: float,
    horizon: float,
    settings: Optional[SolverSettings] = None,
) -> TinfLimitResult:
    """Verify the averaged system collapses onto the resonance-only system.

    For a large window every nonzero interaction frequency is damped to
    nothing (the damping factor underflows to an exact zero), so ``V_0``
    should follow the autonomous zero-frequency subsystem and the higher
    blocks, which start at zero and are not forced, should stay at zero.
    """
    if settings is None:
        settings = SolverSettings()
    y0 = np.asarray(y0, dtype=complex).ravel()
    ref = integrate(lambda t, v: model.resonant_rhs(v), y0, horizon, settings)
    cfg = AveragingConfig(p=p, T=T_large)
    tables = build_tables(cfg, model.frequencies, allow_ill_conditioned=True)
    avg = integrate_with_reset(
        model, cfg, tables, y0, horizon, reset_dt=2.0 * horizon, settings=settings, keep_blocks=True
    )
    discrepancy = float(np.abs(avg.states - ref.states).max())
    max_higher = float(np.abs(avg.blocks[:, 1:, :]).max()) if p > 0 else 0.0
    return TinfLimitResult(
        discrepancy=discrepancy,
        max_higher_block=max_higher,
        v0_scale=float(np.abs(ref.states).max()),
    )


def write_trajectory_csv(path, times: np.ndarray, states: np.ndarray) -> None:
    """Write a three-component complex trajectory as a flat CSV."""
    if states.shape[1] != 3:
        raise ValueError("CSV schema expects exactly three components")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
        for t, row in zip(times, states):
            vals = [t]
            for c in range(3):
                vals.extend((row[c].real, row[c].imag))
            fh.write(",".join(_fmt(v) for v in vals) + "\n")


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a trajectory CSV back into (times, complex states)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TRAJECTORY_COLUMNS:
            raise ValueError(f"unexpected trajectory columns {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        raise ValueError(f"trajectory file {path} has no data rows")
    times = data[:, 0]
    states = data[:, 1::2] + 1j * data[:, 2::2]
    return times, states
