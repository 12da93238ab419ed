"""Adaptive embedded Runge-Kutta 5(4) integration of complex ODE systems.

Complex states are stepped as interleaved real pairs so the error norm acts on
real components.  Step sizes obey a PI controller (safety 0.9, growth clamped
to [0.2, 10]) on the max-norm of the per-component scaled error.  Output is
sampled on an exact uniform grid by clipping steps to sample boundaries; no
interpolation is performed, so every reported time is a step endpoint.

The resetting integrator advances the stacked averaged system in segments and
zeroes the higher coefficient blocks at each segment boundary, which keeps the
expansion from drifting unstable over long horizons at high degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .averaging import AveragedSystem, AveragingConfig, AveragingTables
from .models import ResonantQuadraticModel

__all__ = [
    "NonFiniteStateError",
    "SolverSettings",
    "StackedState",
    "StepSizeUnderflowError",
    "Trajectory",
    "integrate",
    "integrate_with_reset",
]

# Dormand-Prince 5(4) tableau.  Row i of _A holds the stage-i combination
# weights; the last row doubles as the 5th-order solution weights, which makes
# the final stage evaluation reusable as the first stage of the next step.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.zeros((7, 7))
_A[1, :1] = [1 / 5]
_A[2, :2] = [3 / 40, 9 / 40]
_A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
_A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
_A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
_A[6, :6] = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
# Difference between the 5th- and embedded 4th-order weights.
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
_A.setflags(write=False)
_C.setflags(write=False)
_E.setflags(write=False)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_PI_ALPHA = 0.17  # 1/5 - 0.75 * beta
_PI_BETA = 0.04
_UNDERFLOW_FRACTION = 1e-14


class StepSizeUnderflowError(RuntimeError):
    """Step controller collapsed; the problem looks stiff or is blowing up."""

    def __init__(self, t: float, segment: Optional[int] = None):
        where = f" in segment {segment}" if segment is not None else ""
        super().__init__(f"step size underflow at t = {t:.6g}{where}")
        self.t = t
        self.segment = segment


class NonFiniteStateError(RuntimeError):
    """State or error estimate became non-finite; the integration is unstable."""

    def __init__(self, t: float, segment: Optional[int] = None):
        where = f" in segment {segment}" if segment is not None else ""
        super().__init__(f"non-finite state at t = {t:.6g}{where}")
        self.t = t
        self.segment = segment


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and sampling of the adaptive integrator.

    Defaults match the historical single-precision-epsilon tolerance commonly
    used by adaptive solvers, with output sampled every 0.01 s.
    """

    rtol: float = 1.49012e-8
    atol: float = 1.49012e-8
    max_step: Optional[float] = None
    initial_step: Optional[float] = None
    sample_dt: float = 0.01

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.sample_dt > 0:
            raise ValueError("sample_dt must be positive")
        if self.max_step is not None and not self.max_step > 0:
            raise ValueError("max_step must be positive when given")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be positive when given")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled solution plus solver bookkeeping."""

    times: np.ndarray            # sample times, strictly increasing, starts at 0
    states: np.ndarray           # (n_times, d) complex samples
    accepted_steps: int
    rejected_steps: int
    rhs_evaluations: int
    reset_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    blocks: Optional[np.ndarray] = None  # (n_times, p+1, d) when requested


@dataclass
class StackedState:
    """Coefficient blocks ``V_0 .. V_p`` of the averaged system."""

    blocks: np.ndarray  # (p+1, d) complex

    @classmethod
    def initial(cls, y0: np.ndarray, p: int) -> "StackedState":
        """All weight on the zeroth block; higher blocks start at zero."""
        y0 = np.asarray(y0, dtype=complex).ravel()
        blocks = np.zeros((p + 1, y0.size), dtype=complex)
        blocks[0] = y0
        return cls(blocks)

    @classmethod
    def from_flat(cls, flat: np.ndarray, p: int, dim: int) -> "StackedState":
        blocks = np.asarray(flat, dtype=np.float64).view(complex).reshape(p + 1, dim).copy()
        return cls(blocks)

    def to_flat(self) -> np.ndarray:
        """Interleaved re/im representation used by the stepper."""
        return np.ascontiguousarray(self.blocks.ravel()).view(np.float64).copy()


class _Stats:
    __slots__ = ("accepted", "rejected", "nfev")

    def __init__(self):
        self.accepted = 0
        self.rejected = 0
        self.nfev = 0


def _select_initial_step(f, t0, y0, f0, rtol, atol, t_span, max_step, stats):
    """Heuristic first step from the state and tendency magnitudes."""
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, t_span)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    stats.nfev += 1
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_span, max_step)


def _integrate_segment(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    targets: np.ndarray,
    is_sample: np.ndarray,
    settings: SolverSettings,
    stats: _Stats,
    underflow_floor: float,
    segment: Optional[int],
    samples_out: list,
):
    """Advance from ``t0`` through every target time, landing on each exactly.

    Appends a state copy to ``samples_out`` for each target flagged as a
    sample.  Returns the final state (a fresh array).
    """
    y = np.array(y0, dtype=np.float64)
    t = t0
    n_stages = 7
    k = np.empty((n_stages, y.size))
    f0 = f(t, y)
    stats.nfev += 1
    if not np.all(np.isfinite(f0)):
        raise NonFiniteStateError(t, segment)
    k[0] = f0

    max_step = settings.max_step if settings.max_step is not None else math.inf
    if settings.initial_step is not None:
        h = min(settings.initial_step, max_step, targets[-1] - t0)
    else:
        h = _select_initial_step(
            f, t, y, k[0], settings.rtol, settings.atol, targets[-1] - t0, max_step, stats
        )
    err_prev = 1e-4
    rtol, atol = settings.rtol, settings.atol

    for t_target, record in zip(targets, is_sample):
        while True:
            if h < underflow_floor:
                raise StepSizeUnderflowError(t, segment)
            h_exec = min(h, max_step, t_target - t)
            clipped = h_exec < h
            for i in range(1, 6):
                k[i] = f(t + _C[i] * h_exec, y + h_exec * (k[:i].T @ _A[i, :i]))
            y_new = y + h_exec * (k[:6].T @ _A[6, :6])
            t_new = t_target if h_exec == t_target - t else t + h_exec
            k[6] = f(t_new, y_new)
            stats.nfev += 6
            err_vec = h_exec * (k.T @ _E)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = float(np.max(np.abs(err_vec) / scale))
            if not (math.isfinite(err) and np.all(np.isfinite(y_new))):
                raise NonFiniteStateError(t, segment)

            if err <= 1.0:
                stats.accepted += 1
                t = t_new
                y = y_new
                k[0] = k[6]  # first-same-as-last reuse
                if err == 0.0:
                    factor = _MAX_FACTOR
                else:
                    factor = _SAFETY * err ** (-_PI_ALPHA) * err_prev ** _PI_BETA
                    factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
                h = h_exec * factor
                err_prev = max(err, 1e-4)
                if t == t_target:
                    if record:
                        samples_out.append(y.copy())
                    break
            else:
                stats.rejected += 1
                factor = max(_MIN_FACTOR, min(1.0, _SAFETY * err ** -0.2))
                h = h_exec * factor
    return y


def _sample_grid(t_final: float, sample_dt: float) -> np.ndarray:
    n = int(math.floor(t_final / sample_dt + 1e-9))
    if n < 1:
        raise ValueError(
            f"final time {t_final} is smaller than the sample spacing {sample_dt}"
        )
    return np.arange(n + 1) * sample_dt


def _as_real_rhs(rhs):
    """Wrap a complex-state tendency as a real interleaved one."""

    def f(t, y_real):
        dz = np.asarray(rhs(t, y_real.view(complex)), dtype=complex)
        return np.ascontiguousarray(dz).view(np.float64)

    return f


def integrate(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    t_final: float,
    settings: Optional[SolverSettings] = None,
) -> Trajectory:
    """Integrate ``dy/dt = rhs(t, y)`` for a complex state from t = 0.

    The trajectory is sampled at exact multiples of ``settings.sample_dt`` up
    to the largest multiple not exceeding ``t_final``; steps are clipped to
    land on each sample time, so samples are genuine step endpoints.

    Raises :class:`StepSizeUnderflowError` when the controller collapses the
    step below ``1e-14 * t_final`` and :class:`NonFiniteStateError` as soon
    as the state or its error estimate stops being finite.
    """
    if settings is None:
        settings = SolverSettings()
    if not t_final > 0:
        raise ValueError(f"final time must be positive, got {t_final}")
    y0c = np.atleast_1d(np.asarray(y0, dtype=complex))
    times = _sample_grid(t_final, settings.sample_dt)
    f = _as_real_rhs(rhs)
    stats = _Stats()
    samples: list[np.ndarray] = []
    _integrate_segment(
        f,
        0.0,
        np.ascontiguousarray(y0c).view(np.float64),
        times[1:],
        np.ones(times.size - 1, dtype=bool),
        settings,
        stats,
        _UNDERFLOW_FRACTION * t_final,
        None,
        samples,
    )
    states = np.empty((times.size, y0c.size), dtype=complex)
    states[0] = y0c
    for i, s in enumerate(samples):
        states[i + 1] = s.view(complex)
    return Trajectory(
        times=times,
        states=states,
        accepted_steps=stats.accepted,
        rejected_steps=stats.rejected,
        rhs_evaluations=stats.nfev,
    )


def integrate_with_reset(
    model: ResonantQuadraticModel,
    cfg: AveragingConfig,
    tables: AveragingTables,
    y0,
    t_final: float,
    reset_dt: float,
    settings: Optional[SolverSettings] = None,
    *,
    keep_blocks: bool = False,
) -> Trajectory:
    """Integrate the stacked averaged system with periodic higher-block resets.

    Starts from ``V_0 = y0`` with all higher blocks zero, integrates in
    segments of length ``reset_dt`` and zeroes blocks 1..p at each segment
    boundary while keeping ``V_0`` continuous.  Returns the sampled ``V_0``
    trajectory; pass ``keep_blocks=True`` to also retain the full coefficient
    stack at each sample.  With ``p = 0`` or ``reset_dt >= t_final`` no reset
    fires and the run is a single segment.
    """
    if settings is None:
        settings = SolverSettings()
    if not t_final > 0:
        raise ValueError(f"final time must be positive, got {t_final}")
    if not reset_dt > 0:
        raise ValueError(f"reset window must be positive, got {reset_dt}")
    if cfg.p != tables.p or cfg.T != tables.T:
        raise ValueError("tables were built for a different averaging configuration")

    system = AveragedSystem(model, tables)
    p, d = tables.p, model.dim
    y0c = np.asarray(y0, dtype=complex).ravel()
    if y0c.size != d:
        raise ValueError(f"initial state must have {d} components, got {y0c.size}")

    times = _sample_grid(t_final, settings.sample_dt)
    t_end = float(times[-1])

    boundaries: list[float] = []
    if p > 0 and reset_dt < t_end:
        b = reset_dt
        kk = 1
        while b < t_end * (1 - 1e-12):
            j = round(b / settings.sample_dt)
            snapped = j * settings.sample_dt
            boundaries.append(snapped if abs(snapped - b) <= 1e-9 * max(1.0, b) else b)
            kk += 1
            b = kk * reset_dt

    y = StackedState.initial(y0c, p).to_flat()
    stats = _Stats()
    samples: list[np.ndarray] = []
    floor = _UNDERFLOW_FRACTION * t_final
    seg_edges = [0.0] + boundaries + [t_end]
    reset_times: list[float] = []
    for seg in range(len(seg_edges) - 1):
        t0, t1 = seg_edges[seg], seg_edges[seg + 1]
        inside = times[(times > t0) & (times <= t1)]
        if inside.size == 0 or inside[-1] != t1:
            targets = np.append(inside, t1)
            is_sample = np.append(np.ones(inside.size, dtype=bool), False)
        else:
            targets = inside
            is_sample = np.ones(inside.size, dtype=bool)
        y = _integrate_segment(
            system.rhs_flat, t0, y, targets, is_sample, settings, stats, floor, seg, samples
        )
        if seg < len(seg_edges) - 2:
            stacked = y.view(complex).reshape(p + 1, d)
            stacked[1:] = 0.0
            reset_times.append(t1)
            y = np.ascontiguousarray(stacked.ravel()).view(np.float64)

    all_blocks = np.empty((times.size, p + 1, d), dtype=complex)
    all_blocks[0] = StackedState.initial(y0c, p).blocks
    for i, s in enumerate(samples):
        all_blocks[i + 1] = s.view(complex).reshape(p + 1, d)
    return Trajectory(
        times=times,
        states=all_blocks[:, 0, :].copy(),
        accepted_steps=stats.accepted,
        rejected_steps=stats.rejected,
        rhs_evaluations=stats.nfev,
        reset_times=np.array(reset_times),
        blocks=all_blocks if keep_blocks else None,
    )
