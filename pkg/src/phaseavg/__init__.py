"""Higher order phase averaging for quadratically nonlinear oscillatory systems."""

__version__ = "0.1.0"

from .averaging import (
    AveragedSystem,
    AveragingConfig,
    AveragingTables,
    IllConditionedError,
    assemble_averaged_rhs,
    build_tables,
    damping_factor,
    gaussian_moment,
    shifted_moment,
)
from .diagnostics import (
    DegenerateReferenceError,
    ErrorMap,
    check_limit_T0,
    check_limit_Tinf,
    exact_baseline,
    l2_relative_error,
    l2_relative_errors,
    run_error_sweep,
)
from .integrators import (
    NonFiniteStateError,
    SolverSettings,
    StackedState,
    StepSizeUnderflowError,
    Trajectory,
    integrate,
    integrate_with_reset,
)
from .models import (
    ResonantQuadraticModel,
    ResonantTerm,
    SpringParams,
    back_transform,
    energy,
    exact_modulated_rhs,
    initial_state,
    swing_spring_model,
    whitham_limit_rhs,
)

__all__ = [
    "AveragedSystem",
    "AveragingConfig",
    "AveragingTables",
    "DegenerateReferenceError",
    "ErrorMap",
    "IllConditionedError",
    "NonFiniteStateError",
    "ResonantQuadraticModel",
    "ResonantTerm",
    "SolverSettings",
    "SpringParams",
    "StackedState",
    "StepSizeUnderflowError",
    "Trajectory",
    "assemble_averaged_rhs",
    "back_transform",
    "build_tables",
    "check_limit_T0",
    "check_limit_Tinf",
    "damping_factor",
    "energy",
    "exact_baseline",
    "exact_modulated_rhs",
    "gaussian_moment",
    "initial_state",
    "integrate",
    "integrate_with_reset",
    "l2_relative_error",
    "l2_relative_errors",
    "run_error_sweep",
    "shifted_moment",
    "swing_spring_model",
    "whitham_limit_rhs",
]
