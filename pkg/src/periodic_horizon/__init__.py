"""Discounted infinite-horizon problems over periodic trajectories.

Averaging operators, the discount-weighted projection onto periodic
signals, the seasonality + trend decomposition, and the reduction of
periodic variational problems to a single period.
"""

from .averaging import (
    AveragedLagrangian,
    AveragingParams,
    Lagrangian,
    SeriesConvergenceError,
    average_signal,
    average_tilde_signal,
    averaged_lagrangian,
    averaged_lagrangian_grad,
    operator_norm_check,
    structural_checks,
    validate_gradient,
)
from .projection import (
    Decomposition,
    DegenerateProblemError,
    decompose,
    decompose_oracle,
    orthogonality_residual,
    project_periodic,
)
from .report import CheckReport, CheckResult
from .signal import (
    DiscountConfig,
    Grid,
    PeriodSignal,
    Signal,
    TailPolicy,
    make_grid,
    period_lp_norm,
    periodic_extend,
    restrict_to_period,
    sobolev_norm,
    weighted_inner,
    weighted_lp_norm,
)
from .variational import (
    FiniteHorizonProblem,
    SolveOptions,
    Trajectory,
    check_regularity_assumptions,
    euler_lagrange_residual,
    lift_solution,
    objective_value,
    reduce_problem,
    solve_finite_horizon,
)

__version__ = "0.1.0"
