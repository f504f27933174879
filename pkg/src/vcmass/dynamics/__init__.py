"""Mass scaling estimates, semi-discrete systems and explicit time stepping."""

from .benchmarks import (
    BENCHMARKS,
    NINE_TERM,
    SINGLE_MODE,
    ConvergenceRow,
    ConvergenceTable,
    StandingWaves,
    TcritRow,
    benchmark_mesh,
    overprediction_ratio,
    predicted_gain,
    run_convergence,
    square_with_hole,
    tcrit_table,
)
from .scaling import (
    SCALAR,
    VECTOR,
    BetaEstimate,
    ScaledOperators,
    beta_coefficient,
    critical_timestep,
    estimate_beta,
    facet_betas,
    lambda_max_estimate,
    largest_eigenvalue,
    scaled_operators,
    theta_prediction,
)
from .system import (
    INTEGRATORS,
    SemiDiscreteSystem,
    State,
    TimeHistory,
    integrate,
    l2_error,
    rk4_ode_step,
    step_central_difference,
    step_rk4,
)
