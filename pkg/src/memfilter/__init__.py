"""Optimal linear filtering for Gaussian systems driven by two-parameter
memory noise: simulation, Volterra and Riccati-ODE filters, a Kalman-Bucy
baseline, parameter estimation, log-utility portfolio choice and a Monte
Carlo benchmark harness.
"""

from .core import Grid, RandomStream, make_grid, ou_exact_step
from .estimation import (
    FitResult,
    VarianceCurve,
    empirical_h,
    empirical_u,
    fit_ou_curve,
    fit_ou_params,
    fit_pq,
    ou_autocovariance,
    ou_increment_ratio,
    ou_variance_ratio_h,
    simulate_ou_with_memory,
)
from .filters import (
    ConstantSignalReport,
    CoeffMatrices,
    FilterTrajectory,
    SystemSpec,
    coeff_matrices,
    constant_signal_error,
    constant_signal_error_ode,
    constant_signal_report,
    integrate_riccati,
    kalman_bucy,
    kalman_bucy_variance,
    lemma_b,
    run_filter,
)
from .harness import ComparisonReport, ThetaPreset, monte_carlo_compare, preset_thetas
from .noise import (
    MemoryParams,
    NoisePath,
    diag_l,
    kernel_k,
    kernel_l,
    resolvent_residual,
    simulate_v,
    simulate_v_innovation,
    variance_ratio_u,
)
from .portfolio import (
    LogUtilityComparison,
    MarketSpec,
    PathBundle,
    StrategyPath,
    monte_carlo_log_utility,
    price_to_observation,
    run_strategy,
    simulate_market,
)
from .volterra import (
    ErrorTable,
    GammaTable,
    ObservationKernelSpec,
    build_gamma_for_system,
    run_filter_volterra,
    solve_error_table,
)

__version__ = "0.1.0"
