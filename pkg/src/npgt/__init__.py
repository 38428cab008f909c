"""Gradient tracking over networks with sector-bounded link nonlinearities."""

__version__ = "0.1.0"

from .dynamics import (
    DivergenceError,
    IntegratorConfig,
    NPGTState,
    Trajectory,
    lyapunov,
    rhs,
    simulate,
    step,
    tracking_conservation_error,
)
from .graph import (
    DirectedWeightedGraph,
    SwitchingSchedule,
    algebraic_connectivity,
    build_laplacian,
    generate_er_wb,
    generate_exponential,
    graph_at,
    remove_links,
    topology_index,
    validate,
)
from .nonlinearity import LinkNonlinearity, apply, sector_of, verify_sector
from .objectives import (
    NonconvexSuite,
    RegressionSuite,
    centralized_optimum,
    check_assumption1,
    generate_nonconvex_coefficients,
    generate_regression_data,
    optimality_gap,
)
from .spectral import (
    assemble,
    eigen_structure,
    eta_bar,
    lemma1_reduced_matrix,
    matching_bound,
    matching_distance,
    predicted_rate,
    spectral_report,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    admissible_eta,
    build_schedule,
    build_suite,
    default_config,
    fit_rate,
    run_experiment,
    spectral_at_start,
    write_outputs,
)
