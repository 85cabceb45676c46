"""Carbon-penalised proportional portfolio insurance toolkit.

Library layers:

* market:    model parameters, correlation transform, effective risk
* odes:      coefficient ODE systems, filter variance, closed forms
* policy:    feedback controls, multiplier/weights, demand decomposition
* filtering: conditional-mean filter on observed prices
* simulate:  deterministic, parallel Monte Carlo engine
* analysis:  value functions, loss of utility, efficiency, statistics
* config / cli / reports / figures: batch front end and artifacts
"""

from .market import (
    EffectiveRisk,
    MarketModel,
    PreferenceSpec,
    TransformedModel,
    decompose_correlation,
    discriminant,
    effective_risk,
    is_admissible_delta,
    two_asset_delta_star,
)
from .odes import (
    FilterVarianceCurve,
    LogCoefficients,
    OdeGrid,
    log_closed_forms,
    ou_moments,
    partial_from_full,
    solve_filter_variance,
    solve_full_info,
    solve_partial_info,
)
from .policy import (
    ControlVector,
    DemandDecomposition,
    exposures,
    multiplier_and_weights,
    theta_full,
    theta_partial,
    two_asset_decomposition,
)
from .filtering import FilterState, filter_init, filter_run, filter_step
from .simulate import (
    ControlSpec,
    PathRecord,
    SimConfig,
    SimOutput,
    evolve_ppi,
    run_monte_carlo,
    simulate_drivers,
)
from .analysis import (
    AdmissibilityReport,
    SummaryStats,
    admissibility_report,
    efficiency,
    expected_full_value,
    loss_of_utility,
    summary_stats,
    value_function,
    var_y,
)
from .config import ScenarioConfig, load_config, load_default_config, write_config

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
