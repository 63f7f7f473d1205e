"""Multilevel surrogate-based control-variate Monte Carlo estimation toolkit."""

__version__ = "0.1.0"

from .cv import (  # noqa: F401
    CvProblem,
    CvSolution,
    centered_moment_products,
    cv_estimate,
    cv_solve,
    mc_mean,
    mc_var,
    solve_alpha,
)
from .estimators import (  # noqa: F401
    METHODS,
    AllocationResult,
    RunResult,
    SurrogateSuite,
    adaptive_run,
    mc_estimate,
    mlcv_estimate,
    mlmc_cv_estimate,
    mlmc_estimate,
    mlmc_family_estimate,
    mlmc_mlcv_estimate,
    optimal_allocation,
    replicate_rmse,
    run_method,
    single_level_cv_estimate,
)
from .harness import (  # noqa: F401
    CampaignConfig,
    SurrogatePlan,
    build_surrogate_suite,
    correlation_table,
    run_campaign,
)
from .heatbench import (  # noqa: F401
    HeatConfig,
    LevelHierarchy,
    correction_cost,
    evaluate_level,
    exact_correction_variance,
    exact_expectation,
    exact_level_mean,
    hierarchy,
    input_space,
)
from .pce import (  # noqa: F401
    GalerkinTensor,
    PcSurrogate,
    adaptive_fit,
    basis_eval,
    centered_square_covariance,
    combine_pc,
    galerkin_tensor,
    lars_select,
    ols_fit,
    pc_covariance,
    pc_moments,
    q2,
    total_degree_set,
)
from .sampling import (  # noqa: F401
    AnnealSchedule,
    Doe,
    InputSpace,
    RngStream,
    centered_l2_discrepancy,
    iid_sample,
    lhs_sample,
    nested_subset,
    nested_subset_indices,
)
from .taylor import PiecewiseT1, TaylorSurrogate, heat_t1, t_fit, t_moments  # noqa: F401
