"""Optimal transmission-power scheduling for remote estimation over a
Markov fading channel.

The package splits into model description (`model`), belief-grid numerics
(`belief`), the rearrangement order underpinning threshold optimality
(`rearrange`), policy containers (`policy`), the average-cost and discounted
solvers on the unfolded failure chain (`solver`), Monte Carlo validation
(`simulator`), and config plumbing plus the command line front end
(`config`, `cli`).
"""

from .belief import (
    ActionFunction,
    BeliefGrid,
    DegenerateSuccessError,
    GridGeometry,
    GridGeometryError,
    SupportOverflowError,
    banded_action,
    constant_action,
    expected_power,
    gaussian_grid,
    mean,
    outward_mass,
    post_failure,
    propagate,
    stage_cost,
    success_prob,
    variance,
)
from .config import (
    ConfigError,
    DEFAULT_CONFIG,
    build_geometry,
    build_problem,
    default_config,
    default_geometry,
    load_config,
    merge_config,
)
from .model import (
    ActionSet,
    ControlProblem,
    CostWeights,
    FadingChannel,
    ModelError,
    ReceptionModel,
    ScalarProcess,
    ValidationReport,
    reception_prob,
    stationary_distribution,
    validate_channel,
    validate_problem,
    validate_stability,
)
from .policy import (
    PolicyDomainError,
    PowerPolicy,
    StructureReport,
    ThresholdAction,
    canonicalize,
    check_symmetric_monotone,
    extract_threshold_action,
    max_power_action,
    on_off_action,
    snap_thresholds,
    threshold_grid,
)
from .rearrange import (
    MeasureMatchError,
    interior_permutation,
    is_even_unimodal,
    majorizes,
    outward_quantile,
    random_relation_pair,
    rearranged_action,
    relation_R,
    symmetric_decreasing_rearrangement,
)
from .simulator import (
    ReplicationSummary,
    TrajectoryMetrics,
    error_growth_windows,
    estimate_belief_mean,
    estimate_closed_form,
    replicate,
    simulate,
)
from .solver import (
    ChainStructureError,
    DiscountedResult,
    EvaluationResult,
    SolveResult,
    UnfoldedChain,
    build_chain,
    discounted_policy_values,
    evaluate_policy,
    improve_policy,
    solve,
    solve_discounted,
    state_action_value,
    structure_witness,
)

__version__ = "0.1.0"

__all__ = [
    "ActionFunction",
    "ActionSet",
    "BeliefGrid",
    "ChainStructureError",
    "ConfigError",
    "ControlProblem",
    "CostWeights",
    "DEFAULT_CONFIG",
    "DegenerateSuccessError",
    "DiscountedResult",
    "EvaluationResult",
    "FadingChannel",
    "GridGeometry",
    "GridGeometryError",
    "MeasureMatchError",
    "ModelError",
    "PolicyDomainError",
    "PowerPolicy",
    "ReceptionModel",
    "ReplicationSummary",
    "ScalarProcess",
    "SolveResult",
    "StructureReport",
    "SupportOverflowError",
    "ThresholdAction",
    "TrajectoryMetrics",
    "UnfoldedChain",
    "ValidationReport",
    "banded_action",
    "build_chain",
    "build_geometry",
    "build_problem",
    "canonicalize",
    "check_symmetric_monotone",
    "constant_action",
    "default_config",
    "default_geometry",
    "discounted_policy_values",
    "error_growth_windows",
    "estimate_belief_mean",
    "estimate_closed_form",
    "evaluate_policy",
    "expected_power",
    "extract_threshold_action",
    "gaussian_grid",
    "improve_policy",
    "interior_permutation",
    "is_even_unimodal",
    "load_config",
    "majorizes",
    "max_power_action",
    "mean",
    "merge_config",
    "on_off_action",
    "outward_mass",
    "outward_quantile",
    "post_failure",
    "propagate",
    "random_relation_pair",
    "rearranged_action",
    "reception_prob",
    "relation_R",
    "replicate",
    "simulate",
    "snap_thresholds",
    "solve",
    "solve_discounted",
    "stage_cost",
    "state_action_value",
    "stationary_distribution",
    "structure_witness",
    "success_prob",
    "symmetric_decreasing_rearrangement",
    "threshold_grid",
    "validate_channel",
    "validate_problem",
    "validate_stability",
    "variance",
]
