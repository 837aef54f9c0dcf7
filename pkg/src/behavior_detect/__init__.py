"""Behavior-based chi-squared attack detection for unknown stochastic LTI plants."""

from .behavior import (
    BehaviorVector,
    DataMatrices,
    MinorBehavior,
    build_regression_matrices,
    minor_behaviors,
    selector_matrix,
    stack_behavior,
)
from .bounds import BoundReport, direct_bound, indirect_bound, ols_bound, sensitivity_F, sensitivity_P
from .detection import (
    ComparisonConfig,
    Hypothesis,
    RocCurve,
    chi2_statistic,
    detect,
    invert_covariance,
    roc_curve,
    run_comparison,
)
from .errors import (
    BehaviorDetectError,
    DegenerateEstimateError,
    DegenerateSystemError,
    InsufficientDataError,
    InvalidWindowError,
    UnstableModelError,
)
from .estimation import (
    CovarianceEstimate,
    IndirectModel,
    assemble_sigma_D,
    direct_covariance,
    indirect_covariance,
    indirect_population_limit,
    ols_fit,
    residual_covariance,
    solve_discrete_lyapunov,
)
from .system_sim import (
    ExperimentSet,
    ExplicitAttack,
    GaussianInjection,
    LtiSystem,
    NoAttack,
    NoiseSpec,
    Trajectory,
    generate_experiments,
    markov_toeplitz,
    random_stable_system,
    simulate,
    true_behavior_covariance,
)

__version__ = "0.1.0"
