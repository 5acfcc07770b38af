"""Stein-type shrinkage estimation for spherically symmetric models.

Models, shrinkage estimators, divergence and condition checkers, the
generalized Bayes shrinkage function r(w), and a reproducible Monte Carlo
risk lab with a config-driven command line front end.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegenerateDensityError,
    DimensionMismatchError,
    InfiniteExpectationError,
    MissingResidualError,
    NonfiniteMomentError,
    ParameterDomainError,
    QuadratureError,
    SteinShrinkError,
)
from .models import (
    MixingLaw,
    ModelSpec,
    RadialLaw,
    SampleBatch,
    mixture_q_lower_bound,
    q_function,
    sample_joint,
)
from .shrinkage import (
    EstimatorSpec,
    FaceRule,
    ShrinkFn,
    constant_shrink,
    estimate,
    estimate_flagged,
    rational_shrink,
    saturating_linear,
)
from .fields import (
    VectorField,
    baranchik_field,
    catalogued_fields,
    divergence,
    divergence_fd,
    js_field,
    residual_baranchik_field,
)
from .conditions import (
    check_domination_condition,
    check_residual_domination_condition,
    minimax_a_bound,
)
from .bayes import (
    BayesPriorSpec,
    RwTable,
    bayes_r,
    generalized_bayes_estimate,
    minimaxity_certificate,
    verify_f_independence,
)
from .risk import (
    linear_risk_closed_form,
    mc_risk,
    mc_risk_difference,
    orthant_domination_check,
    q_identity_check,
    sphere_ball_check,
    stein_identity_check,
    unbiased_risk_difference,
    unknown_scale_cross_term_check,
)
from .config import ExperimentConfig, RunManifest, load_config, parse_config
