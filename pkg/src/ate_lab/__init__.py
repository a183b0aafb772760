"""Average treatment effect estimation with known and estimated propensity scores."""

from .core import (
    EstimateResult,
    LogisticPropensity,
    PropensityFunction,
    Role,
    Sample,
    Unit,
    ValidationReport,
    read_sample_csv,
    validate_sample,
    weighted_group_means,
    write_sample_csv,
)
from .errors import (
    AteLabError,
    DegenerateDenominator,
    DegenerateDesign,
    EmptyCellArm,
    EmptySupport,
    FitFailure,
    OverlapViolation,
    SingularDesign,
    UnsupportedModel,
)
from .estimators import (
    ESTIMATORS,
    asycov_xb_hat,
    asycov_xx_hat,
    estimate,
    imputation_estimated,
    imputation_finite_support,
    imputation_known,
    ipw_estimated,
    ipw_known,
    kps,
    lm,
    x_ipw,
)
from .nuisance import fit_outcome_regression, fit_propensity

__version__ = "0.1.0"
