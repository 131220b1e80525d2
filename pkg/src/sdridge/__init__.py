"""Optimal self-distillation for ridge regression.

The teacher is ridge regression; the pure-distilled (PD) student is ridge
refit on the teacher's fitted values; self-distilled students lie on the
affine path between them. This package provides the closed-form optimal
mixing weight, one-shot GCV tuning, proportional-asymptotic risk curves,
multi-round / fresh-design / kernel extensions, and a simulation harness.
"""

__version__ = "0.1.0"

from .errors import (
    ConvexityError,
    CorrectionBlowupError,
    DataError,
    DomainError,
    NumericError,
    ParameterError,
    ParseError,
    SDRidgeError,
    TangentIdentityError,
)
from .kernels import BACKEND
from .ridge import (
    Dataset,
    GeneralizedRidge,
    KernelRidge,
    OrdinaryRidge,
    RidgeFit,
    RidgeSolver,
    fit_ridge,
    hat_traces,
    lambda_derivative,
    mixed_label_fit,
    pd_refit,
    sd_predict,
)
from .structural import (
    MixResult,
    RiskComponents,
    components_from_predictions,
    curvature_test,
    improvement_margin,
    optimal_mix,
    oracle_from_coefs,
    risk_components_empirical,
    risk_components_oracle,
    risk_slope,
    sd_risk_at,
)
from .asymptotics import (
    SpectralModel,
    extreme_limits,
    freshx_isotropic_limits,
    isotropic_closed_forms,
    mp_negative_moments,
    solve_kappa,
    theoretical_risks,
    theory_curve,
)
from .tuning import GcvEstimates, one_shot, tune_grid
from .variants import (
    FreshStudent,
    OracleRisk,
    RoundState,
    TestSetRisk,
    freshx_fit,
    multiround,
    smoother_sd,
)
