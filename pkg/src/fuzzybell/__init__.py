"""Dichotomic polarization measurements on multiphoton singlet and down-converted states."""

__version__ = "0.1.0"

from .analysis import (
    FringePattern,
    VisibilityCurve,
    compare_at_matched_success,
    fringe_sweep,
    harmonic_content,
    harmonic_share,
    linear_reference_ratio,
    success_probability,
    visibility,
    visibility_curve,
)
from .chsh import AngleSettings, CHSHResult, correlation_E, maximize_chsh
from .errors import ConfigError, FuzzyBellError, SizeCapError, UndefinedCorrelationError
from .loss import (
    LossChannel,
    McConfig,
    OutcomeMatrix,
    fringe_point,
    outcome_matrix_exact,
    outcome_matrix_mc,
    spdc_fringe_point,
    thin_binomial_exact,
)
from .measure import (
    JointOutcomeProbs,
    MeasurementScheme,
    OutcomeWeights,
    joint_probabilities,
    outcome_weights,
    parity_correlation,
)
from .state import (
    CoefficientMatrix,
    SingletSpec,
    SpdcWeights,
    mean_photons,
    singlet_coefficients,
    spdc_weights,
)
