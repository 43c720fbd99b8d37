"""Method-of-moments estimators for mixtures of two Gaussians."""

from .combined import Branch, RegimeReport, recover_1d, regime
from .errors import (
    DegenerateMeans,
    DimensionMismatch,
    InvalidMixture,
    MatchFailure,
    MixtureError,
    NegativeDiscriminant,
    NegativeRadicand,
    NoSecondRoot,
    NonPositiveX4,
    NonZeroMean,
    NoValidRoot,
    RecoveryFailure,
    SingularCovariance,
    TooFewSamples,
)
from .lowerbound import add_noise, hellinger_scaling_experiment, hellinger_sq, matching_mixture
from .mixture import (
    ExcessMoments,
    Gaussian1D,
    Mixture1D,
    MixtureD,
    Reparam,
    excess_from_raw,
    excess_from_reparam,
    exact_excess_moments,
    param_distance,
    raw_moments,
    recover_probs_and_vars,
    reparameterize,
    sample,
    sample_labeled,
    tv_gaussians_1d,
    tv_gaussians_upper_bound,
    variance_1d,
    variance_d,
)
from .moments import MomentEstimate, estimate_excess_moments, estimate_variance_factor2
from .pearson import AlphaResult, build_p5, build_p6, recover_alpha, recover_from_moments, y_max
from .poly import Poly, real_roots
from .reduction import (
    NetSpec,
    ProjectionSet,
    ReductionReport,
    recover_4d,
    recover_d,
    sample_truncated_directions,
)
from .samemean import recover_same_mean
from .tv import TVConfig, TVReport, empirical_gaussian, median_select, recover_tv

__version__ = "0.1.0"
