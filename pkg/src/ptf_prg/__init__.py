"""Moment-matching pseudorandom generator for Gaussian polynomial threshold functions."""

from .poly import (
    HERMITE,
    STANDARD,
    Poly,
    PolyError,
    derivative,
    eval_many,
    eval_poly,
    exact_l2_norm,
    gradient_spectrum,
    hermite_univariate,
    hypercontractive_qnorm_bound,
    noise_operator,
    to_hermite,
    to_standard,
)
from .gaussian import (
    RestrictionParams,
    deviation_moment_bound,
    hypervariance,
    is_well_behaved,
    mollifier,
    phi,
    restrict,
    sign_fixed_probability_bound,
)
from .prg import MomentSampler, PrgConfig, gauss_hermite_nodes, prg_output, sample_moment_vector, seed_accounting

__version__ = "0.1.0"
