"""Normal-approximation bounds from size-bias couplings.

A library and CLI that constructs size-bias couplings, Monte
Carlo-estimates every term of four coupling-based bound theorems, certifies
the resulting bound against the empirical distance to normality, and
validates the closed-form moment formulas with exact enumeration oracles.
"""

from .bounds import (BoundReport, LocalDepStats, MultivariateCouplingStats,
                     UnivariateCouplingStats, bound_multivariate_local,
                     bound_multivariate_size_bias, bound_univariate_local,
                     bound_univariate_size_bias, covariance_identity_check)
from .harness import Accumulator, StreamConfig, estimate_gap, parallel_mc
from .linalg import inverse_sqrt, max_abs_norm, whiten
from .report import ExperimentReport
from .sizebias import (CoupledPairSampler, DiscreteDistribution, IndexPicker,
                       couple_function_sum, couple_indicator_collection,
                       couple_sum_independent, size_bias_discrete,
                       verify_characterization)
from .stein import SteinSolution, derivative_bound_check, ou_smoothing, \
    pde_residual, solve_g
from .testfuncs import (GaussianExpectation, SmoothTestFunction,
                        parse_test_function, phi_h)

__version__ = "0.1.0"

__all__ = [
    "Accumulator", "BoundReport", "CoupledPairSampler",
    "DiscreteDistribution", "ExperimentReport", "GaussianExpectation",
    "IndexPicker", "LocalDepStats", "MultivariateCouplingStats",
    "SmoothTestFunction", "SteinSolution", "StreamConfig",
    "UnivariateCouplingStats", "bound_multivariate_local",
    "bound_multivariate_size_bias", "bound_univariate_local",
    "bound_univariate_size_bias", "couple_function_sum",
    "couple_indicator_collection", "couple_sum_independent",
    "covariance_identity_check", "derivative_bound_check", "estimate_gap",
    "inverse_sqrt", "max_abs_norm", "ou_smoothing", "parallel_mc",
    "parse_test_function", "pde_residual", "phi_h", "size_bias_discrete",
    "solve_g", "verify_characterization", "whiten",
]
