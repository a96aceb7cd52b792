"""Simulation and estimation laboratory for the Sine_beta point process.

Samples the process through its phase-diffusion representation (a family
of coupled SDEs on one complex Brownian path), estimates integrated and
truncated correlation functions by Monte Carlo, and ships the supporting
analytic toolkit: exact beta = 2 determinantal oracles, partition
combinatorics, complex-Gaussian Hellinger/total-variation calculus and
spectral regularization, plus a reproducible experiment runner.
"""

from ._version import __version__
from .carousel import (FreezeCriterion, PointConfiguration, ResolutionFailure,
                       count_batch, count_points, freeze_horizon,
                       girsanov_tilted_path, log_tangent_path,
                       sample_configuration)
from .correlations import (CorrelationEstimate, IntervalCluster,
                           fit_decay_exponent, fully_truncated,
                           partially_truncated, product_moment)
from .coupling import (DegenerateCovariance, HermitianBlockCov,
                       determinant_ratio_bounds, hellinger_complex_gaussian,
                       increment_covariance, spectral_regularize,
                       tv_upper_bound)
from .experiments import ExperimentConfig, run
from .oracles import (forrester_haldane_leading, overcrowding_bound,
                      rho2_truncated_beta2_integrated, rho_k_beta2,
                      sine_kernel)
from .partitions import (SetPartition, bell, enumerate_partitions,
                         mobius_truncation_weights, ordered_bell, stirling2)
from .sde import (BetaParams, DiffusionTrajectory, NoisePath,
                  NumericalFailure, euler_l2_error_bound, generate_noise,
                  integrate_difference, integrate_family,
                  piecewise_constant_scheme, refine_noise)

__all__ = [
    "__version__",
    "BetaParams", "NoisePath", "DiffusionTrajectory", "NumericalFailure",
    "generate_noise", "refine_noise", "integrate_family",
    "integrate_difference", "piecewise_constant_scheme",
    "euler_l2_error_bound",
    "FreezeCriterion", "PointConfiguration", "ResolutionFailure",
    "count_points", "count_batch", "sample_configuration", "freeze_horizon",
    "log_tangent_path", "girsanov_tilted_path",
    "IntervalCluster", "CorrelationEstimate", "product_moment",
    "partially_truncated", "fully_truncated", "fit_decay_exponent",
    "HermitianBlockCov", "DegenerateCovariance",
    "hellinger_complex_gaussian", "tv_upper_bound", "increment_covariance",
    "spectral_regularize", "determinant_ratio_bounds",
    "SetPartition", "enumerate_partitions", "stirling2", "bell",
    "ordered_bell", "mobius_truncation_weights",
    "sine_kernel", "rho_k_beta2", "rho2_truncated_beta2_integrated",
    "forrester_haldane_leading", "overcrowding_bound",
    "ExperimentConfig", "run",
]
