"""Recursive posterior Cramer-Rao lower bounds for nonlinear Gaussian models.

The package computes the recursive error lower bound for a discrete-time
state-space model with additive Gaussian noise three ways: a Monte-Carlo
reference over sampled trajectories, a cheap approximation evaluated at a
single point estimate, and a covariance-aware approximation built from
second-order moment propagation.  The difference between the two
approximations has a closed form, exposed alongside the recursions, and an
experiment driver compares everything against sigma-point and particle
filters on a standard scalar benchmark.
"""

from .experiment import (ALL_ESTIMATORS, ALL_METHODS, DEFAULT_SEED, AggregateResult,
                         ExperimentConfig, ExperimentError, RunResult, aggregate_bounds,
                         build_model, derive_run_seed, gap_series, rmse_series,
                         run_experiment, true_bound_series)
from .filters import (FilterOutput, ParticleSet, SigmaPointSet, UTParams, init_particles,
                      kalman_step, particle_moments, pf_step, regularize_cov, run_pf,
                      run_ukf, sigma_points, systematic_resample, ukf_step,
                      unscented_transform)
from .fim import (PSI_ZERO_THRESHOLD, BoundSeries, DecomposedFim, FimState, FimTriple,
                  bound_difference, decompose_terms, fim_recursion_step,
                  fim_via_decomposition, initial_fim, mean_cov_terms, mean_only_terms,
                  pcrlb_from_theta_pi, true_fim_terms_mc)
from .linalg import NumericError, inv_lemma_split, spd_inverse, symmetrize
from .model import (GaussianPrior, SystemModel, Trajectory, fd_hessians, fd_jacobian,
                    linear_gaussian_model, sample_trajectory, ungm_model)
from .moments import (GaussianBelief, MomentMapDerivatives, PropagatedMoments,
                      measurement_moment_map_derivatives, propagate_measurement_moments,
                      propagate_state_moments, state_moment_map_derivatives)

__version__ = "0.1.0"

__all__ = [
    "ALL_ESTIMATORS",
    "ALL_METHODS",
    "AggregateResult",
    "BoundSeries",
    "DEFAULT_SEED",
    "DecomposedFim",
    "ExperimentConfig",
    "ExperimentError",
    "FilterOutput",
    "FimState",
    "FimTriple",
    "GaussianBelief",
    "GaussianPrior",
    "MomentMapDerivatives",
    "NumericError",
    "PSI_ZERO_THRESHOLD",
    "ParticleSet",
    "PropagatedMoments",
    "RunResult",
    "SigmaPointSet",
    "SystemModel",
    "Trajectory",
    "UTParams",
    "aggregate_bounds",
    "bound_difference",
    "build_model",
    "decompose_terms",
    "derive_run_seed",
    "fd_hessians",
    "fd_jacobian",
    "fim_recursion_step",
    "fim_via_decomposition",
    "gap_series",
    "init_particles",
    "initial_fim",
    "inv_lemma_split",
    "kalman_step",
    "linear_gaussian_model",
    "mean_cov_terms",
    "mean_only_terms",
    "measurement_moment_map_derivatives",
    "particle_moments",
    "pcrlb_from_theta_pi",
    "pf_step",
    "propagate_measurement_moments",
    "propagate_state_moments",
    "regularize_cov",
    "rmse_series",
    "run_experiment",
    "run_pf",
    "run_ukf",
    "sample_trajectory",
    "sigma_points",
    "spd_inverse",
    "state_moment_map_derivatives",
    "symmetrize",
    "systematic_resample",
    "true_bound_series",
    "true_fim_terms_mc",
    "ukf_step",
    "unscented_transform",
    "ungm_model",
]
