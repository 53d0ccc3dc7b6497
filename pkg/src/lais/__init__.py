"""Layered adaptive importance sampling.

MCMC chains explore a target (the upper layer) and their states become
location parameters of Gaussian proposals; importance samples drawn
around those locations are weighted with mixture denominators (the
lower layer). Variants split the data across chains, recycle the
chains' own candidates, or compress the proposal bank by clustering.
"""

from .compression import (ClusterAssignment, CompressedMixture,
                          cluster_locations, compress_locations,
                          compressed_covariance, summarize_clusters)
from .config import config_from_dict, config_to_toml, parse_config
from .errors import (BudgetMismatchError, ChainInitError, ConfigError,
                     DegenerateWeightsError, GradientError, LaisError,
                     NumericalError)
from .gaussian import as_covariance, gaussian_log_pdf, sample_gaussian
from .harness import (ExperimentConfig, ExperimentResult, LowerSpec, RunRow,
                      RunSpec, TargetSpec, UpperSpec, aggregate_mse,
                      baseline_naive_mc, baseline_plain_mcmc, build_model,
                      emit, expected_ledger, results_json_schema,
                      run_experiment, run_single, verify_budget)
from .ledger import EvalLedger
from .mcmc import (ChainConfig, ChainRecord, chain_record_from_csv,
                   chain_record_to_csv, leapfrog, run_chain,
                   run_parallel_chains)
from .quadrature import evidence_quadrature_3d, grid_posterior_moments
from .rng import derive_rng, derive_seed
from .targets import (Box, ConjugateBasisModel, DataModel, GaussianMixture,
                      LogisticMapModel, RegressionModel, TargetDensity,
                      bimodal_gaussian_pair, five_mode_mixture,
                      gaussian_target, high_dim_mixture,
                      make_conjugate_dataset, make_logistic_map_trajectory,
                      make_regression_dataset, partition_data, shifted_copy)
from .weighting import (DenominatorScheme, EstimatorOutput, ProposalBank,
                        WeightedSampleSet, build_bank, draw_lower_samples,
                        equivalent_proposal_check, estimate,
                        recycle_weighting, sample_set_from_csv,
                        sample_set_to_csv, scheme, weight_points,
                        weight_samples)

__version__ = "0.1.0"
