"""Minibatch MCMC for Gaussian process regression with factorized
nearest-neighbor likelihoods: exact full-data samplers, an adaptive-batch
Barker acceptance test, fixed-batch Metropolis-Hastings, kriging prediction,
and proper-scoring evaluation."""

from .accept import (AcceptanceDiagnostics, barker_accept_step, batch_gate,
                     classical_gate_value, gate_value, mh_accept_step, sample_variance)
from .correction import (CorrectionDistribution, CorrectionGrid,
                         fit_correction_distribution, load_correction,
                         save_correction, select_penalty)
from .errors import EstimationError, GpMiniError, NumericalError, ValidationError
from .gibbs import BatchSumEstimate, draw_beta_coef, draw_sigma2, gibbs_sweep, minibatch_sum
from .model import (ContinuousThetaPrior, DiscreteThetaPrior, GpParams, KernelSpec,
                    PriorSpec, SpatialDataset, correlation, covariance_entry,
                    default_phi_bounds, default_priors, domain_diameter,
                    from_unconstrained, make_dataset, to_unconstrained,
                    uniform_theta_grid)
from .neighbors import (NeighborGraph, build_graph, build_neighbor_sets,
                        load_neighbor_graph, order_observations, save_neighbor_graph)
from .predict import PredictiveSummary, predict_at
from .samplers import (AlgoConfig, ChainOutput, adapt_proposal_scales, propose_theta,
                       run_chain, split_batches)
from .scoring import (crps_ensemble, crps_gaussian, energy_score,
                      identifiable_combination, interval_score, prediction_metrics)
from .simulate import simulate_dataset
from .vecchia import ConditionalCache, VecchiaEngine, dense_loglik, vecchia_loglik

__version__ = "0.1.0"
