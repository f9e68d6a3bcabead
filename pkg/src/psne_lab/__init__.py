"""Learn sparse linear influence games from noisy joint-action data and
verify exact recovery of their pure-strategy Nash equilibrium sets."""

__version__ = "0.1.0"

RNG_ALGORITHM = "numpy-pcg64"

from .diagnostics import (AssumptionReport, HessianDecomposition, Lemma1Check,
                          SampleComplexityBound, assumption_report,
                          expected_hessian, expected_hessian_direct, kappa,
                          lemma1_eigenvalue_check, lemma2_gradient_bound, nu,
                          second_moment, theorem_sample_bound)
from .errors import CapacityError, DomainError, PsneLabError, UsageError
from .game import (LinearInfluenceGame, Neighborhood, PsneSet, decode_actions,
                   encode_actions, enumerate_psne, game_hash, is_psne,
                   load_game, min_psne_payoff, neighborhood, payoff,
                   random_lig, save_game, scale_game)
from .harness import (CellRecord, ExperimentConfig, ExperimentResult,
                      PlayerDiagnostics, TrialDiagnostics, TrialRecord,
                      calibrate_lambda, derive_seed, run_cell, run_sweep,
                      run_trial, write_result)
from .recovery import (LambdaWindow, LearnedGame, PsneComparison,
                       lambda_schedule, learn_game, psne_equivalent,
                       save_learned_game, signed_neighborhood_match,
                       theorem_lambda_window, zero_fit_threshold)
from .sampler import (Dataset, DatasetMeta, empirical_mixture_fraction,
                      exact_pmf, exact_pmf_signal_form, load_dataset,
                      pmf_table, sample_dataset, save_dataset)
from .solver import (FitReport, SolverOptions, eta, feature_matrix, featurize,
                     fit_l1_logistic, gradient, hessian, loss, max_eigenvalue,
                     pack_params, param_vector, soft_threshold, unpack_params)
