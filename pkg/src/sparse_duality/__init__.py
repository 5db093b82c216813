"""Sparse linear models seen from both coefficient space and variance space.

Type I (MAP) and Type II (empirical Bayes) estimators, lambda learning,
noiseless recovery by reweighted l1, sparse logistic classification and a
benchmark harness.
"""

from importlib import metadata

try:
    __version__ = metadata.version("artifact")
except metadata.PackageNotFoundError:  # pragma: no cover - source checkout
    __version__ = "0.1.0"

from .core import (Dictionary, HyperState, SolveReport, check_gamma_concavity, dual_data_fit,
                   g2_penalty, posterior_mean, sigma_y_factor, type2_penalty_terms)
from .exceptions import (ConfigurationError, DegenerateUpdate, GenerationFailure,
                         InfeasibleConstraint, NonConvergence, NotPositiveDefinite,
                         SingularSystem, SparseDualityError)
from .penalties import PenaltyFamily, PenaltyKind
from .type1 import Type1Options, solve_type1, type1_gamma_objective, type1_objective
from .type2 import (NoiselessOptions, Type2Options, UpdateRule, em_update, eta_weights,
                    mackay_update, solve_type2, solve_type2_noiseless, type2_objective)
from .wl1 import WL1Mode, WL1Problem, solve_wl1
from .lambda_learn import (LambdaEstimate, LambdaOptions, learn_lambda_type1,
                           learn_lambda_type2, type1_lambda_objective)
from .classifier import (ClassifierOptions, LabeledDesign, fit_approx_l0_classifier,
                         fit_type2_classifier, nll, pi_bound)
from .bench import (ClusterSpec, ExperimentConfig, gen_clustered_dictionary,
                    run_lambda_sweep, run_recovery_experiment)
from .estimators import (ApproxL0Classifier, SparseRecovery, Type1Regressor, Type2Regressor,
                         Type2LogisticClassifier)
