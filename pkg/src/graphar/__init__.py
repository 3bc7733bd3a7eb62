"""Link prediction in graph sequences by joint low-rank, sparse and
autoregressive feature regression."""

from .evaluation import auc, cross_validate, nn_scores, shrink_scores
from .features import FeatureMap, degree_map, fit_svd_projection, projection_map
from .generator import GeneratorParams, generate
from .kernels import compute_svd, soft_threshold, svd_shrink
from .objectives import Hyperparams, make_problem
from .solvers import SolverConfig, solve_factorized, solve_gfb

__version__ = "0.1.0"
