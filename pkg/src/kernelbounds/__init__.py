"""Deterministic worst-case bounds for kernel regression with energy-bounded noise."""

__version__ = "0.1.0"

from ._backend import BACKEND_NAME
from .baselines import FogelEllipsoid, ProbBoundParams, fogel_ellipsoid, golomb_bound, prob_bound
from .bounds import (
    BoundResult,
    BoundSolver,
    CaseLabel,
    SigmaOptimizerConfig,
    case1_bound,
    case1_feasible,
    case2_bound,
    case2_feasible,
    corollary_bound,
    envelope,
    optimal_bound,
    relaxed_lower,
    relaxed_upper,
)
from .decomp import FeatureDecomposition, NoiseCholesky, feature_decompose, noise_cholesky
from .errors import (
    BoundError,
    HypothesisFalsified,
    InvalidInput,
    NotPD,
    NotPSD,
    NumericalBreakdown,
    OptimizerFailed,
    OracleInconclusive,
    RunDegraded,
    classify_falsification,
)
from .gp_core import ProblemData, beta_sq, interpolant_norm_sq, posterior_mean, posterior_var
from .kernels import Dirac, KernelSpec, LinearFeatures, Scaled, SquaredExponential, gram_matrix, kernel_eval
from .oracle import OracleConfig, QcqpInstance, oracle_lower, oracle_upper
