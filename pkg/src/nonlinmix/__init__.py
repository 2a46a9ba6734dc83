"""Recovery of simplex-structured factors from post-nonlinear mixtures.

Typical use::

    from nonlinmix import run_pipeline
    result = run_pipeline(X, K=40, r=4, shared=True)
    S_hat = result.S_hat
"""

from .errors import (
    DimensionError,
    DomainError,
    InputError,
    InvariantError,
    NonlinmixError,
    NumericalError,
    ParameterError,
    ParseError,
    PreconditionError,
    SolverFailure,
    StructureError,
)
from .evaluation import (
    AffineCompositeFit,
    TrialReport,
    aligned_mse,
    composite_affinity,
    data_domain,
    empirical_cdf,
    simplex_projection_2d,
)
from .feasibility import BalancingVector, balancing_vector, dense_nullspace_vector, dense_span_combination
from .mixture import (
    MixingMatrix,
    MixtureDataset,
    NonlinearSpec,
    SourceMatrix,
    apply_model,
    check_incoherence,
    eval_nonlinearity,
    generate_mixing_matrix,
    invert_nonlinearity,
    sample_dirichlet,
    ss_heuristic,
)
from .mves import ReducedData, SimplexFactorization, affine_fit, mves, recover_sources
from .network import NetworkParams, forward, jacobian, objective, sum_residual, transform
from .pipeline import ExperimentConfig, ExperimentReport, run_pipeline, run_synthetic_experiment
from .solver import FitResult, SolveOptions, fit_nonlinearity, solve_bounded_nls

__version__ = "0.1.0"
