"""Matrix completion with a single Gaussian prior fitted by MAP-EM."""
from .data import (
    SparseRatingMatrix,
    StrongSplit,
    Triplets,
    WeakSplit,
    filter_matrix,
    load_movielens,
    load_ratings,
    sample_users,
    split_strong,
    split_weak,
)
from .em import EmConfig, EmResult, e_step, initialize, m_step, run_em
from .errors import NotPositiveDefinite
from .evaluation import (
    EACHMOVIE_FACTOR,
    MOVIELENS_FACTOR,
    EvalReport,
    evaluate_strong,
    evaluate_weak,
    nmae,
    postprocess,
)
from .gaussian import GaussianModel, MaskedSignal, NoiseModel, log_posterior, map_estimate
from .linalg import CholeskyFactor, cholesky, solve_spd

__version__ = "0.1.0"
