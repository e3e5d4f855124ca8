"""Maximum likelihood, Fisher information and normalized scores"""

from k2gof.estimation.fit import (
    FisherMatrix,
    FitResult,
    NormalizedScores,
    fisher_information,
    inverse_sqrt,
    likelihood_gradient,
    log_likelihood,
    mle_fit,
    normalized_scores,
    require_converged,
)

__all__ = [
    "FisherMatrix",
    "FitResult",
    "NormalizedScores",
    "fisher_information",
    "inverse_sqrt",
    "likelihood_gradient",
    "log_likelihood",
    "mle_fit",
    "normalized_scores",
    "require_converged",
]
