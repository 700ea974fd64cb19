"""Bayesian errors-in-variables regression toolkit.

Fits a nonparametric regression Y = f(X) + eps when the covariate X is only
observed through a noisy proxy W = X + u.  The main estimator couples a
random-Fourier-feature surrogate of a squared-exponential Gaussian process
with a truncated Dirichlet-process Gaussian-mixture prior on the covariate
density, sampled by Metropolis-within-Gibbs.  Frequentist deconvoluting-kernel
estimators and an exact-GP variant are included as baselines, together with a
simulation harness and a CLI.
"""

from gpev.core import (
    Dataset,
    DpmmHyper,
    GpHyper,
    NoiseConfig,
    RunConfig,
    load_dataset,
    make_rng,
    save_dataset,
    validate_config,
)

__all__ = [
    "Dataset",
    "DpmmHyper",
    "GpHyper",
    "NoiseConfig",
    "RunConfig",
    "load_dataset",
    "make_rng",
    "save_dataset",
    "validate_config",
]

__version__ = "0.1.0"
