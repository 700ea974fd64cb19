"""Random-Fourier-feature surrogate of the squared-exponential Gaussian process.

A draw of the surrogate is a finite cosine expansion

    f(x) = sqrt(2/N) * sum_j a_j * cos(w_j x + s_j)

with a_j ~ N(0, 1), frequencies w_j drawn from the spectral density of the
kernel c(x, x') = exp(-(x - x')^2 / lam), i.e. N(0, 2/lam), and phases
s_j ~ Unif(0, 2pi).  The expansion has mean zero and covariance exactly
c(x, y) for every N, and converges in distribution to the GP as N grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gpev.core import GpHyper

__all__ = ["RffBasis", "se_kernel", "sample_basis", "eval_surrogate", "design_matrix"]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class RffBasis:
    """One realization of the cosine basis: amplitudes, frequencies, phases.

    Immutable; evaluation and design-matrix construction are pure functions
    of the basis, safe to call concurrently.
    """

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray
    lam: float

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.float64)
        w = np.asarray(self.frequencies, dtype=np.float64)
        s = np.asarray(self.phases, dtype=np.float64)
        if not (a.ndim == w.ndim == s.ndim == 1 and len(a) == len(w) == len(s) >= 1):
            raise ValueError("amplitudes, frequencies and phases must be equal-length vectors")
        if np.any(s < 0.0) or np.any(s >= TWO_PI):
            raise ValueError("phases must lie in [0, 2pi)")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "phases", s)

    @property
    def n_basis(self) -> int:
        return len(self.amplitudes)

    @property
    def scale(self) -> float:
        """The sqrt(2/N) normalization in front of the cosine sum."""
        return math.sqrt(2.0 / self.n_basis)


def se_kernel(x, x2, lam: float):
    """Squared-exponential covariance exp(-(x - x2)^2 / lam).

    Accepts scalars or arrays (broadcasting); symmetric in (x, x2) and
    valued in (0, 1].
    """
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    d = np.subtract(x, x2)
    return np.exp(-np.square(d) / lam)


def sample_basis(hyper: GpHyper, lam: float, rng: np.random.Generator, n: int = None) -> RffBasis:
    """Draw a fresh basis from the three coordinate priors.

    ``n`` gives a data size from which to derive the basis count when the
    hyperparameters leave it unset.
    """
    if not lam > 0:
        raise ValueError(f"lam must be positive, got {lam}")
    if hyper.n_basis is None and n is None:
        raise ValueError("either hyper.n_basis or n must be given")
    n_basis = hyper.n_basis if hyper.n_basis is not None else hyper.resolve_n_basis(n)
    amplitudes = rng.standard_normal(n_basis)
    frequencies = rng.normal(0.0, math.sqrt(2.0 / lam), n_basis)
    phases = rng.uniform(0.0, TWO_PI, n_basis)
    return RffBasis(amplitudes, frequencies, phases, lam)


def eval_surrogate(basis: RffBasis, x):
    """Evaluate the cosine expansion at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=np.float64)
    feats = np.cos(np.multiply.outer(x, basis.frequencies) + basis.phases)
    return basis.scale * (feats @ basis.amplitudes)


def design_matrix(basis: RffBasis, xs: np.ndarray) -> np.ndarray:
    """Feature matrix with entries sqrt(2/N) * cos(w_j x_i + s_j).

    Row i dotted with the amplitude vector reproduces
    ``eval_surrogate(basis, xs[i])`` to machine precision.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=np.float64))
    return basis.scale * np.cos(np.outer(xs, basis.frequencies) + basis.phases)
