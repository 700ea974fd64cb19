"""Truncated stick-breaking Gaussian-mixture prior with blocked Gibbs updates.

The latent covariates follow a mixture of H normal components whose weights
come from stick-breaking with Beta(1, alpha) sticks, truncated by forcing the
last stick to 1 so the weights always form an exact simplex.  Component
means and precisions carry a conjugate normal-gamma base measure:

    tau_h ~ Gamma(a_tau, rate=b_tau),   mu_h | tau_h ~ N(mu0, kappa0 / tau_h)

Labels, atoms and sticks are updated in blocks from their exact conditionals;
empty components are refreshed from the base measure each sweep, which keeps
the chain irreducible across all H components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from gpev.core import DpmmHyper

__all__ = [
    "DpmmState",
    "stick_to_weights",
    "categorical_rows",
    "update_labels",
    "update_atoms",
    "update_sticks",
    "mixture_density",
    "init_state",
]

LOG_TWO_PI = math.log(2.0 * math.pi)


def stick_to_weights(nu: np.ndarray) -> np.ndarray:
    """Map stick fractions to mixture weights pi_h = nu_h * prod_{l<h}(1 - nu_l)."""
    nu = np.asarray(nu, dtype=np.float64)
    if np.any(nu <= 0.0) or np.any(nu > 1.0):
        raise ValueError("sticks must lie in (0, 1]")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - nu[:-1])))
    return nu * remaining


@dataclass(frozen=True)
class DpmmState:
    """Mixture state: sticks, weights, atoms and per-observation labels.

    ``pi`` is always derived from ``nu`` (use :meth:`create`), so the
    stick-breaking identity holds exactly.  Labels index components 0..H-1.
    """

    nu: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=np.float64)
        pi = np.asarray(self.pi, dtype=np.float64)
        mu = np.asarray(self.mu, dtype=np.float64)
        tau = np.asarray(self.tau, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        H = len(nu)
        if not (len(pi) == len(mu) == len(tau) == H >= 1):
            raise ValueError("nu, pi, mu, tau must share length H >= 1")
        if not np.array_equal(pi, stick_to_weights(nu)):
            raise ValueError("pi does not match the stick-breaking transform of nu")
        if np.any(tau <= 0.0):
            raise ValueError("precisions must be positive")
        if labels.ndim != 1 or (labels.size and (labels.min() < 0 or labels.max() >= H)):
            raise ValueError("labels must be a vector with values in 0..H-1")
        for name, arr in (("nu", nu), ("pi", pi), ("mu", mu), ("tau", tau), ("labels", labels)):
            object.__setattr__(self, name, arr)

    @classmethod
    def create(cls, nu, mu, tau, labels) -> "DpmmState":
        return cls(nu=nu, pi=stick_to_weights(nu), mu=mu, tau=tau, labels=labels)

    @property
    def truncation(self) -> int:
        return len(self.nu)


def categorical_rows(log_masses: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one category per row from unnormalized log masses.

    Works entirely in log space with per-row max subtraction, so the result
    is invariant to multiplying all masses in a row by a positive constant.
    """
    log_masses = np.asarray(log_masses, dtype=np.float64)
    shifted = log_masses - log_masses.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(log_masses.shape[0]) * cdf[:, -1]
    return (cdf < u[:, None]).sum(axis=1).astype(np.int64)


def _log_component_masses(x: np.ndarray, state: DpmmState) -> np.ndarray:
    """Unnormalized log posterior mass of each component for each point."""
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.pi)
    z = x[:, None] - state.mu[None, :]
    return log_pi + 0.5 * (np.log(state.tau) - LOG_TWO_PI) - 0.5 * state.tau * z * z


def update_labels(x: np.ndarray, state: DpmmState, rng: np.random.Generator) -> np.ndarray:
    """Draw each label from its categorical conditional given weights and atoms."""
    x = np.asarray(x, dtype=np.float64)
    if state.truncation == 1:
        return np.zeros(len(x), dtype=np.int64)
    return categorical_rows(_log_component_masses(x, state), rng)


def update_atoms(
    x: np.ndarray,
    labels: np.ndarray,
    hyper: DpmmHyper,
    rng: np.random.Generator,
) -> tuple:
    """Draw (mu, tau) per component from the normal-gamma conjugate posterior.

    Components with members use the standard conjugate update of
    (mu0, kappa0, a_tau, b_tau); empty components are drawn from the prior,
    which is the same formula with zero counts.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    H = hyper.truncation
    counts = np.bincount(labels, minlength=H).astype(np.float64)
    sums = np.bincount(labels, weights=x, minlength=H)
    sumsq = np.bincount(labels, weights=x * x, minlength=H)
    with np.errstate(invalid="ignore"):
        xbar = np.where(counts > 0, sums / np.maximum(counts, 1.0), hyper.mu0)
    ssq = np.maximum(sumsq - counts * xbar * xbar, 0.0)

    denom = 1.0 + hyper.kappa0 * counts
    mean_post = (hyper.mu0 + hyper.kappa0 * sums) / denom
    kappa_post = hyper.kappa0 / denom
    a_post = hyper.a_tau + 0.5 * counts
    b_post = hyper.b_tau + 0.5 * ssq + 0.5 * counts * (xbar - hyper.mu0) ** 2 / denom

    tau = rng.gamma(a_post, 1.0 / b_post)
    tau = np.maximum(tau, 1e-300)
    mu = rng.normal(mean_post, np.sqrt(kappa_post / tau))
    return mu, tau


def update_sticks(
    labels: np.ndarray,
    alpha: float,
    truncation: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw sticks from Beta(1 + n_h, alpha + sum_{l>h} n_l); last stick is 1."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=truncation).astype(np.float64)
    greater = counts[::-1].cumsum()[::-1] - counts
    nu = rng.beta(1.0 + counts, alpha + greater)
    nu = np.clip(nu, 1e-12, 1.0)
    nu[-1] = 1.0
    return nu


def mixture_density(state: DpmmState, x) -> np.ndarray:
    """Mixture density sum_h pi_h * N(x; mu_h, 1/tau_h) at scalar or array x."""
    x = np.asarray(x, dtype=np.float64)
    z = x[..., None] - state.mu
    comps = np.sqrt(state.tau / (2.0 * math.pi)) * np.exp(-0.5 * state.tau * z * z)
    return comps @ state.pi


def init_state(x: np.ndarray, hyper: DpmmHyper, rng: np.random.Generator) -> DpmmState:
    """Data-informed starting state: atoms spread over the range of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    H = hyper.truncation
    center, spread = float(np.mean(x)), float(np.std(x)) + 1e-8
    mu = rng.normal(center, spread, H)
    tau = np.full(H, 1.0 / spread**2)
    nu = np.clip(rng.beta(1.0, hyper.alpha, H), 1e-12, 1.0)
    nu[-1] = 1.0
    state = DpmmState.create(nu, mu, tau, np.zeros(len(x), dtype=np.int64))
    labels = update_labels(x, state, rng)
    return replace(state, labels=labels)
