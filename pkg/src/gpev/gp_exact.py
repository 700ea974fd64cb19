"""Exact (non-surrogate) Gaussian-process machinery.

Provides the standard predictive formula, the marginal likelihood
Y | X, lam, sigma2 ~ N(0, C_lam(X, X) + sigma2 I), and the full-scale chain
variant that marginalizes the regression function instead of expanding it in
a cosine basis.  Every latent-covariate proposal there costs a fresh O(n^3)
factorization, which is the point of comparison against the surrogate chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from gpev.core import Dataset, RunConfig
from gpev.dpmm import DpmmState, init_state, update_atoms, update_labels, update_sticks
from gpev.rff import se_kernel
from gpev.sampler import ChainAbort, ChainSamples, run_chain

__all__ = [
    "GpPredictive",
    "gp_predict",
    "marginal_loglik",
    "run_chain_gpev_f",
    "run_gp_ignore_error",
]

JITTER = 1e-8
DIAG_SLACK = 1e-10
LOG_TWO_PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GpPredictive:
    """Predictive mean and covariance over a set of points.

    The covariance is symmetrized on construction; diagonal entries that dip
    below zero by numerical noise (within a 1e-10 slack) are clamped to zero.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.covariance, dtype=np.float64)
        cov = 0.5 * (cov + cov.T)
        diag = np.diagonal(cov)
        if diag.min(initial=0.0) < -DIAG_SLACK:
            raise FloatingPointError(
                f"predictive covariance diagonal at {diag.min()}, below the numerical slack"
            )
        np.fill_diagonal(cov, np.maximum(diag, 0.0))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One function draw from N(mean, covariance)."""
        ridge = self.covariance + JITTER * np.eye(len(self.mean))
        lower = np.linalg.cholesky(ridge)
        return self.mean + lower @ rng.standard_normal(len(self.mean))


def gp_predict(
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_star: np.ndarray,
    lam: float,
    sigma2: float,
) -> GpPredictive:
    """Predictive distribution of the noiseless function at ``x_star``.

    mean = c(X*, X) [c(X, X) + sigma2 I]^{-1} Y and the matching Schur
    complement for the covariance, via a Cholesky factorization of the noisy
    train kernel.  With no training points this is the prior.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    x_train = np.atleast_1d(np.asarray(x_train, dtype=np.float64))
    y_train = np.atleast_1d(np.asarray(y_train, dtype=np.float64))
    x_star = np.atleast_1d(np.asarray(x_star, dtype=np.float64))
    k_ss = se_kernel(x_star[:, None], x_star[None, :], lam)
    if len(x_train) == 0:
        return GpPredictive(np.zeros(len(x_star)), k_ss)
    k_tt = se_kernel(x_train[:, None], x_train[None, :], lam)
    k_st = se_kernel(x_star[:, None], x_train[None, :], lam)
    noisy = k_tt + (sigma2 + JITTER) * np.eye(len(x_train))
    cho = sla.cho_factor(noisy, lower=True, check_finite=False)
    mean = k_st @ sla.cho_solve(cho, y_train, check_finite=False)
    cov = k_ss - k_st @ sla.cho_solve(cho, k_st.T, check_finite=False)
    return GpPredictive(mean, cov)


def _mll_from_kernel(kernel: np.ndarray, y: np.ndarray, sigma2: float) -> float:
    noisy = kernel + (sigma2 + JITTER) * np.eye(len(y))
    lower = np.linalg.cholesky(noisy)
    half = sla.solve_triangular(lower, y, lower=True, check_finite=False)
    logdet = 2.0 * float(np.sum(np.log(np.diagonal(lower))))
    return -0.5 * (float(half @ half) + logdet + len(y) * LOG_TWO_PI)


def marginal_loglik(x: np.ndarray, y: np.ndarray, lam: float, sigma2: float) -> float:
    """log N(y; 0, C_lam(x, x) + sigma2 I) via Cholesky."""
    x = np.asarray(x, dtype=np.float64)
    return _mll_from_kernel(se_kernel(x[:, None], x[None, :], lam), np.asarray(y, float), sigma2)


def run_chain_gpev_f(
    data: Dataset,
    config: RunConfig,
    rng: np.random.Generator,
    grid: Optional[np.ndarray] = None,
) -> ChainSamples:
    """Full-scale chain: the regression function is marginalized out.

    Latent covariates move by the same measurement-times-prior proposal as
    the surrogate chain but are accepted against the marginal likelihood,
    one coordinate at a time; the bandwidth moves by random-walk MH on its
    logarithm.  Function draws on the grid come from the predictive formula
    at each retained state.  Noise variances must be fixed for this variant.
    """
    if config.noise.sigma2_sampled or config.noise.delta2_sampled:
        raise ValueError("the full-scale variant requires fixed sigma2 and delta2")
    grid = config.grid if grid is None else np.asarray(grid, dtype=np.float64)
    n = data.n
    y = data.y
    sigma2 = config.noise.sigma2
    delta2 = config.noise.delta2
    a0, b0 = config.gp.lambda_prior_shape, config.gp.lambda_prior_scale

    lam = config.gp.fixed_lambda if config.gp.fixed_lambda is not None else a0 * b0
    sample_lambda = config.gp.fixed_lambda is None
    x = data.w.copy()
    hyper = config.dpmm
    dpmm = init_state(x, hyper, rng)

    kernel = se_kernel(x[:, None], x[None, :], lam)
    mll = _mll_from_kernel(kernel, y, sigma2)

    accepted = {"w": 0, "s": 0, "x": 0, "lam": 0}
    proposed = {"w": 0, "s": 0, "x": 0, "lam": 0}
    keep_f, keep_lam, keep_lp = [], [], []
    keep_x, keep_pi, keep_mu, keep_tau = [], [], [], []

    for sweep in range(1, config.iters + 1):
        labels = update_labels(x, dpmm, rng)
        mu, tau = update_atoms(x, labels, hyper, rng)
        nu = update_sticks(labels, hyper.alpha, hyper.truncation, rng)
        dpmm = DpmmState.create(nu, mu, tau, labels)

        tau_i = tau[labels]
        mu_i = mu[labels]
        v = 1.0 / (1.0 / delta2 + tau_i)
        m = v * (data.w / delta2 + mu_i * tau_i)
        for i in range(n):
            xi_new = m[i] + math.sqrt(v[i]) * rng.standard_normal()
            row_old = kernel[i, :].copy()
            row_new = se_kernel(xi_new, x, lam)
            row_new[i] = 1.0
            kernel[i, :] = row_new
            kernel[:, i] = row_new
            mll_new = _mll_from_kernel(kernel, y, sigma2)
            u = rng.random()
            if u == 0.0 or math.log(u) < mll_new - mll:
                x[i] = xi_new
                mll = mll_new
                accepted["x"] += 1
            else:
                kernel[i, :] = row_old
                kernel[:, i] = row_old
        proposed["x"] += n

        if sample_lambda:
            lam_new = lam * math.exp(config.loglambda_proposal_sd * rng.standard_normal())
            kernel_new = se_kernel(x[:, None], x[None, :], lam_new)
            mll_new = _mll_from_kernel(kernel_new, y, sigma2)
            log_ratio = (
                mll_new - mll
                + a0 * (math.log(lam_new) - math.log(lam))
                - (lam_new - lam) / b0
            )
            u = rng.random()
            if u == 0.0 or math.log(u) < log_ratio:
                lam = lam_new
                kernel = kernel_new
                mll = mll_new
                accepted["lam"] += 1
            proposed["lam"] += 1

        if not math.isfinite(mll):
            raise ChainAbort(sweep, f"marginal log-likelihood {mll!r}")

        if sweep > config.burn_in and (sweep - config.burn_in) % config.thin == 0:
            pred = gp_predict(x, y, grid, lam, sigma2)
            keep_f.append(pred.draw(rng))
            keep_lam.append(lam)
            dev = data.w - x
            z = x - mu_i
            lp = mll - 0.5 * float(dev @ dev) / delta2
            lp += float(np.sum(0.5 * np.log(tau_i) - 0.5 * tau_i * z * z))
            with np.errstate(divide="ignore"):
                lp += float(np.sum(np.log(dpmm.pi[labels])))
            lp += (a0 - 1.0) * math.log(lam) - lam / b0
            if not math.isfinite(lp):
                raise ChainAbort(sweep, f"non-finite log posterior {lp!r}")
            keep_lp.append(lp)
            keep_x.append(x.copy())
            keep_pi.append(dpmm.pi.copy())
            keep_mu.append(dpmm.mu.copy())
            keep_tau.append(dpmm.tau.copy())

    def stack(rows, width):
        return np.array(rows) if rows else np.empty((0, width))

    n_draws = len(keep_f)
    return ChainSamples(
        variant="gpev_f",
        grid=grid,
        f_draws=stack(keep_f, len(grid)),
        lam=np.array(keep_lam),
        sigma2=np.full(n_draws, sigma2),
        delta2=np.full(n_draws, delta2),
        log_post=np.array(keep_lp),
        amplitudes=None,
        frequencies=None,
        phases=None,
        x_draws=stack(keep_x, n),
        mix_weights=stack(keep_pi, hyper.truncation),
        mix_means=stack(keep_mu, hyper.truncation),
        mix_precisions=stack(keep_tau, hyper.truncation),
        accepted=accepted,
        proposed=proposed,
        iters=config.iters,
        burn_in=config.burn_in,
        thin=config.thin,
    )


def run_gp_ignore_error(
    data: Dataset,
    config: RunConfig,
    rng: np.random.Generator,
    grid: Optional[np.ndarray] = None,
) -> ChainSamples:
    """Surrogate chain that treats the noisy proxies as the true covariates."""
    return run_chain(data, config, "gp", rng, grid=grid)
