"""Metropolis-within-Gibbs sampler for the surrogate errors-in-variables model.

One sweep updates, in order: frequencies (random-walk MH, coordinate at a
time), phases (MH mixing a global Unif(0, 2pi) move with a circular random
walk), amplitudes (exact multivariate-normal draw), the mixture block
(labels, atoms, sticks), the latent covariates (independence MH whose
proposal is the exact prior-times-measurement conditional), the kernel
bandwidth (conjugate gamma), and, when flagged, the noise variances
(inverse gamma).

The regression fit Phi @ a and its residual sum of squares are cached across
the sweep and updated incrementally whenever a single coordinate changes,
which keeps the coordinate-wise MH blocks at O(n*N) per sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla

from gpev.core import Dataset, RunConfig
from gpev.dpmm import DpmmState, init_state, update_atoms, update_labels, update_sticks
from gpev.rff import RffBasis, eval_surrogate, sample_basis

__all__ = [
    "ChainAbort",
    "ChainState",
    "ChainSamples",
    "SAMPLER_VARIANTS",
    "latent_proposal_params",
    "step_frequencies",
    "step_phases",
    "step_amplitudes",
    "step_latent_x",
    "step_lambda",
    "step_sigma2",
    "step_delta2",
    "run_chain",
]

#: Chain variants handled here; the full-scale exact-GP variant lives in gp_exact.
SAMPLER_VARIANTS = ("gpev_a", "gpev_n", "gp")

RSS_FLOOR = 1e-12
TWO_PI = 2.0 * math.pi


class ChainAbort(RuntimeError):
    """The chain reached a non-finite log-likelihood; carries the sweep index."""

    def __init__(self, sweep: int, detail: str):
        super().__init__(f"chain aborted at sweep {sweep}: {detail}")
        self.sweep = sweep


@dataclass(frozen=True)
class ChainState:
    """Full latent state of one sweep."""

    basis: RffBasis
    dpmm: Optional[DpmmState]
    x: np.ndarray
    sigma2: float
    delta2: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if not np.isfinite(x).all():
            raise ValueError("latent covariates must be finite")
        if not (self.sigma2 > 0 and self.delta2 > 0):
            raise ValueError("sigma2 and delta2 must be positive")
        object.__setattr__(self, "x", x)


@dataclass(frozen=True)
class ChainSamples:
    """Retained posterior draws plus acceptance diagnostics.

    ``f_draws`` holds the regression function evaluated on ``grid`` at every
    retained sweep; mixture summaries are present for variants that model the
    covariate density.  ``accepted``/``proposed`` count MH decisions per block
    ('w', 's', 'x') over the whole chain.
    """

    variant: str
    grid: np.ndarray
    f_draws: np.ndarray
    lam: np.ndarray
    sigma2: np.ndarray
    delta2: np.ndarray
    log_post: np.ndarray
    amplitudes: Optional[np.ndarray]
    frequencies: Optional[np.ndarray]
    phases: Optional[np.ndarray]
    x_draws: Optional[np.ndarray]
    mix_weights: Optional[np.ndarray]
    mix_means: Optional[np.ndarray]
    mix_precisions: Optional[np.ndarray]
    accepted: dict
    proposed: dict
    iters: int
    burn_in: int
    thin: int

    @property
    def n_draws(self) -> int:
        return self.f_draws.shape[0]

    def acceptance_rate(self, block: str) -> float:
        if self.proposed.get(block, 0) == 0:
            return math.nan
        return self.accepted[block] / self.proposed[block]


# ---------------------------------------------------------------------------
# Fast in-place update kernels shared by the public steps and run_chain
# ---------------------------------------------------------------------------

class _Workspace:
    """Mutable arrays for one chain: basis coordinates, caches and buffers."""

    def __init__(self, y, x, a, w, s, lam, sigma2, delta2):
        self.y = y
        self.x = x.copy()
        self.a = a.copy()
        self.w = w.copy()
        self.s = s.copy()
        self.lam = float(lam)
        self.sigma2 = float(sigma2)
        self.delta2 = float(delta2)
        self.scale = math.sqrt(2.0 / len(a))
        self.phi = self.scale * np.cos(np.outer(self.x, self.w) + self.s)
        self.refresh_fit()
        n = len(y)
        self._col = np.empty(n)
        self._tmp = np.empty(n)
        self._fit_buf = np.empty(n)

    def refresh_fit(self):
        self.fit = self.phi @ self.a
        self.rss = float(np.sum((self.y - self.fit) ** 2))

    def _try_column(self, j: int, col: np.ndarray) -> float:
        """RSS after replacing feature column j; result kept in _fit_buf."""
        np.subtract(col, self.phi[:, j], out=self._tmp)
        self._tmp *= self.a[j]
        np.add(self.fit, self._tmp, out=self._fit_buf)
        np.subtract(self.y, self._fit_buf, out=self._tmp)
        return float(self._tmp @ self._tmp)

    def _commit_column(self, j: int, col: np.ndarray, rss_new: float):
        self.phi[:, j] = col
        self.fit, self._fit_buf = self._fit_buf, self.fit
        self.rss = rss_new

    def mh_frequencies(self, prop_sd: float, rng) -> int:
        """Random-walk MH on each frequency against likelihood x N(0, 2/lam)."""
        accepted = 0
        lam4 = 0.25 * self.lam
        inv2s = 0.5 / self.sigma2
        col = self._col
        for j in range(len(self.w)):
            wj = self.w[j] + prop_sd * rng.standard_normal()
            np.multiply(self.x, wj, out=col)
            col += self.s[j]
            np.cos(col, out=col)
            col *= self.scale
            rss_new = self._try_column(j, col)
            log_ratio = -inv2s * (rss_new - self.rss) - lam4 * (wj * wj - self.w[j] ** 2)
            u = rng.random()
            if u == 0.0 or math.log(u) < log_ratio:
                self.w[j] = wj
                self._commit_column(j, col, rss_new)
                accepted += 1
        return accepted

    def mh_phases(self, rng, rw_sd: float = 0.3, indep_prob: float = 0.2) -> int:
        """MH on each phase: a mixture of the global Unif(0, 2pi) independence
        move and a wrapped-normal random walk on the circle.

        Both kernels target the same flat-prior conditional, so the
        acceptance ratio is the likelihood ratio either way; the mixture
        keeps the global move's mode hopping while the walk component sets
        the average acceptance rate.  ``indep_prob=1`` recovers the pure
        independence sampler.
        """
        accepted = 0
        inv2s = 0.5 / self.sigma2
        col = self._col
        for j in range(len(self.s)):
            if indep_prob >= 1.0 or rng.random() < indep_prob:
                sj = rng.uniform(0.0, TWO_PI)
            else:
                sj = (self.s[j] + rw_sd * rng.standard_normal()) % TWO_PI
            np.multiply(self.x, self.w[j], out=col)
            col += sj
            np.cos(col, out=col)
            col *= self.scale
            rss_new = self._try_column(j, col)
            log_ratio = -inv2s * (rss_new - self.rss)
            u = rng.random()
            if u == 0.0 or math.log(u) < log_ratio:
                self.s[j] = sj
                self._commit_column(j, col, rss_new)
                accepted += 1
        return accepted

    def draw_amplitudes(self, rng):
        """Exact draw from N(mu_tilde, Sigma_tilde) via Cholesky of the precision.

        The precision Phi'Phi/sigma2 + I dominates the identity, so the
        factorization cannot fail on finite inputs.
        """
        n_basis = self.phi.shape[1]
        prec = self.phi.T @ self.phi / self.sigma2
        prec[np.diag_indices_from(prec)] += 1.0
        try:
            lower = np.linalg.cholesky(prec)
        except np.linalg.LinAlgError as exc:
            raise FloatingPointError(f"amplitude precision not SPD: {exc}") from None
        rhs = self.phi.T @ self.y / self.sigma2
        mean = sla.cho_solve((lower, True), rhs, check_finite=False)
        noise = sla.solve_triangular(
            lower.T, rng.standard_normal(n_basis), lower=False, check_finite=False
        )
        self.a = mean + noise
        self.refresh_fit()

    def mh_latent_x(self, w_data, mu_i, tau_i, rng) -> int:
        """Blockwise-independent MH on the latent covariates.

        The proposal N(m_i, v_i) is exactly the measurement-times-prior
        conditional, so the acceptance ratio reduces to the regression
        likelihood ratio; every coordinate is proposed at once.
        """
        v = 1.0 / (1.0 / self.delta2 + tau_i)
        m = v * (w_data / self.delta2 + mu_i * tau_i)
        x_prop = m + np.sqrt(v) * rng.standard_normal(len(m))
        phi_prop = self.scale * np.cos(np.outer(x_prop, self.w) + self.s)
        fit_prop = phi_prop @ self.a
        resid_old = self.y - self.fit
        resid_new = self.y - fit_prop
        log_ratio = (resid_old**2 - resid_new**2) * (0.5 / self.sigma2)
        with np.errstate(divide="ignore"):  # log of an exactly-zero uniform accepts
            accept = np.log(rng.random(len(m))) < log_ratio
        self.x[accept] = x_prop[accept]
        self.phi[accept] = phi_prop[accept]
        self.fit[accept] = fit_prop[accept]
        self.rss = float(np.sum((self.y - self.fit) ** 2))
        return int(accept.sum())

    def draw_lambda(self, shape_a0: float, scale_b0: float, paper_literal: bool, rng):
        self.lam = draw_lambda_conditional(self.w, shape_a0, scale_b0, paper_literal, rng)


def latent_proposal_params(w_data, mu_i, tau_i, delta2: float):
    """Mean and variance of the latent-covariate proposal N(m, v).

    v = 1 / (1/delta2 + tau), m = v * (w/delta2 + mu * tau): the exact
    conditional of x given its mixture component and the proxy measurement,
    ignoring the regression likelihood.
    """
    v = 1.0 / (1.0 / delta2 + np.asarray(tau_i, dtype=np.float64))
    m = v * (np.asarray(w_data, dtype=np.float64) / delta2 + mu_i * tau_i)
    return m, v


def draw_inverse_gamma(shape: float, scale_sum: float, rng) -> float:
    """One draw from InvGamma(shape, max(scale_sum, floor)/2)."""
    b = max(scale_sum, RSS_FLOOR) / 2.0
    return b / rng.gamma(shape, 1.0)


# ---------------------------------------------------------------------------
# Public single-step operations
# ---------------------------------------------------------------------------

def _workspace_from_state(state: ChainState, data: Dataset) -> _Workspace:
    b = state.basis
    return _Workspace(
        data.y, state.x, b.amplitudes, b.frequencies, b.phases,
        b.lam, state.sigma2, state.delta2,
    )


def _state_from_workspace(ws: _Workspace, dpmm: Optional[DpmmState]) -> ChainState:
    basis = RffBasis(ws.a.copy(), ws.w.copy(), ws.s.copy(), ws.lam)
    return ChainState(basis=basis, dpmm=dpmm, x=ws.x.copy(), sigma2=ws.sigma2, delta2=ws.delta2)


def step_frequencies(state: ChainState, data: Dataset, config: RunConfig, rng):
    """One random-walk MH sweep over frequencies; returns (state, accepted)."""
    ws = _workspace_from_state(state, data)
    accepted = ws.mh_frequencies(config.freq_proposal_sd, rng)
    return _state_from_workspace(ws, state.dpmm), accepted


def step_phases(state: ChainState, data: Dataset, config: RunConfig, rng):
    """One MH sweep over phases; returns (state, accepted)."""
    ws = _workspace_from_state(state, data)
    accepted = ws.mh_phases(rng, config.phase_rw_sd, config.phase_indep_prob)
    return _state_from_workspace(ws, state.dpmm), accepted


def step_amplitudes(state: ChainState, data: Dataset, rng) -> ChainState:
    """Exact conjugate draw of the amplitude vector."""
    ws = _workspace_from_state(state, data)
    ws.draw_amplitudes(rng)
    return _state_from_workspace(ws, state.dpmm)


def step_latent_x(state: ChainState, data: Dataset, rng):
    """MH update of every latent covariate; returns (state, accepted)."""
    ws = _workspace_from_state(state, data)
    mu_i = state.dpmm.mu[state.dpmm.labels]
    tau_i = state.dpmm.tau[state.dpmm.labels]
    accepted = ws.mh_latent_x(data.w, mu_i, tau_i, rng)
    return _state_from_workspace(ws, state.dpmm), accepted


def draw_lambda_conditional(
    frequencies: np.ndarray,
    shape_a0: float,
    scale_b0: float,
    paper_literal: bool,
    rng,
) -> float:
    """Gamma draw of the bandwidth given the frequencies.

    The scale is b0 / (1 + b0 * sum w_j^2 / 4).  The conjugate shape is
    a0 + N/2; ``paper_literal`` keeps the shape at a0 exactly.
    """
    ssq = float(frequencies @ frequencies)
    b_hat = scale_b0 / (1.0 + scale_b0 * ssq / 4.0)
    shape = shape_a0 if paper_literal else shape_a0 + 0.5 * len(frequencies)
    return float(rng.gamma(shape, b_hat))


def step_lambda(state: ChainState, config: RunConfig, rng) -> ChainState:
    """Redraw the bandwidth from its gamma conditional."""
    lam = draw_lambda_conditional(
        state.basis.frequencies,
        config.gp.lambda_prior_shape,
        config.gp.lambda_prior_scale,
        config.lambda_shape_paper_literal,
        rng,
    )
    basis = RffBasis(state.basis.amplitudes, state.basis.frequencies, state.basis.phases, lam)
    return ChainState(basis, state.dpmm, state.x, state.sigma2, state.delta2)


def step_sigma2(state: ChainState, data: Dataset, rng) -> ChainState:
    """InvGamma(n/2, RSS/2) draw of the regression noise variance."""
    fit = eval_surrogate(state.basis, state.x)
    rss = float(np.sum((data.y - fit) ** 2))
    sigma2 = draw_inverse_gamma(0.5 * data.n, rss, rng)
    return ChainState(state.basis, state.dpmm, state.x, sigma2, state.delta2)


def step_delta2(state: ChainState, data: Dataset, rng) -> ChainState:
    """InvGamma(n/2, sum (W - X)^2 / 2) draw of the measurement-error variance."""
    ssq = float(np.sum((data.w - state.x) ** 2))
    delta2 = draw_inverse_gamma(0.5 * data.n, ssq, rng)
    return ChainState(state.basis, state.dpmm, state.x, state.sigma2, delta2)


# ---------------------------------------------------------------------------
# Chain orchestration
# ---------------------------------------------------------------------------

def _log_posterior(ws: _Workspace, data: Dataset, dpmm, config: RunConfig, variant: str) -> float:
    """Unnormalized joint log density of data and all sampled blocks."""
    n = data.n
    n_basis = len(ws.a)
    lp = -0.5 * n * math.log(ws.sigma2) - 0.5 * ws.rss / ws.sigma2
    lp += -0.5 * float(ws.a @ ws.a)
    lp += 0.5 * n_basis * math.log(ws.lam) - 0.25 * ws.lam * float(ws.w @ ws.w)
    a0, b0 = config.gp.lambda_prior_shape, config.gp.lambda_prior_scale
    lp += (a0 - 1.0) * math.log(ws.lam) - ws.lam / b0
    if variant != "gp":
        dev = data.w - ws.x
        lp += -0.5 * n * math.log(ws.delta2) - 0.5 * float(dev @ dev) / ws.delta2
        z = ws.x - dpmm.mu[dpmm.labels]
        tau_i = dpmm.tau[dpmm.labels]
        with np.errstate(divide="ignore"):
            lp += float(np.sum(0.5 * np.log(tau_i) - 0.5 * tau_i * z * z))
            lp += float(np.sum(np.log(dpmm.pi[dpmm.labels])))
    if config.noise.sigma2_sampled:
        lp += -math.log(ws.sigma2)
    if config.noise.delta2_sampled and variant != "gp":
        lp += -math.log(ws.delta2)
    return lp


def _initial_noise(data: Dataset, config: RunConfig):
    noise = config.noise
    sigma2 = noise.sigma2 if not noise.sigma2_sampled else max(0.25 * float(np.var(data.y)), 1e-8)
    if noise.delta2_sampled:
        delta2 = max(0.25 * float(np.var(data.w)), 1e-8)
    else:
        delta2 = noise.delta2
    return float(sigma2), float(delta2)


def run_chain(
    data: Dataset,
    config: RunConfig,
    variant: str,
    rng: np.random.Generator,
    grid: Optional[np.ndarray] = None,
) -> ChainSamples:
    """Run the full Gibbs chain and return retained draws.

    ``variant`` selects the covariate treatment: 'gpev_a' uses the full
    mixture prior, 'gpev_n' collapses it to a single normal component, and
    'gp' pins the covariates at the observed proxies and skips both the
    mixture and the latent updates.
    """
    if variant not in SAMPLER_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {SAMPLER_VARIANTS}")
    grid = config.grid if grid is None else np.asarray(grid, dtype=np.float64)
    n = data.n
    sigma2, delta2 = _initial_noise(data, config)

    lam0 = config.gp.fixed_lambda
    if lam0 is None:
        lam0 = config.gp.lambda_prior_shape * config.gp.lambda_prior_scale
    n_basis = config.gp.resolve_n_basis(n)
    basis0 = sample_basis(config.gp, lam0, rng, n=n)

    hyper = config.dpmm
    if variant == "gpev_n":
        hyper = replace(hyper, truncation=1)
    dpmm = init_state(data.w, hyper, rng) if variant != "gp" else None

    ws = _Workspace(
        data.y, data.w, np.zeros(n_basis), basis0.frequencies, basis0.phases,
        lam0, sigma2, delta2,
    )

    sample_lambda = config.gp.fixed_lambda is None
    update_latent = variant != "gp"
    sample_delta2 = config.noise.delta2_sampled and update_latent
    sample_sigma2 = config.noise.sigma2_sampled

    accepted = {"w": 0, "s": 0, "x": 0}
    proposed = {"w": 0, "s": 0, "x": 0}
    keep_f, keep_lam, keep_s2, keep_d2, keep_lp = [], [], [], [], []
    keep_a, keep_w, keep_s, keep_x = [], [], [], []
    keep_pi, keep_mu, keep_tau = [], [], []

    for sweep in range(1, config.iters + 1):
        accepted["w"] += ws.mh_frequencies(config.freq_proposal_sd, rng)
        proposed["w"] += n_basis
        accepted["s"] += ws.mh_phases(rng, config.phase_rw_sd, config.phase_indep_prob)
        proposed["s"] += n_basis
        ws.draw_amplitudes(rng)

        if update_latent:
            labels = update_labels(ws.x, dpmm, rng)
            mu, tau = update_atoms(ws.x, labels, hyper, rng)
            nu = update_sticks(labels, hyper.alpha, hyper.truncation, rng)
            dpmm = DpmmState.create(nu, mu, tau, labels)
            accepted["x"] += ws.mh_latent_x(data.w, mu[labels], tau[labels], rng)
            proposed["x"] += n

        if sample_lambda:
            ws.draw_lambda(
                config.gp.lambda_prior_shape,
                config.gp.lambda_prior_scale,
                config.lambda_shape_paper_literal,
                rng,
            )
        if sample_sigma2:
            ws.sigma2 = draw_inverse_gamma(0.5 * n, ws.rss, rng)
        if sample_delta2:
            ssq = float(np.sum((data.w - ws.x) ** 2))
            ws.delta2 = draw_inverse_gamma(0.5 * n, ssq, rng)

        if not math.isfinite(ws.rss) or not math.isfinite(ws.lam):
            raise ChainAbort(sweep, f"rss={ws.rss!r}, lambda={ws.lam!r}")

        if sweep > config.burn_in and (sweep - config.burn_in) % config.thin == 0:
            basis = RffBasis(ws.a.copy(), ws.w.copy(), ws.s.copy(), ws.lam)
            keep_f.append(eval_surrogate(basis, grid))
            keep_lam.append(ws.lam)
            keep_s2.append(ws.sigma2)
            keep_d2.append(ws.delta2)
            lp = _log_posterior(ws, data, dpmm, config, variant)
            if not math.isfinite(lp):
                raise ChainAbort(sweep, f"non-finite log posterior {lp!r}")
            keep_lp.append(lp)
            keep_a.append(basis.amplitudes)
            keep_w.append(basis.frequencies)
            keep_s.append(basis.phases)
            if update_latent:
                keep_x.append(ws.x.copy())
                keep_pi.append(dpmm.pi.copy())
                keep_mu.append(dpmm.mu.copy())
                keep_tau.append(dpmm.tau.copy())

    def stack(rows, width):
        return np.array(rows) if rows else np.empty((0, width))

    return ChainSamples(
        variant=variant,
        grid=grid,
        f_draws=stack(keep_f, len(grid)),
        lam=np.array(keep_lam),
        sigma2=np.array(keep_s2),
        delta2=np.array(keep_d2),
        log_post=np.array(keep_lp),
        amplitudes=stack(keep_a, n_basis),
        frequencies=stack(keep_w, n_basis),
        phases=stack(keep_s, n_basis),
        x_draws=stack(keep_x, n) if update_latent else None,
        mix_weights=stack(keep_pi, hyper.truncation) if update_latent else None,
        mix_means=stack(keep_mu, hyper.truncation) if update_latent else None,
        mix_precisions=stack(keep_tau, hyper.truncation) if update_latent else None,
        accepted=accepted,
        proposed=proposed,
        iters=config.iters,
        burn_in=config.burn_in,
        thin=config.thin,
    )


def mixture_density_draws(samples: ChainSamples, grid: np.ndarray) -> np.ndarray:
    """Evaluate the mixture density of each retained draw on ``grid``."""
    if samples.mix_weights is None:
        raise ValueError(f"variant {samples.variant!r} carries no mixture draws")
    grid = np.asarray(grid, dtype=np.float64)
    out = np.empty((samples.n_draws, len(grid)))
    for i in range(samples.n_draws):
        z = grid[:, None] - samples.mix_means[i]
        comps = np.sqrt(samples.mix_precisions[i] / TWO_PI) * np.exp(
            -0.5 * samples.mix_precisions[i] * z * z
        )
        out[i] = comps @ samples.mix_weights[i]
    return out
