"""Numerical verification suites runnable from the CLI.

Each suite compares a production code path against an independent target:
Monte Carlo moments against the exact kernel, quadrature against refinement
and closed forms, conjugate-step draws against brute-force linear algebra,
grid posteriors and named distributions, and the latent-covariate MH rule
against an exhaustive discrete stationarity check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from gpev.core import Dataset, GpHyper, make_rng
from gpev.decon import DeconKernelSpec, decon_kernel
from gpev.rff import RffBasis, eval_surrogate, sample_basis, se_kernel
from gpev.sampler import (
    ChainState,
    draw_inverse_gamma,
    draw_lambda_conditional,
    latent_proposal_params,
    step_amplitudes,
)

__all__ = [
    "CheckResult",
    "check_rff_moments",
    "check_kernel",
    "check_conjugacy",
    "check_invariance",
    "SUITES",
    "run_suites",
]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


# ---------------------------------------------------------------------------
# Surrogate moment identity
# ---------------------------------------------------------------------------

def surrogate_moment_errors(n_basis: int, lam: float, draws: int, seed: int):
    """Empirical mean/covariance of the surrogate at x in {0, 0.5, 1}.

    Returns (mean_err, cov_err) where each entry is |error| / MC standard
    error; the exact targets are mean 0 and covariance exp(-(x-y)^2/lam),
    which hold for every basis size.
    """
    rng = make_rng(seed)
    xs = np.array([0.0, 0.5, 1.0])
    hyper = GpHyper(n_basis=n_basis)
    vals = np.empty((draws, len(xs)))
    for m in range(draws):
        basis = sample_basis(hyper, lam, rng)
        vals[m] = eval_surrogate(basis, xs)
    mean = vals.mean(axis=0)
    mean_se = vals.std(axis=0) / math.sqrt(draws)
    mean_err = np.abs(mean) / mean_se

    pairs = [(0, 0), (0, 1), (0, 2)]
    cov_err = np.empty(len(pairs))
    centered = vals - mean
    for k, (i, j) in enumerate(pairs):
        prods = centered[:, i] * centered[:, j]
        target = se_kernel(xs[i], xs[j], lam)
        se = prods.std() / math.sqrt(draws)
        cov_err[k] = abs(prods.mean() - target) / se
    return mean_err, cov_err


def check_rff_moments(draws: int = 100_000, seed: int = 20260810) -> list:
    results = []
    for lam in (0.5, 2.0):
        for n_basis in (1, 5, 50):
            mean_err, cov_err = surrogate_moment_errors(n_basis, lam, draws, seed)
            worst = max(mean_err.max(), cov_err.max())
            results.append(
                CheckResult(
                    f"rff-moments N={n_basis} lam={lam}",
                    bool(worst < 4.0),
                    f"worst deviation {worst:.2f} MC standard errors (limit 4)",
                )
            )
    return results


# ---------------------------------------------------------------------------
# Deconvolution kernel fidelity
# ---------------------------------------------------------------------------

def check_kernel(seed: int = 7) -> list:
    results = []
    u = np.linspace(-20.0, 20.0, 161)

    # symmetry in u
    spec = DeconKernelSpec(h=1.0, delta=0.8)
    sym = np.abs(decon_kernel(u, spec) - decon_kernel(-u, spec)).max()
    results.append(CheckResult("kernel symmetry", bool(sym < 1e-12), f"max asymmetry {sym:.2e}"))

    # closed form at zero without measurement error: (1/2pi) * 32/35;
    # the fixed-node rule carries ~1e-10 error on this degree-6 integrand
    k0 = float(decon_kernel(0.0, DeconKernelSpec(h=1.0, delta=0.0)))
    target = 32.0 / (35.0 * 2.0 * math.pi)
    results.append(
        CheckResult(
            "kernel value at 0, delta=0",
            bool(abs(k0 - target) < 1e-9),
            f"|K(0) - 32/(70 pi)| = {abs(k0 - target):.2e}",
        )
    )

    # doubling the node count leaves values unchanged to 1e-8
    worst = 0.0
    for ratio in (0.0, 0.5, 1.0):
        a = decon_kernel(u, DeconKernelSpec(h=1.0, delta=ratio, nodes=513))
        b = decon_kernel(u, DeconKernelSpec(h=1.0, delta=ratio, nodes=1025))
        worst = max(worst, float(np.abs(a - b).max()))
    results.append(
        CheckResult("kernel quadrature stability", bool(worst < 1e-8), f"doubling delta {worst:.2e}")
    )

    # unit integral and L1 bound over a wide range
    wide = np.arange(-200.0, 200.0, 0.05)
    for ratio in (0.5, 1.0):
        spec = DeconKernelSpec(h=1.0, delta=ratio)
        vals = decon_kernel(wide, spec)
        integral = float(np.trapezoid(vals, wide))
        l1 = float(np.trapezoid(np.abs(vals), wide))
        bound = 10.0 * math.exp(spec.exponent)
        results.append(
            CheckResult(
                f"kernel unit integral delta/h={ratio}",
                bool(abs(integral - 1.0) < 1e-3),
                f"integral {integral:.6f}",
            )
        )
        results.append(
            CheckResult(
                f"kernel L1 bound delta/h={ratio}",
                bool(l1 < bound),
                f"L1 {l1:.3f} < {bound:.1f}",
            )
        )
    return results


# ---------------------------------------------------------------------------
# Conjugate-step oracles
# ---------------------------------------------------------------------------

def _amplitude_reference(phi, y, sigma2):
    """Dense textbook solve for the amplitude conditional."""
    prec = phi.T @ phi / sigma2 + np.eye(phi.shape[1])
    cov = np.linalg.inv(prec)
    mean = cov @ phi.T @ y / sigma2
    return mean, cov


def lambda_grid_tv(lam_draws, freq, a0: float, b0: float, bins: int = 50) -> float:
    """Binned total variation between bandwidth draws and the grid posterior
    proportional to lam^(a0-1) e^(-lam/b0) * lam^(N/2) e^(-lam sum w^2 / 4).

    With 50 cells and 1e5 draws the Monte Carlo noise floor sits near 0.008,
    while a wrong conditional shape registers far above 0.1.
    """
    lam_draws = np.asarray(lam_draws, dtype=np.float64)
    n_freq = len(freq)
    edges = np.linspace(0.0, float(lam_draws.max()) * 1.02, bins + 1)
    sub = 32
    fine = np.linspace(edges[0], edges[-1], bins * sub + 1)
    rate = 1.0 / b0 + float(np.sum(np.square(freq))) / 4.0
    with np.errstate(divide="ignore"):
        log_dens = (a0 + 0.5 * n_freq - 1.0) * np.log(fine) - fine * rate
    dens = np.exp(log_dens - log_dens[1:].max())
    dens[0] = 0.0 if not math.isfinite(dens[0]) else dens[0]
    masses = np.array([
        np.trapezoid(dens[k * sub:(k + 1) * sub + 1], fine[k * sub:(k + 1) * sub + 1])
        for k in range(bins)
    ])
    cell = masses / masses.sum()
    hist = np.histogram(lam_draws, bins=edges)[0] / len(lam_draws)
    return 0.5 * float(np.abs(hist - cell).sum())


def amplitude_draws(draws: int, seed: int):
    """Production draws of the amplitude step on a fixed 3-point problem."""
    rng = make_rng(seed)
    y = np.array([0.7, -0.2, 1.1])
    x = np.array([-0.5, 0.1, 0.9])
    basis = RffBasis(np.zeros(2), np.array([0.8, -1.3]), np.array([0.3, 2.1]), lam=1.0)
    data = Dataset(y=y, w=x)
    state = ChainState(basis=basis, dpmm=None, x=x, sigma2=0.25, delta2=1.0)
    out = np.empty((draws, 2))
    for m in range(draws):
        out[m] = step_amplitudes(state, data, rng).basis.amplitudes
    phi = basis.scale * np.cos(np.outer(x, basis.frequencies) + basis.phases)
    mean, cov = _amplitude_reference(phi, y, 0.25)
    return out, mean, cov


def check_conjugacy(draws: int = 100_000, seed: int = 99) -> list:
    results = []

    out, mean, cov = amplitude_draws(draws, seed)
    mean_err = np.abs(out.mean(axis=0) - mean) / np.sqrt(np.diag(cov) / draws)
    emp_cov = np.cov(out.T)
    cov_se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / draws)
    cov_err = np.abs(emp_cov - cov) / cov_se
    worst = max(mean_err.max(), cov_err.max())
    results.append(
        CheckResult(
            "amplitude draw vs dense solve",
            bool(worst < 4.0),
            f"worst deviation {worst:.2f} MC standard errors (limit 4)",
        )
    )

    # bandwidth conditional vs a 1-d grid posterior, N = 1
    rng = make_rng(seed + 1)
    freq = np.array([1.7])
    a0, b0 = 5.0, 1.0
    lam_draws = np.array(
        [draw_lambda_conditional(freq, a0, b0, False, rng) for _ in range(draws)]
    )
    tv = lambda_grid_tv(lam_draws, freq, a0, b0)
    results.append(
        CheckResult("bandwidth conditional vs grid posterior", bool(tv < 0.01), f"TV {tv:.4f}")
    )

    # inverse-gamma noise draws vs the named law
    rng = make_rng(seed + 2)
    n = 5
    for label, scale_sum in (("sigma2", 1.85), ("delta2", 3.4)):
        vals = np.array(
            [draw_inverse_gamma(0.5 * n, scale_sum, rng) for _ in range(10_000)]
        )
        ref = scipy.stats.invgamma(a=0.5 * n, scale=scale_sum / 2.0)
        pval = scipy.stats.kstest(vals, ref.cdf).pvalue
        results.append(
            CheckResult(f"{label} inverse-gamma law", bool(pval > 0.01), f"KS p = {pval:.3f}")
        )
    return results


# ---------------------------------------------------------------------------
# Discrete stationarity of the latent-covariate move
# ---------------------------------------------------------------------------

def latent_x_transition_matrix(states, y_i, w_i, mu_i, tau_i, basis, sigma2, delta2):
    """Exhaustive MH transition matrix of the latent move on a finite grid.

    States are candidate covariate values; the proposal is the
    measurement-times-prior conditional restricted to the grid and the
    acceptance rule is the production likelihood ratio.
    """
    states = np.asarray(states, dtype=np.float64)
    fvals = eval_surrogate(basis, states)
    log_lik = -0.5 * (y_i - fvals) ** 2 / sigma2
    log_prior = (
        -0.5 * (w_i - states) ** 2 / delta2 - 0.5 * tau_i * (states - mu_i) ** 2
    )
    log_target = log_lik + log_prior

    m, v = latent_proposal_params(w_i, mu_i, tau_i, delta2)
    log_q = -0.5 * (states - m) ** 2 / v
    q = np.exp(log_q - log_q.max())
    q /= q.sum()

    k = len(states)
    P = np.zeros((k, k))
    for j in range(k):
        for l in range(k):
            if l == j:
                continue
            accept = min(1.0, math.exp(min(log_lik[l] - log_lik[j], 0.0)))
            P[j, l] = q[l] * accept
        P[j, j] = 1.0 - P[j].sum()

    target = np.exp(log_target - log_target.max())
    target /= target.sum()
    return P, target


def check_invariance() -> list:
    basis = RffBasis(
        np.array([0.9, -0.4]), np.array([1.2, -0.7]), np.array([0.5, 4.0]), lam=1.0
    )
    states = np.array([-1.0, -0.3, 0.2, 0.8, 1.5])
    P, target = latent_x_transition_matrix(
        states, y_i=0.4, w_i=0.1, mu_i=-0.2, tau_i=1.3,
        basis=basis, sigma2=0.04, delta2=0.3,
    )
    tv = 0.5 * float(np.abs(target @ P - target).sum())
    ok = tv < 1e-10 and np.all(P >= -1e-15) and np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    return [
        CheckResult(
            "latent move leaves the discrete target invariant",
            bool(ok),
            f"total variation of pi P - pi = {tv:.2e}",
        )
    ]


SUITES = {
    "rff-moments": check_rff_moments,
    "kernel": check_kernel,
    "conjugacy": check_conjugacy,
    "invariance": check_invariance,
}


def run_suites(names=None) -> list:
    """Run the named suites (all of them by default) and collect results."""
    names = list(SUITES) if not names else list(names)
    results = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        results.extend(SUITES[name]())
    return results
