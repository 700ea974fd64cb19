"""Synthetic-data generation, replicated experiments and the case study."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from gpev import decon as decon_mod
from gpev import gp_exact, sampler, summaries
from gpev.core import ConfigError, DataError, Dataset, GpHyper, RunConfig, derive_rng

__all__ = [
    "SyntheticSpec",
    "ExperimentResult",
    "FitPayload",
    "true_function",
    "generate",
    "fit_method",
    "run_experiment",
    "case_study",
    "CASE_STUDY_MIN_GROUP",
]

CASE_STUDY_MIN_GROUP = 10


def true_function(f_id: str, x):
    """The two synthetic regression functions; sign(0) = 0 by convention."""
    x = np.asarray(x, dtype=np.float64)
    if f_id == "f1":
        return np.sin(0.5 * math.pi * x) / (1.0 + 2.0 * x * x * (np.sign(x) + 1.0))
    if f_id == "f2":
        return (x + x * x) / 4.0
    raise ConfigError(f"unknown function id {f_id!r}; expected 'f1' or 'f2'")


@dataclass(frozen=True)
class SyntheticSpec:
    """Generative design: sample size, truth, noise scales, covariate law."""

    n: int
    f_id: str = "f1"
    sigma: float = 0.2
    delta2: float = 0.01
    x_law: str = "uniform"
    x_sampler: Optional[Callable] = None

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.sigma < 0 or self.delta2 < 0:
            raise ConfigError("sigma and delta2 must be nonnegative")
        if self.x_law not in ("uniform", "custom"):
            raise ConfigError("x_law must be 'uniform' or 'custom'")
        if self.x_law == "custom" and self.x_sampler is None:
            raise ConfigError("custom x_law needs an x_sampler callable")
        true_function(self.f_id, 0.0)


def generate(spec: SyntheticSpec, rng: np.random.Generator):
    """Draw one synthetic dataset; the latent covariates are returned
    separately and must never reach an estimator."""
    if spec.x_law == "uniform":
        x = rng.uniform(-3.0, 3.0, spec.n)
    else:
        x = np.asarray(spec.x_sampler(spec.n, rng), dtype=np.float64)
    y = true_function(spec.f_id, x) + spec.sigma * rng.standard_normal(spec.n)
    w = x + math.sqrt(spec.delta2) * rng.standard_normal(spec.n)
    truth = lambda grid: true_function(spec.f_id, grid)  # noqa: E731
    return Dataset(y=y, w=w), x, truth


@dataclass(frozen=True)
class FitPayload:
    """What one (method, replicate) fit hands back to the aggregator."""

    f_hat: np.ndarray
    samples: Optional[sampler.ChainSamples]
    estimate: Optional[decon_mod.DeconEstimate]
    seconds: float


def _slim(samples: sampler.ChainSamples, keep_mixture: bool) -> sampler.ChainSamples:
    """Drop per-draw latent vectors that the output files never need."""
    kwargs = dict(x_draws=None, amplitudes=None, frequencies=None, phases=None)
    if not keep_mixture:
        kwargs.update(mix_weights=None, mix_means=None, mix_precisions=None)
    return replace(samples, **kwargs)


def fit_method(
    method: str,
    data: Dataset,
    config: RunConfig,
    rng: np.random.Generator,
    grid: np.ndarray,
    keep_mixture: bool = False,
) -> FitPayload:
    """Fit one estimator on one dataset; returns its curve and diagnostics."""
    start = time.perf_counter()
    if method in sampler.SAMPLER_VARIANTS:
        samples = sampler.run_chain(data, config, method, rng, grid=grid)
        payload = FitPayload(
            f_hat=summaries.posterior_mean(samples),
            samples=_slim(samples, keep_mixture),
            estimate=None,
            seconds=0.0,
        )
    elif method == "gpev_f":
        samples = gp_exact.run_chain_gpev_f(data, config, rng, grid=grid)
        payload = FitPayload(
            f_hat=summaries.posterior_mean(samples),
            samples=_slim(samples, keep_mixture),
            estimate=None,
            seconds=0.0,
        )
    elif method == "decon":
        if config.noise.delta2_sampled or config.noise.delta2 is None:
            raise ConfigError("the deconvolution estimator needs a fixed delta2")
        delta = math.sqrt(config.noise.delta2)
        template = decon_mod.DeconKernelSpec(
            h=1.0, delta=delta, phi_k=config.decon_phi_k, nodes=config.decon_nodes
        )
        candidates = decon_mod.default_bandwidths(data, delta)
        h = decon_mod.select_bandwidth(data, template, candidates, rng=rng)
        estimate = decon_mod.decon_regression(data, replace(template, h=h), grid)
        payload = FitPayload(f_hat=estimate.f_hat, samples=None, estimate=estimate, seconds=0.0)
    else:
        raise ConfigError(f"unknown estimator name {method!r}")
    return replace(payload, seconds=time.perf_counter() - start)


@dataclass(frozen=True)
class ExperimentResult:
    """Per-replicate AMSE by method plus first-replicate fit artifacts."""

    spec: SyntheticSpec
    methods: tuple
    replicates: int
    grid: np.ndarray
    amse: dict
    seconds: dict
    payloads: dict  # method -> list of FitPayload, replicate order

    def mean_amse(self, method: str) -> float:
        return float(np.mean(self.amse[method]))

    def se_amse(self, method: str) -> float:
        """Spread across replicates: the population standard deviation."""
        return float(np.std(self.amse[method]))

    def mean_seconds(self, method: str) -> float:
        return float(np.mean(self.seconds[method]))


def _run_job(args):
    spec, config, seed, rep, method = args
    try:
        data_rng = derive_rng(seed, "data", rep)
        data, _x_latent, truth = generate(spec, data_rng)
        fit_rng = derive_rng(seed, "fit", rep, method)
        grid = config.grid
        payload = fit_method(method, data, config, fit_rng, grid, keep_mixture=(rep == 0))
        value = summaries.amse(payload.f_hat, truth, grid)
    except Exception as exc:  # tag the failing cell before propagating
        raise RuntimeError(f"replicate {rep}, method {method}: {exc}") from exc
    return rep, method, value, payload


def run_experiment(
    spec: SyntheticSpec,
    methods,
    replicates: int,
    config: RunConfig,
    seed: int,
) -> ExperimentResult:
    """Fit every method on ``replicates`` independent datasets.

    Each (replicate, method) job draws its RNG stream from
    (seed, replicate, method), so a parallel pool (``config.jobs``) returns
    bit-identical results to a sequential run.  Chain failures propagate
    tagged with the replicate and method.
    """
    methods = tuple(methods)
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    jobs = [(spec, config, seed, rep, m) for rep in range(replicates) for m in methods]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_run_job, jobs))
    else:
        outcomes = [_run_job(job) for job in jobs]

    amse = {m: np.empty(replicates) for m in methods}
    seconds = {m: np.empty(replicates) for m in methods}
    payloads = {m: [None] * replicates for m in methods}
    for rep, method, value, payload in outcomes:
        amse[method][rep] = value
        seconds[method][rep] = payload.seconds
        payloads[method][rep] = payload
    return ExperimentResult(
        spec=spec,
        methods=methods,
        replicates=replicates,
        grid=config.grid,
        amse=amse,
        seconds=seconds,
        payloads=payloads,
    )


@dataclass(frozen=True)
class GroupFit:
    """Case-study output for one group."""

    group: str
    summary: summaries.FunctionSummary
    samples: sampler.ChainSamples
    delta2_sampled: bool


def _case_config(config: RunConfig) -> RunConfig:
    """Case-study prior: N = 60 basis functions, Exp(1.5) bandwidth prior
    (gamma with shape 1), regression variance under the objective prior."""
    gp = GpHyper(
        n_basis=config.gp.n_basis if config.gp.n_basis is not None else 60,
        lambda_prior_shape=1.0,
        lambda_prior_scale=1.0 / 1.5,
        fixed_lambda=config.gp.fixed_lambda,
    )
    noise = replace(config.noise, sigma2=None, sigma2_sampled=True)
    return config.with_(gp=gp, noise=noise)


def case_study(
    data: Dataset,
    config: RunConfig,
    seed: int,
    delta_of_x: bool = True,
) -> dict:
    """Per-group fits of the change from baseline Delta(x) = f(x) - x.

    Groups run independently on derived RNG streams.  Groups with fewer than
    10 observations are rejected.  ``delta_of_x=False`` summarizes f itself.
    """
    labels = data.groups() or ("all",)
    cfg = _case_config(config)
    grid = cfg.grid
    results = {}
    for label in labels:
        subset = data.subset(label) if data.group is not None else data
        if subset.n < CASE_STUDY_MIN_GROUP:
            raise DataError(
                f"group {label!r} has {subset.n} observations; "
                f"need at least {CASE_STUDY_MIN_GROUP}"
            )
        rng = derive_rng(seed, "case", label)
        samples = sampler.run_chain(subset, cfg, "gpev_a", rng, grid=grid)
        shift = grid if delta_of_x else None
        summary = summaries.summarize_function(samples, grid, shift=shift)
        results[label] = GroupFit(
            group=label,
            summary=summary,
            samples=_slim(samples, keep_mixture=True),
            delta2_sampled=cfg.noise.delta2_sampled,
        )
    return results
