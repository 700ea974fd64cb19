"""Shared domain types, configuration, dataset I/O and the seeded RNG contract."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ConfigError",
    "DataError",
    "Dataset",
    "NoiseConfig",
    "GpHyper",
    "DpmmHyper",
    "RunConfig",
    "METHOD_NAMES",
    "load_dataset",
    "save_dataset",
    "load_config",
    "validate_config",
    "make_rng",
    "derive_rng",
    "default_n_basis",
]

#: Estimator names accepted in configs and on the CLI, in reporting order.
METHOD_NAMES = ("gpev_a", "gpev_f", "gpev_n", "gp", "decon")

MAX_SEED = 2**64 - 1


class ConfigError(ValueError):
    """A configuration value is missing, unknown or out of range."""


class DataError(ValueError):
    """A dataset file cannot be parsed into a valid :class:`Dataset`."""


# ---------------------------------------------------------------------------
# Random-number contract
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """Return the root generator for ``seed``.

    Identical seed, configuration and data produce bit-identical chain
    output; all stochastic operations take an explicit generator and there
    is no global RNG state anywhere in the package.
    """
    if not (0 <= int(seed) <= MAX_SEED):
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Deterministically derive an independent stream keyed by ``keys``.

    Used by the harness to give each (replicate, method) job its own stream,
    so running jobs in parallel or in any order cannot change results.
    """
    if not (0 <= int(seed) <= MAX_SEED):
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    entropy = [int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Paired observations: responses ``y`` and contaminated covariates ``w``.

    ``group`` optionally carries one categorical label per observation
    (e.g. treatment/control).  Instances are immutable value types.
    """

    y: np.ndarray
    w: np.ndarray
    group: Optional[tuple] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        if y.ndim != 1 or w.ndim != 1 or len(y) != len(w):
            raise DataError("y and w must be 1-d vectors of equal length")
        if len(y) < 2:
            raise DataError(f"need at least 2 observations, got {len(y)}")
        if not (np.isfinite(y).all() and np.isfinite(w).all()):
            raise DataError("dataset contains non-finite values")
        if self.group is not None:
            group = tuple(str(g) for g in self.group)
            if len(group) != len(y):
                raise DataError("group labels must match the number of observations")
            object.__setattr__(self, "group", group)

    @property
    def n(self) -> int:
        return len(self.y)

    def groups(self) -> tuple:
        """Unique group labels in order of first appearance."""
        if self.group is None:
            return ()
        seen = dict.fromkeys(self.group)
        return tuple(seen)

    def subset(self, label: str) -> "Dataset":
        """Rows belonging to one group, in file order."""
        if self.group is None:
            raise DataError("dataset has no group column")
        idx = [i for i, g in enumerate(self.group) if g == label]
        if not idx:
            raise DataError(f"unknown group {label!r}")
        return Dataset(self.y[idx], self.w[idx], tuple(self.group[i] for i in idx))


def load_dataset(
    path,
    w_col: str = "w",
    y_col: str = "y",
    group_col: str = "group",
) -> Dataset:
    """Read a dataset from a headed CSV file.

    Columns are looked up by name, so column order in the file is free.
    The column names are configurable because released study files do not
    always follow the ``w,y,group`` convention.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (w_col, y_col):
            if col not in header:
                raise DataError(f"{path}: missing column {col!r} (header: {header})")
        has_group = group_col in header
        ys, ws, groups = [], [], []
        for lineno, row in enumerate(reader, start=2):
            for col, store in ((y_col, ys), (w_col, ws)):
                cell = row[col]
                try:
                    store.append(float(cell))
                except (TypeError, ValueError):
                    raise DataError(
                        f"{path}: non-numeric value {cell!r} in column {col!r}, line {lineno}"
                    ) from None
            if has_group:
                groups.append(row[group_col])
    if len(ys) < 2:
        raise DataError(f"{path}: need at least 2 data rows, got {len(ys)}")
    return Dataset(np.array(ys), np.array(ws), tuple(groups) if has_group else None)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as CSV with full float precision (round-trips exactly)."""
    cols = ["w", "y"] + (["group"] if dataset.group is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(dataset.n):
            row = [repr(float(dataset.w[i])), repr(float(dataset.y[i]))]
            if dataset.group is not None:
                row.append(dataset.group[i])
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Hyperparameter blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseConfig:
    """Regression noise variance and measurement-error variance.

    Each variance is either fixed at a positive value or sampled inside the
    chain under the objective prior proportional to its reciprocal.
    """

    sigma2: Optional[float] = 0.04
    delta2: Optional[float] = None
    sigma2_sampled: bool = False
    delta2_sampled: bool = True

    def __post_init__(self):
        for name, value, sampled in (
            ("sigma2", self.sigma2, self.sigma2_sampled),
            ("delta2", self.delta2, self.delta2_sampled),
        ):
            if not sampled:
                if value is None or not (value > 0 and math.isfinite(value)):
                    raise ConfigError(f"fixed {name} must be strictly positive, got {value!r}")


def default_n_basis(n: int) -> int:
    """Default basis size: round(n / 4.5), clamped to [10, n]."""
    return int(min(max(round(n / 4.5), 10), n))


@dataclass(frozen=True)
class GpHyper:
    """Surrogate-basis size and bandwidth prior.

    ``n_basis=None`` defers to :func:`default_n_basis` at fit time.  The
    bandwidth either has a Gamma(shape, scale) prior or is held fixed.
    """

    n_basis: Optional[int] = None
    lambda_prior_shape: float = 5.0
    lambda_prior_scale: float = 1.0
    fixed_lambda: Optional[float] = None

    def __post_init__(self):
        if self.n_basis is not None and self.n_basis < 1:
            raise ConfigError("n_basis must be >= 1")
        if self.lambda_prior_shape <= 0:
            raise ConfigError("lambda_prior_shape must be positive")
        if self.lambda_prior_scale <= 0:
            raise ConfigError("lambda_prior_scale must be positive")
        if self.fixed_lambda is not None and self.fixed_lambda <= 0:
            raise ConfigError("fixed_lambda must be positive")

    def resolve_n_basis(self, n: int) -> int:
        return self.n_basis if self.n_basis is not None else default_n_basis(n)


@dataclass(frozen=True)
class DpmmHyper:
    """Truncated stick-breaking mixture prior on the covariate density."""

    truncation: int = 20
    alpha: float = 1.0
    mu0: float = 0.0
    kappa0: float = 1.0
    a_tau: float = 1.0
    b_tau: float = 1.0

    def __post_init__(self):
        if self.truncation < 1:
            raise ConfigError("truncation must be >= 1")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        for name in ("kappa0", "a_tau", "b_tau"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")


# ---------------------------------------------------------------------------
# Full run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs, serializable as a flat JSON document."""

    gp: GpHyper = field(default_factory=GpHyper)
    dpmm: DpmmHyper = field(default_factory=DpmmHyper)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    iters: int = 5000
    burn_in: int = 2500
    thin: int = 5
    freq_proposal_sd: float = 0.1
    phase_rw_sd: float = 0.2
    phase_indep_prob: float = 0.2
    loglambda_proposal_sd: float = 0.3
    lambda_shape_paper_literal: bool = False
    grid_lo: float = -3.0
    grid_hi: float = 3.0
    grid_size: int = 100
    decon_phi_k: str = "poly6"
    decon_nodes: int = 513
    methods: tuple = METHOD_NAMES
    jobs: int = 1

    def __post_init__(self):
        if self.iters < 0 or self.burn_in < 0 or self.thin < 1:
            raise ConfigError("iters/burn_in must be >= 0 and thin >= 1")
        if self.burn_in > self.iters:
            raise ConfigError("burn_in cannot exceed iters")
        if self.freq_proposal_sd <= 0 or self.loglambda_proposal_sd <= 0 or self.phase_rw_sd <= 0:
            raise ConfigError("proposal scales must be positive")
        if not 0.0 <= self.phase_indep_prob <= 1.0:
            raise ConfigError("phase_indep_prob must lie in [0, 1]")
        if self.grid_size < 1 or not self.grid_lo < self.grid_hi:
            raise ConfigError("grid must satisfy lo < hi and size >= 1")
        if self.decon_nodes < 3 or self.decon_nodes % 2 == 0:
            raise ConfigError("decon_nodes must be an odd integer >= 3")
        for m in self.methods:
            if m not in METHOD_NAMES:
                raise ConfigError(f"unknown estimator name {m!r}; expected one of {METHOD_NAMES}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.grid_lo, self.grid_hi, self.grid_size)

    def retained_draws(self) -> int:
        return (self.iters - self.burn_in) // self.thin

    def with_(self, **kwargs) -> "RunConfig":
        """Functional update keeping all other fields."""
        return replace(self, **kwargs)


#: Flat config keys, their target (block, attribute) and value parser.
_SCALAR_KEYS = {
    "n_basis": ("gp", "n_basis", int),
    "lambda_prior_shape": ("gp", "lambda_prior_shape", float),
    "lambda_prior_scale": ("gp", "lambda_prior_scale", float),
    "fixed_lambda": ("gp", "fixed_lambda", float),
    "truncation": ("dpmm", "truncation", int),
    "alpha": ("dpmm", "alpha", float),
    "mu0": ("dpmm", "mu0", float),
    "kappa0": ("dpmm", "kappa0", float),
    "a_tau": ("dpmm", "a_tau", float),
    "b_tau": ("dpmm", "b_tau", float),
    "iters": (None, "iters", int),
    "burn_in": (None, "burn_in", int),
    "thin": (None, "thin", int),
    "freq_proposal_sd": (None, "freq_proposal_sd", float),
    "phase_rw_sd": (None, "phase_rw_sd", float),
    "phase_indep_prob": (None, "phase_indep_prob", float),
    "loglambda_proposal_sd": (None, "loglambda_proposal_sd", float),
    "lambda_shape_paper_literal": (None, "lambda_shape_paper_literal", bool),
    "grid_lo": (None, "grid_lo", float),
    "grid_hi": (None, "grid_hi", float),
    "grid_size": (None, "grid_size", int),
    "decon_phi_k": (None, "decon_phi_k", str),
    "decon_nodes": (None, "decon_nodes", int),
    "jobs": (None, "jobs", int),
}


def _parse_noise(key: str, raw) -> tuple:
    """Return (value, sampled) for a sigma2/delta2 entry."""
    if isinstance(raw, str):
        if raw.lower() == "sample":
            return None, True
        try:
            raw = float(raw)
        except ValueError:
            raise ConfigError(f"{key} must be a positive number or 'sample', got {raw!r}") from None
    value = float(raw)
    if not (value > 0 and math.isfinite(value)):
        raise ConfigError(f"{key} must be strictly positive, got {value!r}")
    return value, False


def validate_config(raw: dict) -> RunConfig:
    """Normalize a parsed key-value configuration, filling documented defaults.

    Unknown keys, out-of-range hyperparameters and unknown estimator names
    all raise :class:`ConfigError` naming the offending key.
    """
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object of key-value pairs")
    raw = dict(raw)
    gp_kwargs, dpmm_kwargs, top_kwargs = {}, {}, {}
    noise_kwargs = {}

    for key in list(raw):
        if key in _SCALAR_KEYS:
            block, attr, cast = _SCALAR_KEYS[key]
            value = raw.pop(key)
            try:
                value = cast(value)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {key!r}: {value!r}") from None
            {"gp": gp_kwargs, "dpmm": dpmm_kwargs, None: top_kwargs}[block][attr] = value
    if "sigma2" in raw:
        value, sampled = _parse_noise("sigma2", raw.pop("sigma2"))
        noise_kwargs.update(sigma2=value, sigma2_sampled=sampled)
    if "delta2" in raw:
        value, sampled = _parse_noise("delta2", raw.pop("delta2"))
        noise_kwargs.update(delta2=value, delta2_sampled=sampled)
    if "methods" in raw:
        methods = raw.pop("methods")
        if isinstance(methods, str):
            methods = [m.strip() for m in methods.split(",") if m.strip()]
        top_kwargs["methods"] = tuple(methods)
    if raw:
        raise ConfigError(f"unknown configuration keys: {sorted(raw)}")

    try:
        return RunConfig(
            gp=GpHyper(**gp_kwargs),
            dpmm=DpmmHyper(**dpmm_kwargs),
            noise=NoiseConfig(**noise_kwargs),
            **top_kwargs,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    """Load and validate a JSON config file."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return validate_config(raw)
