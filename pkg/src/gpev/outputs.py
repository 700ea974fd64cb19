"""CSV artifact writers and the schema contracts the files must obey.

All floats are written with ``repr``, which round-trips doubles exactly and
keeps repeated runs byte-identical.  ``validate_output_csv`` re-opens a
written file and checks its header against the documented schema for its
filename; the CLI runs it after every write in debug mode.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np

from gpev.decon import DeconEstimate
from gpev.summaries import FunctionSummary

__all__ = [
    "SchemaError",
    "write_table_csv",
    "write_replicates_csv",
    "write_fit_csv",
    "write_decon_fit_csv",
    "write_density_csv",
    "write_chain_csv",
    "write_fdraws_csv",
    "validate_output_csv",
]


class SchemaError(ValueError):
    """A written CSV does not match its documented header."""


def _fmt(value) -> str:
    return repr(float(value))


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def delta_tag(delta2: float) -> str:
    return format(float(delta2), "g")


def write_table_csv(path, function: str, n: int, delta2_values, methods, cells):
    """AMSE table: one row per method, mean/se column pair per delta2.

    ``cells[(method, delta2)]`` holds (mean, se) across replicates.
    """
    header = ["function", "n", "method"]
    for d in delta2_values:
        header += [f"amse_mean_{delta_tag(d)}", f"amse_se_{delta_tag(d)}"]
    rows = []
    for m in methods:
        row = [function, str(n), m]
        for d in delta2_values:
            mean, se = cells[(m, d)]
            row += [_fmt(mean), _fmt(se)]
        rows.append(row)
    return _write_rows(path, header, rows)


def write_replicates_csv(path, rows):
    """Long-format per-replicate results: one row per (delta2, method, replicate)."""
    header = ["function", "n", "delta2", "method", "replicate", "amse"]
    out = [
        [fn, str(n), _fmt(d), m, str(r), _fmt(a)]
        for (fn, n, d, m, r, a) in rows
    ]
    return _write_rows(path, header, out)


def write_fit_csv(path, summary: FunctionSummary):
    """Posterior summary on the grid, with both interval kinds."""
    header = ["grid", "mean", "lower", "upper", "band_lower", "band_upper"]
    rows = [
        [_fmt(g), _fmt(m), _fmt(lo), _fmt(hi), _fmt(bl), _fmt(bu)]
        for g, m, lo, hi, bl, bu in zip(
            summary.grid, summary.mean, summary.lower, summary.upper,
            summary.band_lower, summary.band_upper,
        )
    ]
    return _write_rows(path, header, rows)


def write_decon_fit_csv(path, estimate: DeconEstimate):
    header = ["grid", "p_hat", "f_hat", "clipped"]
    clipped = estimate.clipped if estimate.clipped is not None else np.zeros(len(estimate.grid), bool)
    f_hat = estimate.f_hat if estimate.f_hat is not None else np.full(len(estimate.grid), np.nan)
    rows = [
        [_fmt(g), _fmt(p), _fmt(f), str(int(c))]
        for g, p, f, c in zip(estimate.grid, estimate.p_hat, f_hat, clipped)
    ]
    return _write_rows(path, header, rows)


def write_truth_csv(path, grid, truth_values):
    """The generating function on the output grid, for figure overlays."""
    rows = [[_fmt(g), _fmt(v)] for g, v in zip(grid, truth_values)]
    return _write_rows(path, ["grid", "truth"], rows)


def write_density_csv(path, grid, columns: dict):
    """Posterior-mean covariate density, one column per method."""
    names = list(columns)
    header = ["grid"] + [f"density_{m}" for m in names]
    rows = [
        [_fmt(g)] + [_fmt(columns[m][i]) for m in names]
        for i, g in enumerate(grid)
    ]
    return _write_rows(path, header, rows)


def write_chain_csv(path, samples, include_delta2: bool = True):
    """Scalar trace of a chain plus its whole-run acceptance rates."""
    header = ["draw", "sigma2"] + (["delta2"] if include_delta2 else [])
    header += ["lambda", "log_post", "accept_w", "accept_s", "accept_x"]
    rates = [samples.acceptance_rate(b) for b in ("w", "s", "x")]
    rows = []
    for i in range(samples.n_draws):
        row = [str(i), _fmt(samples.sigma2[i])]
        if include_delta2:
            row.append(_fmt(samples.delta2[i]))
        row += [_fmt(samples.lam[i]), _fmt(samples.log_post[i])]
        row += [_fmt(r) if r == r else "nan" for r in rates]
        rows.append(row)
    return _write_rows(path, header, rows)


def write_fdraws_csv(path, samples):
    """Function draws on the grid: one row per draw, one column per point."""
    k = samples.f_draws.shape[1]
    header = ["draw"] + [f"f{j:03d}" for j in range(k)]
    rows = [
        [str(i)] + [_fmt(v) for v in samples.f_draws[i]]
        for i in range(samples.n_draws)
    ]
    return _write_rows(path, header, rows)


# ---------------------------------------------------------------------------
# Post-write validation
# ---------------------------------------------------------------------------

_CHAIN_HEADERS = (
    ["draw", "sigma2", "delta2", "lambda", "log_post", "accept_w", "accept_s", "accept_x"],
    ["draw", "sigma2", "lambda", "log_post", "accept_w", "accept_s", "accept_x"],
)
_SUMMARY_HEADER = ["grid", "mean", "lower", "upper", "band_lower", "band_upper"]
_DECON_HEADER = ["grid", "p_hat", "f_hat", "clipped"]


def _check_table(header):
    if header[:3] != ["function", "n", "method"]:
        return False
    rest = header[3:]
    if not rest or len(rest) % 2:
        return False
    return all(
        rest[i].startswith("amse_mean_") and rest[i + 1].startswith("amse_se_")
        for i in range(0, len(rest), 2)
    )


def _check_density(header):
    return header[:1] == ["grid"] and len(header) > 1 and all(
        c.startswith("density_") for c in header[1:]
    )


def _check_fdraws(header):
    return header[:1] == ["draw"] and len(header) > 1 and all(
        re.fullmatch(r"f\d+", c) for c in header[1:]
    )


def validate_output_csv(path):
    """Check a written artifact's header against the schema for its name."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise SchemaError(f"{path}: empty file")
    name = path.name
    ok = True
    if name == "table.csv":
        ok = _check_table(header)
    elif name == "replicates.csv":
        ok = header == ["function", "n", "delta2", "method", "replicate", "amse"]
    elif name == "density.csv":
        ok = _check_density(header)
    elif name == "truth.csv":
        ok = header == ["grid", "truth"]
    elif name == "fit_decon.csv":
        ok = header == _DECON_HEADER
    elif name.startswith(("fit_", "delta_")):
        ok = header == _SUMMARY_HEADER
    elif name.endswith("_f.csv"):
        ok = _check_fdraws(header)
    elif name.startswith("chain") or path.parent.name == "chains":
        ok = header in [list(h) for h in _CHAIN_HEADERS]
    if not ok:
        raise SchemaError(f"{path}: header {header} does not match the documented schema")
    return path
