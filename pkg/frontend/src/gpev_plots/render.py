"""Figure rendering from the experiment CSV schemas.

Three figure kinds:

* ``fit``      - mean curve with nested shaded bands (darker: pointwise
                 interval, lighter: simultaneous band), optional truth line.
* ``boxplots`` - per-method AMSE boxes from the long-format replicate file,
                 grouped by measurement-error variance.
* ``traces``   - the last stretch of retained draws for chosen chain scalars.

Rendering never recomputes statistics: the figures display exactly what the
CSV files carry.  Output is deterministic at fixed size and backend, so
re-rendering a file is pixel-identical.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["SchemaMismatch", "render_fit", "render_boxplots", "render_traces", "main"]

SUMMARY_HEADER = ["grid", "mean", "lower", "upper", "band_lower", "band_upper"]
REPLICATES_HEADER = ["function", "n", "delta2", "method", "replicate", "amse"]

#: Fixed box order within each delta2 group.
METHOD_ORDER = ("gpev_a", "gpev_f", "gpev_n", "gp", "decon")

#: Trace panels show at most this many of the final retained draws.
TRACE_WINDOW = 200

FIGSIZE = (6.4, 4.2)
DPI = 120


class SchemaMismatch(ValueError):
    """An input CSV does not carry the expected columns."""


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path}: empty file")
    return rows[0], rows[1:]


def _read_columns(path, expected_header):
    header, body = _read_csv(path)
    if header != expected_header:
        raise SchemaMismatch(
            f"{path}: header {header} does not match the {expected_header} schema"
        )
    if not body:
        raise SchemaMismatch(f"{path}: no data rows")
    data = np.array([[float(c) for c in row] for row in body])
    return {name: data[:, k] for k, name in enumerate(expected_header)}


def _save(fig, out_path):
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"CreationDate": None} if out_path.suffix == ".pdf" else None
    fig.savefig(out_path, dpi=DPI, metadata=metadata)
    plt.close(fig)
    return out_path


# ---------------------------------------------------------------------------
# fit curves with nested bands
# ---------------------------------------------------------------------------

def read_summary(path) -> dict:
    """Parse a function-summary CSV (grid, mean, both interval kinds)."""
    return _read_columns(path, SUMMARY_HEADER)


def read_truth(path) -> dict:
    header, body = _read_csv(path)
    if header != ["grid", "truth"]:
        raise SchemaMismatch(f"{path}: expected columns grid,truth, got {header}")
    data = np.array([[float(c) for c in row] for row in body])
    return {"grid": data[:, 0], "truth": data[:, 1]}


def render_fit(summary_csv, out_image, truth_csv=None):
    """One panel: mean curve, optional truth, pointwise and simultaneous bands."""
    cols = read_summary(summary_csv)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    grid = cols["grid"]
    ax.fill_between(grid, cols["band_lower"], cols["band_upper"],
                    color="0.85", label="simultaneous band")
    ax.fill_between(grid, cols["lower"], cols["upper"],
                    color="0.6", label="pointwise interval")
    ax.plot(grid, cols["mean"], color="black", lw=1.5, label="posterior mean")
    if truth_csv is not None:
        truth = read_truth(truth_csv)
        ax.plot(truth["grid"], truth["truth"], color="red", lw=1.2, label="truth")
    ax.set_xlabel("x")
    ax.set_ylabel("f(x)")
    ax.legend(loc="best", fontsize=8)
    return _save(fig, out_image)


# ---------------------------------------------------------------------------
# method boxplots
# ---------------------------------------------------------------------------

def read_replicates(path):
    """Long-format replicate rows grouped as {(delta2, method): [amse, ...]}."""
    header, body = _read_csv(path)
    if header != REPLICATES_HEADER:
        raise SchemaMismatch(
            f"{path}: header {header} does not match the {REPLICATES_HEADER} schema"
        )
    if not body:
        raise SchemaMismatch(f"{path}: no replicate rows")
    groups = {}
    for row in body:
        key = (float(row[2]), row[3])
        groups.setdefault(key, []).append(float(row[5]))
    return groups


def build_boxplot_figure(groups):
    deltas = sorted({d for d, _ in groups})
    fig, ax = plt.subplots(figsize=FIGSIZE)
    data, labels, positions = [], [], []
    pos = 0
    for d in deltas:
        for method in METHOD_ORDER:
            if (d, method) in groups:
                data.append(groups[(d, method)])
                labels.append(f"{method}\nd2={d:g}" if len(deltas) > 1 else method)
                positions.append(pos)
                pos += 1
        pos += 1  # gap between delta2 groups
    ax.boxplot(data, positions=positions, patch_artist=True,
               boxprops={"facecolor": "0.8"}, medianprops={"color": "black"})
    ax.set_xticks(positions)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("AMSE")
    return fig


def render_boxplots(replicates_csv, out_image):
    """One box per method per measurement-error variance."""
    groups = read_replicates(replicates_csv)
    return _save(build_boxplot_figure(groups), out_image)


# ---------------------------------------------------------------------------
# chain traces
# ---------------------------------------------------------------------------

def read_chain(path):
    header, body = _read_csv(path)
    if not body:
        raise SchemaMismatch(f"{path}: no draws")
    data = np.array([[float(c) for c in row] for row in body])
    return {name: data[:, k] for k, name in enumerate(header)}


def build_trace_figure(cols, params):
    missing = [p for p in params if p not in cols]
    if missing:
        raise SchemaMismatch(f"chain file lacks column(s) {missing}; has {sorted(cols)}")
    fig, axes = plt.subplots(len(params), 1, figsize=(FIGSIZE[0], 2.2 * len(params)),
                             squeeze=False)
    for ax, name in zip(axes[:, 0], params):
        values = cols[name][-TRACE_WINDOW:]
        draws = cols["draw"][-TRACE_WINDOW:] if "draw" in cols else np.arange(len(values))
        ax.plot(draws, values, lw=0.8, color="black")
        ax.set_ylabel(name, fontsize=8)
    axes[-1, 0].set_xlabel("draw")
    fig.tight_layout()
    return fig


def render_traces(chain_csv, out_image, params=("lambda",)):
    """Trace panels of the last retained draws, one per requested parameter."""
    cols = read_chain(chain_csv)
    return _save(build_trace_figure(cols, list(params)), out_image)


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render",
        description="Render experiment CSVs: render <kind> <in.csv> [<in2.csv>] <out.(png|pdf)>",
    )
    parser.add_argument("kind", choices=("fit", "boxplots", "traces"))
    parser.add_argument("inputs", nargs="+",
                        help="input CSV(s) followed by the output image path")
    parser.add_argument("--params", default="lambda",
                        help="comma-separated chain columns for traces")
    args = parser.parse_args(argv)

    if len(args.inputs) < 2:
        parser.error("need at least <in.csv> <out image>")
    *csvs, out_image = args.inputs
    try:
        if args.kind == "fit":
            if len(csvs) not in (1, 2):
                parser.error("fit takes <summary.csv> [<truth.csv>] <out>")
            render_fit(csvs[0], out_image, truth_csv=csvs[1] if len(csvs) == 2 else None)
        elif args.kind == "boxplots":
            if len(csvs) != 1:
                parser.error("boxplots takes <replicates.csv> <out>")
            render_boxplots(csvs[0], out_image)
        else:
            if len(csvs) != 1:
                parser.error("traces takes <chain.csv> <out>")
            params = [p.strip() for p in args.params.split(",") if p.strip()]
            render_traces(csvs[0], out_image, params=params)
    except (SchemaMismatch, OSError) as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
