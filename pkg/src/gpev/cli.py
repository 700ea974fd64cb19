"""Command-line entry point: simulate, fit and check subcommands."""

from __future__ import annotations

import argparse
import os
import re
import sys
from dataclasses import replace
from pathlib import Path

from gpev import checks, harness, outputs, summaries
from gpev.core import (
    ConfigError,
    DataError,
    METHOD_NAMES,
    NoiseConfig,
    RunConfig,
    load_config,
    load_dataset,
)
from gpev.decon import DeconOverflowError
from gpev.sampler import ChainAbort

__all__ = ["main"]

PRESETS = {
    "table1": {"n": 500, "delta2": (0.001, 0.005, 0.01, 0.1, 0.5, 1.0)},
    "table2": {"n": 100, "delta2": (0.01, 0.2, 0.4, 0.6, 0.8, 1.0)},
    "table3": {"n": 250, "delta2": (0.01, 0.2, 0.4, 0.6, 0.8, 1.0)},
}

EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK = 3


def _resolve_seed(seed: int) -> int:
    env = os.environ.get("GPEV_SEED")
    return int(env) if env else int(seed)


def _sanitize(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


def _base_config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _parse_grid(text: str):
    try:
        lo, hi, k = text.split(":")
        return float(lo), float(hi), int(k)
    except ValueError:
        raise ConfigError(f"--grid expects lo:hi:k, got {text!r}") from None


def _maybe_validate(paths, debug: bool):
    if debug or os.environ.get("GPEV_DEBUG"):
        for p in paths:
            outputs.validate_output_csv(p)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = _base_config(args.config)
    overrides = {}
    for key in ("iters", "burn_in", "thin", "jobs"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    if args.methods:
        overrides["methods"] = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if overrides:
        config = config.with_(**overrides)

    if args.preset:
        preset = PRESETS[args.preset]
        n = args.n if args.n is not None else preset["n"]
        delta2_values = preset["delta2"]
    else:
        n = args.n if args.n is not None else 500
        delta2_values = tuple(float(v) for v in args.delta2.split(",")) if args.delta2 else (0.01,)
    if args.n_basis is not None:
        config = config.with_(gp=replace(config.gp, n_basis=args.n_basis))
    elif config.gp.n_basis is None and n == 500:
        # n = 500 experiments default to 80 basis functions
        config = config.with_(gp=replace(config.gp, n_basis=80))

    seed = _resolve_seed(args.seed)
    methods = config.methods
    out_dir = Path(args.out)
    written = []
    cells = {}
    replicate_rows = []
    timing_lines = []

    for delta2 in delta2_values:
        noise = NoiseConfig(
            sigma2=args.sigma**2, delta2=float(delta2),
            sigma2_sampled=False, delta2_sampled=False,
        )
        cfg_d = config.with_(noise=noise)
        spec = harness.SyntheticSpec(
            n=n, f_id=args.function, sigma=args.sigma, delta2=float(delta2)
        )
        result = harness.run_experiment(spec, methods, args.replicates, cfg_d, seed)

        sub = out_dir / f"delta2_{outputs.delta_tag(delta2)}"
        written.append(
            outputs.write_truth_csv(
                sub / "truth.csv", result.grid, harness.true_function(args.function, result.grid)
            )
        )
        density_columns = {}
        for m in methods:
            rep0 = result.payloads[m][0]
            if m == "decon":
                written.append(outputs.write_decon_fit_csv(sub / "fit_decon.csv", rep0.estimate))
            else:
                summary = summaries.summarize_function(rep0.samples, result.grid)
                written.append(outputs.write_fit_csv(sub / f"fit_{m}.csv", summary))
                if rep0.samples.mix_weights is not None:
                    density_columns[m] = summaries.covariate_density_summary(
                        rep0.samples, result.grid
                    )
            for rep, payload in enumerate(result.payloads[m]):
                if payload.samples is None:
                    continue
                written.append(
                    outputs.write_chain_csv(sub / "chains" / f"{m}_{rep}.csv", payload.samples)
                )
                written.append(
                    outputs.write_fdraws_csv(sub / "chains" / f"{m}_{rep}_f.csv", payload.samples)
                )
            cells[(m, delta2)] = (result.mean_amse(m), result.se_amse(m))
            timing_lines.append(
                f"# delta2={outputs.delta_tag(delta2)} {m}: "
                f"{result.mean_seconds(m):.2f} s per fit"
            )
            for rep in range(args.replicates):
                replicate_rows.append(
                    (args.function, n, delta2, m, rep, result.amse[m][rep])
                )
        if density_columns:
            written.append(outputs.write_density_csv(sub / "density.csv", result.grid, density_columns))

    written.append(
        outputs.write_table_csv(out_dir / "table.csv", args.function, n, delta2_values, methods, cells)
    )
    written.append(outputs.write_replicates_csv(out_dir / "replicates.csv", replicate_rows))
    _maybe_validate(written, args.debug)

    header = ["method"] + [f"d2={outputs.delta_tag(d)}" for d in delta2_values]
    print("  ".join(f"{h:>14s}" for h in header))
    for m in methods:
        row = [m] + [
            f"{cells[(m, d)][0]:.4f} ({cells[(m, d)][1]:.4f})" for d in delta2_values
        ]
        print("  ".join(f"{c:>14s}" for c in row))
    for line in timing_lines:
        print(line)
    return 0


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    config = _base_config(args.config)
    if args.delta2 == "sample":
        noise = NoiseConfig(sigma2=None, delta2=None, sigma2_sampled=True, delta2_sampled=True)
    else:
        noise = NoiseConfig(
            sigma2=None, delta2=float(args.delta2),
            sigma2_sampled=True, delta2_sampled=False,
        )
    lo, hi, k = _parse_grid(args.grid)
    overrides = {"noise": noise, "grid_lo": lo, "grid_hi": hi, "grid_size": k}
    for key in ("iters", "burn_in", "thin"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    config = config.with_(**overrides)

    data = load_dataset(args.data, w_col=args.w_col, y_col=args.y_col, group_col=args.group_col)
    seed = _resolve_seed(args.seed)
    results = harness.case_study(data, config, seed, delta_of_x=args.delta_of_x)

    out_dir = Path(args.out)
    written = []
    prefix = "delta" if args.delta_of_x else "fit"
    for label, fit in results.items():
        tag = _sanitize(label)
        written.append(outputs.write_fit_csv(out_dir / f"{prefix}_{tag}.csv", fit.summary))
        written.append(
            outputs.write_chain_csv(
                out_dir / f"chain_{tag}.csv", fit.samples,
                include_delta2=fit.delta2_sampled,
            )
        )
        rates = ", ".join(
            f"{b}={fit.samples.acceptance_rate(b):.2f}" for b in ("w", "s", "x")
        )
        print(f"group {label}: n draws {fit.samples.n_draws}, acceptance {rates}")
    _maybe_validate(written, args.debug)
    return 0


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    names = [args.suite] if args.suite else None
    results = checks.run_suites(names)
    for res in results:
        print(res.line())
    return 0 if all(r.passed for r in results) else EXIT_CHECK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpev",
        description="Errors-in-variables regression: surrogate-GP chains, "
        "deconvolution baselines, simulation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run replicated synthetic experiments")
    sim.add_argument("--config", help="JSON config file")
    sim.add_argument("--preset", choices=sorted(PRESETS))
    sim.add_argument("--function", choices=("f1", "f2"), default="f1")
    sim.add_argument("--n", type=int)
    sim.add_argument("--n-basis", type=int, dest="n_basis")
    sim.add_argument("--delta2", help="comma-separated measurement-error variances")
    sim.add_argument("--sigma", type=float, default=0.2)
    sim.add_argument("--replicates", type=int, default=10)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default="gpev_out")
    sim.add_argument("--methods", help="comma-separated subset of " + ",".join(METHOD_NAMES))
    sim.add_argument("--iters", type=int)
    sim.add_argument("--burn-in", type=int, dest="burn_in")
    sim.add_argument("--thin", type=int)
    sim.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sim.add_argument("--debug", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit grouped study data and summarize f or f(x)-x")
    fit.add_argument("--data", required=True)
    fit.add_argument("--config")
    fit.add_argument("--delta2", required=True, help="positive value or 'sample'")
    fit.add_argument("--grid", default="-2:2:100")
    fit.add_argument("--delta-of-x", action="store_true", dest="delta_of_x")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", default="gpev_fit")
    fit.add_argument("--w-col", default="w")
    fit.add_argument("--y-col", default="y")
    fit.add_argument("--group-col", default="group")
    fit.add_argument("--iters", type=int)
    fit.add_argument("--burn-in", type=int, dest="burn_in")
    fit.add_argument("--thin", type=int)
    fit.add_argument("--debug", action="store_true")
    fit.set_defaults(func=cmd_fit)

    chk = sub.add_parser("check", help="run the numerical verification suites")
    chk.add_argument("--suite", choices=sorted(checks.SUITES))
    chk.set_defaults(func=cmd_check)
    return parser


def _join_grid_flag(argv):
    """Let `--grid -2:2:100` parse despite the value's leading dash."""
    if argv is None:
        argv = sys.argv[1:]
    out = []
    i = 0
    while i < len(argv):
        if argv[i] == "--grid" and i + 1 < len(argv):
            out.append(f"--grid={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_grid_flag(argv))
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ChainAbort, DeconOverflowError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
