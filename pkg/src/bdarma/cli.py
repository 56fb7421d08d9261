"""Command-line interface: simulate | fit | forecast | ingest | study | report.

Every command writes a manifest (command, effective config, seed, versions,
timestamp, outputs) before computation starts: into ``<out>/manifest.json``
for directory outputs, or ``<out>.manifest.json`` alongside file outputs.
Data goes to files under ``--out``; diagnostics go to standard error.

Exit codes: 0 success, 1 validation error (bad flags, bad config, bad
input), 2 runtime failure (sampling or study errors).
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import platform
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .errors import BdarmaError, ConfigError, IngestError, InvalidCompositionError, ShapeError
from .forecast import forecast_paths, plot_forecast, save_forecast_csv, summarize_paths
from .ingest import (
    read_composition_csv,
    read_long_csv,
    read_wide_csv,
    save_composition_csv,
    FourierSeasonalDesign,
    to_shares,
)
from .model import IdentityDesign, ModelSpec
from .posterior import FitResult, fit as fit_posterior
from .priors import PRIOR_FAMILIES, default_gamma_prior, prior_from_dict
from .sampler import SamplerConfig, profile_config
from .simulate import simulate_builtin
from .study import (
    ApplicationConfig,
    StudyConfig,
    load_config,
    render_application_report,
    render_study_report,
    run_application,
    run_study,
)

_VALIDATION_ERRORS = (
    ConfigError,
    IngestError,
    ShapeError,
    InvalidCompositionError,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
)


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (validation) instead of 2 on bad usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def _env_seed() -> int | None:
    raw = os.environ.get("BDARMA_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"BDARMA_SEED must be an integer, got {raw!r}") from None


def _resolve_seed(flag_seed, config_seed: int) -> int:
    """Precedence: --seed flag, then BDARMA_SEED, then the config value."""
    if flag_seed is not None:
        return int(flag_seed)
    env = _env_seed()
    if env is not None:
        return env
    return int(config_seed)


def _versions() -> dict:
    import scipy

    return {
        "bdarma": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _manifest_path(out: str, directory: bool) -> str:
    return os.path.join(out, "manifest.json") if directory else out + ".manifest.json"


def write_manifest(out: str, directory: bool, command: str, config: dict,
                   seed: int, outputs: list) -> str:
    if directory:
        os.makedirs(out, exist_ok=True)
    path = _manifest_path(out, directory)
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "versions": _versions(),
        "created_utc": datetime.datetime.now(datetime.timezone.utc)
        .isoformat(timespec="seconds"),
        "outputs": outputs,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path


def _sampler_from_args(args) -> SamplerConfig:
    cfg = profile_config(args.profile)
    overrides = {"jobs": args.jobs if args.jobs else (os.cpu_count() or 1)}
    for name in ("chains", "warmup", "sampling", "target_accept",
                 "max_treedepth"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return replace(cfg, **overrides)


def _add_sampler_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--profile", choices=("desk", "paper"), default="desk",
                        help="sampler scale: desk (2x(300+300)) or paper (4x(500+750))")
    parser.add_argument("--chains", type=int, help="override chain count")
    parser.add_argument("--warmup", type=int, help="override warmup iterations")
    parser.add_argument("--sampling", type=int, help="override sampling iterations")
    parser.add_argument("--target-accept", dest="target_accept", type=float,
                        help="override the dual-averaging acceptance target")
    parser.add_argument("--max-treedepth", dest="max_treedepth", type=int,
                        help="override the trajectory doubling cap")
    parser.add_argument("--jobs", type=int, default=None,
                        help="parallel chain workers (default: logical cores)")


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args.seed, 0)
    config = {"dgp": args.dgp, "n_obs": args.n_obs, "seed": seed,
              "init_concentration": args.init_concentration}
    write_manifest(args.out, False, "simulate", config, seed, [args.out])
    rng = np.random.default_rng(seed)
    series, spec, _ = simulate_builtin(args.dgp, args.n_obs, rng,
                                       init_concentration=args.init_concentration)
    save_composition_csv(series, args.out)
    _log(f"wrote {args.n_obs} x {spec.n_parts} compositions to {args.out}")
    return 0


def cmd_fit(args) -> int:
    series, names = read_composition_csv(args.data)
    sampler = _sampler_from_args(args)
    seed = _resolve_seed(args.seed, sampler.seed)
    sampler = replace(sampler, seed=seed, progress=not args.quiet)
    if args.design == "identity":
        design = IdentityDesign(series.shape[1])
    else:
        design = FourierSeasonalDesign(series.shape[1])
    spec = ModelSpec(
        n_parts=series.shape[1], ar_order=args.P, ma_order=args.Q,
        n_beta=design.n_beta, n_gamma=design.n_gamma,
    )
    prior = prior_from_dict({"family": args.prior})
    config = {
        "data": args.data, "P": args.P, "Q": args.Q, "prior": args.prior,
        "design": args.design, "seed": seed,
        "sampler": {"chains": sampler.chains, "warmup": sampler.warmup,
                    "sampling": sampler.sampling,
                    "target_accept": sampler.target_accept,
                    "max_treedepth": sampler.max_treedepth},
    }
    write_manifest(args.out, True, "fit", config, seed,
                   ["model.json", "draws.csv", "diagnostics.json"])
    res = fit_posterior(series, spec, design, prior,
                        gamma_prior=default_gamma_prior(design.n_gamma),
                        sampler_config=sampler)
    res.save(args.out)
    _log(f"fit complete: divergence rate {res.divergence_rate:.4f}, "
         f"max split-rhat {float(np.nanmax(res.draws.rhat)):.4f}")
    return 0


def cmd_forecast(args) -> int:
    res = FitResult.load(args.model_dir)
    series, names = read_composition_csv(args.data)
    seed = _resolve_seed(args.seed, 0)
    if args.thin < 1:
        raise ConfigError("--thin must be a positive integer")
    config = {"model_dir": args.model_dir, "data": args.data,
              "horizon": args.horizon, "seed": seed,
              "noise": not args.mean_path, "thin": args.thin}
    outputs = ["forecast.csv"]
    write_manifest(args.out, True, "forecast", config, seed, outputs)
    paths = forecast_paths(res.spec, res.design,
                           res.theta_draws()[::args.thin], series,
                           args.horizon, np.random.default_rng(seed),
                           noise=not args.mean_path)
    summary = summarize_paths(paths)
    save_forecast_csv(summary, os.path.join(args.out, "forecast.csv"),
                      component_names=names)
    if args.plots:
        plot_forecast(summary, series, args.out, component_names=names)
    _log(f"forecast of {args.horizon} steps written to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    seed = _resolve_seed(None, 0)
    config = {"data": args.data, "format": args.format}
    write_manifest(args.out, True, "ingest", config, seed,
                   ["validation_report.json", "shares.csv"])
    reader = read_long_csv if args.format == "long" else read_wide_csv
    report_path = os.path.join(args.out, "validation_report.json")
    try:
        panel = reader(args.data)
    except IngestError as exc:
        report = {
            "valid": False,
            "problems": [{"row": r, "message": m} for r, m in exc.rows],
            "message": str(exc),
        }
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        _log(f"validation failed: {exc}")
        return 1
    shares = to_shares(panel)
    report = {
        "valid": True,
        "problems": [],
        "n_rows": panel.n_obs,
        "sectors": list(panel.sectors),
        "first_date": panel.dates[0].isoformat(),
        "last_date": panel.dates[-1].isoformat(),
    }
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    save_composition_csv(shares, os.path.join(args.out, "shares.csv"),
                         names=panel.sectors)
    _log(f"ingested {panel.n_obs} rows x {panel.n_sectors} sectors")
    return 0


def cmd_study(args) -> int:
    base = _sampler_from_args(args)
    cfg = load_config(args.config, base_sampler=base)
    seed = _resolve_seed(args.seed, cfg.seed)
    updates = {"seed": seed}
    if args.replicates is not None:
        if isinstance(cfg, ApplicationConfig):
            raise ConfigError("--replicates applies only to simulation studies")
        updates["replicates"] = cfg.replicates if args.replicates < 1 else args.replicates
    cfg = replace(cfg, **updates)
    write_manifest(args.out, True, "study", cfg.to_dict(), seed,
                   ["results.json", "report.txt"])
    if isinstance(cfg, StudyConfig):
        run_study(cfg, args.out, log=None if not args.quiet else (lambda m: None))
    else:
        run_application(cfg, args.out,
                        log=None if not args.quiet else (lambda m: None))
    _log(f"study artifacts written to {args.out}")
    return 0


def cmd_report(args) -> int:
    if os.path.isdir(args.results):
        results_path = os.path.join(args.results, "results.json")
    else:
        results_path = args.results
    with open(results_path) as fh:
        results = json.load(fh)
    kind = results.get("config", {}).get("kind", "simulation")
    text = (render_study_report(results) if kind == "simulation"
            else render_application_report(results))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        out = args.out or os.path.join(args.results, "report.txt")
        with open(out, "w") as fh:
            fh.write(text)
        _log(f"report written to {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bdarma",
                     description="Bayesian Dirichlet ARMA modelling of "
                                 "compositional time series")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="draw a series from a built-in DGP")
    p.add_argument("--dgp", choices=("main", "supplementary"), default="main")
    p.add_argument("--T", dest="n_obs", type=int, required=True,
                   help="number of observations")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--init-concentration", type=float, default=1.0,
                   help="Dirichlet concentration for the pre-sample rows")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="sample the posterior for a composition series")
    p.add_argument("--data", required=True, help="composition CSV")
    p.add_argument("--P", type=int, required=True, help="autoregressive order")
    p.add_argument("--Q", type=int, required=True, help="moving-average order")
    p.add_argument("--prior", choices=PRIOR_FAMILIES, required=True)
    p.add_argument("--design", choices=("identity", "fourier"), default="identity")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quiet", action="store_true", help="suppress progress lines")
    p.add_argument("--out", required=True, help="output directory")
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="forecast from a saved fit")
    p.add_argument("--model-dir", required=True, help="directory written by fit")
    p.add_argument("--data", required=True, help="history composition CSV")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mean-path", action="store_true",
                   help="propagate conditional means instead of sampling")
    p.add_argument("--thin", type=int, default=1,
                   help="keep every Nth posterior draw (default: all)")
    p.add_argument("--plots", action="store_true", help="write SVG fan charts")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("ingest", help="validate a sector panel and emit shares")
    p.add_argument("--data", required=True, help="panel CSV")
    p.add_argument("--format", choices=("long", "wide"), default="long")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("study", help="run a simulation study or the application")
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--replicates", type=int, default=None,
                   help="override the config's replicate count")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("report", help="re-render a report from saved results")
    p.add_argument("--results", required=True,
                   help="directory containing results.json")
    p.add_argument("--out", default=None,
                   help="output path ('-' for standard output)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        _log(f"error: {exc}")
        if isinstance(exc, IngestError) and exc.rows:
            for row, msg in exc.rows[:20]:
                _log(f"  {row}: {msg}")
            if len(exc.rows) > 20:
                _log(f"  ... and {len(exc.rows) - 20} more")
        return 1
    except BdarmaError as exc:
        _log(f"runtime failure: {exc}")
        return 2
    except OSError as exc:
        _log(f"runtime failure: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
