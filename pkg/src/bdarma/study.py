"""Simulation-study and application harness.

``run_study`` drives the prior-sensitivity experiments: for each replicate it
simulates one dataset from a built-in DGP, fits every requested scenario
(correctly specified, overfit, underfit) under every requested prior on the
same training slice (hash-checked), scores parameter recovery against the
generating values, and scores 20-step-ahead forecasts against the held-out
tail.  ``run_application`` drives the sector-share pipeline: ingest, seasonal
design, one fit per prior, and a holdout forecast-accuracy table.

Reports are byte-deterministic in the master seed: the same config produces
the same ``report.txt`` and ``results.json``.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, BdarmaError, StudyError
from .forecast import forecast_paths, plot_forecast, summarize_paths
from .ingest import (
    FourierSeasonalDesign,
    read_long_csv,
    read_wide_csv,
    split_panel,
    synthetic_sector_panel,
    to_shares,
)
from .metrics import (
    MISSING,
    forecast_mae,
    forecast_rmse,
    forecast_summary,
    format_table,
    recovery_metrics,
    save_recovery_csv,
)
from .model import IdentityDesign, ModelSpec, ParameterVector, coefficient_names
from .posterior import fit as fit_posterior
from .priors import PRIOR_FAMILIES, default_gamma_prior, default_study_priors
from .sampler import SamplerConfig, profile_config
from .simulate import builtin_dgp, simulate

SCENARIO_ORDERS = {"correct": (2, 1), "overfit": (4, 2), "underfit": (1, 0)}
_MAX_FAILURE_RATE = 0.20


def _data_hash(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def _fit_seed(master: int, *indices: int) -> int:
    ss = np.random.SeedSequence([int(master), *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


# ---------------------------------------------------------------------------
# Configs


@dataclass
class StudyConfig:
    """Simulation-study settings (JSON-serialisable)."""

    dgp: str = "main"
    replicates: int = 10
    scenarios: tuple = ("correct", "overfit", "underfit")
    priors: tuple = tuple(PRIOR_FAMILIES)
    seed: int = 0
    n_obs: int = 100
    train_length: int = 80
    horizon: int = 20
    sampler: SamplerConfig = field(default_factory=lambda: profile_config("desk"))

    def __post_init__(self):
        self.scenarios = tuple(self.scenarios)
        self.priors = tuple(self.priors)
        if self.dgp not in ("main", "supplementary"):
            raise ConfigError(f"unknown dgp {self.dgp!r}")
        for s in self.scenarios:
            if s not in SCENARIO_ORDERS:
                raise ConfigError(
                    f"unknown scenario {s!r}; choose from {sorted(SCENARIO_ORDERS)}"
                )
        if not self.scenarios:
            raise ConfigError("at least one scenario is required")
        for p in self.priors:
            if p not in PRIOR_FAMILIES:
                raise ConfigError(
                    f"unknown prior {p!r}; choose from {list(PRIOR_FAMILIES)}"
                )
        if not self.priors:
            raise ConfigError("at least one prior is required")
        if self.replicates < 1:
            raise ConfigError("replicates must be positive")
        if self.train_length + self.horizon > self.n_obs:
            raise ConfigError(
                f"train_length + horizon = {self.train_length + self.horizon} "
                f"exceeds n_obs = {self.n_obs}"
            )

    def to_dict(self) -> dict:
        d = {
            "kind": "simulation",
            "dgp": self.dgp,
            "replicates": self.replicates,
            "scenarios": list(self.scenarios),
            "priors": list(self.priors),
            "seed": self.seed,
            "n_obs": self.n_obs,
            "train_length": self.train_length,
            "horizon": self.horizon,
            "sampler": _sampler_dict(self.sampler),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict, base_sampler: SamplerConfig | None = None):
        sampler = _sampler_from_dict(d.get("sampler", {}), base_sampler)
        kwargs = {
            k: d[k]
            for k in ("dgp", "replicates", "scenarios", "priors", "seed",
                      "n_obs", "train_length", "horizon")
            if k in d
        }
        return cls(sampler=sampler, **kwargs)


@dataclass
class ApplicationConfig:
    """Sector-share application settings (JSON-serialisable)."""

    ar_order: int = 2
    ma_order: int = 0
    train_length: int = 504
    test_length: int = 126
    priors: tuple = tuple(PRIOR_FAMILIES)
    seed: int = 0
    n_obs: int = 630
    panel: str | None = None
    panel_format: str = "long"
    plots: bool = False
    sampler: SamplerConfig = field(default_factory=lambda: profile_config("desk"))

    def __post_init__(self):
        self.priors = tuple(self.priors)
        for p in self.priors:
            if p not in PRIOR_FAMILIES:
                raise ConfigError(
                    f"unknown prior {p!r}; choose from {list(PRIOR_FAMILIES)}"
                )
        if not self.priors:
            raise ConfigError("at least one prior is required")
        if self.ar_order < 0 or self.ma_order < 0:
            raise ConfigError("lag orders must be nonnegative")
        if self.panel_format not in ("long", "wide"):
            raise ConfigError("panel_format must be 'long' or 'wide'")
        if self.train_length <= max(self.ar_order, self.ma_order):
            raise ConfigError(
                f"training window of {self.train_length} rows cannot support "
                f"max lag {max(self.ar_order, self.ma_order)}"
            )

    def to_dict(self) -> dict:
        return {
            "kind": "application",
            "ar_order": self.ar_order,
            "ma_order": self.ma_order,
            "train_length": self.train_length,
            "test_length": self.test_length,
            "priors": list(self.priors),
            "seed": self.seed,
            "n_obs": self.n_obs,
            "panel": self.panel,
            "panel_format": self.panel_format,
            "plots": self.plots,
            "sampler": _sampler_dict(self.sampler),
        }

    @classmethod
    def from_dict(cls, d: dict, base_sampler: SamplerConfig | None = None):
        sampler = _sampler_from_dict(d.get("sampler", {}), base_sampler)
        kwargs = {
            k: d[k]
            for k in ("ar_order", "ma_order", "train_length", "test_length",
                      "priors", "seed", "n_obs", "panel", "panel_format", "plots")
            if k in d
        }
        return cls(sampler=sampler, **kwargs)


def _sampler_dict(cfg: SamplerConfig) -> dict:
    return {
        "chains": cfg.chains,
        "warmup": cfg.warmup,
        "sampling": cfg.sampling,
        "target_accept": cfg.target_accept,
        "max_treedepth": cfg.max_treedepth,
        "init_range": cfg.init_range,
        "seed": cfg.seed,
        "jobs": cfg.jobs,
    }


def _sampler_from_dict(d: dict, base: SamplerConfig | None) -> SamplerConfig:
    cfg = base if base is not None else profile_config("desk")
    known = {
        k: d[k]
        for k in ("chains", "warmup", "sampling", "target_accept",
                  "max_treedepth", "init_range", "seed", "jobs")
        if k in d
    }
    unknown = set(d) - set(known)
    if unknown:
        raise ConfigError(f"unknown sampler settings: {sorted(unknown)}")
    return replace(cfg, **known)


def load_config(path, base_sampler: SamplerConfig | None = None):
    """Load a study or application config from a JSON file."""
    with open(path) as fh:
        d = json.load(fh)
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a JSON object")
    kind = d.pop("kind", "simulation")
    if kind == "simulation":
        return StudyConfig.from_dict(d, base_sampler)
    if kind == "application":
        return ApplicationConfig.from_dict(d, base_sampler)
    raise ConfigError(f"unknown config kind {kind!r}")


# ---------------------------------------------------------------------------
# Simulation studies


def scenario_spec(dgp_spec: ModelSpec, scenario: str) -> ModelSpec:
    p, q = SCENARIO_ORDERS[scenario]
    return ModelSpec(
        n_parts=dgp_spec.n_parts,
        ar_order=p,
        ma_order=q,
        n_beta=dgp_spec.n_beta,
        n_gamma=dgp_spec.n_gamma,
    )


def aligned_truth(fit_spec: ModelSpec, dgp_spec: ModelSpec,
                  dgp_params: ParameterVector) -> np.ndarray:
    """Generating values arranged in the fitted model's packing order.

    Blocks the fitted model adds beyond the DGP (extraneous lags) are truly
    zero; blocks the fitted model omits simply do not appear, so an underfit
    model is scored only on the coefficients it actually has.
    """
    truth = ParameterVector.zeros(fit_spec)
    for p in range(min(fit_spec.ar_order, dgp_spec.ar_order)):
        truth.ar[p] = dgp_params.ar[p]
    for q in range(min(fit_spec.ma_order, dgp_spec.ma_order)):
        truth.ma[q] = dgp_params.ma[q]
    truth.beta[:] = dgp_params.beta
    truth.gamma[:] = dgp_params.gamma
    return truth.pack()


def block_label(name: str) -> str:
    return name.split("[", 1)[0]


def run_study(cfg: StudyConfig, out_dir, log=None) -> dict:
    """Run the simulation study and write its artifacts under ``out_dir``.

    Returns the results dictionary (also saved as ``results.json``).  Raises
    ``StudyError`` when more than 20% of fits fail.
    """
    log = log or (lambda msg: print(msg, file=sys.stderr, flush=True))
    os.makedirs(out_dir, exist_ok=True)
    dgp_spec, dgp_params = builtin_dgp(cfg.dgp)
    design = IdentityDesign(dgp_spec.n_parts)
    priors = default_study_priors("sim-correct")
    gamma_prior = default_gamma_prior(dgp_spec.n_gamma)

    datasets, data_hashes = [], []
    for rep in range(cfg.replicates):
        rng = np.random.default_rng([cfg.seed, rep])
        data = simulate(dgp_spec, dgp_params, design, cfg.n_obs, rng)
        datasets.append(data)
        data_hashes.append(_data_hash(data[: cfg.train_length]))

    fit_rows = []
    collected: dict = {
        (s, p): {"est": [], "lo": [], "hi": [], "fc": []}
        for s in cfg.scenarios
        for p in cfg.priors
    }
    n_total = cfg.replicates * len(cfg.scenarios) * len(cfg.priors)
    n_failed = 0
    failures = []
    for rep in range(cfg.replicates):
        train = datasets[rep][: cfg.train_length]
        actual = datasets[rep][cfg.train_length: cfg.train_length + cfg.horizon]
        for si, scenario in enumerate(cfg.scenarios):
            spec = scenario_spec(dgp_spec, scenario)
            for pi, prior_name in enumerate(cfg.priors):
                if _data_hash(train) != data_hashes[rep]:
                    raise StudyError(
                        f"training data for replicate {rep} changed between fits"
                    )
                tag = f"rep {rep} {scenario}/{prior_name}"
                scfg = replace(cfg.sampler, seed=_fit_seed(cfg.seed, rep, si, pi))
                try:
                    res = fit_posterior(
                        train, spec, design, priors[prior_name],
                        gamma_prior=gamma_prior, sampler_config=scfg,
                    )
                    paths = forecast_paths(
                        spec, design, res.theta_draws(), train, cfg.horizon,
                        np.random.default_rng([cfg.seed, rep, si, pi, 1]),
                    )
                    point = summarize_paths(paths).point
                except BdarmaError as exc:
                    n_failed += 1
                    failures.append({"replicate": rep, "scenario": scenario,
                                     "prior": prior_name, "error": str(exc)})
                    fit_rows.append({
                        "replicate": rep, "scenario": scenario,
                        "prior": prior_name, "status": "failed",
                        "error": str(exc),
                    })
                    log(f"{tag}: FAILED ({exc})")
                    continue
                n_theta = res.n_theta
                iv = res.intervals(0.95)
                cell = collected[(scenario, prior_name)]
                cell["est"].append(res.posterior_mean().pack())
                cell["lo"].append(iv[:n_theta, 0])
                cell["hi"].append(iv[:n_theta, 1])
                cell["fc"].append((point, actual))
                fit_rows.append({
                    "replicate": rep, "scenario": scenario, "prior": prior_name,
                    "status": "ok",
                    "divergence_rate": round(res.divergence_rate, 6),
                    "max_rhat": round(float(np.nanmax(res.draws.rhat)), 4),
                    "min_ess": round(float(np.nanmin(res.draws.ess)), 1),
                })
                log(f"{tag}: ok (div {res.divergence_rate:.3f})")
        if n_failed > _MAX_FAILURE_RATE * n_total:
            dump = os.path.join(out_dir, "failures.json")
            with open(dump, "w") as fh:
                json.dump(failures, fh, indent=2, sort_keys=True)
            raise StudyError(
                f"{n_failed}/{n_total} fits failed (> {_MAX_FAILURE_RATE:.0%}); "
                f"diagnostics written to {dump}"
            )

    results: dict = {
        "config": cfg.to_dict(),
        "data_hashes": data_hashes,
        "fits": fit_rows,
        "failed": n_failed,
        "recovery": {},
        "blocks": {},
        "forecast": {},
    }
    for (scenario, prior_name), cell in collected.items():
        key = f"{scenario}/{prior_name}"
        if not cell["est"]:
            continue
        spec = scenario_spec(dgp_spec, scenario)
        truth = aligned_truth(spec, dgp_spec, dgp_params)
        names = coefficient_names(spec)
        table = recovery_metrics(
            np.array(cell["est"]), truth,
            np.array(cell["lo"]), np.array(cell["hi"]), names,
        )
        save_recovery_csv(
            table, os.path.join(out_dir, f"recovery_{scenario}_{prior_name}.csv")
        )
        block_of = {n: block_label(n) for n in names}
        results["recovery"][key] = {
            "names": names,
            "bias": [round(float(b), 10) for b in table.bias],
            "rmse": [round(float(r), 10) for r in table.rmse],
            "coverage": [round(float(c), 10) for c in table.coverage],
            "ci_length": [round(float(c), 10) for c in table.ci_length],
            "n_replicates": table.n_replicates,
        }
        results["blocks"][key] = table.block_summary(block_of)
        results["forecast"][key] = forecast_summary(cell["fc"])

    results["ratios"] = _study_ratios(cfg, results["forecast"])
    _write_study_outputs(cfg, results, out_dir)
    return results


def _study_ratios(cfg: StudyConfig, fc: dict) -> dict:
    """Forecast M-RMSE ratios: across scenarios per prior, and vs the best."""
    values = {
        (s, p): fc[f"{s}/{p}"]["m_rmse"]
        for s in cfg.scenarios
        for p in cfg.priors
        if f"{s}/{p}" in fc
    }
    out: dict = {"scenario_over_first": {}, "vs_best_within_scenario": {}}
    base = cfg.scenarios[0]
    for s in cfg.scenarios:
        row = {}
        for p in cfg.priors:
            num, den = values.get((s, p)), values.get((base, p))
            row[p] = None if num is None or not den else round(num / den, 6)
        out["scenario_over_first"][s] = row
    for s in cfg.scenarios:
        present = {p: values[(s, p)] for p in cfg.priors if (s, p) in values}
        if not present:
            continue
        best = min(present.values())
        out["vs_best_within_scenario"][s] = {
            p: (round(v / best, 6) if best else None) for p, v in present.items()
        }
    return out


def _write_study_outputs(cfg: StudyConfig, results: dict, out_dir) -> None:
    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
    import csv as _csv

    with open(os.path.join(out_dir, "fits.csv"), "w", newline="") as fh:
        writer = _csv.DictWriter(
            fh,
            fieldnames=["replicate", "scenario", "prior", "status",
                        "divergence_rate", "max_rhat", "min_ess", "error"],
        )
        writer.writeheader()
        for row in results["fits"]:
            writer.writerow(row)
    with open(os.path.join(out_dir, "forecast_summary.csv"), "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["scenario", "prior", "m_rmse", "sd_rmse", "m_mae",
                         "sd_mae", "pooled_rmse", "n_replicates"])
        for s in cfg.scenarios:
            for p in cfg.priors:
                row = results["forecast"].get(f"{s}/{p}")
                if row is None:
                    writer.writerow([s, p] + [MISSING] * 6)
                else:
                    writer.writerow([
                        s, p, f"{row['m_rmse']:.6f}", f"{row['sd_rmse']:.6f}",
                        f"{row['m_mae']:.6f}", f"{row['sd_mae']:.6f}",
                        f"{row['pooled_rmse']:.6f}", row["n_replicates"],
                    ])
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(render_study_report(results))


def render_study_report(results: dict) -> str:
    """Deterministic plain-text report from a study results dictionary."""
    cfg = results["config"]
    lines = [
        "compositional time-series simulation study",
        f"dgp: {cfg['dgp']}   replicates: {cfg['replicates']}   "
        f"seed: {cfg['seed']}",
        f"sampler: {cfg['sampler']['chains']} chains x "
        f"({cfg['sampler']['warmup']} warmup + {cfg['sampler']['sampling']} "
        f"sampling)",
        f"failed fits: {results['failed']}",
        "",
    ]
    for s in cfg["scenarios"]:
        p_ord, q_ord = SCENARIO_ORDERS[s]
        lines.append(f"scenario {s} (fitted orders P={p_ord}, Q={q_ord})")
        for p in cfg["priors"]:
            key = f"{s}/{p}"
            if key not in results["blocks"]:
                lines.append(f"  prior {p}: no successful replicates")
                continue
            blocks = results["blocks"][key]
            rows = [
                (label,
                 blocks[label]["bias"], blocks[label]["rmse"],
                 blocks[label]["coverage"], blocks[label]["ci_length"])
                for label in sorted(blocks)
            ]
            lines.append(f"  prior {p} "
                         f"(n = {results['recovery'][key]['n_replicates']})")
            table = format_table(
                ["block", "bias", "rmse", "coverage", "ci_length"], rows
            )
            lines.extend("    " + ln for ln in table.splitlines())
            fc = results["forecast"][key]
            lines.append(
                f"    forecast: m_rmse {fc['m_rmse']:.4f}  "
                f"sd_rmse {fc['sd_rmse']:.4f}  m_mae {fc['m_mae']:.4f}"
            )
        lines.append("")
    ratios = results.get("ratios", {})
    if ratios.get("scenario_over_first"):
        lines.append("forecast M-RMSE ratios (scenario / first scenario)")
        hdr = ["scenario"] + list(cfg["priors"])
        rows = []
        for s in cfg["scenarios"]:
            row = ratios["scenario_over_first"].get(s, {})
            rows.append([s] + [
                (MISSING if row.get(p) is None else f"{row[p]:.3f}")
                for p in cfg["priors"]
            ])
        table = format_table(hdr, rows)
        lines.extend("  " + ln for ln in table.splitlines())
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Application


def run_application(cfg: ApplicationConfig, out_dir, log=None) -> dict:
    """Fit the sector-share model per prior and score the holdout forecast."""
    log = log or (lambda msg: print(msg, file=sys.stderr, flush=True))
    os.makedirs(out_dir, exist_ok=True)
    if cfg.panel:
        reader = read_long_csv if cfg.panel_format == "long" else read_wide_csv
        panel = reader(cfg.panel)
    else:
        panel = synthetic_sector_panel(n_obs=cfg.n_obs, seed=cfg.seed)
    shares = to_shares(panel)
    train_panel, test_panel = split_panel(panel, cfg.train_length, cfg.test_length)
    n_train = train_panel.n_obs
    y_train = shares[:n_train]
    y_test = shares[n_train: n_train + cfg.test_length]

    design = FourierSeasonalDesign(panel.n_sectors)
    spec = ModelSpec(
        n_parts=panel.n_sectors,
        ar_order=cfg.ar_order,
        ma_order=cfg.ma_order,
        n_beta=design.n_beta,
        n_gamma=design.n_gamma,
    )
    priors = default_study_priors("application")
    gamma_prior = default_gamma_prior(design.n_gamma)

    results: dict = {
        "config": cfg.to_dict(),
        "sectors": list(panel.sectors),
        "n_train": n_train,
        "n_test": int(cfg.test_length),
        "data_hash": _data_hash(shares),
        "models": {},
    }
    for pi, prior_name in enumerate(cfg.priors):
        scfg = replace(cfg.sampler, seed=_fit_seed(cfg.seed, 0, 0, pi))
        log(f"application {prior_name}: fitting "
            f"(P={cfg.ar_order}, Q={cfg.ma_order}, {spec.n_parts} sectors)")
        try:
            res = fit_posterior(
                y_train, spec, design, priors[prior_name],
                gamma_prior=gamma_prior, sampler_config=scfg,
            )
            paths = forecast_paths(
                spec, design, res.theta_draws(), y_train, cfg.test_length,
                np.random.default_rng([cfg.seed, 99, pi]),
            )
            summary = summarize_paths(paths)
        except BdarmaError as exc:
            results["models"][prior_name] = {"status": "failed", "error": str(exc)}
            log(f"application {prior_name}: FAILED ({exc})")
            continue
        point = summary.point
        per_sector = {
            sec: {
                "rmse": round(forecast_rmse(point[:, j], y_test[:, j]), 8),
                "mae": round(forecast_mae(point[:, j], y_test[:, j]), 8),
            }
            for j, sec in enumerate(panel.sectors)
        }
        results["models"][prior_name] = {
            "status": "ok",
            "rmse": round(forecast_rmse(point, y_test), 8),
            "mae": round(forecast_mae(point, y_test), 8),
            "divergence_rate": round(res.divergence_rate, 6),
            "max_rhat": round(float(np.nanmax(res.draws.rhat)), 4),
            "min_ess": round(float(np.nanmin(res.draws.ess)), 1),
            "per_sector": per_sector,
        }
        _save_app_forecast(out_dir, prior_name, panel.sectors, summary, y_test)
        if cfg.plots:
            plot_forecast(
                summary, y_train,
                os.path.join(out_dir, f"plots_{prior_name}"),
                component_names=panel.sectors, actuals=y_test,
            )
        log(f"application {prior_name}: rmse "
            f"{results['models'][prior_name]['rmse']:.4f} "
            f"div {res.divergence_rate:.3f}")

    with open(os.path.join(out_dir, "results.json"), "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
    _write_app_tables(cfg, results, out_dir)
    return results


def _save_app_forecast(out_dir, prior_name, sectors, summary, y_test) -> None:
    import csv as _csv

    path = os.path.join(out_dir, f"forecast_{prior_name}.csv")
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["step", "sector", "point", "q05", "q50", "q95", "actual"])
        for h in range(summary.horizon):
            for j, sec in enumerate(sectors):
                writer.writerow([
                    h + 1, sec,
                    format(summary.point[h, j], ".8g"),
                    format(summary.quantiles["q05"][h, j], ".8g"),
                    format(summary.quantiles["q50"][h, j], ".8g"),
                    format(summary.quantiles["q95"][h, j], ".8g"),
                    format(y_test[h, j], ".8g"),
                ])


def _write_app_tables(cfg: ApplicationConfig, results: dict, out_dir) -> None:
    import csv as _csv

    with open(os.path.join(out_dir, "error_summary.csv"), "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["prior", "rmse", "mae", "divergence_rate", "max_rhat",
                         "status"])
        for p in cfg.priors:
            row = results["models"].get(p, {})
            if row.get("status") == "ok":
                writer.writerow([p, f"{row['rmse']:.6f}", f"{row['mae']:.6f}",
                                 f"{row['divergence_rate']:.4f}",
                                 f"{row['max_rhat']:.4f}", "ok"])
            else:
                writer.writerow([p, MISSING, MISSING, MISSING, MISSING, "failed"])
    with open(os.path.join(out_dir, "report.txt"), "w") as fh:
        fh.write(render_application_report(results))


def render_application_report(results: dict) -> str:
    cfg = results["config"]
    lines = [
        "sector-share application",
        f"model: P={cfg['ar_order']}, Q={cfg['ma_order']}   "
        f"train: {results['n_train']}   test: {results['n_test']}   "
        f"seed: {cfg['seed']}",
        "",
        "holdout forecast accuracy (aggregate over sectors and days)",
    ]
    rows = []
    for p in cfg["priors"]:
        row = results["models"].get(p, {})
        if row.get("status") == "ok":
            rows.append([p, row["rmse"], row["mae"], row["divergence_rate"],
                         row["max_rhat"]])
        else:
            rows.append([p, MISSING, MISSING, MISSING, MISSING])
    table = format_table(["prior", "rmse", "mae", "div_rate", "max_rhat"], rows)
    lines.extend("  " + ln for ln in table.splitlines())
    lines.append("")
    return "\n".join(lines)
