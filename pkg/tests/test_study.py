"""Simulation-study and application harness tests.

Heavy statistical claims live in the acceptance suite; these tests check the
harness plumbing on miniature runs: grid completeness, deterministic
artifacts, truth alignment across scenarios, failure accounting, and config
serialization.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np
import pytest

from bdarma.errors import ConfigError, SamplerError, StudyError
from bdarma.ingest import save_panel_csv, synthetic_sector_panel
from bdarma.model import ModelSpec, coefficient_names, count_parameters
from bdarma.sampler import SamplerConfig
from bdarma.simulate import builtin_dgp
from bdarma.study import (
    SCENARIO_ORDERS,
    ApplicationConfig,
    StudyConfig,
    _data_hash,
    _fit_seed,
    aligned_truth,
    load_config,
    run_application,
    run_study,
    scenario_spec,
)

_TINY = SamplerConfig(chains=2, warmup=25, sampling=25, max_treedepth=8)


# ---------------------------------------------------------------------------
# Scenario bookkeeping


def test_scenario_fitted_orders():
    assert SCENARIO_ORDERS == {"correct": (2, 1), "overfit": (4, 2),
                               "underfit": (1, 0)}
    dgp_spec, _ = builtin_dgp("main")
    for name, (p, q) in SCENARIO_ORDERS.items():
        spec = scenario_spec(dgp_spec, name)
        assert (spec.ar_order, spec.ma_order) == (p, q)
        assert spec.n_parts == dgp_spec.n_parts
        assert spec.n_beta == dgp_spec.n_beta
        assert spec.n_gamma == dgp_spec.n_gamma


def test_aligned_truth_overfit_pads_zero_blocks():
    dgp_spec, dgp_params = builtin_dgp("main")
    fit_spec = scenario_spec(dgp_spec, "overfit")
    truth = aligned_truth(fit_spec, dgp_spec, dgp_params)
    assert truth.shape == (count_parameters(fit_spec),)
    names = coefficient_names(fit_spec)
    by_block: dict = {}
    for name, value in zip(names, truth):
        by_block.setdefault(name.split("[")[0], []).append(value)
    assert np.array_equal(by_block["ar1"],
                          dgp_params.ar[0].ravel())
    assert np.array_equal(by_block["ar2"], dgp_params.ar[1].ravel())
    assert not np.any(by_block["ar3"])
    assert not np.any(by_block["ar4"])
    assert np.array_equal(by_block["ma1"], dgp_params.ma[0].ravel())
    assert not np.any(by_block["ma2"])
    assert np.array_equal(by_block["beta"], dgp_params.beta)
    assert np.array_equal(by_block["gamma"], dgp_params.gamma)


def test_aligned_truth_underfit_keeps_only_fitted_blocks():
    dgp_spec, dgp_params = builtin_dgp("main")
    fit_spec = scenario_spec(dgp_spec, "underfit")
    truth = aligned_truth(fit_spec, dgp_spec, dgp_params)
    names = coefficient_names(fit_spec)
    assert truth.shape == (count_parameters(fit_spec),)
    blocks = {n.split("[")[0] for n in names}
    assert blocks == {"ar1", "beta", "gamma"}
    ar1 = np.array([v for n, v in zip(names, truth) if n.startswith("ar1")])
    assert np.array_equal(ar1, dgp_params.ar[0].ravel())


def test_fit_seed_and_data_hash():
    seeds = {
        _fit_seed(master, rep, si, pi)
        for master in (0, 1)
        for rep in range(3)
        for si in range(3)
        for pi in range(5)
    }
    assert len(seeds) == 2 * 3 * 3 * 5  # no collisions across the grid
    rng = np.random.default_rng(0)
    a = rng.random((10, 3))
    assert _data_hash(a) == _data_hash(a.copy())
    assert _data_hash(a) != _data_hash(a + 1e-12)
    assert _data_hash(a[::2]) == _data_hash(np.ascontiguousarray(a[::2]))


# ---------------------------------------------------------------------------
# Config handling


def test_study_config_roundtrip(tmp_path):
    cfg = StudyConfig(dgp="supplementary", replicates=2,
                      scenarios=("correct", "underfit"),
                      priors=("laplace", "horseshoe"), seed=9, n_obs=50,
                      train_length=40, horizon=10, sampler=_TINY)
    path = tmp_path / "study.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = load_config(path)
    assert isinstance(back, StudyConfig)
    assert back.to_dict() == cfg.to_dict()


def test_application_config_roundtrip(tmp_path):
    cfg = ApplicationConfig(ar_order=1, ma_order=0, train_length=60,
                            test_length=15, priors=("informative",), seed=4,
                            n_obs=80, sampler=_TINY)
    path = tmp_path / "app.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = load_config(path)
    assert isinstance(back, ApplicationConfig)
    assert back.to_dict() == cfg.to_dict()


def test_config_validation_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown dgp"):
        StudyConfig(dgp="exotic")
    with pytest.raises(ConfigError, match="unknown scenario"):
        StudyConfig(scenarios=("correct", "misfit"))
    with pytest.raises(ConfigError, match="unknown prior"):
        StudyConfig(priors=("flat",))
    with pytest.raises(ConfigError, match="replicates"):
        StudyConfig(replicates=0)
    with pytest.raises(ConfigError, match="exceeds n_obs"):
        StudyConfig(n_obs=90, train_length=80, horizon=20)
    with pytest.raises(ConfigError, match="unknown sampler settings"):
        StudyConfig.from_dict({"sampler": {"chains": 2, "temperature": 1.0}})
    with pytest.raises(ConfigError, match="panel_format"):
        ApplicationConfig(panel_format="xml")
    with pytest.raises(ConfigError, match="training window"):
        ApplicationConfig(ar_order=5, train_length=4)
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "mystery"}))
    with pytest.raises(ConfigError, match="unknown config kind"):
        load_config(bad)
    notdict = tmp_path / "list.json"
    notdict.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_config(notdict)


# ---------------------------------------------------------------------------
# Study runs (miniature)


def test_full_grid_smoke(tmp_path):
    cfg = StudyConfig(replicates=1, seed=1, n_obs=45, train_length=36,
                      horizon=9, sampler=_TINY)
    out = tmp_path / "study"
    results = run_study(cfg, out, log=lambda m: None)
    keys = {f"{s}/{p}" for s in cfg.scenarios for p in cfg.priors}
    assert len(keys) == 15
    assert set(results["recovery"]) == keys
    assert set(results["forecast"]) == keys
    assert results["failed"] == 0
    for key in keys:
        rec = results["recovery"][key]
        for field in ("bias", "rmse", "coverage", "ci_length"):
            assert np.all(np.isfinite(rec[field]))
        fc = results["forecast"][key]
        assert 0.0 <= fc["m_rmse"] < 1.0 and np.isfinite(fc["pooled_rmse"])
    # underfit models are scored only on the blocks they actually contain
    under_names = results["recovery"]["underfit/laplace"]["names"]
    assert not any(n.startswith(("ar2", "ar3", "ma")) for n in under_names)
    over_names = results["recovery"]["overfit/laplace"]["names"]
    assert any(n.startswith("ar4") for n in over_names)
    assert any(n.startswith("ma2") for n in over_names)
    # artifacts
    with open(out / "fits.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 15 and all(r["status"] == "ok" for r in rows)
    with open(out / "forecast_summary.csv") as fh:
        assert len(list(csv.reader(fh))) == 16
    assert (out / "results.json").exists()
    assert "simulation study" in (out / "report.txt").read_text()
    recovery_files = [f for f in os.listdir(out) if f.startswith("recovery_")]
    assert len(recovery_files) == 15
    ratios = results["ratios"]["scenario_over_first"]
    assert ratios["correct"]["informative"] == 1.0


def test_study_reports_are_byte_deterministic(tmp_path):
    cfg = dict(replicates=1, scenarios=("correct",), priors=("laplace",),
               seed=5, n_obs=45, train_length=36, horizon=9, sampler=_TINY)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_study(StudyConfig(**cfg), out_a, log=lambda m: None)
    run_study(StudyConfig(**cfg), out_b, log=lambda m: None)
    for name in ("results.json", "report.txt", "fits.csv",
                 "forecast_summary.csv", "recovery_correct_laplace.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_study_aborts_when_too_many_fits_fail(tmp_path, monkeypatch):
    def exploding_fit(*args, **kwargs):
        raise SamplerError("no finite starting point")

    monkeypatch.setattr("bdarma.study.fit_posterior", exploding_fit)
    cfg = StudyConfig(replicates=1, scenarios=("correct",), seed=2, n_obs=45,
                      train_length=36, horizon=9, sampler=_TINY)
    out = tmp_path / "study"
    with pytest.raises(StudyError, match="fits failed"):
        run_study(cfg, out, log=lambda m: None)
    with open(out / "failures.json") as fh:
        failures = json.load(fh)
    assert len(failures) >= 2
    assert failures[0]["error"] == "no finite starting point"
    assert {"replicate", "scenario", "prior", "error"} <= set(failures[0])


# ---------------------------------------------------------------------------
# Application runs (miniature)


def test_application_smoke(tmp_path):
    panel = synthetic_sector_panel(
        n_obs=75, seed=11, sectors=["tech", "energy", "health", "other"]
    )
    ppath = tmp_path / "panel.csv"
    save_panel_csv(panel, ppath)
    cfg = ApplicationConfig(ar_order=1, ma_order=0, train_length=60,
                            test_length=15, priors=("informative",), seed=3,
                            panel=str(ppath),
                            sampler=SamplerConfig(chains=2, warmup=30,
                                                  sampling=30, max_treedepth=8))
    out = tmp_path / "app"
    results = run_application(cfg, out, log=lambda m: None)
    model = results["models"]["informative"]
    assert model["status"] == "ok"
    assert 0.0 < model["rmse"] < 0.5
    assert set(model["per_sector"]) == {"tech", "energy", "health", "other"}
    assert results["n_train"] == 60 and results["n_test"] == 15
    assert results["sectors"] == panel.sectors
    with open(out / "forecast_informative.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "sector", "point", "q05", "q50", "q95", "actual"]
    assert len(rows) == 1 + 15 * 4
    # each step's point forecast lies on the simplex
    points = np.array([float(r[2]) for r in rows[1:]]).reshape(15, 4)
    assert np.max(np.abs(points.sum(axis=1) - 1.0)) < 1e-6
    with open(out / "error_summary.csv") as fh:
        summary = list(csv.reader(fh))
    assert summary[1][0] == "informative" and summary[1][-1] == "ok"
    report = (out / "report.txt").read_text()
    assert "sector-share application" in report
    assert (out / "results.json").exists()
