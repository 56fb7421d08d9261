"""Forecast recursion and summary tests.

Oracles: closed-form no-dynamics behaviour, an exact single-draw mean-path
hand rollout, a straight-line deterministic AR rollout, and permutation /
determinism structure of the trajectory sampler.
"""

from __future__ import annotations

import csv

import numpy as np
import pytest

from bdarma.errors import ConfigError, ShapeError
from bdarma.forecast import (
    ForecastResult,
    forecast_paths,
    mean_forecast_only,
    save_forecast_csv,
    summarize_paths,
)
from bdarma.model import IdentityDesign, ModelSpec, ParameterVector
from bdarma.simplex import alr, alr_inv
from bdarma.simulate import builtin_dgp, simulate

from conftest import random_compositions, stable_parameters


def _history(rng, j=4, t_len=40):
    spec = ModelSpec(n_parts=j, ar_order=1, ma_order=1, n_beta=j - 1, n_gamma=1)
    design = IdentityDesign(j)
    params = stable_parameters(rng, spec)
    series = simulate(spec, params, design, t_len, rng)
    return spec, params, design, series


def _draw_matrix(rng, spec, n_draws):
    return np.stack(
        [stable_parameters(rng, spec).pack() for _ in range(n_draws)]
    )


# ---------------------------------------------------------------------------
# Structural invariants


def test_trajectories_are_compositions():
    rng = np.random.default_rng(3)
    spec, params, design, series = _history(rng)
    theta = _draw_matrix(rng, spec, 40)
    paths = forecast_paths(spec, design, theta, series, 12,
                           np.random.default_rng(4))
    assert paths.shape == (40, 12, 4)
    assert np.all(paths > 0)
    assert np.max(np.abs(paths.sum(axis=2) - 1.0)) < 1e-10


def test_point_forecast_rows_sum_to_one():
    rng = np.random.default_rng(5)
    spec, params, design, series = _history(rng)
    theta = _draw_matrix(rng, spec, 60)
    result = summarize_paths(
        forecast_paths(spec, design, theta, series, 10, np.random.default_rng(6))
    )
    assert np.max(np.abs(result.point.sum(axis=1) - 1.0)) < 1e-8
    assert result.horizon == 10 and result.n_parts == 4
    q = result.quantiles
    assert np.all(q["q05"] <= q["q50"] + 1e-12)
    assert np.all(q["q50"] <= q["q95"] + 1e-12)


def test_no_dynamics_point_matches_covariate_mean():
    rng = np.random.default_rng(7)
    j = 4
    spec = ModelSpec(n_parts=j, ar_order=0, ma_order=0, n_beta=j - 1, n_gamma=1)
    design = IdentityDesign(j)
    series = random_compositions(rng, 30, j)
    theta = np.stack([
        np.concatenate([rng.normal(0.0, 0.4, size=j - 1), [np.log(400.0)]])
        for _ in range(200)
    ])
    # noise-free: the point forecast is exactly the mean of alr_inv(X beta)
    paths = forecast_paths(spec, design, theta, series, 3,
                           np.random.default_rng(8), noise=False)
    expected = alr_inv(theta[:, : j - 1]).mean(axis=0)
    expected /= expected.sum()
    point = summarize_paths(paths).point
    for h in range(3):
        assert np.max(np.abs(point[h] - expected)) < 1e-12
    # with sampling noise the same limit holds up to Monte Carlo error
    noisy = summarize_paths(
        forecast_paths(spec, design, theta, series, 3, np.random.default_rng(9))
    ).point
    assert np.max(np.abs(noisy - expected)) < 0.02


def test_single_draw_mean_path_is_exact_hand_rollout():
    rng = np.random.default_rng(11)
    j = 3
    spec = ModelSpec(n_parts=j, ar_order=1, ma_order=0, n_beta=j - 1, n_gamma=1)
    design = IdentityDesign(j)
    series = random_compositions(rng, 20, j)
    params = stable_parameters(rng, spec)
    theta = params.pack()[None, :]
    paths = forecast_paths(spec, design, theta, series, 1,
                           np.random.default_rng(12), noise=False)
    t_next = series.shape[0]
    xb_next = design.covariate_matrix(t_next) @ params.beta
    xb_last = design.covariate_matrix(t_next - 1) @ params.beta
    eta_next = xb_next + params.ar[0] @ (alr(series[-1]) - xb_last)
    assert np.array_equal(paths[0, 0], alr_inv(eta_next))


def test_noise_free_ar_rollout_matches_reference():
    rng = np.random.default_rng(13)
    j = 5
    spec = ModelSpec(n_parts=j, ar_order=2, ma_order=0, n_beta=j - 1, n_gamma=1)
    design = IdentityDesign(j)
    params = stable_parameters(rng, spec)
    series = simulate(spec, params, design, 50, rng)
    horizon = 15
    paths = forecast_paths(spec, design, params.pack()[None, :], series,
                           horizon, np.random.default_rng(14), noise=False)
    # independent deterministic rollout
    k = spec.n_alr
    alr_hist = list(alr(series))
    out = []
    for h in range(horizon):
        t = series.shape[0] + h
        eta = design.covariate_matrix(t) @ params.beta
        for p in range(1, spec.ar_order + 1):
            xb = design.covariate_matrix(t - p) @ params.beta
            eta = eta + params.ar[p - 1] @ (alr_hist[t - p] - xb)
        y = alr_inv(eta)
        alr_hist.append(alr(y))
        out.append(y)
    ref = np.asarray(out)
    assert np.max(np.abs(paths[0] - ref)) < 1e-12


def test_ma_innovations_feed_forward():
    rng = np.random.default_rng(17)
    spec, params, design, series = _history(rng, j=3, t_len=30)
    theta = params.pack()[None, :]
    got = forecast_paths(spec, design, theta, series, 2,
                         np.random.default_rng(18), noise=False)[0]
    # hand recursion: training innovations first, then the forecast steps
    k = spec.n_alr
    alr_y = alr(series)
    t_len = series.shape[0]
    xb = lambda t: design.covariate_matrix(t) @ params.beta
    eta = np.zeros((t_len + 2, k))
    innov = np.zeros((t_len + 2, k))
    alr_all = np.vstack([alr_y, np.zeros((2, k))])
    eta[: spec.max_lag] = alr_y[: spec.max_lag]
    for t in range(spec.max_lag, t_len + 2):
        acc = xb(t)
        for p in range(1, spec.ar_order + 1):
            acc = acc + params.ar[p - 1] @ (alr_all[t - p] - xb(t - p))
        for q in range(1, spec.ma_order + 1):
            acc = acc + params.ma[q - 1] @ innov[t - q]
        eta[t] = acc
        if t < t_len:
            innov[t] = alr_y[t] - eta[t]
        else:
            y = alr_inv(eta[t])
            alr_all[t] = alr(y)
            innov[t] = alr_all[t] - eta[t]
    expected = alr_inv(eta[t_len: t_len + 2])
    assert np.max(np.abs(got - expected)) < 1e-12


def test_point_forecast_invariant_to_draw_order():
    rng = np.random.default_rng(19)
    spec, params, design, series = _history(rng)
    theta = _draw_matrix(rng, spec, 30)
    theta = np.vstack([theta, theta[:5]])  # include exact duplicates
    a = forecast_paths(spec, design, theta, series, 6, np.random.default_rng(7))
    perm = np.random.default_rng(20).permutation(theta.shape[0])
    b = forecast_paths(spec, design, theta[perm], series, 6,
                       np.random.default_rng(7))
    # the trajectory set is permuted identically, so summaries coincide
    assert np.allclose(np.sort(a, axis=0), np.sort(b, axis=0), atol=0)
    assert np.allclose(summarize_paths(a).point, summarize_paths(b).point,
                       atol=1e-14)


def test_non_finite_draws_are_skipped_with_warning():
    rng = np.random.default_rng(23)
    spec, params, design, series = _history(rng)
    theta = _draw_matrix(rng, spec, 10)
    theta[3, 0] = np.nan
    theta[7, 2] = np.inf
    with pytest.warns(RuntimeWarning, match="skipped 2"):
        paths = forecast_paths(spec, design, theta, series, 4,
                               np.random.default_rng(24))
    assert paths.shape[0] == 8
    all_bad = np.full((3, theta.shape[1]), np.nan)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(ShapeError):
            forecast_paths(spec, design, all_bad, series, 4,
                           np.random.default_rng(25))


def test_forecast_rejects_bad_arguments():
    rng = np.random.default_rng(29)
    spec, params, design, series = _history(rng)
    theta = _draw_matrix(rng, spec, 5)
    with pytest.raises(ConfigError):
        forecast_paths(spec, design, theta, series, 0, np.random.default_rng(1))
    with pytest.raises(ShapeError):
        forecast_paths(spec, design, theta[:, :-1], series, 2,
                       np.random.default_rng(1))


# ---------------------------------------------------------------------------
# Fitted-model wrappers


class _StubFit:
    """Minimal stand-in for a fitted model: spec, design, theta draws."""

    def __init__(self, spec, design, theta):
        self.spec = spec
        self.design = design
        self._theta = theta

    def theta_draws(self):
        return self._theta


def test_mean_forecast_only_equals_point():
    rng = np.random.default_rng(31)
    spec, params, design, series = _history(rng)
    theta = _draw_matrix(rng, spec, 25)
    fit = _StubFit(spec, design, theta)
    from bdarma.forecast import forecast as forecast_fit

    full = forecast_fit(fit, series, 5, np.random.default_rng(3))
    point = mean_forecast_only(fit, series, 5, np.random.default_rng(3))
    assert np.array_equal(point, full.point)
    assert np.max(np.abs(point.sum(axis=1) - 1.0)) < 1e-8


def test_application_scale_forecast_shape():
    rng = np.random.default_rng(37)
    j, horizon = 11, 126
    spec = ModelSpec(n_parts=j, ar_order=2, ma_order=0, n_beta=j - 1, n_gamma=1)
    design = IdentityDesign(j)
    params = stable_parameters(rng, spec, coef_scale=0.1)
    series = simulate(spec, params, design, 60, rng)
    theta = np.stack([stable_parameters(rng, spec, coef_scale=0.1).pack()
                      for _ in range(8)])
    fit = _StubFit(spec, design, theta)
    point = mean_forecast_only(fit, series, horizon, np.random.default_rng(5))
    assert point.shape == (horizon, j)
    assert np.max(np.abs(point.sum(axis=1) - 1.0)) < 1e-8


def test_thinning_subsamples_draws():
    rng = np.random.default_rng(41)
    spec, params, design, series = _history(rng)
    theta = _draw_matrix(rng, spec, 20)
    fit = _StubFit(spec, design, theta)
    from bdarma.forecast import forecast as forecast_fit

    thinned = forecast_fit(fit, series, 4, np.random.default_rng(6), thin=4)
    assert thinned.trajectories.shape[0] == 5
    with pytest.raises(ConfigError):
        forecast_fit(fit, series, 4, np.random.default_rng(6), thin=0)


def test_forecast_csv_layout(tmp_path):
    rng = np.random.default_rng(43)
    spec, params, design, series = _history(rng, j=3)
    theta = _draw_matrix(rng, spec, 10)
    result = summarize_paths(
        forecast_paths(spec, design, theta, series, 4, np.random.default_rng(2))
    )
    path = tmp_path / "forecast.csv"
    save_forecast_csv(result, path, component_names=["a", "b", "c"])
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "component", "point", "q05", "q50", "q95"]
    assert len(rows) == 1 + 4 * 3
    assert rows[1][0] == "1" and rows[1][1] == "a"
    got = np.array([float(r[2]) for r in rows[1:]]).reshape(4, 3)
    assert np.allclose(got, result.point, rtol=1e-9)
