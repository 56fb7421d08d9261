"""Recursive probabilistic forecasts from posterior draws.

Each retained posterior draw is rolled forward through the DARMA recursion;
future observations are sampled from the Dirichlet observation model (or set
to the conditional mean when ``noise=False``, the infinite-precision limit).
Moving-average innovations for forecast steps use the sampled compositions,
so predictive uncertainty compounds exactly as the model says it should.

Every draw owns a noise stream seeded from the draw's content (plus an
occurrence index for exact duplicates), which makes the trajectory set — and
hence the point forecast — invariant to the order of the posterior draws.
"""

from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .model import ModelSpec, count_parameters
from .simplex import alr, alr_inv, clamp_shares, validate_compositions

_EXP_GUARD = 700.0


@dataclass
class ForecastResult:
    """Sampled trajectories plus point and interval summaries.

    ``trajectories`` has shape (draws, horizon, J); ``point`` is the
    across-draw mean path (renormalised); ``quantiles`` maps ``"q05"``,
    ``"q50"``, ``"q95"`` to (horizon, J) arrays.
    """

    trajectories: np.ndarray
    point: np.ndarray
    quantiles: dict

    @property
    def horizon(self) -> int:
        return self.point.shape[0]

    @property
    def n_parts(self) -> int:
        return self.point.shape[1]


def _draw_rngs(theta_rows: np.ndarray, rng: np.random.Generator) -> list:
    """Per-draw generators keyed by draw content and occurrence index."""
    base = int(rng.integers(0, 2**63 - 1))
    seen: dict = {}
    rngs = []
    for row in theta_rows:
        digest = hashlib.blake2b(row.tobytes(), digest_size=8).digest()
        key = int.from_bytes(digest, "little")
        occurrence = seen.get(key, 0)
        seen[key] = occurrence + 1
        rngs.append(np.random.default_rng((base, key, occurrence)))
    return rngs


def forecast_paths(
    spec: ModelSpec,
    design,
    theta_rows: np.ndarray,
    history: np.ndarray,
    horizon: int,
    rng: np.random.Generator,
    noise: bool = True,
) -> np.ndarray:
    """Sample forecast trajectories, shape (draws, horizon, J).

    ``theta_rows`` holds flat coefficient vectors (one per posterior draw) in
    packing order.  ``history`` is the training composition series the model
    was fitted on.
    """
    history = validate_compositions(history)
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    theta_rows = np.atleast_2d(np.asarray(theta_rows, dtype=float))
    n_theta = count_parameters(spec)
    if theta_rows.shape[1] != n_theta:
        raise ShapeError(
            f"theta rows have {theta_rows.shape[1]} columns, expected {n_theta}"
        )
    finite = np.isfinite(theta_rows).all(axis=1)
    if not finite.all():
        n_bad = int((~finite).sum())
        warnings.warn(
            f"skipped {n_bad} posterior draw(s) with non-finite coefficients",
            RuntimeWarning,
            stacklevel=2,
        )
        theta_rows = theta_rows[finite]
    if theta_rows.shape[0] == 0:
        raise ShapeError("every posterior draw contains non-finite coefficients")
    n_draws = theta_rows.shape[0]
    k = spec.n_alr
    j = spec.n_parts
    n_hist = history.shape[0]
    m = spec.max_lag
    if n_hist < max(m, 1):
        raise ShapeError("history must cover the model's max lag")

    kk = k * k
    ar = theta_rows[:, : spec.ar_order * kk].reshape(n_draws, spec.ar_order, k, k)
    ma = theta_rows[:, spec.ar_order * kk: (spec.ar_order + spec.ma_order) * kk]
    ma = ma.reshape(n_draws, spec.ma_order, k, k)
    ofs = (spec.ar_order + spec.ma_order) * kk
    beta = theta_rows[:, ofs: ofs + spec.n_beta]
    gamma = theta_rows[:, ofs + spec.n_beta:]

    X = design.covariate_array(0, n_hist + horizon)       # (T+H, k, n_beta)
    z = design.precision_array(0, n_hist + horizon)       # (T+H, n_gamma)
    alr_y = alr(history)                                  # (T, k)

    def xb_at(t: int) -> np.ndarray:                      # (draws, k)
        return beta @ X[t].T

    # innovations alr(y_t) - eta_t for the training window (needed when Q > 0)
    innov_train = np.zeros((n_draws, n_hist, k))
    if spec.ma_order > 0:
        for t in range(m, n_hist):
            eta_t = xb_at(t)
            for p in range(1, spec.ar_order + 1):
                resid = alr_y[t - p][None, :] - xb_at(t - p)
                eta_t = eta_t + np.einsum("sij,sj->si", ar[:, p - 1], resid)
            for q in range(1, spec.ma_order + 1):
                eta_t = eta_t + np.einsum(
                    "sij,sj->si", ma[:, q - 1], innov_train[:, t - q]
                )
            innov_train[:, t] = alr_y[t][None, :] - eta_t

    rngs = _draw_rngs(theta_rows, rng) if noise else None
    paths = np.empty((n_draws, horizon, j))
    alr_fore = np.empty((n_draws, horizon, k))
    innov_fore = np.empty((n_draws, horizon, k))

    def alr_at(t: int) -> np.ndarray:
        if t < n_hist:
            return np.broadcast_to(alr_y[t], (n_draws, k))
        return alr_fore[:, t - n_hist]

    def innov_at(t: int) -> np.ndarray:
        if t < n_hist:
            return innov_train[:, t]
        return innov_fore[:, t - n_hist]

    with np.errstate(over="ignore"):
        for h in range(horizon):
            t = n_hist + h
            eta_t = xb_at(t)
            for p in range(1, spec.ar_order + 1):
                resid = alr_at(t - p) - xb_at(t - p)
                eta_t = eta_t + np.einsum("sij,sj->si", ar[:, p - 1], resid)
            for q in range(1, spec.ma_order + 1):
                eta_t = eta_t + np.einsum("sij,sj->si", ma[:, q - 1], innov_at(t - q))
            mu_t = alr_inv(eta_t)                          # (draws, J)
            if noise:
                expo = np.clip(gamma @ z[t], -_EXP_GUARD, _EXP_GUARD)
                phi_t = np.exp(expo)                       # (draws,)
                alpha = phi_t[:, None] * mu_t
                g = np.empty_like(alpha)
                for s in range(n_draws):
                    g[s] = rngs[s].standard_gamma(alpha[s])
                g = np.maximum(g, 1e-300)
                y_t = clamp_shares(g / g.sum(axis=1, keepdims=True))
            else:
                y_t = mu_t
            paths[:, h] = y_t
            alr_fore[:, h] = alr(y_t)
            innov_fore[:, h] = alr_fore[:, h] - eta_t
    return paths


def summarize_paths(paths: np.ndarray) -> ForecastResult:
    point = clamp_shares(paths.mean(axis=0))
    q05, q50, q95 = np.quantile(paths, [0.05, 0.50, 0.95], axis=0)
    return ForecastResult(
        trajectories=paths,
        point=point,
        quantiles={"q05": q05, "q50": q50, "q95": q95},
    )


def forecast(
    fit,
    history: np.ndarray,
    horizon: int,
    rng: np.random.Generator,
    noise: bool = True,
    thin: int = 1,
) -> ForecastResult:
    """Forecast ``horizon`` steps beyond ``history`` using a fitted model.

    ``thin`` keeps every ``thin``-th posterior draw (all draws by default).
    """
    if thin < 1:
        raise ConfigError("thin must be a positive integer")
    theta = fit.theta_draws()[::thin]
    paths = forecast_paths(
        fit.spec, fit.design, theta, history, horizon, rng, noise=noise
    )
    return summarize_paths(paths)


def mean_forecast_only(
    fit,
    history: np.ndarray,
    horizon: int,
    rng: np.random.Generator,
    noise: bool = True,
    thin: int = 1,
) -> np.ndarray:
    """Point forecast only: the renormalised across-draw mean path, (H, J)."""
    return forecast(fit, history, horizon, rng, noise=noise, thin=thin).point


# ---------------------------------------------------------------------------
# Output


def save_forecast_csv(result: ForecastResult, path, component_names=None) -> None:
    names = component_names or [f"y{j + 1}" for j in range(result.n_parts)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "component", "point", "q05", "q50", "q95"])
        for h in range(result.horizon):
            for jx, name in enumerate(names):
                writer.writerow([
                    h + 1, name,
                    format(result.point[h, jx], ".10g"),
                    format(result.quantiles["q05"][h, jx], ".10g"),
                    format(result.quantiles["q50"][h, jx], ".10g"),
                    format(result.quantiles["q95"][h, jx], ".10g"),
                ])


def plot_forecast(
    result: ForecastResult,
    history: np.ndarray,
    out_dir,
    component_names=None,
    actuals: np.ndarray | None = None,
    history_window: int = 60,
) -> list:
    """Write one SVG per component: recent history, point forecast, 90% band.

    Returns the list of file paths written.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import os

    history = validate_compositions(history)
    names = component_names or [f"y{j + 1}" for j in range(result.n_parts)]
    os.makedirs(out_dir, exist_ok=True)
    n_hist = history.shape[0]
    tail = min(history_window, n_hist)
    h_idx = np.arange(n_hist - tail, n_hist)
    f_idx = np.arange(n_hist, n_hist + result.horizon)
    written = []
    for jx, name in enumerate(names):
        fig, ax = plt.subplots(figsize=(8, 3.2))
        ax.plot(h_idx, history[n_hist - tail:, jx], color="black", lw=1.0,
                label="observed")
        ax.plot(f_idx, result.point[:, jx], color="tab:blue", lw=1.2,
                label="forecast")
        ax.fill_between(f_idx, result.quantiles["q05"][:, jx],
                        result.quantiles["q95"][:, jx], color="tab:blue",
                        alpha=0.25, linewidth=0, label="90% band")
        if actuals is not None:
            ax.plot(f_idx[: len(actuals)], np.asarray(actuals)[:, jx],
                    color="tab:red", lw=1.0, ls="--", label="actual")
        ax.set_title(name)
        ax.set_xlabel("time index")
        ax.set_ylabel("share")
        ax.legend(loc="upper left", fontsize=8, frameon=False)
        fig.tight_layout()
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)
        path = os.path.join(out_dir, f"forecast_{safe}.svg")
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written
