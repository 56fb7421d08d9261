"""Recovery and forecast-accuracy metrics for simulation studies.

Recovery metrics compare per-replicate posterior point estimates and credible
intervals against the generating values: bias, RMSE, interval coverage, and
mean interval length, per parameter and aggregated over named blocks.

Forecast metrics summarise point-forecast error against held-out actuals,
both per replicate (RMSE / MAE over the horizon-by-component grid) and
pooled across replicates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


# ---------------------------------------------------------------------------
# Parameter recovery


@dataclass
class RecoveryTable:
    """Per-parameter recovery metrics across replicates."""

    names: list
    truth: np.ndarray
    bias: np.ndarray
    rmse: np.ndarray
    coverage: np.ndarray
    ci_length: np.ndarray
    n_replicates: int

    def block_summary(self, block_of: dict) -> dict:
        """Mean of each metric over parameters grouped by ``block_of[name]``.

        Parameters missing from ``block_of`` are skipped, so callers can
        summarise a subset (e.g. only VARMA coefficient blocks).
        """
        groups: dict = {}
        for i, name in enumerate(self.names):
            label = block_of.get(name)
            if label is None:
                continue
            groups.setdefault(label, []).append(i)
        out = {}
        for label, idx in groups.items():
            sel = np.array(idx)
            out[label] = {
                "bias": float(self.bias[sel].mean()),
                "rmse": float(self.rmse[sel].mean()),
                "coverage": float(self.coverage[sel].mean()),
                "ci_length": float(self.ci_length[sel].mean()),
            }
        return out


def recovery_metrics(
    estimates: np.ndarray,
    truth: np.ndarray,
    ci_lower: np.ndarray,
    ci_upper: np.ndarray,
    names: list,
) -> RecoveryTable:
    """Bias, RMSE, coverage, and CI length per parameter.

    ``estimates``, ``ci_lower``, ``ci_upper`` have shape (replicates, C);
    ``truth`` has shape (C,).  Bias is the mean signed error, RMSE the root
    mean squared error, coverage the fraction of replicates whose interval
    contains the generating value, CI length the mean upper-minus-lower.
    """
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    ci_lower = np.atleast_2d(np.asarray(ci_lower, dtype=float))
    ci_upper = np.atleast_2d(np.asarray(ci_upper, dtype=float))
    truth = np.asarray(truth, dtype=float)
    n_rep, n_par = estimates.shape
    if truth.shape != (n_par,):
        raise ShapeError(f"truth has shape {truth.shape}, expected ({n_par},)")
    if ci_lower.shape != estimates.shape or ci_upper.shape != estimates.shape:
        raise ShapeError("interval arrays must match the estimates' shape")
    if len(names) != n_par:
        raise ShapeError(f"{len(names)} names for {n_par} parameters")
    err = estimates - truth[None, :]
    bias = err.mean(axis=0)
    rmse = np.sqrt((err**2).mean(axis=0))
    covered = (ci_lower <= truth[None, :]) & (truth[None, :] <= ci_upper)
    coverage = covered.mean(axis=0)
    ci_length = (ci_upper - ci_lower).mean(axis=0)
    return RecoveryTable(
        names=list(names), truth=truth, bias=bias, rmse=rmse,
        coverage=coverage, ci_length=ci_length, n_replicates=n_rep,
    )


# ---------------------------------------------------------------------------
# Forecast accuracy


def forecast_rmse(point: np.ndarray, actual: np.ndarray) -> float:
    """RMSE over every horizon-by-component cell of one forecast."""
    point = np.asarray(point, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if point.shape != actual.shape:
        raise ShapeError(f"forecast shape {point.shape} != actual {actual.shape}")
    return float(np.sqrt(np.mean((point - actual) ** 2)))


def forecast_mae(point: np.ndarray, actual: np.ndarray) -> float:
    """Mean absolute error over every horizon-by-component cell."""
    point = np.asarray(point, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if point.shape != actual.shape:
        raise ShapeError(f"forecast shape {point.shape} != actual {actual.shape}")
    return float(np.mean(np.abs(point - actual)))


def forecast_summary(pairs: list) -> dict:
    """Across-replicate forecast accuracy from (point, actual) pairs.

    Returns the mean and standard deviation of per-replicate RMSE
    (``m_rmse`` / ``sd_rmse``), the same for MAE, and the pooled RMSE
    (square root of the grand mean squared error over all cells).
    """
    if not pairs:
        raise ShapeError("forecast_summary needs at least one replicate")
    rmses = np.array([forecast_rmse(p, a) for p, a in pairs])
    maes = np.array([forecast_mae(p, a) for p, a in pairs])
    sq = np.concatenate(
        [((np.asarray(p) - np.asarray(a)) ** 2).ravel() for p, a in pairs]
    )
    return {
        "m_rmse": float(rmses.mean()),
        "sd_rmse": float(rmses.std(ddof=1)) if len(pairs) > 1 else 0.0,
        "m_mae": float(maes.mean()),
        "sd_mae": float(maes.std(ddof=1)) if len(pairs) > 1 else 0.0,
        "pooled_rmse": float(np.sqrt(sq.mean())),
        "n_replicates": len(pairs),
    }


# ---------------------------------------------------------------------------
# Ratio tables


MISSING = "—"  # em dash for cells that cannot be computed


def ratio_table(values: dict, row_keys: list, column_keys: list, base_key) -> list:
    """Rows of ``values[(row, col)] / values[(base, col)]`` as strings.

    ``values`` maps (row_key, column_key) to a float.  Cells whose numerator
    or denominator is missing or whose denominator is zero render as an em
    dash; nothing is ever fabricated.  The base row renders as 1.000 where
    defined.
    """
    rows = []
    for rk in row_keys:
        cells = []
        for ck in column_keys:
            num = values.get((rk, ck))
            den = values.get((base_key, ck))
            if num is None or den is None or den == 0:
                cells.append(MISSING)
            else:
                cells.append(f"{num / den:.3f}")
        rows.append((rk, cells))
    return rows


def relative_to_best(values: dict, keys: list) -> dict:
    """Each value divided by the smallest value among ``keys`` (best = 1.0)."""
    present = [k for k in keys if values.get(k) is not None]
    if not present:
        return {k: None for k in keys}
    best = min(values[k] for k in present)
    out = {}
    for k in keys:
        v = values.get(k)
        out[k] = None if v is None or best == 0 else v / best
    return out


# ---------------------------------------------------------------------------
# Rendering


def format_table(headers: list, rows: list, precision: int = 4) -> str:
    """Monospace-aligned table; floats fixed to ``precision`` decimals."""

    def cell(x) -> str:
        if isinstance(x, float):
            return f"{x:.{precision}f}"
        return str(x)

    body = [[cell(x) for x in row] for row in rows]
    widths = [
        max(len(headers[c]), *(len(r[c]) for r in body)) if body else len(headers[c])
        for c in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in body:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def save_recovery_csv(table: RecoveryTable, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["parameter", "truth", "bias", "rmse", "coverage", "ci_length"]
        )
        for i, name in enumerate(table.names):
            writer.writerow([
                name,
                format(table.truth[i], ".10g"),
                format(table.bias[i], ".10g"),
                format(table.rmse[i], ".10g"),
                format(table.coverage[i], ".10g"),
                format(table.ci_length[i], ".10g"),
            ])
