"""Sector trading-value ingestion: validation, shares, seasonal designs.

Raw data is a panel of strictly positive trading values over weekday dates.
Ingestion validates it row by row (collecting every offending row before
failing), converts values to compositional shares, builds the Fourier
seasonal design used by the sector-share model, and splits train/test
windows.  A synthetic panel generator stands in for proprietary market data
so the full pipeline runs offline.
"""

from __future__ import annotations

import csv
import datetime
from dataclasses import dataclass

import numpy as np

from .errors import IngestError, ShapeError
from .model import register_design
from .simplex import clamp_shares

SECTOR_NAMES = [
    "basic_materials",
    "communication_services",
    "consumer_cyclical",
    "consumer_defensive",
    "energy",
    "financial_services",
    "healthcare",
    "industrials",
    "real_estate",
    "technology",
    "utilities",
]


# ---------------------------------------------------------------------------
# Panel


@dataclass
class SectorPanel:
    """Trading values per sector over weekday dates.

    ``values`` is (T, K), strictly positive; ``dates`` strictly increasing
    weekdays; ``sectors`` the K column names.
    """

    dates: list
    values: np.ndarray
    sectors: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    @property
    def n_obs(self) -> int:
        return len(self.dates)

    @property
    def n_sectors(self) -> int:
        return len(self.sectors)

    def validate(self) -> "SectorPanel":
        problems = validate_panel(self)
        if problems:
            raise IngestError(
                f"panel failed validation with {len(problems)} problem(s)",
                rows=problems,
            )
        return self


def validate_panel(panel: SectorPanel) -> list:
    """All (row identifier, message) problems; empty list when valid."""
    problems = []
    if panel.values.ndim != 2 or panel.values.shape != (
        len(panel.dates),
        len(panel.sectors),
    ):
        problems.append(
            ("panel", f"values shape {panel.values.shape} does not match "
                      f"{len(panel.dates)} dates x {len(panel.sectors)} sectors")
        )
        return problems
    prev = None
    for i, d in enumerate(panel.dates):
        if not isinstance(d, datetime.date):
            problems.append((str(d), "not a date"))
            continue
        if d.weekday() >= 5:
            problems.append((d.isoformat(), "falls on a weekend"))
        if prev is not None and d <= prev:
            problems.append((d.isoformat(), f"not after previous date {prev}"))
        prev = d
        row = panel.values[i]
        bad = ~(np.isfinite(row) & (row > 0))
        for j in np.nonzero(bad)[0]:
            problems.append(
                (f"{d.isoformat()}/{panel.sectors[j]}",
                 f"value {float(row[j]):g} is not a positive number")
            )
    return problems


def to_shares(panel: SectorPanel) -> np.ndarray:
    """Daily compositions y_kt = V_kt / sum_k V_kt, clamped onto the simplex."""
    panel.validate()
    totals = panel.values.sum(axis=1, keepdims=True)
    return clamp_shares(panel.values / totals)


# ---------------------------------------------------------------------------
# CSV readers


def _parse_date(text: str):
    try:
        return datetime.date.fromisoformat(text.strip())
    except ValueError:
        return None


def read_long_csv(path) -> SectorPanel:
    """Read a long-form CSV with header ``date,sector,value``.

    Every date must carry a value for every sector that appears anywhere in
    the file; missing combinations, bad dates, and nonpositive values are
    collected and reported together.
    """
    problems = []
    cells: dict = {}
    dates: list = []
    sectors: list = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["date", "sector", "value"]:
            raise IngestError(
                f"expected header date,sector,value, got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                problems.append((f"line {lineno}", f"expected 3 fields, got {len(row)}"))
                continue
            d = _parse_date(row[0])
            if d is None:
                problems.append((f"line {lineno}", f"bad date {row[0]!r}"))
                continue
            sector = row[1].strip()
            if not sector:
                problems.append((f"line {lineno}", "empty sector name"))
                continue
            try:
                value = float(row[2])
            except ValueError:
                problems.append((f"line {lineno}", f"bad value {row[2]!r}"))
                continue
            if d not in cells:
                cells[d] = {}
                dates.append(d)
            if sector not in sectors:
                sectors.append(sector)
            if sector in cells[d]:
                problems.append(
                    (f"{d.isoformat()}/{sector}", "duplicate date/sector row")
                )
            cells[d][sector] = value
    if not dates or not sectors:
        raise IngestError("no data rows found", rows=problems)
    for d in dates:
        for s in sectors:
            if s not in cells[d]:
                problems.append((f"{d.isoformat()}/{s}", "missing value"))
    if problems:
        raise IngestError(
            f"input failed validation with {len(problems)} problem(s)",
            rows=problems,
        )
    values = np.array([[cells[d][s] for s in sectors] for d in dates])
    return SectorPanel(dates=dates, values=values, sectors=sectors).validate()


def read_wide_csv(path) -> SectorPanel:
    """Read a wide-form CSV: header ``date,<sector>,...`` one row per day."""
    problems = []
    dates, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip() != "date":
            raise IngestError(f"expected header date,<sector>,..., got {header!r}")
        sectors = [h.strip() for h in header[1:]]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                problems.append(
                    (f"line {lineno}", f"expected {len(header)} fields, got {len(row)}")
                )
                continue
            d = _parse_date(row[0])
            if d is None:
                problems.append((f"line {lineno}", f"bad date {row[0]!r}"))
                continue
            vals = []
            for s, cell in zip(sectors, row[1:]):
                try:
                    vals.append(float(cell))
                except ValueError:
                    problems.append((f"{row[0]}/{s}", f"bad value {cell!r}"))
                    vals.append(np.nan)
            dates.append(d)
            rows.append(vals)
    if not dates:
        raise IngestError("no data rows found", rows=problems)
    panel = SectorPanel(dates=dates, values=np.array(rows), sectors=sectors)
    problems.extend(validate_panel(panel))
    if problems:
        raise IngestError(
            f"input failed validation with {len(problems)} problem(s)",
            rows=problems,
        )
    return panel


def save_composition_csv(series: np.ndarray, path, names: list | None = None) -> None:
    """Write a composition series as CSV, one column per component."""
    series = np.asarray(series, dtype=float)
    names = names or [f"y{j + 1}" for j in range(series.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in series:
            writer.writerow([format(v, ".17g") for v in row])


def read_composition_csv(path) -> tuple:
    """Read a composition series CSV; returns (array, component names)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise IngestError("empty composition file")
        rows, problems = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                problems.append(
                    (f"line {lineno}", f"expected {len(header)} fields, got {len(row)}")
                )
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                problems.append((f"line {lineno}", "non-numeric value"))
    if problems:
        raise IngestError(
            f"composition file failed parsing with {len(problems)} problem(s)",
            rows=problems,
        )
    if not rows:
        raise IngestError("no data rows found")
    return np.array(rows), [h.strip() for h in header]


def save_panel_csv(panel: SectorPanel, path) -> None:
    """Write a panel in long form (``date,sector,value``)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "sector", "value"])
        for i, d in enumerate(panel.dates):
            for j, s in enumerate(panel.sectors):
                writer.writerow([d.isoformat(), s, format(panel.values[i, j], ".10g")])


# ---------------------------------------------------------------------------
# Seasonal design


def fourier_columns(
    d: float,
    weekly_pairs: int = 2,
    annual_pairs: int = 5,
    weekly_period: float = 5.0,
    annual_period: float = 252.0,
) -> np.ndarray:
    """Seasonal regressors at trading-day index ``d`` (no intercept).

    Columns are ordered weekly pairs first, then annual pairs, each pair as
    (sin, cos) of 2*pi*n*d/period for harmonic n = 1, 2, ...
    """
    cols = []
    for period, pairs in ((weekly_period, weekly_pairs), (annual_period, annual_pairs)):
        for n in range(1, pairs + 1):
            angle = 2.0 * np.pi * n * d / period
            cols.extend((np.sin(angle), np.cos(angle)))
    return np.array(cols)


class FourierSeasonalDesign:
    """Block-diagonal seasonal design: per-component intercept + harmonics.

    Each ALR component owns one block of ``1 + 2*(weekly_pairs+annual_pairs)``
    columns, so ``n_beta = (J-1) * block``; the precision covariates reuse the
    same intercept-plus-harmonics block (``n_gamma = block``).  The day index
    is the row position counted from the first training row.
    """

    kind = "fourier"

    def __init__(
        self,
        n_parts: int,
        weekly_pairs: int = 2,
        annual_pairs: int = 5,
        weekly_period: float = 5.0,
        annual_period: float = 252.0,
    ):
        if n_parts < 2:
            raise ShapeError("need at least two components")
        self.n_parts = int(n_parts)
        self.weekly_pairs = int(weekly_pairs)
        self.annual_pairs = int(annual_pairs)
        self.weekly_period = float(weekly_period)
        self.annual_period = float(annual_period)
        self.block = 1 + 2 * (self.weekly_pairs + self.annual_pairs)
        self.n_beta = (self.n_parts - 1) * self.block
        self.n_gamma = self.block

    def _row(self, t: int) -> np.ndarray:
        out = np.empty(self.block)
        out[0] = 1.0
        out[1:] = fourier_columns(
            t, self.weekly_pairs, self.annual_pairs,
            self.weekly_period, self.annual_period,
        )
        return out

    def covariate_matrix(self, t: int) -> np.ndarray:
        k = self.n_parts - 1
        X = np.zeros((k, self.n_beta))
        row = self._row(t)
        for j in range(k):
            X[j, j * self.block:(j + 1) * self.block] = row
        return X

    def precision_covariates(self, t: int) -> np.ndarray:
        return self._row(t)

    def covariate_array(self, t0: int, t1: int) -> np.ndarray:
        k = self.n_parts - 1
        out = np.zeros((t1 - t0, k, self.n_beta))
        for i, t in enumerate(range(t0, t1)):
            row = self._row(t)
            for j in range(k):
                out[i, j, j * self.block:(j + 1) * self.block] = row
        return out

    def precision_array(self, t0: int, t1: int) -> np.ndarray:
        return np.array([self._row(t) for t in range(t0, t1)])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_parts": self.n_parts,
            "weekly_pairs": self.weekly_pairs,
            "annual_pairs": self.annual_pairs,
            "weekly_period": self.weekly_period,
            "annual_period": self.annual_period,
        }


register_design(
    "fourier",
    lambda d: FourierSeasonalDesign(
        d["n_parts"],
        weekly_pairs=d.get("weekly_pairs", 2),
        annual_pairs=d.get("annual_pairs", 5),
        weekly_period=d.get("weekly_period", 5.0),
        annual_period=d.get("annual_period", 252.0),
    ),
)


# ---------------------------------------------------------------------------
# Train/test split


def split_panel(panel: SectorPanel, train_end, test_length: int = 126):
    """Split into (train_panel, test_panel).

    ``train_end`` is either a row count or the last training date (the
    boundary row belongs to the training window).  The test window must hold
    exactly ``test_length`` rows.
    """
    if test_length < 1:
        raise IngestError("test_length must be positive")
    if isinstance(train_end, int):
        n_train = train_end
    else:
        if isinstance(train_end, str):
            train_end = datetime.date.fromisoformat(train_end)
        eligible = [i for i, d in enumerate(panel.dates) if d <= train_end]
        if not eligible:
            raise IngestError(f"no rows on or before {train_end}")
        n_train = eligible[-1] + 1
    if n_train < 1:
        raise IngestError("training window is empty")
    if n_train + test_length > panel.n_obs:
        raise IngestError(
            f"need {n_train + test_length} rows for this split, have {panel.n_obs}"
        )
    train = SectorPanel(
        dates=panel.dates[:n_train],
        values=panel.values[:n_train],
        sectors=list(panel.sectors),
    )
    test = SectorPanel(
        dates=panel.dates[n_train:n_train + test_length],
        values=panel.values[n_train:n_train + test_length],
        sectors=list(panel.sectors),
    )
    return train, test


# ---------------------------------------------------------------------------
# Synthetic panel


def trading_dates(start: datetime.date, n_obs: int) -> list:
    """``n_obs`` consecutive weekdays starting at (or after) ``start``."""
    out = []
    d = start
    while len(out) < n_obs:
        if d.weekday() < 5:
            out.append(d)
        d += datetime.timedelta(days=1)
    return out


def synthetic_sector_panel(
    n_obs: int = 630,
    seed: int = 7,
    sectors: list | None = None,
    start: datetime.date = datetime.date(2021, 1, 4),
) -> SectorPanel:
    """Generate a seasonal sector trading-value panel.

    Daily compositions are Dirichlet draws around sector means that move
    with weekly and annual harmonics on the log-odds scale; the daily total
    has its own seasonal and noise components.  Deterministic in ``seed``.
    """
    sectors = list(SECTOR_NAMES if sectors is None else sectors)
    k = len(sectors)
    rng = np.random.default_rng([seed, n_obs, k])
    base = np.sort(rng.normal(0.0, 0.9, size=k))[::-1]
    weekly_amp = rng.normal(0.0, 0.04, size=(k, 2, 2))
    annual_amp = rng.normal(0.0, 0.12, size=(k, 5, 2))
    d_idx = np.arange(n_obs)
    logits = np.tile(base, (n_obs, 1))
    for n in range(1, 3):
        ang = 2.0 * np.pi * n * d_idx / 5.0
        logits += np.outer(np.sin(ang), weekly_amp[:, n - 1, 0])
        logits += np.outer(np.cos(ang), weekly_amp[:, n - 1, 1])
    for n in range(1, 6):
        ang = 2.0 * np.pi * n * d_idx / 252.0
        logits += np.outer(np.sin(ang), annual_amp[:, n - 1, 0])
        logits += np.outer(np.cos(ang), annual_amp[:, n - 1, 1])
    logits -= logits.max(axis=1, keepdims=True)
    mu = np.exp(logits)
    mu /= mu.sum(axis=1, keepdims=True)
    phi = 600.0 * np.exp(0.15 * np.sin(2.0 * np.pi * d_idx / 252.0))
    shares = np.empty((n_obs, k))
    for t in range(n_obs):
        g = np.maximum(rng.standard_gamma(phi[t] * mu[t]), 1e-300)
        shares[t] = g / g.sum()
    shares = clamp_shares(shares)
    log_total = (
        np.log(4.0e9)
        + 0.08 * np.sin(2.0 * np.pi * d_idx / 252.0)
        + 0.05 * np.cos(2.0 * np.pi * d_idx / 5.0)
        + rng.normal(0.0, 0.06, size=n_obs)
    )
    values = np.exp(log_total)[:, None] * shares
    return SectorPanel(
        dates=trading_dates(start, n_obs), values=values, sectors=sectors
    )
