"""Price / yield-curve ingestion and construction of horizon-return scenarios.

Returns are stored asset-major: ``R`` has shape ``(n_assets, m)`` and ``F`` has
shape ``(n_tenors, m)``, one column per anchor date.
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    EmptyIntersectionError,
    EmptyWindowError,
    InsufficientDataError,
    ParameterError,
    SchemaError,
    ShapeError,
)

DEFAULT_HORIZON_DAYS = 252


def as_day(value) -> np.datetime64:
    """Coerce a date-like value to ``datetime64[D]``."""
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]")
    if isinstance(value, (_dt.date, _dt.datetime, pd.Timestamp)):
        return np.datetime64(pd.Timestamp(value).date(), "D")
    return np.datetime64(str(value), "D")


def _as_dates(values) -> np.ndarray:
    return np.asarray([as_day(v) for v in values], dtype="datetime64[D]")


def _check_increasing(dates: np.ndarray, what: str) -> None:
    if dates.size > 1 and not np.all(np.diff(dates.astype("int64")) > 0):
        raise DataError(f"{what}: dates must be strictly increasing")


@dataclass(frozen=True)
class IngestConfig:
    horizon_days: int = DEFAULT_HORIZON_DAYS
    date_format: str | None = None

    def __post_init__(self):
        if self.horizon_days < 1:
            raise ParameterError("horizon_days must be >= 1")


@dataclass(frozen=True)
class PriceTable:
    dates: np.ndarray
    tickers: tuple[str, ...]
    prices: np.ndarray  # (n, T)
    dropped_rows: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_dates(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        p = np.asarray(self.prices, dtype=float)
        if p.ndim != 2 or p.shape != (len(self.tickers), self.dates.size):
            raise ShapeError(f"prices shape {p.shape} does not match "
                             f"({len(self.tickers)}, {self.dates.size})")
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise DataError("prices must be finite and strictly positive")
        _check_increasing(self.dates, "PriceTable")
        p.setflags(write=False)
        object.__setattr__(self, "prices", p)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    def __len__(self) -> int:
        return int(self.dates.size)

    def between(self, start, end) -> "PriceTable":
        """Rows with ``start <= date <= end``."""
        mask = (self.dates >= as_day(start)) & (self.dates <= as_day(end))
        return PriceTable(self.dates[mask], self.tickers, self.prices[:, mask])


@dataclass(frozen=True)
class FeatureTable:
    dates: np.ndarray
    tenors: tuple[str, ...]
    yields: np.ndarray  # (l, T), decimal per annum
    dropped_rows: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_dates(self.dates))
        object.__setattr__(self, "tenors", tuple(self.tenors))
        y = np.asarray(self.yields, dtype=float)
        if y.ndim != 2 or y.shape != (len(self.tenors), self.dates.size):
            raise ShapeError(f"yields shape {y.shape} does not match "
                             f"({len(self.tenors)}, {self.dates.size})")
        if not np.all(np.isfinite(y)):
            raise DataError("yields must be finite")
        _check_increasing(self.dates, "FeatureTable")
        y.setflags(write=False)
        object.__setattr__(self, "yields", y)

    @property
    def n_features(self) -> int:
        return len(self.tenors)

    def __len__(self) -> int:
        return int(self.dates.size)

    def between(self, start, end) -> "FeatureTable":
        mask = (self.dates >= as_day(start)) & (self.dates <= as_day(end))
        return FeatureTable(self.dates[mask], self.tenors, self.yields[:, mask])


@dataclass(frozen=True)
class ScenarioTable:
    """Column-aligned returns ``R`` (n x m) and features ``F`` (l x m)."""

    R: np.ndarray
    F: np.ndarray
    dates: np.ndarray
    tickers: tuple[str, ...] = field(default=())
    tenors: tuple[str, ...] = field(default=())

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        F = np.asarray(self.F, dtype=float)
        if F.ndim == 1:
            F = F.reshape(0, R.shape[1]) if F.size == 0 else F[None, :]
        dates = _as_dates(self.dates)
        m = R.shape[1]
        if m == 0:
            raise EmptyWindowError("scenario table has no columns")
        if F.shape[1] != m or dates.size != m:
            raise ShapeError("R, F and dates must have the same number of columns")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(F))):
            raise DataError("scenario table contains non-finite entries")
        tickers = tuple(self.tickers) or tuple(f"asset{i}" for i in range(R.shape[0]))
        tenors = tuple(self.tenors) or tuple(f"feature{i}" for i in range(F.shape[0]))
        if len(tickers) != R.shape[0] or len(tenors) != F.shape[0]:
            raise ShapeError("label count does not match matrix rows")
        for a in (R, F):
            a.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "tenors", tenors)

    @property
    def n_assets(self) -> int:
        return self.R.shape[0]

    @property
    def n_features(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[1]

    def joint(self) -> np.ndarray:
        """Sample-major design matrix ``[R^T F^T]`` of shape (m, n + l)."""
        return np.hstack([self.R.T, self.F.T])

    @property
    def columns(self) -> list[str]:
        return list(self.tickers) + list(self.tenors)

    def take(self, idx) -> "ScenarioTable":
        idx = np.asarray(idx)
        return ScenarioTable(self.R[:, idx], self.F[:, idx], self.dates[idx],
                             self.tickers, self.tenors)


def _read_table(path, kind: str, date_format: str | None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{kind} file not found: {path}")
    # leading "# ..." lines carry provenance and are skipped
    skip = 0
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            skip += 1
    df = pd.read_csv(path, dtype=str, keep_default_na=False, skiprows=skip)
    cols = list(df.columns)
    if not cols or cols[0].strip().lower() != "date":
        raise SchemaError(f"{kind}: first column must be 'date', got {cols[0] if cols else None!r}",
                          column=cols[0] if cols else None)
    names = [c.strip() for c in cols[1:]]
    if not names:
        raise SchemaError(f"{kind}: no value columns", column=None)
    seen = set()
    for c in names:
        if not c or c.startswith("Unnamed:"):
            raise SchemaError(f"{kind}: empty column name", column=c)
        if c in seen:
            raise SchemaError(f"{kind}: duplicate column {c!r}", column=c)
        seen.add(c)

    dates = []
    for i, s in enumerate(df.iloc[:, 0]):
        try:
            if date_format:
                d = _dt.datetime.strptime(s.strip(), date_format).date()
            else:
                d = _dt.date.fromisoformat(s.strip())
        except ValueError:
            line = i + 2 + skip
            raise DataError(f"{kind}: bad date {s!r} on line {line}", row=line) from None
        dates.append(d)

    raw = df.iloc[:, 1:].to_numpy()
    values = np.full(raw.shape, np.nan)
    for (i, j), s in np.ndenumerate(raw):
        s = s.strip()
        if s == "" or s.lower() in ("nan", "na", "null"):
            continue
        try:
            values[i, j] = float(s)
        except ValueError:
            raise DataError(f"{kind}: non-numeric value {s!r} in column {names[j]!r} "
                            f"on line {i + 2 + skip}", row=i + 2 + skip) from None
    if kind == "prices":
        bad = np.isfinite(values) & (values <= 0)
        if bad.any():
            i = int(np.argwhere(bad)[0, 0]) + 2 + skip
            raise DataError(f"prices: non-positive price on line {i}", row=i)
    dates = np.asarray(dates, dtype="datetime64[D]")
    if np.unique(dates).size != dates.size:
        raise DataError(f"{kind}: duplicate dates")
    return dates, names, values


def load_market_csv(prices_path, yields_path, config: IngestConfig | None = None
                    ) -> tuple[PriceTable, FeatureTable]:
    """Read ``prices.csv`` and ``yields.csv`` and align them on common dates.

    Dates where any cell of either file is blank are dropped from both
    outputs; their count is stored in ``dropped_rows`` on both tables.
    """
    config = config or IngestConfig()
    pdates, tickers, pvals = _read_table(prices_path, "prices", config.date_format)
    ydates, tenors, yvals = _read_table(yields_path, "yields", config.date_format)

    common, pi, yi = np.intersect1d(pdates, ydates, return_indices=True)
    if common.size == 0:
        raise EmptyIntersectionError("prices and yields share no dates")
    pv = pvals[pi]
    yv = yvals[yi]
    complete = np.all(np.isfinite(pv), axis=1) & np.all(np.isfinite(yv), axis=1)
    dropped = int((~complete).sum())
    if not complete.any():
        raise EmptyIntersectionError("no complete rows remain after dropping gaps")
    dates = common[complete]
    return (PriceTable(dates, tickers, pv[complete].T, dropped_rows=dropped),
            FeatureTable(dates, tenors, yv[complete].T, dropped_rows=dropped))


def build_scenario_table(prices: PriceTable, features: FeatureTable,
                         horizon_days: int = DEFAULT_HORIZON_DAYS) -> ScenarioTable:
    """Overlapping ``horizon_days``-row returns anchored at each date.

    Column ``t`` holds ``prices[t + h] / prices[t] - 1`` and the yield curve
    observed on date ``t``; offsets count rows, not calendar days.
    """
    if horizon_days < 1:
        raise ParameterError("horizon_days must be >= 1")
    if not np.array_equal(prices.dates, features.dates):
        raise ShapeError("price and feature tables must share the same dates")
    T = len(prices)
    if T <= horizon_days:
        raise InsufficientDataError(f"need more than {horizon_days} rows, got {T}")
    P = prices.prices
    R = P[:, horizon_days:] / P[:, :-horizon_days] - 1.0
    m = T - horizon_days
    return ScenarioTable(R, features.yields[:, :m], prices.dates[:m],
                         prices.tickers, features.tenors)


def slice_window(table: ScenarioTable, start, end) -> ScenarioTable:
    """Keep the columns whose anchor date lies in ``[start, end]``."""
    start, end = as_day(start), as_day(end)
    if not start < end:
        raise ParameterError(f"window start {start} must precede end {end}")
    idx = np.flatnonzero((table.dates >= start) & (table.dates <= end))
    if idx.size == 0:
        raise EmptyWindowError(f"no anchor dates in [{start}, {end}]")
    return table.take(idx)


def write_matrix_csv(path, columns, values, lead=None, header: str | None = None) -> None:
    """Sample-major matrix as CSV; ``lead`` is an ordered {name: column} prefix."""
    df = pd.DataFrame(np.asarray(values, dtype=float), columns=list(columns))
    for i, (name, col) in enumerate((lead or {}).items()):
        df.insert(i, name, list(col))
    with open(path, "w", newline="") as f:
        if header:
            f.write(f"# {header}\n")
        df.to_csv(f, index=False, float_format="%.12g")


def write_scenario_csv(table: ScenarioTable, returns_path, features_path=None,
                       header: str | None = None) -> None:
    """Write returns (and optionally features) as ``date,<label>...`` CSVs."""
    lead = {"date": [str(d) for d in table.dates]}
    write_matrix_csv(returns_path, table.tickers, table.R.T, lead, header)
    if features_path is not None:
        write_matrix_csv(features_path, table.tenors, table.F.T, lead, header)


def read_matrix_csv(path, drop=("date", "cluster")) -> tuple[list[str], np.ndarray]:
    """Numeric columns of a CSV as a sample-major matrix; ``drop`` columns skipped."""
    df = pd.read_csv(path, comment="#")
    keep = [c for c in df.columns if c not in drop]
    if not keep:
        raise SchemaError(f"{path}: no numeric columns", column=None)
    try:
        values = df[keep].to_numpy(dtype=float)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: missing or non-finite values")
    return keep, values
