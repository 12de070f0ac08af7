"""Rolling-window, annually rebalanced backtest of the five allocation strategies.

Strategies
    Gw/oF  synthetic scenarios, uniform density
    GwF    synthetic scenarios, density from synthetic features around today's curve
    Hw/oF  historical sub-sample without replacement, uniform density
    HwF    historical sub-sample, feature density
    EW     fixed 1/n
"""

from __future__ import annotations

import csv
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ctgan import CtganConfig
from .cvar import (
    RiskSpec,
    density_from_features,
    solve_allocation,
    tail_mean,
    uniform_density,
)
from .errors import InsufficientDataError, ParameterError, TotalLossError
from .market_data import FeatureTable, PriceTable, build_scenario_table
from .preprocess import zscore_fit
from .sdg import PreprocessConfig, fit_preprocessing, generate_synthetic, train_sdg_pipeline

log = logging.getLogger(__name__)

STRATEGY_KINDS = ("Gw/oF", "GwF", "Hw/oF", "HwF", "EW")
DEFAULT_CVAR_GRID = (0.075, 0.1, 0.125, 0.15, 0.175, 0.2, 0.225, 0.25, 0.275, 0.3)
# average 30-day bid-ask spreads of liquid ETFs tracking each asset class (bp)
DEFAULT_SPREADS_BP = {
    "US_EQ": 0.36, "US_TECH": 0.52, "GLOBAL_EQ": 0.54, "EM_EQ": 2.69, "US_HY": 1.35,
    "US_IG": 0.96, "EM_DEBT": 5.66, "COMMOD": 14.1, "UST_LONG": 1.03, "UST_SHORT": 1.25,
}
DAYS_PER_YEAR = 365.25
WINDOW_GRACE_DAYS = 10


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    scenario_count: int = 500

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ParameterError(f"unknown strategy {self.kind!r}; "
                                 f"expected one of {STRATEGY_KINDS}")
        if self.scenario_count < 1:
            raise ParameterError("scenario_count must be >= 1")

    @property
    def uses_sdg(self) -> bool:
        return self.kind in ("Gw/oF", "GwF")

    @property
    def uses_features(self) -> bool:
        return self.kind in ("GwF", "HwF")

    @property
    def optimizes(self) -> bool:
        return self.kind != "EW"


def default_strategies(scenario_count: int = 500) -> list[StrategySpec]:
    return [StrategySpec(k, scenario_count) for k in STRATEGY_KINDS]


@dataclass
class BacktestConfig:
    lookback_years: int = 5
    rebalance_month: int = 1
    cvar_grid: tuple = DEFAULT_CVAR_GRID
    runs_per_level: int = 5
    alpha: float = 0.95
    spreads: dict | None = None
    scenario_count: int = 500
    horizon_days: int = 252
    seed: int = 0
    first_rebalance: str | None = None
    condition_sampling: str = "log"
    ctgan: CtganConfig = field(default_factory=CtganConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    jobs: int = 1

    def __post_init__(self):
        grid = tuple(float(v) for v in self.cvar_grid)
        if not grid or any(v <= 0 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ParameterError("cvar_grid must be positive and strictly ascending")
        self.cvar_grid = grid
        if self.runs_per_level < 1:
            raise ParameterError("runs_per_level must be >= 1")
        if self.lookback_years < 1 or not 1 <= self.rebalance_month <= 12:
            raise ParameterError("invalid lookback_years / rebalance_month")
        RiskSpec(self.alpha, grid[0])
        if self.jobs < 1:
            raise ParameterError("jobs must be >= 1")

    def spread_vector(self, tickers) -> np.ndarray:
        table = DEFAULT_SPREADS_BP if self.spreads is None else self.spreads
        missing = [t for t in tickers if t not in table]
        if missing:
            raise ParameterError(f"no bid-ask spread configured for {missing}")
        return np.array([float(table[t]) for t in tickers])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cvar_grid"] = list(self.cvar_grid)
        d["ctgan"] = self.ctgan.to_dict()
        d["preprocess"] = asdict(self.preprocess)
        return d


# metrics -----------------------------------------------------------------------

def annualized_return(segments) -> float:
    """``(prod(1 + r))^(1 / sum(fractions)) - 1`` over (return, year_fraction) pairs."""
    seg = [(float(r), float(f)) for r, f in segments]
    if not seg:
        raise ParameterError("need at least one segment")
    if any(f <= 0 for _, f in seg):
        raise ParameterError("year fractions must be positive")
    if any(1 + r <= 0 for r, _ in seg):
        raise TotalLossError("a segment lost the whole portfolio; annualized return undefined")
    log_growth = sum(np.log1p(r) for r, _ in seg)
    years = sum(f for _, f in seg)
    return float(np.expm1(log_growth / years))


def rotation(weight_history) -> float:
    """Average summed absolute weight change per rebalance transition, in percent."""
    W = np.asarray(weight_history, dtype=float)
    if W.ndim != 2 or W.shape[0] < 2:
        raise ParameterError("rotation needs at least two rebalance rows")
    return float(100.0 * np.abs(np.diff(W, axis=0)).sum() / (W.shape[0] - 1))


def hh_index(x) -> float:
    """Complementary Herfindahl-Hirschman index scaled so equal weights give 1."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n == 1:
        warnings.warn("HH index undefined for a single asset; reporting 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    return float((1.0 - x @ x) / (1.0 - 1.0 / n))


def transaction_expense(weight_history, spreads_bp) -> float:
    """Mean per-rebalance cost in bp of crossing half the spread on every unit traded."""
    W = np.asarray(weight_history, dtype=float)
    s = np.asarray(spreads_bp, dtype=float).ravel()
    if W.ndim != 2 or s.size != W.shape[1] or not np.all(np.isfinite(s)):
        raise ParameterError("one finite spread per asset is required")
    if W.shape[0] < 2:
        return 0.0
    per_trade = np.abs(np.diff(W, axis=0)) @ s / 2.0
    return float(per_trade.mean())


def cvar_ex_post(segment_returns, alpha: float = 0.95) -> float:
    r = np.asarray(segment_returns, dtype=float).ravel()
    if r.size == 0:
        raise ParameterError("need at least one realized segment")
    return tail_mean(-r, np.full(r.size, 1.0 / r.size), alpha)


# schedule ----------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    rebalance: np.datetime64
    window_start: np.datetime64
    start_idx: int  # last row before the rebalance date (weights set at its close)
    end_idx: int    # last row before the next rebalance date, or the final row
    fraction: float
    full_year: bool


def _month_start(year: int, month: int) -> np.datetime64:
    return np.datetime64(f"{year:04d}-{month:02d}-01", "D")


def rebalance_schedule(dates, config: BacktestConfig) -> list[Segment]:
    dates = np.asarray(dates, dtype="datetime64[D]")
    y0 = int(str(dates[0])[:4])
    y1 = int(str(dates[-1])[:4])
    grace = np.timedelta64(WINDOW_GRACE_DAYS, "D")
    out = []
    first_feasible = None
    for year in range(y0, y1 + 1):
        reb = _month_start(year, config.rebalance_month)
        ws = _month_start(year - config.lookback_years, config.rebalance_month)
        if dates[0] > ws + grace or reb > dates[-1]:
            continue
        start = int(np.searchsorted(dates, reb, side="left")) - 1
        if start < 0 or start >= dates.size - 1:
            continue
        nxt = _month_start(year + 1, config.rebalance_month)
        full = bool(dates[-1] >= nxt)
        end = int(np.searchsorted(dates, nxt, side="left")) - 1 if full else dates.size - 1
        frac = 1.0 if full else float((dates[end] - dates[start]).astype(int)) / DAYS_PER_YEAR
        if first_feasible is None:
            first_feasible = reb
        out.append(Segment(reb, ws, start, end, frac, full))
    if not out:
        raise InsufficientDataError(
            f"price history {dates[0]}..{dates[-1]} does not cover a "
            f"{config.lookback_years}-year lookback plus an evaluation period")
    if config.first_rebalance is not None:
        want = np.datetime64(config.first_rebalance, "D")
        if want < first_feasible:
            raise InsufficientDataError(
                f"first feasible rebalance date is {first_feasible}, requested {want}")
        out = [s for s in out if s.rebalance >= want]
        if not out:
            raise InsufficientDataError(f"no rebalance date on or after {want}")
    return out


# engine ------------------------------------------------------------------------

def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class SolveRecord:
    status: str
    objective: float
    ex_ante_cvar: float
    cvar_active: bool


def _window_task(args):
    """Everything for one rebalance date: SDG fits, sub-samples and LP solves."""
    seg_i, seg, prices, features, config, strategies = args
    t0 = time.perf_counter()
    day = np.timedelta64(1, "D")
    wp = prices.between(seg.window_start, seg.rebalance - day)
    wf = features.between(seg.window_start, seg.rebalance - day)
    hist = build_scenario_table(wp, wf, config.horizon_days)
    f_today = features.yields[:, seg.start_idx]
    stats = zscore_fit(hist.F.T)
    n = prices.n_assets
    year = int(str(seg.rebalance)[:4])
    kinds = {s.kind for s in strategies}
    need_sdg = bool(kinds & {"Gw/oF", "GwF"})
    pre = None
    if need_sdg:
        pre = fit_preprocessing(hist, config.preprocess, seed=_derive_seed(config.seed, year, 0))

    # (kind, lam, run) -> (weights, SolveRecord)
    out: dict = {}
    for run in range(config.runs_per_level):
        rng = np.random.default_rng(_derive_seed(config.seed, year, run + 1, 1))
        inputs = {}
        if kinds & {"Hw/oF", "HwF"}:
            count = min(config.scenario_count, hist.m)
            idx = np.sort(rng.choice(hist.m, size=count, replace=False))
            R_h, F_h = hist.R[:, idx], hist.F[:, idx]
            inputs["Hw/oF"] = (R_h, uniform_density(count))
            inputs["HwF"] = (R_h, density_from_features(F_h, f_today, stats))
        if need_sdg:
            cfg = CtganConfig(**{**config.ctgan.to_dict(),
                                 "seed": _derive_seed(config.seed, year, run + 1, 2)})
            model = train_sdg_pipeline(hist, cfg, preprocessed=pre)
            synth = generate_synthetic(model, config.scenario_count,
                                       np.random.default_rng(_derive_seed(config.seed, year,
                                                                          run + 1, 3)),
                                       config.condition_sampling)
            inputs["Gw/oF"] = (synth.R_s, uniform_density(synth.m))
            inputs["GwF"] = (synth.R_s, density_from_features(synth.F_s, f_today, stats))
        for s in strategies:
            for lam in config.cvar_grid:
                if s.kind == "EW":
                    out[(s.kind, lam, run)] = (np.full(n, 1.0 / n), None)
                    continue
                R, pi = inputs[s.kind]
                a = solve_allocation(R, pi, RiskSpec(config.alpha, lam))
                out[(s.kind, lam, run)] = (a.x, SolveRecord(a.status, a.objective, a.cvar,
                                                            a.cvar_constraint_active))
    log.info("rebalance %s done in %.1fs", seg.rebalance, time.perf_counter() - t0)
    return seg_i, out, time.perf_counter() - t0


@dataclass
class RunResult:
    weights: np.ndarray          # (T, n)
    segment_returns: np.ndarray  # (T,)
    solves: list                 # SolveRecord or None per rebalance
    metrics: dict


@dataclass
class BacktestResult:
    config: BacktestConfig
    tickers: tuple
    segments: list
    strategies: list
    runs: dict                   # (kind, lam, run) -> RunResult
    elapsed: float = 0.0
    window_seconds: list = field(default_factory=list)

    METRICS = ("annualized_return", "cvar_ex_post", "hh_index", "rotation",
               "transaction_expense_bp", "net_return")

    def aggregate(self) -> dict:
        """metric -> lambda -> strategy -> {mean, std} across runs."""
        out: dict = {m: {} for m in self.METRICS}
        for metric in self.METRICS:
            for lam in self.config.cvar_grid:
                row = {}
                for s in self.strategies:
                    vals = np.array([self.runs[(s.kind, lam, r)].metrics[metric]
                                     for r in range(self.config.runs_per_level)])
                    row[s.kind] = {"mean": float(vals.mean()), "std": float(vals.std())}
                out[metric][_lam_key(lam)] = row
        return out

    def tidy_rows(self):
        for s in self.strategies:
            for lam in self.config.cvar_grid:
                for r in range(self.config.runs_per_level):
                    for metric in self.METRICS:
                        yield (s.kind, _lam_key(lam), r, metric,
                               self.runs[(s.kind, lam, r)].metrics[metric])

    def write(self, out_dir, header: str | None = None) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"metrics": out / "metrics.csv", "weights": out / "weights.csv",
                 "solves": out / "solves.csv", "returns": out / "segment_returns.csv",
                 "summary": out / "summary.json", "timing": out / "timing.json"}

        def opened(p):
            f = open(p, "w", newline="")
            if header:
                f.write(f"# {header}\n")
            return csv.writer(f), f

        w, f = opened(paths["metrics"])
        w.writerow(["strategy", "lambda", "run", "metric", "value"])
        for row in self.tidy_rows():
            w.writerow([*row[:4], _fmt(row[4])])
        f.close()

        w, f = opened(paths["weights"])
        w.writerow(["strategy", "lambda", "run", "rebalance", *self.tickers])
        for (kind, lam, r), rr in self.runs.items():
            for seg, x in zip(self.segments, rr.weights):
                w.writerow([kind, _lam_key(lam), r, str(seg.rebalance), *map(_fmt, x)])
        f.close()

        w, f = opened(paths["solves"])
        w.writerow(["strategy", "lambda", "run", "rebalance", "status", "objective",
                    "ex_ante_cvar", "cvar_active"])
        for (kind, lam, r), rr in self.runs.items():
            for seg, rec in zip(self.segments, rr.solves):
                if rec is not None:
                    w.writerow([kind, _lam_key(lam), r, str(seg.rebalance), rec.status,
                                _fmt(rec.objective), _fmt(rec.ex_ante_cvar),
                                int(rec.cvar_active)])
        f.close()

        w, f = opened(paths["returns"])
        w.writerow(["strategy", "lambda", "run", "rebalance", "year_fraction", "return"])
        for (kind, lam, r), rr in self.runs.items():
            for seg, ret in zip(self.segments, rr.segment_returns):
                w.writerow([kind, _lam_key(lam), r, str(seg.rebalance), _fmt(seg.fraction),
                            _fmt(ret)])
        f.close()

        summary = {"config": self.config.to_dict(), "tickers": list(self.tickers),
                   "rebalances": [str(s.rebalance) for s in self.segments],
                   "tables": self.aggregate()}
        if header:
            summary["provenance"] = header
        paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True))
        paths["timing"].write_text(json.dumps({"elapsed_seconds": self.elapsed,
                                               "window_seconds": self.window_seconds},
                                              indent=2))
        return paths


def _lam_key(lam) -> str:
    return f"{float(lam):g}"


def _fmt(v) -> str:
    return repr(float(v))


def _run_metrics(W, seg_returns, segments, spreads, alpha):
    full = [r for r, s in zip(seg_returns, segments) if s.full_year]
    ann = annualized_return([(r, s.fraction) for r, s in zip(seg_returns, segments)])
    cost = transaction_expense(W, spreads)
    return {
        "annualized_return": ann,
        "cvar_ex_post": cvar_ex_post(full if full else seg_returns, alpha),
        "hh_index": float(np.mean([hh_index(x) for x in W])) if W.shape[1] > 1 else 0.0,
        "rotation": rotation(W) if W.shape[0] > 1 else 0.0,
        "transaction_expense_bp": cost,
        "net_return": ann - cost / 1e4,
    }


def run_backtest(prices: PriceTable, features: FeatureTable, config: BacktestConfig | None = None,
                 strategies=None) -> BacktestResult:
    config = config or BacktestConfig()
    strategies = list(strategies) if strategies is not None else \
        default_strategies(config.scenario_count)
    strategies = [s if isinstance(s, StrategySpec) else StrategySpec(s, config.scenario_count)
                  for s in strategies]
    if not np.array_equal(prices.dates, features.dates):
        raise ParameterError("price and feature tables must share dates")
    spreads = config.spread_vector(prices.tickers)
    segments = rebalance_schedule(prices.dates, config)
    t0 = time.perf_counter()

    tasks = [(i, seg, prices, features, config, strategies) for i, seg in enumerate(segments)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            done = list(pool.map(_window_task, tasks))
    else:
        done = [_window_task(t) for t in tasks]
    done.sort(key=lambda d: d[0])

    P = prices.prices
    runs = {}
    for s in strategies:
        for lam in config.cvar_grid:
            for r in range(config.runs_per_level):
                W = np.vstack([d[1][(s.kind, lam, r)][0] for d in done])
                solves = [d[1][(s.kind, lam, r)][1] for d in done]
                rets = np.array([float(x @ (P[:, seg.end_idx] / P[:, seg.start_idx])) - 1.0
                                 for x, seg in zip(W, segments)])
                runs[(s.kind, lam, r)] = RunResult(
                    W, rets, solves, _run_metrics(W, rets, segments, spreads, config.alpha))
    return BacktestResult(config, prices.tickers, segments, strategies, runs,
                          time.perf_counter() - t0, [d[2] for d in done])
