"""Deterministic synthetic market data used in place of proprietary index data.

Daily asset returns follow a Markov regime-switching Gaussian process and the
yield curve is a three-factor (level / slope / curvature) Nelson-Siegel curve
whose factors mean-revert toward regime-dependent targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .market_data import FeatureTable, PriceTable, ScenarioTable

TRADING_DAYS = 252
# overnight policy rate plus seven points on the curve (years)
DEFAULT_TENORS = (0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 30.0)
ASSET_CLASSES = ("US_EQ", "US_TECH", "GLOBAL_EQ", "EM_EQ", "US_HY", "US_IG", "EM_DEBT",
                 "COMMOD", "UST_LONG", "UST_SHORT")


def _tenor_label(t: float) -> str:
    if t == 0:
        return "ON"
    return f"{int(round(t * 12))}M" if t < 1 else f"{int(round(t))}Y"


@dataclass
class FixtureSpec:
    """Regime-switching market model; annualized parameters, one row per regime."""

    drift: np.ndarray                # (k, n) annual expected returns
    vol: np.ndarray                  # (k, n) annual volatilities
    corr: np.ndarray                 # (k, n, n) correlation matrices
    transition: np.ndarray           # (k, k) daily switching matrix
    factor_targets: np.ndarray       # (k, 3) level/slope/curvature long-run targets
    factor_speed: float = 2.0        # annual mean-reversion speed
    factor_vol: tuple = (0.006, 0.008, 0.010)
    tenors: tuple = DEFAULT_TENORS
    ns_lambda: float = 1.8
    start: str = "2003-01-01"
    end: str = "2022-06-30"
    initial_price: float = 100.0
    seed: int = 0
    tickers: tuple = ()

    def __post_init__(self):
        self.drift = np.atleast_2d(np.asarray(self.drift, dtype=float))
        k, n = self.drift.shape
        self.vol = np.broadcast_to(np.asarray(self.vol, dtype=float), (k, n)).copy()
        corr = np.asarray(self.corr, dtype=float)
        if corr.ndim == 2:
            corr = np.broadcast_to(corr, (k, n, n)).copy()
        self.corr = corr
        self.transition = np.atleast_2d(np.asarray(self.transition, dtype=float))
        self.factor_targets = np.broadcast_to(np.asarray(self.factor_targets, dtype=float),
                                              (k, 3)).copy()
        if self.corr.shape != (k, n, n):
            raise ParameterError(f"corr must have shape {(k, n, n)}")
        if self.transition.shape != (k, k) or np.any(self.transition < 0) or \
                not np.allclose(self.transition.sum(axis=1), 1.0):
            raise ParameterError("transition must be a row-stochastic (k, k) matrix")
        if np.any(self.vol < 0):
            raise ParameterError("volatilities must be nonnegative")
        for c in self.corr:
            if not np.allclose(c, c.T) or np.linalg.eigvalsh(c).min() < -1e-10:
                raise ParameterError("correlation matrices must be symmetric PSD")
        if not self.tickers:
            self.tickers = ASSET_CLASSES[:n] if n <= len(ASSET_CLASSES) else \
                tuple(f"A{i}" for i in range(n))
        if len(self.tickers) != n:
            raise ParameterError("one ticker per asset required")

    @property
    def n_assets(self) -> int:
        return self.drift.shape[1]

    @property
    def n_regimes(self) -> int:
        return self.drift.shape[0]

    @property
    def tenor_labels(self) -> tuple[str, ...]:
        return tuple(_tenor_label(t) for t in self.tenors)


@dataclass
class FixtureData:
    prices: PriceTable
    features: FeatureTable
    regimes: np.ndarray = field(repr=False)


def _cov_factor(vol, corr):
    cov = corr * np.outer(vol, vol)
    w, v = np.linalg.eigh(cov)
    return v * np.sqrt(np.clip(w, 0, None))


def nelson_siegel(factors, tenors, lam):
    """Yields (l, T) from factor paths (3, T); tenor 0 is the short-rate limit."""
    t = np.asarray(tenors, dtype=float)[:, None] / lam
    safe = np.where(t > 0, t, 1.0)
    slope = np.where(t > 0, (1 - np.exp(-safe)) / safe, 1.0)
    curve = slope - np.exp(-t)
    return factors[0] + factors[1] * slope + factors[2] * curve


def generate_fixture(spec: FixtureSpec) -> FixtureData:
    rng = np.random.default_rng(spec.seed)
    dates = np.arange(np.datetime64(spec.start, "D"), np.datetime64(spec.end, "D") + 1)
    dates = dates[np.is_busday(dates)]
    T = dates.size
    k, n = spec.n_regimes, spec.n_assets

    regimes = np.empty(T, dtype=int)
    regimes[0] = 0
    u = rng.random(T)
    cum = np.cumsum(spec.transition, axis=1)
    for t in range(1, T):
        regimes[t] = min(int(np.searchsorted(cum[regimes[t - 1]], u[t], side="right")), k - 1)

    dt = 1.0 / TRADING_DAYS
    z = rng.standard_normal((T - 1, n))
    factors = [_cov_factor(spec.vol[s], spec.corr[s]) for s in range(k)]
    rets = np.empty((T - 1, n))
    for s in range(k):
        idx = regimes[1:] == s
        rets[idx] = spec.drift[s] * dt + np.sqrt(dt) * z[idx] @ factors[s].T
    prices = np.empty((n, T))
    prices[:, 0] = spec.initial_price
    prices[:, 1:] = spec.initial_price * np.cumprod(1.0 + rets, axis=0).T

    beta = np.empty((3, T))
    beta[:, 0] = spec.factor_targets[0]
    eps = rng.standard_normal((T - 1, 3)) * np.asarray(spec.factor_vol) * np.sqrt(dt)
    a = spec.factor_speed * dt
    for t in range(1, T):
        tgt = spec.factor_targets[regimes[t]]
        beta[:, t] = beta[:, t - 1] + a * (tgt - beta[:, t - 1]) + eps[t - 1]
    yields = nelson_siegel(beta, spec.tenors, spec.ns_lambda)

    return FixtureData(PriceTable(dates, spec.tickers, prices),
                       FeatureTable(dates, spec.tenor_labels, yields), regimes)


def write_fixture(data: FixtureData, out_dir, header: str | None = None) -> dict[str, Path]:
    """Write prices.csv, yields.csv and regimes.csv; byte-identical per seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    days = [str(d) for d in data.prices.dates]

    def dump(path, names, mat, fmt):
        lines = [f"# {header}"] if header else []
        lines.append(",".join(["date", *names]))
        for i, d in enumerate(days):
            lines.append(",".join([d, *(fmt % v for v in mat[:, i])]))
        path.write_text("\n".join(lines) + "\n")

    paths = {"prices": out / "prices.csv", "yields": out / "yields.csv",
             "regimes": out / "regimes.csv"}
    dump(paths["prices"], data.prices.tickers, data.prices.prices, "%.10f")
    dump(paths["yields"], data.features.tenors, data.features.yields, "%.10f")
    dump(paths["regimes"], ["regime"], data.regimes[None, :].astype(float), "%.0f")
    return paths


# ready-made specs -------------------------------------------------------------

def _equicorr(n, rho):
    return np.full((n, n), rho) + (1 - rho) * np.eye(n)


def default_spec(seed: int = 0) -> FixtureSpec:
    """Calm / stressed two-regime market: ten asset classes, eight tenors."""
    calm = np.array([0.10, 0.13, 0.09, 0.09, 0.07, 0.05, 0.07, 0.04, 0.03, 0.015])
    stressed = np.array([-0.25, -0.30, -0.25, -0.35, -0.12, -0.02, -0.15, -0.20, 0.10, 0.02])
    vol_calm = np.array([0.15, 0.20, 0.14, 0.20, 0.07, 0.05, 0.08, 0.16, 0.11, 0.01])
    stress_mult = np.array([2.2, 2.2, 2.2, 2.2, 2.5, 1.6, 2.5, 1.8, 1.5, 1.0])
    vol = np.vstack([vol_calm, vol_calm * stress_mult])
    groups = np.array([0, 0, 0, 0, 1, 1, 1, 2, 3, 3])
    base = np.where(groups[:, None] == groups[None, :], 0.75, 0.2)
    np.fill_diagonal(base, 1.0)
    stress = np.where(groups[:, None] == groups[None, :], 0.85, 0.5)
    stress[np.ix_(groups == 3, groups != 3)] = -0.3
    stress[np.ix_(groups != 3, groups == 3)] = -0.3
    np.fill_diagonal(stress, 1.0)
    corr = np.stack([base, stress])
    p = 1.0 / (TRADING_DAYS * 3)
    q = 1.0 / (TRADING_DAYS * 1)
    trans = np.array([[1 - p, p], [q, 1 - q]])
    targets = np.array([[0.045, -0.020, 0.000], [0.020, 0.010, -0.010]])
    return FixtureSpec(np.vstack([calm, stressed]), vol, corr, trans, targets, seed=seed)


def dominance_spec(seed: int = 0, n_assets: int = 10) -> FixtureSpec:
    """Asset 0 has a much higher drift and much lower volatility than the rest."""
    drift = np.full(n_assets, 0.03)
    drift[0] = 0.30
    vol = np.full(n_assets, 0.08)
    vol[0] = 0.02
    corr = _equicorr(n_assets, 0.2)
    return FixtureSpec(drift[None, :], vol[None, :], corr[None], np.ones((1, 1)),
                       np.array([[0.04, -0.015, 0.0]]), seed=seed)


def two_regime_table(m_per_regime: int = 500, n_assets: int = 10, n_features: int = 8,
                     separation: float = 6.0, seed: int = 0):
    """Two multivariate-normal regimes of equal size, returned with true labels.

    Regime centres differ by ``separation`` marginal standard deviations along a
    random unit direction; each regime has its own random correlation matrix.
    """
    rng = np.random.default_rng(seed)
    d = n_assets + n_features
    scale = np.concatenate([np.full(n_assets, 0.15), np.full(n_features, 0.01)])
    base = np.concatenate([np.full(n_assets, 0.06), np.full(n_features, 0.03)])
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    centres = [base - 0.5 * separation * direction * scale,
               base + 0.5 * separation * direction * scale]
    blocks, labels = [], []
    for j, c in enumerate(centres):
        a = rng.standard_normal((d, d))
        cov = a @ a.T / d + 0.5 * np.eye(d)
        sd = np.sqrt(np.diag(cov))
        corr = cov / np.outer(sd, sd)
        x = rng.multivariate_normal(np.zeros(d), corr, size=m_per_regime) * scale + c
        blocks.append(x)
        labels.append(np.full(m_per_regime, j))
    X = np.vstack(blocks)
    labels = np.concatenate(labels)
    perm = rng.permutation(X.shape[0])
    X, labels = X[perm], labels[perm]
    dates = np.datetime64("2000-01-03") + np.arange(X.shape[0])
    table = ScenarioTable(X[:, :n_assets].T, X[:, n_assets:].T, dates,
                          tuple(f"A{i}" for i in range(n_assets)),
                          tuple(f"F{i}" for i in range(n_features)))
    return table, labels
