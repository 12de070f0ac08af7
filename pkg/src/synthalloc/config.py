"""Run configuration: one TOML file, overridable key by key from the command line.

Layout::

    seed = 0
    output_dir = "out"

    [data]
    prices = "prices.csv"
    yields = "yields.csv"

    [ingest]      # IngestConfig
    [preprocess]  # PreprocessConfig
    [ctgan]       # CtganConfig
    [risk]        # alpha, lam
    [backtest]    # BacktestConfig (spreads as an inline table)

The global ``seed`` is pushed into the nested configs that carry one.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backtest import BacktestConfig
from .ctgan import CtganConfig
from .cvar import RiskSpec
from .errors import ConfigError, SynthAllocError
from .market_data import IngestConfig
from .sdg import PreprocessConfig

CONFIG_ENV = "SYNTHALLOC_CONFIG"
SECTIONS = ("data", "ingest", "preprocess", "ctgan", "risk", "backtest")
# keys that change where things go or how fast, never what is computed
_UNHASHED = ("output_dir", "jobs")


@dataclass
class RunConfig:
    prices: str | None = None
    yields: str | None = None
    ingest: IngestConfig = field(default_factory=IngestConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    ctgan: CtganConfig = field(default_factory=CtganConfig)
    risk: RiskSpec = field(default_factory=RiskSpec)
    backtest: BacktestConfig = field(default_factory=BacktestConfig)
    output_dir: str = "out"
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "data": {"prices": self.prices, "yields": self.yields},
            "ingest": asdict(self.ingest),
            "preprocess": asdict(self.preprocess),
            "ctgan": self.ctgan.to_dict(),
            "risk": {"alpha": self.risk.alpha, "lam": self.risk.lam},
            "backtest": self.backtest.to_dict(),
        }

    def config_hash(self) -> str:
        return config_hash(self.to_dict())

    def provenance(self, **extra) -> str:
        """``config_hash=... seed=...`` line stamped on every artifact."""
        h = config_hash({"config": self.to_dict(), "args": extra}) if extra else \
            self.config_hash()
        return f"config_hash={h} seed={self.seed}"


def _strip(d):
    if isinstance(d, dict):
        return {k: _strip(v) for k, v in d.items() if k not in _UNHASHED}
    return d


def config_hash(doc: dict) -> str:
    blob = json.dumps(_strip(doc), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _build(cls, values: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(unknown)}")
    try:
        return cls(**values)
    except SynthAllocError as e:
        raise ConfigError(f"[{section}] {e}") from None
    except TypeError as e:
        raise ConfigError(f"[{section}] {e}") from None


def from_dict(doc: dict) -> RunConfig:
    top = {k: v for k, v in doc.items() if k not in SECTIONS}
    unknown = sorted(set(top) - {"seed", "output_dir"})
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(unknown)}")
    seed = int(top.get("seed", 0))
    data = dict(doc.get("data", {}))
    bad = sorted(set(data) - {"prices", "yields"})
    if bad:
        raise ConfigError(f"[data] unknown keys: {', '.join(bad)}")

    ingest = _build(IngestConfig, dict(doc.get("ingest", {})), "ingest")
    pre = _build(PreprocessConfig, dict(doc.get("preprocess", {})), "preprocess")
    ctgan = _build(CtganConfig, {"seed": seed, **doc.get("ctgan", {})}, "ctgan")
    risk = _build(RiskSpec, dict(doc.get("risk", {})), "risk")
    bt = dict(doc.get("backtest", {}))
    for k in ("ctgan", "preprocess"):
        if k in bt:
            raise ConfigError(f"[backtest] {k} settings belong in the [{k}] section")
    bt.setdefault("seed", seed)
    bt.setdefault("alpha", risk.alpha)
    bt.setdefault("horizon_days", ingest.horizon_days)
    if "cvar_grid" in bt:
        bt["cvar_grid"] = tuple(bt["cvar_grid"])
    backtest = _build(BacktestConfig, {**bt, "ctgan": ctgan, "preprocess": pre}, "backtest")
    return RunConfig(data.get("prices"), data.get("yields"), ingest, pre, ctgan, risk, backtest,
                     str(top.get("output_dir", "out")), seed)


def _parse_value(text: str):
    """A TOML scalar/array/inline table, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``section.key=value`` (or ``key=value`` at top level) assignments."""
    doc = json.loads(json.dumps(doc))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = _parse_value(text.strip())
    return doc


def read_toml(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        return tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{p}: {e}") from None


def load_config(path=None, overrides=()) -> tuple[RunConfig, Path | None]:
    """Read ``path`` (or ``$SYNTHALLOC_CONFIG``; else defaults) and apply overrides.

    Relative data paths are resolved against the config file's directory.
    """
    path = path or os.environ.get(CONFIG_ENV) or None
    doc = read_toml(path) if path else {}
    doc = apply_overrides(doc, overrides)
    cfg = from_dict(doc)
    base = Path(path).resolve().parent if path else None
    return cfg, base


def resolve(base: Path | None, p: str | None) -> Path | None:
    if p is None:
        return None
    q = Path(p)
    return q if q.is_absolute() or base is None else base / q


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """Copy of ``cfg`` with the global seed (and the derived nested seeds) replaced."""
    ctgan = replace(cfg.ctgan, seed=seed)
    bt = replace(cfg.backtest, seed=seed, ctgan=ctgan)
    return replace(cfg, seed=seed, ctgan=ctgan, backtest=bt)
