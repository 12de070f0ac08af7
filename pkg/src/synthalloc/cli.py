"""Command-line front end.

    synthalloc fixture   --kind default --out data/
    synthalloc ingest    --prices p.csv --yields y.csv --out scen/
    synthalloc sdg train --prices p.csv --yields y.csv --out model.json
    synthalloc sdg generate --model model.json --count 500 --out synth.csv
    synthalloc validate  --original o.csv --synthetic s.csv --out val/
    synthalloc optimize  --scenarios s.csv --alpha 0.95 --lambda 0.15
    synthalloc backtest  --config run.toml --jobs 4
    synthalloc report    --input results/

Every subcommand accepts ``--config`` (default ``$SYNTHALLOC_CONFIG``) and
``--set section.key=value`` overrides. Exit codes: 0 ok, 1 runtime failure
(error JSON on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import STRATEGY_KINDS, BacktestResult, run_backtest
from .config import RunConfig, load_config, resolve, with_seed
from .cvar import RiskSpec, density_from_features, solve_allocation, uniform_density
from .errors import ConfigError, DataError, SchemaError, ShapeError, SynthAllocError
from .fixture import default_spec, dominance_spec, generate_fixture, write_fixture
from .market_data import (
    build_scenario_table,
    load_market_csv,
    read_matrix_csv,
    write_matrix_csv,
    write_scenario_csv,
)
from .preprocess import zscore_fit
from .sdg import generate_synthetic, load_model, save_model, train_sdg_pipeline
from .validate import validation_report

log = logging.getLogger("synthalloc")

FIXTURES = {"default": default_spec, "dominance": dominance_spec}
REPORT_TABLES = (
    ("annualized_return", "Annualized return", 100.0, "%"),
    ("cvar_ex_post", "CVaR ex post", 100.0, "%"),
    ("hh_index", "Complementary HH index", 1.0, ""),
    ("rotation", "Rotation (% per year)", 1.0, ""),
    ("transaction_expense_bp", "Transaction expense (bp per year)", 1.0, ""),
    ("net_return", "Net annualized return", 100.0, "%"),
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# helpers -----------------------------------------------------------------------

def _config(args) -> tuple[RunConfig, Path | None]:
    cfg, base = load_config(args.config, args.set)
    if getattr(args, "seed", None) is not None:
        cfg = with_seed(cfg, args.seed)
    return cfg, base


def _out(cfg: RunConfig, args, default_name: str | None = None) -> Path:
    if args.out:
        return Path(args.out)
    base = Path(cfg.output_dir)
    return base / default_name if default_name else base


def _market(cfg: RunConfig, base, args):
    prices = args.prices or resolve(base, cfg.prices)
    yields = args.yields or resolve(base, cfg.yields)
    if prices is None or yields is None:
        raise ConfigError("price and yield files are required (--prices/--yields or [data])")
    return load_market_csv(prices, yields, cfg.ingest)


def _parse_floats(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise DataError(f"could not parse {text!r} as comma-separated numbers") from None


def _say(msg: str) -> None:
    print(msg, flush=True)


# subcommands -------------------------------------------------------------------

def cmd_fixture(args) -> int:
    cfg, _ = _config(args)
    spec = FIXTURES[args.kind](cfg.seed)
    if args.start:
        spec.start = args.start
    if args.end:
        spec.end = args.end
    data = generate_fixture(spec)
    out = _out(cfg, args)
    write_fixture(data, out, cfg.provenance(command="fixture", kind=args.kind,
                                            start=spec.start, end=spec.end))
    _say(f"fixture {args.kind}: {len(data.prices)} dates x {data.prices.n_assets} assets, "
         f"{data.features.n_features} tenors -> {out}")
    return 0


def cmd_ingest(args) -> int:
    cfg, base = _config(args)
    prices, feats = _market(cfg, base, args)
    table = build_scenario_table(prices, feats, cfg.ingest.horizon_days)
    out = _out(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    header = cfg.provenance(command="ingest")
    write_scenario_csv(table, out / "scenarios.csv", out / "scenarios_features.csv", header)
    summary = {"dates": len(prices), "dropped_rows": prices.dropped_rows,
               "scenarios": table.m, "assets": list(prices.tickers),
               "tenors": list(feats.tenors), "horizon_days": cfg.ingest.horizon_days,
               "provenance": header}
    (out / "ingest.json").write_text(json.dumps(summary, indent=2))
    _say(f"ingest: {len(prices)} dates ({prices.dropped_rows} dropped), "
         f"{table.m} scenarios -> {out}")
    return 0


def cmd_sdg_train(args) -> int:
    cfg, base = _config(args)
    prices, feats = _market(cfg, base, args)
    if args.start or args.end:
        start = args.start or str(prices.dates[0])
        end = args.end or str(prices.dates[-1])
        prices, feats = prices.between(start, end), feats.between(start, end)
    table = build_scenario_table(prices, feats, cfg.ingest.horizon_days)
    model = train_sdg_pipeline(table, cfg.ctgan, cfg.preprocess)
    out = _out(cfg, args, "model.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out, cfg.provenance(command="sdg train", start=args.start, end=args.end))
    last = model.loss_history[-1] if model.loss_history else {}
    _say(f"sdg train: {table.m} samples, k={model.clusters.k} clusters, "
         f"{cfg.ctgan.epochs} epochs, final losses {json.dumps(last)} -> {out}")
    return 0


def cmd_sdg_generate(args) -> int:
    cfg, _ = _config(args)
    model = load_model(args.model)
    synth = generate_synthetic(model, args.count, np.random.default_rng(cfg.seed),
                               args.condition_sampling)
    out = _out(cfg, args, "synthetic.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    feat_path = out.with_name(out.stem + "_features" + out.suffix)
    header = cfg.provenance(command="sdg generate", model=Path(args.model).name,
                            count=args.count, condition_sampling=args.condition_sampling)
    lead = {"cluster": synth.cluster_ids.astype(int)}
    write_matrix_csv(out, synth.tickers, synth.R_s.T, lead, header)
    write_matrix_csv(feat_path, synth.tenors, synth.F_s.T, lead, header)
    counts = np.bincount(synth.cluster_ids, minlength=model.clusters.k)
    _say(f"sdg generate: {synth.m} scenarios (per cluster {counts.tolist()}) -> {out}, "
         f"{feat_path}")
    return 0


def _joined(returns_path, features_path):
    names, X = read_matrix_csv(returns_path)
    if features_path:
        fnames, F = read_matrix_csv(features_path)
        if F.shape[0] != X.shape[0]:
            raise ShapeError(f"{features_path} has {F.shape[0]} rows, "
                             f"{returns_path} has {X.shape[0]}")
        names, X = names + fnames, np.hstack([X, F])
    return names, X


def cmd_validate(args) -> int:
    cfg, _ = _config(args)
    names_o, A = _joined(args.original, args.original_features)
    names_s, B = _joined(args.synthetic, args.synthetic_features)
    if names_o != names_s:
        raise SchemaError(f"variables differ: {names_o} vs {names_s}", column=None)
    out = _out(cfg, args, "validation")
    rep = validation_report(A, B, names_o, out, args.pairplot_rows, cfg.seed,
                            cfg.provenance(command="validate"))
    _say(f"validate: mean KS-complement {rep.mean_ks:.4f}, min correlation similarity "
         f"{rep.min_corr_sim:.4f} over {len(names_o)} variables -> {out}")
    return 0


def cmd_optimize(args) -> int:
    cfg, _ = _config(args)
    tickers, S = read_matrix_csv(args.scenarios)
    R = S.T
    alpha = args.alpha if args.alpha is not None else cfg.risk.alpha
    lams = args.lam or [cfg.risk.lam]
    density = uniform_density(R.shape[1])
    present = None
    if args.features:
        _, F = read_matrix_csv(args.features)
        if F.shape[0] != R.shape[1]:
            raise ShapeError(f"{args.features} has {F.shape[0]} rows for {R.shape[1]} scenarios")
        if args.present:
            present = _parse_floats(args.present)
        elif args.present_file:
            _, P = read_matrix_csv(args.present_file)
            present = P[-1]
        else:
            raise ConfigError("--features needs the present-day row (--present or "
                              "--present-file)")
        density = density_from_features(F.T, present, zscore_fit(F))
    elif args.present or args.present_file:
        raise ConfigError("a present-day feature row needs --features")

    results = []
    for lam in lams:
        a = solve_allocation(R, density, RiskSpec(alpha, lam))
        d = a.to_dict(tickers)
        d.update({"alpha": alpha, "lambda": lam})
        results.append(d)
    doc = {"provenance": cfg.provenance(command="optimize", alpha=alpha, lams=lams),
           "scenarios": R.shape[1], "feature_weighted": present is not None,
           "allocations": results}
    out = _out(cfg, args, "allocation.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2))
    status = ", ".join(f"lambda={r['lambda']:g}: {r['status']} "
                       f"E={r['objective']:.4f} CVaR={r['empirical_cvar']:.4f}"
                       for r in results)
    _say(f"optimize: {status} -> {out}")
    return 0


def cmd_backtest(args) -> int:
    cfg, base = _config(args)
    if args.jobs is not None:
        cfg.backtest.jobs = args.jobs
    prices, feats = _market(cfg, base, args)
    strategies = args.strategies.split(",") if args.strategies else None
    res = run_backtest(prices, feats, cfg.backtest, strategies)
    out = _out(cfg, args)
    res.write(out, cfg.provenance(command="backtest", strategies=strategies))
    ew = [r.metrics["annualized_return"] for (k, _, _), r in res.runs.items() if k == "EW"]
    _say(f"backtest: {len(res.segments)} segments, {len(res.runs)} runs in "
         f"{res.elapsed:.0f}s (EW return {100 * ew[0]:.2f}%) -> {out}" if ew else
         f"backtest: {len(res.segments)} segments, {len(res.runs)} runs in "
         f"{res.elapsed:.0f}s -> {out}")
    return 0


def report_tables(summary: dict) -> dict[str, list[list]]:
    """metric -> rows ``[lambda, mean per strategy..., std per strategy...]``."""
    tables = summary["tables"]
    out = {}
    for metric, *_ in REPORT_TABLES:
        by_lam = tables[metric]
        lams = sorted(by_lam, key=float)
        kinds = [k for k in STRATEGY_KINDS if k in by_lam[lams[0]]]
        rows = [["lambda", *kinds, *(f"{k} std" for k in kinds)]]
        for lam in lams:
            cell = by_lam[lam]
            rows.append([lam, *(cell[k]["mean"] for k in kinds),
                         *(cell[k]["std"] for k in kinds)])
        out[metric] = rows
    return out


def cmd_report(args) -> int:
    cfg, _ = _config(args)
    src = Path(args.input)
    needed = [src / "summary.json", src / "metrics.csv"]
    missing = [str(p) for p in needed if not p.exists()]
    if missing:
        raise DataError(f"missing backtest outputs: {', '.join(missing)}")
    summary = json.loads(needed[0].read_text())
    tables = report_tables(summary)
    out = Path(args.out) if args.out else src / "report"
    out.mkdir(parents=True, exist_ok=True)
    header = summary.get("provenance")
    text = [f"# {header}" if header else "# backtest report", ""]
    for metric, title, scale, unit in REPORT_TABLES:
        rows = tables[metric]
        with open(out / f"{metric}.csv", "w", newline="") as f:
            if header:
                f.write(f"# {header}\n")
            w = csv.writer(f)
            w.writerow(rows[0])
            for r in rows[1:]:
                w.writerow([r[0], *(repr(float(v)) for v in r[1:])])
        kinds = [k for k in rows[0][1:] if not k.endswith(" std")]
        text.append(title)
        text.append("  Lambda  " + "".join(f"{k:>10}" for k in kinds))
        for r in rows[1:]:
            cells = "".join(f"{scale * v:>9.2f}{unit:1}" for v in r[1:1 + len(kinds)])
            text.append(f"  {100 * float(r[0]):5.1f}%  {cells}")
        text.append("")
    (out / "report.txt").write_text("\n".join(text))
    _say(f"report: {len(REPORT_TABLES)} tables over {len(tables['rotation']) - 1} "
         f"CVaR levels -> {out}")
    return 0


# parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run config (default: $SYNTHALLOC_CONFIG)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. ctgan.epochs=300")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out", help="output path (default under output_dir)")
    common.add_argument("-v", "--verbose", action="store_true")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--prices", help="prices CSV (date,<ticker>...)")
    data.add_argument("--yields", help="yields CSV (date,<tenor>...)")

    ap = _Parser(prog="synthalloc", description="Synthetic scenarios and CVaR allocation")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("fixture", parents=[common], help="write deterministic market data")
    p.add_argument("--kind", choices=sorted(FIXTURES), default="default")
    p.add_argument("--start")
    p.add_argument("--end")
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("ingest", parents=[common, data], help="build the scenario table")
    p.set_defaults(func=cmd_ingest)

    sdg = sub.add_parser("sdg", help="train or sample the synthetic data generator")
    sdg_sub = sdg.add_subparsers(dest="sdg_command", parser_class=_Parser, metavar="ACTION")
    p = sdg_sub.add_parser("train", parents=[common, data])
    p.add_argument("--start", help="first date of the training window")
    p.add_argument("--end", help="last date of the training window")
    p.set_defaults(func=cmd_sdg_train)
    p = sdg_sub.add_parser("generate", parents=[common])
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--condition-sampling", choices=("log", "empirical"), default="log")
    p.set_defaults(func=cmd_sdg_generate)

    p = sub.add_parser("validate", parents=[common], help="compare original and synthetic")
    p.add_argument("--original", required=True)
    p.add_argument("--original-features")
    p.add_argument("--synthetic", required=True)
    p.add_argument("--synthetic-features")
    p.add_argument("--pairplot-rows", type=int, default=500)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("optimize", parents=[common], help="solve the CVaR allocation LP")
    p.add_argument("--scenarios", required=True, help="scenario returns CSV, one row each")
    p.add_argument("--features", help="scenario features CSV aligned with --scenarios")
    p.add_argument("--present", help="present-day features, comma separated")
    p.add_argument("--present-file", help="CSV whose last row is the present-day features")
    p.add_argument("--alpha", type=float)
    p.add_argument("--lambda", dest="lam", type=float, action="append")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("backtest", parents=[common, data], help="run the rolling backtest")
    p.add_argument("--jobs", type=int)
    p.add_argument("--strategies", help=f"comma-separated subset of {','.join(STRATEGY_KINDS)}")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("report", parents=[common], help="tables from backtest outputs")
    p.add_argument("--input", required=True, help="backtest output directory")
    p.set_defaults(func=cmd_report)
    return ap


def dispatch(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 2
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    if getattr(args, "func", None) is None:
        ap.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SynthAllocError as e:
        print(json.dumps(e.to_dict()), file=sys.stderr)
    except (OSError, ValueError, KeyError) as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
    return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
