from __future__ import annotations

import json
import shutil
import subprocess

import numpy as np
import pytest

from synthalloc.cli import dispatch, report_tables
from synthalloc.config import CONFIG_ENV, apply_overrides, config_hash, from_dict, load_config
from synthalloc.errors import ConfigError
from synthalloc.market_data import read_matrix_csv

SMALL = ["--set", "ctgan.epochs=2", "--set", "ctgan.embedding_dim=16",
         "--set", "ctgan.generator_dims=[32]", "--set", "ctgan.discriminator_dims=[32]",
         "--set", "ctgan.batch_size=100", "--set", "preprocess.tsne_iter=250"]


# config ------------------------------------------------------------------------

def test_defaults_and_seed_propagation():
    cfg = from_dict({"seed": 7})
    assert cfg.ctgan.seed == 7 and cfg.backtest.seed == 7
    assert cfg.ctgan.learning_rate == 1e-4 and cfg.ctgan.epochs == 1500
    assert cfg.backtest.alpha == cfg.risk.alpha


def test_overrides_parse_toml_values():
    doc = apply_overrides({}, ["ctgan.epochs=300", "backtest.cvar_grid=[0.1, 0.2]",
                               "output_dir=runs/x", "risk.alpha=0.9"])
    assert doc == {"ctgan": {"epochs": 300}, "backtest": {"cvar_grid": [0.1, 0.2]},
                   "output_dir": "runs/x", "risk": {"alpha": 0.9}}
    cfg = from_dict(doc)
    assert cfg.backtest.cvar_grid == (0.1, 0.2) and cfg.backtest.alpha == 0.9
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_unknown_and_misplaced_keys_rejected():
    with pytest.raises(ConfigError):
        from_dict({"ctgan": {"epoch": 3}})
    with pytest.raises(ConfigError):
        from_dict({"colour": 1})
    with pytest.raises(ConfigError):
        from_dict({"backtest": {"ctgan": {"epochs": 3}}})
    with pytest.raises(ConfigError):
        from_dict({"ctgan": {"learning_rate": -1}})


def test_env_var_and_file(tmp_path, monkeypatch):
    p = tmp_path / "run.toml"
    p.write_text('seed = 3\n[data]\nprices = "p.csv"\nyields = "y.csv"\n[ctgan]\nepochs = 5\n')
    monkeypatch.setenv(CONFIG_ENV, str(p))
    cfg, base = load_config()
    assert cfg.seed == 3 and cfg.ctgan.epochs == 5 and base == tmp_path
    cfg2, _ = load_config(None, ["ctgan.epochs=9"])
    assert cfg2.ctgan.epochs == 9
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_hash_ignores_output_location_and_workers():
    a = from_dict({"output_dir": "a", "backtest": {"jobs": 1}}).config_hash()
    b = from_dict({"output_dir": "b", "backtest": {"jobs": 4}}).config_hash()
    c = from_dict({"output_dir": "a", "ctgan": {"epochs": 3}}).config_hash()
    assert a == b != c
    assert config_hash({"x": 1, "output_dir": "q"}) == config_hash({"x": 1})


# command line ------------------------------------------------------------------

def test_usage_errors_exit_2(capsys):
    assert dispatch(["frobnicate"]) == 2
    assert dispatch([]) == 2
    assert dispatch(["optimize"]) == 2   # missing --scenarios
    assert "usage" in capsys.readouterr().err


def test_runtime_errors_exit_1_with_json(tmp_path, capsys):
    code = dispatch(["optimize", "--scenarios", str(tmp_path / "nope.csv")])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "error" in err
    assert dispatch(["report", "--input", str(tmp_path)]) == 1
    assert "summary.json" in capsys.readouterr().err


def test_console_script_usage_exit_code():
    exe = shutil.which("synthalloc")
    if exe is None:
        pytest.skip("console script not installed")
    proc = subprocess.run([exe, "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    assert dispatch(["fixture", "--end", "2010-06-30", "--seed", "1", "--out", str(d)]) == 0
    return d


def test_fixture_and_ingest(fixture_dir, tmp_path):
    first = (fixture_dir / "prices.csv").read_text().splitlines()[0]
    assert first.startswith("# config_hash=") and first.endswith("seed=1")
    out = tmp_path / "scen"
    assert dispatch(["ingest", "--prices", str(fixture_dir / "prices.csv"),
                     "--yields", str(fixture_dir / "yields.csv"), "--out", str(out)]) == 0
    names, X = read_matrix_csv(out / "scenarios.csv")
    fnames, F = read_matrix_csv(out / "scenarios_features.csv")
    assert len(names) == 10 and len(fnames) == 8 and X.shape[0] == F.shape[0]
    assert json.loads((out / "ingest.json").read_text())["scenarios"] == X.shape[0]


def test_inputs_are_not_mutated(fixture_dir, tmp_path):
    before = (fixture_dir / "prices.csv").read_bytes()
    dispatch(["ingest", "--prices", str(fixture_dir / "prices.csv"),
              "--yields", str(fixture_dir / "yields.csv"), "--out", str(tmp_path)])
    assert (fixture_dir / "prices.csv").read_bytes() == before


def test_sdg_train_generate_validate_optimize(fixture_dir, tmp_path):
    data = ["--prices", str(fixture_dir / "prices.csv"), "--yields", str(fixture_dir / "yields.csv")]
    model = tmp_path / "model.json"
    assert dispatch(["sdg", "train", *data, *SMALL, "--start", "2004-01-01",
                     "--end", "2008-12-31", "--out", str(model)]) == 0
    assert json.loads(model.read_text())["provenance"].startswith("config_hash=")

    synth = tmp_path / "synth.csv"
    assert dispatch(["sdg", "generate", "--model", str(model), "--count", "500",
                     "--out", str(synth)]) == 0
    names, S = read_matrix_csv(synth)
    assert S.shape == (500, 10) and np.all(np.isfinite(S))
    assert (tmp_path / "synth_features.csv").exists()

    scen = tmp_path / "scen"
    dispatch(["ingest", *data, "--out", str(scen)])
    val = tmp_path / "val"
    assert dispatch(["validate", "--original", str(scen / "scenarios.csv"),
                     "--original-features", str(scen / "scenarios_features.csv"),
                     "--synthetic", str(synth), "--synthetic-features",
                     str(tmp_path / "synth_features.csv"), "--out", str(val)]) == 0
    rep = json.loads((val / "report.json").read_text())
    assert len(rep["variables"]) == 18 and 0 <= rep["mean_ks"] <= 1

    alloc = tmp_path / "alloc.json"
    assert dispatch(["optimize", "--scenarios", str(synth), "--alpha", "0.95",
                     "--lambda", "0.15", "--lambda", "0.3", "--out", str(alloc)]) == 0
    doc = json.loads(alloc.read_text())
    assert [a["lambda"] for a in doc["allocations"]] == [0.15, 0.3]
    for a in doc["allocations"]:
        assert abs(sum(a["weights"].values()) - 1) < 1e-8
        if a["status"] == "optimal":
            assert a["empirical_cvar"] <= a["lambda"] + 1e-6

    walloc = tmp_path / "walloc.json"
    assert dispatch(["optimize", "--scenarios", str(synth), "--features",
                     str(tmp_path / "synth_features.csv"), "--present-file",
                     str(fixture_dir / "yields.csv"), "--out", str(walloc)]) == 0
    assert json.loads(walloc.read_text())["feature_weighted"] is True


def test_backtest_report_and_determinism(fixture_dir, tmp_path):
    data = ["--prices", str(fixture_dir / "prices.csv"), "--yields", str(fixture_dir / "yields.csv")]
    args = [*data, *SMALL, "--set", "backtest.cvar_grid=[0.1, 0.2]",
            "--set", "backtest.runs_per_level=2", "--set", "backtest.scenario_count=200",
            "--seed", "5"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert dispatch(["backtest", *args, "--out", str(a)]) == 0
    assert dispatch(["backtest", *args, "--jobs", "2", "--out", str(b)]) == 0
    for name in ("metrics.csv", "weights.csv", "solves.csv", "segment_returns.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()

    assert dispatch(["report", "--input", str(a)]) == 0
    summary = json.loads((a / "summary.json").read_text())
    tables = report_tables(summary)
    assert set(tables) == {"annualized_return", "cvar_ex_post", "hh_index", "rotation",
                           "transaction_expense_bp", "net_return"}
    rows = tables["annualized_return"]
    assert [r[0] for r in rows[1:]] == ["0.1", "0.2"]
    ew = rows[0].index("EW")
    assert len({r[ew] for r in rows[1:]}) == 1
    for g, c, n in zip(rows[1:], tables["transaction_expense_bp"][1:], tables["net_return"][1:]):
        for j in range(1, 6):
            assert n[j] == pytest.approx(g[j] - c[j] / 1e4, abs=1e-15)
    assert tables["rotation"][1][ew] == 0.0 and tables["hh_index"][1][ew] == 1.0
    assert (a / "report" / "report.txt").read_text().startswith("# config_hash=")
