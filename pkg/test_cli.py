"""
Tests for the run / sweep-beta / analyze commands and their output files
"""
import importlib
import json
import sys
from pathlib import Path

import pytest

# Add current directory to path
sys.path.append(str(Path(__file__).parent))

import config as settings_module
import main
import utils.logger
from models.schemas import ExperimentConfig
from services.environment import sinusoidal_instance
from services.experiment_runner import load_experiment_config, save_experiment_config
from utils.csv_io import GRID_HEADER, read_csv, read_grid_csv, read_json, read_path_csv, write_grid_csv

CONFIG_DIR = Path(__file__).parent / "configs"


def _write_config(tmp_path, **overrides):
    config = {
        "name": "cli-small",
        "instance": {"kind": "sinusoidal"},
        "budget": {"kind": "constant", "v": 3.0},
        "horizons": [200, 400],
        "policy": {"kind": "rexp3"},
        "replications": 6,
        "master_seed": 99,
        "estimator": "mean_gap",
        "output_dir": str(tmp_path / "out"),
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return str(path)


def _run(*argv):
    return main.main(["--workers", "1", "--no-progress", "--log-level", "WARNING", *argv])


def _snapshot(directory):
    """File contents by relative path; summaries without the wall clock"""
    files = {}
    for path in sorted(Path(directory).rglob("*")):
        if not path.is_file():
            continue
        key = str(path.relative_to(directory))
        if path.name.startswith("summary_"):
            payload = json.loads(path.read_text())
            payload.pop("wall_time_seconds")
            files[key] = payload
        else:
            files[key] = path.read_bytes()
    return files


@pytest.fixture(autouse=True)
def _clean_environment(monkeypatch):
    for name in ("REXP3_OUTPUT_DIR", "REXP3_WORKERS", "REXP3_LOG_FILE"):
        monkeypatch.delenv(name, raising=False)


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(p.name for p in CONFIG_DIR.glob("*.json")))
def test_shipped_configs_are_valid(name):
    config = load_experiment_config(str(CONFIG_DIR / name))
    assert config.horizons == sorted(config.horizons)


def test_config_round_trip(tmp_path):
    config = load_experiment_config(str(CONFIG_DIR / "stage_two_desk.json"))
    save_experiment_config(config, str(tmp_path / "copy.json"))
    again = load_experiment_config(str(tmp_path / "copy.json"))
    assert again == config
    assert ExperimentConfig.model_validate_json(again.model_dump_json()) == config


def test_desk_configs_use_desk_grid():
    config = load_experiment_config(str(CONFIG_DIR / "stage_one_sinusoidal_desk.json"))
    assert config.horizons == [2000, 4000, 8000, 16000]
    assert config.replications == 1000
    assert config.budget.resolve(2000) == 3.0


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def test_run_writes_every_output(tmp_path, capsys):
    assert _run("run", "--config", _write_config(tmp_path)) == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in out.glob("curve_T*.csv")) == ["curve_T200.csv", "curve_T400.csv"]
    assert len(list(out.glob("performance_T*.csv"))) == 2
    assert len(list(out.glob("summary_T*.json"))) == 2
    header, rows, provenance = read_csv(str(out / "grid.csv"))
    assert header == GRID_HEADER
    assert len(rows) == 2
    assert provenance["config"]["name"] == "cli-small"
    assert [r["T"] for r in provenance["resolved"]] == [200, 400]
    assert all(r["delta_T"] and r["gamma"] for r in provenance["resolved"])
    assert "final_regret" in capsys.readouterr().out


def test_summary_fields(tmp_path):
    assert _run("run", "--config", _write_config(tmp_path)) == 0
    summary = read_json(str(tmp_path / "out" / "summary_T400.json"))
    for key in ("T", "K", "V_T", "policy", "delta_T", "gamma", "R", "master_seed", "final_regret",
                "final_regret_stderr", "wall_time_seconds", "estimator", "generator", "budget_spec",
                "theory_lower", "theory_upper", "batched_upper", "static_oracle_gap", "config"):
        assert key in summary
    assert summary["T"] == 400 and summary["R"] == 6 and summary["policy"] == "rexp3"
    assert summary["final_regret"] <= summary["theory_upper"]
    curve_header, curve_rows, curve_provenance = read_csv(str(tmp_path / "out" / "curve_T400.csv"))
    assert curve_header == ["epoch", "mean_cum_regret", "std_err", "mean_policy_reward", "mean_oracle_reward"]
    assert float(curve_rows[-1][1][1]) == summary["final_regret"]
    assert curve_provenance["delta_T"] == summary["delta_T"]
    assert curve_provenance["V_T"] == 3.0


def test_rerun_is_bitwise_identical(tmp_path):
    config = _write_config(tmp_path)
    assert _run("run", "--config", config) == 0
    first = _snapshot(tmp_path / "out")
    assert _run("run", "--config", config) == 0
    assert _snapshot(tmp_path / "out") == first


def test_budget_equal_to_horizon_rejected(tmp_path, capsys):
    config = _write_config(tmp_path, budget={"kind": "constant", "v": 400.0})
    assert _run("run", "--config", config) == 2
    assert "budget" in capsys.readouterr().err


def test_unsorted_horizons_name_field(tmp_path, capsys):
    assert _run("run", "--config", _write_config(tmp_path, horizons=[400, 200])) == 2
    assert "horizons" in capsys.readouterr().err


def test_unknown_policy_names_field(tmp_path, capsys):
    assert _run("run", "--config", _write_config(tmp_path, policy={"kind": "ucb"})) == 2
    assert "policy" in capsys.readouterr().err


def test_bad_json_is_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert _run("run", "--config", str(path)) == 2


def test_missing_config_is_config_error(tmp_path):
    assert _run("run", "--config", str(tmp_path / "absent.json")) == 2


def test_run_rejects_beta_grid(tmp_path, capsys):
    config = _write_config(tmp_path, budget={"kind": "power", "coefficient": 3.0, "exponent": 0.0},
                           beta_grid=[0.2])
    assert _run("run", "--config", config) == 2
    assert "beta_grid" in capsys.readouterr().err


def test_worst_case_above_range_is_config_error(tmp_path, capsys):
    config = _write_config(tmp_path, instance={"kind": "worst_case"}, allow_budget_above_range=True)
    assert _run("run", "--config", config) == 2
    assert "allow_budget_above_range" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_deterministic_instance_writes_its_path(tmp_path):
    assert _run("run", "--config", _write_config(tmp_path)) == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in out.glob("path_T*.csv")) == ["path_T200.csv", "path_T400.csv"]
    path = read_path_csv(str(out / "path_T200.csv"))
    assert (path.means == sinusoidal_instance(200, 3.0).path.means).all()
    _, _, provenance = read_csv(str(out / "path_T200.csv"))
    assert provenance["T"] == 200 and provenance["V_T"] == 3.0


def test_worst_case_writes_no_path(tmp_path):
    config = _write_config(tmp_path, instance={"kind": "worst_case"}, horizons=[200])
    assert _run("run", "--config", config) == 0
    assert not list((tmp_path / "out").glob("path_T*.csv"))


def test_simulation_failure_is_runtime_error(tmp_path):
    # V_T = 2 on the compressed family overshoots the budget at the switch
    config = _write_config(tmp_path, instance={"kind": "compressed"}, horizons=[3000],
                           budget={"kind": "constant", "v": 2.0}, replications=1)
    assert _run("run", "--config", config) == 3


# ---------------------------------------------------------------------------
# overrides
# ---------------------------------------------------------------------------

def test_environment_overrides_config(tmp_path, monkeypatch):
    monkeypatch.setenv("REXP3_OUTPUT_DIR", str(tmp_path / "from_env"))
    assert _run("run", "--config", _write_config(tmp_path)) == 0
    assert (tmp_path / "from_env" / "grid.csv").exists()
    assert not (tmp_path / "out").exists()


def test_flag_overrides_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("REXP3_OUTPUT_DIR", str(tmp_path / "from_env"))
    flag_dir = str(tmp_path / "from_flag")
    assert main.main(["--output-dir", flag_dir, "--seed", "5", "--no-progress",
                      "run", "--config", _write_config(tmp_path)]) == 0
    assert (tmp_path / "from_flag" / "grid.csv").exists()
    assert not (tmp_path / "from_env").exists()
    assert read_json(str(tmp_path / "from_flag" / "summary_T200.json"))["master_seed"] == 5


def test_seed_changes_results(tmp_path):
    config = _write_config(tmp_path)
    main.main(["--output-dir", str(tmp_path / "a"), "--no-progress", "run", "--config", config])
    main.main(["--output-dir", str(tmp_path / "b"), "--seed", "100", "--no-progress", "run", "--config", config])
    a = read_json(str(tmp_path / "a" / "summary_T400.json"))["final_regret"]
    b = read_json(str(tmp_path / "b" / "summary_T400.json"))["final_regret"]
    assert a != b


def test_outputs_do_not_depend_on_worker_count(tmp_path):
    config = _write_config(tmp_path)
    out = str(tmp_path / "out")
    assert main.main(["--workers", "1", "--no-progress", "run", "--config", config]) == 0
    single = _snapshot(out)
    assert main.main(["--workers", "2", "--no-progress", "run", "--config", config]) == 0
    assert _snapshot(out) == single
    assert read_json(str(tmp_path / "out" / "config.json"))["workers"] is None
    assert "workers" not in read_json(str(tmp_path / "out" / "summary_T200.json"))["config"]["config"]


def test_bad_worker_environment_is_config_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("REXP3_WORKERS", "abc")
    # the bad value must not break importing the entry point
    for module in (settings_module, utils.logger, main):
        importlib.reload(module)
    assert _run("run", "--config", _write_config(tmp_path)) == 2
    assert "REXP3_WORKERS" in capsys.readouterr().err
    monkeypatch.setenv("REXP3_WORKERS", "0")
    assert _run("run", "--config", _write_config(tmp_path)) == 2


def test_bad_worker_flag_exits_with_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main.main(["--workers", "0", "run", "--config", _write_config(tmp_path)])
    assert excinfo.value.code == 2


# ---------------------------------------------------------------------------
# sweep-beta
# ---------------------------------------------------------------------------

def test_single_beta_reports_na(tmp_path, capsys):
    config = _write_config(tmp_path, budget={"kind": "power", "coefficient": 3.0, "exponent": 0.0},
                           beta_grid=[0.2])
    assert _run("sweep-beta", "--config", config) == 0
    out = tmp_path / "out"
    summary = read_json(str(out / "stage_two_summary.json"))
    assert summary["slope_of_slopes"] == "n/a"
    assert len(summary["rows"]) == 1
    assert (out / "beta_0.2" / "grid.csv").exists()
    _, rows, _ = read_csv(str(out / "slope_table.csv"))
    assert len(rows) == 1
    assert "n/a" in capsys.readouterr().out


def test_sweep_beta_table(tmp_path):
    config = _write_config(tmp_path, budget={"kind": "power", "coefficient": 3.0, "exponent": 0.0},
                           beta_grid=[0.5, 0.0])
    assert _run("sweep-beta", "--config", config) == 0
    summary = read_json(str(tmp_path / "out" / "stage_two_summary.json"))
    assert [row["beta"] for row in summary["rows"]] == [0.0, 0.5]
    assert isinstance(summary["slope_of_slopes"], float)
    text = (tmp_path / "out" / "slope_table.txt").read_text()
    assert text.startswith("# provenance: ")
    assert "Estimated slope" in text
    provenance = json.loads(text.splitlines()[0][len("# provenance: "):])
    assert provenance == summary["provenance"]
    _, _, table_provenance = read_csv(str(tmp_path / "out" / "slope_table.csv"))
    assert table_provenance == summary["provenance"]
    resolved = summary["provenance"]["resolved"]
    assert sorted(resolved) == ["0", "0.5"]
    for beta, points in resolved.items():
        assert [p["T"] for p in points] == [200, 400]
        for p in points:
            assert p["V_T"] == pytest.approx(3.0 * p["T"] ** float(beta))
            assert p["delta_T"] >= 1 and 0 < p["gamma"] <= 1


def test_beta_of_one_rejected(tmp_path, capsys):
    config = _write_config(tmp_path, budget={"kind": "power", "coefficient": 3.0, "exponent": 0.0},
                           beta_grid=[0.0, 1.0])
    assert _run("sweep-beta", "--config", config) == 2
    assert "beta_grid" in capsys.readouterr().err


def test_sweep_beta_needs_grid(tmp_path):
    assert _run("sweep-beta", "--config", _write_config(tmp_path)) == 2


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def test_analyze_exact_power_law(tmp_path, capsys):
    grid = str(tmp_path / "grid.csv")
    write_grid_csv([(T, 4.0 * T ** (2.0 / 3.0), 0.1, 0.0, 0.0) for T in (2000, 4000, 8000, 16000)], grid)
    assert _run("analyze", "--input", grid) == 0
    report = read_json(str(tmp_path / "grid_analysis.json"))
    assert report["slope"] == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert report["r_squared"] == pytest.approx(1.0, abs=1e-12)
    assert "slope:" in capsys.readouterr().out


def test_analyze_reproduces_recorded_fit(tmp_path):
    assert _run("run", "--config", _write_config(tmp_path, horizons=[200, 400, 800])) == 0
    out = tmp_path / "out"
    recorded = read_json(str(out / "grid_fit.json"))
    assert _run("analyze", "--input", str(out / "grid.csv"), "--output", str(tmp_path / "report.json")) == 0
    report = read_json(str(tmp_path / "report.json"))
    for key in ("slope", "intercept", "r_squared", "residual_max", "points", "n_points"):
        assert report[key] == recorded[key]
    summaries = [read_json(str(out / f"summary_T{T}.json"))["final_regret"] for T in (200, 400, 800)]
    assert [regret for _, regret, _ in read_grid_csv(str(out / "grid.csv"))] == summaries


def test_analyze_slope_table(tmp_path):
    config = _write_config(tmp_path, budget={"kind": "power", "coefficient": 3.0, "exponent": 0.0},
                           beta_grid=[0.0, 0.5])
    assert _run("sweep-beta", "--config", config) == 0
    out = tmp_path / "out"
    recorded = read_json(str(out / "stage_two_summary.json"))["slope_of_slopes"]
    assert _run("analyze", "--input", str(out / "slope_table.csv")) == 0
    assert read_json(str(out / "slope_table_analysis.json"))["slope_of_slopes"] == recorded


def test_analyze_empty_csv(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert _run("analyze", "--input", str(empty)) == 3
    assert "line 1" in capsys.readouterr().err


def test_analyze_names_malformed_line(tmp_path, capsys):
    bad = tmp_path / "grid.csv"
    bad.write_text("T,final_regret,std_err,theory_lower,theory_upper\n"
                   "2000,10.5,0.1,1,2\n"
                   "4000,abc,0.1,1,2\n")
    assert _run("analyze", "--input", str(bad)) == 3
    assert "line 3" in capsys.readouterr().err


def test_analyze_published_table(capsys):
    assert _run("analyze", "--published") == 0
    out = capsys.readouterr().out
    assert "0.6997" in out and "slope of slopes: 0.34" in out


def test_analyze_needs_input():
    assert _run("analyze") == 2
