import io

import pandas as pd
import pytest
from typer.testing import CliRunner

from main import app
import routers.simulation_routes as simulation_routes_module
from routers.feasibility_routes import FEASIBILITY_COLUMNS
from routers.simulation_routes import PARAMETER_COLUMNS, SWEEP_COLUMNS
from services.experiments.monte_carlo import CSV_COLUMNS

runner = CliRunner(mix_stderr=False)

SMALL = """\
[experiment]
trials = 20
seed = 5

[scenario]
generator = replicated-subgraph
copies = 3
strong_corr = 0.6
weak_corr = 0.1
"""


@pytest.fixture
def config_file(tmp_path):
    def write(text=SMALL, name="run.cfg"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


def invoke(*args):
    return runner.invoke(app, ["--log-level", "WARNING", *args])


def read_csv(text):
    return pd.read_csv(io.StringIO(text))


# simulate

def test_simulate_writes_one_row(config_file):
    result = invoke("simulate", "--config", config_file())
    assert result.exit_code == 0, result.stderr
    frame = read_csv(result.stdout)
    assert list(frame.columns) == CSV_COLUMNS
    assert len(frame) == 1
    assert frame.loc[0, "policy"] == "correlation"
    assert frame.loc[0, "trials"] == 20
    assert frame.loc[0, "n"] == 9


def test_simulate_flags_override_config(config_file):
    result = invoke("simulate", "--config", config_file(), "--policy", "random", "--trials", "7", "--alpha", "0.2")
    assert result.exit_code == 0, result.stderr
    row = read_csv(result.stdout).loc[0]
    assert row["policy"] == "random"
    assert row["trials"] == 7
    assert row["alpha"] == 0.2


def test_simulate_out_file_is_reproducible(config_file, tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for target in (first, second):
        result = invoke("simulate", "--config", config_file(), "--out", str(target))
        assert result.exit_code == 0, result.stderr
        assert result.stdout == ""
    assert first.read_bytes() == second.read_bytes()


def test_simulate_worker_count_does_not_change_output(config_file):
    serial = invoke("simulate", "--config", config_file(), "--workers", "1")
    parallel = invoke("simulate", "--config", config_file(), "--workers", "2")
    assert serial.exit_code == parallel.exit_code == 0
    assert serial.stdout == parallel.stdout


def test_missing_seed_exits_with_usage_error(config_file):
    result = invoke("simulate", "--config", config_file(SMALL.replace("seed = 5\n", "")))
    assert result.exit_code == 2
    assert "experiment.seed" in result.stderr
    assert result.stdout == ""


def test_seed_flag_fills_missing_seed(config_file):
    result = invoke("simulate", "--config", config_file(SMALL.replace("seed = 5\n", "")), "--seed", "9")
    assert result.exit_code == 0, result.stderr
    assert read_csv(result.stdout).loc[0, "seed"] == 9


def test_bad_values_exit_with_usage_error(config_file):
    result = invoke("simulate", "--config", config_file(), "--policy", "greedy", "--alpha", "1.5")
    assert result.exit_code == 2
    assert "experiment.policy" in result.stderr
    assert "experiment.alpha" in result.stderr


def test_correlation_rule_on_cyclic_models_falls_back(config_file, tmp_path):
    triangle = "n = 3\n[covariance]\n1 0.3 0.3\n0.3 1 0.3\n0.3 0.3 1\n"
    identity = "n = 3\n[covariance]\n1 0 0\n0 1 0\n0 0 1\n"
    (tmp_path / "m0.txt").write_text(identity)
    (tmp_path / "m1.txt").write_text(triangle)
    text = "[experiment]\nseed = 1\ntrials = 5\n[scenario]\nmodel0 = m0.txt\nmodel1 = m1.txt\n"
    result = invoke("simulate", "--config", config_file(text))
    assert result.exit_code == 0, result.stderr
    row = read_csv(result.stdout).loc[0]
    assert row["n"] == 3
    assert row["avg_delay_h0"] <= 3


def test_unexpected_failure_exits_with_one(config_file, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("disk on fire")
    monkeypatch.setattr(simulation_routes_module, "monte_carlo", broken)
    result = invoke("simulate", "--config", config_file())
    assert result.exit_code == 1
    assert "disk on fire" in result.stderr


def test_missing_config_file(tmp_path):
    result = invoke("simulate", "--config", str(tmp_path / "nope.cfg"))
    assert result.exit_code == 2


def test_bad_model_file_names_file_and_line(config_file, tmp_path):
    (tmp_path / "m0.txt").write_text("n = 2\n[covariance]\n1 0\n0 1\n")
    (tmp_path / "m1.txt").write_text("n = 2\n[tree]\n0 inf 0.5\n")
    text = "[experiment]\nseed = 1\ntrials = 5\n[scenario]\nmodel0 = m0.txt\nmodel1 = m1.txt\n"
    result = invoke("simulate", "--config", config_file(text))
    assert result.exit_code == 2
    assert "m1.txt:3: tree: expected 'i j rho'" in result.stderr


# compare-policies

def test_compare_policies_rows(config_file):
    result = invoke("compare-policies", "--config", config_file())
    assert result.exit_code == 0, result.stderr
    frame = read_csv(result.stdout)
    assert list(frame.columns) == CSV_COLUMNS
    assert list(frame["policy"]) == ["correlation", "chernoff", "random"]
    assert set(frame["seed"]) == {5}


def test_compare_policies_with_np_baseline(config_file):
    text = SMALL + "\n[compare]\npolicies = chernoff\nnp_sample_size = 4\nnp_calibration_trials = 200\n"
    first = invoke("compare-policies", "--config", config_file(text))
    second = invoke("compare-policies", "--config", config_file(text))
    assert first.exit_code == 0, first.stderr
    assert first.stdout == second.stdout
    frame = read_csv(first.stdout)
    assert list(frame["policy"]) == ["chernoff", "np"]
    assert frame.loc[1, "avg_delay_h0"] == 4


# sweep

def test_sweep_over_budgets(config_file):
    text = SMALL + "\n[sweep]\nalphas = 0.3, 0.2, 0.1, 0.05\n"
    result = invoke("sweep", "--config", config_file(text))
    assert result.exit_code == 0, result.stderr
    frame = read_csv(result.stdout)
    assert list(frame.columns) == SWEEP_COLUMNS
    assert list(frame["alpha"]) == [0.3, 0.2, 0.1, 0.05]
    assert (frame["alpha"] == frame["beta"]).all()
    # same seeds, tighter band: no trial stops earlier
    for column in ("avg_delay_h0", "avg_delay_h1"):
        delays = list(frame[column])
        assert delays == sorted(delays), column


def test_sweep_over_parameter(config_file):
    text = SMALL + "\n[sweep]\nparameter = strong_corr\nvalues = 0.3, 0.6\n"
    result = invoke("sweep", "--config", config_file(text))
    assert result.exit_code == 0, result.stderr
    frame = read_csv(result.stdout)
    assert list(frame.columns) == PARAMETER_COLUMNS
    assert list(frame["value"]) == [0.3, 0.6]
    assert set(frame["parameter"]) == {"strong_corr"}


def test_sweep_needs_section(config_file):
    result = invoke("sweep", "--config", config_file())
    assert result.exit_code == 2
    assert "[sweep]" in result.stderr


def test_sweep_parameter_must_belong_to_generator(config_file):
    text = SMALL + "\n[sweep]\nparameter = sigma_A\nvalues = 0.5\n"
    result = invoke("sweep", "--config", config_file(text))
    assert result.exit_code == 2
    assert "sweep.parameter" in result.stderr


# feasibility

def test_feasibility_of_identical_models(config_file, tmp_path):
    identity = "n = 2\n[covariance]\n1 0\n0 1\n"
    (tmp_path / "m0.txt").write_text(identity)
    (tmp_path / "m1.txt").write_text(identity)
    text = "[experiment]\nseed = 1\n[scenario]\nmodel0 = m0.txt\nmodel1 = m1.txt\n"
    result = invoke("feasibility", "--config", config_file(text))
    assert result.exit_code == 0, result.stderr
    frame = read_csv(result.stdout)
    assert list(frame.columns) == FEASIBILITY_COLUMNS
    assert frame.loc[0, "bhattacharyya"] == pytest.approx(1.0)
    assert frame.loc[0, "lower_bound"] == 0


def test_feasibility_of_generated_scenario(config_file):
    result = invoke("feasibility", "--config", config_file(), "--alpha", "0.05", "--beta", "0.05")
    assert result.exit_code == 0, result.stderr
    row = read_csv(result.stdout).loc[0]
    assert 0 < row["bhattacharyya"] < 1
    assert row["lower_bound"] >= 0
    assert row["alpha"] == 0.05
