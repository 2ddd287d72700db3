import json

import pytest
from typer.testing import CliRunner

import hamlaw.utilities.data_models as models
import hamlaw.utilities.experiments as experiments
import hamlaw.utilities.hypergraph as hypergraph
from hamlaw.configs.config import configure_logging
from hamlaw.main import app

runner = CliRunner()


@pytest.fixture(autouse=True)
def restore_logging():
    yield
    configure_logging()


def invoke_json(*args: str) -> dict:
    result = runner.invoke(app, [*args, "--json"])
    assert result.exit_code == 0, result.output
    return json.loads(result.stdout)


def test_constants():
    data = invoke_json("constants", "--n", "7", "--r", "3", "--ell", "2")
    assert data["n_c"] == "360"
    assert data["aut_cycle"] == "14"
    assert data["A"]["values"][:3] == ["6", "4", "2"]


def test_constants_rejects_bad_geometry():
    result = runner.invoke(app, ["constants", "--n", "7", "--r", "3", "--ell", "3"])
    assert result.exit_code == 2


def test_theory():
    data = invoke_json(
        "theory", "--n", "20", "--r", "3", "--ell", "2", "--c", "1", "--K", "8"
    )
    assert data["p_star"] == pytest.approx(0.1359140914)
    assert data["c_n"] == pytest.approx(1.0)
    assert data["sigma2"] == pytest.approx(2.9057512820)
    assert data["K"] == 8


def test_theory_needs_one_density():
    args = ["theory", "--n", "20", "--r", "3", "--ell", "2", "--p", "0.1", "--c", "1"]
    assert runner.invoke(app, args).exit_code == 2


def test_sample_to_stdout_matches_library():
    result = runner.invoke(
        app, ["sample", "--n", "7", "--r", "3", "--ell", "2", "--p", "0.5", "--seed", "3"]
    )
    assert result.exit_code == 0
    params = models.Params(n=7, r=3, ell=2, p=0.5)
    expected = hypergraph.sample_gnp(params, models.Seed(root=3, stream=0))
    assert result.stdout.startswith("# null")
    assert hypergraph.load_text(result.stdout) == expected


def test_sample_then_count(tmp_path):
    path = tmp_path / "planted.bin"
    args = ["sample", "--n", "7", "--r", "3", "--ell", "2", "--p", "0.3"]
    planted = ["--model", "planted", "--binary", "--out", str(path)]
    result = runner.invoke(app, [*args, *planted])
    assert result.exit_code == 0
    data = invoke_json("count", str(path), "--ell", "2")
    assert int(data["count"]) >= 1
    assert data["method"] == "subset-dp"


def test_sample_binary_needs_out():
    args = ["sample", "--n", "7", "--r", "3", "--ell", "2", "--p", "0.3", "--binary"]
    assert runner.invoke(app, args).exit_code == 2


def test_count_complete_text(tmp_path):
    path = tmp_path / "complete.txt"
    path.write_text(hypergraph.dump_text(hypergraph.complete_hypergraph(8, 4)))
    data = invoke_json("count", str(path), "--ell", "2")
    assert data["count"] == "315"
    assert data["method"] == "backtracking"
    forced = runner.invoke(
        app, ["count", str(path), "--ell", "2", "--method", "subset-dp"]
    )
    assert forced.exit_code == 2


def test_count_missing_file(tmp_path):
    result = runner.invoke(app, ["count", str(tmp_path / "nope.txt"), "--ell", "2"])
    assert result.exit_code == 2


def test_stat_y(tmp_path):
    path = tmp_path / "graph.txt"
    params = models.Params(n=7, r=3, ell=2, p=0.5)
    graph = hypergraph.sample_gnp(params, models.Seed(root=8))
    path.write_text(hypergraph.dump_text(graph))
    data = invoke_json("stat-y", str(path), "--ell", "2", "--p", "0.5", "--K", "2")
    assert len(data["values"]) == 2
    assert data["K"] == 2


def test_oracle_overlap():
    data = invoke_json("oracle", "overlap", "--n", "5", "--r", "3", "--ell", "2")
    assert data["counts"]["5"] == 12
    assert data["counts"]["4"] == 0
    assert data["n_cycles"] == 12


def test_oracle_planted_mean():
    args = ["--n", "9", "--r", "3", "--ell", "2", "--p", "0.4", "--j", "2"]
    data = invoke_json("oracle", "planted-mean", *args)
    assert data["relative_difference"] < 1e-12


def test_experiment_command(tmp_path):
    config = tmp_path / "run.cfg"
    config.write_text("experiment=concentration\nn=6\nr=4\nell=3\np=0.6\nn_trials=5\n")
    out_dir = tmp_path / "out"
    result = runner.invoke(
        app, ["experiment", "--config", str(config), "--out-dir", str(out_dir)]
    )
    assert result.exit_code == 0
    assert (out_dir / experiments.TRIALS_FILE).is_file()
    assert (out_dir / experiments.SUMMARY_FILE).is_file()


def test_experiment_missing_config(tmp_path):
    result = runner.invoke(app, ["experiment", "--config", str(tmp_path / "x.cfg")])
    assert result.exit_code == 2
