import json
from math import exp
from math import log
from pathlib import Path

import pytest

import hamlaw.utilities.data_models as models
import hamlaw.utilities.experiments as experiments
import hamlaw.utilities.reports as reports
from hamlaw.utilities.errors import InfeasibleConfigurationError
from hamlaw.utilities.errors import InvalidArgumentError

SHIPPED_CONFIGS = Path(__file__).resolve().parents[1] / "configs"

CONCENTRATION = """\
# 4-uniform tight cycles on 6 vertices
experiment=concentration
n=6
r=4
ell=3
p=0.7
n_trials=12
root_seed=42
"""


def write_config(directory: Path, text: str, name: str = "run.cfg") -> Path:
    path = directory / name
    path.write_text(text)
    return path


def concentration_config(tmp_path: Path, **updates) -> models.ExperimentConfig:
    config = reports.load_config(write_config(tmp_path, CONCENTRATION))
    return config.model_copy(update={"out_dir": tmp_path / "out", **updates})


def test_load_config(tmp_path):
    config = reports.load_config(write_config(tmp_path, CONCENTRATION))
    assert config.experiment == models.Experiment.CONCENTRATION
    assert (config.n, config.r, config.ell, config.p) == (6, 4, 3, 0.7)
    assert config.n_trials == 12
    assert config.workers == 1
    assert config.gates == {}


def test_config_text_round_trip(tmp_path):
    config = models.ExperimentConfig(
        experiment=models.Experiment.POISSON,
        n=7,
        r=4,
        ell=3,
        target_m=0.1 + 0.2,
        n_trials=50,
        root_seed=2**40,
        two_stage=True,
        scan_n=[7, 8],
        gates={"mean_ratio": (0.5, 1.5), "tv_poisson": (0.0, 0.25)},
        caps={"node_budget": 1_000_000},
    )
    path = reports.save_config(config, tmp_path / "nested" / "poisson.cfg")
    text = path.read_text()
    assert "gate_mean_ratio=0.5,1.5\n" in text
    assert "cap_node_budget=1000000\n" in text
    assert "scan_n=7,8\n" in text
    assert "two_stage=true\n" in text
    assert reports.load_config(path) == config


@pytest.mark.parametrize(
    "line",
    ["colour=blue", "cap_colour=3", "gate_mean_ratio=1", "n=six", "gate_cv=2,1"],
)
def test_load_config_rejects(tmp_path, line):
    path = write_config(tmp_path, CONCENTRATION + line + "\n")
    with pytest.raises(InvalidArgumentError):
        reports.load_config(path)


def test_load_config_needs_one_density(tmp_path):
    path = write_config(tmp_path, CONCENTRATION + "c=1.0\n")
    with pytest.raises(InvalidArgumentError):
        reports.load_config(path)
    with pytest.raises(InvalidArgumentError):
        reports.load_config(tmp_path / "missing.cfg")


def test_trial_streams_are_disjoint():
    null = experiments.trial_stream(5, models.TrialModel.NULL)
    planted = experiments.trial_stream(5, models.TrialModel.PLANTED)
    assert null == 5
    assert planted == 5 + (1 << 32)
    assert experiments.BOOTSTRAP_STREAM > planted


def test_resolve_params(tmp_path):
    config = concentration_config(tmp_path)
    assert experiments.resolve_params(config).p == 0.7
    scaled = config.model_copy(update={"p": None, "target_m": 2.0})
    params = experiments.resolve_params(scaled, n=7)
    assert params.n == 7
    with pytest.raises(InfeasibleConfigurationError):
        experiments.resolve_params(config.model_copy(update={"p": None, "c": 50.0}))


def test_concentration_run(tmp_path):
    config = concentration_config(tmp_path)
    result = experiments.run_experiment(config)
    summary = result.summary
    assert len(result.records) == 12
    assert [r.trial for r in result.records] == list(range(12))
    assert summary["expected_z"] == pytest.approx(60 * 0.7**6)
    ratio = summary["mean_z"] / summary["expected_z"]
    assert summary["mean_ratio"] == pytest.approx(ratio)
    assert summary["cv2"] == pytest.approx(summary["cv"] ** 2)
    assert result.reports == []
    assert result.passed


def test_concentration_at_full_density(tmp_path):
    result = experiments.run_experiment(concentration_config(tmp_path, p=1.0, n_trials=3))
    assert result.summary["mean_ratio"] == 1.0
    assert result.summary["cv"] == 0.0
    assert all(record.z == 60 for record in result.records)


def test_concentration_needs_ell_three(tmp_path):
    config = concentration_config(tmp_path).model_copy(update={"r": 3, "ell": 2})
    with pytest.raises(InvalidArgumentError):
        experiments.run_experiment(config)


def test_run_config_writes_outputs(tmp_path):
    path = write_config(tmp_path, CONCENTRATION)
    assert experiments.run_config(path, {"out_dir": tmp_path / "a"}) == 0
    trials = tmp_path / "a" / experiments.TRIALS_FILE
    summary = json.loads((tmp_path / "a" / experiments.SUMMARY_FILE).read_text())
    header = trials.read_text().splitlines()[0]
    assert header == "trial,seed,edge_count,Z,Y_N,X,elapsed_ms,model"
    assert summary["schema"] == reports.SCHEMA_VERSION
    assert summary["experiment"] == "concentration"
    assert summary["passed"] is True
    assert summary["config"]["root_seed"] == 42


def test_replay_is_byte_identical(tmp_path):
    path = write_config(tmp_path, CONCENTRATION)
    assert experiments.run_config(path, {"out_dir": tmp_path / "first"}) == 0
    assert experiments.run_config(path, {"out_dir": tmp_path / "second"}) == 0
    for name in (experiments.TRIALS_FILE, experiments.SUMMARY_FILE):
        first = (tmp_path / "first" / name).read_bytes()
        second = (tmp_path / "second" / name).read_bytes()
        if name == experiments.SUMMARY_FILE:
            first = first.replace(b"first", b"second")
        assert first == second


def test_seed_override_changes_trials(tmp_path):
    path = write_config(tmp_path, CONCENTRATION)
    experiments.run_config(path, {"out_dir": tmp_path / "a"})
    experiments.run_config(path, {"out_dir": tmp_path / "b", "root_seed": 43})
    first = (tmp_path / "a" / experiments.TRIALS_FILE).read_text()
    second = (tmp_path / "b" / experiments.TRIALS_FILE).read_text()
    assert first != second


def test_failed_gate_exits_one(tmp_path):
    path = write_config(tmp_path, CONCENTRATION + "gate_mean_ratio=100,200\n")
    assert experiments.run_config(path, {"out_dir": tmp_path / "out"}) == 1
    summary = json.loads((tmp_path / "out" / experiments.SUMMARY_FILE).read_text())
    assert summary["passed"] is False
    assert summary["reports"][0]["statistic_name"] == "mean_ratio"


def test_passing_gate_exits_zero(tmp_path):
    path = write_config(tmp_path, CONCENTRATION + "gate_zero_fraction=0,1\n")
    assert experiments.run_config(path, {"out_dir": tmp_path / "out"}) == 0


def test_usage_errors_exit_two(tmp_path):
    assert experiments.run_config(tmp_path / "missing.cfg") == 2
    unknown_gate = write_config(tmp_path, CONCENTRATION + "gate_bogus=0,1\n", "g.cfg")
    assert experiments.run_config(unknown_gate, {"out_dir": tmp_path / "out"}) == 2
    bad_override = write_config(tmp_path, CONCENTRATION, "o.cfg")
    assert experiments.run_config(bad_override, {"n_trials": 0}) == 2


def test_summary_recomputes_from_csv(tmp_path):
    config = concentration_config(tmp_path)
    result = experiments.run_experiment(config)
    out_dir = experiments.write_outputs(result)
    records = reports.read_csv(out_dir / experiments.TRIALS_FILE)
    assert records == result.records
    assert experiments.summarize_records(config, records) == result.summary


def test_workers_do_not_change_records(tmp_path):
    config = concentration_config(tmp_path)
    serial = experiments.run_experiment(config)
    parallel = experiments.run_experiment(config.model_copy(update={"workers": 2}))
    assert parallel.records == serial.records
    assert parallel.summary == serial.summary


def test_scan_configs(tmp_path):
    config = concentration_config(tmp_path, scan_n=[6, 7])
    scanned = experiments.scan_configs(config)
    assert [c.n for c in scanned] == [6, 7]
    assert scanned[1].out_dir == tmp_path / "out" / "n_7"
    assert all(c.scan_n == [] for c in scanned)


def test_lognormal_run(tmp_path):
    config = models.ExperimentConfig(
        experiment=models.Experiment.LOGNORMAL,
        n=7,
        r=3,
        ell=2,
        p=0.5,
        K=2,
        n_trials=4,
        repeats=2,
        root_seed=1,
        out_dir=tmp_path,
    )
    result = experiments.run_experiment(config)
    summary = result.summary
    assert len(result.records) == 8
    assert all(len(record.y) == 2 for record in result.records)
    assert all(record.x is not None for record in result.records)
    assert summary["n_trials"] == 8
    assert summary["x_limit"] == pytest.approx(exp(-summary["sigma2"] / 2))
    assert "mean_x" in summary
    with pytest.raises(InvalidArgumentError):
        experiments.run_experiment(config.model_copy(update={"r": 4, "ell": 3}))


def test_poisson_two_stage_run(tmp_path):
    config = models.ExperimentConfig(
        experiment=models.Experiment.POISSON,
        n=7,
        r=3,
        ell=2,
        target_m=1.0,
        n_trials=6,
        two_stage=True,
        root_seed=5,
        out_dir=tmp_path,
    )
    result = experiments.run_experiment(config)
    summary = result.summary
    thinned = [r for r in result.records if r.model == models.TrialModel.THINNED]
    assert len(thinned) == 6
    assert len(result.records) == 12
    assert 0 < summary["thin_q"] <= 1
    assert summary["stage_p"] > summary["p"]
    assert 0 <= summary["pipeline_tv"] <= 1
    assert "tv_mixture" in summary
    assert summary["le_cam_bound"] == pytest.approx(1.0 / log(7), rel=1e-12)


def test_two_stage_needs_small_target(tmp_path):
    config = models.ExperimentConfig(
        experiment=models.Experiment.POISSON,
        n=7,
        r=3,
        ell=2,
        target_m=3.0,
        two_stage=True,
        out_dir=tmp_path,
    )
    with pytest.raises(InfeasibleConfigurationError):
        experiments.run_experiment(config)
    with pytest.raises(InvalidArgumentError):
        experiments.run_experiment(
            config.model_copy(update={"target_m": None, "p": 0.5, "two_stage": False})
        )


def test_clt_run(tmp_path):
    config = models.ExperimentConfig(
        experiment=models.Experiment.CLT,
        n=8,
        r=4,
        ell=2,
        p=0.5,
        K=2,
        n_trials=4,
        overlap_t=4,
        root_seed=3,
        out_dir=tmp_path,
    )
    result = experiments.run_experiment(config)
    summary = result.summary
    assert len(result.records) == 12
    assert all(record.z is None for record in result.records)
    assert summary["double_overlap_t"] == 4
    assert len(summary["null_means"]) == 2
    assert len(summary["planted_covariance"]) == 2
    assert summary["planted_mean_closed_form"][0] > 0
    with pytest.raises(InvalidArgumentError):
        experiments.run_experiment(config.model_copy(update={"K": 0}))


def test_oracle_suite_run(tmp_path):
    config = models.ExperimentConfig(
        experiment=models.Experiment.ORACLE_SUITE,
        n=5,
        r=3,
        ell=2,
        p=0.5,
        scan_n=[5, 6],
        out_dir=tmp_path,
    )
    assert experiments.scan_configs(config) == [config]
    result = experiments.run_experiment(config)
    assert result.summary["identity_failures"] == 0
    assert [row["n"] for row in result.summary["rows"]] == [5, 6]
    assert [report.statistic_name for report in result.reports] == ["identity_failures"]
    assert result.passed


def test_csv_keeps_every_model_value(tmp_path):
    records = [
        models.TrialRecord(
            trial=i,
            seed=1000 + i,
            edge_count=3 * i,
            z=None if model == models.TrialModel.PLANTED else 2**70 + i,
            y=[0.5 * i, -1.25] if i % 2 else [],
            y_n=None if i % 2 == 0 else 0.1 + 0.2,
            x=None if i % 2 == 0 else 1.5,
            elapsed_ms=0.25 * i,
            model=model,
        )
        for i, model in enumerate(models.TrialModel)
    ]
    result = models.ExperimentResult(
        config=concentration_config(tmp_path), records=records, summary={}, reports=[]
    )
    path = reports.emit_csv(result, tmp_path / "trials.csv")
    back = reports.read_csv(path)
    assert [r.model for r in back] == list(models.TrialModel)
    assert back == records


@pytest.mark.parametrize(
    "path", sorted(SHIPPED_CONFIGS.glob("*.cfg")), ids=lambda path: path.stem
)
def test_shipped_configs_load(path):
    config = reports.load_config(path)
    assert config.experiment in models.Experiment
    assert config.n_trials >= 1
    assert experiments.scan_configs(config)


def test_shipped_oracle_suite_runs(tmp_path):
    config = reports.load_config(SHIPPED_CONFIGS / "oracle_suite.cfg")
    assert config.experiment == models.Experiment.ORACLE_SUITE
    config = config.model_copy(update={"out_dir": tmp_path, "scan_n": [5, 6]})
    result = experiments.run_experiment(config)
    assert result.passed
    assert [row["n_c"] for row in result.summary["rows"]] == [12, 60]
