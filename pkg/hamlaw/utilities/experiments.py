import time
from concurrent.futures import ProcessPoolExecutor
from math import exp
from math import fsum
from math import log
from math import sqrt
from pathlib import Path

import numpy as np
from pydantic import BaseModel
from pydantic import Field
from pydantic import ValidationError
from scipy import stats

import hamlaw.utilities.counting as counting
import hamlaw.utilities.data_models as models
import hamlaw.utilities.hypergraph as hypergraph
import hamlaw.utilities.oracle as oracle
import hamlaw.utilities.reports as reports
import hamlaw.utilities.theory as theory
from hamlaw.configs.config import Settings
from hamlaw.configs.config import get_logger
from hamlaw.configs.config import get_settings
from hamlaw.utilities.errors import HamlawError
from hamlaw.utilities.errors import InfeasibleConfigurationError
from hamlaw.utilities.errors import InvalidArgumentError

logger = get_logger()

MODEL_OFFSETS = {
    models.TrialModel.NULL: 0,
    models.TrialModel.PLANTED: 1,
    models.TrialModel.DOUBLE: 2,
    models.TrialModel.THINNED: 3,
}
BOOTSTRAP_STREAM = 1 << 62
TRIALS_FILE = "trials.csv"
SUMMARY_FILE = "summary.json"


class TrialTask(BaseModel):
    """Everything a worker process needs to produce one TrialRecord"""

    trial: int
    model: models.TrialModel = models.TrialModel.NULL
    root_seed: int
    params: models.Params
    K: int = 0
    coefficients: list[float] = Field(default_factory=list)
    count: bool = True
    overlap_t: int | None = None
    stage_p: float | None = None
    thin_q: float | None = None
    expected_z: float | None = None
    record_timing: bool = False
    caps: dict[str, int] = Field(default_factory=dict)

    @property
    def seed(self) -> models.Seed:
        stream = trial_stream(self.trial, self.model)
        return models.Seed(root=self.root_seed, stream=stream)


def trial_stream(trial: int, model: models.TrialModel) -> int:
    return trial + (MODEL_OFFSETS[model] << 32)


def settings_for(caps: dict[str, int]) -> Settings:
    if not caps:
        return get_settings()
    try:
        return Settings(**caps)
    except ValidationError as e:
        raise InvalidArgumentError(f"Invalid cap override: {e}") from e


def _trial_graph(task: TrialTask, settings: Settings) -> models.Hypergraph:
    seed = task.seed
    if task.model == models.TrialModel.PLANTED:
        return hypergraph.plant_cycle(task.params, seed).graph
    if task.model == models.TrialModel.DOUBLE:
        t = task.overlap_t
        return hypergraph.plant_two_cycles(task.params, t, seed, settings).graph
    if task.model == models.TrialModel.THINNED:
        first = hypergraph.sample_gnp(task.params.with_p(task.stage_p), seed)
        return hypergraph.thin(first, task.thin_q, seed)
    return hypergraph.sample_gnp(task.params, seed)


def run_trial(task: TrialTask) -> models.TrialRecord:
    """One trial: sample the model graph, then Z, Y_1..Y_K, Y_N and X as requested."""
    settings = settings_for(task.caps)
    started = time.perf_counter()
    graph = _trial_graph(task, settings)
    z = None
    if task.count:
        z = counting.count_hamilton(graph, task.params.ell, settings=settings).count
    y = [
        counting.y_statistic(graph, k, task.params, settings).value
        for k in range(1, task.K + 1)
    ]
    y_n = fsum(t * v for t, v in zip(task.coefficients, y)) if y else None
    x = None
    if z is not None and y_n is not None and task.expected_z:
        x = counting.combine_x(z, task.expected_z, y_n)
    elapsed = (time.perf_counter() - started) * 1000 if task.record_timing else None
    logger.debug(
        f"Trial {task.trial} ({task.model.value}): edges={graph.edge_count} Z={z}"
    )
    return models.TrialRecord(
        trial=task.trial,
        seed=task.seed.stream,
        edge_count=graph.edge_count,
        z=z,
        y=y,
        y_n=y_n,
        x=x,
        elapsed_ms=elapsed,
        model=task.model,
    )


def run_tasks(tasks: list[TrialTask], workers: int = 1) -> list[models.TrialRecord]:
    """Runs trials in a process pool when workers > 1; output is sorted by (model, trial)
    so it never depends on scheduling."""
    if workers > 1 and len(tasks) > 1:
        chunksize = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_trial, tasks, chunksize=chunksize))
    else:
        records = [run_trial(task) for task in tasks]
    return sorted(records, key=lambda r: (MODEL_OFFSETS[r.model], r.trial))


def resolve_params(
    config: models.ExperimentConfig,
    n: int | None = None,
    settings: Settings | None = None,
) -> models.Params:
    """Params at vertex count n with p taken from whichever density the config gives."""
    n = config.n if n is None else n
    base = models.Params(n=n, r=config.r, ell=config.ell)
    if config.p is not None:
        p = config.p
    elif config.c is not None:
        p = theory.p_star(n, base, config.c)
    else:
        p = theory.p_for_expectation(n, base, config.target_m, settings)
    if not 0 <= p <= 1:
        raise InfeasibleConfigurationError(
            f"Density p = {p} lies outside [0, 1] at n = {n}"
        )
    return base.with_p(p)


def truncation(config: models.ExperimentConfig, settings: Settings) -> int:
    return theory.harness_truncation(config.n, settings) if config.K is None else config.K


def _z_values(records: list[models.TrialRecord]) -> np.ndarray:
    return np.array([float(r.z) for r in records if r.z is not None], dtype=float)


def _std(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if values.size > 1 else 0.0


def _relative_spread(values: np.ndarray) -> float:
    mean = float(np.mean(values))
    return _std(values) / mean if mean else float("nan")


def _bootstrap_seed(config: models.ExperimentConfig) -> models.Seed:
    return models.Seed(root=config.root_seed, stream=BOOTSTRAP_STREAM)


def _null_tasks(
    config: models.ExperimentConfig, params: models.Params, trials: int, **fields
) -> list[TrialTask]:
    return [
        TrialTask(
            trial=i,
            root_seed=config.root_seed,
            params=params,
            record_timing=config.record_timing,
            caps=config.caps,
            **fields,
        )
        for i in range(trials)
    ]


def summarize_concentration(
    config: models.ExperimentConfig, records: list[models.TrialRecord], settings: Settings
) -> dict:
    params = resolve_params(config, settings=settings)
    expected = theory.expected_z(params.n, params, params.p, settings).value
    if expected == 0:
        raise InfeasibleConfigurationError("E[Z] = 0 at this density")
    z = _z_values(records)
    mean = float(np.mean(z))
    cv = _relative_spread(z)
    summary = {
        "n": params.n,
        "p": params.p,
        "n_trials": int(z.size),
        "expected_z": expected,
        "mean_z": mean,
        "var_z": _std(z) ** 2,
        "mean_ratio": mean / expected,
        "cv": cv,
        "cv2": cv**2,
        "cv2_excess": cv**2 - 1 / expected,
        "zero_fraction": float(np.mean(z == 0)),
    }
    if params.p > 0:
        c_n = theory.density_ratio(params.n, params)
        K = truncation(config, settings)
        summary["c_n"] = c_n
        summary["second_moment_ratio_bound"] = theory.second_moment_ratio_bound(
            params.n, params, c_n, K, settings
        )
    if z.size > 1 and _std(z) > 0:
        _, lower, upper = theory.bootstrap_band(z / expected, _bootstrap_seed(config))
        summary["mean_ratio_lower"] = lower
        summary["mean_ratio_upper"] = upper
    return summary


def run_concentration(
    config: models.ExperimentConfig, settings: Settings | None = None
) -> models.ExperimentResult:
    """Z / E[Z] concentration for ell >= 3."""
    settings = settings or settings_for(config.caps)
    if config.ell < 3:
        raise InvalidArgumentError("The concentration experiment needs ell >= 3")
    params = resolve_params(config, settings=settings)
    records = run_tasks(_null_tasks(config, params, config.n_trials), config.workers)
    return _result(config, records, settings)


def summarize_lognormal(
    config: models.ExperimentConfig, records: list[models.TrialRecord], settings: Settings
) -> dict:
    params = resolve_params(config, settings=settings)
    K = truncation(config, settings)
    c_n = theory.density_ratio(params.n, params)
    law = theory.lognormal_params(params, c_n, K, settings)
    expected = theory.expected_z(params.n, params, params.p, settings).value
    z = _z_values(records)
    ratio = z / expected
    positive = ratio[ratio > 0]
    summary = {
        "n": params.n,
        "p": params.p,
        "c_n": c_n,
        "K": K,
        "mu": law.mu,
        "sigma2": law.sigma2,
        "tail": law.tail,
        "expected_z": expected,
        "n_trials": int(z.size),
        "zero_fraction": float(np.mean(z == 0)),
        "mean_ratio": float(np.mean(ratio)),
        "z_second_moment_ratio": float(np.mean(ratio**2) / np.mean(ratio) ** 2),
        "z_second_moment_ratio_limit": exp(law.sigma2),
        "x_limit": exp(-law.sigma2 / 2),
    }
    if positive.size:
        scale = sqrt(law.sigma2) if law.sigma2 > 0 else 1.0
        distance, pvalue = theory.ks_test(
            np.log(positive), lambda v: stats.norm.cdf(v, loc=law.mu, scale=scale)
        )
        summary["ks_log_ratio"] = distance
        summary["ks_pvalue"] = pvalue
    if ratio.size > 1:
        _, lower, upper = theory.bootstrap_band(ratio, _bootstrap_seed(config))
        summary["mean_ratio_lower"] = lower
        summary["mean_ratio_upper"] = upper
        summary["mean_ratio_one_in_band"] = float(lower <= 1 <= upper)
    x = np.array([r.x for r in records if r.x is not None], dtype=float)
    if x.size:
        summary["mean_x"] = float(np.mean(x))
        summary["var_x"] = _std(x) ** 2
        if np.mean(x) > 0:
            summary["x_second_moment_ratio"] = float(np.mean(x**2) / np.mean(x) ** 2)
    smaller = []
    for repeat in range(config.repeats):
        chunk = [r for r in records if r.trial // config.n_trials == repeat]
        zr = _z_values(chunk) / expected
        xr = np.array([r.x for r in chunk if r.x is not None], dtype=float)
        if zr.size > 1 and xr.size > 1:
            smaller.append(_relative_spread(xr) < _relative_spread(zr))
    if smaller:
        summary["x_spread_smaller_fraction"] = float(np.mean(smaller))
    return summary


def run_lognormal(
    config: models.ExperimentConfig, settings: Settings | None = None
) -> models.ExperimentResult:
    """Z, Y_N and X per trial for ell = 2, in config.repeats independent blocks."""
    settings = settings or settings_for(config.caps)
    if config.ell != 2:
        raise InvalidArgumentError("The lognormal experiment needs ell = 2")
    params = resolve_params(config, settings=settings)
    K = truncation(config, settings)
    c_n = theory.density_ratio(params.n, params)
    tasks = _null_tasks(
        config,
        params,
        config.n_trials * config.repeats,
        K=K,
        coefficients=counting.path_coefficients(params, c_n, K, settings),
        expected_z=theory.expected_z(params.n, params, params.p, settings).value,
    )
    logger.info(f"Lognormal experiment n={params.n} K={K} c_n={c_n:.4f}")
    return _result(config, run_tasks(tasks, config.workers), settings)


def two_stage_densities(
    params: models.Params, target_m: float, settings: Settings
) -> tuple[float, float]:
    """First-stage p' with E[Z'] = log n and the keep probability (m / log n)^(s/n)."""
    log_n = log(params.n)
    stage_p = theory.p_for_expectation(params.n, params, log_n, settings)
    q = (target_m / log_n) ** (params.s / params.n)
    if q > 1:
        raise InfeasibleConfigurationError(
            f"Two-stage thinning needs target_m <= log n = {log_n:.4f}, got {target_m}"
        )
    return stage_p, q


def _histogram_tv(a: np.ndarray, b: np.ndarray) -> float:
    size = int(max(a.max(), b.max())) + 1
    ha = np.bincount(a.astype(np.int64), minlength=size) / a.size
    hb = np.bincount(b.astype(np.int64), minlength=size) / b.size
    return 0.5 * float(np.abs(ha - hb).sum())


def summarize_poisson(
    config: models.ExperimentConfig, records: list[models.TrialRecord], settings: Settings
) -> dict:
    params = resolve_params(config, settings=settings)
    m = config.target_m
    null = [r for r in records if r.model == models.TrialModel.NULL]
    z = _z_values(null)
    summary = {
        "n": params.n,
        "p": params.p,
        "target_m": m,
        "n_trials": int(z.size),
        "mean_z": float(np.mean(z)),
        "mean_ratio": float(np.mean(z)) / m,
        "tv_poisson": theory.tv_distance(z, theory.poisson_pmf(m)),
    }
    if z.size > 1 and np.mean(z) > 0:
        summary["dispersion"] = theory.dispersion(z)
    if params.ell == 2:
        K = truncation(config, settings)
        c_n = theory.density_ratio(params.n, params)
        law = theory.lognormal_params(params, c_n, K, settings)
        summary["c_n"] = c_n
        summary["sigma2"] = law.sigma2
        summary["mixture_variance"] = theory.mixture_variance(m, law)
        summary["tv_mixture"] = theory.tv_distance(
            z, theory.mixture_pmf_function(m, law, settings)
        )
    thinned = [r for r in records if r.model == models.TrialModel.THINNED]
    if thinned:
        stage_p, q = two_stage_densities(params, m, settings)
        zt = _z_values(thinned)
        edges = np.array([r.edge_count for r in null], dtype=float)
        edges_thinned = np.array([r.edge_count for r in thinned], dtype=float)
        thinning = stats.ks_2samp(edges, edges_thinned)
        # First-stage counts are not recorded; the bound is taken at E[Z'] = log n.
        log_n = log(params.n)
        summary.update(
            {
                "stage_p": stage_p,
                "thin_q": q,
                "mean_z_thinned": float(np.mean(zt)),
                "thinning_ks": float(thinning.statistic),
                "thinning_ks_pvalue": float(thinning.pvalue),
                "pipeline_tv": _histogram_tv(z, zt),
                "le_cam_bound": theory.le_cam_bound(log_n, m, log_n),
            }
        )
        if zt.size > 1 and np.mean(zt) > 0:
            summary["dispersion_thinned"] = theory.dispersion(zt)
    return summary


def run_poisson(
    config: models.ExperimentConfig, settings: Settings | None = None
) -> models.ExperimentResult:
    """Z at constant E[Z] = target_m, optionally through the two-stage pipeline."""
    settings = settings or settings_for(config.caps)
    if config.target_m is None:
        raise InvalidArgumentError("The poisson experiment needs target_m")
    params = resolve_params(config, settings=settings)
    tasks = _null_tasks(config, params, config.n_trials)
    if config.two_stage:
        stage_p, q = two_stage_densities(params, config.target_m, settings)
        tasks += _null_tasks(
            config,
            params,
            config.n_trials,
            model=models.TrialModel.THINNED,
            stage_p=stage_p,
            thin_q=q,
        )
    return _result(config, run_tasks(tasks, config.workers), settings)


def _y_matrix(records: list[models.TrialRecord], model: models.TrialModel) -> np.ndarray:
    return np.array([r.y for r in records if r.model == model], dtype=float)


def _max_offdiagonal(cov: np.ndarray) -> float:
    if cov.shape[0] < 2:
        return 0.0
    mask = ~np.eye(cov.shape[0], dtype=bool)
    return float(np.max(np.abs(cov[mask])))


def summarize_clt(
    config: models.ExperimentConfig, records: list[models.TrialRecord], settings: Settings
) -> dict:
    params = resolve_params(config, settings=settings)
    K = truncation(config, settings)
    closed = np.array(
        [
            oracle.planted_mean_closed_form(params.n, params, params.p, k)
            for k in range(1, K + 1)
        ]
    )
    c_n = theory.density_ratio(params.n, params)
    summary: dict = {
        "n": params.n,
        "p": params.p,
        "c_n": c_n,
        "K": K,
        "planted_mean_closed_form": closed.tolist(),
        "mu": counting.path_coefficients(params, c_n, K, settings),
    }
    for model in models.TrialModel:
        y = _y_matrix(records, model)
        if y.size == 0:
            continue
        name = model.value
        means = y.mean(axis=0)
        if y.shape[0] > 1:
            cov = np.atleast_2d(np.cov(y, rowvar=False))
        else:
            cov = np.zeros((K, K))
        se = np.sqrt(np.diag(cov) / y.shape[0])
        summary[f"{name}_n_trials"] = int(y.shape[0])
        summary[f"{name}_means"] = means.tolist()
        summary[f"{name}_covariance"] = cov.tolist()
        summary[f"{name}_max_abs_offdiag"] = _max_offdiagonal(cov)
        summary[f"{name}_min_var"] = float(np.min(np.diag(cov)))
        summary[f"{name}_max_var"] = float(np.max(np.diag(cov)))
        if model == models.TrialModel.NULL:
            summary["null_max_abs_mean"] = float(np.max(np.abs(means)))
            centered = y - means
            summary["null_max_ks"] = max(
                theory.ks_distance(centered[:, k], stats.norm.cdf) for k in range(K)
            )
        elif model == models.TrialModel.PLANTED:
            deviation = np.abs(means - closed)
            summary["planted_max_abs_dev"] = float(np.max(deviation))
            with np.errstate(divide="ignore", invalid="ignore"):
                summary["planted_max_abs_z"] = float(np.max(deviation / se))
        elif model == models.TrialModel.DOUBLE:
            summary["double_overlap_t"] = config.overlap_t
            summary["double_max_abs_dev"] = float(np.max(np.abs(means - 2 * closed)))
    return summary


def run_clt(
    config: models.ExperimentConfig, settings: Settings | None = None
) -> models.ExperimentResult:
    """Joint law of (Y(P_1), ..., Y(P_K)) under the null, planted and (with overlap_t set)
    double-planted models."""
    settings = settings or settings_for(config.caps)
    K = truncation(config, settings)
    if not 1 <= K <= settings.k_max:
        raise InvalidArgumentError(
            f"K must lie in [1, k_max = {settings.k_max}], got {K}"
        )
    params = resolve_params(config, settings=settings)
    trial_models = [models.TrialModel.NULL, models.TrialModel.PLANTED]
    if config.overlap_t is not None:
        trial_models.append(models.TrialModel.DOUBLE)
    tasks = []
    for model in trial_models:
        tasks += _null_tasks(
            config,
            params,
            config.n_trials,
            model=model,
            K=K,
            count=False,
            overlap_t=config.overlap_t,
        )
    return _result(config, run_tasks(tasks, config.workers), settings)


def summarize_oracle_suite(config: models.ExperimentConfig, settings: Settings) -> dict:
    params = resolve_params(config, settings=settings)
    if params.p <= 0:
        raise InvalidArgumentError("The oracle suite needs p > 0")
    ns = config.scan_n or [config.n]
    rows = oracle.run_identity_suite(ns, config.r, config.ell, params.p, settings)
    return {
        "p": params.p,
        "rows": rows,
        "identity_failures": sum(not row["passed"] for row in rows),
    }


def summarize_records(
    config: models.ExperimentConfig,
    records: list[models.TrialRecord],
    settings: Settings | None = None,
) -> dict:
    """Summary statistics from the configuration and trial records alone, so that a
    summary can be recomputed from the written CSV."""
    settings = settings or settings_for(config.caps)
    match config.experiment:
        case models.Experiment.CONCENTRATION:
            return summarize_concentration(config, records, settings)
        case models.Experiment.LOGNORMAL:
            return summarize_lognormal(config, records, settings)
        case models.Experiment.POISSON:
            return summarize_poisson(config, records, settings)
        case models.Experiment.CLT:
            return summarize_clt(config, records, settings)
        case models.Experiment.ORACLE_SUITE:
            return summarize_oracle_suite(config, settings)


def gate_reports(
    config: models.ExperimentConfig, summary: dict
) -> list[models.TestReport]:
    """One TestReport per configured gate; a gate naming no scalar summary entry is a
    usage error."""
    seed = models.Seed(root=config.root_seed, stream=0)
    found = []
    gates = dict(config.gates)
    if config.experiment == models.Experiment.ORACLE_SUITE:
        gates.setdefault("identity_failures", (0.0, 0.0))
    for name, bounds in sorted(gates.items()):
        value = summary.get(name)
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise InvalidArgumentError(f"Gate {name!r} names no scalar summary statistic")
        report = theory.evaluate_gate(name, float(value), bounds, config.n_trials, seed)
        if not report.passed:
            logger.error(f"Gate {name} failed: {value} not in [{bounds[0]}, {bounds[1]}]")
        found.append(report)
    return found


def _result(
    config: models.ExperimentConfig, records: list[models.TrialRecord], settings: Settings
) -> models.ExperimentResult:
    summary = summarize_records(config, records, settings)
    return models.ExperimentResult(
        config=config,
        records=records,
        summary=summary,
        reports=gate_reports(config, summary),
    )


def run_oracle_suite(
    config: models.ExperimentConfig, settings: Settings | None = None
) -> models.ExperimentResult:
    """Exact identity checks for every n in scan_n (or n alone)."""
    settings = settings or settings_for(config.caps)
    return _result(config, [], settings)


RUNNERS = {
    models.Experiment.CONCENTRATION: run_concentration,
    models.Experiment.LOGNORMAL: run_lognormal,
    models.Experiment.POISSON: run_poisson,
    models.Experiment.CLT: run_clt,
    models.Experiment.ORACLE_SUITE: run_oracle_suite,
}


def run_experiment(
    config: models.ExperimentConfig, settings: Settings | None = None
) -> models.ExperimentResult:
    settings = settings or settings_for(config.caps)
    logger.info(
        f"Starting {config.experiment.value}: n={config.n} r={config.r} ell={config.ell} "
        f"trials={config.n_trials} seed={config.root_seed}"
    )
    result = RUNNERS[config.experiment](config, settings)
    logger.info(f"Finished {config.experiment.value}: passed={result.passed}")
    return result


def scan_configs(config: models.ExperimentConfig) -> list[models.ExperimentConfig]:
    """One configuration per scanned n, each writing to out_dir/n_<n>. The oracle suite
    consumes scan_n itself."""
    if not config.scan_n or config.experiment == models.Experiment.ORACLE_SUITE:
        return [config]
    return [
        config.model_copy(
            update={"n": n, "scan_n": [], "out_dir": config.out_dir / f"n_{n}"}
        )
        for n in config.scan_n
    ]


def write_outputs(result: models.ExperimentResult, out_dir: Path | None = None) -> Path:
    out_dir = Path(out_dir or result.config.out_dir)
    reports.emit_csv(result, out_dir / TRIALS_FILE)
    reports.emit_json(result, out_dir / SUMMARY_FILE)
    return out_dir


def apply_overrides(
    config: models.ExperimentConfig, overrides: dict
) -> models.ExperimentConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if not overrides:
        return config
    try:
        merged = {**config.model_dump(), **overrides}
        return models.ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise InvalidArgumentError(f"Invalid override: {e}") from e


def run_config(path: str | Path, overrides: dict | None = None) -> int:
    """Load, run and write one configuration.

    Returns:
        int:
            0 when every gate passes, 1 on a gate or runtime failure, 2 for usage errors
            (missing or unparseable file, invalid or infeasible settings, unknown gate).
    """
    try:
        config = apply_overrides(reports.load_config(path), overrides or {})
    except InvalidArgumentError as e:
        logger.error(str(e))
        return 2
    passed = True
    try:
        for scanned in scan_configs(config):
            result = run_experiment(scanned)
            write_outputs(result)
            passed = passed and result.passed
    except (InvalidArgumentError, InfeasibleConfigurationError) as e:
        logger.error(str(e))
        return 2
    except HamlawError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    return 0 if passed else 1
