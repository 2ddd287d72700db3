import functools
import json
import sys
from pathlib import Path
from typing import Optional

import typer
from pydantic import ValidationError

import hamlaw.utilities.counting as counting
import hamlaw.utilities.data_models as models
import hamlaw.utilities.experiments as experiments
import hamlaw.utilities.hypergraph as hypergraph
import hamlaw.utilities.oracle as oracle
import hamlaw.utilities.reports as reports
import hamlaw.utilities.theory as theory
from hamlaw.configs.config import configure_logging
from hamlaw.configs.config import get_logger
from hamlaw.utilities.errors import HamlawError
from hamlaw.utilities.errors import InfeasibleConfigurationError
from hamlaw.utilities.errors import InvalidArgumentError

logger = get_logger()

app = typer.Typer(
    no_args_is_help=True, help="Hamilton cycle counts in random hypergraphs"
)
oracle_app = typer.Typer(
    no_args_is_help=True, help="Exact and Monte Carlo identity checks"
)
app.add_typer(oracle_app, name="oracle")

USAGE_ERRORS = (InvalidArgumentError, InfeasibleConfigurationError, ValidationError)


def handle_errors(command):
    """Maps library errors to exit codes: 2 for invalid input, 1 for runtime failures."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except USAGE_ERRORS as e:
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(code=2) from e
        except HamlawError as e:
            typer.echo(f"error: {type(e).__name__}: {e}", err=True)
            raise typer.Exit(code=1) from e

    return wrapper


def emit(data: dict, as_json: bool) -> None:
    if as_json:
        typer.echo(json.dumps(data, indent=2, sort_keys=True))
        return
    for key, value in data.items():
        typer.echo(f"{key}: {value}")


def read_graph(path: Path) -> models.Hypergraph:
    if not path.is_file():
        raise InvalidArgumentError(f"Hypergraph file not found: {path}")
    data = path.read_bytes()
    if data.startswith(hypergraph.BINARY_MAGIC):
        return hypergraph.load_binary(data)
    return hypergraph.load_text(data.decode())


def density_params(
    n: int, r: int, ell: int, p: float | None, c: float | None, target_m: float | None
) -> models.Params:
    config = models.ExperimentConfig(
        experiment=models.Experiment.CLT, n=n, r=r, ell=ell, p=p, c=c, target_m=target_m
    )
    return experiments.resolve_params(config)


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level"),
):
    configure_logging("DEBUG" if verbose else None)


@app.command()
@handle_errors
def constants(
    n: int = typer.Option(..., help="Vertex count"),
    r: int = typer.Option(..., help="Uniformity"),
    ell: int = typer.Option(..., help="Overlap of consecutive edges"),
    K: Optional[int] = typer.Option(None, "--K", help="Length of the A-table"),
    as_json: bool = typer.Option(False, "--json"),
):
    """Structural constants, A-table, Aut(P_k), Aut(C) and N_C."""
    emit(reports.constants_report(n, r, ell, K), as_json)


@app.command()
@handle_errors
def sample(
    n: int = typer.Option(...),
    r: int = typer.Option(...),
    ell: int = typer.Option(...),
    p: Optional[float] = typer.Option(None),
    c: Optional[float] = typer.Option(None),
    target_m: Optional[float] = typer.Option(None, "--target-m"),
    seed: int = typer.Option(0, help="Root seed"),
    stream: int = typer.Option(0, help="Trial stream"),
    model: models.TrialModel = typer.Option(models.TrialModel.NULL),
    overlap_t: int = typer.Option(0, "--overlap-t", help="Shared edges (double model)"),
    binary: bool = typer.Option(False, "--binary", help="Write the binary format"),
    out: Optional[Path] = typer.Option(None, help="Output file; stdout when omitted"),
):
    """Draw one hypergraph from the null, planted or double-planted model."""
    params = density_params(n, r, ell, p, c, target_m)
    trial_seed = models.Seed(root=seed, stream=stream)
    if model == models.TrialModel.PLANTED:
        graph = hypergraph.plant_cycle(params, trial_seed).graph
    elif model == models.TrialModel.DOUBLE:
        graph = hypergraph.plant_two_cycles(params, overlap_t, trial_seed).graph
    elif model == models.TrialModel.NULL:
        graph = hypergraph.sample_gnp(params, trial_seed)
    else:
        raise InvalidArgumentError("sample draws null, planted or double graphs")
    if binary:
        if out is None:
            raise InvalidArgumentError("--binary needs --out")
        out.write_bytes(hypergraph.dump_binary(graph))
        return
    comment = f"{model.value} p={params.p!r} seed={seed}:{stream}"
    text = hypergraph.dump_text(graph, comment=comment)
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


@app.command()
@handle_errors
def count(
    path: Path = typer.Argument(..., help="Hypergraph file, text or binary"),
    ell: int = typer.Option(...),
    method: Optional[models.CountMethod] = typer.Option(None),
    as_json: bool = typer.Option(False, "--json"),
):
    """Exact number of Hamilton ell-cycles."""
    graph = read_graph(path)
    result = counting.count_hamilton(graph, ell, method)
    emit(result.model_dump(mode="json"), as_json)


@app.command("stat-y")
@handle_errors
def stat_y(
    path: Path = typer.Argument(..., help="Hypergraph file, text or binary"),
    ell: int = typer.Option(...),
    p: float = typer.Option(..., help="Edge density of the reference model"),
    K: int = typer.Option(3, "--K", help="Largest path length"),
    c: Optional[float] = typer.Option(None, help="Density ratio; c_n when omitted"),
    as_json: bool = typer.Option(False, "--json"),
):
    """Y(P_1), ..., Y(P_K) and their combination Y_N."""
    graph = read_graph(path)
    params = models.Params(n=graph.n, r=graph.r, ell=ell, p=p)
    c = theory.density_ratio(graph.n, params) if c is None else c
    emit(counting.y_combined(graph, params, c, K).model_dump(mode="json"), as_json)


@app.command("theory")
@handle_errors
def theory_command(
    n: int = typer.Option(...),
    r: int = typer.Option(...),
    ell: int = typer.Option(...),
    p: Optional[float] = typer.Option(None),
    c: Optional[float] = typer.Option(None),
    target_m: Optional[float] = typer.Option(None, "--target-m"),
    K: Optional[int] = typer.Option(None, "--K"),
    as_json: bool = typer.Option(False, "--json"),
):
    """p*, E[Z] and the truncated lognormal parameters at a density."""
    emit(reports.theory_report(n, r, ell, p, c, target_m, K), as_json)


@oracle_app.command("overlap")
@handle_errors
def oracle_overlap(
    n: int = typer.Option(...),
    r: int = typer.Option(...),
    ell: int = typer.Option(...),
    as_json: bool = typer.Option(False, "--json"),
):
    """Ordered cycle pairs of the complete hypergraph by shared edges."""
    emit(oracle.overlap_distribution(n, r, ell).model_dump(mode="json"), as_json)


@oracle_app.command("second-moment")
@handle_errors
def oracle_second_moment(
    n: int = typer.Option(...),
    r: int = typer.Option(...),
    ell: int = typer.Option(...),
    p: float = typer.Option(...),
    trials: int = typer.Option(0, help="Monte Carlo trials for the variance check"),
    seed: int = typer.Option(0),
    as_json: bool = typer.Option(False, "--json"),
):
    """E[Z^2] two ways, exactly; optionally the sample variance of Z."""
    params = models.Params(n=n, r=r, ell=ell, p=p)
    data = oracle.second_moment_identity_check(n, params, p).model_dump(mode="json")
    if trials > 1:
        check = oracle.variance_check(n, params, p, trials, seed)
        data["variance_check"] = check.model_dump(mode="json")
    emit(data, as_json)


@oracle_app.command("planted-mean")
@handle_errors
def oracle_planted_mean(
    n: int = typer.Option(...),
    r: int = typer.Option(...),
    ell: int = typer.Option(...),
    p: float = typer.Option(...),
    j: int = typer.Option(..., help="Path length"),
    trials: int = typer.Option(0),
    seed: int = typer.Option(0),
    as_json: bool = typer.Option(False, "--json"),
):
    """Planted mean of Y(P_j): closed form, exact and Monte Carlo."""
    params = models.Params(n=n, r=r, ell=ell, p=p)
    report = oracle.planted_mean_check(n, params, p, j, trials, seed)
    emit(report.model_dump(mode="json"), as_json)


@oracle_app.command("planted-mgf")
@handle_errors
def oracle_planted_mgf(
    n: int = typer.Option(...),
    r: int = typer.Option(...),
    ell: int = typer.Option(...),
    c: float = typer.Option(...),
    K: int = typer.Option(..., "--K"),
    trials: int = typer.Option(...),
    seed: int = typer.Option(0),
    as_json: bool = typer.Option(False, "--json"),
):
    """E[X] under the null model against E*[exp(-Y_N)] under the planted model."""
    params = density_params(n, r, ell, None, c, None)
    report = oracle.planted_mgf_check(n, params, params.p, c, K, trials, seed)
    emit(report.model_dump(mode="json"), as_json)


@oracle_app.command("big-overlap")
@handle_errors
def oracle_big_overlap(
    n: int = typer.Option(...),
    r: int = typer.Option(...),
    ell: int = typer.Option(...),
    trials: int = typer.Option(...),
    seed: int = typer.Option(0),
    as_json: bool = typer.Option(False, "--json"),
):
    """Cycle pairs sharing between log n and m - 1 edges at E[Z] = log n."""
    params = models.Params(n=n, r=r, ell=ell)
    report = oracle.big_overlap_scan(n, params, trials, seed)
    emit(report.model_dump(mode="json"), as_json)


@app.command()
def experiment(
    config: Path = typer.Option(..., "--config", help="key=value configuration file"),
    seed: Optional[int] = typer.Option(None, help="Override root_seed"),
    trials: Optional[int] = typer.Option(None, help="Override n_trials"),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir", help="Override out_dir"),
    workers: Optional[int] = typer.Option(None, help="Override workers"),
):
    """Run a configured experiment; exit 0 iff every gate passes."""
    overrides = {
        "root_seed": seed,
        "n_trials": trials,
        "out_dir": out_dir,
        "workers": workers,
    }
    raise typer.Exit(code=experiments.run_config(config, overrides))


@app.command()
def serve(
    host: str = typer.Option("127.0.0.1"),
    port: int = typer.Option(8000),
):
    """Serve the read-only HTTP API."""
    import uvicorn

    uvicorn.run("hamlaw.api:app", host=host, port=port)


if __name__ == "__main__":
    app()
