import json
import math
from pathlib import Path

import pandas as pd
from dotenv import dotenv_values
from pydantic import ValidationError

import hamlaw.utilities.data_models as models
import hamlaw.utilities.structures as structures
import hamlaw.utilities.theory as theory
from hamlaw.configs.config import Settings
from hamlaw.configs.config import get_logger
from hamlaw.configs.config import get_settings
from hamlaw.utilities.errors import InfeasibleConfigurationError
from hamlaw.utilities.errors import InvalidArgumentError

logger = get_logger()

SCHEMA_VERSION = 1
GATE_PREFIX = "gate_"
CAP_PREFIX = "cap_"
LIST_FIELDS = ("scan_n",)


def _parse_pair(name: str, raw: str) -> tuple[float, float]:
    parts = [x.strip() for x in raw.split(",")]
    if len(parts) != 2:
        raise InvalidArgumentError(f"{name} needs 'lo,hi', got {raw!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as e:
        raise InvalidArgumentError(f"{name}: {e}") from e


def config_from_mapping(values: dict[str, str | None]) -> models.ExperimentConfig:
    """Build an ExperimentConfig from flat key=value strings.

    gate_<statistic>=lo,hi keys collect into gates, cap_<setting>=v keys into caps and
    scan_n takes a comma-separated list. Empty values count as unset.
    """
    fields: dict = {}
    gates: dict[str, tuple[float, float]] = {}
    caps: dict[str, str] = {}
    known = set(models.ExperimentConfig.model_fields) - {"gates", "caps"}
    for key, raw in values.items():
        if raw is None or raw.strip() == "":
            continue
        raw = raw.strip()
        if key.startswith(GATE_PREFIX):
            gates[key[len(GATE_PREFIX) :]] = _parse_pair(key, raw)
        elif key.startswith(CAP_PREFIX):
            name = key[len(CAP_PREFIX) :]
            if name not in Settings.model_fields:
                raise InvalidArgumentError(f"Unknown cap {name!r}")
            caps[name] = raw
        elif key in LIST_FIELDS:
            fields[key] = [x.strip() for x in raw.split(",") if x.strip()]
        elif key in known:
            fields[key] = raw
        else:
            raise InvalidArgumentError(f"Unknown configuration key {key!r}")
    try:
        return models.ExperimentConfig(**fields, gates=gates, caps=caps)
    except ValidationError as e:
        raise InvalidArgumentError(f"Invalid configuration: {e}") from e


def load_config(path: str | Path) -> models.ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"Configuration file not found: {path}")
    logger.debug(f"Loading configuration from {path}")
    return config_from_mapping(dotenv_values(path))


def config_to_text(config: models.ExperimentConfig) -> str:
    """key=value lines in field order; floats use repr so loading is lossless."""

    def render(value) -> str:
        if isinstance(value, bool):
            return str(value).lower()
        if isinstance(value, float):
            return repr(value)
        if isinstance(value, models.Experiment):
            return value.value
        return str(value)

    lines = []
    for name in models.ExperimentConfig.model_fields:
        if name in ("gates", "caps"):
            continue
        value = getattr(config, name)
        if value is None:
            continue
        if name in LIST_FIELDS:
            if value:
                lines.append(f"{name}={','.join(str(v) for v in value)}")
            continue
        lines.append(f"{name}={render(value)}")
    for name, (lower, upper) in sorted(config.gates.items()):
        lines.append(f"{GATE_PREFIX}{name}={lower!r},{upper!r}")
    for name, value in sorted(config.caps.items()):
        lines.append(f"{CAP_PREFIX}{name}={value}")
    return "\n".join(lines) + "\n"


def save_config(config: models.ExperimentConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config_to_text(config))
    return path


def csv_columns(K: int) -> list[str]:
    return (
        ["trial", "seed", "edge_count", "Z"]
        + [f"Y_{k}" for k in range(1, K + 1)]
        + ["Y_N", "X", "elapsed_ms", "model"]
    )


def records_frame(records: list[models.TrialRecord]) -> pd.DataFrame:
    """One row per record in the fixed column order; missing values stay empty."""
    K = max((len(record.y) for record in records), default=0)
    rows = []
    for record in records:
        y = record.y + [None] * (K - len(record.y))
        rows.append(
            [
                record.trial,
                record.seed,
                record.edge_count,
                None if record.z is None else str(record.z),
                *y,
                record.y_n,
                record.x,
                record.elapsed_ms,
                record.model.value,
            ]
        )
    return pd.DataFrame(rows, columns=csv_columns(K)).astype({"Z": "object"})


def emit_csv(result: models.ExperimentResult, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(result.records).to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(result.records)} trial records to {path}")
    return path


def _none_if_nan(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def read_csv(path: str | Path) -> list[models.TrialRecord]:
    """TrialRecords back from a CSV written by emit_csv."""
    path = Path(path)
    if not path.is_file():
        raise InvalidArgumentError(f"Trial CSV not found: {path}")
    # Only empty cells are missing; "null" is a model value.
    frame = pd.read_csv(
        path,
        dtype={"Z": str, "model": str},
        keep_default_na=False,
        na_values=[""],
        float_precision="round_trip",
    )
    y_columns = [c for c in frame.columns if c.startswith("Y_") and c != "Y_N"]
    records = []
    for row in frame.to_dict(orient="records"):
        z = _none_if_nan(row["Z"])
        records.append(
            models.TrialRecord(
                trial=int(row["trial"]),
                seed=int(row["seed"]),
                edge_count=int(row["edge_count"]),
                z=None if z is None else int(z),
                y=[row[c] for c in y_columns if _none_if_nan(row[c]) is not None],
                y_n=_none_if_nan(row["Y_N"]),
                x=_none_if_nan(row["X"]),
                elapsed_ms=_none_if_nan(row["elapsed_ms"]),
                model=row["model"],
            )
        )
    return records


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def summary_payload(result: models.ExperimentResult) -> dict:
    return _json_safe(
        {
            "schema": SCHEMA_VERSION,
            "experiment": result.config.experiment.value,
            "config": result.config.model_dump(mode="json"),
            "summary": result.summary,
            "reports": [report.model_dump(mode="json") for report in result.reports],
            "passed": result.passed,
        }
    )


def emit_json(result: models.ExperimentResult, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary_payload(result), indent=2, sort_keys=True) + "\n")
    logger.info(f"Wrote summary to {path}")
    return path


def constants_report(
    n: int, r: int, ell: int, K: int | None = None, settings: Settings | None = None
) -> dict:
    """Structural constants, A-table and cycle counts for the CLI and HTTP service."""
    settings = settings or get_settings()
    if K is None:
        K = theory.default_truncation(structures.compute_A_table(r, ell, 0, settings))
    constants = structures.theory_constants(n, r, ell, K, settings)
    return constants.model_dump(mode="json")


def theory_report(
    n: int,
    r: int,
    ell: int,
    p: float | None = None,
    c: float | None = None,
    target_m: float | None = None,
    K: int | None = None,
    settings: Settings | None = None,
) -> dict:
    """{p_star, p, c_n, E_Z, mu, sigma2, tail, K} at the given density.

    Exactly one of p, c and target_m must be given; K defaults to the harness rule.
    """
    settings = settings or get_settings()
    given = [x for x in (p, c, target_m) if x is not None]
    if len(given) != 1:
        raise InvalidArgumentError("Exactly one of p, c, target_m must be given")
    params = models.Params(n=n, r=r, ell=ell)
    if c is not None:
        p = theory.p_star(n, params, c)
    elif target_m is not None:
        p = theory.p_for_expectation(n, params, target_m, settings)
    if not 0 <= p <= 1:
        raise InfeasibleConfigurationError(f"Density p = {p} lies outside [0, 1]")
    params = params.with_p(p)
    K = theory.harness_truncation(n, settings) if K is None else K
    c_n = theory.density_ratio(n, params) if p > 0 else None
    converges = c_n is not None and c_n * math.exp(params.s) > 1
    law = theory.lognormal_params(params, c_n, K, settings) if converges else None
    return _json_safe(
        {
            "n": n,
            "r": r,
            "ell": ell,
            "p": p,
            "p_star": theory.p_star(n, params, 1.0),
            "c_n": c_n,
            "E_Z": theory.expected_z(n, params, p, settings).value,
            "mu": law.mu if law else None,
            "sigma2": law.sigma2 if law else None,
            "tail": law.tail if law else None,
            "K": K,
        }
    )
