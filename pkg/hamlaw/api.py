from fastapi import Body
from fastapi import FastAPI
from fastapi import HTTPException
from fastapi import Query
from pydantic import BaseModel
from pydantic import ValidationError

import hamlaw.utilities.counting as counting
import hamlaw.utilities.data_models as models
import hamlaw.utilities.hypergraph as hypergraph
import hamlaw.utilities.reports as reports
import hamlaw.utilities.theory as theory
from hamlaw.configs.config import get_logger
from hamlaw.utilities.errors import HamlawError
from hamlaw.utilities.errors import InfeasibleConfigurationError
from hamlaw.utilities.errors import InvalidArgumentError

logger = get_logger()
app = FastAPI(title="hamlaw")


class StatYRequest(BaseModel):
    graph: str
    ell: int
    p: float
    K: int = 3
    c: float | None = None


def _raise_http(e: Exception):
    """InvalidArgument, Infeasible and validation errors answer 422; any other library
    error answers 400."""
    usage = InvalidArgumentError | InfeasibleConfigurationError | ValidationError
    if isinstance(e, usage):
        raise HTTPException(status_code=422, detail=str(e)) from e
    raise HTTPException(status_code=400, detail=f"{type(e).__name__}: {e}") from e


@app.get("/constants")
def get_constants(
    n: int = Query(...),
    r: int = Query(...),
    ell: int = Query(...),
    K: int | None = Query(None),
) -> dict:
    """Structural constants for (n, r, ell).

    Args:
        n (int): Vertex count.
        r (int): Uniformity.
        ell (int): Overlap of consecutive edges.
        K (int | None): Length of the A-table; max(k_stab + 5, 8) when omitted.

    Returns:
        dict: TheoryConstants, big integers as decimal strings.
    """
    try:
        return reports.constants_report(n, r, ell, K)
    except (HamlawError, ValidationError) as e:
        _raise_http(e)


@app.get("/theory")
def get_theory(
    n: int = Query(...),
    r: int = Query(...),
    ell: int = Query(...),
    p: float | None = Query(None),
    c: float | None = Query(None),
    target_m: float | None = Query(None),
    K: int | None = Query(None),
) -> dict:
    try:
        return reports.theory_report(n, r, ell, p, c, target_m, K)
    except (HamlawError, ValidationError) as e:
        _raise_http(e)


@app.post("/count")
def post_count(
    graph: str = Body(..., media_type="text/plain"),
    ell: int = Query(...),
    method: models.CountMethod | None = Query(None),
) -> dict:
    """Exact Hamilton ell-cycle count of a hypergraph sent in the text format."""
    try:
        parsed = hypergraph.load_text(graph)
        result = counting.count_hamilton(parsed, ell, method)
    except (HamlawError, ValidationError) as e:
        _raise_http(e)
    logger.debug(f"POST /count n={parsed.n} edges={parsed.edge_count} -> {result.count}")
    return result.model_dump(mode="json")


@app.post("/stat-y")
def post_stat_y(request: StatYRequest) -> dict:
    try:
        graph = hypergraph.load_text(request.graph)
        params = models.Params(n=graph.n, r=graph.r, ell=request.ell, p=request.p)
        c = theory.density_ratio(graph.n, params) if request.c is None else request.c
        return counting.y_combined(graph, params, c, request.K).model_dump(mode="json")
    except (HamlawError, ValidationError) as e:
        _raise_http(e)
