from functools import lru_cache
from math import comb

import numpy as np

import hamlaw.utilities.counting as counting
import hamlaw.utilities.data_models as models
import hamlaw.utilities.structures as structures
from hamlaw.configs.config import Settings
from hamlaw.configs.config import get_logger
from hamlaw.configs.config import get_settings
from hamlaw.utilities.combinadic import rank_subset
from hamlaw.utilities.errors import InfeasibleConfigurationError
from hamlaw.utilities.errors import InternalConsistencyError
from hamlaw.utilities.errors import InvalidArgumentError
from hamlaw.utilities.rng import Purpose
from hamlaw.utilities.rng import generator
from hamlaw.utilities.rng import uniforms

logger = get_logger()

BINARY_MAGIC = b"HMLW"
BINARY_VERSION = 1


def complete_hypergraph(n: int, r: int) -> models.Hypergraph:
    return models.Hypergraph(n=n, r=r, ranks=frozenset(range(comb(n, r))))


def hypergraph_from_edges(n: int, r: int, edges) -> models.Hypergraph:
    """Hypergraph from vertex tuples in any order; duplicates collapse."""
    ranks = frozenset(rank_subset(tuple(sorted(edge)), n, r) for edge in edges)
    return models.Hypergraph(n=n, r=r, ranks=ranks)


def add_edge(graph: models.Hypergraph, edge) -> models.Hypergraph:
    rank = rank_subset(tuple(sorted(edge)), graph.n, graph.r)
    return models.Hypergraph(n=graph.n, r=graph.r, ranks=graph.ranks | {rank})


def _bernoulli_ranks(
    seed: models.Seed, purpose: Purpose, n: int, r: int, q: float
) -> np.ndarray:
    """Ranks i whose i-th uniform of the purpose stream falls below q."""
    return np.flatnonzero(uniforms(seed, purpose, comb(n, r)) < q)


def sample_gnp(params: models.Params, seed: models.Seed) -> models.Hypergraph:
    """G_r(n, p): edge of rank i present iff the i-th EDGES uniform is below p."""
    ranks = _bernoulli_ranks(seed, Purpose.EDGES, params.n, params.r, params.p)
    return models.Hypergraph(n=params.n, r=params.r, ranks=frozenset(ranks.tolist()))


def _random_cycle(
    params: models.Params, seed: models.Seed, purpose: Purpose
) -> models.CycleCopy:
    """Uniform Hamilton cycle copy: each copy is hit by exactly Aut(C) permutations."""
    sequence = generator(seed, purpose).permutation(params.n)
    return models.CycleCopy(
        vertex_sequence=tuple(sequence.tolist()), r=params.r, ell=params.ell
    )


def plant_cycle(params: models.Params, seed: models.Seed) -> models.PlantedInstance:
    """Planted model: a uniform cycle copy on top of sample_gnp(params, seed)."""
    cycle = _random_cycle(params, seed, Purpose.PLANT)
    background = _bernoulli_ranks(seed, Purpose.EDGES, params.n, params.r, params.p)
    ranks = frozenset(background.tolist()) | frozenset(cycle.ranks)
    graph = models.Hypergraph(n=params.n, r=params.r, ranks=ranks)
    return models.PlantedInstance(
        graph=graph, planted=[cycle], scheme=models.PlantingScheme.SINGLE
    )


@lru_cache(maxsize=16)
def _all_cycles(n: int, r: int, ell: int) -> tuple[models.CycleCopy, ...]:
    return tuple(counting.enumerate_hamilton(complete_hypergraph(n, r), ell))


def _second_cycle_enumerated(
    first: models.CycleCopy, overlap_t: int, rng: np.random.Generator
) -> models.CycleCopy:
    first_ranks = set(first.ranks)
    partners = [
        cycle
        for cycle in _all_cycles(first.n, first.r, first.ell)
        if len(first_ranks.intersection(cycle.ranks)) == overlap_t
    ]
    if not partners:
        raise InfeasibleConfigurationError(
            f"No Hamilton cycle pair on n={first.n} shares exactly {overlap_t} edges"
        )
    return partners[int(rng.integers(len(partners)))]


def _second_cycle_segment(
    first: models.CycleCopy, overlap_t: int, rng: np.random.Generator, max_tries: int
) -> models.CycleCopy:
    """Keep windows 0..overlap_t-1 of the first cycle and shuffle every other position,
    rejecting until the overlap is exactly overlap_t."""
    n, s, r = first.n, first.s, first.r
    kept = 0 if overlap_t == 0 else min(n, (overlap_t - 1) * s + r)
    free = list(range(kept, n))
    sequence = list(first.vertex_sequence)
    first_ranks = set(first.ranks)
    for _ in range(max_tries):
        shuffled = sequence.copy()
        values = [sequence[i] for i in free]
        for i, v in zip(free, rng.permutation(values).tolist()):
            shuffled[i] = v
        candidate = models.CycleCopy(vertex_sequence=tuple(shuffled), r=r, ell=first.ell)
        if len(first_ranks.intersection(candidate.ranks)) == overlap_t:
            return candidate
    raise InfeasibleConfigurationError(
        f"Contiguous-segment scheme found no partner with overlap {overlap_t} "
        f"after {max_tries} tries"
    )


def plant_two_cycles(
    params: models.Params,
    overlap_t: int,
    seed: models.Seed,
    settings: Settings | None = None,
) -> models.PlantedInstance:
    """Double-planted model: two cycle copies sharing exactly overlap_t edges.

    Args:
        params (models.Params):
            Model parameters; the background edges are those of sample_gnp.
        overlap_t (int):
            Number of shared edges, 0 <= overlap_t <= n / s.
        seed (models.Seed):
            Trial seed.
        settings (Settings | None, optional):
            double_plant_max_cycles selects the scheme; double_plant_max_tries bounds
            the rejection loop of the constructive scheme.

    Returns:
        models.PlantedInstance:
            Graph, both cycles and the scheme actually used.
    """
    settings = settings or get_settings()
    m = params.m_edges
    if not 0 <= overlap_t <= m:
        raise InfeasibleConfigurationError(
            f"overlap_t must lie in [0, {m}], got {overlap_t}"
        )
    if params.s == 1 and overlap_t == m - 1:
        raise InfeasibleConfigurationError("Tight cycles cannot share m - 1 edges")
    first = _random_cycle(params, seed, Purpose.PLANT)
    rng = generator(seed, Purpose.PLANT_SECOND)
    if overlap_t == m:
        second = first
        scheme = models.PlantingScheme.SINGLE
    elif structures.n_cycles_complete(params.n, params.r, params.ell, settings) <= (
        settings.double_plant_max_cycles
    ):
        second = _second_cycle_enumerated(first, overlap_t, rng)
        scheme = models.PlantingScheme.ENUMERATED_UNIFORM
    else:
        tries = settings.double_plant_max_tries
        second = _second_cycle_segment(first, overlap_t, rng, tries)
        scheme = models.PlantingScheme.CONTIGUOUS_SEGMENT
    shared = len(set(first.ranks) & set(second.ranks))
    if shared != overlap_t:
        raise InternalConsistencyError(
            f"Planted overlap {shared} differs from {overlap_t}"
        )
    background = _bernoulli_ranks(seed, Purpose.EDGES, params.n, params.r, params.p)
    ranks = frozenset(background.tolist()).union(first.ranks, second.ranks)
    graph = models.Hypergraph(n=params.n, r=params.r, ranks=ranks)
    logger.debug(f"Double planting n={params.n} t={overlap_t} scheme={scheme.value}")
    return models.PlantedInstance(
        graph=graph, planted=[first, second], overlap_t=shared, scheme=scheme
    )


def thin(graph: models.Hypergraph, q: float, seed: models.Seed) -> models.Hypergraph:
    """Keep each edge independently with probability q (THIN stream, indexed by rank)."""
    if not 0 <= q <= 1:
        raise InvalidArgumentError(f"q must lie in [0, 1], got {q}")
    keep = uniforms(seed, Purpose.THIN, comb(graph.n, graph.r)) < q
    return models.Hypergraph(
        n=graph.n, r=graph.r, ranks=frozenset(rank for rank in graph.ranks if keep[rank])
    )


def relabel(graph: models.Hypergraph, permutation) -> models.Hypergraph:
    """Image of graph under the vertex map i -> permutation[i]."""
    permutation = [int(v) for v in permutation]
    if sorted(permutation) != list(range(graph.n)):
        raise InvalidArgumentError("permutation must be a bijection on [0, n)")
    edges = (tuple(sorted(permutation[v] for v in edge)) for edge in graph.edges)
    return hypergraph_from_edges(graph.n, graph.r, edges)


def dump_text(graph: models.Hypergraph, comment: str | None = None) -> str:
    """Text form: optional '#' comment lines, header 'n r edge_count', one sorted edge
    per line in rank order."""
    lines = [f"# {line}" for line in comment.splitlines()] if comment else []
    lines.append(f"{graph.n} {graph.r} {graph.edge_count}")
    lines.extend(" ".join(str(v) for v in edge) for edge in graph.edges)
    return "\n".join(lines) + "\n"


def load_text(text: str) -> models.Hypergraph:
    rows = [
        line.split()
        for line in text.splitlines()
        if line.strip() and not line.startswith("#")
    ]
    if not rows or len(rows[0]) != 3:
        raise InvalidArgumentError("Missing 'n r edge_count' header")
    try:
        n, r, count = (int(x) for x in rows[0])
        edges = [tuple(int(v) for v in row) for row in rows[1:]]
    except ValueError as e:
        raise InvalidArgumentError(f"Malformed hypergraph text: {e}") from e
    if len(edges) != count:
        raise InvalidArgumentError(f"Header announces {count} edges, found {len(edges)}")
    graph = hypergraph_from_edges(n, r, edges)
    if graph.edge_count != count:
        raise InvalidArgumentError("Duplicate edges in hypergraph text")
    return graph


def dump_binary(graph: models.Hypergraph) -> bytes:
    """Binary form: b'HMLW', version byte, then little-endian uint64 n, r, edge_count
    and the sorted ranks."""
    if graph.ranks and max(graph.ranks) >= models.UINT64_LIMIT:
        raise InvalidArgumentError("Ranks do not fit the binary uint64 format")
    header = np.array([graph.n, graph.r, graph.edge_count], dtype="<u8")
    body = np.array(sorted(graph.ranks), dtype="<u8")
    return BINARY_MAGIC + bytes([BINARY_VERSION]) + header.tobytes() + body.tobytes()


def load_binary(data: bytes) -> models.Hypergraph:
    if data[:4] != BINARY_MAGIC or len(data) < 29:
        raise InvalidArgumentError("Not a hamlaw binary hypergraph")
    if data[4] != BINARY_VERSION:
        raise InvalidArgumentError(f"Unsupported binary version {data[4]}")
    n, r, count = (int(x) for x in np.frombuffer(data, dtype="<u8", count=3, offset=5))
    if len(data) != 29 + 8 * count:
        raise InvalidArgumentError("Binary payload length does not match edge_count")
    ranks = np.frombuffer(data, dtype="<u8", count=count, offset=29)
    return models.Hypergraph(n=n, r=r, ranks=frozenset(int(x) for x in ranks))

