import time
from fractions import Fraction
from itertools import combinations
from itertools import permutations
from math import exp
from math import factorial
from math import fsum
from math import prod
from math import sqrt

import hamlaw.utilities.data_models as models
import hamlaw.utilities.structures as structures
import hamlaw.utilities.theory as theory
from hamlaw.configs.config import Settings
from hamlaw.configs.config import get_logger
from hamlaw.configs.config import get_settings
from hamlaw.utilities.errors import InternalConsistencyError
from hamlaw.utilities.errors import InvalidArgumentError
from hamlaw.utilities.errors import ResourceLimitError

logger = get_logger()


class SearchBudget:
    """Counts search nodes and raises ResourceLimitError past the limit"""

    def __init__(self, limit: int):
        self.limit = limit
        self.nodes = 0

    def tick(self, amount: int = 1) -> None:
        self.nodes += amount
        if self.nodes > self.limit:
            raise ResourceLimitError(f"Search exceeded node_budget = {self.limit}")


def _ordered_splits(items, sizes):
    """Ordered partitions of items into consecutive parts of the given sizes."""
    if not sizes:
        yield ()
        return
    for part in combinations(items, sizes[0]):
        rest = [v for v in items if v not in part]
        for tail in _ordered_splits(rest, sizes[1:]):
            yield (part, *tail)


def _cycle_geometry(graph: models.Hypergraph, ell: int) -> tuple[int, int, int, int]:
    r, n = graph.r, graph.n
    s, t, _ = structures.derive_constants(r, ell)
    if n % s or n < r + s:
        raise InvalidArgumentError(f"No Hamilton {ell}-cycle geometry for n={n}, r={r}")
    return s, t, (r - t) // s, n // s


def _ordered_tight_sequences(graph: models.Hypergraph, budget: SearchBudget) -> int:
    """Cyclic sequences with sigma(0) = 0 and sigma(1) < sigma(n-1) whose r-windows
    are all edges, by DP over (visited mask, last r-1 vertices)."""
    n, r = graph.n, graph.r
    full = (1 << n) - 1
    total = 0
    for tail in permutations(range(1, n), r - 2):
        prefix = (0, *tail)
        mask = 0
        for v in prefix:
            mask |= 1 << v
        layer = {(mask, prefix): 1}
        for _ in range(n - r + 1):
            following = {}
            for (mask, last), ways in layer.items():
                for edge in graph.edges_containing(last):
                    x = next(v for v in edge if v not in last)
                    if mask >> x & 1:
                        continue
                    budget.tick()
                    key = (mask | 1 << x, last[1:] + (x,))
                    following[key] = following.get(key, 0) + ways
            layer = following
            if not layer:
                break
        for (mask, last), ways in layer.items():
            if mask != full or not prefix[1] < last[-1]:
                continue
            closing = last + prefix
            if all(graph.has_edge(closing[i : i + r]) for i in range(r - 1)):
                total += ways
    return total


def _class_sequences(graph: models.Hypergraph, ell: int, budget: SearchBudget):
    """Yield Hamilton cycles as block sequences [(T_0, U_0), ..., (T_{m-1}, U_{m-1})].

    Block b holds positions b*s .. b*s + s - 1, T_b its first t positions and U_b the
    remaining s - t. Vertices inside T_b (or U_b) are interchangeable, so each part is a
    set. Vertex 0 is fixed in block 0.
    """
    n = graph.n
    s, t, q, m = _cycle_geometry(graph, ell)
    tparts: list = [None] * m
    uparts: list = [None] * m
    used: set[int] = set()

    def block(b: int) -> tuple[int, ...]:
        return tparts[b] + uparts[b]

    def window_vertices(j: int) -> list[int]:
        vertices = [v for i in range(q) for v in block((j + i) % m)]
        vertices.extend(tparts[(j + q) % m])
        return vertices

    def extend(j: int):
        budget.tick()
        if j + q <= m - 1:
            face = [v for b in range(j, j + q - 1) for v in block(b)]
            face.extend(tparts[j + q - 1])
            face_set = set(face)
            for edge in graph.edges_containing(face):
                new = [v for v in edge if v not in face_set]
                if any(v in used for v in new):
                    continue
                used.update(new)
                for upart in combinations(new, s - t):
                    uparts[j + q - 1] = upart
                    tparts[j + q] = tuple(v for v in new if v not in upart)
                    yield from extend(j + 1)
                used.difference_update(new)
            uparts[j + q - 1] = None
            tparts[j + q] = None
            return
        uparts[m - 1] = tuple(v for v in range(n) if v not in used)
        if all(graph.has_edge(window_vertices(jj)) for jj in range(m - q, m)):
            yield [(tparts[b], uparts[b]) for b in range(m)]
        uparts[m - 1] = None

    sizes = [t, s - t] * q + [t]
    for edge in graph.edges_containing((0,)):
        used.update(edge)
        for parts in _ordered_splits(edge, sizes):
            if 0 not in parts[0] and 0 not in parts[1]:
                continue
            for b in range(q):
                tparts[b], uparts[b] = parts[2 * b], parts[2 * b + 1]
            tparts[q] = parts[2 * q]
            yield from extend(1)
        used.difference_update(edge)


def count_hamilton(
    graph: models.Hypergraph,
    ell: int,
    method: models.CountMethod | str | None = None,
    settings: Settings | None = None,
) -> models.CountResult:
    """Exact number of distinct Hamilton ell-cycle copies (edge sets) in graph.

    Args:
        graph (models.Hypergraph):
            Host hypergraph; s must divide its vertex count.
        ell (int):
            Overlap of consecutive cycle edges.
        method (models.CountMethod | str | None, optional):
            Force subset-dp (tight cycles only) or backtracking; by default tight
            cycles within dp_max_n use the DP and everything else backtracks.
        settings (Settings | None, optional):
            Resource caps; defaults to the process settings.

    Returns:
        models.CountResult:
            The count with the ordered count and the symmetry factor it was divided by.
    """
    settings = settings or get_settings()
    n, r = graph.n, graph.r
    s, _, lam = structures.derive_constants(r, ell)
    _, _, _, m = _cycle_geometry(graph, ell)
    if method is None:
        use_dp = s == 1 and n <= settings.dp_max_n
        method = (
            models.CountMethod.SUBSET_DP if use_dp else models.CountMethod.BACKTRACKING
        )
    method = models.CountMethod(method)
    budget = SearchBudget(settings.node_budget)
    started = time.perf_counter()
    if method == models.CountMethod.SUBSET_DP:
        if s != 1:
            raise InvalidArgumentError("subset-dp counts tight cycles (ell = r - 1) only")
        if n > settings.dp_max_n:
            raise ResourceLimitError(f"n = {n} exceeds dp_max_n = {settings.dp_max_n}")
        ordered = _ordered_tight_sequences(graph, budget)
        broken_factor = 2 * n
    else:
        if n > settings.backtrack_max_n:
            raise ResourceLimitError(
                f"n = {n} exceeds backtrack_max_n = {settings.backtrack_max_n}"
            )
        ordered = sum(1 for _ in _class_sequences(graph, ell, budget))
        broken_factor = m * lam**m
    aut = structures.aut_cycle(n, r, ell, settings)
    numerator = ordered * broken_factor
    if numerator % aut:
        raise InternalConsistencyError(
            f"Ordered count {ordered} x {broken_factor} not divisible by Aut(C) = {aut}"
        )
    elapsed = time.perf_counter() - started
    logger.debug(f"count_hamilton n={n} method={method.value} nodes={budget.nodes}")
    return models.CountResult(
        count=numerator // aut,
        elapsed=elapsed,
        method=method,
        nodes_explored=budget.nodes,
        ordered_count=ordered,
        broken_factor=broken_factor,
    )


def enumerate_hamilton(
    graph: models.Hypergraph, ell: int, settings: Settings | None = None
) -> list[models.CycleCopy]:
    """All distinct Hamilton ell-cycle copies, deduplicated by edge-rank signature."""
    settings = settings or get_settings()
    if graph.n > settings.backtrack_max_n:
        raise ResourceLimitError(
            f"n = {graph.n} exceeds backtrack_max_n = {settings.backtrack_max_n}"
        )
    budget = SearchBudget(settings.node_budget)
    found: dict[tuple[int, ...], models.CycleCopy] = {}
    for blocks in _class_sequences(graph, ell, budget):
        sequence = tuple(v for tpart, upart in blocks for v in (*tpart, *upart))
        cycle = models.CycleCopy(vertex_sequence=sequence, r=graph.r, ell=ell)
        signature = cycle.signature
        if signature in found:
            continue
        if len(found) >= settings.enumerate_cap:
            raise ResourceLimitError(
                f"More than enumerate_cap = {settings.enumerate_cap} copies"
            )
        found[signature] = cycle
    return [found[key] for key in sorted(found)]


def count_embeddings(
    pattern_edges, graph: models.Hypergraph, budget: SearchBudget | None = None
) -> int:
    """Injective maps of the pattern's covered vertices into graph sending every pattern
    edge onto a graph edge.

    Pattern edges are matched in the given order. Vertices first seen in the same pattern
    edge and lying in the same later edges are twins: they are placed as a set and the
    count is weighted by the factorial of the group size.
    """
    pattern = [tuple(e) for e in pattern_edges]
    if budget is None:
        budget = SearchBudget(get_settings().node_budget)
    plan = []
    seen: set = set()
    for i, edge in enumerate(pattern):
        if len(edge) != graph.r:
            raise InvalidArgumentError(f"Pattern edge {edge} is not {graph.r}-uniform")
        known = [v for v in edge if v in seen]
        groups: dict[tuple[int, ...], list] = {}
        for v in edge:
            if v in seen:
                continue
            later = tuple(j for j in range(i + 1, len(pattern)) if v in pattern[j])
            groups.setdefault(later, []).append(v)
        members = list(groups.values())
        sizes = [len(g) for g in members]
        plan.append((known, members, sizes, prod(factorial(size) for size in sizes)))
        seen.update(edge)

    images: dict = {}
    used: set[int] = set()

    def extend(i: int) -> int:
        budget.tick()
        if i == len(plan):
            return 1
        known, members, sizes, weight = plan[i]
        face = [images[v] for v in known]
        if not members:
            return extend(i + 1) if graph.has_edge(face) else 0
        face_set = set(face)
        total = 0
        for edge in graph.edges_containing(face):
            new_images = [w for w in edge if w not in face_set]
            if any(w in used for w in new_images):
                continue
            used.update(new_images)
            for parts in _ordered_splits(new_images, sizes):
                for group, part in zip(members, parts):
                    images.update(zip(group, part))
                total += weight * extend(i + 1)
            used.difference_update(new_images)
        return total

    return extend(0)


def count_paths(
    graph: models.Hypergraph, k: int, r: int, ell: int, settings: Settings | None = None
) -> int:
    """Distinct copies of P_k in graph: ordered embeddings over Aut(P_k)."""
    settings = settings or get_settings()
    if graph.r != r:
        raise InvalidArgumentError(f"Graph is {graph.r}-uniform, pattern is {r}-uniform")
    path = structures.build_path(k, r, ell)
    ordered = count_embeddings(path.edges, graph, SearchBudget(settings.node_budget))
    aut = structures.aut_path(k, r, ell, settings)
    if ordered % aut:
        raise InternalConsistencyError(
            f"{ordered} embeddings not divisible by Aut(P_{k}) = {aut}"
        )
    return ordered // aut


def y_statistic(
    graph: models.Hypergraph,
    k: int,
    params: models.Params,
    settings: Settings | None = None,
) -> models.YStatistic:
    """Normalised path statistic Y(P_k) by inclusion-exclusion over edge subsets.

    For each subset A of the k path edges the ordered embeddings whose A-edges are present
    are counted exactly, the remaining pattern vertices contributing a falling factorial.
    The weighted sum is exact; the only float step is the final normalisation.
    """
    settings = settings or get_settings()
    if not 1 <= k <= settings.k_max:
        raise ResourceLimitError(f"k = {k} outside [1, k_max = {settings.k_max}]")
    if not 0 < params.p < 1:
        raise InvalidArgumentError(f"Y is defined for 0 < p < 1, got p = {params.p}")
    if graph.n != params.n or graph.r != params.r:
        raise InvalidArgumentError("Graph does not match params")
    n, p = params.n, params.p
    path = structures.build_path(k, params.r, params.ell)
    pattern, v = path.edges, path.v
    p_exact = Fraction(p)
    budget = SearchBudget(settings.node_budget)
    memo: dict[tuple[int, ...], int] = {}
    by_size = [Fraction(0)] * (k + 1)
    for size in range(k + 1):
        weight = (-p_exact) ** (k - size)
        for subset in combinations(range(k), size):
            shape = tuple(i - subset[0] for i in subset) if subset else ()
            if shape not in memo:
                edges_a = [pattern[i] for i in shape]
                covered = len({x for e in edges_a for x in e})
                embedded = count_embeddings(edges_a, graph, budget)
                free = structures.falling_factorial(n - covered, v - covered)
                memo[shape] = embedded * free
            by_size[size] += weight * memo[shape]
    aut = structures.aut_path(k, params.r, params.ell, settings)
    scale = sqrt(aut * structures.falling_factorial(n, v)) * (p * (1 - p)) ** (k / 2)
    return models.YStatistic(
        k=k,
        value=float(sum(by_size)) / scale,
        components=[float(x) / scale for x in by_size],
    )


def path_coefficients(
    params: models.Params, c: float, K: int, settings: Settings | None = None
) -> list[float]:
    """t_k = sqrt(A_k c^-k e^-ks) / s for k = 1..K."""
    table = structures.compute_A_table(params.r, params.ell, K, settings)
    s = params.s
    return [
        sqrt(float(table.values[k - 1]) * c ** (-k) * exp(-k * s)) / s
        for k in range(1, K + 1)
    ]


def y_combined(
    graph: models.Hypergraph,
    params: models.Params,
    c: float,
    K: int,
    settings: Settings | None = None,
) -> models.YCombined:
    settings = settings or get_settings()
    if K < 0:
        raise InvalidArgumentError("K must be non-negative")
    if K > settings.k_max:
        raise ResourceLimitError(f"K = {K} exceeds k_max = {settings.k_max}")
    coefficients = path_coefficients(params, c, K, settings)
    values = [y_statistic(graph, k, params, settings).value for k in range(1, K + 1)]
    return models.YCombined(
        K=K,
        c=c,
        values=values,
        coefficients=coefficients,
        y_n=fsum(tk * yk for tk, yk in zip(coefficients, values)),
        tail_bound=theory.series_tail(params.r, params.ell, c, K, settings),
    )


def combine_x(z: int, expected_z: float, y_n: float) -> float:
    if z == 0:
        return 0.0
    return z / expected_z * exp(-y_n)


def x_statistic(
    graph: models.Hypergraph,
    params: models.Params,
    c: float,
    K: int,
    settings: Settings | None = None,
) -> float:
    """X = Z / E[Z] * exp(-Y_N)."""
    z = count_hamilton(graph, params.ell, settings=settings).count
    if z == 0:
        return 0.0
    expected = theory.expected_z(params.n, params, params.p, settings).value
    return combine_x(z, expected, y_combined(graph, params, c, K, settings).y_n)
