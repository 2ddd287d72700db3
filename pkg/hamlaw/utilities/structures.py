from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from math import factorial
from math import perm

from pydantic import ValidationError

import hamlaw.utilities.data_models as models
from hamlaw.configs.config import Settings
from hamlaw.configs.config import get_logger
from hamlaw.configs.config import get_settings
from hamlaw.utilities.errors import InternalConsistencyError
from hamlaw.utilities.errors import InvalidArgumentError
from hamlaw.utilities.errors import ResourceLimitError

logger = get_logger()


def derive_constants(r: int, ell: int) -> tuple[int, int, int]:
    """Structural constants of r-uniform ell-cycles.

    Args:
        r (int): Uniformity, at least 3.
        ell (int): Overlap of consecutive edges, 2 <= ell < r.

    Returns:
        tuple[int, int, int]:
            (s, t, lambda) with s = r - ell, t in [1, s] congruent to r mod s and
            lambda = t! (s - t)!.
    """
    if ell >= r:
        raise InvalidArgumentError(f"ell must be smaller than r, got ell={ell}, r={r}")
    if ell < 2:
        raise InvalidArgumentError(f"ell must be at least 2, got {ell}")
    s = r - ell
    t = models.residue_t(r, s)
    return s, t, factorial(t) * factorial(s - t)


def falling_factorial(n: int, k: int) -> int:
    if k < 0:
        raise InvalidArgumentError("k must be non-negative")
    return perm(n, k) if n >= 0 else 0


def _check_cycle_length(n: int, r: int, ell: int) -> int:
    s, _, _ = derive_constants(r, ell)
    if n % s:
        raise InvalidArgumentError(f"s = {s} does not divide n = {n}")
    if n < r + s:
        raise InvalidArgumentError(f"n must be at least r + s = {r + s}")
    return s


def build_cycle(n: int, r: int, ell: int) -> models.CycleCopy:
    """Canonical Hamilton ell-cycle on 0..n-1 in natural order."""
    _check_cycle_length(n, r, ell)
    return models.CycleCopy(vertex_sequence=tuple(range(n)), r=r, ell=ell)


def cycle_from_sequence(sequence, r: int, ell: int) -> models.CycleCopy:
    try:
        return models.CycleCopy(vertex_sequence=tuple(sequence), r=r, ell=ell)
    except ValidationError as e:
        raise InvalidArgumentError(str(e)) from e


def build_path(k: int, r: int, ell: int) -> models.PathCopy:
    """Canonical ell-path with k edges on 0..ell + k*s - 1."""
    s, _, _ = derive_constants(r, ell)
    if k < 1:
        raise InvalidArgumentError(f"A path needs at least one edge, got k={k}")
    return models.PathCopy(vertex_sequence=tuple(range(ell + k * s)), r=r, ell=ell)


def _count_automorphisms(edges, v: int) -> int:
    """Backtracking over images of 0, 1, ..., v-1.

    Candidates must match the degree and co-degree profile of the vertex they replace
    and keep co-degrees with every vertex already placed; an edge is checked as soon as
    its largest vertex has an image.
    """
    edge_sets = {frozenset(e) for e in edges}
    for e in edge_sets:
        if min(e) < 0 or max(e) >= v:
            raise InvalidArgumentError(
                f"Edge {sorted(e)} leaves the vertex range [0, {v})"
            )
    degree = [0] * v
    codeg = [[0] * v for _ in range(v)]
    for e in edge_sets:
        for a in e:
            degree[a] += 1
        for a, b in combinations(e, 2):
            codeg[a][b] += 1
            codeg[b][a] += 1
    profile = [(degree[u], tuple(sorted(codeg[u]))) for u in range(v)]
    closing = [[] for _ in range(v)]
    for e in edge_sets:
        closing[max(e)].append(tuple(e))

    image = [-1] * v
    used = [False] * v

    def extend(u: int) -> int:
        if u == v:
            return 1
        total = 0
        for w in range(v):
            if used[w] or profile[w] != profile[u]:
                continue
            if any(codeg[u][x] != codeg[w][image[x]] for x in range(u)):
                continue
            image[u] = w
            if all(frozenset(image[a] for a in e) in edge_sets for e in closing[u]):
                used[w] = True
                total += extend(u + 1)
                used[w] = False
        image[u] = -1
        return total

    return extend(0)


def aut_bruteforce(edges, v: int, settings: Settings | None = None) -> int:
    """Number of vertex permutations of 0..v-1 mapping the edge set onto itself.

    Args:
        edges (Iterable[Iterable[int]]):
            Edge set over vertices 0..v-1.
        v (int):
            Number of vertices, including isolated ones.
        settings (Settings | None, optional):
            Source of aut_cap; defaults to the process settings.

    Returns:
        int:
            |Aut(H)|, exact.
    """
    settings = settings or get_settings()
    if v > settings.aut_cap:
        raise ResourceLimitError(f"v = {v} exceeds aut_cap = {settings.aut_cap}")
    return _count_automorphisms(edges, v)


@lru_cache(maxsize=256)
def _path_automorphisms(k: int, r: int, ell: int) -> int:
    path = build_path(k, r, ell)
    return _count_automorphisms(path.edges, path.v)


@lru_cache(maxsize=256)
def _cycle_automorphisms(n: int, r: int, ell: int) -> int:
    cycle = build_cycle(n, r, ell)
    return _count_automorphisms(cycle.edges, n)


def _stabilization(values: list[Fraction]) -> tuple[int | None, Fraction | None]:
    """Start of the final constant run, provided it spans at least three entries."""
    if len(values) < 3 or not values[-1] == values[-2] == values[-3]:
        return None, None
    k = len(values)
    while k > 1 and values[k - 2] == values[-1]:
        k -= 1
    return k, values[-1]


def compute_A_table(
    r: int, ell: int, K: int, settings: Settings | None = None
) -> models.ATable:
    """A_k = Aut(P_k) / lambda^k for k = 1..K.

    Every k whose path fits under aut_cap is brute-forced, so k_stab is reported even
    when K is small. Larger k reuse the stable value, which requires the last three
    brute-forced entries to agree.
    """
    settings = settings or get_settings()
    s, _, lam = derive_constants(r, ell)
    if K < 0:
        raise InvalidArgumentError("K must be non-negative")
    k_limit = max(0, (settings.aut_cap - ell) // s)
    brute = [
        Fraction(_path_automorphisms(k, r, ell), lam**k) for k in range(1, k_limit + 1)
    ]
    k_stab, a_stab = _stabilization(brute)
    if K <= k_limit:
        return models.ATable(
            r=r,
            ell=ell,
            values=brute[:K],
            k_stab=k_stab,
            a_stab=a_stab,
            brute_forced_through=k_limit,
        )
    if k_stab is None:
        raise ResourceLimitError(
            f"A_k for (r={r}, ell={ell}) not stabilized by k={k_limit}; "
            f"cannot reach K={K}"
        )
    logger.warning(f"A_k for k > {k_limit} extrapolated from stable value {a_stab}")
    return models.ATable(
        r=r,
        ell=ell,
        values=brute + [a_stab] * (K - k_limit),
        k_stab=k_stab,
        a_stab=a_stab,
        brute_forced_through=k_limit,
        extrapolated_from=k_limit + 1,
    )


def aut_path(k: int, r: int, ell: int, settings: Settings | None = None) -> int:
    settings = settings or get_settings()
    s, _, lam = derive_constants(r, ell)
    if ell + k * s <= settings.aut_cap:
        return _path_automorphisms(k, r, ell)
    a_k = compute_A_table(r, ell, k, settings).values[k - 1] * lam**k
    if a_k.denominator != 1:
        raise InternalConsistencyError(
            f"Extrapolated Aut(P_{k}) = {a_k} is not an integer"
        )
    return a_k.numerator


def closed_form_aut_cycle(n: int, r: int, ell: int) -> int:
    """2 m lambda^m with m = n / s."""
    s = _check_cycle_length(n, r, ell)
    _, _, lam = derive_constants(r, ell)
    m = n // s
    return 2 * m * lam**m


@lru_cache(maxsize=64)
def _validation_table(r: int, ell: int, cap: int) -> tuple[tuple[int, int, int], ...]:
    s, _, _ = derive_constants(r, ell)
    rows = []
    for n in range(r + 2 * s, cap + 1):
        if n % s == 0:
            brute = _cycle_automorphisms(n, r, ell)
            rows.append((n, brute, closed_form_aut_cycle(n, r, ell)))
    return tuple(rows)


def validate_closed_form(r: int, ell: int, settings: Settings | None = None) -> dict:
    """Brute-force check of the closed form for every feasible n with r + 2s <= n <= cap.

    Returns:
        dict:
            {"validated": bool, "rows": [(n, brute force, closed form), ...]}; validated
            is False when no n falls in the range.
    """
    settings = settings or get_settings()
    rows = _validation_table(r, ell, settings.aut_cap)
    validated = bool(rows) and all(brute == closed for _, brute, closed in rows)
    return {"validated": validated, "rows": [list(row) for row in rows]}


def aut_cycle(n: int, r: int, ell: int, settings: Settings | None = None) -> int:
    """|Aut(C)| for the Hamilton ell-cycle on n vertices.

    Brute force up to aut_cap; above it the closed form, only once validated.
    """
    settings = settings or get_settings()
    _check_cycle_length(n, r, ell)
    if n <= settings.aut_cap:
        return _cycle_automorphisms(n, r, ell)
    if not validate_closed_form(r, ell, settings)["validated"]:
        raise ResourceLimitError(
            f"Closed form for Aut(C) unvalidated for (r={r}, ell={ell}); n={n} above cap"
        )
    return closed_form_aut_cycle(n, r, ell)


def count_copies_complete(
    copy: models.CycleCopy | models.PathCopy, n: int, settings: Settings | None = None
) -> int:
    """N_H = (n)_{v(H)} / Aut(H), the number of copies of H in the complete hypergraph."""
    if isinstance(copy, models.CycleCopy):
        v = copy.n
        aut = aut_cycle(copy.n, copy.r, copy.ell, settings)
    else:
        v = copy.v
        aut = aut_path(copy.k, copy.r, copy.ell, settings)
    total = falling_factorial(n, v)
    if total % aut:
        raise InternalConsistencyError(f"(n)_v = {total} not divisible by Aut = {aut}")
    return total // aut


def n_cycles_complete(n: int, r: int, ell: int, settings: Settings | None = None) -> int:
    return count_copies_complete(build_cycle(n, r, ell), n, settings)


def theory_constants(
    n: int, r: int, ell: int, K: int, settings: Settings | None = None
) -> models.TheoryConstants:
    settings = settings or get_settings()
    s, t, lam = derive_constants(r, ell)
    table = compute_A_table(r, ell, K, settings)
    return models.TheoryConstants(
        n=n,
        r=r,
        ell=ell,
        s=s,
        t=t,
        lambda_=lam,
        A=table,
        aut_path=[aut_path(k, r, ell, settings) for k in range(1, K + 1)],
        aut_cycle=aut_cycle(n, r, ell, settings),
        n_c=n_cycles_complete(n, r, ell, settings),
        closed_form_validated=validate_closed_form(r, ell, settings)["validated"],
    )
