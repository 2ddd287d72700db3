from fractions import Fraction
from itertools import permutations
from math import ceil
from math import comb
from math import exp
from math import fsum
from math import log
from math import prod
from math import sqrt

import numpy as np

import hamlaw.utilities.counting as counting
import hamlaw.utilities.data_models as models
import hamlaw.utilities.hypergraph as hypergraph
import hamlaw.utilities.structures as structures
import hamlaw.utilities.theory as theory
from hamlaw.configs.config import Settings
from hamlaw.configs.config import get_logger
from hamlaw.configs.config import get_settings
from hamlaw.utilities.errors import InvalidArgumentError
from hamlaw.utilities.errors import ResourceLimitError

logger = get_logger()

PAIR_CHUNK = 256


def _complete_cycles(
    n: int, r: int, ell: int, settings: Settings
) -> list[models.CycleCopy]:
    n_c = structures.n_cycles_complete(n, r, ell, settings)
    if n_c > settings.overlap_max_cycles:
        raise ResourceLimitError(
            f"N_C = {n_c} exceeds overlap_max_cycles = {settings.overlap_max_cycles}"
        )
    complete = hypergraph.complete_hypergraph(n, r)
    return counting.enumerate_hamilton(complete, ell, settings)


def _incidence(cycles: list[models.CycleCopy], n: int, r: int) -> np.ndarray:
    """Boolean matrix, one row per cycle, one column per edge rank."""
    matrix = np.zeros((len(cycles), comb(n, r)), dtype=bool)
    for row, cycle in enumerate(cycles):
        matrix[row, list(cycle.ranks)] = True
    return matrix


def _pair_histograms(
    matrix: np.ndarray, m: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Histograms over ordered pairs of |C1 & C2| and |C1 | C2|, plus unordered i < j
    intersections. Rows are processed in chunks."""
    as_int = matrix.astype(np.int64)
    overlap = np.zeros(m + 1, dtype=np.int64)
    union = np.zeros(2 * m + 1, dtype=np.int64)
    unordered = np.zeros(m + 1, dtype=np.int64)
    rows = matrix.shape[0]
    for start in range(0, rows, PAIR_CHUNK):
        block = as_int[start : start + PAIR_CHUNK]
        shared = block @ as_int.T
        overlap += np.bincount(shared.ravel(), minlength=m + 1)
        for offset in range(block.shape[0]):
            i = start + offset
            unordered += np.bincount(shared[offset, i + 1 :], minlength=m + 1)
            joined = np.count_nonzero(matrix[i] | matrix, axis=1)
            union += np.bincount(joined, minlength=2 * m + 1)
    return overlap, union, unordered


def overlap_distribution(
    n: int, r: int, ell: int, settings: Settings | None = None
) -> models.OverlapDistribution:
    """Ordered cycle pairs of the complete hypergraph by number of shared edges."""
    settings = settings or get_settings()
    cycles = _complete_cycles(n, r, ell, settings)
    m = n // (r - ell)
    overlap, _, unordered = _pair_histograms(_incidence(cycles, n, r), m)
    return models.OverlapDistribution(
        n=n,
        r=r,
        ell=ell,
        counts={t: int(overlap[t]) for t in range(m + 1)},
        unordered_counts={t: int(unordered[t]) for t in range(m + 1)},
        n_cycles=len(cycles),
    )


def second_moment_identity_check(
    n: int, params: models.Params, p: float | Fraction, settings: Settings | None = None
) -> models.SecondMomentReport:
    """E[Z^2] from the union-size histogram of ordered pairs, and as
    E[Z]^2 * sum_t P(t) / p^t from the overlap distribution, both exact."""
    settings = settings or get_settings()
    if not 0 < p <= 1:
        raise InvalidArgumentError(f"p must lie in (0, 1], got {p}")
    r, ell = params.r, params.ell
    m = n // params.s
    cycles = _complete_cycles(n, r, ell, settings)
    overlap, union, _ = _pair_histograms(_incidence(cycles, n, r), m)
    q = Fraction(p)
    by_pairs = sum(int(count) * q**size for size, count in enumerate(union) if count)
    total = int(overlap.sum())
    expected = theory.expected_z(n, params, q, settings).exact
    by_overlap = expected**2 * sum(
        Fraction(int(count), total) / q**t for t, count in enumerate(overlap) if count
    )
    difference = abs(by_pairs - by_overlap)
    return models.SecondMomentReport(
        n=n,
        r=r,
        ell=ell,
        p=float(p),
        expected_z=expected,
        second_moment_pairs=by_pairs,
        second_moment_overlap=by_overlap,
        ratio=float(by_pairs / expected**2),
        relative_difference=float(difference / by_pairs),
    )


def variance_check(
    n: int,
    params: models.Params,
    p: float,
    n_trials: int,
    root_seed: int = 0,
    settings: Settings | None = None,
) -> models.VarianceCheckReport:
    """Monte Carlo variance of Z against the exact Var(Z), with a 5-sigma band."""
    settings = settings or get_settings()
    exact = second_moment_identity_check(n, params, p, settings)
    graph_params = models.Params(n=n, r=params.r, ell=params.ell, p=p)
    z = [
        counting.count_hamilton(
            hypergraph.sample_gnp(graph_params, models.Seed(root=root_seed, stream=i)),
            params.ell,
            settings=settings,
        ).count
        for i in range(n_trials)
    ]
    sample, lower, upper = theory.bootstrap_band(
        z,
        models.Seed(root=root_seed, stream=n_trials),
        statistic=lambda a, axis: np.var(a, axis=axis, ddof=1),
        width=5.0,
    )
    exact_variance = float(exact.variance)
    return models.VarianceCheckReport(
        n=n,
        p=p,
        n_trials=n_trials,
        root_seed=root_seed,
        sample_variance=sample,
        exact_variance=exact_variance,
        lower=lower,
        upper=upper,
        within_band=lower <= exact_variance <= upper,
    )


def planted_mean_closed_form(n: int, params: models.Params, p: float, j: int) -> float:
    """(n / s) sqrt((1 - p)^j / (p^j N_{P_j}))."""
    path = structures.build_path(j, params.r, params.ell)
    n_path = structures.count_copies_complete(path, n)
    return n / params.s * sqrt((1 - p) ** j / (p**j * n_path))


def planted_mean_exact(n: int, params: models.Params, p: float, j: int) -> float:
    """E*[Y(P_j)] by per-copy planted-edge counting.

    A copy with a non-planted edge has mean zero, so only the copies of P_j inside the
    planted cycle contribute, each ((1 - p) / p)^(j / 2).
    """
    cycle = structures.build_cycle(n, params.r, params.ell)
    cycle_graph = hypergraph.hypergraph_from_edges(n, params.r, cycle.edges)
    inside = counting.count_paths(cycle_graph, j, params.r, params.ell)
    path = structures.build_path(j, params.r, params.ell)
    n_path = structures.count_copies_complete(path, n)
    return inside * ((1 - p) / p) ** (j / 2) / sqrt(n_path)


def planted_mean_check(
    n: int,
    params: models.Params,
    p: float,
    j: int,
    n_trials: int = 0,
    root_seed: int = 0,
    settings: Settings | None = None,
) -> models.PlantedMeanReport:
    """Closed-form planted mean of Y(P_j) against exact counting, Monte Carlo over planted
    instances and the limit mu_j = sqrt(A_j c^-j e^-js) / s."""
    settings = settings or get_settings()
    graph_params = models.Params(n=n, r=params.r, ell=params.ell, p=p)
    closed = planted_mean_closed_form(n, graph_params, p, j)
    exact = planted_mean_exact(n, graph_params, p, j)
    c_n = theory.density_ratio(n, graph_params)
    mu_j = counting.path_coefficients(graph_params, c_n, j, settings)[j - 1]
    report = models.PlantedMeanReport(
        n=n,
        j=j,
        p=p,
        closed_form=closed,
        exact_expectation=exact,
        relative_difference=abs(closed - exact) / abs(closed),
        mu_j=mu_j,
        closed_to_mu_ratio=closed / mu_j,
        n_trials=n_trials,
    )
    if n_trials < 2:
        return report
    seed = models.Seed(root=root_seed)
    values = np.array(
        [
            counting.y_statistic(
                hypergraph.plant_cycle(graph_params, seed.child(i)).graph,
                j,
                graph_params,
                settings,
            ).value
            for i in range(n_trials)
        ]
    )
    mean = float(values.mean())
    se = float(values.std(ddof=1) / sqrt(n_trials))
    return report.model_copy(
        update={
            "monte_carlo_mean": mean,
            "monte_carlo_se": se,
            "within_band": abs(mean - closed) <= 4 * se,
        }
    )


def planted_mgf_check(
    n: int,
    params: models.Params,
    p: float,
    c: float,
    K: int,
    n_trials: int,
    root_seed: int = 0,
    settings: Settings | None = None,
) -> models.PlantedMgfReport:
    """E[X] over null graphs against E*[exp(-Y_N)] over planted graphs.

    The two agree exactly at every n; both are compared with 4-sigma bootstrap bands and
    with the limit exp(-sigma^2_K / 2).
    """
    settings = settings or get_settings()
    graph_params = models.Params(n=n, r=params.r, ell=params.ell, p=p)
    expected = theory.expected_z(n, graph_params, p, settings).value
    null_x = []
    planted = []
    for i in range(n_trials):
        seed = models.Seed(root=root_seed, stream=i)
        graph = hypergraph.sample_gnp(graph_params, seed)
        z = counting.count_hamilton(graph, params.ell, settings=settings).count
        y_n = counting.y_combined(graph, graph_params, c, K, settings).y_n if z else 0.0
        null_x.append(counting.combine_x(z, expected, y_n))
        planted_seed = seed.child(n_trials + i)
        planted_graph = hypergraph.plant_cycle(graph_params, planted_seed).graph
        planted_y = counting.y_combined(planted_graph, graph_params, c, K, settings).y_n
        planted.append(exp(-planted_y))
    null_mean, null_lo, null_hi = theory.bootstrap_band(
        null_x, models.Seed(root=root_seed, stream=2 * n_trials)
    )
    planted_mean, planted_lo, planted_hi = theory.bootstrap_band(
        planted, models.Seed(root=root_seed, stream=2 * n_trials + 1)
    )
    reference = exp(-theory.lognormal_params(graph_params, c, K, settings).sigma2 / 2)
    return models.PlantedMgfReport(
        n=n,
        p=p,
        c=c,
        K=K,
        n_trials=n_trials,
        null_mean_x=null_mean,
        null_band=(null_lo, null_hi),
        planted_mean=planted_mean,
        planted_band=(planted_lo, planted_hi),
        bands_overlap=null_lo <= planted_hi and planted_lo <= null_hi,
        reference=reference,
        null_within_15pct=abs(null_mean - reference) <= 0.15 * reference,
        planted_within_15pct=abs(planted_mean - reference) <= 0.15 * reference,
    )


def big_overlap_scan(
    n: int,
    params: models.Params,
    n_trials: int,
    root_seed: int = 0,
    settings: Settings | None = None,
) -> models.BigOverlapReport:
    """Cycle pairs sharing between log n and m - 1 edges in graphs with E[Z] = log n."""
    settings = settings or get_settings()
    m = n // params.s
    p = theory.p_for_expectation(n, params, log(n), settings)
    graph_params = models.Params(n=n, r=params.r, ell=params.ell, p=p)
    window = (ceil(log(n)), m - 1)
    offending: list[int] = []
    trials_with_pair = 0
    m_minus_one = 0
    largest = 0
    for i in range(n_trials):
        graph = hypergraph.sample_gnp(graph_params, models.Seed(root=root_seed, stream=i))
        cycles = counting.enumerate_hamilton(graph, params.ell, settings)
        edge_sets = [frozenset(cycle.ranks) for cycle in cycles]
        found = False
        for a in range(len(edge_sets)):
            for b in range(a + 1, len(edge_sets)):
                shared = len(edge_sets[a] & edge_sets[b])
                largest = max(largest, shared)
                if shared == m - 1:
                    m_minus_one += 1
                if window[0] <= shared <= window[1]:
                    offending.append(shared)
                    found = True
        trials_with_pair += found
    logger.info(
        f"big_overlap_scan n={n}: {trials_with_pair}/{n_trials} trials with a pair"
    )
    return models.BigOverlapReport(
        n=n,
        p=p,
        window=window,
        n_trials=n_trials,
        trials_with_pair=trials_with_pair,
        frequency=trials_with_pair / n_trials if n_trials else 0.0,
        pair_overlaps=offending,
        m_minus_one_pairs=m_minus_one,
        max_overlap_seen=largest,
    )


def y_direct(graph: models.Hypergraph, k: int, params: models.Params) -> float:
    """Y(P_k) summed directly over every ordered embedding of P_k into the complete
    hypergraph; each copy is visited Aut(P_k) times."""
    p = params.p
    if not 0 < p < 1:
        raise InvalidArgumentError(f"Y is defined for 0 < p < 1, got p = {p}")
    path = structures.build_path(k, params.r, params.ell)
    norm = sqrt(p * (1 - p))
    present = (1 - p) / norm
    absent = -p / norm
    terms = [
        prod(
            present if graph.has_edge([image[v] for v in edge]) else absent
            for edge in path.edges
        )
        for image in permutations(range(graph.n), path.v)
    ]
    aut = structures.aut_path(k, params.r, params.ell)
    n_path = structures.count_copies_complete(path, graph.n)
    return fsum(terms) / aut / sqrt(n_path)


def run_identity_suite(
    ns, r: int, ell: int, p: float | Fraction, settings: Settings | None = None
) -> list[dict]:
    """Exact checks per n: cycle count from enumeration against n! / Aut(C), overlap mass,
    diagonal, the m - 1 exclusion for tight cycles and the second-moment identity."""
    settings = settings or get_settings()
    rows = []
    for n in ns:
        params = models.Params(n=n, r=r, ell=ell)
        m = params.m_edges
        enumerated = len(_complete_cycles(n, r, ell, settings))
        n_c = structures.n_cycles_complete(n, r, ell, settings)
        distribution = overlap_distribution(n, r, ell, settings)
        moment = second_moment_identity_check(n, params, p, settings)
        rows.append(
            {
                "n": n,
                "n_c": n_c,
                "enumerated": enumerated,
                "total_pairs": distribution.total,
                "diagonal": distribution.counts[m],
                "m_minus_one": distribution.counts[m - 1],
                "second_moment_exact_equal": moment.second_moment_pairs
                == moment.second_moment_overlap,
                "second_moment_relative_difference": moment.relative_difference,
                "passed": enumerated == n_c
                and distribution.total == n_c**2
                and distribution.counts[m] == n_c
                and (params.s != 1 or distribution.counts[m - 1] == 0)
                and moment.second_moment_pairs == moment.second_moment_overlap,
            }
        )
    return rows
