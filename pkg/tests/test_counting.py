from math import exp
from math import fsum
from math import perm
from math import sqrt

import pytest
from hypothesis import given
from hypothesis import settings as hypothesis_settings
from hypothesis import strategies as st

import hamlaw.utilities.counting as counting
import hamlaw.utilities.data_models as models
import hamlaw.utilities.hypergraph as hypergraph
import hamlaw.utilities.oracle as oracle
import hamlaw.utilities.structures as structures
import hamlaw.utilities.theory as theory
from hamlaw.configs.config import Settings
from hamlaw.utilities.errors import InvalidArgumentError
from hamlaw.utilities.errors import ResourceLimitError


@pytest.mark.parametrize(
    "n, r, ell, expected",
    [(5, 3, 2, 12), (6, 3, 2, 60), (7, 3, 2, 360), (6, 4, 3, 60), (8, 4, 2, 315)],
)
def test_count_complete_equals_n_c(n, r, ell, expected):
    result = counting.count_hamilton(hypergraph.complete_hypergraph(n, r), ell)
    assert result.count == expected
    assert result.count == structures.n_cycles_complete(n, r, ell)


@pytest.mark.parametrize("n", [5, 6, 7])
def test_dp_and_backtracking_agree(n, seed):
    params = models.Params(n=n, r=3, ell=2, p=0.7)
    graph = hypergraph.sample_gnp(params, seed)
    dp = counting.count_hamilton(graph, 2, models.CountMethod.SUBSET_DP)
    backtracking = counting.count_hamilton(graph, 2, "backtracking")
    assert dp.count == backtracking.count
    assert dp.broken_factor == 2 * n
    assert backtracking.method == models.CountMethod.BACKTRACKING


def test_count_cycle_only_graph():
    for n, r, ell in [(7, 3, 2), (8, 4, 2), (6, 4, 3)]:
        cycle = structures.build_cycle(n, r, ell)
        graph = hypergraph.hypergraph_from_edges(n, r, cycle.edges)
        assert counting.count_hamilton(graph, ell).count == 1


def test_count_empty_graph():
    empty = models.Hypergraph(n=8, r=4, ranks=frozenset())
    assert counting.count_hamilton(empty, 2).count == 0


def test_count_caps():
    graph = hypergraph.complete_hypergraph(8, 4)
    with pytest.raises(InvalidArgumentError):
        counting.count_hamilton(graph, 2, models.CountMethod.SUBSET_DP)
    with pytest.raises(ResourceLimitError):
        counting.count_hamilton(graph, 2, settings=Settings(backtrack_max_n=6))
    with pytest.raises(ResourceLimitError):
        counting.count_hamilton(graph, 2, settings=Settings(node_budget=10))
    with pytest.raises(ResourceLimitError):
        counting.count_hamilton(
            hypergraph.complete_hypergraph(7, 3), 2, "subset-dp", Settings(dp_max_n=6)
        )


def test_count_result_serializes_big_integers():
    result = counting.count_hamilton(hypergraph.complete_hypergraph(7, 3), 2)
    dumped = result.model_dump(mode="json")
    assert dumped["count"] == "360"
    assert dumped["method"] == "subset-dp"


def test_enumerate_hamilton_complete():
    cycles = counting.enumerate_hamilton(hypergraph.complete_hypergraph(6, 3), 2)
    assert len(cycles) == 60
    assert len({cycle.signature for cycle in cycles}) == 60
    with pytest.raises(ResourceLimitError):
        counting.enumerate_hamilton(
            hypergraph.complete_hypergraph(6, 3), 2, Settings(enumerate_cap=10)
        )


@hypothesis_settings(max_examples=25, deadline=None)
@given(st.permutations(range(7)), st.integers(min_value=0, max_value=2**32))
def test_count_is_relabeling_invariant(permutation, stream):
    params = models.Params(n=7, r=3, ell=2, p=0.6)
    graph = hypergraph.sample_gnp(params, models.Seed(root=3, stream=stream))
    moved = hypergraph.relabel(graph, permutation)
    before = counting.count_hamilton(graph, 2).count
    assert counting.count_hamilton(moved, 2).count == before


@hypothesis_settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**32),
    st.sampled_from([(0, 1, 2, 3), (0, 2, 4, 6), (1, 3, 5, 7), (4, 5, 6, 7)]),
)
def test_count_is_monotone_under_edge_addition(stream, edge):
    params = models.Params(n=8, r=4, ell=2, p=0.5)
    graph = hypergraph.sample_gnp(params, models.Seed(root=5, stream=stream))
    grown = hypergraph.add_edge(graph, edge)
    before = counting.count_hamilton(graph, 2).count
    assert counting.count_hamilton(grown, 2).count >= before


def test_count_embeddings_single_edge():
    complete = hypergraph.complete_hypergraph(6, 3)
    assert counting.count_embeddings([(0, 1, 2)], complete) == perm(6, 3)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_count_paths_complete(k):
    complete = hypergraph.complete_hypergraph(7, 3)
    path = structures.build_path(k, 3, 2)
    expected = structures.count_copies_complete(path, 7)
    assert counting.count_paths(complete, k, 3, 2) == expected


def test_count_paths_in_cycle():
    cycle = structures.build_cycle(9, 3, 2)
    graph = hypergraph.hypergraph_from_edges(9, 3, cycle.edges)
    assert [counting.count_paths(graph, k, 3, 2) for k in (1, 2, 3)] == [9, 9, 9]


@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_y_statistic_matches_direct_enumeration(p, k):
    params = models.Params(n=8, r=3, ell=2, p=p)
    graph = hypergraph.sample_gnp(params, models.Seed(root=11, stream=k))
    fast = counting.y_statistic(graph, k, params).value
    direct = oracle.y_direct(graph, k, params)
    assert fast == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_y_statistic_components_sum_to_value(tight_params, seed):
    graph = hypergraph.sample_gnp(tight_params, seed)
    result = counting.y_statistic(graph, 2, tight_params)
    assert len(result.components) == 3
    assert fsum(result.components) == pytest.approx(result.value, abs=1e-12)


def test_y_statistic_on_complete_graph():
    params = models.Params(n=7, r=3, ell=2, p=0.3)
    complete = hypergraph.complete_hypergraph(7, 3)
    for k in (1, 2):
        n_path = structures.count_copies_complete(structures.build_path(k, 3, 2), 7)
        expected = sqrt(n_path) * ((1 - 0.3) / 0.3) ** (k / 2)
        assert counting.y_statistic(complete, k, params).value == pytest.approx(expected)


def test_y_statistic_rejects(tight_params, seed):
    graph = hypergraph.sample_gnp(tight_params, seed)
    with pytest.raises(InvalidArgumentError):
        counting.y_statistic(graph, 1, tight_params.with_p(0.0))
    with pytest.raises(ResourceLimitError):
        counting.y_statistic(graph, 9, tight_params)
    with pytest.raises(InvalidArgumentError):
        counting.y_statistic(graph, 1, models.Params(n=8, r=3, ell=2, p=0.5))


def test_y_combined(tight_params, seed):
    graph = hypergraph.sample_gnp(tight_params, seed)
    combined = counting.y_combined(graph, tight_params, 1.2, 3)
    expected = fsum(t * y for t, y in zip(combined.coefficients, combined.values))
    assert combined.y_n == pytest.approx(expected)
    assert combined.coefficients[0] == pytest.approx(sqrt(6 / 1.2 * exp(-1)))
    assert combined.tail_bound == pytest.approx(theory.series_tail(3, 2, 1.2, 3))


def test_x_statistic(tight_params, seed):
    empty = models.Hypergraph(n=7, r=3, ranks=frozenset())
    assert counting.x_statistic(empty, tight_params, 1.0, 2) == 0.0
    graph = hypergraph.plant_cycle(tight_params, seed).graph
    z = counting.count_hamilton(graph, 2).count
    expected_z = theory.expected_z(7, tight_params, 0.5).value
    y_n = counting.y_combined(graph, tight_params, 1.0, 2).y_n
    assert counting.x_statistic(graph, tight_params, 1.0, 2) == pytest.approx(
        counting.combine_x(z, expected_z, y_n)
    )
    assert z >= 1


def test_y_statistic_on_empty_graph():
    params = models.Params(n=7, r=3, ell=2, p=0.4)
    empty = models.Hypergraph(n=7, r=3, ranks=frozenset())
    expected = -sqrt(35) * sqrt(0.4 / 0.6)
    assert counting.y_statistic(empty, 1, params).value == pytest.approx(expected)


def test_count_paths_small_cases():
    assert counting.count_paths(hypergraph.complete_hypergraph(5, 3), 1, 3, 2) == 10
    assert counting.count_paths(hypergraph.complete_hypergraph(4, 3), 2, 3, 2) == 6
    cycle = hypergraph.hypergraph_from_edges(
        6, 3, [(i, (i + 1) % 6, (i + 2) % 6) for i in range(6)]
    )
    assert counting.count_paths(cycle, 2, 3, 2) == 6
