from functools import lru_cache
from itertools import combinations
from math import comb

from hamlaw.utilities.errors import InvalidArgumentError


def rank_subset(subset: tuple[int, ...], n: int, r: int) -> int:
    """Colexicographic combinadic rank of a sorted r-subset of {0, ..., n-1}.

    Args:
        subset (tuple[int, ...]):
            Strictly increasing vertices.
        n (int):
            Size of the vertex universe.
        r (int):
            Expected subset size.

    Returns:
        int:
            sum over i of C(subset[i], i + 1), an integer in [0, C(n, r)).
    """
    if len(subset) != r:
        raise InvalidArgumentError(f"Expected {r} vertices, got {len(subset)}")
    rank = 0
    previous = -1
    for i, vertex in enumerate(subset):
        if not 0 <= vertex < n:
            raise InvalidArgumentError(f"Vertex {vertex} outside [0, {n})")
        if vertex <= previous:
            raise InvalidArgumentError(f"Subset {subset} is not strictly increasing")
        rank += comb(vertex, i + 1)
        previous = vertex
    return rank


def unrank_subset(rank: int, n: int, r: int) -> tuple[int, ...]:
    """Inverse of rank_subset."""
    if not 0 <= rank < comb(n, r):
        raise InvalidArgumentError(f"Rank {rank} outside [0, C({n}, {r}))")
    out = []
    vertex = n - 1
    for size in range(r, 0, -1):
        while comb(vertex, size) > rank:
            vertex -= 1
        out.append(vertex)
        rank -= comb(vertex, size)
        vertex -= 1
    return tuple(reversed(out))


@lru_cache(maxsize=32)
def colex_subsets(n: int, r: int) -> tuple[tuple[int, ...], ...]:
    """All r-subsets of range(n), position i holding the subset of rank i."""
    return tuple(sorted(combinations(range(n), r), key=lambda c: c[::-1]))
