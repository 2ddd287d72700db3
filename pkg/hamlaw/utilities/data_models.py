from collections import defaultdict
from enum import Enum
from fractions import Fraction
from itertools import combinations
from math import comb
from math import exp
from math import factorial
from pathlib import Path

from pydantic import BaseModel
from pydantic import ConfigDict
from pydantic import Field
from pydantic import PrivateAttr
from pydantic import field_serializer
from pydantic import model_validator
from typing_extensions import Self

from hamlaw.utilities.combinadic import rank_subset
from hamlaw.utilities.combinadic import unrank_subset

UINT64_LIMIT = 2**64


def residue_t(r: int, s: int) -> int:
    """The unique t in [1, s] with t = r (mod s)."""
    return s if r % s == 0 else r % s


def window(sequence: tuple[int, ...], start: int, r: int) -> tuple[int, ...]:
    """Sorted r consecutive entries of a cyclic sequence starting at position start."""
    n = len(sequence)
    return tuple(sorted(sequence[(start + i) % n] for i in range(r)))


class Experiment(str, Enum):
    """Experiments the harness knows how to run"""

    CONCENTRATION = "concentration"
    LOGNORMAL = "lognormal"
    POISSON = "poisson"
    CLT = "clt"
    ORACLE_SUITE = "oracle-suite"


class CountMethod(str, Enum):
    SUBSET_DP = "subset-dp"
    BACKTRACKING = "backtracking"


class PlantingScheme(str, Enum):
    """How the planted cycles of a PlantedInstance were chosen"""

    SINGLE = "single"
    ENUMERATED_UNIFORM = "enumerated-uniform"
    CONTIGUOUS_SEGMENT = "contiguous-segment"


class TrialModel(str, Enum):
    """Probability model a trial was drawn from"""

    NULL = "null"
    PLANTED = "planted"
    DOUBLE = "double"
    THINNED = "thinned"


class Params(BaseModel):
    """Vertex count, uniformity, overlap and edge density shared by every operation."""

    n: int
    r: int
    ell: int
    p: float = Field(default=0.0, ge=0.0, le=1.0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_geometry(self) -> Self:
        """Validates 2 <= ell < r, r >= 3, s | n and room for distinct windows."""
        if self.r < 3:
            raise ValueError(f"r must be at least 3, got {self.r}")
        if not 2 <= self.ell < self.r:
            raise ValueError(f"ell must satisfy 2 <= ell < r, got ell={self.ell}")
        if self.n % self.s:
            raise ValueError(f"s = {self.s} must divide n = {self.n}")
        if self.n < self.r + self.s:
            raise ValueError(f"n must be at least r + s = {self.r + self.s}")
        return self

    @property
    def s(self) -> int:
        return self.r - self.ell

    @property
    def t(self) -> int:
        return residue_t(self.r, self.s)

    @property
    def lambda_(self) -> int:
        return factorial(self.t) * factorial(self.s - self.t)

    @property
    def m_edges(self) -> int:
        return self.n // self.s

    @classmethod
    def from_c(cls, n: int, r: int, ell: int, c: float) -> "Params":
        """Params with p = c * lambda * e^s / n^s."""
        base = cls(n=n, r=r, ell=ell)
        return base.with_p(c * base.lambda_ * exp(base.s) / n**base.s)

    def with_p(self, p: float) -> "Params":
        return Params(n=self.n, r=self.r, ell=self.ell, p=p)


class Seed(BaseModel):
    """Root seed of a run plus the stream (trial) index."""

    root: int = Field(default=0, ge=0, lt=UINT64_LIMIT)
    stream: int = Field(default=0, ge=0, lt=UINT64_LIMIT)

    model_config = ConfigDict(frozen=True)

    def child(self, stream: int) -> "Seed":
        return Seed(root=self.root, stream=stream)


class Hypergraph(BaseModel):
    """r-uniform edge set over vertices 0..n-1, each edge held by its colex rank.

    Membership by rank or by vertex tuple is O(1). Face indexes used by the counting
    kernels are built on first use and cached on the instance.
    """

    n: int = Field(ge=1)
    r: int = Field(ge=1)
    ranks: frozenset[int] = Field(default_factory=frozenset)

    _cache: dict = PrivateAttr(default_factory=dict)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_ranks(self) -> Self:
        if self.r > self.n:
            raise ValueError(f"Edges of size {self.r} do not fit in {self.n} vertices")
        if self.ranks:
            total = comb(self.n, self.r)
            if min(self.ranks) < 0 or max(self.ranks) >= total:
                raise ValueError(f"Edge ranks must lie in [0, {total})")
        return self

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Hypergraph):
            return NotImplemented
        return (self.n, self.r, self.ranks) == (other.n, other.r, other.ranks)

    def __hash__(self) -> int:
        return hash((self.n, self.r, self.ranks))

    @property
    def edge_count(self) -> int:
        return len(self.ranks)

    @property
    def edges(self) -> tuple[tuple[int, ...], ...]:
        """Edges as sorted vertex tuples, in rank order."""
        if "edges" not in self._cache:
            self._cache["edges"] = tuple(
                unrank_subset(rank, self.n, self.r) for rank in sorted(self.ranks)
            )
        return self._cache["edges"]

    @property
    def edge_set(self) -> frozenset[tuple[int, ...]]:
        if "edge_set" not in self._cache:
            self._cache["edge_set"] = frozenset(self.edges)
        return self._cache["edge_set"]

    def has_rank(self, rank: int) -> bool:
        return rank in self.ranks

    def has_edge(self, vertices) -> bool:
        return tuple(sorted(vertices)) in self.edge_set

    def edges_containing(self, face) -> tuple[tuple[int, ...], ...]:
        """Edges that contain every vertex of face (all edges for an empty face)."""
        key = tuple(sorted(face))
        size = len(key)
        if size == 0:
            return self.edges
        index = self._cache.get(("faces", size))
        if index is None:
            grouped = defaultdict(list)
            for edge in self.edges:
                for sub in combinations(edge, size):
                    grouped[sub].append(edge)
            index = {sub: tuple(found) for sub, found in grouped.items()}
            self._cache[("faces", size)] = index
        return index.get(key, ())


class CycleCopy(BaseModel):
    """Hamilton ell-cycle given by a witness cyclic vertex sequence.

    Window i covers positions i*s .. i*s + r - 1 (mod n); the copy is identified by its
    edge set, exposed through signature.
    """

    vertex_sequence: tuple[int, ...]
    r: int
    ell: int

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_sequence(self) -> Self:
        s = self.r - self.ell
        n = len(self.vertex_sequence)
        if s < 1 or self.ell < 1:
            raise ValueError("Cycle requires 1 <= ell < r")
        if n % s or n < self.r + s:
            raise ValueError(
                f"Cycle length {n} incompatible with r={self.r}, ell={self.ell}"
            )
        if sorted(self.vertex_sequence) != list(range(n)):
            raise ValueError("A Hamilton cycle must visit each of 0..n-1 exactly once")
        return self

    @property
    def n(self) -> int:
        return len(self.vertex_sequence)

    @property
    def s(self) -> int:
        return self.r - self.ell

    @property
    def m(self) -> int:
        return self.n // self.s

    @property
    def edges(self) -> tuple[tuple[int, ...], ...]:
        return tuple(
            window(self.vertex_sequence, i * self.s, self.r) for i in range(self.m)
        )

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(rank_subset(edge, self.n, self.r) for edge in self.edges)

    @property
    def signature(self) -> tuple[int, ...]:
        return tuple(sorted(self.ranks))


class PathCopy(BaseModel):
    """ell-path with k edges on ell + k*s vertices."""

    vertex_sequence: tuple[int, ...]
    r: int
    ell: int

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_sequence(self) -> Self:
        s = self.r - self.ell
        v = len(self.vertex_sequence)
        if s < 1 or self.ell < 1:
            raise ValueError("Path requires 1 <= ell < r")
        if v < self.r or (v - self.ell) % s:
            raise ValueError(
                f"Path on {v} vertices incompatible with r={self.r}, ell={self.ell}"
            )
        if len(set(self.vertex_sequence)) != v:
            raise ValueError("Path vertices must be distinct")
        return self

    @property
    def v(self) -> int:
        return len(self.vertex_sequence)

    @property
    def k(self) -> int:
        return (self.v - self.ell) // (self.r - self.ell)

    @property
    def edges(self) -> tuple[tuple[int, ...], ...]:
        s = self.r - self.ell
        seq = self.vertex_sequence
        return tuple(tuple(sorted(seq[i * s : i * s + self.r])) for i in range(self.k))


class PlantedInstance(BaseModel):
    """Graph drawn from a planted model together with the planted cycles."""

    graph: Hypergraph
    planted: list[CycleCopy]
    overlap_t: int | None = None
    scheme: PlantingScheme = PlantingScheme.SINGLE

    @model_validator(mode="after")
    def check_planted(self) -> Self:
        if not 1 <= len(self.planted) <= 2:
            raise ValueError("One or two planted cycles expected")
        for cycle in self.planted:
            if not set(cycle.ranks) <= self.graph.ranks:
                raise ValueError("Every planted edge must be present in the graph")
        if len(self.planted) == 2:
            shared = len(set(self.planted[0].ranks) & set(self.planted[1].ranks))
            if shared != self.overlap_t:
                raise ValueError(
                    f"Planted cycles share {shared} edges, not {self.overlap_t}"
                )
        return self


class ATable(BaseModel):
    """A_k = Aut(P_k) / lambda^k for k = 1..K, exact."""

    r: int
    ell: int
    values: list[Fraction]
    k_stab: int | None = None
    a_stab: Fraction | None = None
    brute_forced_through: int = 0
    extrapolated_from: int | None = None

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_serializer("values")
    def serialize_values(self, values: list[Fraction]) -> list[str]:
        return [str(v) for v in values]

    @field_serializer("a_stab")
    def serialize_a_stab(self, a_stab: Fraction | None) -> str | None:
        return None if a_stab is None else str(a_stab)

    @property
    def K(self) -> int:
        return len(self.values)


class TheoryConstants(BaseModel):
    n: int
    r: int
    ell: int
    s: int
    t: int
    lambda_: int
    A: ATable
    aut_path: list[int]
    aut_cycle: int
    n_c: int
    closed_form_validated: bool

    @field_serializer("aut_cycle", "n_c")
    def serialize_big(self, value: int) -> str:
        return str(value)


class CountResult(BaseModel):
    """Exact Hamilton cycle count with provenance of the search."""

    count: int = Field(ge=0)
    elapsed: float
    method: CountMethod
    nodes_explored: int
    ordered_count: int
    broken_factor: int

    @field_serializer("count", "ordered_count")
    def serialize_big(self, value: int) -> str:
        return str(value)


class YStatistic(BaseModel):
    k: int
    value: float
    components: list[float]


class YCombined(BaseModel):
    K: int
    c: float
    values: list[float]
    coefficients: list[float]
    y_n: float
    tail_bound: float


class ExpectedCount(BaseModel):
    """First moment N_C p^m, exact whenever p was given as a rational."""

    exact: Fraction | None
    value: float

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_serializer("exact")
    def serialize_exact(self, exact: Fraction | None) -> str | None:
        return None if exact is None else str(exact)


class LimitLawParams(BaseModel):
    mu: float
    sigma2: float = Field(ge=0.0)
    K: int
    tail: float = Field(ge=0.0)
    c: float


class TestReport(BaseModel):
    """Outcome of one acceptance gate, with everything needed to replay it."""

    __test__ = False

    statistic_name: str
    value: float | None
    lower: float | None = None
    upper: float | None = None
    passed: bool
    n_trials: int = 0
    seed: Seed | None = None


class OverlapDistribution(BaseModel):
    """Ordered pairs of Hamilton cycles in the complete hypergraph, by shared edges."""

    n: int
    r: int
    ell: int
    counts: dict[int, int]
    unordered_counts: dict[int, int]
    n_cycles: int

    @property
    def m(self) -> int:
        return self.n // (self.r - self.ell)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


class SecondMomentReport(BaseModel):
    n: int
    r: int
    ell: int
    p: float
    expected_z: Fraction
    second_moment_pairs: Fraction
    second_moment_overlap: Fraction
    ratio: float
    relative_difference: float

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_serializer("expected_z", "second_moment_pairs", "second_moment_overlap")
    def serialize_exact(self, value: Fraction) -> str:
        return str(value)

    @property
    def variance(self) -> Fraction:
        return self.second_moment_pairs - self.expected_z**2


class VarianceCheckReport(BaseModel):
    n: int
    p: float
    n_trials: int
    root_seed: int
    sample_variance: float
    exact_variance: float
    lower: float
    upper: float
    within_band: bool


class PlantedMeanReport(BaseModel):
    n: int
    j: int
    p: float
    closed_form: float
    exact_expectation: float
    relative_difference: float
    mu_j: float
    closed_to_mu_ratio: float
    n_trials: int = 0
    monte_carlo_mean: float | None = None
    monte_carlo_se: float | None = None
    within_band: bool | None = None


class PlantedMgfReport(BaseModel):
    n: int
    p: float
    c: float
    K: int
    n_trials: int
    null_mean_x: float
    null_band: tuple[float, float]
    planted_mean: float
    planted_band: tuple[float, float]
    bands_overlap: bool
    reference: float
    null_within_15pct: bool
    planted_within_15pct: bool


class BigOverlapReport(BaseModel):
    n: int
    p: float
    window: tuple[int, int]
    n_trials: int
    trials_with_pair: int
    frequency: float
    pair_overlaps: list[int]
    m_minus_one_pairs: int
    max_overlap_seen: int


class ExperimentConfig(BaseModel):
    """One experiment run, persisted as a key=value file (see reports.load_config)."""

    experiment: Experiment
    n: int
    r: int
    ell: int
    p: float | None = None
    c: float | None = None
    target_m: float | None = None
    K: int | None = Field(default=None, ge=0)
    n_trials: int = Field(default=100, ge=1)
    root_seed: int = Field(default=0, ge=0, lt=UINT64_LIMIT)
    workers: int = Field(default=1, ge=1)
    out_dir: Path = Path("results")
    repeats: int = Field(default=1, ge=1)
    two_stage: bool = False
    overlap_t: int | None = Field(default=None, ge=0)
    scan_n: list[int] = Field(default_factory=list)
    record_timing: bool = False
    gates: dict[str, tuple[float, float]] = Field(default_factory=dict)
    caps: dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_config(self) -> Self:
        """Validates the density specification, gate bounds and cap overrides."""
        given = [x for x in (self.p, self.c, self.target_m) if x is not None]
        if len(given) != 1:
            raise ValueError("Exactly one of p, c, target_m must be given")
        if self.p is not None and not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")
        if self.c is not None and self.c <= 0:
            raise ValueError("c must be positive")
        if self.target_m is not None and self.target_m <= 0:
            raise ValueError("target_m must be positive")
        for name, (lower, upper) in self.gates.items():
            if lower > upper:
                raise ValueError(f"Gate {name} has lower bound above upper bound")
        for name, value in self.caps.items():
            if value < 1:
                raise ValueError(f"Cap {name} must be positive")
        Params(n=self.n, r=self.r, ell=self.ell)
        for n in self.scan_n:
            Params(n=n, r=self.r, ell=self.ell)
        return self

    @property
    def params(self) -> Params:
        return Params(n=self.n, r=self.r, ell=self.ell)


class TrialRecord(BaseModel):
    """Observables of one trial. Z is exact and serialized as a decimal string."""

    trial: int
    seed: int
    edge_count: int
    z: int | None = Field(default=None, ge=0)
    y: list[float] = Field(default_factory=list)
    y_n: float | None = None
    x: float | None = None
    elapsed_ms: float | None = None
    model: TrialModel = TrialModel.NULL

    @field_serializer("z")
    def serialize_z(self, z: int | None) -> str | None:
        return None if z is None else str(z)


class ExperimentResult(BaseModel):
    config: ExperimentConfig
    records: list[TrialRecord]
    summary: dict
    reports: list[TestReport]

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports)
