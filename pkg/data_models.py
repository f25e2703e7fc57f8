"""
Core data models for the PaLD / PaNNLD clustering engine.
Defines rank tables, ranking systems, neighbor graphs, cohesion matrices,
cluster results and the serializable run configuration.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Literal, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

logger = logging.getLogger(__name__)


class ConsistencyError(RuntimeError):
    """An internal contract between pipeline stages was broken."""


class CohesionDomainError(KeyError):
    """A cohesion entry was requested outside the matrix support."""


def pair_key(x: int, y: int) -> Tuple[int, int]:
    """Canonical key of the unordered pair {x, y}."""
    return (x, y) if x < y else (y, x)


class RankTable:
    """
    Total order of a candidate set as seen from a base point.

    Ranks run from 1 to |candidates|; the base point itself is not ranked and
    precedes every candidate (autosimilarity).
    """

    def __init__(self, base: int, order: Sequence[int]):
        """
        Initialize a RankTable from an ordered candidate sequence.

        Args:
            base: Id of the point whose view this table records
            order: Candidate ids, most similar first

        Raises:
            ValueError: If the order repeats a member or contains the base
        """
        self.base = base
        self.order: Tuple[int, ...] = tuple(int(v) for v in order)
        self.rank: Dict[int, int] = {member: i + 1 for i, member in enumerate(self.order)}
        if len(self.rank) != len(self.order):
            raise ValueError(f"Rank table at {base} repeats a member")
        if base in self.rank:
            raise ValueError(f"Rank table at {base} ranks its own base point")

    @property
    def candidates(self) -> frozenset:
        return frozenset(self.order)

    def precedes(self, y: int, z: int) -> bool:
        """
        Check y ≺ z from the base point's view.

        Raises:
            KeyError: If y or z is neither the base nor a ranked candidate
        """
        if y == z:
            return False
        if y == self.base:
            return True
        if z == self.base:
            return False
        return self.rank[y] < self.rank[z]

    def first(self, k: int) -> Tuple[int, ...]:
        return self.order[:k]

    def __len__(self) -> int:
        return len(self.order)

    def __contains__(self, member: int) -> bool:
        return member in self.rank

    def __str__(self) -> str:
        return f"RankTable(base={self.base}, size={len(self.order)})"

    def __repr__(self) -> str:
        return self.__str__()


class RankingSystem:
    """
    A family of total orders, one per point, stored as rank tables.

    Tables are either full (each ranks all n-1 other points) or restricted
    (each ranks only the promoted neighbors of its base). The system is not
    mutated after construction.
    """

    def __init__(self, n: int, tables: Dict[int, RankTable], provenance: Optional[Dict[str, Any]] = None,
                 labels: Optional[Sequence[str]] = None, oracle: Any = None, points: Optional[np.ndarray] = None):
        """
        Initialize a RankingSystem.

        Args:
            n: Number of points
            tables: Mapping from base id to its RankTable
            provenance: Generator descriptor and seed, or input source
            labels: External string ids, index-aligned with internal ids
            oracle: The triplet oracle that generated the tables, if any
            points: Coordinates behind a metric system, if any

        Raises:
            ValueError: If a table references an id outside 0..n-1
        """
        self.n = n
        self.tables = dict(tables)
        self.provenance: Dict[str, Any] = dict(provenance or {})
        self.labels: List[str] = list(labels) if labels is not None else [str(i) for i in range(n)]
        self.oracle = oracle
        self.points = points
        if len(self.labels) != n:
            raise ValueError(f"Expected {n} labels, got {len(self.labels)}")
        for base, table in self.tables.items():
            if not 0 <= base < n or any(not 0 <= v < n for v in table.order):
                raise ValueError(f"Rank table at {base} references an id outside 0..{n - 1}")
        self._rank_matrix: Optional[np.ndarray] = None

    @property
    def full(self) -> bool:
        return len(self.tables) == self.n and all(len(t) == self.n - 1 for t in self.tables.values())

    def table(self, x: int) -> RankTable:
        try:
            return self.tables[x]
        except KeyError:
            raise ConsistencyError(f"No rank table at point {x}") from None

    def precedes(self, x: int, y: int, z: int) -> bool:
        """
        Check y ≺ₓ z using the table at x.

        Raises:
            ConsistencyError: If the table at x does not rank y or z
        """
        try:
            return self.table(x).precedes(y, z)
        except KeyError as e:
            raise ConsistencyError(f"Rank table at {x} is missing member {e.args[0]}") from None

    def rank_matrix(self) -> np.ndarray:
        """
        Dense rank matrix R with R[x, y] = rank of y at x and R[x, x] = 0.

        Raises:
            ValueError: If the system is not full
        """
        if self._rank_matrix is None:
            if not self.full:
                raise ValueError("Dense rank matrix requires full rank tables")
            matrix = np.zeros((self.n, self.n), dtype=np.int64)
            for base, table in self.tables.items():
                matrix[base, list(table.order)] = np.arange(1, self.n)
            matrix.setflags(write=False)
            self._rank_matrix = matrix
        return self._rank_matrix

    def ranked_before(self, x: int, y: int) -> List[int]:
        """Members of the table at x that precede y, in order."""
        table = self.table(x)
        return list(table.order[:table.rank[y] - 1])

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"Unknown point id: {label}") from None

    def __str__(self) -> str:
        kind = "full" if self.full else "restricted"
        return f"RankingSystem(n={self.n}, {kind}, provenance={self.provenance.get('kind', 'unknown')})"

    def __repr__(self) -> str:
        return self.__str__()


class DatasetSpec(BaseModel):
    """Descriptor of a synthetic or external dataset."""

    kind: Literal["euclidean", "blobs", "star", "random-tournament", "external"] = "euclidean"
    n: int = 100
    dim: int = 2
    centers: int = 2
    cluster_std: float = 1.0
    weights: Optional[List[float]] = None
    seed: int = 0
    tie_break: Literal["index"] = "index"


class NeighborGraph:
    """
    Friend sets and the undirected promoted-pair graph built from them.
    """

    def __init__(self, n: int, friends: Dict[int, Tuple[int, ...]]):
        """
        Initialize a NeighborGraph from friend sets.

        Args:
            n: Number of points
            friends: Mapping x -> Γₓ as a tuple ordered by ≺ₓ
        """
        self.n = n
        self.friends: Dict[int, Tuple[int, ...]] = {x: tuple(friends[x]) for x in range(n)}
        adjacency: Dict[int, Set[int]] = {x: set() for x in range(n)}
        for x, gamma in self.friends.items():
            for y in gamma:
                adjacency[x].add(y)
                adjacency[y].add(x)
        self.promoted: Dict[int, frozenset] = {x: frozenset(adjacency[x]) for x in range(n)}
        self.degrees = np.array([len(self.promoted[x]) for x in range(n)], dtype=np.int64)
        self.k_values = np.array([len(self.friends[x]) for x in range(n)], dtype=np.int64)

    @property
    def k_min(self) -> int:
        return int(self.k_values.min())

    @property
    def k_bar(self) -> float:
        return float(self.k_values.mean())

    @property
    def promoted_count(self) -> int:
        return int(self.degrees.sum()) // 2

    def is_promoted(self, x: int, y: int) -> bool:
        return y in self.promoted[x]

    def promoted_pairs(self) -> Iterator[Tuple[int, int]]:
        """Yield each promoted pair once as (x, y) with x < y, in sorted order."""
        for x in range(self.n):
            for y in sorted(self.promoted[x]):
                if x < y:
                    yield x, y

    def relegated_partners(self, x: int) -> List[int]:
        """Relegated partners ℛₓ, computed as the complement of 𝒫ₓ ∪ {x}."""
        excluded = self.promoted[x]
        return [y for y in range(self.n) if y != x and y not in excluded]

    def sum_squared_degrees(self) -> int:
        return int((self.degrees ** 2).sum())

    def __str__(self) -> str:
        return (f"NeighborGraph(n={self.n}, |P|={self.promoted_count}, "
                f"K_min={self.k_min}, K_bar={self.k_bar:.2f}, max_degree={int(self.degrees.max())})")

    def __repr__(self) -> str:
        return self.__str__()


class DegreeGroups:
    """Distinct vertex-degree values of a promoted graph and their histogram."""

    def __init__(self, lambda1: List[int], lambda2: List[Tuple[int, int]], counts: Dict[int, int]):
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        # counts[beta] = #{y : d_y = beta - 1}
        self.counts = counts

    def __str__(self) -> str:
        return f"DegreeGroups(|L1|={len(self.lambda1)}, |L2|={len(self.lambda2)})"

    def __repr__(self) -> str:
        return self.__str__()


class ConflictFociStore:
    """
    Left conflict-focus sizes |U_{x‖y}| for every ordered pair.

    left[x, y] = |U_{x‖y}|; the symmetric focus size is left[x, y] + left[y, x].
    """

    def __init__(self, left: np.ndarray, steps: int = 0):
        self.left = left
        self.n = left.shape[0]
        self.steps = steps

    def left_size(self, x: int, y: int) -> int:
        return int(self.left[x, y])

    def size(self, x: int, y: int) -> int:
        if x == y:
            raise ValueError("Conflict focus needs distinct points")
        return int(self.left[x, y] + self.left[y, x])

    def size_matrix(self) -> np.ndarray:
        sizes = self.left + self.left.T
        np.fill_diagonal(sizes, 0)
        return sizes

    def __str__(self) -> str:
        return f"ConflictFociStore(n={self.n})"

    def __repr__(self) -> str:
        return self.__str__()


class CohesionMatrix:
    """
    Cohesion scores C_{x,v}.

    Dense layout holds an n×n array. Sparse layout holds the diagonal and the
    entries on ordered promoted pairs; every other entry is undefined.
    """

    def __init__(self, n: int, layout: Literal["dense", "sparse"], values: Optional[np.ndarray] = None,
                 diagonal: Optional[np.ndarray] = None, offdiagonal: Optional[Dict[Tuple[int, int], float]] = None):
        self.n = n
        self.layout = layout
        if layout == "dense":
            if values is None or values.shape != (n, n):
                raise ValueError("Dense cohesion matrix needs an n x n array")
            self.values = values
        else:
            if diagonal is None or offdiagonal is None:
                raise ValueError("Sparse cohesion matrix needs a diagonal and off-diagonal entries")
            self.sparse_diagonal = diagonal
            self.offdiagonal = offdiagonal

    def get(self, x: int, v: int) -> float:
        """
        Look up C_{x,v}.

        Raises:
            CohesionDomainError: If the sparse matrix is undefined at (x, v)
        """
        if self.layout == "dense":
            return float(self.values[x, v])
        if x == v:
            return float(self.sparse_diagonal[x])
        try:
            return self.offdiagonal[(x, v)]
        except KeyError:
            raise CohesionDomainError(f"C[{x},{v}] is outside the promoted pairs and diagonal") from None

    def diagonal(self) -> np.ndarray:
        if self.layout == "dense":
            return np.diag(self.values).copy()
        return self.sparse_diagonal.copy()

    def entries(self) -> Iterator[Tuple[int, int, float]]:
        """Yield (x, v, value) over the support in row-major order."""
        if self.layout == "dense":
            for x in range(self.n):
                for v in range(self.n):
                    yield x, v, float(self.values[x, v])
            return
        by_row: Dict[int, List[Tuple[int, float]]] = {x: [(x, float(self.sparse_diagonal[x]))] for x in range(self.n)}
        for (x, v), value in self.offdiagonal.items():
            by_row[x].append((v, value))
        for x in range(self.n):
            for v, value in sorted(by_row[x]):
                yield x, v, value

    def edge_weight(self, x: int, y: int) -> float:
        """Mutual cohesion w_{x,y} = min{C_{x,y}, C_{y,x}}."""
        return min(self.get(x, y), self.get(y, x))

    def max_entry(self) -> float:
        if self.layout == "dense":
            return float(self.values.max())
        return max([float(self.sparse_diagonal.max())] + list(self.offdiagonal.values()))

    def __str__(self) -> str:
        return f"CohesionMatrix(n={self.n}, layout={self.layout})"

    def __repr__(self) -> str:
        return self.__str__()


class ClusterResult:
    """Threshold, kept edges, component labels and run diagnostics."""

    def __init__(self, threshold: float, edges: List[Tuple[int, int, float]], labels: List[int],
                 diagnostics: Optional[Dict[str, Any]] = None):
        self.threshold = threshold
        self.edges = edges
        self.labels = labels
        self.diagnostics: Dict[str, Any] = dict(diagnostics or {})

    @property
    def n_components(self) -> int:
        return len(set(self.labels))

    def component_sizes(self) -> List[int]:
        """Component sizes in descending order."""
        return sorted(np.bincount(np.asarray(self.labels, dtype=np.int64)).tolist(), reverse=True)

    def __str__(self) -> str:
        return f"ClusterResult(tau={self.threshold:.6g}, edges={len(self.edges)}, components={self.n_components})"

    def __repr__(self) -> str:
        return self.__str__()


class PromotedFoci:
    """
    Output of the promoted cohesion traversal.

    left[(x, y)] holds U^𝒫_{x‖y} for every ordered promoted pair.
    connectors[(y, z)] holds D^ℛ_{y‖z} for relegated pairs with a common
    promoted neighbor; a key is present for both orders once either is set.
    """

    def __init__(self, left: Dict[Tuple[int, int], Set[int]], connectors: Dict[Tuple[int, int], Set[int]],
                 oracle_calls: int = 0, inner_steps: int = 0):
        self.left = left
        self.connectors = connectors
        self.oracle_calls = oracle_calls
        self.inner_steps = inner_steps

    def left_size(self, x: int, y: int) -> int:
        return len(self.left[(x, y)])

    def focus_size(self, x: int, y: int) -> int:
        return len(self.left[(x, y)]) + len(self.left[(y, x)])

    def common_count(self, x: int, y: int) -> int:
        """|𝒫ₓ ∩ 𝒫_y| for a relegated pair, read off the connector sets."""
        return len(self.connectors.get((x, y), ())) + len(self.connectors.get((y, x), ()))

    def connected_relegated_pairs(self) -> List[Tuple[int, int]]:
        """Relegated pairs with non-empty connector sets, as sorted (x, y) with x < y."""
        return sorted({pair_key(y, z) for (y, z), members in self.connectors.items() if members})

    def __str__(self) -> str:
        return (f"PromotedFoci(ordered_pairs={len(self.left)}, connector_pairs={len(self.connected_relegated_pairs())}, "
                f"steps={self.inner_steps})")

    def __repr__(self) -> str:
        return self.__str__()


class RelegatedAverages:
    """Stranger-randomization averages Gₓ, G_{x,v} and their intermediates."""

    def __init__(self, g_diag: np.ndarray, g_off: Dict[Tuple[int, int], float], h: np.ndarray,
                 g_alpha: Dict[int, float], steps: Dict[str, int]):
        self.g_diag = g_diag
        self.g_off = g_off
        self.h = h
        self.g_alpha = g_alpha
        self.steps = steps

    def __str__(self) -> str:
        return f"RelegatedAverages(n={len(self.g_diag)}, pairs={len(self.g_off)})"

    def __repr__(self) -> str:
        return self.__str__()


class McReport(BaseModel):
    """Outcome of one Monte Carlo or distributional check."""

    name: str
    estimate: float
    target: float
    std_error: float
    trials: int
    statistic: str
    tolerance: Optional[float] = None
    verdict: Literal["pass", "fail", "report"] = "report"
    details: Dict[str, Any] = Field(default_factory=dict)

    @classmethod
    def judge(cls, name: str, estimate: float, target: float, std_error: float, trials: int,
              statistic: str, value: float, tolerance: Optional[float], upper_only: bool = False,
              details: Optional[Dict[str, Any]] = None) -> "McReport":
        """
        Build a report whose verdict compares `value` against `tolerance`.

        A two-sided check passes when |value| <= tolerance, a one-sided check
        when value <= tolerance; no tolerance means a report-only entry.
        """
        if tolerance is None:
            verdict = "report"
        elif upper_only:
            verdict = "pass" if value <= tolerance else "fail"
        else:
            verdict = "pass" if abs(value) <= tolerance else "fail"
        return cls(name=name, estimate=estimate, target=target, std_error=std_error, trials=trials,
                   statistic=statistic, tolerance=tolerance, verdict=verdict,
                   details={"value": value, **(details or {})})

    @property
    def passed(self) -> bool:
        return self.verdict != "fail"


class RunConfig(BaseModel):
    """Serializable description of one batch run."""

    input_kind: Literal["points", "distances", "ranks", "generator"] = "generator"
    input_path: Optional[str] = None
    dataset: DatasetSpec = Field(default_factory=DatasetSpec)
    pipeline: Literal["pald", "pannld"] = "pannld"
    k: int = 10
    k_overrides_path: Optional[str] = None
    phi_mode: Literal["exact", "quadrature", "asymptotic"] = "exact"
    seed: int = 0
    output_dir: str = "results"
    degree_cap: Optional[int] = None
    threads: int = 1
    pald_cap: int = 5000
    force: bool = False
    log_level: str = "INFO"

    @field_validator("threads")
    @classmethod
    def _positive_threads(cls, value: int) -> int:
        if value < 1:
            raise ValueError("threads must be at least 1")
        return value

    def save(self, path: Path) -> None:
        Path(path).write_text(self.model_dump_json(indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        return cls.model_validate(json.loads(Path(path).read_text(encoding="utf-8")))


class RunSummary(BaseModel):
    """Machine-readable summary written next to every run's artifacts."""

    pipeline: Literal["pald", "pannld"]
    n: int
    K: Optional[int] = None
    tau: float
    tau_P: Optional[float] = None
    tau_R: Optional[float] = None
    component_sizes: List[int]
    oracle_calls: int
    inner_steps: int
    wall_time: float
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
