"""
Triplet-comparison oracles and ranking systems.
Materializes per-point total orders as rank tables, checks the oracle axioms,
and generates synthetic ranking systems.
"""

import logging
import math
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from sklearn.datasets import make_blobs

from data_models import ConsistencyError, DatasetSpec, RankingSystem, RankTable

logger = logging.getLogger(__name__)

# Exhaustive transitivity checks are affordable up to this size.
EXHAUSTIVE_AXIOM_LIMIT = 30


class AxiomViolationError(ValueError):
    """An oracle answer broke one of the ranking axioms."""

    def __init__(self, message: str, axiom: str, triple: Tuple[int, int, int]):
        super().__init__(message)
        self.axiom = axiom
        self.triple = triple


class TripletOracle(ABC):
    """
    Answers compare(x; y, z): -1 if y is more similar to x than z, +1 if
    vice versa, 0 only when y = z. Counts every answered query.
    """

    def __init__(self, n: int):
        self.n = n
        self.calls = 0
        self._lock = threading.Lock()

    @abstractmethod
    def _order(self, x: int, y: int, z: int) -> int:
        """Raw comparison; ids are already validated."""

    def compare(self, x: int, y: int, z: int) -> int:
        """
        Compare y and z from the view of x.

        Raises:
            ValueError: If any id is outside 0..n-1
        """
        for point in (x, y, z):
            if not 0 <= point < self.n:
                raise ValueError(f"Unknown point id: {point}")
        sign = self._order(x, y, z)
        with self._lock:
            self.calls += 1
        return (sign > 0) - (sign < 0)

    def view(self) -> "CountingView":
        """A per-task view with its own call counter, merged back with absorb()."""
        return CountingView(self)

    def absorb(self, view: "CountingView") -> None:
        with self._lock:
            self.calls += view.calls


class CountingView(TripletOracle):
    """Delegates to a shared oracle while counting calls separately."""

    def __init__(self, base: TripletOracle):
        super().__init__(base.n)
        self.base = base

    def _order(self, x: int, y: int, z: int) -> int:
        return self.base._order(x, y, z)


class KeyedOracle(TripletOracle):
    """Oracle whose order at x sorts candidates by a per-point key tuple."""

    @abstractmethod
    def _key(self, x: int, y: int) -> Tuple:
        """Sort key of y at x; the point itself must sort first."""

    def _order(self, x: int, y: int, z: int) -> int:
        ky, kz = self._key(x, y), self._key(x, z)
        return (ky > kz) - (ky < kz)


class PointsOracle(KeyedOracle):
    """Euclidean distance comparator; ties broken by ascending point index."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        super().__init__(points.shape[0])
        self.points = points
        self._coords = [tuple(row) for row in points.tolist()]

    def _key(self, x: int, y: int) -> Tuple:
        return (math.dist(self._coords[x], self._coords[y]), y != x, y)


class DissimilarityOracle(KeyedOracle):
    """
    Row-wise dissimilarity comparator; row i is the dissimilarity-from-i view,
    so asymmetric matrices are allowed. Ties broken by ascending index.
    """

    def __init__(self, matrix: np.ndarray):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Dissimilarity matrix must be square, got shape {matrix.shape}")
        super().__init__(matrix.shape[0])
        self.matrix = matrix

    def _key(self, x: int, y: int) -> Tuple:
        return (float(self.matrix[x, y]), y != x, y)


class LexicographicOracle(KeyedOracle):
    """
    Multi-field comparator: fields in priority order, each compared by
    absolute difference from x; the first non-tied field decides.
    """

    def __init__(self, features: np.ndarray):
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        super().__init__(features.shape[0])
        self.features = features

    def _key(self, x: int, y: int) -> Tuple:
        diffs = np.abs(self.features[y] - self.features[x])
        return (*diffs.tolist(), y != x, y)


class RankTableOracle(TripletOracle):
    """Answers from the rank tables of a ranking system."""

    def __init__(self, rs: RankingSystem):
        super().__init__(rs.n)
        self.rs = rs

    def _order(self, x: int, y: int, z: int) -> int:
        if y == z:
            return 0
        return -1 if self.rs.precedes(x, y, z) else 1


def compare(oracle: TripletOracle, x: int, y: int, z: int) -> int:
    """
    Answer compare(x; y, z) and count the query.

    Args:
        oracle: Triplet oracle
        x, y, z: Point ids

    Returns:
        -1, 0 or +1
    """
    return oracle.compare(x, y, z)


def sort_budget(m: int) -> int:
    """Oracle-call budget of build_rank_table for m candidates."""
    if m <= 1:
        return 0
    return math.ceil(m * math.log2(m)) + m


def _merge_sort(items: List[int], less: Callable[[int, int], bool]) -> List[int]:
    if len(items) <= 1:
        return items
    middle = len(items) // 2
    left = _merge_sort(items[:middle], less)
    right = _merge_sort(items[middle:], less)
    merged: List[int] = []
    i = j = 0
    while i < len(left) and j < len(right):
        if less(left[i], right[j]):
            merged.append(left[i])
            i += 1
        else:
            merged.append(right[j])
            j += 1
    merged.extend(left[i:])
    merged.extend(right[j:])
    return merged


def build_rank_table(oracle: TripletOracle, x: int, candidates: Iterable[int]) -> RankTable:
    """
    Sort candidates by similarity to x with a counted merge sort.

    Every adjacent pair of the result is confirmed by a direct answer in the
    forward direction, so an oracle that breaks antisymmetry or ordering is
    caught during the sort.

    Args:
        oracle: Triplet oracle
        x: Base point
        candidates: Ids to rank; must not contain x

    Returns:
        RankTable over the candidates

    Raises:
        ValueError: If candidates are empty or contain x
        AxiomViolationError: If the oracle answers inconsistently
        ConsistencyError: If the sort exceeded its comparison budget
    """
    members = sorted(set(candidates))
    if not members:
        raise ValueError(f"No candidates to rank at point {x}")
    if x in members:
        raise ValueError(f"Candidates at point {x} contain the point itself")

    start = oracle.calls
    answers: Dict[Tuple[int, int], int] = {}

    def less(y: int, z: int) -> bool:
        sign = oracle.compare(x, y, z)
        if sign == 0:
            raise AxiomViolationError(f"Totality violated: compare({x}; {y}, {z}) = 0", "totality", (x, y, z))
        answers[(y, z)] = sign
        return sign < 0

    order = _merge_sort(members, less)

    for y, z in zip(order, order[1:]):
        if (y, z) in answers:
            continue
        sign = oracle.compare(x, y, z)
        if sign < 0:
            continue
        if sign == 0:
            raise AxiomViolationError(f"Totality violated: compare({x}; {y}, {z}) = 0", "totality", (x, y, z))
        if answers.get((z, y), 0) > 0:
            raise AxiomViolationError(
                f"Antisymmetry violated: compare({x}; {y}, {z}) and compare({x}; {z}, {y}) are both +1",
                "antisymmetry", (x, y, z))
        raise AxiomViolationError(f"Ordering violated at {x}: sorted {y} before {z} but oracle disagrees",
                                  "transitivity", (x, y, z))

    used = oracle.calls - start
    if used > sort_budget(len(members)):
        raise ConsistencyError(f"Sort at {x} used {used} comparisons, budget {sort_budget(len(members))}")
    return RankTable(x, order)


def build_rank_tables(oracle: TripletOracle, candidates: Dict[int, Iterable[int]], threads: int = 1,
                      provenance: Optional[Dict[str, Any]] = None,
                      labels: Optional[Sequence[str]] = None) -> RankingSystem:
    """
    Build one rank table per base point, in parallel when threads > 1.

    Each task queries through its own counting view; counts are merged into
    the oracle once all tasks finish.

    Args:
        oracle: Triplet oracle
        candidates: Mapping base point -> ids to rank
        threads: Worker count
        provenance: Descriptor stored on the result
        labels: External ids

    Returns:
        RankingSystem over the given tables
    """
    def task(x: int) -> Tuple[RankTable, "CountingView"]:
        view = oracle.view()
        return build_rank_table(view, x, candidates[x]), view

    bases = sorted(candidates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, bases))
    else:
        results = [task(x) for x in bases]

    tables = {}
    for table, view in results:
        tables[table.base] = table
        oracle.absorb(view)
    logger.info(f"Built {len(tables)} rank tables with {sum(v.calls for _, v in results)} oracle calls")
    return RankingSystem(oracle.n, tables, provenance=provenance, labels=labels, oracle=oracle)


def _ranking_from_keys(oracle: KeyedOracle, provenance: Dict[str, Any], labels: Optional[Sequence[str]] = None,
                       points: Optional[np.ndarray] = None) -> RankingSystem:
    """Full rank tables sorted by the oracle's own keys, without counted queries."""
    n = oracle.n
    if n < 3:
        raise ValueError(f"Need at least 3 points, got {n}")
    tables = {}
    for x in range(n):
        others = [y for y in range(n) if y != x]
        tables[x] = RankTable(x, sorted(others, key=lambda y: oracle._key(x, y)))
    return RankingSystem(n, tables, provenance=provenance, labels=labels, oracle=oracle, points=points)


def ranking_from_points(points: np.ndarray, provenance: Optional[Dict[str, Any]] = None,
                        labels: Optional[Sequence[str]] = None) -> RankingSystem:
    """
    Full Euclidean ranking system of a point cloud.

    Raises:
        ValueError: If fewer than 3 points are given
    """
    oracle = PointsOracle(points)
    return _ranking_from_keys(oracle, dict(provenance or {"kind": "points"}), labels=labels, points=oracle.points)


def ranking_from_dissimilarity(matrix: np.ndarray, provenance: Optional[Dict[str, Any]] = None,
                               labels: Optional[Sequence[str]] = None) -> RankingSystem:
    """
    Full ranking system of a (possibly asymmetric) dissimilarity matrix.

    Raises:
        ValueError: If the matrix is not square or has fewer than 3 rows
    """
    return _ranking_from_keys(DissimilarityOracle(matrix), dict(provenance or {"kind": "distances"}), labels=labels)


def oracle_system(oracle: TripletOracle, provenance: Optional[Dict[str, Any]] = None,
                  points: Optional[np.ndarray] = None) -> RankingSystem:
    """A ranking system with no tables yet; restricted tables are sorted later from the oracle."""
    return RankingSystem(oracle.n, {}, provenance=provenance, oracle=oracle, points=points)


def ranking_from_orders(orders: Dict[int, Sequence[int]], n: int, provenance: Optional[Dict[str, Any]] = None,
                        labels: Optional[Sequence[str]] = None) -> RankingSystem:
    """Ranking system answered by its own tables (generated or imported)."""
    tables = {x: RankTable(x, order) for x, order in orders.items()}
    rs = RankingSystem(n, tables, provenance=provenance, labels=labels)
    rs.oracle = RankTableOracle(rs)
    return rs


def verify_axioms(oracle: TripletOracle, n: int, samples: int, seed: int = 0) -> Dict[str, Any]:
    """
    Check antisymmetry, transitivity, totality and autosimilarity on random triples.

    Transitivity is checked on chained triples; for n <= 30 it is also checked
    exhaustively by confirming every pair against a sorted order at each point.

    Args:
        oracle: Triplet oracle
        n: Number of points
        samples: Number of random triples
        seed: Sampling seed

    Returns:
        Dictionary with counts and a list of violations with witnesses
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    rng = np.random.default_rng(seed)
    violations: List[Dict[str, Any]] = []

    def record(axiom: str, witness: Tuple[int, ...]) -> None:
        violations.append({"axiom": axiom, "witness": [int(v) for v in witness]})

    for _ in range(samples):
        x, y, z, w = (int(v) for v in rng.integers(0, n, size=4))
        yz, zy = oracle.compare(x, y, z), oracle.compare(x, z, y)
        if yz != -zy:
            record("antisymmetry", (x, y, z))
        if (yz == 0) != (y == z):
            record("totality", (x, y, z))
        if y != x and oracle.compare(x, x, y) != -1:
            record("autosimilarity", (x, x, y))
        if yz > 0 and oracle.compare(x, z, w) > 0 and oracle.compare(x, y, w) <= 0:
            record("transitivity", (x, y, z, w))

    exhaustive = n <= EXHAUSTIVE_AXIOM_LIMIT
    if exhaustive:
        for x in range(n):
            others = [y for y in range(n) if y != x]
            try:
                table = build_rank_table(oracle, x, others)
            except AxiomViolationError as e:
                record(e.axiom, e.triple)
                continue
            for i, y in enumerate(table.order):
                for z in table.order[i + 1:]:
                    if oracle.compare(x, y, z) != -1:
                        record("transitivity", (x, y, z))

    if violations:
        logger.warning(f"Axiom check found {len(violations)} violations; first: {violations[0]}")
    else:
        logger.info(f"Axiom check passed on {samples} sampled triples (exhaustive={exhaustive})")
    return {
        "samples": samples,
        "exhaustive_transitivity": exhaustive,
        "violation_count": len(violations),
        "violations": violations,
    }


def gen_euclidean(n: int, dim: int, seed: int, points: Optional[np.ndarray] = None) -> RankingSystem:
    """
    Uniform points on [0,1]^dim ranked by Euclidean distance.

    Args:
        n: Number of points
        dim: Dimension
        seed: Random seed
        points: Injected coordinates; overrides sampling when given

    Raises:
        ValueError: If n < 3 or dim < 1
    """
    if n < 3:
        raise ValueError(f"Euclidean generator needs n >= 3, got {n}")
    if dim < 1:
        raise ValueError(f"Euclidean generator needs dim >= 1, got {dim}")
    if points is None:
        points = np.random.default_rng(seed).random((n, dim))
    provenance = {"kind": "euclidean", "n": n, "dim": dim, "seed": seed}
    return ranking_from_points(points, provenance=provenance)


def gen_blobs(n: int, centers: int, dim: int, seed: int, cluster_std: float = 1.0) -> Tuple[RankingSystem, np.ndarray]:
    """
    Gaussian blobs ranked by Euclidean distance, with ground-truth labels.

    Raises:
        ValueError: If n < 3
    """
    if n < 3:
        raise ValueError(f"Blob generator needs n >= 3, got {n}")
    points, truth = make_blobs(n_samples=n, centers=centers, n_features=dim, cluster_std=cluster_std,
                               random_state=seed)
    provenance = {"kind": "blobs", "n": n, "dim": dim, "centers": centers, "seed": seed}
    return ranking_from_points(points, provenance=provenance), truth


def star_distance(weights: Sequence[float], i: int, j: int) -> float:
    """Weighted path length between vertices x_i and x_j of a star centred at x_0."""
    if i == j:
        return 0.0
    if i == 0 or j == 0:
        return float(weights[max(i, j) - 1])
    return float(weights[i - 1] + weights[j - 1])


def gen_star(n_leaves: int, weights: Optional[Sequence[float]] = None) -> RankingSystem:
    """
    Path metric on a weighted star graph centred at x_0 with leaves x_1..x_n.

    The induced order at every x_k lists the other vertices by index.

    Args:
        n_leaves: Number of leaves
        weights: Strictly increasing positive edge weights w_1 < ... < w_n

    Raises:
        ValueError: If there are fewer than 2 leaves or the weights are not strictly increasing and positive
    """
    if n_leaves < 2:
        raise ValueError(f"Star graph needs at least 2 leaves, got {n_leaves}")
    if weights is None:
        weights = [float(j) for j in range(1, n_leaves + 1)]
    weights = [float(w) for w in weights]
    if len(weights) != n_leaves:
        raise ValueError(f"Expected {n_leaves} weights, got {len(weights)}")
    if weights[0] <= 0 or any(b <= a for a, b in zip(weights, weights[1:])):
        raise ValueError("Star weights must satisfy 0 < w_1 < w_2 < ... < w_n")
    size = n_leaves + 1
    matrix = np.array([[star_distance(weights, i, j) for j in range(size)] for i in range(size)])
    provenance = {"kind": "star", "n": size, "weights": weights}
    labels = [f"x{i}" for i in range(size)]
    return _ranking_from_keys(DissimilarityOracle(matrix), provenance, labels=labels)


def gen_random_tournament(n: int, seed: int) -> RankingSystem:
    """
    Independent uniformly random order at every point (non-concordant in general).

    Raises:
        ValueError: If n < 3
    """
    if n < 3:
        raise ValueError(f"Random tournament needs n >= 3, got {n}")
    rng = np.random.default_rng(seed)
    orders = {}
    for x in range(n):
        others = np.array([y for y in range(n) if y != x])
        orders[x] = [int(v) for v in rng.permutation(others)]
    return ranking_from_orders(orders, n, provenance={"kind": "random-tournament", "n": n, "seed": seed})


def generate(spec: DatasetSpec) -> RankingSystem:
    """
    Build the ranking system a DatasetSpec describes.

    Raises:
        ValueError: For the external kind, which must be read from files
    """
    logger.info(f"Generating {spec.kind} dataset (n={spec.n}, seed={spec.seed})")
    if spec.kind == "euclidean":
        return gen_euclidean(spec.n, spec.dim, spec.seed)
    if spec.kind == "blobs":
        rs, truth = gen_blobs(spec.n, spec.centers, spec.dim, spec.seed, spec.cluster_std)
        rs.provenance["truth"] = truth.tolist()
        return rs
    if spec.kind == "star":
        return gen_star(spec.n - 1, spec.weights)
    if spec.kind == "random-tournament":
        return gen_random_tournament(spec.n, spec.seed)
    raise ValueError("External datasets are read from CSV input, not generated")
