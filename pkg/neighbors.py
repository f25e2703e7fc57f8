"""
Friend sets, the nearest-neighbors digraph and its undirected promoted graph.
Classifies pairs as promoted or relegated and groups vertices by degree.
"""

import logging
import math
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from sklearn.neighbors import NearestNeighbors

from data_models import ConsistencyError, DegreeGroups, NeighborGraph, RankingSystem
from ranking import RankTableOracle, TripletOracle, build_rank_tables

logger = logging.getLogger(__name__)


class PairClass(Enum):
    PROMOTED = "promoted"
    RELEGATED = "relegated"


def _k_per_point(n: int, K: Union[int, Mapping[int, int]]) -> Dict[int, int]:
    """Expand a uniform K or a per-point mapping into K_x for every x."""
    if isinstance(K, Mapping):
        missing = [x for x in range(n) if x not in K]
        if missing:
            raise ValueError(f"Per-point K is missing {len(missing)} points, first {missing[0]}")
        k_values = {x: int(K[x]) for x in range(n)}
    else:
        k_values = {x: int(K) for x in range(n)}
    bad = {x: k for x, k in k_values.items() if not 1 < k < n - 1}
    if bad:
        x, k = next(iter(bad.items()))
        raise ValueError(f"K must satisfy 1 < K < n-1 = {n - 1}; got K={k} at point {x} "
                         f"({len(bad)} points out of range)")
    return k_values


def build_friend_sets(rs: RankingSystem, K: Union[int, Mapping[int, int]]) -> Dict[int, Tuple[int, ...]]:
    """
    Friend sets Γₓ as the first Kₓ entries of each full rank table.

    Args:
        rs: Ranking system with full rank tables
        K: Uniform friend count, or a mapping x -> Kₓ covering every point

    Returns:
        Mapping x -> Γₓ ordered by ≺ₓ

    Raises:
        ValueError: If some Kₓ is outside (1, n-1) or the tables are not full
    """
    k_values = _k_per_point(rs.n, K)
    if not rs.full:
        raise ValueError("Friend sets by rank table need full tables; supply external friend sets instead")
    friends = {x: rs.table(x).first(k_values[x]) for x in range(rs.n)}
    logger.info(f"Built friend sets for n={rs.n} (K_min={min(k_values.values())}, "
                f"K_max={max(k_values.values())})")
    return friends


def knn_friend_sets(points: np.ndarray, K: Union[int, Mapping[int, int]], oracle: Optional[TripletOracle] = None,
                    validate: bool = True) -> Dict[int, Tuple[int, ...]]:
    """
    Friend sets supplied by a scikit-learn nearest-neighbor search.

    Distance ties are re-ordered by ascending index so the result agrees
    with the metric oracles' tie-break.

    Args:
        points: Coordinates, one row per point
        K: Uniform friend count or per-point mapping
        oracle: Oracle to validate against when validate is set
        validate: Check friend precedence with the oracle (O(n^2) queries)

    Returns:
        Mapping x -> Γₓ ordered by ≺ₓ
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    k_values = _k_per_point(n, K)
    k_query = min(max(k_values.values()) + 2, n)
    search = NearestNeighbors(n_neighbors=k_query).fit(points)
    distances, indices = search.kneighbors(points)

    friends: Dict[int, Tuple[int, ...]] = {}
    for x in range(n):
        ranked = sorted((float(d), int(y)) for d, y in zip(distances[x], indices[x]) if y != x)
        friends[x] = tuple(y for _, y in ranked[:k_values[x]])
    logger.info(f"Nearest-neighbor search supplied friend sets for n={n}")
    if validate:
        if oracle is None:
            raise ValueError("Validating external friend sets requires an oracle")
        validate_friend_sets(oracle, friends)
    return friends


def validate_friend_sets(oracle: TripletOracle, friends: Mapping[int, Tuple[int, ...]]) -> None:
    """
    Check that every friend of x precedes every stranger of x under ≺ₓ.

    Finds the last friend with |Γₓ|-1 queries, then compares it with each stranger.

    Raises:
        ValueError: If some friend does not precede some stranger, naming the triple
    """
    n = oracle.n
    for x in range(n):
        gamma = friends[x]
        if x in gamma or len(set(gamma)) != len(gamma):
            raise ValueError(f"Friend set of {x} repeats a member or contains the point itself")
        last = gamma[0]
        for y in gamma[1:]:
            if oracle.compare(x, last, y) < 0:
                last = y
        members = set(gamma)
        for z in range(n):
            if z == x or z in members:
                continue
            if oracle.compare(x, last, z) > 0:
                logger.error(f"Friend precedence fails at {x}: friend {last} after stranger {z}")
                raise ValueError(f"Friend {last} of point {x} does not precede stranger {z}")


def promoted_pairs(friends: Mapping[int, Tuple[int, ...]], n: Optional[int] = None) -> NeighborGraph:
    """
    Undirected promoted graph: {x, y} is promoted when y ∈ Γₓ or x ∈ Γ_y.

    Args:
        friends: Friend sets for every point
        n: Number of points; defaults to len(friends)

    Returns:
        NeighborGraph with symmetric adjacency and degrees
    """
    n = len(friends) if n is None else n
    g = NeighborGraph(n, dict(friends))
    k_bar = g.k_bar
    if not (n * k_bar) / 2 <= g.promoted_count <= n * k_bar:
        raise ConsistencyError(f"Promoted pair count {g.promoted_count} outside [{n * k_bar / 2}, {n * k_bar}]")
    logger.info(f"Promoted graph: {g}")
    return g


def pair_class(g: NeighborGraph, x: int, y: int) -> PairClass:
    """
    Classify {x, y} as promoted or relegated.

    Raises:
        ValueError: If x == y
    """
    if x == y:
        raise ValueError("Pair classification needs distinct points")
    return PairClass.PROMOTED if g.is_promoted(x, y) else PairClass.RELEGATED


def degree_groups(g: NeighborGraph) -> DegreeGroups:
    """
    Distinct degree values Λ₁ (as d+1), unordered degree pairs Λ₂, and the histogram.

    Raises:
        ConsistencyError: If the distinct-degree count breaks its edge-count bound
    """
    values, counts = np.unique(g.degrees + 1, return_counts=True)
    lambda1 = [int(v) for v in values]
    histogram = {int(v): int(c) for v, c in zip(values, counts)}
    lambda2: List[Tuple[int, int]] = []
    for i, alpha in enumerate(lambda1):
        for beta in lambda1[i:]:
            if alpha != beta or histogram[alpha] > 1:
                lambda2.append((alpha, beta))

    t = len(lambda1)
    slack = 4 * g.promoted_count - 2 * g.n * g.k_min
    if (t - 1) > math.sqrt(max(slack, 0)) + 1e-9:
        raise ConsistencyError(f"{t} distinct degrees exceed the bound sqrt({slack}) + 1")
    logger.debug(f"Degree groups: |L1|={t}, |L2|={len(lambda2)}, bound={math.sqrt(max(slack, 0)) + 1:.2f}")
    return DegreeGroups(lambda1, lambda2, histogram)


def restricted_tables(rs: RankingSystem, g: NeighborGraph, threads: int = 1) -> RankingSystem:
    """
    Sort each 𝒫ₓ with the oracle into restricted rank tables.

    Args:
        rs: Ranking system carrying an oracle (or full tables to answer from)
        g: Promoted graph
        threads: Worker count for the per-point sorts

    Returns:
        Restricted RankingSystem sharing rs's oracle and provenance
    """
    oracle = rs.oracle if rs.oracle is not None else RankTableOracle(rs)
    candidates = {x: sorted(g.promoted[x]) for x in range(g.n)}
    restricted = build_rank_tables(oracle, candidates, threads=threads, provenance=rs.provenance, labels=rs.labels)
    restricted.points = rs.points
    return restricted
