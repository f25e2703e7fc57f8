"""
Exact PaLD: conflict foci, cohesion matrix, local depth, threshold and cluster graph.
The dense pipeline is cubic in n and serves as the reference for PaNNLD.
"""

import logging
from typing import List, Optional, Set, Tuple

import numpy as np

from data_models import ClusterResult, CohesionMatrix, ConflictFociStore, RankingSystem
from utils import components

logger = logging.getLogger(__name__)

DEFAULT_PALD_CAP = 5000


def conflict_focus(rs: RankingSystem, x: int, y: int) -> Tuple[Set[int], Set[int]]:
    """
    Left conflict foci U_{x‖y} and U_{y‖x} by direct scan.

    U_{x‖y} = {x} ∪ {z ≠ x, y : z ≺ₓ y and x ≺_z y}; the two sets are
    disjoint and their union is the conflict focus U_{x,y}.

    Args:
        rs: Ranking system with full rank tables
        x, y: Distinct point ids

    Returns:
        Tuple of (U_{x‖y}, U_{y‖x})

    Raises:
        ValueError: If x == y
    """
    if x == y:
        raise ValueError("Conflict focus needs distinct points")
    left, right = {x}, {y}
    for z in range(rs.n):
        if z == x or z == y:
            continue
        if rs.precedes(x, z, y) and rs.precedes(z, x, y):
            left.add(z)
        elif rs.precedes(y, z, x) and rs.precedes(z, y, x):
            right.add(z)
    return left, right


def _left_focus_mask(R: np.ndarray, x: int) -> np.ndarray:
    """M[y, z] = 1{z ∈ U_{x‖y}} for every y and z (all-false row at y = x)."""
    row = R[x]
    return (row[None, :] < row[:, None]) & (R.T > R[:, x][None, :])


def _check_size(rs: RankingSystem, cap: int) -> None:
    if rs.n < 3:
        raise ValueError(f"PaLD needs n >= 3, got {rs.n}")
    if rs.n > cap:
        raise ValueError(f"n={rs.n} exceeds the PaLD cap of {cap}; use the pannld pipeline or raise the cap")


def conflict_foci_sizes(rs: RankingSystem, cap: int = DEFAULT_PALD_CAP) -> ConflictFociStore:
    """
    Left focus sizes |U_{x‖y}| for all ordered pairs, one n×n sweep per x.

    Raises:
        ValueError: If n < 3, n exceeds cap, or the tables are not full
    """
    _check_size(rs, cap)
    R = rs.rank_matrix()
    n = rs.n
    left = np.zeros((n, n), dtype=np.int64)
    steps = 0
    for x in range(n):
        mask = _left_focus_mask(R, x)
        steps += mask.size
        left[x] = mask.sum(axis=1)
    return ConflictFociStore(left, steps=steps)


def cohesion_matrix_exact(rs: RankingSystem, cap: int = DEFAULT_PALD_CAP) -> Tuple[CohesionMatrix, ConflictFociStore]:
    """
    Dense cohesion matrix C_{x,v} = (1/(n-1)) Σ_{y≠x} 1{v ∈ U_{x‖y}} / |U_{x,y}|.

    Args:
        rs: Ranking system with full rank tables
        cap: Largest n accepted

    Returns:
        Tuple of (dense CohesionMatrix, ConflictFociStore); store.steps counts
        the inner-loop work of both sweeps

    Raises:
        ValueError: If n < 3 or n exceeds cap
    """
    store = conflict_foci_sizes(rs, cap)
    n = rs.n
    R = rs.rank_matrix()
    sizes = store.size_matrix().astype(float)
    values = np.zeros((n, n), dtype=float)
    for x in range(n):
        weights = np.zeros(n, dtype=float)
        others = np.arange(n) != x
        weights[others] = 1.0 / sizes[x, others]
        mask = _left_focus_mask(R, x)
        store.steps += mask.size
        values[x] = weights @ mask / (n - 1)
    logger.info(f"Exact cohesion matrix for n={n} in {store.steps} steps")
    return CohesionMatrix(n, "dense", values=values), store


def local_depth(rs: RankingSystem, store: Optional[ConflictFociStore] = None) -> np.ndarray:
    """
    Local depth ℓ(x) = (1/(n-1)) Σ_{y≠x} |U_{x‖y}| / |U_{x,y}|.

    The witnesses in U_{x,y} that prefer x are exactly the members of U_{x‖y},
    so ℓ is also the row sum of the cohesion matrix.
    """
    if store is None:
        store = conflict_foci_sizes(rs)
    n = rs.n
    sizes = store.size_matrix().astype(float)
    np.fill_diagonal(sizes, 1.0)
    ratios = store.left / sizes
    np.fill_diagonal(ratios, 0.0)
    return ratios.sum(axis=1) / (n - 1)


def cluster_threshold(C: CohesionMatrix) -> float:
    """τ = Σₓ C_{x,x} / (2n)."""
    return float(C.diagonal().sum() / (2 * C.n))


def _kept_edges(C: CohesionMatrix, tau: float) -> List[Tuple[int, int, float]]:
    if C.layout == "dense":
        weights = np.minimum(C.values, C.values.T)
        xs, ys = np.nonzero(np.triu(weights >= tau, k=1))
        return [(int(x), int(y), float(weights[x, y])) for x, y in zip(xs, ys)]
    edges = []
    for (x, v) in sorted(C.offdiagonal):
        if x < v:
            weight = C.edge_weight(x, v)
            if weight >= tau:
                edges.append((x, v, weight))
    return edges


def cluster_graph(C: CohesionMatrix, tau: float) -> ClusterResult:
    """
    Keep edges with mutual cohesion min{C_{x,y}, C_{y,x}} >= τ and label components.

    A sparse matrix contributes only its promoted pairs.

    Args:
        C: Dense or sparse cohesion matrix
        tau: Threshold

    Returns:
        ClusterResult with labels numbered by smallest member id

    Raises:
        ValueError: If tau is negative
    """
    if tau < 0:
        raise ValueError(f"Threshold must be non-negative, got {tau}")
    edges = _kept_edges(C, tau)
    labels = components(C.n, ((x, y) for x, y, _ in edges))
    result = ClusterResult(tau, edges, labels)
    logger.info(f"Cluster graph: {len(edges)} edges, {result.n_components} components, "
                f"largest {result.component_sizes()[0]}")
    return result


def run_pald(rs: RankingSystem, cap: int = DEFAULT_PALD_CAP) -> Tuple[ClusterResult, CohesionMatrix, np.ndarray]:
    """
    Full exact pipeline.

    Returns:
        Tuple of (ClusterResult, dense CohesionMatrix, local depths)
    """
    C, store = cohesion_matrix_exact(rs, cap)
    tau = cluster_threshold(C)
    result = cluster_graph(C, tau)
    depth = local_depth(rs, store)
    sizes = store.size_matrix()
    pairs = rs.n * (rs.n - 1)
    mean_reciprocal = float((1.0 / sizes[~np.eye(rs.n, dtype=bool)]).sum() / pairs)
    result.diagnostics.update({
        "inner_steps": store.steps,
        "mean_reciprocal_focus": mean_reciprocal,
        "tau_over_mean_reciprocal": tau / mean_reciprocal,
        "mean_depth_over_n_tau": float(depth.mean() / (rs.n * tau)),
    })
    return result, C, depth
