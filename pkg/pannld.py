"""
PaNNLD: the nearest-neighbor approximation to PaLD.

Promoted cohesion by graph traversal, the expected reciprocal focus size φₙ,
degree-grouped partial sums with intersection and off-diagonal corrections,
assembly of the sparse cohesion matrix, threshold and clustering.
"""

import logging
import math
import time
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import betaln, gammaln, logsumexp
from scipy.stats import binom

from data_models import (ClusterResult, CohesionMatrix, ConsistencyError, DegreeGroups, NeighborGraph,
                         PromotedFoci, RankingSystem, RelegatedAverages)
from neighbors import build_friend_sets, degree_groups, promoted_pairs, restricted_tables
from pald import cluster_graph

logger = logging.getLogger(__name__)

PHI_MODES = ("exact", "quadrature", "asymptotic")
QUADRATURE_NODES = 64


class DegreeCapExceeded(RuntimeError):
    """Some promoted degree is above the configured cap."""

    def __init__(self, message: str, vertices: List[int], cap: int):
        super().__init__(message)
        self.vertices = vertices
        self.cap = cap


def _check_range(n: int, m: int) -> None:
    if not 2 <= m <= n:
        raise ValueError(f"phi needs 2 <= m <= n, got m={m}, n={n}")


def phi_exact(n: int, m: int) -> float:
    """
    φₙ(m) = Σ_k C(N,k)/(m+k) · ½B(k+1, N-k+½) with N = n-m, summed in log space.
    """
    _check_range(n, m)
    N = n - m
    if N == 0:
        return 1.0 / n
    k = np.arange(N + 1, dtype=float)
    log_terms = (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1)
                 - np.log(m + k) + math.log(0.5) + betaln(k + 1, N - k + 0.5))
    return float(np.exp(logsumexp(log_terms)))


@lru_cache(maxsize=None)
def _graded_nodes(levels: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights on [0,1], refined geometrically toward t = 1."""
    base_nodes, base_weights = leggauss(QUADRATURE_NODES)
    edges = [0.0] + [1.0 - 2.0 ** -j for j in range(1, levels + 1)] + [1.0]
    nodes, weights = [], []
    for a, b in zip(edges, edges[1:]):
        half = (b - a) / 2
        nodes.append(a + half * (base_nodes + 1))
        weights.append(half * base_weights)
    return np.concatenate(nodes), np.concatenate(weights)


def phi_quadrature(n: int, m: int) -> float:
    """
    φₙ(m) = ∫₀¹ E[1/(m + Y)] dt with Y ~ Binomial(n-m, 1-t²), by a composite rule:
    one 64-node Gauss–Legendre panel on each of the intervals [0, 1/2], [1/2, 3/4], ...,
    halving toward t = 1 until the last panel is narrower than 1/(8(n-m+1)), where the
    integrand varies on a scale of order 1/(n-m).
    """
    _check_range(n, m)
    N = n - m
    if N == 0:
        return 1.0 / n
    levels = math.ceil(math.log2(8 * (N + 1))) + 1
    t, w = _graded_nodes(levels)
    k = np.arange(N + 1)
    pmf = binom.pmf(k[None, :], N, (1.0 - t ** 2)[:, None])
    inner = pmf @ (1.0 / (m + k))
    return float(w @ inner)


def phi_asymptotic(n: int, m: int) -> float:
    """φₙ(m) ≈ (√c/n)·coth⁻¹(√c) with c = n/(n-m); exact 1/n at m = n."""
    _check_range(n, m)
    if m == n:
        return 1.0 / n
    root = math.sqrt(n / (n - m))
    return root * math.atanh(1.0 / root) / n


_PHI_FUNCTIONS = {"exact": phi_exact, "quadrature": phi_quadrature, "asymptotic": phi_asymptotic}


def phi(n: int, m: int, mode: str = "exact") -> float:
    """
    Expected reciprocal size of a relegated conflict focus with range of influence m.

    Args:
        n: Number of points
        m: Range of influence, 2 <= m <= n
        mode: "exact", "quadrature" or "asymptotic"

    Returns:
        φₙ(m)

    Raises:
        ValueError: If m is out of range or the mode is unknown
    """
    if mode not in _PHI_FUNCTIONS:
        raise ValueError(f"Unknown phi mode: {mode}")
    return _PHI_FUNCTIONS[mode](n, m)


class PhiTable:
    """Memoized φₙ(m) for one n and evaluation mode; only requested m are computed."""

    def __init__(self, n: int, mode: str = "exact"):
        if mode not in _PHI_FUNCTIONS:
            raise ValueError(f"Unknown phi mode: {mode}")
        self.n = n
        self.mode = mode
        self.values: Dict[int, float] = {}

    def __call__(self, m: int) -> float:
        value = self.values.get(m)
        if value is None:
            value = phi(self.n, m, self.mode)
            self.values[m] = value
        return value

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"PhiTable(n={self.n}, mode={self.mode}, cached={len(self.values)})"


def default_degree_cap(n: int, k_max: int) -> int:
    return max(8 * k_max, math.ceil(2 * math.sqrt(n)))


def check_degree_cap(g: NeighborGraph, cap: int) -> None:
    """
    Raises:
        DegreeCapExceeded: Naming every vertex whose promoted degree exceeds cap
    """
    offenders = [int(x) for x in np.nonzero(g.degrees > cap)[0]]
    if offenders:
        shown = ", ".join(f"{x} (degree {int(g.degrees[x])})" for x in offenders[:10])
        message = (f"{len(offenders)} vertices exceed the degree cap {cap}: {shown}. "
                   f"Heavy in-degree hubs make the promoted traversal quadratic; "
                   f"raise --degree-cap to run anyway")
        logger.error(message)
        raise DegreeCapExceeded(message, offenders, cap)


def promoted_cohesion(rs: RankingSystem, g: NeighborGraph) -> Tuple[PromotedFoci, CohesionMatrix]:
    """
    Promoted conflict foci, connector sets and the promoted cohesion matrix.

    For each x and each unordered {y, z} ⊂ 𝒫ₓ: a relegated {y, z} puts x in
    the connector set of whichever of y, z comes first at x, and that point in
    x's left focus against the other ("promoted beats relegated"); a promoted
    {y, z} closes a triangle and x is placed in U^𝒫_{y‖z} or U^𝒫_{z‖y}.

    Args:
        rs: Ranking system whose tables rank every 𝒫ₓ
        g: Promoted graph

    Returns:
        Tuple of (PromotedFoci, sparse CohesionMatrix C^𝒫)

    Raises:
        ConsistencyError: If a table misses a member of 𝒫ₓ or the step budget is exceeded
    """
    n = g.n
    left: Dict[Tuple[int, int], set] = {}
    for x in range(n):
        for y in g.promoted[x]:
            left[(x, y)] = {x}
    connectors: Dict[Tuple[int, int], set] = {}
    steps = 0

    for x in range(n):
        neighbors = sorted(g.promoted[x])
        for i, y in enumerate(neighbors):
            for z in neighbors[i + 1:]:
                y_first = rs.precedes(x, y, z)
                if z not in g.promoted[y]:
                    steps += 1
                    first, second = (y, z) if y_first else (z, y)
                    connectors.setdefault((first, second), set()).add(x)
                    connectors.setdefault((second, first), set())
                    left[(x, second)].add(first)
                else:
                    steps += 3
                    if y_first and rs.precedes(y, x, z):
                        left[(y, z)].add(x)
                    if not y_first and rs.precedes(z, x, y):
                        left[(z, y)].add(x)

    budget = 1.5 * g.sum_squared_degrees()
    if steps > budget:
        raise ConsistencyError(f"Promoted traversal took {steps} steps, budget {budget}")

    diagonal = np.zeros(n, dtype=float)
    offdiagonal: Dict[Tuple[int, int], float] = {(x, v): 0.0 for x in range(n) for v in sorted(g.promoted[x])}
    for x in range(n):
        for y in sorted(g.promoted[x]):
            share = 1.0 / (len(left[(x, y)]) + len(left[(y, x)]))
            for v in sorted(left[(x, y)]):
                if v == x:
                    diagonal[x] += share
                else:
                    offdiagonal[(x, v)] += share
    diagonal /= n - 1
    for key in offdiagonal:
        offdiagonal[key] /= n - 1

    foci = PromotedFoci(left, connectors, inner_steps=steps)
    logger.info(f"Promoted cohesion: {foci}")
    return foci, CohesionMatrix(n, "sparse", diagonal=diagonal, offdiagonal=offdiagonal)


def range_of_influence(g: NeighborGraph, foci: PromotedFoci, x: int, y: int) -> int:
    """m_{x,y} = 2 + dₓ + d_y - |𝒫ₓ ∩ 𝒫_y| for a relegated pair."""
    return 2 + int(g.degrees[x]) + int(g.degrees[y]) - foci.common_count(x, y)


def partial_sums(g: NeighborGraph, phi_table: PhiTable,
                 groups: Optional[DegreeGroups] = None) -> Tuple[Dict[int, float], np.ndarray, int]:
    """
    Degree-grouped sums g(α) and Hₓ = Σ_{y ∈ ℛₓ} φₙ(dₓ + d_y + 2).

    Terms with α + β > n are skipped.

    Returns:
        Tuple of (g(α) per α ∈ Λ₁, Hₓ per point, step count)
    """
    n = g.n
    groups = groups or degree_groups(g)
    steps = 0
    g_alpha: Dict[int, float] = {}
    for alpha in groups.lambda1:
        total = 0.0
        for beta in groups.lambda1:
            steps += 1
            if alpha + beta <= n:
                total += phi_table(alpha + beta) * groups.counts[beta]
        g_alpha[alpha] = total

    h = np.zeros(n, dtype=float)
    for x in range(n):
        d_x = int(g.degrees[x])
        if d_x == n - 1:
            continue
        value = g_alpha[d_x + 1]
        for y in sorted(g.promoted[x] | {x}):
            steps += 1
            d_y = int(g.degrees[y])
            if d_x + d_y <= n - 2:
                value -= phi_table(d_x + d_y + 2)
        h[x] = value
    return g_alpha, h, steps


def intersection_correction(g: NeighborGraph, foci: PromotedFoci, h: np.ndarray,
                            phi_table: PhiTable) -> Tuple[np.ndarray, int]:
    """
    Gₓ = Σ_{y ∈ ℛₓ} φₙ(m_{x,y}) from Hₓ, correcting relegated pairs with common promoted neighbors.

    Returns:
        Tuple of (Gₓ per point, step count)

    Raises:
        ConsistencyError: If some m_{x,y} falls below 2 + max(Kₓ, K_y)
    """
    n = g.n
    G = h.copy()
    steps = 0
    for x, y in foci.connected_relegated_pairs():
        steps += 1
        m = range_of_influence(g, foci, x, y)
        floor = 2 + max(int(g.k_values[x]), int(g.k_values[y]))
        if not floor <= m <= n:
            raise ConsistencyError(f"Range of influence m={m} of relegated pair ({x}, {y}) outside [{floor}, {n}]")
        unshared = int(g.degrees[x]) + int(g.degrees[y]) + 2
        delta = phi_table(m) - (phi_table(unshared) if unshared <= n else 0.0)
        G[x] += delta
        G[y] += delta
    if steps > g.sum_squared_degrees():
        raise ConsistencyError(f"Intersection pass took {steps} steps, budget {g.sum_squared_degrees()}")
    return G, steps


def relegated_offdiagonal(rs: RankingSystem, g: NeighborGraph, foci: PromotedFoci, G: np.ndarray,
                          phi_table: PhiTable) -> Tuple[Dict[Tuple[int, int], float], int]:
    """
    G_{x,v} = Gₓ - Σ φₙ(m_{x,y}) over y ∈ 𝒫_v ∩ ℛₓ with y ≺_v x, for every ordered promoted pair.

    Each promoted pair is handled once by scanning 𝒫_v △ 𝒫ₓ.

    Returns:
        Tuple of (G_{x,v} keyed by ordered pair, step count)
    """
    g_off: Dict[Tuple[int, int], float] = {}
    steps = 0
    for x, v in g.promoted_pairs():
        g_xv, g_vx = float(G[x]), float(G[v])
        p_x, p_v = g.promoted[x], g.promoted[v]
        for y in sorted(p_x ^ p_v):
            if y == x or y == v:
                continue
            steps += 1
            if y in p_v:
                # y ∈ 𝒫_v ∩ ℛₓ
                if rs.precedes(v, y, x):
                    g_xv -= phi_table(range_of_influence(g, foci, x, y))
            elif rs.precedes(x, y, v):
                g_vx -= phi_table(range_of_influence(g, foci, v, y))
        g_off[(x, v)] = g_xv
        g_off[(v, x)] = g_vx
    if steps > g.sum_squared_degrees():
        raise ConsistencyError(f"Off-diagonal pass took {steps} steps, budget {g.sum_squared_degrees()}")
    return g_off, steps


def assemble(promoted: CohesionMatrix, G: np.ndarray, g_off: Mapping[Tuple[int, int], float],
             n: int) -> CohesionMatrix:
    """
    C^F_{x,x} = C^𝒫_{x,x} + Gₓ/(n-1) and C^F_{x,v} = C^𝒫_{x,v} + G_{x,v}/(n-1) on promoted pairs.
    """
    diagonal = promoted.sparse_diagonal + G / (n - 1)
    offdiagonal = {key: value + g_off[key] / (n - 1) for key, value in promoted.offdiagonal.items()}
    return CohesionMatrix(n, "sparse", diagonal=diagonal, offdiagonal=offdiagonal)


def pannld_threshold(foci: PromotedFoci, g: NeighborGraph, G: np.ndarray) -> Tuple[float, float, float]:
    """
    τ = τ_𝒫 + τ_ℛ with τ_𝒫 = Σ_{𝒫} 1/|U^𝒫_{x,y}| / (n(n-1)) and τ_ℛ = Σₓ Gₓ / (2n(n-1)).

    Returns:
        Tuple of (τ, τ_𝒫, τ_ℛ)
    """
    n = g.n
    tau_p = sum(1.0 / foci.focus_size(x, y) for x, y in g.promoted_pairs()) / (n * (n - 1))
    tau_r = float(G.sum()) / (2 * n * (n - 1))
    return tau_p + tau_r, tau_p, tau_r


def pannld_cluster(C: CohesionMatrix, tau: float) -> ClusterResult:
    """Keep promoted pairs with min{C^F_{x,v}, C^F_{v,x}} >= τ and label components."""
    return cluster_graph(C, tau)


class PannldRun:
    """Everything one PaNNLD run produces, for reports and comparisons."""

    def __init__(self, result: ClusterResult, cohesion: CohesionMatrix, promoted: CohesionMatrix,
                 graph: NeighborGraph, foci: PromotedFoci, averages: RelegatedAverages,
                 tau: float, tau_p: float, tau_r: float, phi_table: PhiTable):
        self.result = result
        self.cohesion = cohesion
        self.promoted = promoted
        self.graph = graph
        self.foci = foci
        self.averages = averages
        self.tau = tau
        self.tau_p = tau_p
        self.tau_r = tau_r
        self.phi_table = phi_table

    def __str__(self) -> str:
        return f"PannldRun(n={self.graph.n}, tau={self.tau:.6g}, components={self.result.n_components})"

    def __repr__(self) -> str:
        return self.__str__()


def run_pannld(rs: RankingSystem, K: Union[int, Mapping[int, int]] = 10, phi_mode: str = "exact",
               degree_cap: Optional[int] = None, threads: int = 1,
               friends: Optional[Mapping[int, Tuple[int, ...]]] = None) -> PannldRun:
    """
    Full PaNNLD pipeline from a ranking system to clusters.

    Args:
        rs: Ranking system; full tables unless friends are supplied
        K: Uniform or per-point friend count
        phi_mode: φₙ evaluation mode
        degree_cap: Largest promoted degree allowed; defaults to max(8·K_max, ⌈2√n⌉)
        threads: Workers for the restricted rank-table sorts
        friends: Externally supplied friend sets

    Returns:
        PannldRun with the clustering and all intermediates

    Raises:
        DegreeCapExceeded: If a promoted degree exceeds the cap
        ConsistencyError: If a step, comparison or threshold identity check fails
    """
    started = time.perf_counter()
    n = rs.n
    if n < 3:
        raise ValueError(f"PaNNLD needs n >= 3, got {n}")
    if friends is None:
        friends = build_friend_sets(rs, K)
    g = promoted_pairs(friends, n)
    cap = degree_cap if degree_cap is not None else default_degree_cap(n, int(g.k_values.max()))
    check_degree_cap(g, cap)

    calls_before = rs.oracle.calls if rs.oracle is not None else 0
    restricted = restricted_tables(rs, g, threads=threads)
    oracle_calls = restricted.oracle.calls - calls_before
    call_budget = sum(d * math.log2(d) + 3 * d * (d - 1) / 2 for d in g.degrees.tolist() if d > 0)
    if oracle_calls > call_budget:
        raise ConsistencyError(f"{oracle_calls} oracle calls exceed the budget {call_budget:.0f}")

    foci, promoted = promoted_cohesion(restricted, g)
    foci.oracle_calls = oracle_calls

    phi_table = PhiTable(n, phi_mode)
    groups = degree_groups(g)
    g_alpha, h, partial_steps = partial_sums(g, phi_table, groups)
    G, intersection_steps = intersection_correction(g, foci, h, phi_table)
    g_off, offdiagonal_steps = relegated_offdiagonal(restricted, g, foci, G, phi_table)
    steps = {"promoted": foci.inner_steps, "partial_sums": partial_steps,
             "intersection": intersection_steps, "offdiagonal": offdiagonal_steps}
    averages = RelegatedAverages(G, g_off, h, g_alpha, steps)

    cohesion = assemble(promoted, G, g_off, n)
    tau, tau_p, tau_r = pannld_threshold(foci, g, G)
    trace_tau = float(cohesion.diagonal().sum()) / (2 * n)
    if abs(tau - trace_tau) > 1e-12:
        raise ConsistencyError(f"Threshold decomposition {tau!r} differs from diagonal form {trace_tau!r}")

    result = pannld_cluster(cohesion, tau)
    result.diagnostics.update({
        "oracle_calls": oracle_calls,
        "oracle_call_budget": call_budget,
        "inner_steps": foci.inner_steps,
        "step_budget": 1.5 * g.sum_squared_degrees(),
        "total_steps": sum(steps.values()),
        "steps": steps,
        "promoted_pairs": g.promoted_count,
        "K_min": g.k_min,
        "K_bar": g.k_bar,
        "degree_cap": cap,
        "degree_values": len(groups.lambda1),
        "degree_pairs": len(groups.lambda2),
        "phi_evaluations": len(phi_table),
        "wall_time": time.perf_counter() - started,
    })
    logger.info(f"PaNNLD done: tau={tau:.6g} (tau_P={tau_p:.6g}, tau_R={tau_r:.6g}), "
                f"{result.n_components} components, {oracle_calls} oracle calls")
    return PannldRun(result, cohesion, promoted, g, foci, averages, tau, tau_p, tau_r, phi_table)
