"""
Monte Carlo laboratory for the stranger randomization.

Simulates the i.i.d. uniform labels η on relegated pairs, evaluates relegated
conflict foci and random cohesion by direct scans, provides brute-force
reference computations, and checks the averaging formulas statistically.
"""

import logging
import math
from typing import Any, Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import integrate
from scipy.stats import binom, chi2, chisquare, norm

from data_models import (CohesionMatrix, McReport, NeighborGraph, PromotedFoci, RankingSystem, pair_key)
from neighbors import build_friend_sets, promoted_pairs
from pald import cluster_threshold, cohesion_matrix_exact, conflict_foci_sizes, local_depth
from pannld import (PhiTable, intersection_correction, partial_sums, promoted_cohesion, range_of_influence,
                    relegated_offdiagonal)
from ranking import gen_euclidean, gen_random_tournament

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
CONCORDANT_KINDS = ("euclidean", "blobs", "star", "points")
CHECKS = ("binomial", "means", "concentration", "semantics", "limit")


def _splitmix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _to_unit(h: np.ndarray) -> np.ndarray:
    """Map 64-bit hashes to the open interval (0, 1)."""
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def trial_keys(seed: int, trials: np.ndarray) -> np.ndarray:
    base = _splitmix64(np.array([seed & MASK64], dtype=np.uint64))
    return _splitmix64(base ^ np.asarray(trials, dtype=np.uint64))


def pair_codes(pairs: np.ndarray) -> np.ndarray:
    """Canonical 64-bit code of each unordered pair (rows of an (P, 2) array)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    low = np.minimum(pairs[:, 0], pairs[:, 1]).astype(np.uint64)
    high = np.maximum(pairs[:, 0], pairs[:, 1]).astype(np.uint64)
    return (low << np.uint64(32)) | high


def eta_batch(seed: int, trials: int, pairs: np.ndarray) -> np.ndarray:
    """η values for `trials` consecutive trials over the given pairs, shape (trials, P)."""
    keys = trial_keys(seed, np.arange(trials))
    return _to_unit(_splitmix64(keys[:, None] ^ pair_codes(pairs)[None, :]))


class EtaSample:
    """
    One draw of the stranger randomization, generated lazily per pair.

    η_{x,y} is a hash of the trial key and the canonical pair, so it is
    symmetric, reproducible and needs no stored state. Overrides pin chosen
    pairs to fixed values.
    """

    def __init__(self, seed: int, trial: int = 0, overrides: Optional[Mapping[Tuple[int, int], float]] = None):
        self.seed = seed
        self.trial = trial
        self._key = trial_keys(seed, np.array([trial]))[0]
        self.overrides = {pair_key(*k): float(v) for k, v in (overrides or {}).items()}

    def value(self, x: int, y: int) -> float:
        if x == y:
            raise ValueError("η is defined on pairs of distinct points")
        key = pair_key(x, y)
        if key in self.overrides:
            return self.overrides[key]
        code = pair_codes(np.array([key]))
        return float(_to_unit(_splitmix64(self._key ^ code))[0])

    def matrix(self, n: int) -> np.ndarray:
        """Symmetric n×n array of η (diagonal is NaN)."""
        xs, ys = np.triu_indices(n, k=1)
        values = _to_unit(_splitmix64(self._key ^ pair_codes(np.stack([xs, ys], axis=1))))
        E = np.full((n, n), np.nan)
        E[xs, ys] = values
        E[ys, xs] = values
        for (x, y), v in self.overrides.items():
            E[x, y] = E[y, x] = v
        return E

    def __repr__(self) -> str:
        return f"EtaSample(seed={self.seed}, trial={self.trial}, overrides={len(self.overrides)})"


def randomized_compare(rs: RankingSystem, g: NeighborGraph, eta: EtaSample, x: int, y: int, z: int) -> int:
    """
    Compare y and z at x under the stranger randomization.

    Two promoted partners use ≺ₓ, a promoted partner beats a relegated one,
    and two relegated partners are ordered by η_{x,y} against η_{x,z}.

    Raises:
        ValueError: If y == z
    """
    if y == z:
        raise ValueError("randomized_compare needs y != z")
    if y == x:
        return -1
    if z == x:
        return 1
    y_promoted, z_promoted = g.is_promoted(x, y), g.is_promoted(x, z)
    if y_promoted and z_promoted:
        return -1 if rs.precedes(x, y, z) else 1
    if y_promoted != z_promoted:
        return -1 if y_promoted else 1
    return -1 if eta.value(x, y) < eta.value(x, z) else 1


def _common_strangers(g: NeighborGraph, x: int, y: int) -> List[int]:
    excluded = g.promoted[x] | g.promoted[y] | {x, y}
    return [z for z in range(g.n) if z not in excluded]


def _require_relegated(g: NeighborGraph, x: int, y: int) -> None:
    if x == y or g.is_promoted(x, y):
        raise ValueError(f"Pair ({x}, {y}) is not a relegated pair")


def relegated_focus_direct(rs: RankingSystem, g: NeighborGraph, eta: EtaSample, x: int, y: int) -> Set[int]:
    """
    Relegated conflict focus {x,y} ∪ 𝒫ₓ ∪ 𝒫_y ∪ {z ∈ ℛₓ∩ℛ_y : η_{x,y} > min{η_{x,z}, η_{y,z}}}.

    Raises:
        ValueError: If {x, y} is promoted
    """
    _require_relegated(g, x, y)
    focus = {x, y} | set(g.promoted[x]) | set(g.promoted[y])
    pivot = eta.value(x, y)
    for z in _common_strangers(g, x, y):
        if pivot > min(eta.value(x, z), eta.value(y, z)):
            focus.add(z)
    return focus


def left_relegated_focus_direct(rs: RankingSystem, g: NeighborGraph, eta: EtaSample, x: int, y: int) -> Set[int]:
    """U^ℛ_{x‖y} = {x} ∪ (𝒫ₓ∖𝒫_y) ∪ {z ∈ 𝒫ₓ∩𝒫_y : x ≺_z y} ∪ {z ∈ ℛₓ∩ℛ_y : η_{x,z} < min{η_{x,y}, η_{y,z}}}."""
    _require_relegated(g, x, y)
    p_x, p_y = g.promoted[x], g.promoted[y]
    left = {x} | set(p_x - p_y)
    left |= {z for z in p_x & p_y if rs.precedes(z, x, y)}
    pivot = eta.value(x, y)
    for z in _common_strangers(g, x, y):
        if eta.value(x, z) < min(pivot, eta.value(y, z)):
            left.add(z)
    return left


def random_cohesion_direct(rs: RankingSystem, g: NeighborGraph, eta: EtaSample,
                           promoted: Optional[CohesionMatrix] = None) -> Tuple[CohesionMatrix, CohesionMatrix]:
    """
    One sample of the random cohesion C^η = C^𝒫 + C^ℛ(η) on promoted pairs and the diagonal.

    C^ℛ_{x,v}(η) = (1/(n-1)) Σ_{y ∈ ℛₓ} 1{v ∈ U^ℛ_{x‖y}} / |U^ℛ_{x,y}|, scanned literally.

    Returns:
        Tuple of (C^η, C^ℛ(η)) as sparse matrices
    """
    n = g.n
    if promoted is None:
        promoted = promoted_cohesion_direct(rs, g)[1]
    diagonal = np.zeros(n)
    offdiagonal = {key: 0.0 for key in promoted.offdiagonal}
    for x in range(n):
        for y in g.relegated_partners(x):
            share = 1.0 / len(relegated_focus_direct(rs, g, eta, x, y))
            left = left_relegated_focus_direct(rs, g, eta, x, y)
            diagonal[x] += share
            for v in g.promoted[x]:
                if v in left:
                    offdiagonal[(x, v)] += share
    diagonal /= n - 1
    offdiagonal = {key: value / (n - 1) for key, value in offdiagonal.items()}
    random_part = CohesionMatrix(n, "sparse", diagonal=diagonal, offdiagonal=offdiagonal)
    total = CohesionMatrix(n, "sparse", diagonal=promoted.sparse_diagonal + diagonal,
                           offdiagonal={k: promoted.offdiagonal[k] + v for k, v in offdiagonal.items()})
    return total, random_part


def promoted_cohesion_direct(rs: RankingSystem, g: NeighborGraph) -> Tuple[PromotedFoci, CohesionMatrix]:
    """
    Promoted foci, connector sets and C^𝒫 by direct evaluation of their defining sets.

    U^𝒫_{x‖y} = {x} ∪ {z ∈ 𝒫ₓ∩𝒫_y : z ≺ₓ y, x ≺_z y} ∪ {z ∈ 𝒫ₓ∖𝒫_y : z ≺ₓ y};
    D^ℛ_{y‖z} = {x ∈ 𝒫_y∩𝒫_z : y ≺ₓ z}.
    """
    n = g.n
    left: Dict[Tuple[int, int], set] = {}
    for x in range(n):
        p_x = g.promoted[x]
        for y in p_x:
            p_y = g.promoted[y]
            members = {x}
            for z in p_x:
                if z == y or not rs.precedes(x, z, y):
                    continue
                if z not in p_y or rs.precedes(z, x, y):
                    members.add(z)
            left[(x, y)] = members
    connectors: Dict[Tuple[int, int], set] = {}
    for y in range(n):
        for z in range(n):
            if y == z or g.is_promoted(y, z):
                continue
            common = g.promoted[y] & g.promoted[z]
            if common:
                connectors[(y, z)] = {x for x in common if rs.precedes(x, y, z)}
    diagonal = np.zeros(n)
    offdiagonal = {(x, v): 0.0 for x in range(n) for v in g.promoted[x]}
    for x in range(n):
        for y in sorted(g.promoted[x]):
            share = 1.0 / (len(left[(x, y)]) + len(left[(y, x)]))
            for v in sorted(left[(x, y)]):
                if v == x:
                    diagonal[x] += share
                else:
                    offdiagonal[(x, v)] += share
    diagonal /= n - 1
    offdiagonal = {key: value / (n - 1) for key, value in offdiagonal.items()}
    return PromotedFoci(left, connectors), CohesionMatrix(n, "sparse", diagonal=diagonal, offdiagonal=offdiagonal)


def range_of_influence_direct(g: NeighborGraph, x: int, y: int) -> int:
    return len({x, y} | g.promoted[x] | g.promoted[y])


def relegated_means_direct(rs: RankingSystem, g: NeighborGraph,
                           phi_table: PhiTable) -> Tuple[np.ndarray, np.ndarray, Dict[Tuple[int, int], float]]:
    """
    Gₓ, Hₓ and G_{x,v} by direct O(n²) summation over relegated partners.

    Returns:
        Tuple of (G, H, G_{x,v})
    """
    n = g.n
    G = np.zeros(n)
    H = np.zeros(n)
    for x in range(n):
        for y in g.relegated_partners(x):
            G[x] += phi_table(range_of_influence_direct(g, x, y))
            unshared = int(g.degrees[x] + g.degrees[y]) + 2
            if unshared <= n:
                H[x] += phi_table(unshared)
    g_off: Dict[Tuple[int, int], float] = {}
    for x in range(n):
        for v in g.promoted[x]:
            value = G[x]
            for y in g.promoted[v]:
                if y != x and not g.is_promoted(x, y) and rs.precedes(v, y, x):
                    value -= phi_table(range_of_influence_direct(g, x, y))
            g_off[(x, v)] = value
    return G, H, g_off


def tau_r_histogram(g: NeighborGraph, phi_table: PhiTable) -> float:
    """τ_ℛ = (1/(n(n-1))) Σ_r φₙ(r)·#{relegated pairs with m = r}, by brute force."""
    n = g.n
    histogram: Dict[int, int] = {}
    for x in range(n):
        for y in g.relegated_partners(x):
            if x < y:
                m = range_of_influence_direct(g, x, y)
                histogram[m] = histogram.get(m, 0) + 1
    return sum(phi_table(m) * count for m, count in histogram.items()) / (n * (n - 1))


def relegated_expectations(rs: RankingSystem, g: NeighborGraph, phi_table: PhiTable):
    """Promoted foci, C^𝒫, Gₓ and G_{x,v} from the fast algorithms."""
    foci, promoted = promoted_cohesion(rs, g)
    _, h, _ = partial_sums(g, phi_table)
    G, _ = intersection_correction(g, foci, h, phi_table)
    g_off, _ = relegated_offdiagonal(rs, g, foci, G, phi_table)
    return foci, promoted, G, g_off


class RelegatedSimulator:
    """
    Vectorized random relegated cohesion over many η trials.

    Precomputes, per relegated pair, the common strangers and the range of
    influence; each trial's η matrix matches EtaSample(seed, trial).
    """

    def __init__(self, rs: RankingSystem, g: NeighborGraph):
        self.rs = rs
        self.g = g
        n = g.n
        self.pairs = [(x, y) for x in range(n) for y in range(x + 1, n) if not g.is_promoted(x, y)]
        self.strangers = np.zeros((len(self.pairs), n), dtype=bool)
        self.ranges = np.zeros(len(self.pairs), dtype=np.int64)
        self.index: Dict[Tuple[int, int], int] = {}
        for i, (x, y) in enumerate(self.pairs):
            self.strangers[i, _common_strangers(g, x, y)] = True
            self.ranges[i] = range_of_influence_direct(g, x, y)
            self.index[(x, y)] = self.index[(y, x)] = i

    def eta_matrices(self, seed: int, trials: int) -> np.ndarray:
        n = self.g.n
        xs, ys = np.triu_indices(n, k=1)
        values = eta_batch(seed, trials, np.stack([xs, ys], axis=1))
        E = np.full((trials, n, n), np.nan)
        E[:, xs, ys] = values
        E[:, ys, xs] = values
        return E

    def focus_sizes(self, E: np.ndarray) -> np.ndarray:
        """|U^ℛ_{x,y}(η)| per trial and relegated pair, shape (trials, pairs)."""
        sizes = np.zeros((E.shape[0], len(self.pairs)), dtype=np.int64)
        for i, (x, y) in enumerate(self.pairs):
            pivot = E[:, x, y][:, None]
            beaten = pivot > np.minimum(E[:, x, :], E[:, y, :])
            sizes[:, i] = self.ranges[i] + (beaten & self.strangers[i][None, :]).sum(axis=1)
        return sizes

    def cohesion(self, E: np.ndarray) -> Tuple[np.ndarray, Dict[Tuple[int, int], np.ndarray]]:
        """
        C^ℛ_{x,x}(η) and C^ℛ_{x,v}(η) per trial, the latter as the diagonal
        minus the relegated partners y ∈ 𝒫_v with y ≺_v x.
        """
        g, n = self.g, self.g.n
        inverse = 1.0 / self.focus_sizes(E)
        diagonal = np.zeros((E.shape[0], n))
        for i, (x, y) in enumerate(self.pairs):
            diagonal[:, x] += inverse[:, i]
            diagonal[:, y] += inverse[:, i]
        diagonal /= n - 1
        offdiagonal: Dict[Tuple[int, int], np.ndarray] = {}
        for x in range(n):
            for v in sorted(g.promoted[x]):
                value = diagonal[:, x].copy()
                for y in sorted(g.promoted[v]):
                    if y != x and not g.is_promoted(x, y) and self.rs.precedes(v, y, x):
                        value -= inverse[:, self.index[(x, y)]] / (n - 1)
                offdiagonal[(x, v)] = value
        return diagonal, offdiagonal


def family_z(tests: int, sigma: float = 3.0) -> float:
    """
    Per-test z threshold whose family-wise false-alarm rate over `tests`
    independent tests equals that of a single two-sided sigma-level test.
    """
    alpha = 2 * norm.sf(sigma)
    per_test = 1.0 - (1.0 - alpha) ** (1.0 / max(tests, 1))
    return float(norm.isf(per_test / 2))


def _worst_deviation(estimates: np.ndarray, targets: np.ndarray, errors: np.ndarray) -> Tuple[int, float]:
    """Index and z-score of the largest standardized deviation; zero-error entries must match exactly."""
    diffs = np.abs(estimates - targets)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(errors > 0, diffs / np.where(errors > 0, errors, 1.0), np.where(diffs > 1e-12, np.inf, 0.0))
    worst = int(np.argmax(z))
    return worst, float(z[worst])


def mc_inverse_moment(rs: RankingSystem, g: NeighborGraph, trials: int, seed: int,
                      phi_table: PhiTable) -> McReport:
    """Mean of 1/|U^ℛ_{x,y}(η)| against φₙ(m_{x,y}) for every relegated pair."""
    sim = RelegatedSimulator(rs, g)
    inverse = 1.0 / sim.focus_sizes(sim.eta_matrices(seed, trials))
    estimates = inverse.mean(axis=0)
    errors = inverse.std(axis=0, ddof=1) / math.sqrt(trials)
    targets = np.array([phi_table(int(m)) for m in sim.ranges])
    worst, z = _worst_deviation(estimates, targets, errors)
    return McReport.judge("inverse-moment", float(estimates[worst]), float(targets[worst]), float(errors[worst]),
                          trials, "max |z| over relegated pairs", z, family_z(len(targets)), upper_only=True,
                          details={"pairs": len(targets), "worst_pair": list(sim.pairs[worst])})


def mc_relegated_means(rs: RankingSystem, g: NeighborGraph, trials: int, seed: int,
                       phi_table: PhiTable) -> McReport:
    """Mean of C^ℛ_{x,v}(η) against G_{x,v}/(n-1) (and Gₓ/(n-1) on the diagonal)."""
    n = g.n
    _, _, G, g_off = relegated_expectations(rs, g, phi_table)
    sim = RelegatedSimulator(rs, g)
    diagonal, offdiagonal = sim.cohesion(sim.eta_matrices(seed, trials))
    keys = [(x, x) for x in range(n)] + sorted(offdiagonal)
    samples = np.column_stack([diagonal] + [offdiagonal[k] for k in keys[n:]])
    targets = np.array([G[x] / (n - 1) for x in range(n)] + [g_off[k] / (n - 1) for k in keys[n:]])
    estimates = samples.mean(axis=0)
    errors = samples.std(axis=0, ddof=1) / math.sqrt(trials)
    worst, z = _worst_deviation(estimates, targets, errors)
    return McReport.judge("relegated-means", float(estimates[worst]), float(targets[worst]), float(errors[worst]),
                          trials, "max |z| over diagonal and promoted entries", z, family_z(len(keys)),
                          upper_only=True, details={"entries": len(keys), "worst_entry": list(keys[worst])})


def check_sample_identities(rs: RankingSystem, g: NeighborGraph, seed: int, samples: int = 3) -> McReport:
    """
    Per-sample exactness: the literal scan of C^ℛ(η) equals the simulator's
    diagonal-minus-correction form on every entry, for a few η draws.
    """
    sim = RelegatedSimulator(rs, g)
    E = sim.eta_matrices(seed, samples)
    diagonal, offdiagonal = sim.cohesion(E)
    worst = 0.0
    for trial in range(samples):
        _, direct = random_cohesion_direct(rs, g, EtaSample(seed, trial))
        worst = max(worst, float(np.abs(direct.sparse_diagonal - diagonal[trial]).max()))
        for key, values in offdiagonal.items():
            worst = max(worst, abs(direct.offdiagonal[key] - values[trial]))
    return McReport.judge("sample-identities", worst, 0.0, 0.0, samples, "max |direct - perturbation form|",
                          worst, 1e-12, upper_only=True)


def mc_concentration(rs: RankingSystem, g: NeighborGraph, trials: int, theta: float, seed: int = 0,
                     phi_table: Optional[PhiTable] = None) -> List[McReport]:
    """
    Deviation frequencies of C^ℛ(η) from their means against the concentration bounds.

    Part (i): max over entries of P[|C^ℛ_{x,v}(η) - E| >= θ] against 2e^{-θ²K²}.
    Part (ii): P[|Σₓ C^ℛ_{x,x}(η)/(2n) - τ_ℛ| >= θ/n] against 2e^{-(2θK/3)²}.

    Raises:
        ValueError: If trials < 1000 or theta <= 0
    """
    if trials < 1000:
        raise ValueError(f"Concentration check needs at least 1000 trials, got {trials}")
    if theta <= 0:
        raise ValueError("theta must be positive")
    n, K = g.n, g.k_min
    phi_table = phi_table or PhiTable(n)
    _, _, G, g_off = relegated_expectations(rs, g, phi_table)
    sim = RelegatedSimulator(rs, g)
    diagonal, offdiagonal = sim.cohesion(sim.eta_matrices(seed, trials))

    frequencies = [float((np.abs(diagonal[:, x] - G[x] / (n - 1)) >= theta).mean()) for x in range(n)]
    frequencies += [float((np.abs(values - g_off[key] / (n - 1)) >= theta).mean())
                    for key, values in offdiagonal.items()]
    bound_i = 2 * math.exp(-(theta * K) ** 2)
    worst = max(frequencies)
    part_i = McReport.judge("concentration-entries", worst, bound_i, math.sqrt(bound_i * max(0.0, 1 - bound_i) / trials),
                            trials, "max deviation frequency", worst, bound_i, upper_only=True,
                            details={"K": K, "theta": theta})

    tau_r = float(G.sum()) / (2 * n * (n - 1))
    trace = diagonal.sum(axis=1) / (2 * n)
    frequency = float((np.abs(trace - tau_r) >= theta / n).mean())
    bound_ii = 2 * math.exp(-(2 * theta * K / 3) ** 2)
    part_ii = McReport.judge("concentration-trace", frequency, bound_ii,
                             math.sqrt(bound_ii * max(0.0, 1 - bound_ii) / trials), trials,
                             "trace deviation frequency", frequency, bound_ii, upper_only=True,
                             details={"K": K, "theta": theta, "tau_R": tau_r})
    return [part_i, part_ii]


def _pooled_bins(expected: np.ndarray, observed: np.ndarray, minimum: float = 5.0) -> Tuple[np.ndarray, np.ndarray]:
    """Merge adjacent bins until every expected count reaches `minimum`."""
    exp_bins, obs_bins = [], []
    exp_acc = obs_acc = 0.0
    for e, o in zip(expected, observed):
        exp_acc += e
        obs_acc += o
        if exp_acc >= minimum:
            exp_bins.append(exp_acc)
            obs_bins.append(obs_acc)
            exp_acc = obs_acc = 0.0
    if exp_acc > 0 or obs_acc > 0:
        if exp_bins:
            exp_bins[-1] += exp_acc
            obs_bins[-1] += obs_acc
        else:
            exp_bins.append(exp_acc)
            obs_bins.append(obs_acc)
    return np.array(exp_bins), np.array(obs_bins)


def mc_binomial(rs: RankingSystem, g: NeighborGraph, trials: int, seed: int, t: float = 0.5) -> McReport:
    """
    Conditional law of the random part of a relegated focus: with η_{x,y} pinned
    to 1 - t, |U^ℛ_{x,y}| - m_{x,y} should be Binomial(n - m_{x,y}, 1 - t²).

    Uses the relegated pair with the most common strangers; chi-square
    goodness-of-fit at the 1% level after pooling sparse bins.
    """
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    sim = RelegatedSimulator(rs, g)
    if not sim.pairs:
        raise ValueError("No relegated pairs to test")
    i = int(np.argmin(sim.ranges))
    x, y = sim.pairs[i]
    strangers = np.nonzero(sim.strangers[i])[0]
    N = len(strangers)
    if N == 0:
        raise ValueError("The chosen relegated pair has no common strangers")
    pairs = np.array([[x, z] for z in strangers] + [[y, z] for z in strangers])
    values = eta_batch(seed, trials, pairs)
    pivot = 1.0 - t
    counts = (pivot > np.minimum(values[:, :N], values[:, N:])).sum(axis=1)

    p = 1.0 - t ** 2
    k = np.arange(N + 1)
    expected = binom.pmf(k, N, p) * trials
    expected *= trials / expected.sum()
    observed = np.bincount(counts, minlength=N + 1).astype(float)
    exp_bins, obs_bins = _pooled_bins(expected, observed)
    statistic, p_value = chisquare(obs_bins, exp_bins)
    critical = float(chi2.ppf(0.99, len(exp_bins) - 1))
    return McReport.judge("binomial-focus", float(counts.mean()), N * p, float(counts.std(ddof=1) / math.sqrt(trials)),
                          trials, "chi-square", float(statistic), critical, upper_only=True,
                          details={"pair": [int(x), int(y)], "m": int(sim.ranges[i]), "N": N, "t": t,
                                   "p_value": float(p_value), "bins": len(exp_bins)})


def wide_focus_mask(R: np.ndarray, x: int) -> np.ndarray:
    """W[y, z] = 1{z ≺ₓ y or z ≺_y x}, the focus of {x, y} without the witness condition."""
    row = R[x]
    return (row[None, :] < row[:, None]) | (R < R[:, x][:, None])


def witness_mask(R: np.ndarray, x: int) -> np.ndarray:
    """P[y, v] = 1{x ≺_v y}."""
    return R.T > R[:, x][None, :]


def wide_cohesion(rs: RankingSystem) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cohesion and local depth by the sampling definition over the wide focus:
    C_{x,v} = (1/(n-1)) Σ_y 1{v ∈ W_{x,y}, x ≺_v y} / |W_{x,y}|.

    Agrees with the explicit form whenever the system is concordant.
    """
    n = rs.n
    R = rs.rank_matrix()
    C = np.zeros((n, n))
    for x in range(n):
        W = wide_focus_mask(R, x)
        sizes = W.sum(axis=1).astype(float)
        weights = np.zeros(n)
        others = np.arange(n) != x
        weights[others] = 1.0 / sizes[others]
        C[x] = weights @ (W & witness_mask(R, x)) / (n - 1)
    return C, C.sum(axis=1)


def mc_pald_semantics(rs: RankingSystem, trials: int, seed: int = 0,
                      concordant: Optional[bool] = None) -> List[McReport]:
    """
    Sample local depth and cohesion directly (Y uniform, then a witness Z
    uniform in the wide focus of {x, Y}) and compare with the closed forms.

    Sampling against the wide closed form is always judged. Sampling against
    the explicit form and the depth sum n/2 are judged only for concordant
    systems. The depth-to-threshold and threshold-to-reciprocal ratios are
    reported as measured.

    Raises:
        ValueError: If n > 40
    """
    n = rs.n
    if n > 40:
        raise ValueError(f"Semantics sampling is limited to n <= 40, got {n}")
    if concordant is None:
        concordant = rs.provenance.get("kind") in CONCORDANT_KINDS
    rng = np.random.default_rng(seed)
    R = rs.rank_matrix()

    estimates = np.zeros((n, n))
    depth_samples = np.zeros(n)
    for x in range(n):
        W = wide_focus_mask(R, x)
        sizes = W.sum(axis=1)
        members = np.argsort(~W, axis=1, kind="stable")
        others = np.array([y for y in range(n) if y != x])
        ys = others[rng.integers(0, n - 1, size=trials)]
        picks = (rng.random(trials) * sizes[ys]).astype(np.int64)
        zs = members[ys, picks]
        prefers = R[zs, x] < R[zs, ys]
        estimates[x] = np.bincount(zs[prefers], minlength=n) / trials
        depth_samples[x] = prefers.mean()

    wide, wide_depth = wide_cohesion(rs)
    explicit, _ = cohesion_matrix_exact(rs)
    depth = local_depth(rs)
    errors = np.sqrt(np.maximum(wide * (1 - wide), 0.0) / trials)
    tests = n * n
    reports = []

    worst, z = _worst_deviation(estimates.ravel(), wide.ravel(), errors.ravel())
    reports.append(McReport.judge("sampling-vs-wide-form", float(estimates.ravel()[worst]), float(wide.ravel()[worst]),
                                  float(errors.ravel()[worst]), trials, "max |z| over entries", z, family_z(tests),
                                  upper_only=True, details={"entry": [worst // n, worst % n]}))

    explicit_errors = np.sqrt(np.maximum(explicit.values * (1 - explicit.values), 0.0) / trials)
    worst, z = _worst_deviation(estimates.ravel(), explicit.values.ravel(), explicit_errors.ravel())
    reports.append(McReport.judge("sampling-vs-explicit-form", float(estimates.ravel()[worst]),
                                  float(explicit.values.ravel()[worst]), float(explicit_errors.ravel()[worst]), trials,
                                  "max |z| over entries", z, family_z(tests) if concordant else None, upper_only=True,
                                  details={"entry": [worst // n, worst % n], "concordant": concordant,
                                           "max_wide_minus_explicit": float(np.abs(wide - explicit.values).max())}))

    depth_sum = float(depth_samples.sum())
    depth_error = float(math.sqrt(float((wide_depth * (1 - wide_depth)).sum()) / trials))
    z = abs(depth_sum - n / 2) / depth_error if depth_error > 0 else 0.0
    reports.append(McReport.judge("depth-sum", depth_sum, n / 2, depth_error, trials, "|z|", z,
                                  3.0 if concordant else None, upper_only=True,
                                  details={"exact_depth_sum": float(depth.sum())}))

    tau = cluster_threshold(explicit)
    store = conflict_foci_sizes(rs)
    sizes = store.size_matrix()[~np.eye(n, dtype=bool)]
    mean_reciprocal = float((1.0 / sizes).mean())
    ratio = float(depth.mean() / (n * tau))
    reports.append(McReport.judge("depth-threshold-ratio", ratio, 1.0, 0.0, 0, "mean depth / (n tau)", ratio, None))
    threshold_ratio = tau / mean_reciprocal
    reports.append(McReport.judge("threshold-reciprocal-ratio", threshold_ratio, 1.0, 0.0, 0,
                                  "tau / mean 1/|U|", threshold_ratio, None))
    return reports


def limit_moments(c: float) -> Tuple[float, float]:
    """Limiting mean ∫₀¹ (c-t²)⁻¹ dt and variance ∫₀¹ (c-u²)⁻² du - mean²."""
    mean, _ = integrate.quad(lambda t: 1.0 / (c - t * t), 0.0, 1.0)
    second, _ = integrate.quad(lambda u: 1.0 / (c - u * u) ** 2, 0.0, 1.0)
    return mean, second - mean ** 2


def mc_limit(n: int, m: int, trials: int, seed: int) -> List[McReport]:
    """
    Sample (n-m)/(m+Y) with U uniform and Y | U=t ~ Binomial(n-m, 1-t²); its
    mean should be within 1% and its variance within 5% of the limits at c = n/(n-m).
    """
    if not 2 <= m < n:
        raise ValueError(f"Limit check needs 2 <= m < n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    c = n / (n - m)
    u = rng.random(trials)
    y = rng.binomial(n - m, 1.0 - u ** 2)
    samples = (n - m) / (m + y)
    target_mean, target_var = limit_moments(c)
    mean, var = float(samples.mean()), float(samples.var(ddof=1))
    closed_form = math.atanh(1.0 / math.sqrt(c)) / math.sqrt(c)
    return [
        McReport.judge("limit-mean", mean, target_mean, float(samples.std(ddof=1) / math.sqrt(trials)), trials,
                       "relative error", (mean - target_mean) / target_mean, 0.01,
                       details={"c": c, "closed_form": closed_form}),
        McReport.judge("limit-variance", var, target_var, 0.0, trials, "relative error",
                       (var - target_var) / target_var, 0.05, details={"c": c}),
    ]


def relegated_deviation(rs: RankingSystem, g: NeighborGraph, phi_table: PhiTable) -> McReport:
    """
    How far true relegated comparisons are from the randomized model: compares
    1/|U_{x,y}| from the full ranking with φₙ(m_{x,y}) over relegated pairs.
    Report only.
    """
    store = conflict_foci_sizes(rs)
    true_values, model_values = [], []
    for x in range(g.n):
        for y in g.relegated_partners(x):
            if x < y:
                true_values.append(1.0 / store.size(x, y))
                model_values.append(phi_table(range_of_influence_direct(g, x, y)))
    if not true_values:
        return McReport.judge("relegated-deviation", 0.0, 0.0, 0.0, 0, "mean relative deviation", 0.0, None)
    true_arr, model_arr = np.array(true_values), np.array(model_values)
    deviation = float(np.mean((true_arr - model_arr) / model_arr))
    return McReport.judge("relegated-deviation", float(true_arr.mean()), float(model_arr.mean()), 0.0,
                          len(true_values), "mean relative deviation", deviation, None,
                          details={"pairs": len(true_values),
                                   "mean_abs_relative_deviation": float(np.mean(np.abs(true_arr - model_arr) / model_arr))})


def line_instance():
    """Three points at 0, 1 and 3 on a line."""
    return gen_euclidean(3, 1, 0, points=np.array([[0.0], [1.0], [3.0]]))


def run_checks(checks: Sequence[str], trials: int = 10_000, theta: float = 0.5, seed: int = 0,
               phi_mode: str = "exact") -> List[McReport]:
    """
    Run the named verification suites on their standard instances.

    Args:
        checks: Subset of binomial, means, concentration, semantics, limit
        trials: Monte Carlo trials per suite
        theta: Deviation level for the concentration suite
        seed: Base seed
        phi_mode: φₙ evaluation mode

    Returns:
        All McReports produced
    """
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ValueError(f"Unknown checks: {unknown}; choose from {CHECKS}")
    reports: List[McReport] = []
    for check in checks:
        logger.info(f"Running {check} check with {trials} trials")
        if check == "binomial":
            rs = gen_euclidean(30, 2, seed)
            g = promoted_pairs(build_friend_sets(rs, 3))
            reports.append(mc_binomial(rs, g, trials, seed))
        elif check == "means":
            rs = gen_euclidean(20, 2, seed)
            g = promoted_pairs(build_friend_sets(rs, 4))
            table = PhiTable(rs.n, phi_mode)
            reports.append(mc_inverse_moment(rs, g, trials, seed, table))
            reports.append(mc_relegated_means(rs, g, trials, seed, table))
            reports.append(check_sample_identities(rs, g, seed))
        elif check == "concentration":
            rs = gen_euclidean(20, 2, seed)
            g = promoted_pairs(build_friend_sets(rs, 5))
            reports.extend(mc_concentration(rs, g, trials, theta, seed, PhiTable(rs.n, phi_mode)))
        elif check == "semantics":
            reports.extend(mc_pald_semantics(gen_euclidean(20, 2, seed), trials, seed))
            reports.extend(mc_pald_semantics(gen_random_tournament(12, seed), trials, seed))
            reports.extend(mc_pald_semantics(line_instance(), trials, seed)[-2:])
        elif check == "limit":
            reports.extend(mc_limit(2000, 1000, max(trials, 100_000), seed))
    for report in reports:
        level = logging.WARNING if not report.passed else logging.INFO
        logger.log(level, f"{report.name}: {report.verdict} (estimate={report.estimate:.6g}, target={report.target:.6g})")
    return reports
