import math

import numpy as np
import pytest

from lab import promoted_cohesion_direct, relegated_means_direct, tau_r_histogram
from neighbors import build_friend_sets, degree_groups, knn_friend_sets, promoted_pairs, restricted_tables
from pald import cohesion_matrix_exact, run_pald
from pannld import (QUADRATURE_NODES, DegreeCapExceeded, PhiTable, _graded_nodes, assemble, default_degree_cap,
                    intersection_correction, pannld_cluster, pannld_threshold, partial_sums, phi, phi_asymptotic,
                    phi_exact, phi_quadrature, promoted_cohesion, relegated_offdiagonal, run_pannld)
from ranking import PointsOracle, gen_blobs, gen_euclidean, gen_star, oracle_system
from utils import components, loglog_slope


@pytest.mark.parametrize("mode", ["exact", "quadrature", "asymptotic"])
@pytest.mark.parametrize("n", [3, 10, 500])
def test_phi_at_full_range_is_reciprocal_n(mode, n):
    assert phi(n, n, mode) == 1.0 / n


def test_phi_hand_values():
    assert phi_exact(5, 4) == pytest.approx(13 / 60, abs=1e-12)
    assert phi_exact(4, 2) == pytest.approx(29 / 90, abs=1e-12)
    assert phi_quadrature(5, 4) == pytest.approx(13 / 60, abs=1e-12)
    assert phi_quadrature(4, 2) == pytest.approx(29 / 90, abs=1e-12)


@pytest.mark.parametrize("n", [10, 60, 200, 500])
def test_quadrature_matches_exact(n):
    for m in sorted({2, 3, n // 4, n // 2, n - 5, n - 1}):
        if 2 <= m <= n:
            assert phi_quadrature(n, m) == pytest.approx(phi_exact(n, m), abs=1e-10)


@pytest.mark.parametrize("levels", [1, 4, 13])
def test_quadrature_panels_halve_toward_one(levels):
    t, w = _graded_nodes(levels)
    assert len(t) == QUADRATURE_NODES * (levels + 1)
    assert w.sum() == pytest.approx(1.0, abs=1e-13)
    assert 0.0 < t.min() and t.max() < 1.0
    last_panel = t[-QUADRATURE_NODES:]
    assert last_panel.min() > 1.0 - 2.0 ** -levels
    assert w[-QUADRATURE_NODES:].sum() == pytest.approx(2.0 ** -levels, rel=1e-12)


def test_asymptotic_limit():
    target = math.atanh(1 / math.sqrt(2)) / math.sqrt(2)
    assert target == pytest.approx(0.623225, abs=1e-6)
    assert 1000 * phi_exact(2000, 1000) == pytest.approx(target, rel=0.01)
    assert 1000 * phi_asymptotic(2000, 1000) == pytest.approx(target, rel=1e-12)


@pytest.mark.parametrize("args", [(10, 1), (10, 11), (3, 0)])
def test_phi_range(args):
    with pytest.raises(ValueError):
        phi(*args)


def test_phi_unknown_mode():
    with pytest.raises(ValueError):
        phi(10, 5, "cubic")
    with pytest.raises(ValueError):
        PhiTable(10, "cubic")


def test_phi_decreasing_and_memoized():
    table = PhiTable(60)
    values = [table(m) for m in range(2, 61)]
    assert all(a > b for a, b in zip(values, values[1:]))
    table(10)
    assert len(table) == 59


def _instances():
    rng = np.random.default_rng(2024)
    for i in range(20):
        yield int(rng.integers(10, 61)), int(rng.integers(3, 9)), i


@pytest.mark.parametrize("n,k,seed", list(_instances()))
def test_promoted_traversal_matches_direct_evaluation(n, k, seed):
    rs = gen_euclidean(n, 2, seed)
    g = promoted_pairs(build_friend_sets(rs, k))
    foci, C = promoted_cohesion(restricted_tables(rs, g), g)
    direct_foci, direct_C = promoted_cohesion_direct(rs, g)
    assert foci.left == direct_foci.left
    assert foci.connectors == direct_foci.connectors
    np.testing.assert_allclose(C.sparse_diagonal, direct_C.sparse_diagonal, rtol=0, atol=1e-15)
    assert C.offdiagonal.keys() == direct_C.offdiagonal.keys()
    for key, value in C.offdiagonal.items():
        assert value == pytest.approx(direct_C.offdiagonal[key], abs=1e-15)
    assert foci.inner_steps <= 1.5 * g.sum_squared_degrees()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_relegated_sums_match_direct_summation(seed):
    rs = gen_euclidean(50, 2, seed)
    run = run_pannld(rs, K=4)
    G, H, g_off = relegated_means_direct(rs, run.graph, run.phi_table)
    np.testing.assert_allclose(run.averages.h, H, rtol=0, atol=1e-12)
    np.testing.assert_allclose(run.averages.g_diag, G, rtol=0, atol=1e-12)
    for key, value in run.averages.g_off.items():
        assert value == pytest.approx(g_off[key], abs=1e-12)
    assert run.tau_r == pytest.approx(tau_r_histogram(run.graph, run.phi_table), abs=1e-15)


def test_offdiagonal_bounded_by_diagonal(euclid20):
    run = run_pannld(euclid20, K=4)
    g = run.graph
    for (x, v), value in run.averages.g_off.items():
        subtracted = [y for y in g.promoted[v] if y != x and not g.is_promoted(x, y) and euclid20.precedes(v, y, x)]
        if subtracted:
            assert value < run.averages.g_diag[x]
        else:
            assert value == run.averages.g_diag[x]


def test_no_common_neighbors_means_no_correction():
    # two far-apart triples; every relegated pair crosses between them
    points = np.array([[0.0], [1.0], [2.0], [100.0], [101.0], [102.0]])
    rs = gen_euclidean(6, 1, 0, points=points)
    g = promoted_pairs(build_friend_sets(rs, 2))
    foci, _ = promoted_cohesion(rs, g)
    assert foci.connectors == {}
    table = PhiTable(6)
    g_alpha, h, _ = partial_sums(g, table)
    assert len(g_alpha) == 1
    G, steps = intersection_correction(g, foci, h, table)
    assert steps == 0
    np.testing.assert_array_equal(G, h)
    # cross pairs have m = n, so each point has three terms of 1/n
    np.testing.assert_allclose(G, np.full(6, 3 / 6), atol=1e-15)


def test_all_promoted_matches_exact(all_promoted):
    rs, g = all_promoted
    run = run_pannld(rs, K=rs.n - 2)
    exact, _ = cohesion_matrix_exact(rs)
    assert run.tau_r == 0.0
    np.testing.assert_array_equal(run.averages.g_diag, np.zeros(rs.n))
    for x, v, value in run.cohesion.entries():
        assert value == pytest.approx(exact.get(x, v), abs=1e-12)
    pald_result, _, _ = run_pald(rs)
    assert run.tau == pytest.approx(pald_result.threshold, abs=1e-12)


def test_budgets_and_threshold_identity(euclid20):
    run = run_pannld(euclid20, K=4)
    d = run.result.diagnostics
    assert d["oracle_calls"] <= d["oracle_call_budget"]
    assert d["inner_steps"] <= d["step_budget"]
    assert run.tau == pytest.approx(run.cohesion.diagonal().sum() / (2 * euclid20.n), abs=1e-12)
    assert run.tau == pytest.approx(run.tau_p + run.tau_r, abs=1e-15)


def test_degree_groups_reported(euclid20, all_promoted):
    run = run_pannld(euclid20, K=4)
    groups = degree_groups(run.graph)
    assert run.result.diagnostics["degree_values"] == len(groups.lambda1)
    assert run.result.diagnostics["degree_pairs"] == len(groups.lambda2)
    rs, _ = all_promoted
    regular = run_pannld(rs, K=rs.n - 2).result.diagnostics
    assert regular["degree_values"] == 1 and regular["degree_pairs"] == 1


def test_assembled_entries_non_negative(euclid20):
    run = run_pannld(euclid20, K=4)
    assert all(value >= 0 for _, _, value in run.cohesion.entries())


def test_assemble_adds_scaled_relegated_means(euclid20, euclid20_graph):
    foci, promoted = promoted_cohesion(euclid20, euclid20_graph)
    table = PhiTable(euclid20.n)
    _, h, _ = partial_sums(euclid20_graph, table)
    G, _ = intersection_correction(euclid20_graph, foci, h, table)
    g_off, _ = relegated_offdiagonal(euclid20, euclid20_graph, foci, G, table)
    C = assemble(promoted, G, g_off, euclid20.n)
    x = 0
    v = sorted(euclid20_graph.promoted[x])[0]
    assert C.get(x, x) == pytest.approx(promoted.get(x, x) + G[x] / 19, abs=1e-15)
    assert C.get(x, v) == pytest.approx(promoted.get(x, v) + g_off[(x, v)] / 19, abs=1e-15)
    tau, tau_p, tau_r = pannld_threshold(foci, euclid20_graph, G)
    assert tau == pytest.approx(C.diagonal().sum() / 40, abs=1e-12)


def test_cluster_extremes(euclid20):
    run = run_pannld(euclid20, K=4)
    zero = pannld_cluster(run.cohesion, 0.0)
    assert zero.labels == components(euclid20.n, run.graph.promoted_pairs())
    high = pannld_cluster(run.cohesion, run.cohesion.max_entry() + 1e-9)
    assert high.n_components == euclid20.n


def test_star_triggers_degree_cap():
    rs = gen_star(200)
    assert default_degree_cap(rs.n, 2) == 29
    with pytest.raises(DegreeCapExceeded) as info:
        run_pannld(rs, K=2)
    assert set(info.value.vertices) == {0, 1}
    assert info.value.cap == 29


def test_star_runs_with_raised_cap():
    run = run_pannld(gen_star(30), K=2, degree_cap=100)
    assert run.graph.promoted_count == 2 * 30 - 1


def test_external_friend_sets_without_tables():
    points = np.random.default_rng(9).random((300, 2))
    oracle = PointsOracle(points)
    rs = oracle_system(oracle, points=points)
    friends = knn_friend_sets(points, 6, oracle=oracle)
    run = run_pannld(rs, K=6, friends=friends)
    assert run.result.diagnostics["oracle_calls"] <= run.result.diagnostics["oracle_call_budget"]


@pytest.mark.parametrize("mode", ["quadrature", "asymptotic"])
def test_phi_modes_change_little(euclid20, mode):
    exact = run_pannld(euclid20, K=4)
    other = run_pannld(euclid20, K=4, phi_mode=mode)
    assert other.tau == pytest.approx(exact.tau, rel=0.1)


def test_threads_do_not_change_results(euclid20):
    serial = run_pannld(euclid20, K=4)
    threaded = run_pannld(gen_euclidean(20, 2, 7), K=4, threads=3)
    assert serial.result.labels == threaded.result.labels
    assert serial.tau == threaded.tau


@pytest.mark.slow
def test_two_blobs_split_into_two_clusters():
    rs, truth = gen_blobs(400, 2, 2, 1)
    run = run_pannld(rs, K=15)
    labels = np.asarray(run.result.labels)
    big = [label for label, _ in sorted(((lab, np.sum(labels == lab)) for lab in set(labels.tolist())),
                                        key=lambda item: -item[1])[:2]]
    assert all(np.sum(labels == lab) >= 100 for lab in big)
    agree = 0
    for lab in big:
        members = truth[labels == lab]
        agree += np.bincount(members).max()
    assert agree / rs.n >= 0.95


@pytest.mark.slow
def test_total_steps_grow_linearly():
    totals = []
    sizes = [1000, 10_000]
    for n in sizes:
        points = np.random.default_rng(n).random((n, 2))
        oracle = PointsOracle(points)
        friends = knn_friend_sets(points, 10, validate=False)
        run = run_pannld(oracle_system(oracle, points=points), K=10, friends=friends)
        totals.append(run.result.diagnostics["total_steps"])
    assert abs(loglog_slope(sizes, totals) - 1.0) <= 0.2
