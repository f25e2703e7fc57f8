import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import pald
from data_models import CohesionMatrix, RankingSystem, RankTable
from pald import (cluster_graph, cluster_threshold, cohesion_matrix_exact, conflict_focus, conflict_foci_sizes,
                  local_depth, run_pald)
from ranking import gen_euclidean, gen_random_tournament, gen_star
from utils import loglog_slope

X, Y, Z = 0, 1, 2


def test_line_conflict_foci(line_rs):
    left, right = conflict_focus(line_rs, X, Y)
    assert left == {X} and right == {Y}
    left, right = conflict_focus(line_rs, X, Z)
    assert left == {X, Y} and right == {Z}
    assert len(left | right) == 3


def test_conflict_focus_needs_distinct_points(line_rs):
    with pytest.raises(ValueError):
        conflict_focus(line_rs, X, X)


def test_point_off_in_the_wilderness():
    rs = gen_euclidean(3, 1, 0, points=np.array([[0.0], [1.0], [100.0]]))
    left, right = conflict_focus(rs, 0, 1)
    assert 2 not in left | right


def test_line_cohesion(line_rs):
    C, _ = cohesion_matrix_exact(line_rs)
    expected = np.array([
        [5 / 12, 1 / 6, 0.0],
        [1 / 6, 5 / 12, 0.0],
        [0.0, 0.0, 1 / 3],
    ])
    np.testing.assert_allclose(C.values, expected, atol=1e-12)


def test_line_threshold_and_depth(line_rs):
    C, store = cohesion_matrix_exact(line_rs)
    assert cluster_threshold(C) == pytest.approx(7 / 36, abs=1e-12)
    np.testing.assert_allclose(local_depth(line_rs, store), [7 / 12, 7 / 12, 1 / 3], atol=1e-12)


def test_line_diagnostic_ratios(line_rs):
    result, _, _ = run_pald(line_rs)
    assert result.diagnostics["mean_depth_over_n_tau"] == pytest.approx(6 / 7, abs=1e-12)
    assert result.diagnostics["tau_over_mean_reciprocal"] == pytest.approx(0.5, abs=1e-12)


def test_two_points_rejected():
    rs = RankingSystem(2, {0: RankTable(0, [1]), 1: RankTable(1, [0])})
    with pytest.raises(ValueError, match="n >= 3"):
        cohesion_matrix_exact(rs)


def test_cap_rejected(euclid20):
    with pytest.raises(ValueError, match="cap"):
        cohesion_matrix_exact(euclid20, cap=10)


@pytest.mark.parametrize("make", [lambda: gen_euclidean(25, 2, 1), lambda: gen_random_tournament(15, 4)])
def test_diagonal_is_mean_reciprocal_focus(make):
    rs = make()
    C, store = cohesion_matrix_exact(rs)
    sizes = store.size_matrix().astype(float)
    for x in range(rs.n):
        others = [y for y in range(rs.n) if y != x]
        assert C.get(x, x) == pytest.approx(np.mean(1.0 / sizes[x, others]), abs=1e-12)


@pytest.mark.parametrize("make", [lambda: gen_euclidean(25, 2, 1), lambda: gen_random_tournament(15, 4)])
def test_depth_is_row_sum(make):
    rs = make()
    C, store = cohesion_matrix_exact(rs)
    np.testing.assert_allclose(C.values.sum(axis=1), local_depth(rs, store), atol=1e-12)


@pytest.mark.parametrize("n", [10, 25, 40])
def test_depth_sums_to_half_n_for_metric_systems(n):
    rs = gen_euclidean(n, 2, n)
    assert local_depth(rs).sum() == pytest.approx(n / 2, abs=1e-9)


@pytest.mark.parametrize("make", [lambda: gen_euclidean(30, 3, 2), lambda: gen_random_tournament(12, 1)])
def test_threshold_is_half_mean_reciprocal(make):
    rs = make()
    C, store = cohesion_matrix_exact(rs)
    sizes = store.size_matrix()
    upper = sizes[np.triu_indices(rs.n, k=1)]
    assert cluster_threshold(C) == pytest.approx(0.5 * np.mean(1.0 / upper), abs=1e-12)


def test_threshold_of_constant_diagonal():
    C = CohesionMatrix(4, "dense", values=np.eye(4) * 0.3)
    assert cluster_threshold(C) == pytest.approx(0.15)


def test_cluster_graph_extremes(euclid20):
    C, _ = cohesion_matrix_exact(euclid20)
    assert cluster_graph(C, 0.0).n_components == 1
    singletons = cluster_graph(C, C.max_entry() + 1e-9)
    assert singletons.n_components == euclid20.n
    assert singletons.edges == []
    with pytest.raises(ValueError):
        cluster_graph(C, -0.1)


def test_labels_numbered_by_smallest_member(euclid20):
    result, _, _ = run_pald(euclid20)
    first_seen = []
    for label in result.labels:
        if label not in first_seen:
            first_seen.append(label)
    assert first_seen == sorted(first_seen)


def test_star_graph_largest_cluster():
    rs = gen_star(200)
    result, _, _ = run_pald(rs)
    sizes = result.component_sizes()
    assert 0.57 <= sizes[0] / rs.n <= 0.67
    assert all(size == 1 for size in sizes[1:])
    assert result.labels.count(result.labels[0]) == sizes[0]


def test_exact_steps_grow_cubically():
    sizes = [50, 100, 200]
    steps = [conflict_foci_sizes(gen_euclidean(n, 2, 0)).steps for n in sizes]
    assert abs(loglog_slope(sizes, steps) - 3.0) <= 0.3


@pytest.mark.parametrize("metric", [True, False])
def test_exact_steps_count_evaluated_masks(monkeypatch, metric):
    evaluated = []
    original = pald._left_focus_mask

    def counting_mask(R, x):
        mask = original(R, x)
        evaluated.append(mask.size)
        return mask

    monkeypatch.setattr(pald, "_left_focus_mask", counting_mask)
    rs = gen_euclidean(17, 2, 5) if metric else gen_random_tournament(17, 5)
    store = conflict_foci_sizes(rs)
    assert len(evaluated) == 17
    assert store.steps == sum(evaluated)
    evaluated.clear()
    _, store = cohesion_matrix_exact(rs)
    assert len(evaluated) == 2 * 17
    assert store.steps == sum(evaluated)


@settings(derandomize=True, max_examples=30, deadline=None)
@given(st.integers(4, 14), st.integers(0, 10_000), st.booleans())
def test_vectorized_sizes_match_direct_scan(n, seed, metric):
    rs = gen_euclidean(n, 2, seed) if metric else gen_random_tournament(n, seed)
    store = conflict_foci_sizes(rs)
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            left, right = conflict_focus(rs, x, y)
            assert not left & right
            assert store.left_size(x, y) == len(left)
            assert store.size(x, y) == len(left | right)
