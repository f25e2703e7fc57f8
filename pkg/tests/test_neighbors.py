import numpy as np
import pytest

from neighbors import (PairClass, build_friend_sets, degree_groups, knn_friend_sets, pair_class, promoted_pairs,
                       restricted_tables, validate_friend_sets)
from ranking import PointsOracle, gen_euclidean, gen_star


def test_star_friend_catalog():
    rs = gen_star(10)
    friends = build_friend_sets(rs, 2)
    assert friends[0] == (1, 2)
    assert friends[1] == (0, 2)
    assert all(friends[j] == (0, 1) for j in range(2, 11))


def test_line_friends():
    rs = gen_euclidean(4, 1, 0, points=np.array([[0.0], [1.0], [3.0], [7.0]]))
    assert set(build_friend_sets(rs, 2)[0]) == {1, 2}


def test_k_n_minus_2_leaves_one_stranger(euclid20):
    friends = build_friend_sets(euclid20, euclid20.n - 2)
    for x, gamma in friends.items():
        strangers = set(range(euclid20.n)) - set(gamma) - {x}
        assert len(strangers) == 1


@pytest.mark.parametrize("k", [1, 19, 0])
def test_friend_count_out_of_range(euclid20, k):
    with pytest.raises(ValueError, match="1 < K < n-1"):
        build_friend_sets(euclid20, k)


def test_per_point_k(euclid20):
    overrides = {x: 3 for x in range(euclid20.n)}
    overrides[5] = 7
    friends = build_friend_sets(euclid20, overrides)
    assert len(friends[5]) == 7
    assert len(friends[0]) == 3
    with pytest.raises(ValueError, match="missing"):
        build_friend_sets(euclid20, {0: 3})


def test_star_promoted_graph():
    n_leaves = 10
    g = promoted_pairs(build_friend_sets(gen_star(n_leaves), 2))
    assert g.promoted_count == 2 * n_leaves - 1
    assert g.degrees[0] == n_leaves
    assert g.degrees[1] == n_leaves
    assert all(g.degrees[j] == 2 for j in range(2, n_leaves + 1))


def test_star_pair_classes():
    n_leaves = 10
    g = promoted_pairs(build_friend_sets(gen_star(n_leaves), 2))
    assert pair_class(g, 2, 3) is PairClass.RELEGATED
    assert pair_class(g, 0, n_leaves) is PairClass.PROMOTED
    with pytest.raises(ValueError):
        pair_class(g, 3, 3)


def test_friends_are_promoted(euclid20, euclid20_graph):
    for x, gamma in euclid20_graph.friends.items():
        assert all(pair_class(euclid20_graph, x, y) is PairClass.PROMOTED for y in gamma)


def test_mutual_friends_meet_lower_bound():
    # two clusters of three, far apart: every friend relation is mutual at K=2
    points = np.array([[0.0], [1.0], [2.0], [100.0], [101.0], [102.0]])
    rs = gen_euclidean(6, 1, 0, points=points)
    g = promoted_pairs(build_friend_sets(rs, 2))
    assert g.promoted_count == 6 * 2 // 2


def test_promoted_count_bounds(euclid20_graph):
    g = euclid20_graph
    assert g.n * g.k_bar / 2 <= g.promoted_count <= g.n * g.k_bar


def test_degree_groups_regular():
    points = np.array([[0.0], [1.0], [2.0], [100.0], [101.0], [102.0]])
    g = promoted_pairs(build_friend_sets(gen_euclidean(6, 1, 0, points=points), 2))
    groups = degree_groups(g)
    assert groups.lambda1 == [3]
    assert groups.lambda2 == [(3, 3)]


def test_degree_groups_star():
    n_leaves = 10
    groups = degree_groups(promoted_pairs(build_friend_sets(gen_star(n_leaves), 2)))
    assert groups.lambda1 == [3, n_leaves + 1]
    assert groups.counts == {3: n_leaves - 1, n_leaves + 1: 2}
    assert groups.lambda2 == [(3, 3), (3, n_leaves + 1), (n_leaves + 1, n_leaves + 1)]


def test_degree_histogram_sums_to_n(euclid20_graph):
    assert sum(degree_groups(euclid20_graph).counts.values()) == euclid20_graph.n


def test_knn_supplier_matches_rank_tables(euclid20):
    friends = knn_friend_sets(euclid20.points, 5, oracle=PointsOracle(euclid20.points))
    assert friends == build_friend_sets(euclid20, 5)


def test_knn_supplier_needs_oracle_to_validate(euclid20):
    with pytest.raises(ValueError, match="requires an oracle"):
        knn_friend_sets(euclid20.points, 5)


def test_validate_friend_sets_rejects_wrong_friend(euclid20):
    friends = dict(build_friend_sets(euclid20, 3))
    farthest = euclid20.table(0).order[-1]
    friends[0] = (friends[0][0], friends[0][1], farthest)
    with pytest.raises(ValueError, match="does not precede"):
        validate_friend_sets(euclid20.oracle, friends)


def test_restricted_tables_rank_promoted_neighbors(euclid20, euclid20_graph):
    calls_before = euclid20.oracle.calls
    restricted = restricted_tables(euclid20, euclid20_graph)
    for x in range(euclid20.n):
        table = restricted.table(x)
        assert table.candidates == euclid20_graph.promoted[x]
        order = table.order
        assert all(euclid20.precedes(x, y, z) for y, z in zip(order, order[1:]))
    assert euclid20.oracle.calls > calls_before
