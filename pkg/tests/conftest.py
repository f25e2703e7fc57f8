import numpy as np
import pytest

from data_models import NeighborGraph
from neighbors import build_friend_sets, promoted_pairs
from ranking import gen_euclidean, gen_star, ranking_from_orders


@pytest.fixture
def line_rs():
    """Points 0, 1 and 3 on a line; ids 0, 1, 2 play x, y, z."""
    return gen_euclidean(3, 1, 0, points=np.array([[0.0], [1.0], [3.0]]))


@pytest.fixture
def star_rs():
    """Star graph with 10 leaves and weights 1..10."""
    return gen_star(10)


@pytest.fixture
def euclid20():
    return gen_euclidean(20, 2, 7)


@pytest.fixture
def euclid20_graph(euclid20) -> NeighborGraph:
    return promoted_pairs(build_friend_sets(euclid20, 4))


@pytest.fixture
def make_instance():
    """Seeded Euclidean ranking system with its promoted graph."""
    def make(n: int, k: int, seed: int, dim: int = 2):
        rs = gen_euclidean(n, dim, seed)
        return rs, promoted_pairs(build_friend_sets(rs, k))
    return make


def cyclic_last_orders(n: int, seed: int):
    """Random order at every x with (x + 1) mod n ranked last, so no pair is mutually last."""
    rng = np.random.default_rng(seed)
    orders = {}
    for x in range(n):
        last = (x + 1) % n
        others = [int(y) for y in rng.permutation([y for y in range(n) if y not in (x, last)])]
        orders[x] = others + [last]
    return ranking_from_orders(orders, n, provenance={"kind": "cyclic-last", "n": n, "seed": seed})


@pytest.fixture
def all_promoted():
    """
    Ranking system where every pair is promoted: with K = n - 2 each point
    befriends all but its last-ranked point, and no two points rank each other last.
    """
    rs = cyclic_last_orders(8, 3)
    g = promoted_pairs(build_friend_sets(rs, rs.n - 2))
    assert all(not g.relegated_partners(x) for x in range(rs.n))
    return rs, g
