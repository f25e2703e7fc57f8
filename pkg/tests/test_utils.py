import pytest

from utils import UnionFind, components, derive_seed, env_default, loglog_slope, optional_int


def test_union_find_counts_sets():
    uf = UnionFind(5)
    uf.union(0, 1)
    uf.union(1, 2)
    uf.union(0, 2)
    assert uf.n_sets == 3
    assert uf.find(2) == uf.find(0)
    assert uf.find(3) != uf.find(4)


def test_components_numbered_by_smallest_member():
    assert components(6, [(5, 4), (1, 3)]) == [0, 1, 2, 1, 3, 3]
    assert components(3, []) == [0, 1, 2]


def test_components_ignore_edge_order():
    edges = [(0, 4), (2, 3), (4, 1)]
    assert components(5, edges) == components(5, list(reversed(edges)))


def test_env_default(monkeypatch):
    assert env_default("threads", 1, int) == 1
    monkeypatch.setenv("PALD_THREADS", "4")
    assert env_default("threads", 1, int) == 4
    monkeypatch.setenv("PALD_THREADS", "")
    assert env_default("threads", 1, int) == 1
    monkeypatch.setenv("PALD_THREADS", "four")
    with pytest.raises(ValueError, match="PALD_THREADS"):
        env_default("threads", 1, int)


@pytest.mark.parametrize("raw,expected", [("none", None), ("", None), ("12", 12)])
def test_optional_int(raw, expected):
    assert optional_int(raw) == expected


def test_derive_seed():
    assert derive_seed(3, "trials") == derive_seed(3, "trials")
    assert derive_seed(3, "trials") != derive_seed(3, "generator")
    assert derive_seed(3, "trials") != derive_seed(4, "trials")
    assert 0 <= derive_seed(0, "axioms") < 2 ** 63


def test_loglog_slope():
    assert loglog_slope([10, 100, 1000], [5, 500, 50_000]) == pytest.approx(2.0)
