import numpy as np
import pytest

from parsers_csv import (InputDataError, load_distance_matrix, load_k_overrides, load_points, load_rank_tables,
                         load_ranking)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_points(tmp_path):
    path = _write(tmp_path, "points.csv", "id,c1,c2\na,0,0\nb,1,0\nc,3,0\n")
    coords, ids = load_points(path)
    assert ids == ["a", "b", "c"]
    np.testing.assert_array_equal(coords[:, 0], [0.0, 1.0, 3.0])


@pytest.mark.parametrize("text,row,column", [
    ("id,c1\na,0\nb,x\nc,2\n", 3, "c1"),
    ("id,c1\na,0\na,1\nc,2\n", 3, "id"),
    ("id,c1\na,0\nb,inf\nc,2\n", 3, "c1"),
])
def test_load_points_reports_location(tmp_path, text, row, column):
    with pytest.raises(InputDataError) as info:
        load_points(_write(tmp_path, "points.csv", text))
    assert info.value.row == row
    assert info.value.column == column


def test_load_points_missing_column(tmp_path):
    with pytest.raises(InputDataError, match="Missing required columns"):
        load_points(_write(tmp_path, "points.csv", "name,c1\na,0\n"))


def test_load_points_empty(tmp_path):
    with pytest.raises(InputDataError):
        load_points(_write(tmp_path, "points.csv", "id,c1\n"))


def test_load_distance_matrix(tmp_path):
    matrix = load_distance_matrix(_write(tmp_path, "d.csv", "0,1,2\n5,0,1\n1,3,0\n"))
    assert matrix.shape == (3, 3)
    assert matrix[1, 0] == 5.0


@pytest.mark.parametrize("text,match", [
    ("0,1,2\n1,0,1\n", "square"),
    ("0,-1,2\n1,0,1\n2,1,0\n", "Negative"),
    ("1,1,2\n1,0,1\n2,1,0\n", "Diagonal"),
])
def test_load_distance_matrix_rejects(tmp_path, text, match):
    with pytest.raises(InputDataError, match=match):
        load_distance_matrix(_write(tmp_path, "d.csv", text))


RANKS = "base,member,rank\na,b,1\na,c,2\nb,c,1\nb,a,2\nc,a,1\nc,b,2\n"


def test_load_rank_tables(tmp_path):
    rs = load_rank_tables(_write(tmp_path, "ranks.csv", RANKS))
    assert rs.labels == ["a", "b", "c"]
    assert rs.table(1).order == (2, 0)
    assert rs.precedes(2, 0, 1)
    assert rs.provenance["kind"] == "ranks"


@pytest.mark.parametrize("text,match", [
    (RANKS.replace("a,c,2", "a,d,2"), "never appears"),
    (RANKS.replace("a,c,2", "a,a,2"), "ranks itself"),
    (RANKS.replace("a,c,2", "a,b,2"), "ranked twice"),
    (RANKS.replace("a,c,2", "a,c,3"), "ranks 1..2"),
    (RANKS.replace("a,c,2", "a,c,1.5"), "Not an integer"),
    ("base,member,rank\na,b,1\nb,a,1\n", "at least 3"),
])
def test_load_rank_tables_rejects(tmp_path, text, match):
    with pytest.raises(InputDataError, match=match):
        load_rank_tables(_write(tmp_path, "ranks.csv", text))


def test_load_k_overrides(tmp_path):
    path = _write(tmp_path, "k.csv", "id,k\nb,5\n")
    assert load_k_overrides(path, ["a", "b", "c"], 3) == {0: 3, 1: 5, 2: 3}
    with pytest.raises(InputDataError, match="Unknown id"):
        load_k_overrides(_write(tmp_path, "bad.csv", "id,k\nz,5\n"), ["a", "b"], 3)
    with pytest.raises(InputDataError, match="Duplicate"):
        load_k_overrides(_write(tmp_path, "dup.csv", "id,k\na,5\na,4\n"), ["a", "b"], 3)


def test_load_ranking_dispatch(tmp_path):
    points = load_ranking("points", _write(tmp_path, "p.csv", "id,c1\na,0\nb,1\nc,3\n"))
    assert points.labels == ["a", "b", "c"]
    assert points.precedes(0, 1, 2)
    distances = load_ranking("distances", _write(tmp_path, "d.csv", "0,1,2\n5,0,1\n1,3,0\n"))
    assert distances.precedes(1, 2, 0)
    with pytest.raises(ValueError):
        load_ranking("graph", tmp_path / "p.csv")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_points(tmp_path / "absent.csv")
