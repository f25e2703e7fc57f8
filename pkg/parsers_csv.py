"""
Input parsers for the PaLD / PaNNLD clustering engine.
Reads point clouds, dissimilarity matrices, rank tables and per-point K overrides from CSV.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from data_models import RankingSystem
from ranking import ranking_from_dissimilarity, ranking_from_orders, ranking_from_points

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class InputDataError(ValueError):
    """Malformed input file; row is 1-based counting the header, column is a name or position."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[Union[str, int]] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(location)})" if location else message)
        self.row = row
        self.column = column


def _fail(message: str, row: Optional[int] = None, column: Optional[Union[str, int]] = None) -> None:
    error = InputDataError(message, row, column)
    logger.error(str(error))
    raise error


def _read(filepath: PathLike, header: Optional[int] = 0) -> pd.DataFrame:
    try:
        df = pd.read_csv(filepath, header=header, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        logger.error(f"Input file not found: {filepath}")
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        _fail(f"Could not parse {filepath}: {e}")
    if df.empty:
        _fail(f"{filepath} contains no data rows")
    return df


def _require_columns(df: pd.DataFrame, required: List[str], filepath: PathLike) -> None:
    missing = [col for col in required if col not in df.columns]
    if missing:
        logger.error(f"Available columns: {list(df.columns)}")
        _fail(f"Missing required columns in {filepath}: {missing}", row=1, column=missing[0])


def _number(value: str, row: int, column: Union[str, int]) -> float:
    try:
        number = float(value)
    except ValueError:
        _fail(f"Not a number: {value!r}", row, column)
    if not np.isfinite(number):
        _fail(f"Non-finite value: {value!r}", row, column)
    return number


def _integer(value: str, row: int, column: str) -> int:
    number = _number(value, row, column)
    if number != int(number):
        _fail(f"Not an integer: {value!r}", row, column)
    return int(number)


def _ids(df: pd.DataFrame, column: str) -> List[str]:
    ids = [str(v).strip() for v in df[column]]
    seen: Dict[str, int] = {}
    for i, point_id in enumerate(ids):
        if not point_id:
            _fail("Empty id", i + 2, column)
        if point_id in seen:
            _fail(f"Duplicate id {point_id!r} (first at row {seen[point_id]})", i + 2, column)
        seen[point_id] = i + 2
    return ids


def load_points(filepath: PathLike) -> Tuple[np.ndarray, List[str]]:
    """
    Load a point cloud with header id,c1,...,cd.

    Args:
        filepath: Path to the points CSV

    Returns:
        Tuple of (n×d coordinate array, ids)

    Raises:
        InputDataError: On missing columns, empty or duplicate ids, or non-numeric coordinates
    """
    df = _read(filepath)
    _require_columns(df, ["id"], filepath)
    coord_columns = [col for col in df.columns if col != "id"]
    if not coord_columns:
        _fail(f"{filepath} has no coordinate columns", row=1)
    ids = _ids(df, "id")
    coords = np.empty((len(df), len(coord_columns)), dtype=float)
    for i, (_, row) in enumerate(df.iterrows()):
        for j, col in enumerate(coord_columns):
            coords[i, j] = _number(row[col], i + 2, col)
    logger.info(f"Loaded {len(ids)} points in {len(coord_columns)} dimensions from {filepath}")
    return coords, ids


def load_distance_matrix(filepath: PathLike) -> np.ndarray:
    """
    Load an n×n dissimilarity matrix without header; row i is the view from point i.

    Raises:
        InputDataError: If the matrix is not square, has negative entries or a non-zero diagonal
    """
    df = _read(filepath, header=None)
    n_rows, n_cols = df.shape
    if n_rows != n_cols:
        _fail(f"Distance matrix must be square, got {n_rows}x{n_cols}", row=n_rows, column=n_cols)
    matrix = np.empty((n_rows, n_cols), dtype=float)
    for i in range(n_rows):
        for j in range(n_cols):
            value = _number(str(df.iat[i, j]).strip(), i + 1, j + 1)
            if value < 0:
                _fail(f"Negative dissimilarity {value}", i + 1, j + 1)
            matrix[i, j] = value
        if matrix[i, i] != 0:
            _fail(f"Diagonal entry must be zero, got {matrix[i, i]}", i + 1, i + 1)
    if not np.allclose(matrix, matrix.T):
        logger.info("Distance matrix is asymmetric; each row is used as its own point of view")
    logger.info(f"Loaded {n_rows}x{n_cols} distance matrix from {filepath}")
    return matrix


def load_rank_tables(filepath: PathLike) -> RankingSystem:
    """
    Load rank tables from rows base,member,rank.

    Point ids are numbered in order of first appearance in the base column;
    each base must rank every other point exactly once with ranks 1..n-1.

    Raises:
        InputDataError: On unknown members, self-ranking, repeated or missing ranks
    """
    df = _read(filepath)
    _require_columns(df, ["base", "member", "rank"], filepath)
    labels: List[str] = []
    index: Dict[str, int] = {}
    for value in df["base"]:
        base = str(value).strip()
        if not base:
            _fail("Empty base id", column="base")
        if base not in index:
            index[base] = len(labels)
            labels.append(base)
    n = len(labels)
    if n < 3:
        _fail(f"Rank tables need at least 3 points, got {n}", column="base")

    ranked: Dict[int, Dict[int, int]] = {x: {} for x in range(n)}
    for i, (_, row) in enumerate(df.iterrows()):
        line = i + 2
        base, member = str(row["base"]).strip(), str(row["member"]).strip()
        if member not in index:
            _fail(f"Member {member!r} never appears as a base", line, "member")
        if member == base:
            _fail(f"Point {base!r} ranks itself", line, "member")
        rank = _integer(row["rank"], line, "rank")
        x, y = index[base], index[member]
        if y in ranked[x]:
            _fail(f"Member {member!r} ranked twice by {base!r}", line, "member")
        ranked[x][y] = rank

    orders: Dict[int, List[int]] = {}
    for x in range(n):
        by_rank = sorted(ranked[x].items(), key=lambda item: item[1])
        if [r for _, r in by_rank] != list(range(1, n)):
            _fail(f"Base {labels[x]!r} must rank all {n - 1} other points with ranks 1..{n - 1}", column="rank")
        orders[x] = [y for y, _ in by_rank]
    logger.info(f"Loaded rank tables for {n} points from {filepath}")
    return ranking_from_orders(orders, n, provenance={"kind": "ranks", "path": str(filepath)}, labels=labels)


def load_k_overrides(filepath: PathLike, ids: List[str], default_k: int) -> Dict[int, int]:
    """
    Per-point friend counts from rows id,k; points not listed keep default_k.

    Raises:
        InputDataError: On unknown ids, duplicates or non-integer k
    """
    df = _read(filepath)
    _require_columns(df, ["id", "k"], filepath)
    index = {point_id: x for x, point_id in enumerate(ids)}
    k_values = {x: default_k for x in range(len(ids))}
    seen = set()
    for i, (_, row) in enumerate(df.iterrows()):
        point_id = str(row["id"]).strip()
        if point_id not in index:
            _fail(f"Unknown id {point_id!r}", i + 2, "id")
        if point_id in seen:
            _fail(f"Duplicate id {point_id!r}", i + 2, "id")
        seen.add(point_id)
        k_values[index[point_id]] = _integer(row["k"], i + 2, "k")
    logger.info(f"Loaded {len(seen)} K overrides from {filepath}")
    return k_values


def load_ranking(input_kind: str, filepath: PathLike) -> RankingSystem:
    """Dispatch to the loader for points, distances or ranks input."""
    if input_kind == "points":
        coords, ids = load_points(filepath)
        return ranking_from_points(coords, provenance={"kind": "points", "path": str(filepath)}, labels=ids)
    if input_kind == "distances":
        matrix = load_distance_matrix(filepath)
        return ranking_from_dissimilarity(matrix, provenance={"kind": "distances", "path": str(filepath)})
    if input_kind == "ranks":
        return load_rank_tables(filepath)
    raise ValueError(f"Unknown input kind: {input_kind}")
