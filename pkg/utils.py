"""
Utility functions for the PaLD / PaNNLD clustering engine.
"""

import logging
import os
import zlib
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

ENV_PREFIX = "PALD_"


def setup_logging(log_level: str = "INFO") -> None:
    """
    Set up logging configuration for the application.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
    """
    log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format=log_format,
        handlers=[
            logging.StreamHandler(),
        ],
        force=True,
    )

    # Set specific logger levels
    logging.getLogger('sklearn').setLevel(logging.WARNING)


class UnionFind:
    """
    Disjoint sets over 0..n-1 with union by rank and path compression.
    """

    def __init__(self, n: int):
        self._leader = list(range(n))
        self._rank = [0] * n
        self.n_sets = n

    def find(self, s: int) -> int:
        path = [s]
        parent = self._leader[s]
        while parent != self._leader[parent]:
            path.append(parent)
            parent = self._leader[parent]
        for a in path:
            self._leader[a] = parent
        return parent

    def union(self, a: int, b: int) -> None:
        s1, s2 = self.find(a), self.find(b)
        if s1 == s2:
            return
        if self._rank[s2] > self._rank[s1]:
            s1, s2 = s2, s1
        if self._rank[s1] == self._rank[s2]:
            self._rank[s1] += 1
        self._leader[s2] = s1
        self.n_sets -= 1

    def __repr__(self) -> str:
        return f"UnionFind: contains {self.n_sets} sets."


def components(n: int, edges: Iterable[Tuple[int, int]]) -> List[int]:
    """
    Connected-component labels of an undirected graph on 0..n-1.

    Labels are numbered in order of each component's smallest member id,
    so the labelling does not depend on edge order.

    Args:
        n: Number of vertices
        edges: Undirected edges (x, y)

    Returns:
        List of component labels indexed by vertex
    """
    uf = UnionFind(n)
    for x, y in edges:
        uf.union(x, y)
    labels: List[int] = []
    by_root: Dict[int, int] = {}
    for x in range(n):
        root = uf.find(x)
        if root not in by_root:
            by_root[root] = len(by_root)
        labels.append(by_root[root])
    return labels


def env_default(name: str, default: Any, cast: Callable[[str], Any] = str) -> Any:
    """
    Read a PALD_-prefixed environment override for a flag default.

    Args:
        name: Flag name, e.g. "phi_mode" reads PALD_PHI_MODE
        default: Built-in default
        cast: Converter applied to the environment string

    Returns:
        The converted environment value, or the default when unset

    Raises:
        ValueError: If the environment value cannot be converted
    """
    key = ENV_PREFIX + name.upper()
    raw = os.environ.get(key)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except (TypeError, ValueError):
        raise ValueError(f"Invalid value for {key}: {raw!r}") from None


def optional_int(raw: str) -> Optional[int]:
    return None if raw.lower() in ("", "none") else int(raw)


def derive_seed(seed: int, key: str) -> int:
    """
    Sub-seed for one component, spawned from the run seed with a string key.

    The same (seed, key) always yields the same sub-seed, and distinct keys
    give independent streams.
    """
    sequence = np.random.SeedSequence([seed, zlib.crc32(key.encode("utf-8"))])
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def loglog_slope(sizes: Iterable[float], values: Iterable[float]) -> float:
    """Least-squares slope of log(values) against log(sizes)."""
    x = np.log(np.asarray(list(sizes), dtype=float))
    y = np.log(np.asarray(list(values), dtype=float))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)
