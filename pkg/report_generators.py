"""
Report generation for the PaLD / PaNNLD clustering engine.
Writes labels, cohesion, edge weights, rank tables and graphs as CSV, and run summaries as JSON and text.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from data_models import ClusterResult, CohesionMatrix, McReport, NeighborGraph, RankingSystem, RunSummary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def labels_frame(labels: Sequence[str], result: ClusterResult, depth: Optional[np.ndarray] = None) -> pd.DataFrame:
    """Cluster labels per point id, with a depth column for the exact pipeline."""
    data: Dict[str, Any] = {"id": list(labels), "component": list(result.labels)}
    if depth is not None:
        data["depth"] = [float(d) for d in depth]
    return pd.DataFrame(data)


def cohesion_frame(C: CohesionMatrix, labels: Sequence[str]) -> pd.DataFrame:
    """Every defined cohesion entry as rows x,v,value (the support only for a sparse matrix)."""
    rows = [(labels[x], labels[v], value) for x, v, value in C.entries()]
    return pd.DataFrame(rows, columns=["x", "v", "value"])


def edge_weights_frame(C: CohesionMatrix, result: ClusterResult, labels: Sequence[str]) -> pd.DataFrame:
    """
    Mutual cohesion w_{x,y} = min{C_{x,y}, C_{y,x}} on every unordered pair of the support.

    The kept column marks edges that survive the threshold.
    """
    kept = {(x, y) for x, y, _ in result.edges}
    if C.layout == "dense":
        weights = np.minimum(C.values, C.values.T)
        xs, ys = np.triu_indices(C.n, k=1)
        pairs = list(zip(xs.tolist(), ys.tolist()))
    else:
        pairs = sorted((x, v) for x, v in C.offdiagonal if x < v)
    rows = []
    for x, y in pairs:
        weight = float(weights[x, y]) if C.layout == "dense" else C.edge_weight(x, y)
        rows.append((labels[x], labels[y], weight, (x, y) in kept))
    return pd.DataFrame(rows, columns=["x", "y", "weight", "kept"])


def rank_tables_frame(rs: RankingSystem) -> pd.DataFrame:
    """Rows base,member,rank in base order, members in rank order."""
    rows = []
    for base in sorted(rs.tables):
        for rank, member in enumerate(rs.tables[base].order, start=1):
            rows.append((rs.labels[base], rs.labels[member], rank))
    return pd.DataFrame(rows, columns=["base", "member", "rank"])


def digraph_frame(friends: Mapping[int, Sequence[int]], labels: Sequence[str]) -> pd.DataFrame:
    """Arcs x -> y for y ∈ Γₓ."""
    rows = [(labels[x], labels[y]) for x in sorted(friends) for y in friends[x]]
    return pd.DataFrame(rows, columns=["source", "target"])


def promoted_frame(g: NeighborGraph, labels: Sequence[str]) -> pd.DataFrame:
    rows = [(labels[x], labels[y]) for x, y in g.promoted_pairs()]
    return pd.DataFrame(rows, columns=["x", "y"])


def write_csv(df: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(df)} rows to {path}")
    return path


def build_summary(pipeline: str, n: int, result: ClusterResult, K: Optional[int] = None,
                  tau_p: Optional[float] = None, tau_r: Optional[float] = None,
                  extra: Optional[Dict[str, Any]] = None) -> RunSummary:
    """Collect a RunSummary from a ClusterResult and its diagnostics."""
    diagnostics = dict(result.diagnostics)
    oracle_calls = int(diagnostics.pop("oracle_calls", 0))
    inner_steps = int(diagnostics.pop("inner_steps", 0))
    wall_time = float(diagnostics.pop("wall_time", 0.0))
    diagnostics.update(extra or {})
    return RunSummary(pipeline=pipeline, n=n, K=K, tau=result.threshold, tau_P=tau_p, tau_R=tau_r,
                      component_sizes=result.component_sizes(), oracle_calls=oracle_calls,
                      inner_steps=inner_steps, wall_time=wall_time, diagnostics=_jsonable(diagnostics))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def write_summary_json(summary: RunSummary, path: PathLike) -> Path:
    """
    Write the JSON summary and read it back through the schema.

    Raises:
        ValueError: If the written document does not validate as a RunSummary
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = summary.model_dump_json(indent=2)
    RunSummary.model_validate_json(text)
    path.write_text(text, encoding="utf-8")
    logger.info(f"Wrote summary to {path}")
    return path


def summary_text(summary: RunSummary, title: str = "") -> str:
    """
    Generate a plain-text run report.

    Args:
        summary: Run summary
        title: Dataset name to include in the header

    Returns:
        Formatted text report
    """
    lines = []
    lines.append(f"CLUSTERING REPORT - {title}" if title else "CLUSTERING REPORT")
    lines.append("=" * 60)
    lines.append("")
    lines.append("SUMMARY:")
    lines.append(f"Pipeline: {summary.pipeline}")
    lines.append(f"Points: {summary.n}")
    if summary.K is not None:
        lines.append(f"K: {summary.K}")
    lines.append(f"Threshold tau: {summary.tau:.6g}")
    if summary.tau_P is not None and summary.tau_R is not None:
        lines.append(f"  promoted part: {summary.tau_P:.6g}")
        lines.append(f"  relegated part: {summary.tau_R:.6g}")
    lines.append(f"Components: {len(summary.component_sizes)}")
    lines.append(f"Oracle calls: {summary.oracle_calls}")
    lines.append(f"Inner steps: {summary.inner_steps}")
    lines.append(f"Wall time: {summary.wall_time:.3f}s")
    lines.append("")

    lines.append("COMPONENTS:")
    lines.append("Rank".ljust(8) + "Size".ljust(10) + "Share")
    lines.append("-" * 30)
    for i, size in enumerate(summary.component_sizes[:20], 1):
        lines.append(f"{i}".ljust(8) + f"{size}".ljust(10) + f"{100 * size / summary.n:.1f}%")
    if len(summary.component_sizes) > 20:
        lines.append(f"... {len(summary.component_sizes) - 20} more components")
    lines.append("")

    if summary.diagnostics:
        lines.append("DIAGNOSTICS:")
        for key in sorted(summary.diagnostics):
            value = summary.diagnostics[key]
            if isinstance(value, float):
                value = f"{value:.6g}"
            lines.append(f"{key}: {value}")
    return "\n".join(lines)


def write_summary_text(summary: RunSummary, path: PathLike, title: str = "") -> Path:
    path = Path(path)
    path.write_text(summary_text(summary, title) + "\n", encoding="utf-8")
    return path


def write_mc_reports(reports: List[McReport], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = [json.loads(r.model_dump_json()) for r in reports]
    path.write_text(json.dumps(document, indent=2), encoding="utf-8")
    failed = [r.name for r in reports if not r.passed]
    logger.info(f"Wrote {len(reports)} check reports to {path} ({len(failed)} failed)")
    return path


def write_run_artifacts(output_dir: PathLike, rs: RankingSystem, result: ClusterResult, C: CohesionMatrix,
                        summary: RunSummary, depth: Optional[np.ndarray] = None,
                        graph: Optional[Tuple[Mapping[int, Sequence[int]], NeighborGraph]] = None) -> Dict[str, Path]:
    """
    Write every artifact of one pipeline run into output_dir.

    Returns:
        Mapping artifact name -> written path
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "labels": write_csv(labels_frame(rs.labels, result, depth), out / "labels.csv"),
        "cohesion": write_csv(cohesion_frame(C, rs.labels), out / "cohesion.csv"),
        "edge_weights": write_csv(edge_weights_frame(C, result, rs.labels), out / "edge_weights.csv"),
        "summary": write_summary_json(summary, out / "summary.json"),
        "summary_text": write_summary_text(summary, out / "summary.txt", rs.provenance.get("kind", "")),
    }
    if graph is not None:
        friends, g = graph
        paths["digraph"] = write_csv(digraph_frame(friends, rs.labels), out / "digraph.csv")
        paths["promoted"] = write_csv(promoted_frame(g, rs.labels), out / "promoted.csv")
    return paths
