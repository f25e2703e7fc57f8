import json

import numpy as np
import pandas as pd
import pytest

from data_models import McReport, RunSummary
from pald import run_pald
from pannld import run_pannld
from report_generators import (build_summary, cohesion_frame, edge_weights_frame, labels_frame, rank_tables_frame,
                               summary_text, write_mc_reports, write_run_artifacts, write_summary_json)


def test_labels_frame_with_depth(line_rs):
    result, _, depth = run_pald(line_rs)
    df = labels_frame(line_rs.labels, result, depth)
    assert list(df.columns) == ["id", "component", "depth"]
    assert df["depth"].tolist() == pytest.approx([7 / 12, 7 / 12, 1 / 3])


def test_dense_cohesion_and_edge_weights(line_rs):
    result, C, _ = run_pald(line_rs)
    cohesion = cohesion_frame(C, line_rs.labels)
    assert len(cohesion) == 9
    weights = edge_weights_frame(C, result, line_rs.labels)
    assert len(weights) == 3
    first = weights.iloc[0]
    assert (first["x"], first["y"]) == ("0", "1")
    assert first["weight"] == pytest.approx(1 / 6)
    assert bool(first["kept"]) == (1 / 6 >= 7 / 36)


def test_sparse_frames_cover_support(euclid20):
    run = run_pannld(euclid20, K=4)
    cohesion = cohesion_frame(run.cohesion, euclid20.labels)
    assert len(cohesion) == euclid20.n + 2 * run.graph.promoted_count
    weights = edge_weights_frame(run.cohesion, run.result, euclid20.labels)
    assert len(weights) == run.graph.promoted_count
    assert weights["kept"].sum() == len(run.result.edges)


def test_rank_tables_frame(line_rs):
    df = rank_tables_frame(line_rs)
    assert df.values.tolist() == [["0", "1", 1], ["0", "2", 2], ["1", "0", 1], ["1", "2", 2],
                                  ["2", "1", 1], ["2", "0", 2]]


def test_build_summary_moves_counters(euclid20):
    run = run_pannld(euclid20, K=4)
    summary = build_summary("pannld", euclid20.n, run.result, K=4, tau_p=run.tau_p, tau_r=run.tau_r)
    assert summary.oracle_calls == run.result.diagnostics["oracle_calls"]
    assert "oracle_calls" not in summary.diagnostics
    assert summary.diagnostics["steps"]["promoted"] == run.foci.inner_steps
    assert sum(summary.component_sizes) == euclid20.n


def test_summary_json_round_trip(tmp_path, line_rs):
    result, _, _ = run_pald(line_rs)
    summary = build_summary("pald", 3, result, extra={"note": np.float64(0.5)})
    path = write_summary_json(summary, tmp_path / "summary.json")
    loaded = RunSummary.model_validate_json(path.read_text(encoding="utf-8"))
    assert loaded == summary
    assert loaded.diagnostics["note"] == 0.5


def test_summary_text_sections(line_rs):
    result, _, _ = run_pald(line_rs)
    text = summary_text(build_summary("pald", 3, result), "euclidean")
    assert text.startswith("CLUSTERING REPORT - euclidean")
    assert "=" * 60 in text
    assert "COMPONENTS:" in text
    assert "K:" not in text


def test_mc_reports_json(tmp_path):
    reports = [McReport.judge("a", 1.0, 1.0, 0.1, 100, "z", 0.5, 3.0),
               McReport.judge("b", 1.0, 0.0, 0.1, 100, "z", 5.0, 3.0, upper_only=True)]
    path = write_mc_reports(reports, tmp_path / "mc.json")
    document = json.loads(path.read_text(encoding="utf-8"))
    assert [r["verdict"] for r in document] == ["pass", "fail"]
    assert document[0]["details"]["value"] == 0.5


def test_run_artifacts(tmp_path, euclid20):
    run = run_pannld(euclid20, K=4)
    summary = build_summary("pannld", euclid20.n, run.result, K=4, tau_p=run.tau_p, tau_r=run.tau_r)
    paths = write_run_artifacts(tmp_path, euclid20, run.result, run.cohesion, summary,
                                graph=(run.graph.friends, run.graph))
    assert set(paths) == {"labels", "cohesion", "edge_weights", "summary", "summary_text", "digraph", "promoted"}
    labels = pd.read_csv(paths["labels"])
    assert "depth" not in labels.columns
    assert labels["component"].tolist() == run.result.labels
