"""
Command-line front end for the PaLD / PaNNLD clustering engine.

Subcommands: gen, pald, pannld, verify, compare, export. Every flag default
can be overridden by a PALD_-prefixed environment variable.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import adjusted_rand_score

from data_models import (CohesionDomainError, CohesionMatrix, ConsistencyError, DatasetSpec, RankingSystem, RunConfig,
                         RunSummary)
from lab import CHECKS, run_checks
from neighbors import build_friend_sets, knn_friend_sets, promoted_pairs
from pald import run_pald
from pannld import DegreeCapExceeded, run_pannld
from parsers_csv import InputDataError, load_k_overrides, load_points, load_ranking
from ranking import (AxiomViolationError, PointsOracle, build_rank_tables, generate, oracle_system, verify_axioms)
from report_generators import (build_summary, digraph_frame, promoted_frame, rank_tables_frame, write_csv,
                               write_mc_reports, write_run_artifacts)
from utils import derive_seed, env_default, optional_int, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2
EXIT_DEGREE_CAP = 3
EXIT_AXIOM = 4


def load_input(config: RunConfig) -> RankingSystem:
    """
    Ranking system for the configured input source.

    A points file too large for the exact pipeline feeding pannld is kept
    lazy: no tables are built and friend sets come from a nearest-neighbor search.
    """
    if config.input_kind == "generator":
        return generate(config.dataset)
    if config.input_path is None:
        raise ValueError(f"Input kind {config.input_kind} needs an input path")
    if config.input_kind == "points" and config.pipeline == "pannld":
        coords, ids = load_points(config.input_path)
        if len(ids) > config.pald_cap:
            oracle = PointsOracle(coords)
            rs = oracle_system(oracle, provenance={"kind": "points", "path": config.input_path}, points=oracle.points)
            rs.labels = ids
            return rs
    return load_ranking(config.input_kind, config.input_path)


def _k_setting(config: RunConfig, rs: RankingSystem):
    if config.k_overrides_path:
        return load_k_overrides(config.k_overrides_path, rs.labels, config.k)
    return config.k


def _counted_full_system(rs: RankingSystem, threads: int) -> Tuple[RankingSystem, int]:
    """Re-sort every full table through the oracle so the exact pipeline's queries are counted."""
    if rs.oracle is None:
        return rs, 0
    before = rs.oracle.calls
    candidates = {x: [y for y in range(rs.n) if y != x] for x in range(rs.n)}
    full = build_rank_tables(rs.oracle, candidates, threads=threads, provenance=rs.provenance, labels=rs.labels)
    full.points = rs.points
    return full, rs.oracle.calls - before


def _check_pald_cap(config: RunConfig, n: int) -> None:
    if n > config.pald_cap and not config.force:
        raise ValueError(f"n={n} exceeds the PaLD cap of {config.pald_cap}; "
                         f"use the pannld pipeline, or pass --force to run the cubic algorithm anyway")


def _pald(config: RunConfig, rs: RankingSystem):
    _check_pald_cap(config, rs.n)
    started = time.perf_counter()
    full, calls = _counted_full_system(rs, config.threads)
    cap = rs.n if config.force else config.pald_cap
    result, C, depth = run_pald(full, cap)
    result.diagnostics["oracle_calls"] = calls
    result.diagnostics["wall_time"] = time.perf_counter() - started
    return result, C, depth


def _pannld(config: RunConfig, rs: RankingSystem):
    K = _k_setting(config, rs)
    friends = None
    if not rs.full:
        if rs.points is None:
            raise ValueError("A ranking system without full tables needs coordinates for the friend search")
        friends = knn_friend_sets(rs.points, K, oracle=rs.oracle, validate=rs.n <= config.pald_cap)
    return run_pannld(rs, K, config.phi_mode, config.degree_cap, config.threads, friends=friends)


def run(config: RunConfig) -> Tuple[RunSummary, Dict[str, Path]]:
    """
    Run one pipeline end to end and write its artifacts.

    Args:
        config: Run configuration

    Returns:
        Tuple of (RunSummary, artifact paths)

    Raises:
        InputDataError: On malformed input files
        DegreeCapExceeded: If a promoted degree exceeds the cap
        ValueError: On invalid parameters or an oversized exact run
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "run_config.json")
    rs = load_input(config)
    logger.info(f"Running {config.pipeline} on {rs}")

    if config.pipeline == "pald":
        result, C, depth = _pald(config, rs)
        summary = build_summary("pald", rs.n, result)
        paths = write_run_artifacts(out, rs, result, C, summary, depth=depth)
    else:
        pannld_run = _pannld(config, rs)
        K = config.k if not config.k_overrides_path else None
        summary = build_summary("pannld", rs.n, pannld_run.result, K=K, tau_p=pannld_run.tau_p,
                                tau_r=pannld_run.tau_r)
        paths = write_run_artifacts(out, rs, pannld_run.result, pannld_run.cohesion, summary,
                                    graph=(pannld_run.graph.friends, pannld_run.graph))
    logger.info(f"{config.pipeline} finished: {len(summary.component_sizes)} components, "
                f"largest {summary.component_sizes[0]} of {summary.n}")
    return summary, paths


def _cohesion_deltas(exact: CohesionMatrix, approx: CohesionMatrix) -> Dict[str, float]:
    """Differences between the approximate and exact cohesion over the approximation's support."""
    deltas = np.array([abs(value - exact.get(x, v)) for x, v, value in approx.entries()])
    return {"max_abs": float(deltas.max()), "mean_abs": float(deltas.mean()), "entries": int(len(deltas))}


def compare_pipelines(config: RunConfig) -> Dict[str, Any]:
    """
    Run PaLD and PaNNLD on the same input and compare their partitions and costs.

    Raises:
        ValueError: If n exceeds the PaLD cap
    """
    rs = load_input(config)
    if rs.n > config.pald_cap:
        raise ValueError(f"n={rs.n} exceeds the PaLD cap of {config.pald_cap}; compare needs the exact pipeline. "
                         f"Lower n or raise --pald-cap")
    exact_result, exact_C, _ = _pald(config, rs)
    pannld_run = _pannld(config, rs)
    approx = pannld_run.result

    n = rs.n
    pald_calls = exact_result.diagnostics["oracle_calls"]
    pannld_calls = approx.diagnostics["oracle_calls"]
    report = {
        "n": n,
        "K_bar": pannld_run.graph.k_bar,
        "adjusted_rand_index": float(adjusted_rand_score(exact_result.labels, approx.labels)),
        "cohesion_deltas": _cohesion_deltas(exact_C, pannld_run.cohesion),
        "tau": {"pald": exact_result.threshold, "pannld": approx.threshold},
        "components": {"pald": exact_result.component_sizes(), "pannld": approx.component_sizes()},
        "oracle_calls": {"pald": pald_calls, "pannld": pannld_calls},
        "inner_steps": {"pald": exact_result.diagnostics["inner_steps"],
                        "pannld": approx.diagnostics["total_steps"]},
        "oracle_call_ratio": pannld_calls / pald_calls if pald_calls else None,
        "reference_ratio": 2 * pannld_run.graph.k_bar / n,
        "relegated_pairs": n * (n - 1) // 2 - pannld_run.graph.promoted_count,
    }
    logger.info(f"ARI={report['adjusted_rand_index']:.4f}, max cohesion delta on support "
                f"{report['cohesion_deltas']['max_abs']:.3g}")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report


def export(config: RunConfig) -> Dict[str, Path]:
    """Write the rank tables, and the digraph and promoted pairs when K is valid, of the configured input."""
    rs = load_input(config)
    if not rs.full:
        raise ValueError("Export needs full rank tables")
    out = Path(config.output_dir)
    paths = {"rank_tables": write_csv(rank_tables_frame(rs), out / "rank_tables.csv")}
    friends = build_friend_sets(rs, _k_setting(config, rs))
    g = promoted_pairs(friends, rs.n)
    paths["digraph"] = write_csv(digraph_frame(friends, rs.labels), out / "digraph.csv")
    paths["promoted"] = write_csv(promoted_frame(g, rs.labels), out / "promoted.csv")
    return paths


def gen(config: RunConfig) -> Dict[str, Path]:
    """Generate a dataset and write its rank tables (and coordinates and truth labels when present)."""
    rs = generate(config.dataset)
    out = Path(config.output_dir)
    paths = {"rank_tables": write_csv(rank_tables_frame(rs), out / "rank_tables.csv")}
    if rs.points is not None:
        points = pd.DataFrame(rs.points, columns=[f"c{i + 1}" for i in range(rs.points.shape[1])])
        points.insert(0, "id", rs.labels)
        paths["points"] = write_csv(points, out / "points.csv")
    if "truth" in rs.provenance:
        truth = pd.DataFrame({"id": rs.labels, "truth": rs.provenance["truth"]})
        paths["truth"] = write_csv(truth, out / "truth.csv")
    config.save(out / "run_config.json")
    return paths


def verify(args: argparse.Namespace, config: RunConfig) -> int:
    """Run the Monte Carlo suites, and the axiom check when an input is given; exit 1 if a check fails."""
    if args.axiom_samples:
        rs = load_input(config)
        if rs.oracle is None:
            raise ValueError("Axiom checks need an oracle-backed input")
        report = verify_axioms(rs.oracle, rs.n, args.axiom_samples, derive_seed(config.seed, "axioms"))
        if report["violations"]:
            first = report["violations"][0]
            raise AxiomViolationError(f"{first['axiom']} violated at witness {first['witness']}",
                                      first["axiom"], tuple(first["witness"]))
    checks = args.check or list(CHECKS)
    reports = run_checks(checks, trials=args.trials, theta=args.theta, seed=derive_seed(config.seed, "trials"),
                         phi_mode=config.phi_mode)
    write_mc_reports(reports, Path(config.output_dir) / "mc_reports.json")
    failed = [r.name for r in reports if not r.passed]
    for r in reports:
        print(f"{r.name:32s} {r.verdict:6s} estimate={r.estimate:.6g} target={r.target:.6g}")
    if failed:
        logger.error(f"Failed checks: {failed}")
        return EXIT_INTERNAL
    return EXIT_OK


def _add_input_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--points", help="Points CSV with header id,c1,...,cd")
    source.add_argument("--distances", help="Dissimilarity matrix CSV, n rows of n values")
    source.add_argument("--ranks", help="Rank tables CSV with rows base,member,rank")
    parser.add_argument("--generator", choices=["euclidean", "blobs", "star", "random-tournament"],
                        default=env_default("generator", "euclidean"), help="Synthetic dataset when no file is given")
    parser.add_argument("--n", type=int, default=env_default("n", 100, int), help="Generated point count")
    parser.add_argument("--dim", type=int, default=env_default("dim", 2, int))
    parser.add_argument("--centers", type=int, default=env_default("centers", 2, int))
    parser.add_argument("--cluster-std", type=float, default=env_default("cluster_std", 1.0, float))
    parser.add_argument("--pald-cap", type=int, default=env_default("pald_cap", 5000, int),
                        help="Largest n accepted by the exact pipeline (default: 5000)")
    parser.add_argument("--force", action="store_true", help="Run the exact pipeline above the cap")


def _add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="Load a saved run_config.json; other flags are ignored")
    parser.add_argument("--seed", type=int, default=env_default("seed", 0, int))
    parser.add_argument("--output-dir", default=env_default("output_dir", "results"),
                        help="Output directory (default: results)")
    parser.add_argument("--threads", type=int, default=env_default("threads", 1, int))
    parser.add_argument("--phi-mode", choices=["exact", "quadrature", "asymptotic"],
                        default=env_default("phi_mode", "exact"))
    parser.add_argument("--log-level", default=env_default("log_level", "INFO"))


def _add_neighbor_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k", type=int, default=env_default("k", 10, int), help="Friends per point (default: 10)")
    parser.add_argument("--k-overrides", help="CSV of per-point friend counts with rows id,k")
    parser.add_argument("--degree-cap", type=optional_int, default=env_default("degree_cap", None, optional_int),
                        help="Largest promoted degree (default: max(8*K_max, ceil(2*sqrt(n))))")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pannld", description="Comparison-based clustering by partitioned local depth")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen_parser = subparsers.add_parser("gen", help="Generate a synthetic dataset")
    _add_input_arguments(gen_parser)
    _add_common_arguments(gen_parser)

    pald_parser = subparsers.add_parser("pald", help="Exact PaLD clustering")
    _add_input_arguments(pald_parser)
    _add_common_arguments(pald_parser)

    pannld_parser = subparsers.add_parser("pannld", help="Nearest-neighbor PaNNLD clustering")
    _add_input_arguments(pannld_parser)
    _add_common_arguments(pannld_parser)
    _add_neighbor_arguments(pannld_parser)

    verify_parser = subparsers.add_parser("verify", help="Monte Carlo checks and oracle axiom checks")
    _add_input_arguments(verify_parser)
    _add_common_arguments(verify_parser)
    verify_parser.add_argument("--check", action="append", choices=list(CHECKS),
                               help="Suite to run; repeat for several (default: all)")
    verify_parser.add_argument("--trials", type=int, default=env_default("trials", 10_000, int))
    verify_parser.add_argument("--theta", type=float, default=env_default("theta", 0.5, float))
    verify_parser.add_argument("--axiom-samples", type=int, default=0,
                               help="Also check the input oracle's axioms on this many random triples")

    compare_parser = subparsers.add_parser("compare", help="Run both pipelines and compare them")
    _add_input_arguments(compare_parser)
    _add_common_arguments(compare_parser)
    _add_neighbor_arguments(compare_parser)

    export_parser = subparsers.add_parser("export", help="Export rank tables, digraph and promoted pairs")
    _add_input_arguments(export_parser)
    _add_common_arguments(export_parser)
    _add_neighbor_arguments(export_parser)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Build a RunConfig from parsed flags, or load it when --config is given."""
    if args.config is not None:
        return RunConfig.load(args.config)
    input_kind, input_path = "generator", None
    for kind, flag in (("points", args.points), ("distances", args.distances), ("ranks", args.ranks)):
        if flag:
            input_kind, input_path = kind, flag
    dataset = DatasetSpec(kind=args.generator, n=args.n, dim=args.dim, centers=args.centers,
                          cluster_std=args.cluster_std, seed=derive_seed(args.seed, "generator"))
    pipeline = "pald" if args.command == "pald" else "pannld"
    return RunConfig(input_kind=input_kind, input_path=input_path, dataset=dataset, pipeline=pipeline,
                     k=getattr(args, "k", 10), k_overrides_path=getattr(args, "k_overrides", None),
                     phi_mode=args.phi_mode, seed=args.seed, output_dir=args.output_dir,
                     degree_cap=getattr(args, "degree_cap", None), threads=args.threads, pald_cap=args.pald_cap,
                     force=args.force, log_level=args.log_level)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        config = config_from_args(args)
        if args.command == "gen":
            paths = gen(config)
        elif args.command in ("pald", "pannld"):
            summary, paths = run(config)
            print(f"tau={summary.tau:.6g} components={len(summary.component_sizes)} "
                  f"largest={summary.component_sizes[0]}/{summary.n} oracle_calls={summary.oracle_calls}")
        elif args.command == "verify":
            return verify(args, config)
        elif args.command == "compare":
            report = compare_pipelines(config)
            print(f"ARI={report['adjusted_rand_index']:.4f} "
                  f"max_cohesion_delta={report['cohesion_deltas']['max_abs']:.3g}")
            return EXIT_OK
        else:
            paths = export(config)
        for name, path in paths.items():
            print(f"{name}: {path}")
        return EXIT_OK
    except AxiomViolationError as e:
        logger.error(f"Axiom violation ({e.axiom}) at witness {e.triple}: {e}")
        return EXIT_AXIOM
    except DegreeCapExceeded as e:
        logger.error(f"Degree cap {e.cap} exceeded at vertices {e.vertices}")
        return EXIT_DEGREE_CAP
    except InputDataError as e:
        logger.error(f"Input error at row {e.row}, column {e.column}: {e}")
        return EXIT_INPUT
    except (ValueError, FileNotFoundError) as e:
        logger.error(str(e))
        return EXIT_INPUT
    except (ConsistencyError, CohesionDomainError) as e:
        logger.error(f"Internal consistency failure: {e}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
