"""Command-line front door: generate, discover, benchmark, match, project, serve.

Outputs are written atomically (temp file + rename). stdout carries a single
JSON summary per command; diagnostics go to stderr. Exit codes: 0 success,
1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .dataset import CprismError, binarize, ingest_csv, subgroup_from_json, subgroup_to_json
from .discovery import ParetoResult, SearchParams, discover
from .estimators import fit_propensity
from .matching import build_match_report
from .projection import project_dataset
from .synth import SynthSpec, bench_metrics, exhaustive_front, generate_synthetic

DEFAULT_PORT = 8787


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _atomic_write(path: str, data: bytes) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode()


def _summary(**fields) -> None:
    print(json.dumps(fields, sort_keys=True))


def _read_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_pipeline(data_path: str, config: dict):
    with open(data_path, "rb") as fh:
        payload = fh.read()
    ingest_cfg = {
        k: v
        for k, v in config.items()
        if k in ("treatment", "outcome", "positive_value", "buckets", "types")
    }
    ingest_cfg.setdefault("treatment", "treatment")
    ingest_cfg.setdefault("outcome", "outcome")
    dataset = ingest_csv(payload, ingest_cfg)
    schema, matrix = binarize(dataset, bucket_count=int(config.get("buckets", 4)))
    model = fit_propensity(dataset, matrix)
    return dataset, schema, matrix, model


def _search_params(config: dict, seed) -> SearchParams:
    params = SearchParams.from_json(config.get("search", {}))
    if seed is not None:
        params.seed = int(seed)
    return params


def _result_json(result: ParetoResult, schema) -> dict:
    def entry(member):
        doc = subgroup_to_json(member.subgroup, schema)
        doc["metrics"] = member.metrics.to_json()
        doc["objectives"] = [
            v if math.isfinite(v) else None for v in member.objectives
        ]
        doc["crowding"] = member.crowding if math.isfinite(member.crowding) else None
        return doc

    return {
        "fronts": [[entry(m) for m in front] for front in result.fronts],
        "generations_run": result.generations_run,
        "stop_reason": result.stop_reason,
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_synth(args) -> int:
    spec = SynthSpec.from_json(_read_json(args.spec))
    if args.seed is not None:
        spec.seed = int(args.seed)
    dataset, truth = generate_synthetic(spec)
    df = dataset.to_dataframe().reset_index(drop=True)
    _atomic_write(args.out, df.to_csv(index=False).encode())
    if args.truth:
        truth_doc = {
            "true_e": truth.true_e.tolist(),
            "true_te": truth.true_te.tolist(),
            "membership": truth.membership.astype(int).tolist(),
            "baseline": truth.baseline.tolist(),
            "seed": spec.seed,
        }
        _atomic_write(args.truth, _dump_json(truth_doc))
    _summary(command="synth", rows=dataset.n, out=args.out, truth=args.truth, seed=spec.seed)
    return 0


def _cmd_discover(args) -> int:
    config = _read_json(args.config) if args.config else {}
    dataset, schema, matrix, model = _load_pipeline(args.data, config)
    params = _search_params(config, args.seed)
    result = discover(dataset, matrix, model, params)
    _atomic_write(args.out, _dump_json(_result_json(result, schema)))
    _summary(
        command="discover",
        out=args.out,
        front1=len(result.front1),
        generations=result.generations_run,
        stop_reason=result.stop_reason,
        seed=params.seed,
    )
    return 0


def _cmd_bench(args) -> int:
    config = _read_json(args.config) if args.config else {}
    dataset, schema, matrix, model = _load_pipeline(args.data, config)
    params = _search_params(config, args.seed)
    min_cov = params.resolve_coverage(matrix.n)
    result = discover(dataset, matrix, model, params)
    oracle = exhaustive_front(
        dataset,
        matrix,
        model,
        max_atoms=args.oracle_max_atoms,
        min_coverage=min_cov,
        max_length=params.max_length,
        min_group=params.min_group,
        objectives=params.objectives,
    )
    pooled = [result.front1, oracle]
    ours = bench_metrics(result.front1, pooled)
    oracle_row = bench_metrics(oracle, pooled)
    name = args.name or Path(args.data).stem
    lines = ["dataset,method,P,S,L,C"]
    rows = [("ours", ours), ("oracle", oracle_row)]
    for method, m in rows:
        lines.append(f"{name},{method},{m.precision:.4f},{m.n_subgroups},{m.avg_len:.4f},{m.coverage_pct:.4f}")
    _atomic_write(args.out, ("\n".join(lines) + "\n").encode())
    md_path = args.out_md or str(Path(args.out).with_suffix(".md"))
    md = [
        "| Dataset | Method | P | S | L | C |",
        "|---|---|---|---|---|---|",
    ]
    for method, m in rows:
        md.append(
            f"| {name} | {method} | {m.precision:.2f} | {m.n_subgroups} | "
            f"{m.avg_len:.1f} | {m.coverage_pct:.1f} |"
        )
    _atomic_write(md_path, ("\n".join(md) + "\n").encode())
    _summary(
        command="bench",
        out=args.out,
        markdown=md_path,
        precision=ours.precision,
        n_subgroups=ours.n_subgroups,
        avg_len=ours.avg_len,
        coverage_pct=ours.coverage_pct,
        seed=params.seed,
    )
    return 0


def _cmd_match(args) -> int:
    config = _read_json(args.config) if args.config else {}
    dataset, schema, matrix, model = _load_pipeline(args.data, config)
    subgroup, notes = subgroup_from_json(_read_json(args.subgroup), schema)
    report = build_match_report(
        subgroup,
        dataset,
        matrix,
        model,
        epsilon=args.epsilon,
        seed=args.seed if args.seed is not None else 0,
    )
    doc = report.to_json()
    if notes:
        doc["snapped"] = notes
    _atomic_write(args.out, _dump_json(doc))
    _summary(
        command="match",
        out=args.out,
        n_pairs=report.n_pairs,
        mean_ite=report.mean_ite,
        epsilon=args.epsilon,
    )
    return 0


def _cmd_project(args) -> int:
    config = _read_json(args.config) if args.config else {}
    dataset, schema, matrix, model = _load_pipeline(args.data, config)
    layout = project_dataset(dataset, seed=args.seed if args.seed is not None else 0)
    _atomic_write(args.out, _dump_json(layout))
    _summary(command="project", out=args.out, points=len(layout["points"]), stress=layout["stress"])
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = args.port
    if port is None:
        port = int(os.environ.get("CPRISM_PORT", DEFAULT_PORT))
    snapshot_dir = args.snapshot_dir or os.environ.get("CPRISM_SNAPSHOT_DIR")
    app = create_app(snapshot_dir=snapshot_dir)
    print(json.dumps({"command": "serve", "port": port, "snapshot_dir": snapshot_dir}))
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cprism", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset with ground truth")
    p.add_argument("--spec", required=True, help="SynthSpec JSON file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--truth", help="output ground-truth JSON path")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("discover", help="run subgroup discovery on a CSV")
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--config", help="dataset + search config JSON")
    p.add_argument("--out", required=True, help="output front JSON path")
    p.add_argument("--seed", type=int, help="override the search seed")
    p.set_defaults(func=_cmd_discover)

    p = sub.add_parser("bench", help="discovery vs exhaustive oracle precision")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="dataset + search config JSON")
    p.add_argument("--oracle-max-atoms", type=int, default=2)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--out-md", help="markdown table path (default: out with .md)")
    p.add_argument("--name", help="dataset label for the report")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("match", help="matched-pair effect report for one subgroup")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="dataset config JSON")
    p.add_argument("--subgroup", required=True, help="subgroup JSON file")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_match)

    p = sub.add_parser("project", help="2-D unit projection layout")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="dataset config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--port", type=int, default=None, help=f"default {DEFAULT_PORT} or CPRISM_PORT")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--snapshot-dir", help="session snapshot directory (or CPRISM_SNAPSHOT_DIR)")
    p.add_argument("--seed", type=int, help="accepted for symmetry; serve is not seeded")
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CprismError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
