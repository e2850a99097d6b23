"""Command line driver.

One executable wires the whole toolchain: generate synthetic workloads,
compile measures to text plans, run the batch engine or the reference
interpreter, price cluster configurations, and sweep benchmark grids.
All file outputs are written atomically (temp file + rename) and contain
no timestamps, so identical flags and seeds reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import statistics
import sys
import tempfile
from importlib import resources as ir

from . import catalog
from .costperf import (
    CostError,
    CostModel,
    cost_of_config,
    cost_performance_records,
    load_config_tables,
    records_to_csv,
    resolve_image,
)
from .datagen import default_partitions, generate_workload
from .engine import ClusterConfig, RunMetrics, build_job, execute
from .frontend import (
    CqlSyntaxError,
    ResolveError,
    load_params,
    parse_library,
    resolve,
    validate_subset,
)
from .oracle import evaluate_dataset
from .planner import index_schema, lower, optimize, plan_text
from .storage import FormatError, MissingTableError, open_dataset


class UsageError(Exception):
    """Bad flag combination detected after argparse; exits with status 2."""


# -- small helpers ----------------------------------------------------------

def _bundled(name: str) -> str:
    return (ir.files("cqlbatch") / "resources" / name).read_text()


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_doc(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _emit(text: str, out: str | None) -> None:
    if out:
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _load_measure(args):
    """Parse and resolve the measure named by the flags.

    Returns (ast, valueset defs). Subset diagnostics are tolerated: they
    go to stderr and compilation proceeds.
    """
    if args.measure:
        text, label = _read_text(args.measure), args.measure
    else:
        text, label = _bundled("bcs.cql"), "bcs.cql"
    lib = parse_library(text, name=label)
    for diag in validate_subset(lib):
        print(diag.format(label), file=sys.stderr)
    params = load_params(_read_text(args.params) if args.params else _bundled("params.json"))
    defs = catalog.load_valuesets(
        _read_text(args.valuesets) if args.valuesets else _bundled("valuesets.json"))
    ast = resolve(lib, params, set(defs))
    return ast, defs


def _compile(args, hypercache: bool):
    ast, defs = _load_measure(args)
    plan = optimize(lower(ast, max_gap_days=args.max_gap_days), defs, hypercache)
    return ast, defs, plan


def _open_data(path: str, expect_fmt: str | None):
    data = open_dataset(path)
    if expect_fmt and data.fmt != expect_fmt:
        raise UsageError(f"dataset {path} is {data.fmt!r}, not {expect_fmt!r}")
    return data


def _measure_flags(sub) -> None:
    sub.add_argument("--measure", help="measure source (default: bundled screening measure)")
    sub.add_argument("--params", help="parameter bindings JSON (default: bundled)")
    sub.add_argument("--valuesets", help="valueset registry JSON (default: bundled)")
    sub.add_argument("--max-gap-days", type=int, default=45,
                     help="largest coverage gap treated as continuous (default 45)")


def _find_config(config_id: str):
    configs, images = load_config_tables()
    for spec in configs:
        if spec.id == config_id:
            return spec, images
    raise UsageError(f"unknown configuration id {config_id!r}")


# -- gen --------------------------------------------------------------------

def cmd_gen(args) -> int:
    parts = args.partitions or default_partitions(args.patients)
    manifest = generate_workload(
        args.patients, args.match_rate, args.seed, args.out,
        fmt=args.format, n_partitions=parts,
        max_gap_days=args.max_gap_days)
    counts = manifest.counts
    print(f"wrote {args.patients} patients to {args.out} "
          f"(denominator {counts['denominator']}, numerator {counts['numerator']}, "
          f"exclusion {counts['exclusion']})")
    return 0


# -- compile ----------------------------------------------------------------

def cmd_compile(args) -> int:
    hypercache = args.hypercache == "on"
    if args.emit == "plan":
        ast, _ = _load_measure(args)
        text = plan_text(lower(ast, max_gap_days=args.max_gap_days))
    elif args.emit == "plan-opt":
        _, _, plan = _compile(args, hypercache)
        text = plan_text(plan)
    else:
        _, _, plan = _compile(args, hypercache)
        text = _json_doc(index_schema(plan).to_doc())
    _emit(text, args.out)
    return 0


# -- run / oracle -----------------------------------------------------------

def cmd_run(args) -> int:
    _, defs, plan = _compile(args, args.hypercache == "on")
    data = _open_data(args.data, args.format)
    cfg = ClusterConfig(args.taskmanagers, args.cores_per_tm,
                        args.ram_per_tm, args.parallelism)
    bundle = catalog.broadcast_handles(defs, plan)
    job = build_job(plan, index_schema(plan), cfg, data.n_partitions, bundle)
    report, metrics = execute(job, data)
    if args.report:
        _atomic_write(args.report, _json_doc(report.to_doc()))
    if args.metrics:
        _atomic_write(args.metrics, _json_doc(metrics.to_doc()))
    print(f"denominator {report.denominator_count} numerator {report.numerator_count} "
          f"exclusion {report.exclusion_count}")
    print(f"scanned {metrics.resources_scanned} resources in {metrics.wall_time:.3f}s "
          f"({metrics.throughput / 1e6:.2f} M resources/s)")
    return 0


def cmd_oracle(args) -> int:
    ast, defs = _load_measure(args)
    data = _open_data(args.data, None)
    bundle = catalog.ValueSetBundle(catalog.compile_registry(defs))
    report = evaluate_dataset(data, ast, bundle, max_gap_days=args.max_gap_days)
    if args.report:
        _atomic_write(args.report, _json_doc(report.to_doc()))
    print(f"denominator {report.denominator_count} numerator {report.numerator_count} "
          f"exclusion {report.exclusion_count}")
    return 0


# -- cost / report ----------------------------------------------------------

def cmd_cost(args) -> int:
    spec, images = _find_config(args.config)
    model = CostModel(alpha=args.alpha, pricing="spot" if args.spot else "on-demand")
    per_tm = cost_of_config(spec, images, model, per_tm=True,
                            paper_rounding=args.paper_rounding)
    cluster = cost_of_config(spec, images, model, per_tm=False,
                             paper_rounding=args.paper_rounding)
    image = resolve_image(spec.image_family, images)
    doc = {
        "config_id": spec.id,
        "image": image.name,
        "pricing": model.pricing,
        "alpha": model.alpha,
        "unit_cost": per_tm.u_i,
        "per_taskmanager": {"cores": per_tm.n_cores, "ram_gb": per_tm.n_ram,
                            "cph": per_tm.cph_config},
        "cluster": {"taskmanagers": spec.cluster.taskmanagers,
                    "node_count": cluster.node_count,
                    "cores": cluster.n_cores, "ram_gb": cluster.n_ram,
                    "cph": cluster.cph_config},
    }
    _emit(_json_doc(doc), args.out)
    return 0


def _metrics_from_doc(doc: dict) -> RunMetrics:
    return RunMetrics(
        wall_time=float(doc["wall_time"]),
        resources_scanned=int(doc["resources_scanned"]),
        values_read=int(doc["values_read"]),
        chunks_skipped=int(doc["chunks_skipped"]),
        rows_emitted={k: int(v) for k, v in doc["rows_emitted"].items()},
        peak_join_state_entries=tuple(doc["peak_join_state_entries"]),
        dedup_state_entries=int(doc["dedup_state_entries"]),
        ram_budget_exceeded=bool(doc["ram_budget_exceeded"]),
    )


def _as_flag(value) -> bool:
    if isinstance(value, bool):
        return value
    if value in ("on", "off"):
        return value == "on"
    raise ValueError(f"hypercache flag must be on/off, got {value!r}")


def cmd_report(args) -> int:
    runs_doc = json.loads(_read_text(args.runs))
    if not isinstance(runs_doc, list):
        raise UsageError("--runs must contain a JSON array of run objects")
    configs, images = load_config_tables()
    by_id = {c.id: c for c in configs}
    runs = []
    for entry in runs_doc:
        config_id = entry["config"]
        if config_id not in by_id:
            raise UsageError(f"unknown configuration id {config_id!r} in {args.runs}")
        metrics = entry["metrics"]
        if isinstance(metrics, str):
            metrics = json.loads(_read_text(metrics))
        runs.append((by_id[config_id], _metrics_from_doc(metrics),
                     _as_flag(entry["hypercache"])))
    model = CostModel(pricing="spot" if args.spot else "on-demand")
    _atomic_write(args.out, records_to_csv(cost_performance_records(runs, images, model)))
    print(f"wrote {len(runs)} records to {args.out}")
    return 0


# -- bench ------------------------------------------------------------------

_BENCH_FIELDS = (
    "patients", "match_rate", "seed", "format", "config_id", "hypercache",
    "rep", "status", "throughput_mrps", "cph_config", "toc", "n_slots",
    "wall_time", "resources_scanned", "values_read", "chunks_skipped",
    "dedup_state_entries", "peak_join_state_entries", "ram_budget_exceeded",
    "error",
)

_SUMMARY_FIELDS = (
    "patients", "match_rate", "seed", "format", "config_id", "hypercache",
    "status", "reps_ok", "reps_failed", "median_wall_time",
    "median_throughput_mrps", "cph_config", "toc", "n_slots",
)


def _bench_dataset(workload: dict, fmt: str, args) -> str:
    n, r, seed = int(workload["patients"]), float(workload["match_rate"]), int(workload["seed"])
    name = f"w{n}-r{r:g}-s{seed}-{fmt}"
    path = os.path.join(args.data_root, name)
    if not os.path.exists(os.path.join(path, "manifest.json")):
        generate_workload(n, r, seed, path, fmt=fmt,
                          n_partitions=args.partitions or default_partitions(n),
                          max_gap_days=args.max_gap_days)
    return path


def _write_csv(path: str, fields, rows) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_bench(args) -> int:
    grid = json.loads(_read_text(args.grid))
    workloads = grid.get("workloads", [])
    cells = grid.get("cells", [])
    reps = int(grid.get("repetitions", 1))
    if not workloads or not cells:
        raise UsageError("bench grid needs non-empty workloads and cells")
    if reps < 1:
        raise UsageError("bench grid repetitions must be >= 1")

    configs, images = load_config_tables()
    by_id = {c.id: c for c in configs}
    # the two plans differ only in valueset binding mode; compile each once
    plans = {flag: _compile(args, flag)[1:] for flag in (True, False)}
    model = CostModel()

    rows, summary = [], []
    for workload in workloads:
        for cell in cells:
            base = {
                "patients": workload["patients"],
                "match_rate": workload["match_rate"],
                "seed": workload["seed"],
                "format": cell.get("format", "row"),
                "config_id": cell.get("config", ""),
                "hypercache": cell.get("hypercache", "on"),
            }
            ok_rows, failures = [], 0
            for rep in range(reps):
                row = dict.fromkeys(_BENCH_FIELDS, "")
                row.update(base, rep=rep, status="ok", error="")
                try:
                    spec = by_id.get(cell["config"])
                    if spec is None:
                        raise UsageError(f"unknown configuration id {cell['config']!r}")
                    flag = _as_flag(cell.get("hypercache", "on"))
                    fmt = cell.get("format", "row")
                    if fmt not in ("row", "col"):
                        raise UsageError(f"unknown format {fmt!r}")
                    defs, plan = plans[flag]
                    data = open_dataset(_bench_dataset(workload, fmt, args))
                    bundle = catalog.broadcast_handles(defs, plan)
                    job = build_job(plan, index_schema(plan), spec.cluster,
                                    data.n_partitions, bundle)
                    _, metrics = execute(job, data, with_flags=False)
                    record, = cost_performance_records([(spec, metrics, flag)],
                                                       images, model)
                    row.update(
                        throughput_mrps=f"{record['throughput_mrps']:.6g}",
                        cph_config=f"{record['cph_config']:.6g}",
                        toc=f"{record['toc']:.6g}",
                        n_slots=record["n_slots"],
                        wall_time=f"{metrics.wall_time:.6f}",
                        resources_scanned=metrics.resources_scanned,
                        values_read=metrics.values_read,
                        chunks_skipped=metrics.chunks_skipped,
                        dedup_state_entries=metrics.dedup_state_entries,
                        peak_join_state_entries="|".join(
                            str(p) for p in metrics.peak_join_state_entries),
                        ram_budget_exceeded=metrics.ram_budget_exceeded,
                    )
                    ok_rows.append(row)
                except (KeyError, ValueError, UsageError, CostError, OSError,
                        FormatError, MissingTableError) as exc:
                    failures += 1
                    row.update(status="failed", error=str(exc))
                rows.append(row)
            cell_summary = dict.fromkeys(_SUMMARY_FIELDS, "")
            cell_summary.update(base, reps_ok=len(ok_rows), reps_failed=failures,
                                status="ok" if ok_rows else "failed")
            if ok_rows:
                cell_summary.update(
                    median_wall_time=f"{statistics.median(float(r['wall_time']) for r in ok_rows):.6f}",
                    median_throughput_mrps=f"{statistics.median(float(r['throughput_mrps']) for r in ok_rows):.6g}",
                    cph_config=ok_rows[0]["cph_config"],
                    toc=ok_rows[0]["toc"],
                    n_slots=ok_rows[0]["n_slots"],
                )
            summary.append(cell_summary)

    _write_csv(args.out, _BENCH_FIELDS, rows)
    summary_path = args.summary or os.path.splitext(args.out)[0] + ".summary.csv"
    _write_csv(summary_path, _SUMMARY_FIELDS, summary)
    failed = sum(1 for r in rows if r["status"] == "failed")
    print(f"{len(rows)} bench rows ({failed} failed) -> {args.out}; "
          f"summary -> {summary_path}")
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqlbatch",
        description="Compile quality measures and run them over batch datasets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic workload")
    p.add_argument("--patients", type=int, required=True)
    p.add_argument("--match-rate", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("row", "col"), default="row")
    p.add_argument("--partitions", type=int,
                   help="override the size-based partition count")
    p.add_argument("--max-gap-days", type=int, default=45)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compile", help="compile a measure and print its plan")
    p.add_argument("measure", nargs="?", help="measure source (default: bundled)")
    p.add_argument("--emit", choices=("plan", "plan-opt", "index-schema"),
                   default="plan")
    p.add_argument("--params")
    p.add_argument("--valuesets")
    p.add_argument("--max-gap-days", type=int, default=45)
    p.add_argument("--hypercache", choices=("on", "off"), default="on")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="execute a measure on a dataset")
    _measure_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--taskmanagers", type=int, default=1)
    p.add_argument("--cores-per-tm", type=int, default=1)
    p.add_argument("--ram-per-tm", type=float, default=4.0)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--hypercache", choices=("on", "off"), default="on")
    p.add_argument("--format", choices=("row", "col"),
                   help="require the dataset to be in this format")
    p.add_argument("--report", help="write the measure report JSON here")
    p.add_argument("--metrics", help="write the run metrics JSON here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("oracle", help="run the reference interpreter")
    _measure_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--report", help="write the measure report JSON here")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("cost", help="price a cluster configuration")
    p.add_argument("--config", required=True, help="configuration id, e.g. C18B")
    p.add_argument("--spot", action="store_true", help="use spot pricing")
    p.add_argument("--paper-rounding", action="store_true",
                   help="round the unit cost to 3 decimals and the result to 2")
    p.add_argument("--alpha", type=float, default=6.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("report", help="join run metrics with costs into records")
    p.add_argument("--runs", required=True, help="JSON array of run entries")
    p.add_argument("--out", required=True)
    p.add_argument("--spot", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bench", help="run a benchmark grid")
    p.add_argument("--grid", required=True, help="grid description JSON")
    p.add_argument("--out", required=True, help="per-repetition results CSV")
    p.add_argument("--summary", help="median-of-repetitions CSV "
                   "(default: <out>.summary.csv)")
    p.add_argument("--data-root", default="bench-data",
                   help="directory for generated datasets")
    p.add_argument("--partitions", type=int,
                   help="override the size-based partition count")
    _measure_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


_MODULE_ERRORS = (
    CqlSyntaxError, ResolveError, catalog.CatalogError, CostError,
    FormatError, MissingTableError, ValueError, OSError,
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cqlbatch: {exc}", file=sys.stderr)
        return 2
    except _MODULE_ERRORS as exc:
        print(f"cqlbatch: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
