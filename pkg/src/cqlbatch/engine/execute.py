"""Plan execution over a partitioned dataset.

Each slot evaluates the full plan dag once per owned partition with
memoized node results, so shared scans are read once.  Partitions are
disjoint by the patient-id partitioner, which makes per-partition dedup
exact and lets the merge step simply sum counts and concatenate flags in
partition order.  The merge is the only synchronization point, and results
are keyed by partition, so scheduling order cannot change the report.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce

import numpy as np

from ..planner import (
    AgeFilter,
    AndPerPatient,
    CodeInValueSet,
    CoverageGapAgg,
    ExistsPerPatient,
    Filter,
    LogicalPlan,
    OrPerPatient,
    Report,
    Scan,
    UnionDistinctPatients,
    ValueSetSemiJoin,
    walk_pred,
)
from ..storage import ColumnFileReader, MissingTableError, read_row_columns
from ..storage.dataset import DatasetHandle
from . import operators
from .job import JobGraph

STATE_ENTRY_BYTES = 64

FLAG_DTYPE = np.dtype([
    ("patient_id", "<i8"),
    ("in_denominator", "u1"),
    ("in_numerator", "u1"),
    ("excluded", "u1"),
])


def node_labels(plan: LogicalPlan) -> dict[int, str]:
    """Stable per-run metric keys, matching the text plan's numbering."""
    labels: dict[int, str] = {}
    for i, node in enumerate(plan.nodes(), 1):
        kind = type(node).__name__
        if isinstance(node, Scan):
            kind += f"[{node.resource}]"
        elif isinstance(node, ValueSetSemiJoin):
            kind += f"[{node.valueset}]"
        labels[id(node)] = f"#{i} {kind}"
    return labels


@dataclass(eq=False)
class MeasureReport:
    denominator_count: int
    numerator_count: int
    exclusion_count: int
    flags: np.ndarray | None = None  # FLAG_DTYPE, sorted by patient_id

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeasureReport):
            return NotImplemented
        if (
            self.denominator_count != other.denominator_count
            or self.numerator_count != other.numerator_count
            or self.exclusion_count != other.exclusion_count
        ):
            return False
        if self.flags is None or other.flags is None:
            return self.flags is None and other.flags is None
        return bool(np.array_equal(self.flags, other.flags))

    def to_doc(self) -> dict:
        doc = {
            "denominator_count": int(self.denominator_count),
            "numerator_count": int(self.numerator_count),
            "exclusion_count": int(self.exclusion_count),
            "flags": None,
        }
        if self.flags is not None:
            doc["flags"] = [
                [int(r["patient_id"]), int(r["in_denominator"]),
                 int(r["in_numerator"]), int(r["excluded"])]
                for r in self.flags
            ]
        return doc


@dataclass
class RunMetrics:
    wall_time: float
    resources_scanned: int
    values_read: int
    chunks_skipped: int
    rows_emitted: dict[str, int]
    peak_join_state_entries: tuple[int, ...]  # one per taskmanager
    dedup_state_entries: int
    ram_budget_exceeded: bool

    @property
    def throughput(self) -> float:
        """Resources per second, recomputed from the stored counters."""
        if self.wall_time <= 0:
            return 0.0
        return self.resources_scanned / self.wall_time

    def to_doc(self) -> dict:
        return {
            "wall_time": self.wall_time,
            "resources_scanned": self.resources_scanned,
            "values_read": self.values_read,
            "chunks_skipped": self.chunks_skipped,
            "rows_emitted": {k: self.rows_emitted[k] for k in sorted(self.rows_emitted)},
            "peak_join_state_entries": list(self.peak_join_state_entries),
            "dedup_state_entries": self.dedup_state_entries,
            "ram_budget_exceeded": self.ram_budget_exceeded,
            "throughput": self.throughput,
        }


class _SlotCounters:
    __slots__ = (
        "resources_scanned", "values_read", "chunks_skipped",
        "rows_emitted", "dedup_entries", "baseline_join_entries",
    )

    def __init__(self):
        self.resources_scanned = 0
        self.values_read = 0
        self.chunks_skipped = 0
        self.rows_emitted: dict[str, int] = {}
        self.dedup_entries = 0
        self.baseline_join_entries = 0

    def emit(self, label: str, n: int) -> None:
        self.rows_emitted[label] = self.rows_emitted.get(label, 0) + n


class _Rows:
    __slots__ = ("cols", "n")

    def __init__(self, cols: dict[str, np.ndarray], n: int):
        self.cols = cols
        self.n = n

    def filtered(self, mask: np.ndarray) -> "_Rows":
        return _Rows({f: a[mask] for f, a in self.cols.items()}, int(mask.sum()))


class _PartitionEval:
    """Evaluate the plan dag for one partition, memoized by node identity."""

    def __init__(self, job: JobGraph, data: DatasetHandle, partition: int,
                 counters: _SlotCounters, labels: dict[int, str]):
        self.job = job
        self.data = data
        self.partition = partition
        self.counters = counters
        self.labels = labels
        self.memo: dict[int, object] = {}
        self._roster: np.ndarray | None = None

    # -- I/O ---------------------------------------------------------------

    def _path(self, table: str) -> str:
        path = self.data.partition_path(table, self.partition)
        if not os.path.exists(path):
            raise MissingTableError(path)
        return path

    def roster(self) -> np.ndarray:
        """All patient ids in this partition, sorted."""
        if self._roster is None:
            schema = self.data.schema("patient")
            path = self._path("patient")
            if self.data.fmt == "row":
                n, cols = read_row_columns(path, schema, ("patient_id",))
                self.counters.resources_scanned += n
                self.counters.values_read += n * len(schema.fields)
                ids = cols["patient_id"]
            else:
                pieces = []
                with ColumnFileReader(path, schema) as reader:
                    for info in reader.iter_chunks():
                        cols = reader.read_columns(info, ("patient_id",))
                        self.counters.resources_scanned += info.n_rows
                        self.counters.values_read += info.n_rows
                        pieces.append(cols["patient_id"])
                ids = (np.concatenate(pieces) if pieces
                       else np.empty(0, dtype=np.int64))
            self._roster = np.sort(ids)
        return self._roster

    def _scan(self, node: Scan) -> _Rows:
        schema = self.data.schema(node.resource)
        path = self._path(node.resource)
        pred_fields = tuple(
            dict.fromkeys(f for p in node.predicates for f in p.fields())
        )
        if self.data.fmt == "row":
            # every stored value is decoded and counted; only the fields the
            # plan touches get materialized as columns
            needed = tuple(dict.fromkeys(node.projection + pred_fields))
            n, cols = read_row_columns(path, schema, needed)
            self.counters.resources_scanned += n
            self.counters.values_read += n * len(schema.fields)
            rows = _Rows({f: cols[f] for f in node.projection}, n)
            if node.predicates:
                mask = self._mask(node.predicates, cols)
                rows = rows.filtered(mask)
            return rows
        needed = tuple(dict.fromkeys(node.projection + pred_fields))
        parts: dict[str, list[np.ndarray]] = {f: [] for f in node.projection}
        n_out = 0
        with ColumnFileReader(path, schema) as reader:
            for info in reader.iter_chunks():
                if node.predicates and not all(
                    operators.chunk_may_match(p, info, self.job.bundle)
                    for p in node.predicates
                ):
                    self.counters.chunks_skipped += 1
                    continue
                cols = reader.read_columns(info, needed)
                self.counters.resources_scanned += info.n_rows
                self.counters.values_read += info.n_rows * len(needed)
                if node.predicates:
                    mask = self._mask(node.predicates, cols)
                    for f in node.projection:
                        parts[f].append(cols[f][mask])
                    n_out += int(mask.sum())
                else:
                    for f in node.projection:
                        parts[f].append(cols[f])
                    n_out += info.n_rows
        out_cols = {
            f: (np.concatenate(parts[f]) if parts[f]
                else np.empty(0, dtype=schema.field(f).dtype))
            for f in node.projection
        }
        return _Rows(out_cols, n_out)

    def _mask(self, preds, cols) -> np.ndarray:
        mask = operators.pred_mask(preds[0], cols, self.job.bundle)
        for p in preds[1:]:
            mask &= operators.pred_mask(p, cols, self.job.bundle)
        return mask

    # -- dag evaluation ----------------------------------------------------

    def eval(self, node):
        key = id(node)
        if key in self.memo:
            return self.memo[key]
        out = self._eval(node)
        if key not in self.memo:  # _eval records row nodes itself
            self.memo[key] = out
        return out

    def _eval(self, node):
        c = self.counters
        label = self.labels[id(node)]
        if isinstance(node, Scan):
            rows = self._scan(node)
            c.emit(label, rows.n)
            return rows
        if isinstance(node, Filter):
            rows = self.eval(node.input)
            mask = operators.pred_mask(node.predicate, rows.cols, self.job.bundle)
            out = rows.filtered(mask)
            c.emit(label, out.n)
            return out
        if isinstance(node, ValueSetSemiJoin):
            rows = self.eval(node.input)
            vs = self.job.bundle[node.valueset]
            mask, state = operators.semi_join_valueset(
                rows.cols[node.field], vs, node.mode
            )
            c.baseline_join_entries += state
            out = rows.filtered(mask)
            c.emit(label, out.n)
            return out
        if isinstance(node, AgeFilter):
            rows = self.eval(node.input)
            mask = operators.age_filter(
                rows.cols["birth_date"], node.lo, node.hi, node.as_of
            )
            out = rows.filtered(mask)
            c.emit(label, out.n)
            return out
        if isinstance(node, ExistsPerPatient):
            rows = self.eval(node.input)
            ids = np.unique(rows.cols["patient_id"])
            c.dedup_entries += len(ids)
            c.emit(label, len(ids))
            return ids
        if isinstance(node, UnionDistinctPatients):
            streams = [self.eval(s).cols["patient_id"] for s in node.streams]
            ids = operators.union_distinct_patients(streams)
            c.dedup_entries += len(ids)
            c.emit(label, len(ids))
            return ids
        if isinstance(node, CoverageGapAgg):
            w0, w1 = node.window
            if w1 - w0 + 1 <= node.max_gap_days:
                ids = self.roster()  # any coverage at all satisfies the rule
            else:
                rows = self.eval(node.input)
                ids = operators.coverage_pass_ids(
                    rows.cols["patient_id"],
                    rows.cols["coverage_start"],
                    rows.cols["coverage_end"],
                    node.window,
                    node.max_gap_days,
                )
            c.emit(label, len(ids))
            return ids
        if isinstance(node, AndPerPatient):
            sets = [self.eval(s) for s in node.sets]
            ids = reduce(lambda a, b: np.intersect1d(a, b, assume_unique=True), sets)
            c.emit(label, len(ids))
            return ids
        if isinstance(node, OrPerPatient):
            sets = [self.eval(s) for s in node.sets]
            ids = operators.union_distinct_patients(sets)
            c.emit(label, len(ids))
            return ids
        if isinstance(node, Report):
            num = self.eval(node.numerator)
            den = self.eval(node.denominator)
            exc = self.eval(node.exclusions)
            return num, den, exc
        raise TypeError(f"cannot execute {type(node).__name__}")

    def flags(self, num, den, exc) -> np.ndarray:
        ids = self.roster()
        out = np.empty(len(ids), dtype=FLAG_DTYPE)
        out["patient_id"] = ids
        out["in_denominator"] = np.isin(ids, den).astype("u1")
        out["in_numerator"] = np.isin(ids, num).astype("u1")
        out["excluded"] = np.isin(ids, exc).astype("u1")
        return out


def _uses_shared_bundle(plan: LogicalPlan) -> bool:
    for node in plan.nodes():
        if isinstance(node, ValueSetSemiJoin) and node.mode == "broadcast":
            return True
        if isinstance(node, Filter) and any(
            isinstance(p, CodeInValueSet) for p in walk_pred(node.predicate)
        ):
            return True
        if isinstance(node, Scan) and any(
            isinstance(p, CodeInValueSet)
            for pred in node.predicates for p in walk_pred(pred)
        ):
            return True
    return False


def execute(
    job: JobGraph, data: DatasetHandle, with_flags: bool = True
) -> tuple[MeasureReport, RunMetrics]:
    """Run the job; returns the merged report and exact counters."""
    if data.n_partitions != job.n_partitions:
        raise ValueError(
            f"job built for {job.n_partitions} partitions, "
            f"dataset has {data.n_partitions}"
        )
    labels = node_labels(job.plan)
    t0 = time.perf_counter()

    def run_slot(slot_plan):
        counters = _SlotCounters()
        results = []
        for p in slot_plan.partitions:
            ev = _PartitionEval(job, data, p, counters, labels)
            num, den, exc = ev.eval(job.plan.root)
            flags = ev.flags(num, den, exc) if with_flags else None
            results.append((p, len(num), len(den), len(exc), flags))
        return counters, results

    active = [sp for sp in job.slots if sp.partitions]
    workers = max(1, min(len(active), os.cpu_count() or 1))
    slot_out: dict[int, tuple] = {}
    if workers == 1:
        for sp in active:
            slot_out[sp.slot] = run_slot(sp)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {sp.slot: pool.submit(run_slot, sp) for sp in active}
            for slot, fut in futures.items():
                slot_out[slot] = fut.result()

    # merge in partition order regardless of scheduling
    by_partition: dict[int, tuple] = {}
    for _, results in slot_out.values():
        for item in results:
            by_partition[item[0]] = item
    num_total = den_total = exc_total = 0
    flag_parts = []
    for p in range(job.n_partitions):
        _, n_num, n_den, n_exc, flags = by_partition[p]
        num_total += n_num
        den_total += n_den
        exc_total += n_exc
        if flags is not None:
            flag_parts.append(flags)
    merged_flags = None
    if with_flags:
        merged_flags = (
            np.concatenate(flag_parts) if flag_parts
            else np.empty(0, dtype=FLAG_DTYPE)
        )
        merged_flags = merged_flags[np.argsort(merged_flags["patient_id"], kind="stable")]
    wall = max(time.perf_counter() - t0, 1e-9)

    report = MeasureReport(
        denominator_count=den_total,
        numerator_count=num_total,
        exclusion_count=exc_total,
        flags=merged_flags,
    )

    resources = values = chunks = dedup = 0
    rows_emitted: dict[str, int] = {}
    baseline_by_tm = [0] * job.cfg.taskmanagers
    for sp in job.slots:
        if sp.slot not in slot_out:
            continue
        counters, _ = slot_out[sp.slot]
        resources += counters.resources_scanned
        values += counters.values_read
        chunks += counters.chunks_skipped
        dedup += counters.dedup_entries
        for label, n in counters.rows_emitted.items():
            rows_emitted[label] = rows_emitted.get(label, 0) + n
        baseline_by_tm[sp.taskmanager] += counters.baseline_join_entries
    shared = job.bundle.total_member_count if _uses_shared_bundle(job.plan) else 0
    peak_by_tm = tuple(shared + b for b in baseline_by_tm)
    ram_bytes = job.cfg.ram_per_tm * (1024 ** 3)
    exceeded = any(p * STATE_ENTRY_BYTES > ram_bytes for p in peak_by_tm)

    metrics = RunMetrics(
        wall_time=wall,
        resources_scanned=resources,
        values_read=values,
        chunks_skipped=chunks,
        rows_emitted=rows_emitted,
        peak_join_state_entries=peak_by_tm,
        dedup_state_entries=dedup,
        ram_budget_exceeded=exceeded,
    )
    return report, metrics
