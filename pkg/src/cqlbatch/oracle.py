"""Reference evaluator: interpret the measure per patient, naively.

This is the sequential interpreter the batch engine is measured against.
It walks the resolved syntax tree directly with nested loops over one
patient's rows at a time, no plans, no vectorization, no shared state.
Coverage continuity is checked against a literal day array rather than the
engine's interval sweep, so agreement between the two is evidence of
correctness, not the same algorithm twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dates
from .catalog import ValueSetBundle
from .datagen import TruthRecord
from .engine.execute import FLAG_DTYPE, MeasureReport
from .frontend.ast import (
    AgeInYearsAt,
    And,
    Compare,
    CompareOp,
    CoverageContinuity,
    DateLit,
    DateRef,
    Exists,
    Expr,
    IntervalLit,
    IntLit,
    MeasureAst,
    Or,
    PropertyRef,
    Retrieve,
    StringLit,
    Where,
)
from .storage import read_row_file
from .storage.colfile import read_col_file
from .storage.dataset import DatasetHandle
from .tables import PROPERTY_MAP, RESOURCE_TO_TABLE

DEFAULT_MAX_GAP_DAYS = 45


@dataclass(frozen=True)
class PatientBundle:
    """One patient's complete record set, one array per table."""

    patient_id: int
    tables: dict[str, np.ndarray]

    def __post_init__(self):
        for name, rows in self.tables.items():
            if len(rows) and not (rows["patient_id"] == self.patient_id).all():
                raise ValueError(f"{name} rows belong to another patient")


class OracleError(Exception):
    pass


class _Interp:
    def __init__(self, bundle: PatientBundle, ast: MeasureAst,
                 registry: ValueSetBundle, max_gap_days: int):
        self.bundle = bundle
        self.params = ast.parameters
        self.registry = registry
        self.max_gap_days = max_gap_days

    def window(self, name: str) -> tuple[int, int]:
        value = self.params.get(name)
        if value is None or value.interval is None:
            raise OracleError(f"parameter {name!r} is not a bound interval")
        return value.interval

    def day_of(self, expr: Expr) -> int:
        if isinstance(expr, DateLit):
            return expr.day
        if isinstance(expr, DateRef):
            lo, hi = self.window(expr.param)
            return lo if expr.which == "start" else hi
        raise OracleError(f"not a date: {expr!r}")

    def _literal(self, expr: Expr):
        if isinstance(expr, StringLit):
            return expr.value.encode("utf-8")
        if isinstance(expr, IntLit):
            return expr.value
        if isinstance(expr, DateLit):
            return expr.day
        raise OracleError(f"not a literal: {expr!r}")

    # -- row-level where clause --------------------------------------------

    def _row_value(self, resource: str, row, path: str):
        fields = PROPERTY_MAP.get(resource, {}).get(path)
        if fields is None:
            raise OracleError(f"unknown property {resource}.{path}")
        if len(fields) == 1:
            value = row[fields[0]]
            return value.item() if hasattr(value, "item") else value
        return int(row[fields[0]]), int(row[fields[1]])

    def _row_pred(self, resource: str, alias: str, expr: Expr, row) -> bool:
        if isinstance(expr, And):
            return all(self._row_pred(resource, alias, e, row) for e in expr.items)
        if isinstance(expr, Or):
            return any(self._row_pred(resource, alias, e, row) for e in expr.items)
        if not isinstance(expr, Compare):
            raise OracleError(f"unsupported where clause: {expr!r}")
        lhs = expr.lhs
        if not isinstance(lhs, PropertyRef) or lhs.alias != alias:
            raise OracleError(f"where clause must test {alias!r}: {expr!r}")
        value = self._row_value(resource, row, lhs.path)
        if expr.op == CompareOp.EQ:
            return value == self._literal(expr.rhs)
        if expr.op == CompareOp.LE:
            return value <= self._literal(expr.rhs)
        if expr.op == CompareOp.GE:
            return value >= self._literal(expr.rhs)
        if expr.op == CompareOp.IN_INTERVAL:
            if not isinstance(expr.rhs, IntervalLit):
                raise OracleError(f"bad interval: {expr!r}")
            return expr.rhs.lo <= value <= expr.rhs.hi
        if expr.op in (CompareOp.ENDS_DURING, CompareOp.DURING):
            w0, w1 = self.window(expr.rhs.name)
            if expr.op == CompareOp.ENDS_DURING:
                end = value[1] if isinstance(value, tuple) else value
                return w0 <= end <= w1
            if isinstance(value, tuple):
                start, end = value
                return start >= w0 and end <= w1
            return w0 <= value <= w1
        raise OracleError(f"unsupported comparison: {expr!r}")

    # -- query evaluation --------------------------------------------------

    def _matches(self, query: Expr) -> list:
        if isinstance(query, Where):
            retrieve, predicate = query.source, query.predicate
        elif isinstance(query, Retrieve):
            retrieve, predicate = query, None
        else:
            raise OracleError(f"not a query: {query!r}")
        if not isinstance(retrieve, Retrieve):
            raise OracleError(f"query source must be a retrieve: {retrieve!r}")
        vs = self.registry[retrieve.valueset]
        table = RESOURCE_TO_TABLE[retrieve.resource]
        out = []
        for row in self.bundle.tables.get(table, ()):
            encoded = bytes(row["code"])
            system, _, code = encoded.decode("utf-8").partition("|")
            if not vs.contains(system, code):
                continue
            if predicate is not None and not self._row_pred(
                retrieve.resource, retrieve.alias, predicate, row
            ):
                continue
            out.append(row)
        return out

    # -- patient-level expressions -----------------------------------------

    def _patient_row(self):
        rows = self.bundle.tables.get("patient", ())
        if len(rows) != 1:
            raise OracleError(
                f"patient {self.bundle.patient_id} has {len(rows)} patient rows"
            )
        return rows[0]

    def _coverage_ok(self, window_name: str) -> bool:
        w0, w1 = self.window(window_name)
        n_days = w1 - w0 + 1
        if n_days <= self.max_gap_days:
            return True
        covered = np.zeros(n_days, dtype=bool)
        for row in self.bundle.tables.get("coverage", ()):
            a = max(int(row["coverage_start"]), w0)
            b = min(int(row["coverage_end"]), w1)
            if b >= a:
                covered[a - w0:b - w0 + 1] = True
        run = longest = 0
        for day_covered in covered:
            run = 0 if day_covered else run + 1
            longest = max(longest, run)
        return longest <= self.max_gap_days

    def eval(self, expr: Expr) -> bool:
        if isinstance(expr, Exists):
            return len(self._matches(expr.source)) > 0
        if isinstance(expr, And):
            return all(self.eval(e) for e in expr.items)
        if isinstance(expr, Or):
            return any(self.eval(e) for e in expr.items)
        if isinstance(expr, CoverageContinuity):
            return self._coverage_ok(expr.window)
        if isinstance(expr, Compare):
            if isinstance(expr.lhs, AgeInYearsAt):
                birth = int(self._patient_row()["birth_date"])
                age = dates.age_in_years_at(birth, self.day_of(expr.lhs.at))
                if expr.op == CompareOp.IN_INTERVAL and isinstance(expr.rhs, IntervalLit):
                    return expr.rhs.lo <= age <= expr.rhs.hi
                raise OracleError(f"unsupported age comparison: {expr!r}")
            if isinstance(expr.lhs, PropertyRef) and expr.lhs.alias == "Patient":
                return self._row_pred("Patient", "Patient", expr, self._patient_row())
        raise OracleError(f"cannot interpret: {expr!r}")


def evaluate_patient(
    bundle: PatientBundle,
    ast: MeasureAst,
    registry: ValueSetBundle,
    max_gap_days: int = DEFAULT_MAX_GAP_DAYS,
) -> TruthRecord:
    interp = _Interp(bundle, ast, registry, max_gap_days)
    return TruthRecord(
        patient_id=bundle.patient_id,
        in_denominator=interp.eval(ast.denominator),
        in_numerator=interp.eval(ast.numerator),
        excluded=interp.eval(ast.exclusions),
    )


def _read_partition(data: DatasetHandle, table: str, partition: int) -> np.ndarray:
    path = data.partition_path(table, partition)
    schema = data.schema(table)
    if data.fmt == "row":
        return read_row_file(path, schema)
    return read_col_file(path, schema)


def iter_bundles(data: DatasetHandle):
    """Yield every patient's bundle, in ascending patient-id order per
    partition."""
    for partition in range(data.n_partitions):
        tables = {
            name: _read_partition(data, name, partition)
            for name in data.table_rows
        }
        sorted_tables = {}
        for name, rows in tables.items():
            order = np.argsort(rows["patient_id"], kind="stable")
            sorted_tables[name] = rows[order]
        roster = np.sort(tables["patient"]["patient_id"])
        for pid in roster:
            bundle_tables = {}
            for name, rows in sorted_tables.items():
                lo = np.searchsorted(rows["patient_id"], pid, side="left")
                hi = np.searchsorted(rows["patient_id"], pid, side="right")
                bundle_tables[name] = rows[lo:hi]
            yield PatientBundle(patient_id=int(pid), tables=bundle_tables)


def evaluate_dataset(
    data: DatasetHandle,
    ast: MeasureAst,
    registry: ValueSetBundle,
    max_gap_days: int = DEFAULT_MAX_GAP_DAYS,
) -> MeasureReport:
    """Sequential fold of evaluate_patient over the whole dataset."""
    records = []
    for bundle in iter_bundles(data):
        records.append(evaluate_patient(bundle, ast, registry, max_gap_days))
    flags = np.empty(len(records), dtype=FLAG_DTYPE)
    for i, rec in enumerate(records):
        flags[i] = (rec.patient_id, rec.in_denominator, rec.in_numerator, rec.excluded)
    flags = flags[np.argsort(flags["patient_id"], kind="stable")]
    return MeasureReport(
        denominator_count=int(flags["in_denominator"].sum()),
        numerator_count=int(flags["in_numerator"].sum()),
        exclusion_count=int(flags["excluded"].sum()),
        flags=flags,
    )
