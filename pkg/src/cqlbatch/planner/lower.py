"""Lower a resolved measure to the naive sequential plan.

The naive plan evaluates defines exactly as written: one Scan per retrieve
occurrence, all predicates in Filter nodes above the scans, code matching as
an unbound membership filter.  Optimization passes rewrite from there.
"""

from __future__ import annotations

from ..frontend.ast import (
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
    ParamRef,
    PropertyRef,
    Retrieve,
    StringLit,
    Where,
)
from ..tables import ALL_TABLES, PROPERTY_MAP, RESOURCE_TO_TABLE, FieldType
from .nodes import (
    AgeFilter,
    AndPerPatient,
    CmpOp,
    CodeInValueSet,
    CoverageGapAgg,
    ExistsPerPatient,
    FieldCmp,
    Filter,
    LogicalPlan,
    OrPerPatient,
    Pred,
    Report,
    Scan,
    UnionDistinctPatients,
    and_pred,
)

DEFAULT_MAX_GAP_DAYS = 45


class LowerError(Exception):
    pass


class _Ctx:
    def __init__(self, ast: MeasureAst, max_gap_days: int):
        self.params = ast.parameters
        self.max_gap_days = max_gap_days

    def window(self, name: str) -> tuple[int, int]:
        value = self.params.get(name)
        if value is None or value.interval is None:
            raise LowerError(f"parameter {name!r} is not a bound interval")
        return value.interval

    def day_of(self, expr: Expr) -> int:
        if isinstance(expr, DateLit):
            return expr.day
        if isinstance(expr, DateRef):
            lo, hi = self.window(expr.param)
            return lo if expr.which == "start" else hi
        raise LowerError(f"not a date expression: {expr!r}")


def _encode_literal(resource: str, field_name: str, lit: Expr) -> object:
    table = ALL_TABLES[RESOURCE_TO_TABLE[resource]]
    ftype = table.field(field_name).ftype
    if isinstance(lit, StringLit):
        if ftype not in (FieldType.STRING, FieldType.CODE):
            raise LowerError(f"string literal against {ftype.value} field {field_name!r}")
        return lit.value.encode("utf-8")
    if isinstance(lit, IntLit):
        return lit.value
    if isinstance(lit, DateLit):
        return lit.day
    raise LowerError(f"unsupported literal: {lit!r}")


def _property_fields(resource: str, path: str) -> tuple[str, ...]:
    props = PROPERTY_MAP.get(resource, {})
    if path not in props:
        raise LowerError(f"unknown property {resource}.{path}")
    return props[path]


def _compile_where(resource: str, alias: str, expr: Expr, ctx: _Ctx) -> Pred:
    """Row-level predicate over one retrieve's fields."""
    if isinstance(expr, And):
        return and_pred(_compile_where(resource, alias, e, ctx) for e in expr.items)
    if isinstance(expr, Or):
        from .nodes import OrPred
        return OrPred(tuple(_compile_where(resource, alias, e, ctx) for e in expr.items))
    if not isinstance(expr, Compare):
        raise LowerError(f"unsupported where clause: {expr!r}")
    lhs, rhs = expr.lhs, expr.rhs
    if not isinstance(lhs, PropertyRef) or lhs.alias != alias:
        raise LowerError(f"where clause must test {alias!r} properties: {expr!r}")
    fields = _property_fields(resource, lhs.path)
    if expr.op in (CompareOp.EQ, CompareOp.LE, CompareOp.GE):
        if len(fields) != 1:
            raise LowerError(f"{lhs.path!r} is an interval, not a scalar")
        op = {CompareOp.EQ: CmpOp.EQ, CompareOp.LE: CmpOp.LE, CompareOp.GE: CmpOp.GE}[expr.op]
        return FieldCmp(fields[0], op, _encode_literal(resource, fields[0], rhs))
    if expr.op == CompareOp.IN_INTERVAL:
        if len(fields) != 1 or not isinstance(rhs, IntervalLit):
            raise LowerError(f"bad interval membership: {expr!r}")
        return FieldCmp(fields[0], CmpOp.BETWEEN, (rhs.lo, rhs.hi))
    if expr.op in (CompareOp.ENDS_DURING, CompareOp.DURING):
        if not isinstance(rhs, ParamRef):
            raise LowerError(f"window must be a named parameter: {expr!r}")
        w0, w1 = ctx.window(rhs.name)
        if expr.op == CompareOp.ENDS_DURING:
            end_field = fields[-1]
            return FieldCmp(end_field, CmpOp.BETWEEN, (w0, w1))
        if len(fields) == 1:
            return FieldCmp(fields[0], CmpOp.BETWEEN, (w0, w1))
        start_field, end_field = fields
        return and_pred([
            FieldCmp(start_field, CmpOp.GE, w0),
            FieldCmp(end_field, CmpOp.LE, w1),
        ])
    raise LowerError(f"unsupported comparison: {expr!r}")


def _ordered_projection(table_name: str, wanted) -> tuple[str, ...]:
    schema = ALL_TABLES[table_name]
    wanted = set(wanted) | {"patient_id"}
    return tuple(f for f in schema.field_names() if f in wanted)


def _lower_query(expr: Expr, ctx: _Ctx):
    """Retrieve or Where -> row-stream chain ending above the scan."""
    if isinstance(expr, Where):
        retrieve = expr.source
        predicate_src = expr.predicate
    elif isinstance(expr, Retrieve):
        retrieve = expr
        predicate_src = None
    else:
        raise LowerError(f"not a query source: {expr!r}")
    if not isinstance(retrieve, Retrieve):
        raise LowerError(f"query source must be a retrieve: {retrieve!r}")
    table_name = RESOURCE_TO_TABLE[retrieve.resource]
    table = ALL_TABLES[table_name]
    if "code" not in table.field_names():
        raise LowerError(f"resource {retrieve.resource!r} has no code field to retrieve by")
    pred = None
    wanted = {"code"}
    if predicate_src is not None:
        pred = _compile_where(retrieve.resource, retrieve.alias, predicate_src, ctx)
        wanted.update(pred.fields())
    scan = Scan(table_name, (), _ordered_projection(table_name, wanted))
    node = Filter(scan, CodeInValueSet("code", retrieve.valueset))
    if pred is not None:
        node = Filter(node, pred)
    return node


def _is_patient_atom(expr: Expr) -> bool:
    if not isinstance(expr, Compare):
        return False
    if isinstance(expr.lhs, AgeInYearsAt):
        return True
    return isinstance(expr.lhs, PropertyRef) and expr.lhs.alias == "Patient"


def _lower_patient_chain(atoms: list[Compare], ctx: _Ctx):
    preds: list[Pred] = []
    ages: list[tuple[int, int, int]] = []
    wanted: set[str] = set()
    for atom in atoms:
        if isinstance(atom.lhs, AgeInYearsAt):
            if atom.op != CompareOp.IN_INTERVAL or not isinstance(atom.rhs, IntervalLit):
                raise LowerError(f"age must be tested with interval membership: {atom!r}")
            ages.append((atom.rhs.lo, atom.rhs.hi, ctx.day_of(atom.lhs.at)))
            wanted.add("birth_date")
        else:
            fields = _property_fields("Patient", atom.lhs.path)
            if atom.op not in (CompareOp.EQ, CompareOp.LE, CompareOp.GE):
                raise LowerError(f"unsupported patient comparison: {atom!r}")
            op = {CompareOp.EQ: CmpOp.EQ, CompareOp.LE: CmpOp.LE, CompareOp.GE: CmpOp.GE}[atom.op]
            preds.append(FieldCmp(fields[0], op, _encode_literal("Patient", fields[0], atom.rhs)))
            wanted.update(fields)
    node = Scan("patient", (), _ordered_projection("patient", wanted))
    if preds:
        node = Filter(node, and_pred(preds))
    for lo, hi, as_of in ages:
        node = AgeFilter(node, lo, hi, as_of)
    return ExistsPerPatient(node)


def _lower_set_expr(expr: Expr, ctx: _Ctx):
    """Any define-level expression -> patient-id-set producing node."""
    if isinstance(expr, Exists):
        return ExistsPerPatient(_lower_query(expr.source, ctx))
    if isinstance(expr, CoverageContinuity):
        window = ctx.window(expr.window)
        scan = Scan("coverage", (), _ordered_projection("coverage", {"coverage_start", "coverage_end"}))
        return CoverageGapAgg(scan, window, ctx.max_gap_days)
    if isinstance(expr, And):
        atoms = [e for e in expr.items if _is_patient_atom(e)]
        others = [e for e in expr.items if not _is_patient_atom(e)]
        parts = []
        if atoms:
            parts.append(_lower_patient_chain(atoms, ctx))
        parts.extend(_lower_set_expr(e, ctx) for e in others)
        return parts[0] if len(parts) == 1 else AndPerPatient(tuple(parts))
    if isinstance(expr, Or):
        if all(isinstance(e, Exists) for e in expr.items):
            streams = tuple(_lower_query(e.source, ctx) for e in expr.items)
            return UnionDistinctPatients(streams)
        return OrPerPatient(tuple(_lower_set_expr(e, ctx) for e in expr.items))
    if _is_patient_atom(expr):
        return _lower_patient_chain([expr], ctx)
    raise LowerError(f"cannot lower define body: {expr!r}")


def lower(ast: MeasureAst, max_gap_days: int = DEFAULT_MAX_GAP_DAYS) -> LogicalPlan:
    """Naive plan: defines as written, one scan per retrieve occurrence."""
    ctx = _Ctx(ast, max_gap_days)
    report = Report(
        numerator=_lower_set_expr(ast.numerator, ctx),
        denominator=_lower_set_expr(ast.denominator, ctx),
        exclusions=_lower_set_expr(ast.exclusions, ctx),
    )
    return LogicalPlan(root=report, applied=("lower",))
