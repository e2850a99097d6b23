"""Referenced-field extraction: which columns a plan actually touches.

The index schema is what the data layer needs to satisfy a measure; fields a
measure never references are absent, and patient_id is always present for
every referenced resource.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..tables import ALL_TABLES, PROPERTY_MAP, RESOURCE_TO_TABLE, FieldType
from .nodes import (
    AgeFilter,
    CoverageGapAgg,
    Filter,
    LogicalPlan,
    PlanNode,
    Scan,
    ValueSetSemiJoin,
)

_TABLE_TO_RESOURCE = {v: k for k, v in RESOURCE_TO_TABLE.items()}

_INTERVAL_FIELDS = {
    (resource, field)
    for resource, props in PROPERTY_MAP.items()
    for fields in props.values()
    if len(fields) == 2
    for field in fields
}


def _semantic_type(resource: str, field: str) -> str:
    if (resource, field) in _INTERVAL_FIELDS:
        return "interval"
    ftype = ALL_TABLES[RESOURCE_TO_TABLE[resource]].field(field).ftype
    return "integer" if ftype == FieldType.INT else ftype.value


@dataclass(frozen=True)
class IndexSchema:
    """resource kind -> ordered (field, semantic type) pairs"""

    resources: dict[str, tuple[tuple[str, str], ...]]

    def fields_of(self, resource: str) -> tuple[str, ...]:
        return tuple(name for name, _ in self.resources.get(resource, ()))

    def to_doc(self) -> dict:
        return {
            resource: [{"field": f, "type": t} for f, t in pairs]
            for resource, pairs in sorted(self.resources.items())
        }


def index_schema(plan: LogicalPlan) -> IndexSchema:
    """Exactly the fields read by any scan, predicate, or chain node."""
    wanted: dict[str, set[str]] = {}
    resource_memo: dict[int, str | None] = {}

    def resource_of(node: PlanNode) -> str | None:
        if id(node) in resource_memo:
            return resource_memo[id(node)]
        if isinstance(node, Scan):
            out = node.resource
        elif isinstance(node, (Filter, AgeFilter, ValueSetSemiJoin, CoverageGapAgg)):
            out = resource_of(node.inputs()[0])
        else:
            out = None
        resource_memo[id(node)] = out
        return out

    def note(table: str | None, fields) -> None:
        if table is not None:
            wanted.setdefault(table, set()).update(fields)

    for node in plan.nodes():
        if isinstance(node, Scan):
            note(node.resource, node.projection)
            for pred in node.predicates:
                note(node.resource, pred.fields())
        elif isinstance(node, Filter):
            note(resource_of(node), node.predicate.fields())
        elif isinstance(node, ValueSetSemiJoin):
            note(resource_of(node), (node.field,))
        elif isinstance(node, AgeFilter):
            note(resource_of(node), ("birth_date",))
        elif isinstance(node, CoverageGapAgg):
            note(resource_of(node), ("coverage_start", "coverage_end"))

    resources: dict[str, tuple[tuple[str, str], ...]] = {}
    for table, fields in wanted.items():
        fields = fields | {"patient_id"}
        schema = ALL_TABLES[table]
        kind = _TABLE_TO_RESOURCE[table]
        ordered = tuple(
            (f, _semantic_type(kind, f))
            for f in schema.field_names()
            if f in fields
        )
        resources[kind] = ordered
    return IndexSchema(resources=resources)
