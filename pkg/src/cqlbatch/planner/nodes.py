"""Logical plan nodes and scan predicates.

Plan nodes are immutable and compare by identity: the dag expresses sharing
through shared references, which is what the fusion pass creates and the
executor memoizes on.  Structural assertions in tests go through the stable
text form instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


# -- scan predicates --------------------------------------------------------

class CmpOp(Enum):
    EQ = "="
    LE = "<="
    GE = ">="
    BETWEEN = "between"


@dataclass(frozen=True)
class Pred:
    def fields(self) -> tuple[str, ...]:
        raise NotImplementedError


@dataclass(frozen=True)
class FieldCmp(Pred):
    field: str
    op: CmpOp
    # int for dates/integers, bytes for encoded strings, (lo, hi) for between
    value: object

    def fields(self) -> tuple[str, ...]:
        return (self.field,)


@dataclass(frozen=True)
class CodeInValueSet(Pred):
    field: str
    valueset: str

    def fields(self) -> tuple[str, ...]:
        return (self.field,)


@dataclass(frozen=True)
class AndPred(Pred):
    items: tuple[Pred, ...]

    def fields(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(f for p in self.items for f in p.fields()))


@dataclass(frozen=True)
class OrPred(Pred):
    items: tuple[Pred, ...]

    def fields(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(f for p in self.items for f in p.fields()))


def and_pred(items) -> Pred:
    items = tuple(items)
    return items[0] if len(items) == 1 else AndPred(items)


# -- plan nodes -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PlanNode:
    def inputs(self) -> tuple["PlanNode", ...]:
        return ()


@dataclass(frozen=True, eq=False)
class Scan(PlanNode):
    """Read one resource table: project columns, apply pushed predicates."""

    resource: str
    predicates: tuple[Pred, ...]
    projection: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class Filter(PlanNode):
    input: PlanNode
    predicate: Pred

    def inputs(self):
        return (self.input,)


@dataclass(frozen=True, eq=False)
class ValueSetSemiJoin(PlanNode):
    """Keep rows whose code is a member of the named valueset."""

    input: PlanNode
    valueset: str
    field: str = "code"
    mode: str = "broadcast"  # or "hash-join-baseline"

    def inputs(self):
        return (self.input,)


@dataclass(frozen=True, eq=False)
class AgeFilter(PlanNode):
    """Whole-year age at as_of within [lo, hi], closed on both ends."""

    input: PlanNode
    lo: int
    hi: int
    as_of: int  # epoch day

    def inputs(self):
        return (self.input,)


@dataclass(frozen=True, eq=False)
class CoverageGapAgg(PlanNode):
    """Patients whose coverage spans the window with only allowable gaps."""

    input: PlanNode
    window: tuple[int, int]
    max_gap_days: int

    def inputs(self):
        return (self.input,)


@dataclass(frozen=True, eq=False)
class ExistsPerPatient(PlanNode):
    """Row stream to distinct patient-id set."""

    input: PlanNode

    def inputs(self):
        return (self.input,)


@dataclass(frozen=True, eq=False)
class UnionDistinctPatients(PlanNode):
    """Distinct union of the patient ids of several row streams."""

    streams: tuple[PlanNode, ...]

    def inputs(self):
        return self.streams


@dataclass(frozen=True, eq=False)
class AndPerPatient(PlanNode):
    sets: tuple[PlanNode, ...]

    def inputs(self):
        return self.sets


@dataclass(frozen=True, eq=False)
class OrPerPatient(PlanNode):
    sets: tuple[PlanNode, ...]

    def inputs(self):
        return self.sets


@dataclass(frozen=True, eq=False)
class Report(PlanNode):
    numerator: PlanNode
    denominator: PlanNode
    exclusions: PlanNode

    def inputs(self):
        return (self.numerator, self.denominator, self.exclusions)


@dataclass(frozen=True)
class LogicalPlan:
    root: Report
    # pass bookkeeping, purely informational
    applied: tuple[str, ...] = field(default_factory=tuple)

    def nodes(self) -> list[PlanNode]:
        """Postorder over the dag; shared nodes appear exactly once."""
        seen: set[int] = set()
        out: list[PlanNode] = []

        def visit(node: PlanNode):
            if id(node) in seen:
                return
            seen.add(id(node))
            for child in node.inputs():
                visit(child)
            out.append(node)

        visit(self.root)
        return out

    def scans(self) -> list[Scan]:
        return [n for n in self.nodes() if isinstance(n, Scan)]

    def referenced_valuesets(self) -> tuple[str, ...]:
        names = []
        for node in self.nodes():
            if isinstance(node, ValueSetSemiJoin):
                names.append(node.valueset)
            elif isinstance(node, Filter):
                names.extend(
                    p.valueset for p in _walk_pred(node.predicate)
                    if isinstance(p, CodeInValueSet)
                )
            elif isinstance(node, Scan):
                for pred in node.predicates:
                    names.extend(
                        p.valueset for p in _walk_pred(pred)
                        if isinstance(p, CodeInValueSet)
                    )
        return tuple(sorted(set(names)))

    def with_root(self, root: Report, pass_name: str) -> "LogicalPlan":
        return LogicalPlan(root=root, applied=self.applied + (pass_name,))


def _walk_pred(pred: Pred):
    yield pred
    if isinstance(pred, (AndPred, OrPred)):
        for p in pred.items:
            yield from _walk_pred(p)


def walk_pred(pred: Pred):
    return _walk_pred(pred)
