"""Plan rewrites: predicate pushdown, shared-scan fusion, valueset binding.

Every pass is a pure dag-to-dag rewrite and each is individually sound: any
subset, in any order, leaves the report unchanged.  The canonical order is
pushdown, fusion, binding.
"""

from __future__ import annotations

from dataclasses import replace

from .. import dates
from ..catalog import MissingValueSetError
from ..tables import ALL_TABLES
from .nodes import (
    AgeFilter,
    CmpOp,
    CodeInValueSet,
    FieldCmp,
    Filter,
    LogicalPlan,
    OrPred,
    PlanNode,
    Pred,
    Report,
    Scan,
    ValueSetSemiJoin,
    and_pred,
    walk_pred,
)

_CHAIN_KINDS = (Filter, AgeFilter, ValueSetSemiJoin)


def _ref_counts(plan: LogicalPlan) -> dict[int, int]:
    counts: dict[int, int] = {}
    for node in plan.nodes():
        for child in node.inputs():
            counts[id(child)] = counts.get(id(child), 0) + 1
    return counts


def _pushable(pred: Pred) -> bool:
    return not any(isinstance(p, CodeInValueSet) for p in walk_pred(pred))


def push_predicates(plan: LogicalPlan) -> LogicalPlan:
    """Merge pure field predicates into their scans.

    Code-membership filters stay put (they become semi-joins), and an age
    filter contributes a conservative birth-date range while the exact
    AgeFilter node is retained.  Scans with several consumers are left alone:
    narrowing a shared scan for one consumer would starve the others.
    """
    refs = _ref_counts(plan)
    memo: dict[int, PlanNode] = {}

    def chain(node: PlanNode, pending: tuple[Pred, ...]) -> PlanNode:
        if isinstance(node, Filter):
            if _pushable(node.predicate):
                return chain(node.input, pending + (node.predicate,))
            return replace(node, input=chain(node.input, pending))
        if isinstance(node, AgeFilter):
            lo_day, hi_day = dates.birth_range_for_age(node.lo, node.hi, node.as_of)
            range_pred = FieldCmp("birth_date", CmpOp.BETWEEN, (lo_day, hi_day))
            return replace(node, input=chain(node.input, pending + (range_pred,)))
        if isinstance(node, ValueSetSemiJoin):
            return replace(node, input=chain(node.input, pending))
        if isinstance(node, Scan):
            if not pending:
                return visit(node)
            if refs.get(id(node), 0) > 1:
                return Filter(visit(node), and_pred(pending))
            return replace(node, predicates=node.predicates + pending)
        # chain bottoms out somewhere unexpected; keep predicates as a filter
        rebuilt = visit(node)
        return Filter(rebuilt, and_pred(pending)) if pending else rebuilt

    def visit(node: PlanNode) -> PlanNode:
        if id(node) in memo:
            return memo[id(node)]
        if isinstance(node, _CHAIN_KINDS):
            out = chain(node, ())
        elif isinstance(node, Scan):
            out = node
        else:
            kids = node.inputs()
            new_kids = tuple(visit(k) for k in kids)
            out = node if all(a is b for a, b in zip(kids, new_kids)) \
                else _rebuild(node, new_kids)
        memo[id(node)] = out
        return out

    return plan.with_root(visit(plan.root), "push_predicates")


def _rebuild(node: PlanNode, new_kids: tuple[PlanNode, ...]) -> PlanNode:
    names = [f for f in node.__dataclass_fields__]  # declaration order
    kid_fields = []
    for name in names:
        value = getattr(node, name)
        if isinstance(value, PlanNode):
            kid_fields.append((name, False))
        elif isinstance(value, tuple) and value and isinstance(value[0], PlanNode):
            kid_fields.append((name, True))
    updates = {}
    at = 0
    for name, plural in kid_fields:
        if plural:
            count = len(getattr(node, name))
            updates[name] = tuple(new_kids[at:at + count])
            at += count
        else:
            updates[name] = new_kids[at]
            at += 1
    return replace(node, **updates)


def fuse_shared_scans(plan: LogicalPlan) -> LogicalPlan:
    """One scan per resource: widen projection to the union, take the
    disjunction of the branch predicates, and re-filter per consumer."""
    groups: dict[str, list[Scan]] = {}
    for scan in plan.scans():
        groups.setdefault(scan.resource, []).append(scan)

    replacement: dict[int, PlanNode] = {}
    for resource, scans in groups.items():
        if len(scans) < 2:
            continue
        schema = ALL_TABLES[resource]
        wanted = {f for s in scans for f in s.projection}
        projection = tuple(f for f in schema.field_names() if f in wanted)
        if all(s.predicates for s in scans):
            branches = tuple(and_pred(s.predicates) for s in scans)
            fused_preds: tuple[Pred, ...] = (OrPred(branches),)
        else:
            # one branch reads everything anyway, so pushdown buys nothing
            fused_preds = ()
        fused = Scan(resource, fused_preds, projection)
        for s in scans:
            if s.predicates:
                replacement[id(s)] = Filter(fused, and_pred(s.predicates))
            else:
                replacement[id(s)] = fused

    if not replacement:
        return plan.with_root(plan.root, "fuse_shared_scans")

    memo: dict[int, PlanNode] = {}

    def visit(node: PlanNode) -> PlanNode:
        if id(node) in memo:
            return memo[id(node)]
        if id(node) in replacement:
            out = replacement[id(node)]
        else:
            kids = node.inputs()
            new_kids = tuple(visit(k) for k in kids)
            out = node if all(a is b for a, b in zip(kids, new_kids)) \
                else _rebuild(node, new_kids)
        memo[id(node)] = out
        return out

    return plan.with_root(visit(plan.root), "fuse_shared_scans")


def bind_valuesets(plan: LogicalPlan, registry, hypercache: bool) -> LogicalPlan:
    """Turn code-membership filters into semi-join nodes with a mode."""
    mode = "broadcast" if hypercache else "hash-join-baseline"
    for name in plan.referenced_valuesets():
        if name not in registry:
            raise MissingValueSetError(name)
    memo: dict[int, PlanNode] = {}

    def visit(node: PlanNode) -> PlanNode:
        if id(node) in memo:
            return memo[id(node)]
        kids = node.inputs()
        new_kids = tuple(visit(k) for k in kids)
        if isinstance(node, Filter) and isinstance(node.predicate, CodeInValueSet):
            out = ValueSetSemiJoin(
                input=new_kids[0],
                valueset=node.predicate.valueset,
                field=node.predicate.field,
                mode=mode,
            )
        elif all(a is b for a, b in zip(kids, new_kids)):
            out = node
        else:
            out = _rebuild(node, new_kids)
        memo[id(node)] = out
        return out

    return plan.with_root(visit(plan.root), f"bind_valuesets[{mode}]")


def optimize(plan: LogicalPlan, registry, hypercache: bool = True) -> LogicalPlan:
    """Canonical pass order: pushdown, fusion, binding."""
    plan = push_predicates(plan)
    plan = fuse_shared_scans(plan)
    return bind_valuesets(plan, registry, hypercache)
