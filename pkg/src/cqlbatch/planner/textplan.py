"""Stable one-node-per-line text rendering of logical plans.

Golden-file tests and the CLI's --emit output both rely on this format, so
it must stay deterministic: postorder numbering, shared nodes printed once
and referenced by #id.
"""

from __future__ import annotations

from .. import dates
from .nodes import (
    AgeFilter,
    AndPerPatient,
    AndPred,
    CodeInValueSet,
    CoverageGapAgg,
    ExistsPerPatient,
    FieldCmp,
    Filter,
    LogicalPlan,
    OrPerPatient,
    OrPred,
    Pred,
    Report,
    Scan,
    UnionDistinctPatients,
    ValueSetSemiJoin,
)


def pred_text(pred: Pred) -> str:
    if isinstance(pred, FieldCmp):
        if pred.op.value == "between":
            lo, hi = pred.value
            return f"{pred.field} in [{lo}..{hi}]"
        value = pred.value
        if isinstance(value, bytes):
            value = f"'{value.decode('utf-8')}'"
        return f"{pred.field} {pred.op.value} {value}"
    if isinstance(pred, CodeInValueSet):
        return f'{pred.field} in vs "{pred.valueset}"'
    if isinstance(pred, AndPred):
        return "(" + " & ".join(pred_text(p) for p in pred.items) + ")"
    if isinstance(pred, OrPred):
        return "(" + " | ".join(pred_text(p) for p in pred.items) + ")"
    raise TypeError(f"cannot print {type(pred).__name__}")


def plan_text(plan: LogicalPlan) -> str:
    order = plan.nodes()
    ids = {id(node): i + 1 for i, node in enumerate(order)}

    def ref(node) -> str:
        return f"#{ids[id(node)]}"

    lines = ["plan applied=" + ",".join(plan.applied)]
    for node in order:
        tag = f"#{ids[id(node)]}"
        if isinstance(node, Scan):
            preds = ", ".join(pred_text(p) for p in node.predicates)
            proj = ", ".join(node.projection)
            lines.append(f"{tag} Scan[{node.resource}] proj=({proj}) preds=[{preds}]")
        elif isinstance(node, Filter):
            lines.append(f"{tag} Filter pred={pred_text(node.predicate)} input={ref(node.input)}")
        elif isinstance(node, ValueSetSemiJoin):
            lines.append(
                f'{tag} ValueSetSemiJoin vs="{node.valueset}" field={node.field} '
                f"mode={node.mode} input={ref(node.input)}"
            )
        elif isinstance(node, AgeFilter):
            lines.append(
                f"{tag} AgeFilter [{node.lo}..{node.hi}] "
                f"as_of={dates.to_iso(node.as_of)} input={ref(node.input)}"
            )
        elif isinstance(node, CoverageGapAgg):
            w0, w1 = node.window
            lines.append(
                f"{tag} CoverageGapAgg window=[{dates.to_iso(w0)}..{dates.to_iso(w1)}] "
                f"max_gap={node.max_gap_days} input={ref(node.input)}"
            )
        elif isinstance(node, ExistsPerPatient):
            lines.append(f"{tag} ExistsPerPatient input={ref(node.input)}")
        elif isinstance(node, UnionDistinctPatients):
            refs = ", ".join(ref(s) for s in node.streams)
            lines.append(f"{tag} UnionDistinctPatients inputs=({refs})")
        elif isinstance(node, AndPerPatient):
            refs = ", ".join(ref(s) for s in node.sets)
            lines.append(f"{tag} AndPerPatient inputs=({refs})")
        elif isinstance(node, OrPerPatient):
            refs = ", ".join(ref(s) for s in node.sets)
            lines.append(f"{tag} OrPerPatient inputs=({refs})")
        elif isinstance(node, Report):
            lines.append(
                f"{tag} Report numerator={ref(node.numerator)} "
                f"denominator={ref(node.denominator)} exclusions={ref(node.exclusions)}"
            )
        else:
            raise TypeError(f"cannot print {type(node).__name__}")
    return "\n".join(lines) + "\n"
