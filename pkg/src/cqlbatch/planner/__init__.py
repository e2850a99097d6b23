from .nodes import (
    AgeFilter,
    AndPerPatient,
    AndPred,
    CmpOp,
    CodeInValueSet,
    CoverageGapAgg,
    ExistsPerPatient,
    FieldCmp,
    Filter,
    LogicalPlan,
    OrPerPatient,
    OrPred,
    PlanNode,
    Pred,
    Report,
    Scan,
    UnionDistinctPatients,
    ValueSetSemiJoin,
    walk_pred,
)
from .lower import lower
from .passes import bind_valuesets, fuse_shared_scans, push_predicates, optimize
from .indexing import IndexSchema, index_schema
from .textplan import plan_text

__all__ = [
    "AgeFilter",
    "AndPerPatient",
    "AndPred",
    "CmpOp",
    "CodeInValueSet",
    "CoverageGapAgg",
    "ExistsPerPatient",
    "FieldCmp",
    "Filter",
    "IndexSchema",
    "LogicalPlan",
    "OrPerPatient",
    "OrPred",
    "PlanNode",
    "Pred",
    "Report",
    "Scan",
    "UnionDistinctPatients",
    "ValueSetSemiJoin",
    "bind_valuesets",
    "fuse_shared_scans",
    "index_schema",
    "lower",
    "optimize",
    "plan_text",
    "push_predicates",
    "walk_pred",
]
