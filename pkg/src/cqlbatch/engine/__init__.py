from .cluster import ClusterConfig
from .job import JobGraph, SlotPlan, build_job
from .execute import FLAG_DTYPE, MeasureReport, RunMetrics, execute, node_labels
from .operators import (
    age_filter,
    coverage_gap_eval,
    coverage_pass_ids,
    semi_join_valueset,
    union_distinct_patients,
)

__all__ = [
    "ClusterConfig",
    "FLAG_DTYPE",
    "JobGraph",
    "MeasureReport",
    "RunMetrics",
    "SlotPlan",
    "age_filter",
    "build_job",
    "coverage_gap_eval",
    "coverage_pass_ids",
    "execute",
    "node_labels",
    "semi_join_valueset",
    "union_distinct_patients",
]
