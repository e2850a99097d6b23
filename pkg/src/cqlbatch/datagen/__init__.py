from .plan import (
    DEFAULT_MEANS,
    GenerationPlan,
    TableMeans,
    derive_generation_plan,
    expected_match_stats,
)
from .generate import (
    GeneratorContext,
    TruthManifest,
    TruthRecord,
    default_context,
    default_partitions,
    generate_patient,
    generate_workload,
    load_truth,
)

__all__ = [
    "DEFAULT_MEANS",
    "GenerationPlan",
    "GeneratorContext",
    "TableMeans",
    "TruthManifest",
    "TruthRecord",
    "default_context",
    "default_partitions",
    "derive_generation_plan",
    "expected_match_stats",
    "generate_patient",
    "generate_workload",
    "load_truth",
]
