"""Selectivity arithmetic: from a target match rate to flag probabilities.

The denominator needs both the Patient row and the Coverage covering to be
valid, so its rate r is split as √r · √r across the two tables.  Numerator
and exclusion hinge on a single table each, so their flags use r directly.
Expected row volume per patient follows the workload table means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class TableMeans:
    condition: float = 2.0
    encounter: float = 3.0
    medication: float = 5.0
    procedure: float = 1.0
    observation: float = 5.0
    coverage: float = 5.5

    def __post_init__(self):
        for name, mean in self.by_table().items():
            if mean <= 0:
                raise ValueError(f"mean for {name} must be positive")

    def by_table(self) -> dict[str, float]:
        return {
            "condition": self.condition,
            "encounter": self.encounter,
            "medication": self.medication,
            "procedure": self.procedure,
            "observation": self.observation,
            "coverage": self.coverage,
        }

    def rows_per_patient(self) -> float:
        """Expected total rows per patient, the single Patient row included."""
        return 1.0 + sum(self.by_table().values())


DEFAULT_MEANS = TableMeans()


@dataclass(frozen=True)
class GenerationPlan:
    r: float
    p_patient_valid: float
    p_coverage_valid: float
    p_numerator_flag: float
    p_exclusion_flag: float
    means: TableMeans

    @property
    def rows_per_patient(self) -> float:
        return self.means.rows_per_patient()

    @property
    def expected_valid_rows_per_patient(self) -> float:
        return self.r * self.rows_per_patient

    def expected_probability(self, flag: str) -> float:
        return {
            "denominator": self.p_patient_valid * self.p_coverage_valid,
            "numerator": self.p_numerator_flag,
            "exclusion": self.p_exclusion_flag,
            "patient_valid": self.p_patient_valid,
            "coverage_valid": self.p_coverage_valid,
        }[flag]


def derive_generation_plan(r: float, means: TableMeans = DEFAULT_MEANS) -> GenerationPlan:
    if not 0.0 < r < 1.0:
        raise ValueError(f"match rate must be in (0, 1), got {r}")
    root = math.sqrt(r)
    return GenerationPlan(
        r=r,
        p_patient_valid=root,
        p_coverage_valid=root,
        p_numerator_flag=r,
        p_exclusion_flag=r,
        means=means,
    )


def expected_match_stats(plan: GenerationPlan, n_patients: int) -> dict[str, dict[str, float]]:
    """Binomial mean and 4-sigma band per flag, for acceptance checks."""
    out: dict[str, dict[str, float]] = {}
    for flag in ("denominator", "numerator", "exclusion", "patient_valid", "coverage_valid"):
        p = plan.expected_probability(flag)
        mean = n_patients * p
        sigma = math.sqrt(n_patients * p * (1.0 - p))
        out[flag] = {
            "p": p,
            "mean": mean,
            "sigma": sigma,
            "lo4": mean - 4.0 * sigma,
            "hi4": mean + 4.0 * sigma,
        }
    return out
