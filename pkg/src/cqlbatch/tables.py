"""Resource table schemas and the shared patient-id partitioner.

Every dataset carries the same seven tables.  Each field has a semantic type
that fixes both its on-disk width and how scan predicates and zone maps treat
it.  Code values are stored as a single "system|code" string; systems and
codes never contain the separator.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np


class FieldType(Enum):
    INT = "int"
    DATE = "date"
    STRING = "string"
    CODE = "code"


# On-disk widths (bytes) per field type; int/date are little-endian int64.
CODE_WIDTH = 24
STRING_WIDTH = 16


@dataclass(frozen=True)
class Field:
    name: str
    ftype: FieldType

    @property
    def dtype(self) -> np.dtype:
        if self.ftype in (FieldType.INT, FieldType.DATE):
            return np.dtype("<i8")
        if self.ftype == FieldType.CODE:
            return np.dtype(f"S{CODE_WIDTH}")
        return np.dtype(f"S{STRING_WIDTH}")


@dataclass(frozen=True)
class TableSchema:
    name: str
    fields: tuple[Field, ...]
    # Field the columnar writer clusters partition files by.
    cluster_key: str

    def field(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(f"{self.name} has no field {name!r}")

    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def numpy_dtype(self, names: tuple[str, ...] | None = None) -> np.dtype:
        fields = self.fields if names is None else tuple(self.field(n) for n in names)
        return np.dtype([(f.name, f.dtype) for f in fields])

    def schema_hash(self) -> int:
        """Stable 64-bit fingerprint of name, field order, and field types."""
        text = ";".join([self.name] + [f"{f.name}:{f.ftype.value}" for f in self.fields])
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")


def _t(name: str, cluster_key: str, *fields: tuple[str, FieldType]) -> TableSchema:
    return TableSchema(name, tuple(Field(n, t) for n, t in fields), cluster_key)


PATIENT = _t(
    "patient", "birth_date",
    ("patient_id", FieldType.INT),
    ("birth_date", FieldType.DATE),
    ("gender", FieldType.STRING),
    ("given_name", FieldType.STRING),
    ("family_name", FieldType.STRING),
    ("postal_code", FieldType.STRING),
)

CONDITION = _t(
    "condition", "prevalence_start",
    ("patient_id", FieldType.INT),
    ("code", FieldType.CODE),
    ("clinical_status", FieldType.STRING),
    ("prevalence_start", FieldType.DATE),
    ("prevalence_end", FieldType.DATE),
    ("severity", FieldType.STRING),
    ("recorded", FieldType.DATE),
)

ENCOUNTER = _t(
    "encounter", "period_start",
    ("patient_id", FieldType.INT),
    ("code", FieldType.CODE),
    ("status", FieldType.STRING),
    ("period_start", FieldType.DATE),
    ("period_end", FieldType.DATE),
    ("enc_class", FieldType.STRING),
    ("provider_id", FieldType.INT),
)

MEDICATION = _t(
    "medication", "authored",
    ("patient_id", FieldType.INT),
    ("code", FieldType.CODE),
    ("status", FieldType.STRING),
    ("authored", FieldType.DATE),
    ("dosage", FieldType.INT),
    ("route", FieldType.STRING),
)

PROCEDURE = _t(
    "procedure", "performed",
    ("patient_id", FieldType.INT),
    ("code", FieldType.CODE),
    ("status", FieldType.STRING),
    ("performed", FieldType.DATE),
    ("body_site", FieldType.STRING),
    ("outcome", FieldType.STRING),
)

OBSERVATION = _t(
    "observation", "effective_time_end",
    ("patient_id", FieldType.INT),
    ("code", FieldType.CODE),
    ("status", FieldType.STRING),
    ("effective_time_start", FieldType.DATE),
    ("effective_time_end", FieldType.DATE),
    ("value_quantity", FieldType.INT),
)

COVERAGE = _t(
    "coverage", "coverage_start",
    ("patient_id", FieldType.INT),
    ("coverage_start", FieldType.DATE),
    ("coverage_end", FieldType.DATE),
    ("payer", FieldType.STRING),
    ("plan_type", FieldType.STRING),
    ("member_id", FieldType.INT),
)

ALL_TABLES: dict[str, TableSchema] = {
    t.name: t
    for t in (PATIENT, CONDITION, ENCOUNTER, MEDICATION, PROCEDURE, OBSERVATION, COVERAGE)
}

# Resource kinds as they appear in measure source, mapped to table schemas.
RESOURCE_TO_TABLE: dict[str, str] = {
    "Patient": "patient",
    "Condition": "condition",
    "Encounter": "encounter",
    "Medication": "medication",
    "Procedure": "procedure",
    "Observation": "observation",
    "Coverage": "coverage",
}

# Measure-source property paths per resource.  A DATE property maps to one
# field; an INTERVAL property maps to a (start, end) field pair.
PROPERTY_MAP: dict[str, dict[str, tuple[str, ...]]] = {
    "Patient": {"gender.value": ("gender",), "birthDate": ("birth_date",)},
    "Observation": {
        "status": ("status",),
        "effectiveTime": ("effective_time_start", "effective_time_end"),
    },
    "Encounter": {"status": ("status",), "period": ("period_start", "period_end")},
    "Procedure": {"status": ("status",), "performed": ("performed",)},
    "Condition": {"prevalencePeriod": ("prevalence_start", "prevalence_end")},
    "Medication": {"status": ("status",), "authored": ("authored",)},
    "Coverage": {"period": ("coverage_start", "coverage_end")},
}


def encode_code(system: str, code: str) -> bytes:
    raw = f"{system}|{code}".encode("utf-8")
    if len(raw) > CODE_WIDTH:
        raise ValueError(f"code too wide for storage: {system}|{code}")
    return raw


def encode_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > STRING_WIDTH:
        raise ValueError(f"string too wide for storage: {value!r}")
    return raw


_PART_MIX = np.uint64(0x9E3779B97F4A7C15)


def partition_of(patient_ids: np.ndarray | int, n_partitions: int):
    """Hash-partition assignment, identical across tables and formats."""
    with np.errstate(over="ignore"):
        x = np.asarray(patient_ids, dtype=np.uint64)
        x = (x ^ (x >> np.uint64(33))) * _PART_MIX
        x = x ^ (x >> np.uint64(29))
    out = (x % np.uint64(n_partitions)).astype(np.int64)
    return out if out.ndim else int(out)
