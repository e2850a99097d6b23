"""Valueset registry: load, compile, and bundle for broadcast.

Valuesets arrive as a JSON document, are compiled into immutable hash sets,
and the subset referenced by a plan is packaged into a read-only bundle that
every worker shares by reference instead of building join state per node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

from .tables import encode_code


class CatalogError(Exception):
    pass


class DuplicateValueSetError(CatalogError):
    def __init__(self, vs_id: str):
        super().__init__(f"DuplicateValueSet({vs_id!r})")
        self.vs_id = vs_id


class EmptyValueSetError(CatalogError):
    def __init__(self, vs_id: str):
        super().__init__(f"EmptyValueSet({vs_id!r})")
        self.vs_id = vs_id


class MissingValueSetError(CatalogError):
    def __init__(self, vs_id: str):
        super().__init__(f"MissingValueSet({vs_id!r})")
        self.vs_id = vs_id


@dataclass(frozen=True, order=True)
class CodeRef:
    system: str
    code: str

    def __post_init__(self):
        if not self.system or not self.code:
            raise ValueError("system and code must both be nonempty")

    @property
    def encoded(self) -> bytes:
        return encode_code(self.system, self.code)


@dataclass(frozen=True)
class ValueSetDef:
    """Raw definition as loaded; may still contain duplicate members."""

    id: str
    version: str
    members: tuple[CodeRef, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class CompiledValueSet:
    id: str
    version: str
    members: frozenset[CodeRef]

    def __post_init__(self):
        if not self.members:
            raise EmptyValueSetError(self.id)

    def contains(self, system: str, code: str) -> bool:
        return CodeRef(system, code) in self.members

    def __len__(self) -> int:
        return len(self.members)

    @cached_property
    def member_bytes(self) -> np.ndarray:
        """Sorted encoded members, the shape vectorized membership wants."""
        arr = np.array(sorted(m.encoded for m in self.members), dtype="S24")
        arr.setflags(write=False)
        return arr


@dataclass(frozen=True)
class ValueSetBundle:
    """Read-only broadcast package of the valuesets one plan references."""

    sets: Mapping[str, CompiledValueSet]

    @property
    def total_member_count(self) -> int:
        return sum(len(v) for v in self.sets.values())

    def __contains__(self, vs_id: str) -> bool:
        return vs_id in self.sets

    def __getitem__(self, vs_id: str) -> CompiledValueSet:
        return self.sets[vs_id]

    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.sets))


def load_valuesets(document) -> dict[str, ValueSetDef]:
    """Parse a registry document (JSON text, bytes, or decoded list).

    The document is a list of {id, version, members: [{system, code}]}.
    Duplicate ids are rejected; duplicate members survive until compile.
    """
    if isinstance(document, (str, bytes)):
        doc = json.loads(document)
    else:
        doc = document
    if not isinstance(doc, list):
        raise CatalogError("valueset document must be a JSON array")
    registry: dict[str, ValueSetDef] = {}
    for entry in doc:
        if not isinstance(entry, dict) or "id" not in entry:
            raise CatalogError(f"malformed valueset entry: {entry!r}")
        vs_id = entry["id"]
        if vs_id in registry:
            raise DuplicateValueSetError(vs_id)
        members = tuple(
            CodeRef(m["system"], m["code"]) for m in entry.get("members", ())
        )
        registry[vs_id] = ValueSetDef(
            id=vs_id, version=str(entry.get("version", "")), members=members
        )
    return registry


def compile_valueset(definition: ValueSetDef) -> CompiledValueSet:
    if not definition.members:
        raise EmptyValueSetError(definition.id)
    return CompiledValueSet(
        id=definition.id,
        version=definition.version,
        members=frozenset(definition.members),
    )


def compile_registry(registry: dict[str, ValueSetDef]) -> dict[str, CompiledValueSet]:
    return {vs_id: compile_valueset(d) for vs_id, d in registry.items()}


def broadcast_handles(registry: dict[str, ValueSetDef], plan) -> ValueSetBundle:
    """Compile exactly the valuesets a plan references into one bundle.

    `plan` is anything exposing referenced_valuesets(), or a plain iterable
    of valueset ids.
    """
    if hasattr(plan, "referenced_valuesets"):
        names: Iterable[str] = plan.referenced_valuesets()
    else:
        names = plan
    compiled: dict[str, CompiledValueSet] = {}
    for name in sorted(set(names)):
        definition = registry.get(name)
        if definition is None:
            raise MissingValueSetError(name)
        compiled[name] = compile_valueset(definition)
    return ValueSetBundle(sets=MappingProxyType(compiled))
