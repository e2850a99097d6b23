"""Valueset registry: loading, compilation, and broadcast bundles."""

import dataclasses
import importlib.resources as ir
import json

import numpy as np
import pytest

from cqlbatch.catalog import (
    CatalogError,
    CodeRef,
    DuplicateValueSetError,
    EmptyValueSetError,
    MissingValueSetError,
    ValueSetDef,
    broadcast_handles,
    compile_registry,
    compile_valueset,
    encode_code,
    load_valuesets,
)


@pytest.fixture(scope="module")
def registry():
    res = ir.files("cqlbatch") / "resources"
    return load_valuesets((res / "valuesets.json").read_text())


def test_bundled_registry_shape(registry):
    assert sorted(registry) == [
        "Absence of Breast",
        "Hospice Encounter",
        "Hospice Intervention",
        "Mammogram",
        "Mastectomy",
    ]
    sizes = {name: len(d.members) for name, d in registry.items()}
    assert sizes["Mammogram"] == 300
    assert all(sizes[n] == 40 for n in sizes if n != "Mammogram")


def test_load_accepts_decoded_document(registry):
    res = ir.files("cqlbatch") / "resources"
    doc = json.loads((res / "valuesets.json").read_text())
    assert load_valuesets(doc) == registry


def test_encode_code_layout(registry):
    assert encode_code("LOINC", "24606-6") == b"LOINC|24606-6"
    # every bundled member must fit the S24 membership arrays
    for d in registry.values():
        for m in d.members:
            assert len(m.encoded) <= 24


def test_contains(registry):
    cs = compile_valueset(registry["Mammogram"])
    assert cs.contains("LOINC", "24606-6")
    assert not cs.contains("LOINC", "0000-0")
    assert not cs.contains("SNOMED", "24606-6")
    assert len(cs) == 300


def test_coderef_validation():
    with pytest.raises(ValueError):
        CodeRef("", "X")
    with pytest.raises(ValueError):
        CodeRef("LOINC", "")


def test_duplicate_id_rejected():
    doc = json.dumps([
        {"id": "A", "version": "1", "members": [{"system": "S", "code": "1"}]},
        {"id": "A", "version": "2", "members": [{"system": "S", "code": "2"}]},
    ])
    with pytest.raises(DuplicateValueSetError) as err:
        load_valuesets(doc)
    assert err.value.vs_id == "A"


def test_duplicate_members_dedupe_at_compile():
    d = ValueSetDef(
        id="A", version="1",
        members=(CodeRef("S", "1"), CodeRef("S", "1"), CodeRef("S", "2")),
    )
    assert len(d.members) == 3
    assert len(compile_valueset(d)) == 2


def test_empty_set_rejected():
    with pytest.raises(EmptyValueSetError):
        compile_valueset(ValueSetDef(id="A", version="1"))


def test_malformed_documents():
    with pytest.raises(CatalogError, match="JSON array"):
        load_valuesets('{"id": "A"}')
    with pytest.raises(CatalogError, match="malformed"):
        load_valuesets('[{"version": "1"}]')


def test_compile_registry(registry):
    compiled = compile_registry(registry)
    assert sorted(compiled) == sorted(registry)
    assert all(len(compiled[n]) <= len(registry[n].members) for n in registry)


def test_member_bytes_sorted_readonly(registry):
    mb = compile_valueset(registry["Mammogram"]).member_bytes
    assert mb.dtype == np.dtype("S24")
    assert len(mb) == 300
    assert np.all(mb[:-1] < mb[1:])
    assert not mb.flags.writeable


def test_bundle_from_plan(registry, opt_plan):
    bundle = broadcast_handles(registry, opt_plan)
    assert bundle.ids() == (
        "Absence of Breast",
        "Hospice Encounter",
        "Hospice Intervention",
        "Mammogram",
        "Mastectomy",
    )
    assert bundle.total_member_count == 300 + 4 * 40
    assert "Mammogram" in bundle
    assert len(bundle["Mammogram"]) == 300


def test_bundle_from_iterable(registry):
    bundle = broadcast_handles(registry, ["Mammogram", "Mammogram"])
    assert bundle.ids() == ("Mammogram",)
    assert bundle.total_member_count == 300


def test_bundle_missing_set(registry):
    with pytest.raises(MissingValueSetError, match="Colonoscopy"):
        broadcast_handles(registry, ["Colonoscopy"])


def test_immutability(registry):
    bundle = broadcast_handles(registry, ["Mammogram"])
    with pytest.raises(TypeError):
        bundle.sets["Extra"] = None
    cs = bundle["Mammogram"]
    with pytest.raises(dataclasses.FrozenInstanceError):
        cs.id = "other"
