"""Parser, subset validator, and resolver behavior."""

import pytest

from cqlbatch.frontend import (
    Compare,
    CompareOp,
    CqlSyntaxError,
    MissingDefineError,
    PropertyRef,
    StringLit,
    UnboundParameterError,
    UnknownValueSetError,
    load_params,
    parse_library,
    pretty_print,
    resolve,
    validate_subset,
)

GENDER = 'library T\n\ndefine "X":\n  Patient.gender.value = \'female\'\n'


def test_parse_gender_compare():
    lib = parse_library(GENDER)
    expr = lib.defines[0].expr
    assert expr == Compare(op=CompareOp.EQ,
                           lhs=PropertyRef(alias="Patient", path="gender.value"),
                           rhs=StringLit(value="female"))


def test_parse_is_pure(measure):
    # round-trip under the intrinsic library name; the name= override is a
    # source label for diagnostics, not part of the language
    lib, _, _ = measure
    intrinsic = parse_library(lib.text)
    again = parse_library(pretty_print(intrinsic))
    assert again.defines == intrinsic.defines == lib.defines
    assert again.parameters == intrinsic.parameters == lib.parameters


def test_round_trip_small():
    lib = parse_library(GENDER)
    assert parse_library(pretty_print(lib)).defines == lib.defines


def test_define_records_line_numbers():
    lib = parse_library(GENDER)
    assert lib.defines[0].line == 3


def test_corpus_passes_subset(measure):
    lib, _, _ = measure
    assert validate_subset(lib) == []


def test_unsupported_function_flagged():
    lib = parse_library(
        'library T\n\ndefine "X":\n  Sum([Observation: "Mammogram"] O return O.value)\n')
    diags = validate_subset(lib)
    assert len(diags) == 1
    assert "Sum" in diags[0].message
    assert diags[0].line == 4
    assert diags[0].format("f.cql").startswith("f.cql:4:")


def test_nested_exists_is_supported():
    lib = parse_library(
        'library T\n\ndefine "X":\n'
        '  exists ([Observation: "Mammogram"] O where'
        ' exists ([Condition: "Absence of Breast"] C))\n')
    assert validate_subset(lib) == []


def test_syntax_error_carries_location():
    with pytest.raises(CqlSyntaxError) as err:
        parse_library('library T\n\ndefine "X":\n  exists [[\n')
    assert "4" in str(err.value)


def test_resolve_populates_three_slots(measure):
    _, ast, _ = measure
    assert ast.numerator is not None
    assert ast.denominator is not None
    assert ast.exclusions is not None


def test_resolve_missing_valueset(measure):
    lib, _, defs = measure
    names = set(defs) - {"Mammogram"}
    params = load_params('{"Measurement Period": {"start": "2021-01-01", "end": "2022-12-31"}}')
    with pytest.raises(UnknownValueSetError, match="Mammogram"):
        resolve(lib, params, names)


def test_resolve_missing_define(measure):
    _, _, defs = measure
    lib = parse_library(GENDER)
    params = load_params("{}")
    with pytest.raises(MissingDefineError):
        resolve(lib, params, set(defs))


def test_resolve_unbound_parameter(measure):
    lib, _, defs = measure
    with pytest.raises(UnboundParameterError):
        resolve(lib, {}, set(defs))


def test_load_params_interval():
    params = load_params('{"Measurement Period": {"start": "2021-01-01", "end": "2022-12-31"}}')
    assert params["Measurement Period"].interval == (18628, 19357)


def test_load_params_rejects_bool():
    with pytest.raises(ValueError, match="boolean"):
        load_params('{"x": true}')


def test_load_params_accepts_mapping():
    assert load_params({"n": 3})["n"].integer == 3


def test_resolved_retrieves_name_known_valuesets(measure):
    # every retrieve in the resolved ast names a registered valueset
    from cqlbatch.frontend import Retrieve

    _, ast, defs = measure

    def walk(expr, out):
        if isinstance(expr, Retrieve):
            out.append(expr.valueset)
        for f in getattr(expr, "__dataclass_fields__", {}):
            v = getattr(expr, f)
            if hasattr(v, "__dataclass_fields__"):
                walk(v, out)
            elif isinstance(v, tuple):
                for item in v:
                    if hasattr(item, "__dataclass_fields__"):
                        walk(item, out)
        return out

    seen = []
    for root in (ast.numerator, ast.denominator, ast.exclusions):
        walk(root, seen)
    assert seen and set(seen) <= set(defs)
