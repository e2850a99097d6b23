"""Bind a parsed library to parameters and valueset names.

Resolution checks, in one pass over the three required defines, that every
window placeholder is bound to a concrete interval parameter, every retrieve
names a known valueset, and the defines Numerator / Denominator / Exclusions
are all present with fully supported bodies.
"""

from __future__ import annotations

import json

from .. import dates
from .ast import (
    Compare,
    CompareOp,
    CoverageContinuity,
    DateRef,
    Expr,
    MeasureAst,
    ParamRef,
    ParamValue,
    Retrieve,
    SourceLibrary,
    walk,
)

REQUIRED_DEFINES = ("Numerator", "Denominator", "Exclusions")


class ResolveError(Exception):
    pass


class MissingDefineError(ResolveError):
    def __init__(self, name: str):
        super().__init__(f"MissingDefine({name!r})")
        self.name = name


class UnknownValueSetError(ResolveError):
    def __init__(self, name: str):
        super().__init__(f"UnknownValueSet({name!r})")
        self.name = name


class UnboundParameterError(ResolveError):
    def __init__(self, name: str):
        super().__init__(f"UnboundParameter({name!r})")
        self.name = name


def load_params(source) -> dict[str, ParamValue]:
    """Parse parameter bindings from JSON text or an already-decoded mapping.

    Interval values are objects with ISO "start"/"end" keys; integers and
    strings bind as themselves.
    """
    if isinstance(source, (str, bytes)):
        doc = json.loads(source)
    else:
        doc = source
    if not isinstance(doc, dict):
        raise ValueError("parameter document must be a JSON object")
    out: dict[str, ParamValue] = {}
    for name, value in doc.items():
        if isinstance(value, dict) and set(value) == {"start", "end"}:
            out[name] = ParamValue.of_interval(
                dates.from_iso(value["start"]), dates.from_iso(value["end"])
            )
        elif isinstance(value, bool):
            raise ValueError(f"parameter {name!r}: booleans are not supported")
        elif isinstance(value, int):
            out[name] = ParamValue(integer=value)
        elif isinstance(value, str):
            out[name] = ParamValue(string=value)
        else:
            raise ValueError(f"parameter {name!r}: unsupported value {value!r}")
    return out


def _check_bindings(expr: Expr, params: dict[str, ParamValue], valueset_names) -> None:
    for node in walk(expr):
        if isinstance(node, Retrieve):
            if node.valueset not in valueset_names:
                raise UnknownValueSetError(node.valueset)
        elif isinstance(node, (ParamRef, DateRef, CoverageContinuity)):
            name = node.name if isinstance(node, ParamRef) else (
                node.param if isinstance(node, DateRef) else node.window
            )
            bound = params.get(name)
            if bound is None:
                raise UnboundParameterError(name)
            # DateRef endpoints and coverage windows only make sense over intervals.
            if isinstance(node, (DateRef, CoverageContinuity)) and bound.interval is None:
                raise UnboundParameterError(name)
        elif isinstance(node, Compare):
            window_pos = node.op in (CompareOp.DURING, CompareOp.ENDS_DURING)
            if window_pos and isinstance(node.rhs, ParamRef):
                bound = params.get(node.rhs.name)
                if bound is not None and bound.interval is None:
                    raise UnboundParameterError(node.rhs.name)


def resolve(
    lib: SourceLibrary,
    params: dict[str, ParamValue],
    valueset_names,
) -> MeasureAst:
    """Map library defines onto measure slots with all names checked.

    Requires defines named Numerator, Denominator and Exclusions, each parsed
    without unsupported constructs.
    """
    valueset_names = set(valueset_names)
    slots: dict[str, Expr] = {}
    for required in REQUIRED_DEFINES:
        define = lib.define(required)
        if define is None or define.expr is None:
            raise MissingDefineError(required)
        _check_bindings(define.expr, params, valueset_names)
        slots[required] = define.expr
    return MeasureAst(
        numerator=slots["Numerator"],
        denominator=slots["Denominator"],
        exclusions=slots["Exclusions"],
        parameters=dict(params),
        valuesets=tuple(sorted({
            n.valueset for e in slots.values() for n in walk(e) if isinstance(n, Retrieve)
        })),
    )
