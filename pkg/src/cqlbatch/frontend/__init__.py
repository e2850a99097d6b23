from .ast import (
    AgeInYearsAt,
    And,
    Compare,
    CompareOp,
    CoverageContinuity,
    DateRef,
    DateLit,
    Define,
    Diagnostic,
    Expr,
    Exists,
    IntervalLit,
    IntLit,
    MeasureAst,
    Or,
    ParamRef,
    ParamValue,
    PropertyRef,
    Retrieve,
    SourceLibrary,
    StringLit,
    Where,
)
from .parser import CqlSyntaxError, parse_library, pretty_print, validate_subset
from .resolve import (
    MissingDefineError,
    ResolveError,
    UnboundParameterError,
    UnknownValueSetError,
    load_params,
    resolve,
)

__all__ = [
    "AgeInYearsAt", "And", "Compare", "CompareOp", "CoverageContinuity",
    "DateRef", "DateLit", "Define", "Diagnostic", "Expr", "Exists",
    "IntervalLit", "IntLit", "MeasureAst", "Or", "ParamRef", "ParamValue",
    "PropertyRef", "Retrieve", "SourceLibrary", "StringLit", "Where",
    "CqlSyntaxError", "parse_library", "pretty_print", "validate_subset",
    "MissingDefineError", "ResolveError", "UnboundParameterError",
    "UnknownValueSetError", "load_params", "resolve",
]
