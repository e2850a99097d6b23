"""Typed AST for the supported measure-language subset.

Expression nodes are immutable; a parsed library and a resolved measure are
plain values that can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

SUPPORTED_RESOURCES = (
    "Patient", "Condition", "Encounter", "Medication",
    "Procedure", "Observation", "Coverage",
)


class CompareOp(Enum):
    EQ = "="
    LE = "<="
    GE = ">="
    IN_INTERVAL = "in"
    ENDS_DURING = "ends during"
    DURING = "during"


class Expr:
    """Base class for expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Retrieve(Expr):
    resource: str
    valueset: str
    alias: str


@dataclass(frozen=True)
class Where(Expr):
    source: Expr
    predicate: Expr


@dataclass(frozen=True)
class Exists(Expr):
    source: Expr


@dataclass(frozen=True)
class PropertyRef(Expr):
    alias: str
    path: str


@dataclass(frozen=True)
class Compare(Expr):
    op: CompareOp
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class AgeInYearsAt(Expr):
    at: Expr


@dataclass(frozen=True)
class IntervalLit(Expr):
    lo: int
    hi: int


@dataclass(frozen=True)
class IntLit(Expr):
    value: int


@dataclass(frozen=True)
class StringLit(Expr):
    value: str


@dataclass(frozen=True)
class DateLit(Expr):
    day: int


@dataclass(frozen=True)
class ParamRef(Expr):
    """Reference to a whole named interval parameter."""

    name: str


@dataclass(frozen=True)
class DateRef(Expr):
    """start-of or end-of endpoint of a named interval parameter."""

    which: str  # "start" | "end"
    param: str


@dataclass(frozen=True)
class And(Expr):
    items: tuple[Expr, ...]


@dataclass(frozen=True)
class Or(Expr):
    items: tuple[Expr, ...]


@dataclass(frozen=True)
class CoverageContinuity(Expr):
    """Builtin: member coverage across a window with only allowable gaps."""

    window: str  # parameter name


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int
    col: int

    def format(self, filename: str = "<source>") -> str:
        return f"{filename}:{self.line}:{self.col}: {self.message}"


@dataclass(frozen=True)
class Define:
    # body and line are provenance, not structure; equality is name + expr
    name: str
    body: str = field(compare=False)
    expr: Expr | None = None
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class ParamValue:
    """A bound parameter: a closed day interval, an integer, or a string."""

    interval: tuple[int, int] | None = None
    integer: int | None = None
    string: str | None = None

    def __post_init__(self):
        kinds = [self.interval is not None, self.integer is not None, self.string is not None]
        if sum(kinds) != 1:
            raise ValueError("parameter must be exactly one of interval/integer/string")
        if self.interval is not None and self.interval[0] > self.interval[1]:
            raise ValueError("interval start must be <= end")

    @classmethod
    def of_interval(cls, start_day: int, end_day: int) -> "ParamValue":
        return cls(interval=(start_day, end_day))


@dataclass(frozen=True)
class SourceLibrary:
    name: str
    text: str
    parameters: tuple[str, ...]
    defines: tuple[Define, ...]
    diagnostics: tuple[Diagnostic, ...] = field(default=())

    def __post_init__(self):
        if not self.name:
            raise ValueError("library name must be nonempty")
        if len(set(self.parameters)) != len(self.parameters):
            raise ValueError("parameter names must be unique")

    def define(self, name: str) -> Define | None:
        for d in self.defines:
            if d.name == name:
                return d
        return None


@dataclass(frozen=True)
class MeasureAst:
    numerator: Expr
    denominator: Expr
    exclusions: Expr
    parameters: dict[str, ParamValue]
    valuesets: tuple[str, ...]


def walk(expr: Expr):
    """Yield expr and all descendants, preorder."""
    yield expr
    if isinstance(expr, Where):
        yield from walk(expr.source)
        yield from walk(expr.predicate)
    elif isinstance(expr, Exists):
        yield from walk(expr.source)
    elif isinstance(expr, Compare):
        yield from walk(expr.lhs)
        yield from walk(expr.rhs)
    elif isinstance(expr, AgeInYearsAt):
        yield from walk(expr.at)
    elif isinstance(expr, (And, Or)):
        for item in expr.items:
            yield from walk(item)


def referenced_valueset_names(expr: Expr) -> set[str]:
    return {e.valueset for e in walk(expr) if isinstance(e, Retrieve)}


def referenced_param_names(expr: Expr) -> set[str]:
    names: set[str] = set()
    for e in walk(expr):
        if isinstance(e, ParamRef):
            names.add(e.name)
        elif isinstance(e, DateRef):
            names.add(e.param)
        elif isinstance(e, CoverageContinuity):
            names.add(e.window)
    return names
