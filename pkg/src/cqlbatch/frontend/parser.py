"""Recursive-descent parser for the supported measure-language subset.

The grammar covers exactly what the bundled breast-cancer-screening measure
needs: retrieve-with-valueset, exists, where, and/or, equality, interval
membership, `ends during` / `during` against a named window parameter,
AgeInYearsAt, property paths, and string/integer/date literals, plus the
CoverageContinuity builtin.

Constructs outside the subset are reported as diagnostics with source
positions; they never silently disappear.  Structural problems (unbalanced
brackets, missing `:` after a define name, duplicate defines) raise
CqlSyntaxError.
"""

from __future__ import annotations

import re

from .. import dates
from .ast import (
    AgeInYearsAt,
    And,
    Compare,
    CompareOp,
    CoverageContinuity,
    DateLit,
    DateRef,
    Define,
    Diagnostic,
    Exists,
    Expr,
    IntervalLit,
    IntLit,
    Or,
    ParamRef,
    PropertyRef,
    Retrieve,
    SourceLibrary,
    StringLit,
    SUPPORTED_RESOURCES,
    Where,
)


class CqlSyntaxError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class UnsupportedConstruct(Exception):
    """Internal signal: the construct parses but is outside the subset."""

    def __init__(self, diagnostic: Diagnostic):
        super().__init__(diagnostic.message)
        self.diagnostic = diagnostic


KEYWORDS = {
    "library", "version", "parameter", "valueset", "define", "exists",
    "where", "and", "or", "in", "ends", "during", "date", "from",
    "end", "start", "of", "Interval",
}

BUILTIN_FUNCTIONS = {"AgeInYearsAt", "CoverageContinuity"}

# Recognized CQL constructs that are deliberately outside the subset.
UNSUPPORTED_KEYWORDS = {
    "not", "union", "intersect", "except", "before", "after", "overlaps",
    "starts", "meets", "included", "properly", "return", "sort", "let",
    "with", "without", "such", "case", "if", "then", "else", "flatten",
    "distinct", "using", "include", "context", "codesystem", "code",
    "concept", "function",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*)
  | (?P<date>@\d{4}-\d{2}-\d{2})
  | (?P<int>\d+)
  | (?P<qname>"(?:[^"\\]|\\.)*")
  | (?P<string>'(?:[^'\\]|\\.)*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|[=<>\[\]():,.+\-*/])
    """,
    re.VERBOSE,
)


class Token:
    __slots__ = ("kind", "value", "line", "col")

    def __init__(self, kind: str, value, line: int, col: int):
        self.kind = kind
        self.value = value
        self.line = line
        self.col = col

    def __repr__(self):
        return f"Token({self.kind}, {self.value!r}, {self.line}:{self.col})"


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            col = pos - line_start + 1
            raise CqlSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        col = pos - line_start + 1
        if kind in ("ws", "comment"):
            nl = value.count("\n")
            if nl:
                line += nl
                line_start = pos + value.rindex("\n") + 1
        elif kind == "date":
            tokens.append(Token("date", dates.from_iso(value[1:]), line, col))
        elif kind == "int":
            tokens.append(Token("int", int(value), line, col))
        elif kind == "qname":
            tokens.append(Token("qname", value[1:-1].replace('\\"', '"'), line, col))
        elif kind == "string":
            tokens.append(Token("string", value[1:-1].replace("\\'", "'"), line, col))
        else:
            tokens.append(Token(kind, value, line, col))
        pos = m.end()
    tokens.append(Token("eof", None, line, len(text) - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0
        self.diagnostics: list[Diagnostic] = []

    # -- token helpers ------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def at(self, kind: str, value=None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (value is None or tok.value == value)

    def expect(self, kind: str, value=None) -> Token:
        tok = self.peek()
        if not self.at(kind, value):
            want = value if value is not None else kind
            raise CqlSyntaxError(f"expected {want!r}, found {tok.value!r}", tok.line, tok.col)
        return self.next()

    def error(self, message: str) -> CqlSyntaxError:
        tok = self.peek()
        return CqlSyntaxError(message, tok.line, tok.col)

    def unsupported(self, what: str, tok: Token) -> UnsupportedConstruct:
        return UnsupportedConstruct(Diagnostic(f"unsupported construct: {what}", tok.line, tok.col))

    # -- library structure --------------------------------------------------

    def parse_library(self) -> SourceLibrary:
        name = "library"
        if self.at("ident", "library"):
            self.next()
            name = self.expect("ident").value
            if self.at("ident", "version"):
                self.next()
                self.expect("string")
        parameters: list[str] = []
        defines: list[Define] = []
        seen: set[str] = set()
        while not self.at("eof"):
            if self.at("ident", "parameter"):
                self.next()
                parameters.append(self.expect("qname").value)
            elif self.at("ident", "valueset"):
                # Declarations are accepted and ignored; the registry document
                # is the source of truth for membership.
                self.next()
                self.expect("qname")
                if self.at("op", ":"):
                    self.next()
                    self.expect("string")
            elif self.at("ident", "define"):
                defines.append(self._parse_define(seen))
            else:
                tok = self.peek()
                raise CqlSyntaxError(
                    f"expected 'define', found {tok.value!r}", tok.line, tok.col
                )
        if not defines:
            tok = self.peek()
            raise CqlSyntaxError("no defines found", tok.line, tok.col)
        return SourceLibrary(
            name=name,
            text="",
            parameters=tuple(parameters),
            defines=tuple(defines),
            diagnostics=tuple(self.diagnostics),
        )

    def _parse_define(self, seen: set[str]) -> Define:
        self.expect("ident", "define")
        name_tok = self.expect("qname")
        if name_tok.value in seen:
            raise CqlSyntaxError(
                f"duplicate define {name_tok.value!r}", name_tok.line, name_tok.col
            )
        seen.add(name_tok.value)
        self.expect("op", ":")
        body_start = self.i
        try:
            expr = self.parse_expr()
        except UnsupportedConstruct as unsup:
            self.diagnostics.append(unsup.diagnostic)
            self._skip_to_next_define()
            expr = None
        body = _render_span(self.tokens[body_start:self.i])
        return Define(name=name_tok.value, body=body, expr=expr, line=name_tok.line)

    def _skip_to_next_define(self):
        while not self.at("eof") and not self.at("ident", "define"):
            self.next()

    # -- expressions --------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self._parse_or()

    def _parse_or(self) -> Expr:
        items = [self._parse_and()]
        while self.at("ident", "or"):
            self.next()
            items.append(self._parse_and())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def _parse_and(self) -> Expr:
        items = [self._parse_comparison()]
        while self.at("ident", "and"):
            self.next()
            items.append(self._parse_comparison())
        return items[0] if len(items) == 1 else And(tuple(items))

    def _parse_comparison(self) -> Expr:
        lhs = self._parse_term()
        tok = self.peek()
        if tok.kind == "op" and tok.value in ("=", "<=", ">="):
            self.next()
            rhs = self._parse_term()
            op = {"=": CompareOp.EQ, "<=": CompareOp.LE, ">=": CompareOp.GE}[tok.value]
            return Compare(op, lhs, rhs)
        if tok.kind == "op" and tok.value in ("<", ">", "!="):
            raise self.unsupported(f"operator {tok.value!r}", tok)
        if self.at("ident", "in"):
            self.next()
            if self.at("ident", "Interval"):
                return Compare(CompareOp.IN_INTERVAL, lhs, self._parse_interval_literal())
            if self.at("qname"):
                return Compare(CompareOp.DURING, lhs, ParamRef(self.next().value))
            raise self.error("expected Interval[...] or a window name after 'in'")
        if self.at("ident", "ends"):
            self.next()
            self.expect("ident", "during")
            return Compare(CompareOp.ENDS_DURING, lhs, self._parse_window_ref())
        if self.at("ident", "during"):
            self.next()
            return Compare(CompareOp.DURING, lhs, self._parse_window_ref())
        return lhs

    def _parse_window_ref(self) -> Expr:
        return ParamRef(self.expect("qname").value)

    def _parse_interval_literal(self) -> Expr:
        self.expect("ident", "Interval")
        self.expect("op", "[")
        lo = self.expect("int").value
        self.expect("op", ",")
        hi = self.expect("int").value
        self.expect("op", "]")
        return IntervalLit(lo, hi)

    def _parse_term(self) -> Expr:
        tok = self.peek()
        if tok.kind == "op" and tok.value == "(":
            self.next()
            inner = self.parse_expr()
            self.expect("op", ")")
            return inner
        if tok.kind == "op" and tok.value == "[":
            return self._parse_retrieve()
        if tok.kind == "string":
            return StringLit(self.next().value)
        if tok.kind == "int":
            return IntLit(self.next().value)
        if tok.kind == "date":
            return DateLit(self.next().value)
        if tok.kind == "qname":
            return ParamRef(self.next().value)
        if tok.kind == "ident":
            if tok.value == "exists":
                return self._parse_exists()
            if tok.value == "Interval":
                return self._parse_interval_literal()
            if tok.value == "AgeInYearsAt":
                return self._parse_age_at()
            if tok.value == "CoverageContinuity":
                self.next()
                self.expect("op", "(")
                window = self.expect("qname").value
                self.expect("op", ")")
                return CoverageContinuity(window)
            if tok.value in UNSUPPORTED_KEYWORDS:
                raise self.unsupported(f"'{tok.value}'", tok)
            if self.peek(1).kind == "op" and self.peek(1).value == "(":
                raise self.unsupported(f"function '{tok.value}'", tok)
            return self._parse_property_path()
        if tok.kind == "op":
            raise self.unsupported(f"operator {tok.value!r}", tok)
        raise self.error(f"unexpected {tok.value!r}")

    def _parse_exists(self) -> Expr:
        self.expect("ident", "exists")
        self.expect("op", "(")
        source = self._parse_query()
        self.expect("op", ")")
        return Exists(source)

    def _parse_query(self) -> Expr:
        source = self._parse_retrieve()
        if self.at("ident", "where"):
            self.next()
            predicate = self.parse_expr()
            return Where(source, predicate)
        return source

    def _parse_retrieve(self) -> Expr:
        open_tok = self.expect("op", "[")
        res_tok = self.expect("ident")
        if res_tok.value not in SUPPORTED_RESOURCES:
            raise self.unsupported(f"resource '{res_tok.value}'", res_tok)
        self.expect("op", ":")
        valueset = self.expect("qname").value
        self.expect("op", "]")
        alias = ""
        if self.at("ident") and self.peek().value not in KEYWORDS \
                and self.peek().value not in UNSUPPORTED_KEYWORDS:
            alias = self.next().value
        del open_tok
        return Retrieve(res_tok.value, valueset, alias)

    def _parse_age_at(self) -> Expr:
        self.expect("ident", "AgeInYearsAt")
        self.expect("op", "(")
        at = self._parse_date_expr()
        self.expect("op", ")")
        return AgeInYearsAt(at)

    def _parse_date_expr(self) -> Expr:
        if self.at("ident", "date"):
            self.next()
            self.expect("ident", "from")
            which_tok = self.peek()
            if which_tok.kind == "ident" and which_tok.value in ("start", "end"):
                self.next()
                self.expect("ident", "of")
                param = self.expect("qname").value
                return DateRef(which_tok.value, param)
            raise self.error("expected 'start of' or 'end of'")
        if self.at("date"):
            return DateLit(self.next().value)
        if self.at("qname"):
            return ParamRef(self.next().value)
        raise self.error("expected a date expression")

    def _parse_property_path(self) -> Expr:
        alias = self.expect("ident").value
        parts: list[str] = []
        while self.at("op", ".") :
            self.next()
            parts.append(self.expect("ident").value)
        if not parts:
            raise self.error(f"expected a property path after {alias!r}")
        return PropertyRef(alias, ".".join(parts))


def _render_span(tokens: list[Token]) -> str:
    parts = []
    for t in tokens:
        if t.kind == "qname":
            parts.append(f'"{t.value}"')
        elif t.kind == "string":
            parts.append(f"'{t.value}'")
        elif t.kind == "date":
            parts.append(f"@{dates.to_iso(t.value)}")
        else:
            parts.append(str(t.value))
    return " ".join(parts)


def parse_library(text: str, name: str | None = None) -> SourceLibrary:
    """Parse library text into defines with expression trees.

    Unsupported-but-recognized constructs become diagnostics on the returned
    library (the affected define keeps its raw body and a None expr); true
    syntax errors raise CqlSyntaxError with a source position.
    """
    parser = _Parser(tokenize(text))
    lib = parser.parse_library()
    return SourceLibrary(
        name=name or lib.name, text=text, parameters=lib.parameters,
        defines=lib.defines, diagnostics=lib.diagnostics,
    )


def validate_subset(lib: SourceLibrary) -> list[Diagnostic]:
    """Empty iff every construct in the library is inside the subset."""
    return list(lib.diagnostics)


# -- pretty printer ---------------------------------------------------------

def _print_expr(expr: Expr, parent_bool: bool = False) -> str:
    if isinstance(expr, Or):
        body = " or ".join(_print_expr(e, True) for e in expr.items)
        return f"({body})" if parent_bool else body
    if isinstance(expr, And):
        body = " and ".join(_print_expr(e, True) for e in expr.items)
        return f"({body})" if parent_bool else body
    if isinstance(expr, Compare):
        lhs = _print_expr(expr.lhs)
        if expr.op == CompareOp.IN_INTERVAL:
            return f"{lhs} in {_print_expr(expr.rhs)}"
        if expr.op in (CompareOp.ENDS_DURING, CompareOp.DURING):
            return f"{lhs} {expr.op.value} {_print_expr(expr.rhs)}"
        return f"{lhs} {expr.op.value} {_print_expr(expr.rhs)}"
    if isinstance(expr, Exists):
        return f"exists ({_print_expr(expr.source)})"
    if isinstance(expr, Where):
        return f"{_print_expr(expr.source)} where {_print_expr(expr.predicate)}"
    if isinstance(expr, Retrieve):
        alias = f" {expr.alias}" if expr.alias else ""
        return f'[{expr.resource}: "{expr.valueset}"]{alias}'
    if isinstance(expr, PropertyRef):
        return f"{expr.alias}.{expr.path}"
    if isinstance(expr, AgeInYearsAt):
        return f"AgeInYearsAt({_print_expr(expr.at)})"
    if isinstance(expr, DateRef):
        return f'date from {expr.which} of "{expr.param}"'
    if isinstance(expr, ParamRef):
        return f'"{expr.name}"'
    if isinstance(expr, IntervalLit):
        return f"Interval[{expr.lo}, {expr.hi}]"
    if isinstance(expr, IntLit):
        return str(expr.value)
    if isinstance(expr, StringLit):
        return f"'{expr.value}'"
    if isinstance(expr, DateLit):
        return f"@{dates.to_iso(expr.day)}"
    if isinstance(expr, CoverageContinuity):
        return f'CoverageContinuity("{expr.window}")'
    raise TypeError(f"cannot print {type(expr).__name__}")


def pretty_print(lib: SourceLibrary) -> str:
    """Render a parsed library back to canonical source text."""
    lines: list[str] = [f"library {lib.name}", ""]
    for p in lib.parameters:
        lines.append(f'parameter "{p}"')
    if lib.parameters:
        lines.append("")
    for d in lib.defines:
        if d.expr is None:
            lines.append(f'define "{d.name}": {d.body}')
        else:
            lines.append(f'define "{d.name}":')
            lines.append(f"  {_print_expr(d.expr)}")
        lines.append("")
    return "\n".join(lines)
