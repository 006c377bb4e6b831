"""Predicate/expression mini-language used by filter and join operators.

Grammar::

    expr := or
    or   := and ('or' and)*
    and  := not ('and' not)*
    not  := 'not'? cmp
    cmp  := term (op term)? | term 'in' list | term 'contains' term
    term := literal | ident | '(' expr ')'
    list := '[' (literal (',' literal)*)? ']' | term

Identifiers match ``[A-Za-z_][A-Za-z0-9_.]*``; a ``tN.`` prefix selects input
port N (default port 0). Evaluation is total: a missing attribute or a
type-incompatible comparison yields boolean false, never an error, so a bad
predicate cannot abort a multi-source plan.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Union

from .errors import ExpressionSyntaxError

_MISSING = object()

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")

_PORT_PREFIX = re.compile(r"^t(\d+)\.(.+)$")


@dataclass(frozen=True)
class Literal:
    value: Any


@dataclass(frozen=True)
class Attr:
    name: str
    port: int = 0


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class BoolOp:
    op: str  # 'and' | 'or'
    items: tuple


@dataclass(frozen=True)
class Not:
    item: "Expression"


@dataclass(frozen=True)
class In:
    item: "Expression"
    container: "Expression"


@dataclass(frozen=True)
class Contains:
    left: "Expression"
    right: "Expression"


Expression = Union[Literal, Attr, Cmp, BoolOp, Not, In, Contains]


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<dstring>"(?:[^"\\]|\\.)*")
  | (?P<sstring>'(?:[^'\\]|\\.)*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<op><=|>=|!=|=|<|>)
  | (?P<punct>[()\[\],])
    """,
    re.VERBOSE,
)

_KEYWORDS = {"and", "or", "not", "in", "contains", "true", "false", "null"}

_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", '"': '"', "'": "'", "\\": "\\"}


@dataclass
class _Token:
    kind: str  # number | string | ident | keyword | op | punct | end
    text: str
    value: Any
    offset: int  # byte offset into source


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _unescape(raw: str) -> str:
    body = raw[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            out.append(_ESCAPES.get(body[i + 1], body[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _tokenize(text: str) -> list:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(
                f"invalid token at byte {_byte_offset(text, pos)}: {text[pos:pos + 10]!r}",
                _byte_offset(text, pos),
            )
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        offset = _byte_offset(text, m.start())
        raw = m.group(0)
        if m.lastgroup == "number":
            value = float(raw) if any(c in raw for c in ".eE") else int(raw)
            tokens.append(_Token("number", raw, value, offset))
        elif m.lastgroup in ("dstring", "sstring"):
            tokens.append(_Token("string", raw, _unescape(raw), offset))
        elif m.lastgroup == "ident":
            if raw in _KEYWORDS:
                tokens.append(_Token("keyword", raw, raw, offset))
            else:
                tokens.append(_Token("ident", raw, raw, offset))
        elif m.lastgroup == "op":
            tokens.append(_Token("op", raw, raw, offset))
        else:
            tokens.append(_Token("punct", raw, raw, offset))
    tokens.append(_Token("end", "", None, _byte_offset(text, len(text))))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected: str) -> "ExpressionSyntaxError":
        tok = self.peek()
        shown = tok.text or "end of input"
        return ExpressionSyntaxError(f"expected {expected}, found {shown!r} at byte {tok.offset}", tok.offset)

    def expect_punct(self, text: str) -> None:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != text:
            raise self.fail(f"{text!r}")
        self.advance()

    def parse(self) -> Expression:
        node = self.parse_or()
        if self.peek().kind != "end":
            raise self.fail("end of expression")
        return node

    def parse_or(self) -> Expression:
        items = [self.parse_and()]
        while self.peek().kind == "keyword" and self.peek().value == "or":
            self.advance()
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else BoolOp("or", tuple(items))

    def parse_and(self) -> Expression:
        items = [self.parse_not()]
        while self.peek().kind == "keyword" and self.peek().value == "and":
            self.advance()
            items.append(self.parse_not())
        return items[0] if len(items) == 1 else BoolOp("and", tuple(items))

    def parse_not(self) -> Expression:
        if self.peek().kind == "keyword" and self.peek().value == "not":
            self.advance()
            return Not(self.parse_cmp())
        return self.parse_cmp()

    def parse_cmp(self) -> Expression:
        left = self.parse_term()
        tok = self.peek()
        if tok.kind == "op":
            self.advance()
            return Cmp(tok.value, left, self.parse_term())
        if tok.kind == "keyword" and tok.value == "in":
            self.advance()
            return In(left, self.parse_list())
        if tok.kind == "keyword" and tok.value == "contains":
            self.advance()
            return Contains(left, self.parse_term())
        return left

    def parse_list(self) -> Expression:
        tok = self.peek()
        if tok.kind == "punct" and tok.text == "[":
            self.advance()
            values = []
            if not (self.peek().kind == "punct" and self.peek().text == "]"):
                values.append(self.parse_literal())
                while self.peek().kind == "punct" and self.peek().text == ",":
                    self.advance()
                    values.append(self.parse_literal())
            self.expect_punct("]")
            return Literal(values)
        return self.parse_term()

    def parse_literal(self) -> Any:
        tok = self.peek()
        if tok.kind in ("number", "string"):
            self.advance()
            return tok.value
        if tok.kind == "keyword" and tok.value in ("true", "false", "null"):
            self.advance()
            return {"true": True, "false": False, "null": None}[tok.value]
        raise self.fail("a literal")

    def parse_term(self) -> Expression:
        tok = self.peek()
        if tok.kind in ("number", "string"):
            self.advance()
            return Literal(tok.value)
        if tok.kind == "keyword" and tok.value in ("true", "false", "null"):
            self.advance()
            return Literal({"true": True, "false": False, "null": None}[tok.value])
        if tok.kind == "ident":
            self.advance()
            m = _PORT_PREFIX.match(tok.value)
            if m:
                return Attr(m.group(2), int(m.group(1)))
            return Attr(tok.value, 0)
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            inner = self.parse_or()
            self.expect_punct(")")
            return inner
        raise self.fail("a literal, identifier or '('")


def parse_expression(text: str) -> Expression:
    """Parse predicate text into an expression tree.

    Raises :class:`ExpressionSyntaxError` with the byte offset of the first
    invalid token on malformed input.
    """
    if not isinstance(text, str):
        raise ExpressionSyntaxError("expression must be a string", 0)
    return _Parser(text).parse()


def _format_literal(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        body = value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t")
        return f'"{body}"'
    if isinstance(value, list):
        return "[" + ",".join(_format_literal(v) for v in value) + "]"
    raise ValueError(f"cannot format literal {value!r}")


def format_expression(expr: Expression) -> str:
    """Render an expression tree back to parseable text.

    ``parse(format(parse(s)))`` is a fixpoint for every accepted ``s``.
    """
    return _format(expr, 0)


# Precedence levels: or=1, and=2, not=3, cmp=4, term=5.
def _level(expr: Expression) -> int:
    if isinstance(expr, BoolOp):
        return 1 if expr.op == "or" else 2
    if isinstance(expr, Not):
        return 3
    if isinstance(expr, (Cmp, In, Contains)):
        return 4
    return 5


def _format(expr: Expression, parent_level: int) -> str:
    level = _level(expr)
    if isinstance(expr, Literal):
        text = _format_literal(expr.value)
    elif isinstance(expr, Attr):
        text = expr.name if expr.port == 0 else f"t{expr.port}.{expr.name}"
    elif isinstance(expr, BoolOp):
        joiner = f" {expr.op} "
        text = joiner.join(_format(item, level + 1) for item in expr.items)
    elif isinstance(expr, Not):
        text = "not " + _format(expr.item, level + 1)
    elif isinstance(expr, Cmp):
        text = f"{_format(expr.left, 5)} {expr.op} {_format(expr.right, 5)}"
    elif isinstance(expr, In):
        text = f"{_format(expr.item, 5)} in {_format(expr.container, 5)}"
    elif isinstance(expr, Contains):
        text = f"{_format(expr.left, 5)} contains {_format(expr.right, 5)}"
    else:
        raise ValueError(f"unknown expression node {expr!r}")
    if level < parent_level:
        return f"({text})"
    return text


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def values_equal(a: Any, b: Any) -> bool:
    """Structural equality with numeric normalization (1 == 1.0), bools distinct."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if _is_number(a) and _is_number(b):
        return float(a) == float(b)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(values_equal(a[k], b[k]) for k in a)
    if type(a) is not type(b):
        return False
    return a == b


def _compare(op: str, left: Any, right: Any) -> bool:
    if op == "=":
        return values_equal(left, right)
    if op == "!=":
        # Incompatible types are "not comparable" rather than unequal.
        if _compatible(left, right):
            return not values_equal(left, right)
        return False
    if _is_number(left) and _is_number(right):
        return _ORDER_OPS[op](float(left), float(right))
    if isinstance(left, str) and isinstance(right, str):
        return _ORDER_OPS[op](left, right)
    return False


def _compatible(a: Any, b: Any) -> bool:
    if _is_number(a) and _is_number(b):
        return True
    if isinstance(a, bool) and isinstance(b, bool):
        return True
    if a is None and b is None:
        return True
    if isinstance(a, bool) or isinstance(b, bool):
        return False
    return type(a) is type(b)


_ORDER_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def eval_expression(expr: Expression, rows: Optional[Mapping[int, Mapping[str, Any]]] = None) -> Any:
    """Evaluate a parsed expression over one row per port.

    Total by design: never raises on a parsed tree. Missing attributes and
    incompatible comparisons evaluate to false; non-boolean operands of
    and/or/not are treated as false.
    """
    rows = rows or {}
    result = _eval(expr, rows)
    return False if result is _MISSING else result


def _truth(value: Any) -> bool:
    return value is True


def _eval(expr: Expression, rows: Mapping[int, Mapping[str, Any]]) -> Any:
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Attr):
        row = rows.get(expr.port)
        if row is None or expr.name not in row:
            return _MISSING
        return row[expr.name]
    if isinstance(expr, BoolOp):
        results = (_truth_of(item, rows) for item in expr.items)
        return all(results) if expr.op == "and" else any(results)
    if isinstance(expr, Not):
        return not _truth_of(expr.item, rows)
    if isinstance(expr, Cmp):
        left = _eval(expr.left, rows)
        right = _eval(expr.right, rows)
        if left is _MISSING or right is _MISSING:
            return False
        return _compare(expr.op, left, right)
    if isinstance(expr, In):
        item = _eval(expr.item, rows)
        container = _eval(expr.container, rows)
        if item is _MISSING or container is _MISSING or not isinstance(container, list):
            return False
        return any(values_equal(item, member) for member in container)
    if isinstance(expr, Contains):
        left = _eval(expr.left, rows)
        right = _eval(expr.right, rows)
        if isinstance(left, str) and isinstance(right, str):
            return right in left
        return False
    raise ValueError(f"unknown expression node {expr!r}")


def _truth_of(expr: Expression, rows: Mapping[int, Mapping[str, Any]]) -> bool:
    value = _eval(expr, rows)
    return _truth(value)


def referenced_attributes(expr: Expression, port: int = 0) -> set:
    """Attribute names the expression reads from the given port."""
    out: set = set()
    _collect_attrs(expr, port, out)
    return out


def referenced_ports(expr: Expression) -> set:
    ports: set = set()
    _collect_ports(expr, ports)
    return ports


def _collect_attrs(expr: Expression, port: int, out: set) -> None:
    if isinstance(expr, Attr):
        if expr.port == port:
            out.add(expr.name)
    elif isinstance(expr, BoolOp):
        for item in expr.items:
            _collect_attrs(item, port, out)
    elif isinstance(expr, Not):
        _collect_attrs(expr.item, port, out)
    elif isinstance(expr, (Cmp, Contains)):
        _collect_attrs(expr.left, port, out)
        _collect_attrs(expr.right, port, out)
    elif isinstance(expr, In):
        _collect_attrs(expr.item, port, out)
        _collect_attrs(expr.container, port, out)


def _collect_ports(expr: Expression, out: set) -> None:
    if isinstance(expr, Attr):
        out.add(expr.port)
    elif isinstance(expr, BoolOp):
        for item in expr.items:
            _collect_ports(item, out)
    elif isinstance(expr, Not):
        _collect_ports(expr.item, out)
    elif isinstance(expr, (Cmp, Contains)):
        _collect_ports(expr.left, out)
        _collect_ports(expr.right, out)
    elif isinstance(expr, In):
        _collect_ports(expr.item, out)
        _collect_ports(expr.container, out)
