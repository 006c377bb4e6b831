"""Lightweight verifier for generated SQL.

Checks that a statement is read-only and references only registered tables
and columns before it ever reaches a database. This is a token-level check,
not a full SQL parser; it is deliberately conservative for the SELECT subset
the engine generates.
"""

from __future__ import annotations

import re
from typing import Mapping

_STRING_LITERAL = re.compile(r"'(?:[^']|'')*'")
_NUMBER = re.compile(r"\b\d+(?:\.\d+)?\b")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_FROM_JOIN = re.compile(r"\b(?:from|join)\s+([A-Za-z_][A-Za-z0-9_]*)(?:\s+(?:as\s+)?([A-Za-z_][A-Za-z0-9_]*))?", re.IGNORECASE)

_KEYWORDS = frozenset(
    """select from where and or not in like as on join inner left right full
    outer cross group by order limit offset distinct having union all except
    intersect case when then else end is null asc desc between exists with
    recursive values glob escape collate nocase binary rtrim if""".split()
)

_FUNCTIONS = frozenset(
    """count sum min max avg abs round lower upper length substr trim ltrim
    rtrim coalesce ifnull nullif instr replace printf typeof cast date time
    datetime julianday strftime group_concat total""".split()
)

_ALIAS_STOPWORDS = _KEYWORDS | _FUNCTIONS


def verify_sql(sql: str, tables: Mapping[str, list]) -> list:
    """Violation messages for ``sql`` against ``{table: [columns]}``."""
    violations = []
    stripped = sql.strip().rstrip(";").strip()
    if not stripped:
        return ["empty SQL statement"]
    if ";" in stripped:
        violations.append("multiple statements are not allowed")
    head = stripped.split(None, 1)[0].lower()
    if head not in ("select", "with"):
        violations.append(f"statement is not read-only: starts with {head.upper()}")
        return violations

    known_tables = {t.lower(): t for t in tables}
    body = _STRING_LITERAL.sub(" ", stripped)
    body = _NUMBER.sub(" ", body)

    referenced = {}
    aliases = {}
    for match in _FROM_JOIN.finditer(body):
        table, alias = match.group(1), match.group(2)
        if table.lower() not in known_tables:
            violations.append(f"unknown relation {table!r}")
            continue
        canonical = known_tables[table.lower()]
        referenced[table.lower()] = canonical
        if alias and alias.lower() not in _ALIAS_STOPWORDS:
            aliases[alias.lower()] = canonical

    allowed_columns = set()
    for canonical in referenced.values():
        allowed_columns.update(c.lower() for c in tables[canonical])

    allowed = (
        _KEYWORDS
        | _FUNCTIONS
        | set(referenced)
        | set(aliases)
        | allowed_columns
    )
    for token in _IDENT.findall(body):
        if token.lower() not in allowed:
            violations.append(f"unknown identifier {token!r}")
    return sorted(set(violations))
