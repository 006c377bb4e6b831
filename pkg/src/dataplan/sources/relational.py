"""Relational source adapter backed by SQLite.

Accepts a single read-only statement per query; anything else is rejected
before it reaches the database, and a connection authorizer denies writes as
a second line of defense.
"""

from __future__ import annotations

import json
import re
import sqlite3
import threading
from pathlib import Path
from typing import Any, Mapping, Optional

from ..data import DataBatch, Table
from ..errors import BadRequestError, ConnectivityError, PolicyError
from ..registry import MetadataEntry, SourceDescriptor

_READ_PREFIXES = ("select", "with", "values")

_TYPE_MAP = {
    "integer": "INTEGER",
    "float": "REAL",
    "number": "REAL",
    "string": "TEXT",
    "boolean": "INTEGER",
    "any": "",
}

_IDENT_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _quote_ident(name: str) -> str:
    if not _IDENT_OK.match(name):
        raise BadRequestError(f"invalid SQL identifier {name!r}")
    return f'"{name}"'


class RelationalSource:
    """One SQLite database exposed through the uniform source contract."""

    protocol = "relational"

    def __init__(self, descriptor: SourceDescriptor, connection: Optional[Mapping[str, Any]] = None):
        self.descriptor = descriptor
        conn = dict(connection if connection is not None else descriptor.connection)
        self.database = conn.get("database", "main")
        self._lock = threading.RLock()
        path = conn.get("path")
        try:
            if path:
                self._conn = sqlite3.connect(path, check_same_thread=False)
            else:
                self._conn = sqlite3.connect(":memory:", check_same_thread=False)
        except sqlite3.Error as exc:
            raise ConnectivityError(f"cannot open database for {descriptor.source_id}: {exc}") from exc
        tables = conn.get("tables")
        if isinstance(tables, (str, Path)):
            tables = json.loads(Path(tables).read_text(encoding="utf-8"))
        if tables:
            self.load_tables(tables)

    # -- loading ---------------------------------------------------------

    def load_tables(self, tables: Mapping[str, Any]) -> None:
        """Create and populate tables from a fixture mapping.

        Fixture format: ``{table: {"columns": [{"name", "type"}...], "rows": [{...}]}}``.
        """
        with self._lock:
            cur = self._conn.cursor()
            for table_name, spec in tables.items():
                columns = spec["columns"]
                decls = []
                for col in columns:
                    sql_type = _TYPE_MAP.get(col.get("type", "any"), "")
                    decls.append(f"{_quote_ident(col['name'])} {sql_type}".strip())
                cur.execute(f"DROP TABLE IF EXISTS {_quote_ident(table_name)}")
                cur.execute(f"CREATE TABLE {_quote_ident(table_name)} ({', '.join(decls)})")
                names = [col["name"] for col in columns]
                placeholders = ", ".join("?" for _ in names)
                for row in spec.get("rows", []):
                    cur.execute(
                        f"INSERT INTO {_quote_ident(table_name)} ({', '.join(_quote_ident(n) for n in names)}) "
                        f"VALUES ({placeholders})",
                        [row.get(n) for n in names],
                    )
            self._conn.commit()

    # -- querying ---------------------------------------------------------

    def query(self, statement: str) -> DataBatch:
        """Run one read-only statement and return a one-table batch."""
        self._check_read_only(statement)
        with self._lock:
            authorizer_installed = False
            try:
                self._conn.set_authorizer(_deny_writes)
                authorizer_installed = True
            except AttributeError:
                pass
            try:
                cur = self._conn.execute(statement)
                column_names = [d[0] for d in cur.description] if cur.description else []
                rows = [
                    {name: _from_sql(value) for name, value in zip(column_names, values)}
                    for values in cur.fetchall()
                ]
            except sqlite3.Error as exc:
                message = str(exc)
                if "not authorized" in message:
                    raise PolicyError(f"statement rejected as non-read-only: {message}") from exc
                raise BadRequestError(f"{self.descriptor.source_id}: {message}") from exc
            finally:
                if authorizer_installed:
                    self._conn.set_authorizer(None)
        schema = {name: "any" for name in column_names}
        return DataBatch([Table(rows, schema=schema)])

    def _check_read_only(self, statement: str) -> None:
        if not isinstance(statement, str) or not statement.strip():
            raise BadRequestError("statement must be a non-empty string")
        stripped = statement.strip()
        head = stripped.split(None, 1)[0].lower()
        if head not in _READ_PREFIXES:
            raise PolicyError(f"only read-only statements are allowed, got {head.upper()!r}")
        body = stripped.rstrip(";").strip()
        if ";" in body:
            raise PolicyError("multiple statements are not allowed")

    # -- metadata -----------------------------------------------------------

    def table_names(self) -> list:
        with self._lock:
            cur = self._conn.execute(
                "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name"
            )
            return [r[0] for r in cur.fetchall()]

    def describe_metadata(self) -> list:
        """Collection entry per table, attribute entry per column, with stats."""
        source_id = self.descriptor.source_id
        entries = [
            MetadataEntry(
                path=[source_id, self.database],
                level="database",
                description=f"SQLite database {self.database}",
            )
        ]
        with self._lock:
            for table_name in self.table_names():
                cur = self._conn.execute(f"SELECT COUNT(*) FROM {_quote_ident(table_name)}")
                row_count = cur.fetchone()[0]
                cur = self._conn.execute(f"PRAGMA table_info({_quote_ident(table_name)})")
                columns = [(r[1], (r[2] or "any").lower()) for r in cur.fetchall()]
                entries.append(
                    MetadataEntry(
                        path=[source_id, self.database, table_name],
                        level="collection",
                        description=f"table {table_name} with columns " + ", ".join(c for c, _ in columns),
                        statistics={"row_count": row_count},
                    )
                )
                for name, decl in columns:
                    q = _quote_ident(name)
                    t = _quote_ident(table_name)
                    cur = self._conn.execute(
                        f"SELECT COUNT(DISTINCT {q}), MIN({q}), MAX({q}) FROM {t}"
                    )
                    distinct_count, vmin, vmax = cur.fetchone()
                    cur = self._conn.execute(
                        f"SELECT DISTINCT {q} FROM {t} WHERE {q} IS NOT NULL ORDER BY {q} LIMIT 5"
                    )
                    samples = [_from_sql(r[0]) for r in cur.fetchall()]
                    entries.append(
                        MetadataEntry(
                            path=[source_id, self.database, table_name, name],
                            level="attribute",
                            description=f"{decl or 'untyped'} column of {table_name}",
                            samples=samples,
                            statistics={
                                "row_count": row_count,
                                "distinct_count": distinct_count,
                                "min": _from_sql(vmin),
                                "max": _from_sql(vmax),
                            },
                        )
                    )
        return entries

    def close(self) -> None:
        with self._lock:
            self._conn.close()


def _from_sql(value: Any) -> Any:
    if isinstance(value, bytes):
        return value.decode("utf-8", "replace")
    return value


_WRITE_OPS = {
    sqlite3.SQLITE_INSERT,
    sqlite3.SQLITE_UPDATE,
    sqlite3.SQLITE_DELETE,
    sqlite3.SQLITE_ALTER_TABLE,
    sqlite3.SQLITE_DROP_TABLE,
    sqlite3.SQLITE_DROP_INDEX,
    sqlite3.SQLITE_DROP_TRIGGER,
    sqlite3.SQLITE_DROP_VIEW,
    sqlite3.SQLITE_CREATE_TABLE,
    sqlite3.SQLITE_CREATE_INDEX,
    sqlite3.SQLITE_CREATE_TRIGGER,
    sqlite3.SQLITE_CREATE_VIEW,
    sqlite3.SQLITE_PRAGMA,
}


def _deny_writes(action, *args):
    if action in _WRITE_OPS:
        return sqlite3.SQLITE_DENY
    return sqlite3.SQLITE_OK
