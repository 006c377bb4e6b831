"""Universal value/row/table/batch data model.

Every operator consumes and produces a :class:`DataBatch`: an ordered list of
tables, each table an ordered list of attribute-to-value rows. Values are
JSON-shaped (null, bool, 64-bit int, finite float, string, list, map) and
immutable by convention once a batch is constructed.

The canonical wire format is JSON with lexicographically sorted object keys,
UTF-8 encoded, which makes digests stable across runs and processes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from .errors import DataError, SerializationError

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

#: Declared types accepted by table schemas and attribute specs.
DECLARED_TYPES = ("any", "boolean", "integer", "float", "number", "string", "list", "map")


def validate_value(value: Any, path: str = "$") -> None:
    """Check that ``value`` is a well-formed Value; raise DataError if not.

    Floats must be finite, integers must fit in 64 signed bits, and map keys
    must be unique non-empty strings (uniqueness is inherent to dict).
    """
    if value is None or isinstance(value, bool):
        return
    if isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise DataError(f"{path}: integer out of 64-bit range: {value}")
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise DataError(f"{path}: non-finite float: {value!r}")
        return
    if isinstance(value, str):
        return
    if isinstance(value, list):
        for i, item in enumerate(value):
            validate_value(item, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for key, item in value.items():
            if not isinstance(key, str) or not key:
                raise DataError(f"{path}: map keys must be non-empty strings, got {key!r}")
            validate_value(item, f"{path}.{key}")
        return
    raise DataError(f"{path}: unsupported value type {type(value).__name__}")


def type_name(value: Any) -> str:
    """Declared-type name of a concrete value."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    return "map"


def conforms(value: Any, declared: str) -> bool:
    """Whether ``value`` conforms to a declared type. Null conforms to anything."""
    if value is None or declared == "any":
        return True
    actual = type_name(value)
    if declared == "number":
        return actual in ("integer", "float")
    return actual == declared


def _normalize_schema(schema: Mapping[str, Any]) -> dict:
    """Normalize a schema mapping to {name: {type, description, required}}."""
    out = {}
    for name, spec in schema.items():
        if not isinstance(name, str) or not name:
            raise DataError(f"schema attribute names must be non-empty strings, got {name!r}")
        if isinstance(spec, str):
            spec = {"type": spec}
        elif not isinstance(spec, Mapping):
            raise DataError(f"schema entry for {name!r} must be a type name or mapping")
        declared = spec.get("type", "any")
        if declared not in DECLARED_TYPES:
            raise DataError(f"schema entry {name!r} has unknown type {declared!r}")
        out[name] = {
            "type": declared,
            "description": spec.get("description", ""),
            "required": bool(spec.get("required", False)),
        }
    return out


class Table:
    """Ordered list of rows with an optional declared schema.

    When a schema is attached at construction time the rows must conform;
    use :func:`validate_schema` to check foreign data without raising.
    """

    __slots__ = ("rows", "schema")

    def __init__(self, rows: Iterable[Mapping[str, Any]] = (), schema: Optional[Mapping[str, Any]] = None):
        self.schema = _normalize_schema(schema) if schema is not None else None
        checked = []
        for i, row in enumerate(rows):
            if not isinstance(row, Mapping):
                raise DataError(f"row {i} is not a mapping")
            for name in row:
                if not isinstance(name, str) or not name:
                    raise DataError(f"row {i}: attribute names must be non-empty strings")
            validate_value(dict(row), f"rows[{i}]")
            checked.append(dict(row))
        self.rows = checked
        if self.schema is not None:
            report = validate_schema(self, self.schema)
            if report.violations:
                first = report.violations[0]
                raise DataError(f"rows do not conform to attached schema: {first.message}", detail=report.to_obj())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Table) and self.rows == other.rows and self.schema == other.schema

    def __len__(self) -> int:
        return len(self.rows)

    def __repr__(self) -> str:
        return f"Table({len(self.rows)} rows)"

    def attribute_names(self) -> list:
        """Attribute names in first-appearance order across rows (schema first)."""
        seen: dict = {}
        if self.schema:
            for name in self.schema:
                seen[name] = True
        for row in self.rows:
            for name in row:
                seen.setdefault(name, True)
        return list(seen)

    def to_obj(self) -> dict:
        obj: dict = {"rows": self.rows}
        if self.schema is not None:
            obj["schema"] = self.schema
        return obj

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "Table":
        if not isinstance(obj, Mapping) or "rows" not in obj:
            raise DataError("table object must be a mapping with a 'rows' key")
        return cls(rows=obj["rows"], schema=obj.get("schema"))


class DataBatch:
    """The universal operator payload: an ordered list of tables.

    Table order is significant; operators address inputs by port index.
    """

    __slots__ = ("tables",)

    def __init__(self, tables: Iterable[Table] = ()):
        tables = list(tables)
        for i, table in enumerate(tables):
            if not isinstance(table, Table):
                raise DataError(f"tables[{i}] is not a Table")
        self.tables = tables

    @classmethod
    def single(cls, rows: Iterable[Mapping[str, Any]], schema: Optional[Mapping[str, Any]] = None) -> "DataBatch":
        return cls([Table(rows, schema)])

    @classmethod
    def empty(cls) -> "DataBatch":
        return cls([])

    def table(self, port: int = 0) -> Table:
        if port >= len(self.tables):
            raise DataError(f"batch has {len(self.tables)} tables, no port {port}")
        return self.tables[port]

    def rows(self, port: int = 0) -> list:
        return self.table(port).rows

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DataBatch) and self.tables == other.tables

    def __len__(self) -> int:
        return len(self.tables)

    def __repr__(self) -> str:
        return f"DataBatch({[len(t) for t in self.tables]})"

    def to_obj(self) -> dict:
        return {"tables": [t.to_obj() for t in self.tables]}

    @classmethod
    def from_obj(cls, obj: Mapping[str, Any]) -> "DataBatch":
        if not isinstance(obj, Mapping) or "tables" not in obj:
            raise DataError("batch object must be a mapping with a 'tables' key")
        return cls([Table.from_obj(t) for t in obj["tables"]])


def canonical_json(obj: Any) -> str:
    """Canonical JSON text: sorted keys, compact separators, UTF-8 friendly."""
    try:
        return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)
    except ValueError as exc:
        raise SerializationError(str(exc)) from exc


def canonical_serialize(batch: DataBatch) -> bytes:
    """Deterministic byte encoding of a batch; inverse of :func:`deserialize`."""
    validate_value_batch(batch)
    return canonical_json(batch.to_obj()).encode("utf-8")


def validate_value_batch(batch: DataBatch) -> None:
    for ti, table in enumerate(batch.tables):
        for ri, row in enumerate(table.rows):
            validate_value(row, f"tables[{ti}].rows[{ri}]")


def deserialize(data: bytes) -> DataBatch:
    try:
        obj = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SerializationError(f"invalid batch encoding: {exc}") from exc
    return DataBatch.from_obj(obj)


def digest(batch: DataBatch) -> str:
    """Lowercase hex SHA-256 of the canonical serialization."""
    return hashlib.sha256(canonical_serialize(batch)).hexdigest()


def value_digest(value: Any) -> str:
    """SHA-256 digest of any plain Value (used for cache keys and dedup)."""
    validate_value(value)
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()


@dataclass
class Violation:
    row_index: int
    attribute: str
    kind: str  # unknown_attribute | type_mismatch | missing_required
    message: str

    def to_obj(self) -> dict:
        return {
            "row_index": self.row_index,
            "attribute": self.attribute,
            "kind": self.kind,
            "message": self.message,
        }


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_obj(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_obj() for v in self.violations]}

    def summary(self) -> str:
        return "; ".join(v.message for v in self.violations) or "ok"


def validate_schema(table: Table, schema: Mapping[str, Any]) -> ValidationReport:
    """Report every schema violation in ``table`` without raising.

    Violations are data, not errors: unknown attributes, type mismatches and
    missing required attributes are listed with their row index. Null always
    conforms to any declared type.
    """
    normalized = _normalize_schema(schema)
    report = ValidationReport()
    for i, row in enumerate(table.rows):
        for name, value in row.items():
            spec = normalized.get(name)
            if spec is None:
                report.violations.append(
                    Violation(i, name, "unknown_attribute", f"row {i}: unknown attribute {name!r}")
                )
            elif not conforms(value, spec["type"]):
                report.violations.append(
                    Violation(
                        i,
                        name,
                        "type_mismatch",
                        f"row {i}: attribute {name!r} expected {spec['type']}, got {type_name(value)}",
                    )
                )
        for name, spec in normalized.items():
            if spec["required"] and name not in row:
                report.violations.append(
                    Violation(i, name, "missing_required", f"row {i}: required attribute {name!r} missing")
                )
    return report
