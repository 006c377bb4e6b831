"""The operator catalog: physical and abstract operators over data batches.

Every operator is a pure function ``output = op(input, attributes,
properties)`` over :class:`~dataplan.data.DataBatch`. Implementations take an
:class:`~dataplan.context.ExecutionContext` as the first argument so semantic
operators can reach sources and the registry; relational operators ignore it.

Ordering conventions shared by sort and aggregation: values order by type
rank (null < boolean < numbers < strings < lists < maps) and within rank by
natural order, so every comparison is total even on mixed-type columns.
Descending order is the exact reverse.
"""

from __future__ import annotations

import re
from typing import Any, Mapping, Optional

from .context import ExecutionContext
from .data import DataBatch, Table, value_digest
from .errors import (
    AbstractOperatorError,
    BadRequestError,
    VerificationError,
)
from .expr import eval_expression, parse_expression, values_equal
from .opregistry import (
    AttributeSpec,
    OperatorDescriptor,
    OperatorRegistry,
    PlanTemplate,
    RefinementRule,
    TemplateNode,
)
from .sqlcheck import verify_sql

#: Operators that are deterministic functions of (input, attributes); always
#: safe for the executor's node cache.
PURE_OPERATORS = frozenset(
    ["project", "filter", "join", "in_filter", "union", "sort_limit", "group_agg", "extract"]
)

#: Source-backed operators that are cacheable unless properties disable it.
CACHEABLE_SOURCE_OPERATORS = frozenset(["nl2sql", "nl2llm", "nl2vec", "web_extract", "query_breakdown"])

BREAKDOWN_SCHEMA = {
    "sub_question": {"type": "string", "required": True},
    "target": {"type": "string", "required": True},
    "integrate": "string",
    "key": "string",
}

INTEGRATE_KINDS = ("join", "in", "union")


def order_key(value: Any):
    """Total order over values; see module docstring."""
    if value is None:
        return (0,)
    if isinstance(value, bool):
        return (1, value)
    if isinstance(value, (int, float)):
        return (2, value)
    if isinstance(value, str):
        return (3, value)
    if isinstance(value, list):
        return (4, tuple(order_key(v) for v in value))
    return (5, tuple((k, order_key(v)) for k, v in sorted(value.items())))


def _merge_key(name: str, left_row: Mapping[str, Any]) -> str:
    key = name
    while key in left_row:
        key = "r_" + key
    return key


# -- relational / text operators ------------------------------------------------


def op_project(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    columns = attrs["columns"]
    rename = attrs.get("rename") or {}
    rows = []
    for row in batch.rows(0):
        out = {}
        for col in columns:
            out[rename.get(col, col)] = row.get(col)
        rows.append(out)
    return DataBatch([Table(rows)])


def op_filter(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    tree = parse_expression(attrs["predicate"])
    if len(batch.tables) == 1:
        kept = [row for row in batch.rows(0) if eval_expression(tree, {0: row}) is True]
    else:
        # Two inputs: keep a left row when some right row satisfies the predicate.
        right_rows = batch.rows(1)
        kept = [
            row
            for row in batch.rows(0)
            if any(eval_expression(tree, {0: row, 1: other}) is True for other in right_rows)
        ]
    return DataBatch([Table(kept)])


def op_join(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    left, right = batch.table(0), batch.table(1)
    left_key, right_key = attrs["left_key"], attrs["right_key"]
    kind = attrs.get("kind", "inner")
    right_names = right.attribute_names()
    out = []
    for lrow in left.rows:
        lval = lrow.get(left_key)
        matches = []
        if lval is not None:
            for rrow in right.rows:
                rval = rrow.get(right_key)
                if rval is not None and values_equal(lval, rval):
                    matches.append(rrow)
        if matches:
            for rrow in matches:
                merged = dict(lrow)
                for name in right_names:
                    if name in rrow:
                        merged[_merge_key(name, lrow)] = rrow[name]
                out.append(merged)
        elif kind == "left":
            merged = dict(lrow)
            for name in right_names:
                merged[_merge_key(name, lrow)] = None
            out.append(merged)
    return DataBatch([Table(out)])


def op_in_filter(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    key, member_key = attrs["key"], attrs["member_key"]
    members = [row[member_key] for row in batch.rows(1) if row.get(member_key) is not None]
    kept = []
    for row in batch.rows(0):
        value = row.get(key)
        if value is not None and any(values_equal(value, m) for m in members):
            kept.append(row)
    return DataBatch([Table(kept)])


def op_union(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    distinct = bool(attrs.get("distinct", False))
    rows = []
    seen = set()
    for table in batch.tables:
        for row in table.rows:
            if distinct:
                key = value_digest(row)
                if key in seen:
                    continue
                seen.add(key)
            rows.append(dict(row))
    return DataBatch([Table(rows)])


def op_sort_limit(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    rows = [dict(r) for r in batch.rows(0)]
    # Stable multi-key sort: apply keys last-to-first, each pass stable.
    for spec in reversed(attrs["by"]):
        key_name = spec["key"]
        desc = bool(spec.get("desc", False))
        rows.sort(key=lambda r: order_key(r.get(key_name)), reverse=desc)
    offset = int(attrs.get("offset", 0))
    limit = attrs.get("limit")
    if offset:
        rows = rows[offset:]
    if limit is not None:
        rows = rows[: int(limit)]
    return DataBatch([Table(rows)])


def op_group_agg(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    keys = attrs["keys"]
    aggs = attrs["aggs"]
    groups: dict = {}
    order = []
    for row in batch.rows(0):
        key_values = [row.get(k) for k in keys]
        gid = value_digest(key_values)
        if gid not in groups:
            groups[gid] = {"keys": key_values, "rows": []}
            order.append(gid)
        groups[gid]["rows"].append(row)
    out = []
    for gid in order:
        group = groups[gid]
        result = {k: v for k, v in zip(keys, group["keys"])}
        for agg in aggs:
            fn, on, alias = agg["fn"], agg.get("on"), agg["as"]
            rows = group["rows"]
            if fn == "count":
                result[alias] = len(rows)
                continue
            values = [r.get(on) for r in rows if r.get(on) is not None]
            if fn in ("sum", "avg"):
                numbers = [v for v in values if isinstance(v, (int, float)) and not isinstance(v, bool)]
                if not numbers:
                    result[alias] = None
                elif fn == "sum":
                    result[alias] = sum(numbers)
                else:
                    result[alias] = sum(numbers) / len(numbers)
            elif fn in ("min", "max"):
                if not values:
                    result[alias] = None
                else:
                    picker = min if fn == "min" else max
                    result[alias] = picker(values, key=order_key)
            else:
                raise BadRequestError(f"unknown aggregate function {fn!r}")
        out.append(result)
    return DataBatch([Table(out)])


def op_extract(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    column, alias = attrs["column"], attrs["as"]
    pattern = attrs.get("pattern")
    dictionary = attrs.get("dictionary")
    if (pattern is None) == (dictionary is None):
        raise BadRequestError("extract requires exactly one of 'pattern' or 'dictionary'")
    if pattern is not None:
        try:
            compiled = re.compile(pattern)
        except re.error as exc:
            raise BadRequestError(f"invalid extraction pattern: {exc}") from exc
    rows = []
    for row in batch.rows(0):
        value = row.get(column)
        extracted = None
        if isinstance(value, str):
            if pattern is not None:
                match = compiled.search(value)
                if match:
                    extracted = match.group(1) if compiled.groups else match.group(0)
            else:
                lowered = value.lower()
                for term in dictionary:
                    if isinstance(term, str) and term.lower() in lowered:
                        extracted = term
                        break
        out = dict(row)
        out[alias] = extracted
        rows.append(out)
    return DataBatch([Table(rows)])


# -- semantic operators -----------------------------------------------------------


def _render_relational_metadata(ctx: ExecutionContext, source_id: str, collection_hint: Optional[str]) -> tuple:
    """(prompt text, {table: [columns]}) from the registry's metadata tree."""
    tables: dict = {}
    lines = []
    for entry in ctx.registry.subtree(source_id):
        if entry.level == "collection":
            name = entry.path[-1]
            if collection_hint and name != collection_hint:
                continue
            tables[name] = []
            lines.append(f"table {name}: {entry.description}")
        elif entry.level == "attribute":
            table_name = entry.path[-2]
            if table_name in tables:
                tables[table_name].append(entry.path[-1])
                samples = ", ".join(repr(s) for s in entry.samples[:3])
                lines.append(f"  column {entry.path[-1]} (samples: {samples})")
    return "\n".join(lines), tables


def op_nl2sql(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    source_id = attrs["source_id"]
    relational = ctx.adapter(source_id, "relational")
    llm = ctx.adapter(attrs.get("llm_source_id") or ctx.first_source("llm"), "llm")
    metadata_text, tables = _render_relational_metadata(ctx, source_id, attrs.get("collection_hint"))
    if not tables:
        raise VerificationError(
            f"no collection metadata for source {source_id!r}; sync the registry first"
        )
    base_question = (
        "Translate the question into one read-only SQL SELECT statement for SQLite "
        "over this schema:\n"
        f"{metadata_text}\n"
        f"Question: {attrs['question']}"
    )
    question = base_question
    violations: list = []
    for _ in range(int(props.get("max_retries", 2)) + 1):
        result = llm.query(question, {"sql": {"type": "string", "required": True}}, props)
        rows = result.rows(0)
        sql = rows[0].get("sql") if rows else None
        if not sql:
            violations = ["backend returned no SQL statement"]
        else:
            violations = verify_sql(sql, tables)
        if not violations:
            return relational.query(sql)
        question = (
            f"{base_question}\n\nThe previous SQL was rejected:\n"
            + "\n".join(f"- {v}" for v in violations)
            + "\nReturn corrected SQL."
        )
    raise VerificationError(
        "generated SQL failed verification after retries: " + "; ".join(violations),
        detail={"violations": violations},
    )


def op_nl2llm(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    llm = ctx.adapter(attrs["source_id"], "llm")
    return llm.query(attrs["question"], attrs.get("output_schema"), props)


def op_nl2u(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    session = ctx.require_session()
    user = ctx.adapter(ctx.first_source("user"), "user")
    return user.query(session, attrs["question"], attrs.get("output_schema"), props, node_id=ctx.node_id)


def op_nl2vec(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    from . import embedding

    store = ctx.adapter(attrs["source_id"], "vector")
    collection = attrs["collection"]
    k = int(attrs.get("k", 5))
    question = attrs.get("question")
    column = attrs.get("column")
    if (question is None) == (column is None):
        raise BadRequestError("nl2vec requires exactly one of 'question' or 'column'")
    if question is not None:
        return store.query(collection, embedding.embed(question), k)
    rows = []
    seen = set()
    for row in batch.rows(0):
        value = row.get(column)
        if not isinstance(value, str):
            continue
        result = store.query(collection, embedding.embed(value), k)
        for hit in result.rows(0):
            digest_key = value_digest({k2: v for k2, v in hit.items() if k2 != "_score"})
            if digest_key in seen:
                continue
            seen.add(digest_key)
            rows.append(hit)
    return DataBatch([Table(rows)])


def op_web_extract(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    web = ctx.adapter(attrs["source_id"], "web")
    return web.extract(attrs["key"], attrs.get("output_schema") or {}, props)


def op_query_breakdown(ctx: ExecutionContext, batch: DataBatch, attrs: Mapping, props: Mapping) -> DataBatch:
    llm = ctx.adapter(attrs.get("llm_source_id") or ctx.first_source("llm"), "llm")
    source_ids = attrs.get("source_ids")
    if not source_ids:
        source_ids = [d.source_id for d in ctx.registry.list_sources()]
    question = (
        "Break the question into sub-questions targeting the available sources "
        f"({', '.join(source_ids)}). The first row is the base retrieval; later rows "
        "declare how to integrate (join, in or union) and on which key.\n"
        f"Question: {attrs['question']}"
    )
    result = llm.query(question, BREAKDOWN_SCHEMA, props)
    problems = []
    for i, row in enumerate(result.rows(0)):
        target = row.get("target")
        if target not in source_ids or not ctx.registry.has_source(target):
            problems.append(f"row {i} targets unknown or unavailable source {target!r}")
        integrate = row.get("integrate")
        if i > 0 and integrate not in INTEGRATE_KINDS:
            problems.append(f"row {i} has invalid integrate {integrate!r}")
    if problems:
        raise VerificationError("query breakdown failed verification: " + "; ".join(problems),
                                detail={"violations": problems})
    return result


# -- descriptors ------------------------------------------------------------------


def _spec(name, type_="any", required=False, description="", constraints=None, default=None):
    return AttributeSpec(
        name=name,
        type=type_,
        required=required,
        description=description,
        constraints=constraints,
        default=default,
    )


def _llm_properties():
    return {
        "max_retries": _spec("max_retries", "integer", description="verification retries", default=2),
        "cache": _spec("cache", "boolean", description="reuse cached responses", default=True),
    }


def build_catalog(registry: OperatorRegistry) -> OperatorRegistry:
    """Register the built-in operator catalog, exactly once each."""

    registry.register(
        OperatorDescriptor(
            operator_id="project",
            kind="physical",
            description="restrict table 0 to the given columns, missing attributes become null; rename applies after projection",
            attribute_schema={
                "columns": _spec("columns", "list", required=True, description="output columns in order"),
                "rename": _spec("rename", "map", description="projected-name to output-name map"),
            },
            input_ports=(1, 1),
        ),
        op_project,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="filter",
            kind="physical",
            description=(
                "keep rows of table 0 where the predicate evaluates to true; with a second "
                "input, keep a left row when some right row satisfies the predicate"
            ),
            attribute_schema={
                "predicate": _spec("predicate", "string", required=True, description="predicate expression text"),
            },
            input_ports=(1, 2),
        ),
        op_filter,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="join",
            kind="physical",
            description=(
                "equality join with numeric key normalization; right-side name collisions "
                "are prefixed r_; left join emits unmatched left rows with nulls"
            ),
            attribute_schema={
                "left_key": _spec("left_key", "string", required=True),
                "right_key": _spec("right_key", "string", required=True),
                "kind": _spec("kind", "string", constraints={"enum": ["inner", "left"]}, default="inner"),
            },
            input_ports=(2, 2),
        ),
        op_join,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="in_filter",
            kind="physical",
            description="semi-join: keep rows of table 0 whose key appears in table 1's member column",
            attribute_schema={
                "key": _spec("key", "string", required=True),
                "member_key": _spec("member_key", "string", required=True),
            },
            input_ports=(2, 2),
        ),
        op_in_filter,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="union",
            kind="physical",
            description="concatenate inputs in port order; distinct drops digest-equal rows keeping the first",
            attribute_schema={
                "distinct": _spec("distinct", "boolean", default=False),
            },
            input_ports=(1, 16),
        ),
        op_union,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="sort_limit",
            kind="physical",
            description="stable multi-key sort (nulls sort before all non-null values), then offset/limit",
            attribute_schema={
                "by": _spec("by", "list", required=True, description="list of {key, desc}"),
                "limit": _spec("limit", "integer", constraints={"min": 0}),
                "offset": _spec("offset", "integer", constraints={"min": 0}, default=0),
            },
            input_ports=(1, 1),
        ),
        op_sort_limit,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="group_agg",
            kind="physical",
            description=(
                "group by key tuple in first-appearance order; nulls excluded from "
                "sum/min/max/avg, count counts rows, empty aggregate yields null"
            ),
            attribute_schema={
                "keys": _spec("keys", "list", required=True),
                "aggs": _spec("aggs", "list", required=True, description="list of {fn, on, as}"),
            },
            input_ports=(1, 1),
        ),
        op_group_agg,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="extract",
            kind="physical",
            description=(
                "add an attribute from the first regex capture or the first dictionary "
                "term contained case-insensitively; null when nothing matches"
            ),
            attribute_schema={
                "column": _spec("column", "string", required=True),
                "pattern": _spec("pattern", "string", description="regex variant"),
                "dictionary": _spec("dictionary", "list", description="dictionary variant"),
                "as": _spec("as", "string", required=True),
            },
            input_ports=(1, 1),
        ),
        op_extract,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="nl2sql",
            kind="physical",
            description=(
                "translate a question to SQL using registry metadata, verify it is "
                "read-only and references only known relations, then execute it"
            ),
            attribute_schema={
                "question": _spec("question", "string", required=True),
                "source_id": _spec("source_id", "string", required=True),
                "collection_hint": _spec("collection_hint", "string"),
                "llm_source_id": _spec("llm_source_id", "string"),
            },
            property_schema=_llm_properties(),
            input_ports=(0, 0),
        ),
        op_nl2sql,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="nl2llm",
            kind="physical",
            description="query commonsense and world knowledge; output verified against the schema",
            attribute_schema={
                "question": _spec("question", "string", required=True),
                "output_schema": _spec("output_schema", "map"),
                "source_id": _spec("source_id", "string", required=True),
            },
            property_schema=_llm_properties(),
            input_ports=(0, 0),
        ),
        op_nl2llm,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="nl2u",
            kind="physical",
            description="ask the user; fresh profile answers return immediately, otherwise prompt and suspend",
            attribute_schema={
                "question": _spec("question", "string", required=True),
                "output_schema": _spec("output_schema", "map"),
            },
            property_schema={
                "ttl_seconds": _spec("ttl_seconds", "integer", default=86400),
            },
            input_ports=(0, 0),
        ),
        op_nl2u,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="nl2vec",
            kind="physical",
            description=(
                "embed a question (or each row's column value, unioning distinct results) "
                "and search a vector collection by cosine similarity"
            ),
            attribute_schema={
                "question": _spec("question", "string"),
                "column": _spec("column", "string"),
                "source_id": _spec("source_id", "string", required=True),
                "collection": _spec("collection", "string", required=True),
                "k": _spec("k", "integer", constraints={"min": 1}, default=5),
            },
            input_ports=(0, 1),
        ),
        op_nl2vec,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="web_extract",
            kind="physical",
            description="fetch a document by key and extract schema-shaped rows from it",
            attribute_schema={
                "key": _spec("key", "string", required=True),
                "output_schema": _spec("output_schema", "map"),
                "source_id": _spec("source_id", "string", required=True),
            },
            property_schema=_llm_properties(),
            input_ports=(0, 0),
        ),
        op_web_extract,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="query_breakdown",
            kind="compound",
            description=(
                "obtain sub-questions with integration directives from the backend; "
                "consumed by the planner, which expands them into a subplan"
            ),
            attribute_schema={
                "question": _spec("question", "string", required=True),
                "source_ids": _spec("source_ids", "list"),
                "llm_source_id": _spec("llm_source_id", "string"),
            },
            property_schema=_llm_properties(),
            input_ports=(0, 0),
            refinements=[
                RefinementRule(
                    rule_id="expand_breakdown",
                    expander="breakdown",
                    requires_protocols=["llm"],
                    template=PlanTemplate(
                        nodes=[
                            TemplateNode(
                                key="sub_answer",
                                operator_id="question_answer",
                                attributes={"question": "${sub_question}"},
                            ),
                            TemplateNode(key="integrate", operator_id="union", attributes={}),
                        ],
                        edges=[{"from": "sub_answer", "to": "integrate", "port": 0}],
                        output="integrate",
                    ),
                ),
            ],
        ),
        op_query_breakdown,
    )
    registry.register(
        OperatorDescriptor(
            operator_id="question_answer",
            kind="abstract",
            description="answer a natural-language question from whatever sources fit",
            attribute_schema={
                "question": _spec("question", "string", required=True),
                "output_schema": _spec("output_schema", "map"),
                "source_ids": _spec("source_ids", "list"),
            },
            input_ports=(0, 0),
            refinements=[
                RefinementRule(
                    rule_id="nl2sql",
                    requires_protocols=["relational", "llm"],
                    template=PlanTemplate(
                        nodes=[
                            TemplateNode(
                                key="sql",
                                operator_id="nl2sql",
                                attributes={"question": "${question}", "source_id": "${sources.relational}"},
                            )
                        ],
                        output="sql",
                    ),
                ),
                RefinementRule(
                    rule_id="nl2llm",
                    requires_protocols=["llm"],
                    template=PlanTemplate(
                        nodes=[
                            TemplateNode(
                                key="llm",
                                operator_id="nl2llm",
                                attributes={
                                    "question": "${question}",
                                    "output_schema": "${output_schema}",
                                    "source_id": "${sources.llm}",
                                },
                            )
                        ],
                        output="llm",
                    ),
                ),
                RefinementRule(
                    rule_id="query_breakdown",
                    requires_protocols=["llm"],
                    template=PlanTemplate(
                        nodes=[
                            TemplateNode(
                                key="breakdown",
                                operator_id="query_breakdown",
                                attributes={"question": "${question}", "source_ids": "${source_ids}"},
                            )
                        ],
                        output="breakdown",
                    ),
                ),
            ],
        ),
    )
    registry.register(
        OperatorDescriptor(
            operator_id="extraction",
            kind="abstract",
            description="extract a new attribute from a text column",
            attribute_schema={
                "column": _spec("column", "string", required=True),
                "pattern": _spec("pattern", "string"),
                "dictionary": _spec("dictionary", "list"),
                "as": _spec("as", "string", required=True),
            },
            input_ports=(1, 1),
            refinements=[
                RefinementRule(
                    rule_id="regex",
                    requires_attributes=["pattern"],
                    template=PlanTemplate(
                        nodes=[
                            TemplateNode(
                                key="x",
                                operator_id="extract",
                                attributes={"column": "${column}", "pattern": "${pattern}", "as": "${as}"},
                            )
                        ],
                        inputs=[{"port": 0, "to": "x", "to_port": 0}],
                        output="x",
                    ),
                ),
                RefinementRule(
                    rule_id="dictionary",
                    requires_attributes=["dictionary"],
                    template=PlanTemplate(
                        nodes=[
                            TemplateNode(
                                key="x",
                                operator_id="extract",
                                attributes={"column": "${column}", "dictionary": "${dictionary}", "as": "${as}"},
                            )
                        ],
                        inputs=[{"port": 0, "to": "x", "to_port": 0}],
                        output="x",
                    ),
                ),
            ],
        ),
    )
    problems = registry.validate_templates()
    if problems:
        raise BadRequestError("operator catalog has unresolved templates: " + "; ".join(problems))
    return registry


def validate_invocation(descriptor: OperatorDescriptor, batch: DataBatch, attributes: Mapping) -> None:
    """Enforce the shared invocation contract: port arity and attribute schema."""
    lo, hi = descriptor.input_ports
    if not lo <= len(batch.tables) <= hi:
        raise BadRequestError(
            f"operator {descriptor.operator_id!r} accepts {lo}..{hi} input tables, got {len(batch.tables)}"
        )
    problems = descriptor.validate_attributes(attributes)
    if problems:
        raise BadRequestError(
            f"invalid attributes for {descriptor.operator_id!r}: " + "; ".join(problems)
        )


def invoke(
    ctx: ExecutionContext,
    operator_id: str,
    batch: DataBatch,
    attributes: Optional[Mapping] = None,
    properties: Optional[Mapping] = None,
) -> DataBatch:
    """Validated call of a registered operator."""
    descriptor = ctx.operators.get(operator_id)
    if descriptor.kind == "abstract":
        raise AbstractOperatorError(
            f"operator {operator_id!r} expresses intent only; refine the plan before executing"
        )
    attributes = descriptor.effective_attributes(attributes or {})
    properties = descriptor.effective_properties(properties or {})
    validate_invocation(descriptor, batch, attributes)
    impl = ctx.operators.implementation(operator_id)
    return impl(ctx, batch, attributes, properties)
