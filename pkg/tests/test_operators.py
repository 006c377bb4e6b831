import json
import random

import pytest

from dataplan import operators as ops
from dataplan.context import ExecutionContext
from dataplan.data import DataBatch, Table, digest
from dataplan.errors import (
    AbstractOperatorError,
    BadRequestError,
    VerificationError,
)
from dataplan.expr import parse_expression
from dataplan.opregistry import OperatorRegistry
from dataplan.registry import DataRegistry

import oracles
from conftest import BAY_AREA_QUESTION, FIXTURES


@pytest.fixture(scope="module")
def ctx():
    return ExecutionContext(
        registry=DataRegistry(),
        operators=ops.build_catalog(OperatorRegistry()),
        adapters={},
    )


def run(ctx, operator_id, tables, attrs, props=None):
    batch = DataBatch([Table(rows) for rows in tables])
    return ops.invoke(ctx, operator_id, batch, attrs, props).rows(0)


def _jobs_rows():
    return json.loads((FIXTURES / "jobs.json").read_text())["jobs"]["rows"]


# -- spec'd examples -----------------------------------------------------------


def test_project_restricts_columns(ctx):
    rows = run(ctx, "project", [[{"a": 1, "b": 2}, {"a": 3, "b": 4}]], {"columns": ["a"]})
    assert rows == [{"a": 1}, {"a": 3}]


def test_project_missing_column_null(ctx):
    rows = run(ctx, "project", [[{"a": 1}]], {"columns": ["c"]})
    assert rows == [{"c": None}]


def test_project_rename_after_projection(ctx):
    rows = run(ctx, "project", [[{"a": 1}]], {"columns": ["a"], "rename": {"a": "x"}})
    assert rows == [{"x": 1}]


def test_filter_keeps_matching_rows_in_order(ctx):
    table = [{"rent": 2500}, {"rent": 3000}, {"rent": 3500}]
    rows = run(ctx, "filter", [table], {"predicate": "rent <= 3000"})
    assert rows == [{"rent": 2500}, {"rent": 3000}]


def test_filter_missing_attribute_drops_all(ctx):
    rows = run(ctx, "filter", [[{"a": 1}, {"a": 2}]], {"predicate": "zz = 1"})
    assert rows == []


def test_filter_parse_error(ctx):
    with pytest.raises(BadRequestError):
        run(ctx, "filter", [[{"a": 1}]], {"predicate": "a = ("})


def test_join_jobs_with_bay_area_locations(ctx):
    jobs = _jobs_rows()
    locations = [{"location": "San Francisco"}, {"location": "San Jose"}, {"location": "Oakland"}]
    rows = run(ctx, "join", [jobs, locations], {"left_key": "location", "right_key": "location"})
    expected = oracles.naive_join(jobs, locations, "location", "location")
    assert rows == expected
    assert all(r["location"] in {"San Francisco", "San Jose", "Oakland"} for r in rows)


def test_join_inner_empty_right(ctx):
    rows = run(ctx, "join", [[{"k": 1}], []], {"left_key": "k", "right_key": "k"})
    assert rows == []


def test_join_left_empty_right_keeps_left(ctx):
    rows = run(ctx, "join", [[{"k": 1}], []], {"left_key": "k", "right_key": "k", "kind": "left"})
    assert rows == [{"k": 1}]


def test_join_numeric_normalization_and_null_keys(ctx):
    left = [{"k": 1, "v": "a"}, {"k": None, "v": "b"}]
    right = [{"k": 1.0, "w": "x"}]
    rows = run(ctx, "join", [left, right], {"left_key": "k", "right_key": "k"})
    assert rows == [{"k": 1, "v": "a", "r_k": 1.0, "w": "x"}]


def test_in_filter_equivalent_to_join_then_project(ctx):
    jobs = _jobs_rows()
    locations = [{"location": "San Francisco"}, {"location": "San Jose"}, {"location": "Oakland"},
                 {"location": "San Jose"}]
    semi = run(ctx, "in_filter", [jobs, locations], {"key": "location", "member_key": "location"})
    joined = oracles.naive_join(jobs, [{"location": l} for l in {"San Francisco", "San Jose", "Oakland"}],
                                "location", "location")
    projected = [{k: v for k, v in row.items() if not k.startswith("r_")} for row in joined]
    assert semi == projected


def test_in_filter_empty_membership(ctx):
    assert run(ctx, "in_filter", [[{"k": 1}], []], {"key": "k", "member_key": "k"}) == []


def test_in_filter_all_present_unchanged(ctx):
    rows = [{"k": 1}, {"k": 2}]
    got = run(ctx, "in_filter", [rows, [{"k": 1}, {"k": 2}]], {"key": "k", "member_key": "k"})
    assert got == rows


def test_union_concatenates_in_port_order(ctx):
    got = run(ctx, "union", [[{"a": 1}, {"a": 2}], [{"a": 3}, {"a": 4}, {"a": 5}]], {})
    assert got == [{"a": 1}, {"a": 2}, {"a": 3}, {"a": 4}, {"a": 5}]


def test_union_distinct_over_duplicate_table(ctx):
    rows = [{"a": 1}, {"a": 2}]
    got = run(ctx, "union", [rows, rows], {"distinct": True})
    assert got == rows


def test_sort_limit_ascending(ctx):
    got = run(ctx, "sort_limit", [[{"v": 3}, {"v": 1}, {"v": 2}]], {"by": [{"key": "v"}]})
    assert [r["v"] for r in got] == [1, 2, 3]


def test_sort_limit_zero_limit(ctx):
    got = run(ctx, "sort_limit", [[{"v": 3}]], {"by": [{"key": "v"}], "limit": 0})
    assert got == []


def test_sort_nulls_first(ctx):
    got = run(ctx, "sort_limit", [[{"v": 1}, {}, {"v": None}]], {"by": [{"key": "v"}]})
    assert [r.get("v") for r in got] == [None, None, 1]


def test_group_agg_count_by_city_matches_manual_tally(ctx):
    jobs = _jobs_rows()
    got = run(ctx, "group_agg", [jobs], {"keys": ["location"], "aggs": [{"fn": "count", "as": "n"}]})
    tally = {}
    for row in jobs:
        tally[row["location"]] = tally.get(row["location"], 0) + 1
    assert {r["location"]: r["n"] for r in got} == tally
    # First-appearance order of key tuples.
    seen = []
    for row in jobs:
        if row["location"] not in seen:
            seen.append(row["location"])
    assert [r["location"] for r in got] == seen


def test_group_agg_empty_input(ctx):
    assert run(ctx, "group_agg", [[]], {"keys": ["k"], "aggs": [{"fn": "count", "as": "n"}]}) == []


def test_group_agg_sum_single_row(ctx):
    got = run(ctx, "group_agg", [[{"k": "a", "v": 7}]],
              {"keys": ["k"], "aggs": [{"fn": "sum", "on": "v", "as": "s"}]})
    assert got == [{"k": "a", "s": 7}]


def test_group_agg_avg_all_null_group(ctx):
    got = run(ctx, "group_agg", [[{"k": "a", "v": None}]],
              {"keys": ["k"], "aggs": [{"fn": "avg", "on": "v", "as": "m"}]})
    assert got == [{"k": "a", "m": None}]


def test_extract_dictionary(ctx):
    got = run(ctx, "extract", [[{"text": "2 eggs, beaten"}]],
              {"column": "text", "dictionary": ["tomato", "egg"], "as": "ingredient"})
    assert got == [{"text": "2 eggs, beaten", "ingredient": "egg"}]


def test_extract_regex(ctx):
    got = run(ctx, "extract", [[{"text": "rent 2500 monthly"}]],
              {"column": "text", "pattern": r"\d+", "as": "amount"})
    assert got == [{"text": "rent 2500 monthly", "amount": "2500"}]


def test_extract_no_match_null(ctx):
    got = run(ctx, "extract", [[{"text": "nothing here"}]],
              {"column": "text", "pattern": r"\d+", "as": "amount"})
    assert got[0]["amount"] is None


def test_extract_requires_exactly_one_variant(ctx):
    with pytest.raises(BadRequestError):
        run(ctx, "extract", [[{"t": "x"}]], {"column": "t", "as": "y"})
    with pytest.raises(BadRequestError):
        run(ctx, "extract", [[{"t": "x"}]],
            {"column": "t", "pattern": "a", "dictionary": ["b"], "as": "y"})


def test_extract_fuzzed_matches_reference_regex(ctx):
    # Independent oracle: Python's re applied per row, first group or whole match.
    import re as re_oracle

    rng = random.Random(123)
    pattern = r"([a-z]+)\d"
    compiled = re_oracle.compile(pattern)
    rows = [{"t": oracles.random_text(rng, 12)} for _ in range(60)]
    got = run(ctx, "extract", [rows], {"column": "t", "pattern": pattern, "as": "x"})
    for row, out in zip(rows, got):
        match = compiled.search(row["t"])
        assert out["x"] == (match.group(1) if match else None)


def test_abstract_operator_rejected(ctx):
    with pytest.raises(AbstractOperatorError):
        run(ctx, "question_answer", [], {"question": "hi"})


def test_unknown_attribute_rejected(ctx):
    with pytest.raises(BadRequestError):
        run(ctx, "project", [[{"a": 1}]], {"columns": ["a"], "bogus": 1})


def test_port_arity_enforced(ctx):
    with pytest.raises(BadRequestError):
        run(ctx, "join", [[{"a": 1}]], {"left_key": "a", "right_key": "a"})


# -- purity ------------------------------------------------------------------


def test_operators_pure_repeat_invocation_digest_equal(ctx):
    rng = random.Random(9)
    rows = oracles.random_rows(rng, max_rows=6)
    batch = DataBatch([Table(rows)])
    first = ops.invoke(ctx, "sort_limit", batch, {"by": [{"key": "a"}, {"key": "b", "desc": True}]})
    second = ops.invoke(ctx, "sort_limit", batch, {"by": [{"key": "a"}, {"key": "b", "desc": True}]})
    assert digest(first) == digest(second)


# -- randomized oracle equivalence (small; the acceptance suite runs 200+) ----------


CASES = 60


def _pair(rng):
    names = rng.sample(oracles.ATTR_NAMES, 3)
    left = oracles.random_rows(rng, max_rows=8, names=names)
    right = oracles.random_rows(rng, max_rows=8, names=names)
    return left, right, names


def test_random_project_matches_oracle(ctx):
    rng = random.Random(101)
    for _ in range(CASES):
        rows = oracles.random_rows(rng)
        columns = rng.sample(oracles.ATTR_NAMES, rng.randint(1, 3))
        rename = {columns[0]: "renamed"} if rng.random() < 0.3 else None
        attrs = {"columns": columns}
        if rename:
            attrs["rename"] = rename
        assert run(ctx, "project", [rows], attrs) == oracles.naive_project(rows, columns, rename)


def test_random_filter_matches_oracle(ctx):
    rng = random.Random(102)
    for _ in range(CASES):
        rows = oracles.random_rows(rng)
        text = oracles.random_expression_text(rng)
        tree = parse_expression(text)
        assert run(ctx, "filter", [rows], {"predicate": text}) == oracles.naive_filter(rows, tree)


def test_random_join_matches_oracle(ctx):
    rng = random.Random(103)
    for _ in range(CASES):
        left, right, names = _pair(rng)
        kind = rng.choice(["inner", "left"])
        lk, rk = rng.choice(names), rng.choice(names)
        got = run(ctx, "join", [left, right], {"left_key": lk, "right_key": rk, "kind": kind})
        assert got == oracles.naive_join(left, right, lk, rk, kind)


def test_random_in_filter_matches_oracle(ctx):
    rng = random.Random(104)
    for _ in range(CASES):
        left, right, names = _pair(rng)
        key, member = rng.choice(names), rng.choice(names)
        got = run(ctx, "in_filter", [left, right], {"key": key, "member_key": member})
        assert got == oracles.naive_in_filter(left, right, key, member)


def test_random_union_matches_oracle(ctx):
    rng = random.Random(105)
    for _ in range(CASES):
        tables = [oracles.random_rows(rng) for _ in range(rng.randint(1, 4))]
        distinct = rng.random() < 0.5
        got = run(ctx, "union", [list(t) for t in tables], {"distinct": distinct})
        assert got == oracles.naive_union(tables, distinct)


def test_random_sort_limit_matches_oracle(ctx):
    rng = random.Random(106)
    for _ in range(CASES):
        rows = oracles.random_rows(rng)
        by = [
            {"key": rng.choice(oracles.ATTR_NAMES), "desc": rng.random() < 0.5}
            for _ in range(rng.randint(1, 3))
        ]
        limit = rng.choice([None, 0, 2, 5])
        offset = rng.choice([0, 1])
        attrs = {"by": by, "offset": offset}
        if limit is not None:
            attrs["limit"] = limit
        assert run(ctx, "sort_limit", [rows], attrs) == oracles.naive_sort_limit(rows, by, limit, offset)


def test_random_group_agg_matches_oracle(ctx):
    rng = random.Random(107)
    for _ in range(CASES):
        rows = oracles.random_rows(rng)
        keys = rng.sample(oracles.ATTR_NAMES, rng.randint(1, 2))
        aggs = [
            {"fn": rng.choice(["count", "sum", "min", "max", "avg"]),
             "on": rng.choice(oracles.ATTR_NAMES), "as": f"agg{i}"}
            for i in range(rng.randint(1, 3))
        ]
        got = run(ctx, "group_agg", [rows], {"keys": keys, "aggs": aggs})
        assert got == oracles.naive_group_agg(rows, keys, aggs)


# -- semantic operators over the fixture engine -------------------------------------


def _session_ctx(engine):
    session = engine.create_session()
    return engine.session_ctx(session), session


def test_nl2sql_executes_stub_sql(engine):
    ctx, _ = _session_ctx(engine)
    batch = ops.invoke(ctx, "nl2sql", DataBatch.empty(),
                       {"question": "what are data scientist jobs?", "source_id": "jobs_db"})
    manual = [r for r in _jobs_rows() if "Data Scientist" in r["title"]]
    assert len(batch.rows(0)) == len(manual)


def test_nl2sql_unknown_relation_verification_error(engine):
    ctx, _ = _session_ctx(engine)
    engine.adapter("llm_kb").backend.mapping.insert(
        0, {"pattern": "ghost table question", "response": [{"sql": "SELECT * FROM ghosts"}]}
    )
    with pytest.raises(VerificationError) as err:
        ops.invoke(ctx, "nl2sql", DataBatch.empty(),
                   {"question": "ghost table question", "source_id": "jobs_db"},
                   {"max_retries": 0, "cache": False})
    assert any("ghosts" in v for v in err.value.detail["violations"])


def test_nl2sql_write_statement_rejected(engine):
    ctx, _ = _session_ctx(engine)
    engine.adapter("llm_kb").backend.mapping.insert(
        0, {"pattern": "delete question", "response": [{"sql": "DELETE FROM jobs"}]}
    )
    with pytest.raises(VerificationError):
        ops.invoke(ctx, "nl2sql", DataBatch.empty(),
                   {"question": "delete question", "source_id": "jobs_db"},
                   {"max_retries": 0, "cache": False})


def test_nl2llm_delegates_to_llm_source(engine):
    ctx, _ = _session_ctx(engine)
    batch = ops.invoke(ctx, "nl2llm", DataBatch.empty(),
                       {"question": "which locations are considered Bay Area?",
                        "output_schema": {"location": "string"}, "source_id": "llm_kb"})
    assert [r["location"] for r in batch.rows(0)] == ["San Francisco", "San Jose", "Oakland"]


def test_nl2vec_question_mode_matches_brute_force(engine):
    from dataplan.embedding import cosine, embed

    ctx, _ = _session_ctx(engine)
    batch = ops.invoke(ctx, "nl2vec", DataBatch.empty(),
                       {"question": "egg", "source_id": "recipes_vec", "collection": "recipes", "k": 3})
    recipes = json.loads((FIXTURES / "recipes.json").read_text())[0]["items"]
    query = embed("egg")
    scored = sorted(
        ((cosine(query, embed(i["embed_text"])), i["id"]) for i in recipes),
        key=lambda t: (-t[0], t[1]),
    )
    expected_ids = [item_id for _, item_id in scored[:3]]
    assert [r["recipe_id"] for r in batch.rows(0)] == expected_ids


def test_nl2vec_column_mode_empty_input(engine):
    ctx, _ = _session_ctx(engine)
    batch = ops.invoke(ctx, "nl2vec", DataBatch([Table([])]),
                       {"column": "ingredient", "source_id": "recipes_vec", "collection": "recipes", "k": 3})
    assert batch.rows(0) == []


def test_nl2vec_k_equal_collection_size(engine):
    ctx, _ = _session_ctx(engine)
    batch = ops.invoke(ctx, "nl2vec", DataBatch.empty(),
                       {"question": "eggs", "source_id": "recipes_vec", "collection": "recipes", "k": 10})
    assert len(batch.rows(0)) == 10


def test_query_breakdown_bay_area(engine):
    ctx, _ = _session_ctx(engine)
    batch = ops.invoke(ctx, "query_breakdown", DataBatch.empty(),
                       {"question": BAY_AREA_QUESTION})
    rows = batch.rows(0)
    assert [r["target"] for r in rows] == ["jobs_db", "llm_kb", "user_main"]
    assert rows[1]["integrate"] == "in" and rows[1]["key"] == "location"
    assert rows[2]["integrate"] == "join" and rows[2]["key"] == "min_salary"


def test_query_breakdown_no_match_empty(engine):
    ctx, _ = _session_ctx(engine)
    batch = ops.invoke(ctx, "query_breakdown", DataBatch.empty(),
                       {"question": "a question with no mapping"})
    assert batch.rows(0) == []


def test_query_breakdown_unknown_target_verification_error(engine):
    ctx, _ = _session_ctx(engine)
    engine.adapter("llm_kb").backend.mapping.insert(
        0,
        {"pattern": "rogue breakdown",
         "response": [{"sub_question": "x?", "target": "not_a_source", "integrate": None, "key": None}]},
    )
    with pytest.raises(VerificationError):
        ops.invoke(ctx, "query_breakdown", DataBatch.empty(),
                   {"question": "rogue breakdown"}, {"cache": False})


def test_nl2u_fresh_profile_no_prompt(engine):
    from dataplan.data import Table as T

    ctx, session = _session_ctx(engine)
    user = engine.adapter("user_main")
    user.store_profile(session.profile_namespace, "what jobs are suitable for me?",
                       T([{"min_salary": 150000}]), 86400)
    batch = ops.invoke(ctx, "nl2u", DataBatch.empty(), {"question": "what jobs are suitable for me?"})
    assert batch.rows(0) == [{"min_salary": 150000}]
    assert [m for m in session.messages() if m.kind == "prompt"] == []
