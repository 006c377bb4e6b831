import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dataplan.errors import ExpressionSyntaxError
from dataplan.expr import (
    Attr,
    BoolOp,
    Cmp,
    In,
    Literal,
    Not,
    eval_expression,
    format_expression,
    parse_expression,
    referenced_attributes,
    referenced_ports,
)

from oracles import naive_eval, random_expression_text, random_row


def test_membership_parse():
    tree = parse_expression('location in ["San Francisco","Oakland"]')
    assert isinstance(tree, In)
    assert tree.item == Attr("location", 0)
    assert tree.container == Literal(["San Francisco", "Oakland"])
    assert len(tree.container.value) == 2


def test_boolean_tree_shape():
    tree = parse_expression("a = 1 and not (b > 2)")
    assert isinstance(tree, BoolOp) and tree.op == "and"
    left, right = tree.items
    assert left == Cmp("=", Attr("a"), Literal(1))
    assert isinstance(right, Not)
    assert right.item == Cmp(">", Attr("b"), Literal(2))


def test_port_prefix_selects_table():
    tree = parse_expression("t1.location = location")
    assert tree.left == Attr("location", 1)
    assert tree.right == Attr("location", 0)


def test_syntax_error_reports_byte_offset():
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression("a = ;")
    assert err.value.offset == 4

    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression("a @@ 1")
    assert err.value.offset == 2


def test_syntax_error_offset_is_bytes_not_chars():
    # Two-byte UTF-8 character before the bad token.
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression('"é" @ 1')
    assert err.value.offset == len('"é" '.encode("utf-8"))


def test_trailing_garbage_rejected():
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("a = 1 b")


def test_eval_simple_equality():
    assert eval_expression(parse_expression("a = 1"), {0: {"a": 1}}) is True
    assert eval_expression(parse_expression("a = 1"), {0: {"a": 2}}) is False


def test_eval_incompatible_types_false():
    assert eval_expression(parse_expression('a < "x"'), {0: {"a": 1}}) is False
    assert eval_expression(parse_expression('a = "1"'), {0: {"a": 1}}) is False


def test_eval_missing_attribute_false():
    assert eval_expression(parse_expression("zz = 1"), {0: {"a": 1}}) is False
    assert eval_expression(parse_expression("zz"), {0: {"a": 1}}) is False


def test_eval_numeric_normalization():
    assert eval_expression(parse_expression("a = 1.0"), {0: {"a": 1}}) is True
    assert eval_expression(parse_expression("a <= 2"), {0: {"a": 1.5}}) is True


def test_eval_bool_not_numeric():
    assert eval_expression(parse_expression("a = 1"), {0: {"a": True}}) is False
    assert eval_expression(parse_expression("a = true"), {0: {"a": True}}) is True


def test_eval_contains():
    rows = {0: {"title": "Senior Data Scientist"}}
    assert eval_expression(parse_expression('title contains "Data"'), rows) is True
    assert eval_expression(parse_expression('title contains "data"'), rows) is False


def test_eval_membership_against_second_table_attribute():
    tree = parse_expression("location in t1.locations")
    rows = {0: {"location": "Oakland"}, 1: {"locations": ["Oakland", "San Jose"]}}
    assert eval_expression(tree, rows) is True
    rows[0]["location"] = "Fresno"
    assert eval_expression(tree, rows) is False


def test_eval_null_equality():
    assert eval_expression(parse_expression("a = null"), {0: {"a": None}}) is True
    assert eval_expression(parse_expression("a != null"), {0: {"a": 1}}) is False


def test_eval_never_raises_and_matches_oracle():
    rng = random.Random(31337)
    for _ in range(400):
        text = random_expression_text(rng)
        tree = parse_expression(text)
        rows = {port: random_row(rng) for port in (0, 1, 2)}
        assert eval_expression(tree, rows) == naive_eval(tree, rows)


def test_parse_print_parse_fixpoint_randomized():
    rng = random.Random(90210)
    for _ in range(200):
        text = random_expression_text(rng)
        tree = parse_expression(text)
        printed = format_expression(tree)
        assert parse_expression(printed) == tree


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=0, max_value=10**9))
def test_fixpoint_property_hypothesis(seed):
    rng = random.Random(seed)
    text = random_expression_text(rng)
    tree = parse_expression(text)
    assert parse_expression(format_expression(tree)) == tree


def test_format_preserves_explicit_grouping():
    tree = parse_expression("(a or b) and c")
    printed = format_expression(tree)
    assert parse_expression(printed) == tree
    assert printed == "(a or b) and c"


def test_referenced_attributes_and_ports():
    tree = parse_expression('rent <= 3000 and t1.city = "SF" and name contains "a"')
    assert referenced_attributes(tree, 0) == {"rent", "name"}
    assert referenced_attributes(tree, 1) == {"city"}
    assert referenced_ports(tree) == {0, 1}


def test_string_escapes_round_trip():
    tree = parse_expression('a = "line\\nbreak \\"quoted\\""')
    assert tree.right == Literal('line\nbreak "quoted"')
    assert parse_expression(format_expression(tree)) == tree


def test_single_quoted_strings():
    tree = parse_expression("a = 'hello'")
    assert tree.right == Literal("hello")


def test_empty_list_membership():
    assert eval_expression(parse_expression("a in []"), {0: {"a": 1}}) is False
