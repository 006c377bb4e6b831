import json

import pytest
from click.testing import CliRunner

from dataplan.cli import main

import oracles
from conftest import BAY_AREA_QUESTION, FIXTURES, USER_ANSWER

CONFIG = str(FIXTURES / "config.json")
ANSWERS = str(FIXTURES / "answers.json")


@pytest.fixture
def runner():
    return CliRunner()


def test_query_with_scripted_answers_prints_final_table(runner):
    result = runner.invoke(
        main, ["query", BAY_AREA_QUESTION, "--config", CONFIG, "--answers", ANSWERS]
    )
    assert result.exit_code == 0, result.output
    expected = oracles.scenario_expected_rows(FIXTURES, USER_ANSWER)
    for row in expected:
        assert row["company"] in result.output
    assert "min_salary" in result.output


def test_query_explain_prints_cost_rows(runner):
    result = runner.invoke(
        main,
        ["query", BAY_AREA_QUESTION, "--config", CONFIG, "--answers", ANSWERS, "--explain"],
    )
    assert result.exit_code == 0, result.output
    assert "latency=" in result.output
    assert "nl2u" in result.output


def test_query_infeasible_objective_exit_1(runner):
    result = runner.invoke(
        main,
        ["query", BAY_AREA_QUESTION, "--config", CONFIG, "--quality-floor", "0.99"],
    )
    assert result.exit_code == 1
    assert "infeasible" in result.output or "infeasible" in (result.stderr or "")


def test_unknown_flag_exits_2(runner):
    result = runner.invoke(main, ["query", "q", "--config", CONFIG, "--bogus"])
    assert result.exit_code == 2


def test_registry_sync_and_search(runner):
    result = runner.invoke(main, ["registry", "sync", "jobs_db", "--config", CONFIG])
    assert result.exit_code == 0, result.output
    assert "synced jobs_db" in result.output

    result = runner.invoke(main, ["registry", "search", "jobs", "--config", CONFIG, "--k", "3"])
    assert result.exit_code == 0
    assert "jobs_db/main/jobs" in result.output


def test_registry_sync_unknown_source_exit_1(runner):
    result = runner.invoke(main, ["registry", "sync", "ghost", "--config", CONFIG])
    assert result.exit_code == 1


def test_plan_explain_single_node(runner, tmp_path):
    plan = {
        "plan_id": "p1",
        "nodes": {
            "n001": {
                "operator_id": "nl2llm",
                "attributes": {"question": "q", "source_id": "llm_kb"},
                "properties": {},
                "status": "ready",
            }
        },
        "edges": [],
        "alternatives": {},
        "root": "n001",
    }
    plan_file = tmp_path / "plan.json"
    plan_file.write_text(json.dumps(plan))
    result = runner.invoke(main, ["plan", "explain", str(plan_file), "--config", CONFIG])
    assert result.exit_code == 0, result.output
    lines = [l for l in result.output.splitlines() if l.strip().startswith("n001")]
    assert len(lines) == 1
    assert "latency=100" in lines[0]


def test_plan_refine_then_optimize_round_trip(runner, tmp_path):
    plan = {
        "plan_id": "p2",
        "nodes": {
            "n001": {
                "operator_id": "question_answer",
                "attributes": {"question": BAY_AREA_QUESTION},
                "properties": {},
                "status": "planned",
            }
        },
        "edges": [],
        "alternatives": {},
        "root": "n001",
    }
    plan_file = tmp_path / "plan.json"
    plan_file.write_text(json.dumps(plan))
    result = runner.invoke(main, ["plan", "refine", str(plan_file), "--config", CONFIG])
    assert result.exit_code == 0, result.output
    refined = json.loads(result.output)
    assert refined["alternatives"]

    refined_file = tmp_path / "refined.json"
    refined_file.write_text(json.dumps(refined))
    result = runner.invoke(
        main, ["plan", "optimize", str(refined_file), "--config", CONFIG, "--quality-floor", "0.7"]
    )
    assert result.exit_code == 0, result.output
    optimized = json.loads(result.output)
    assert optimized["alternatives"] == {}
    operators = sorted(n["operator_id"] for n in optimized["nodes"].values())
    assert operators == ["in_filter", "join", "nl2llm", "nl2sql", "nl2u"]


def test_fixtures_load_reports_sources(runner):
    result = runner.invoke(main, ["fixtures", "load", str(FIXTURES)])
    assert result.exit_code == 0, result.output
    for source_id in ("jobs_db", "llm_kb", "user_main", "recipes_vec", "web_pages"):
        assert source_id in result.output


def test_query_interactive_reads_answer_from_stdin(runner):
    result = runner.invoke(
        main,
        ["query", BAY_AREA_QUESTION, "--config", CONFIG],
        input='{"min_salary": 150000}\n',
    )
    assert result.exit_code == 0, result.output
    assert "[prompt] what jobs are suitable for me?" in result.output
    expected = oracles.scenario_expected_rows(FIXTURES, USER_ANSWER)
    for row in expected:
        assert row["company"] in result.output
