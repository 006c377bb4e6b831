"""Command-line interface.

Every data path goes through the same engine operations the HTTP handlers
use. Exit codes: 0 success, 1 engine failure (ApiError-mapped), 2 usage
error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .engine import CONFIG_ENV_VAR, Engine
from .errors import EngineError
from .planner import DataPlan, Objective
from .sources.user import normalize_question


def _load_engine(config: str) -> Engine:
    if not config:
        raise click.UsageError(f"--config is required (or set {CONFIG_ENV_VAR})")
    engine = Engine.from_config_file(config)
    engine.sync_all()
    return engine


def _fail(error: EngineError) -> None:
    click.echo(json.dumps(error.to_payload(), sort_keys=True), err=True)
    sys.exit(1)


def _print_table(rows) -> None:
    if not rows:
        click.echo("(no rows)")
        return
    columns = []
    for row in rows:
        for name in row:
            if name not in columns:
                columns.append(name)
    widths = {c: max(len(c), *(len(_cell(r.get(c))) for r in rows)) for c in columns}
    click.echo("  ".join(c.ljust(widths[c]) for c in columns))
    click.echo("  ".join("-" * widths[c] for c in columns))
    for row in rows:
        click.echo("  ".join(_cell(row.get(c)).ljust(widths[c]) for c in columns))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    return str(value)


config_option = click.option(
    "--config",
    envvar=CONFIG_ENV_VAR,
    type=click.Path(exists=True, dir_okay=False),
    help=f"engine config file (default: ${CONFIG_ENV_VAR})",
)


@click.group()
def main():
    """Federated data-plan engine."""


@main.command()
@config_option
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(config, port, host):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    engine = _load_engine(config)
    uvicorn.run(create_app(engine), host=host, port=port, log_level="info")


@main.group()
def registry():
    """Data registry operations."""


@registry.command("sync")
@config_option
@click.argument("source")
def registry_sync(config, source):
    """Synchronize one source's metadata subtree."""
    try:
        engine = _load_engine(config)
        entries = engine.registry.sync_source(source)
        engine.save_registries()
        click.echo(f"synced {source}: {len(entries)} entries")
    except EngineError as error:
        _fail(error)


@registry.command("search")
@config_option
@click.argument("query")
@click.option("--level", default=None, help="restrict to one metadata level")
@click.option("--k", default=10, show_default=True)
def registry_search(config, query, level, k):
    """Search metadata by keyword + embedding blend."""
    try:
        engine = _load_engine(config)
        hits = engine.registry.search_metadata(query, level_filter=level, top_k=k)
        for hit in hits:
            path = "/".join(hit.entry.path)
            click.echo(f"{hit.score:.4f}  [{hit.entry.level}] {path}  {hit.entry.description}")
        if not hits:
            click.echo("(no matches)")
    except EngineError as error:
        _fail(error)


@main.command()
@config_option
@click.argument("question")
@click.option("--session", "session_id", default=None, help="session id (fresh one by default)")
@click.option("--explain", is_flag=True, help="print per-node cost estimates")
@click.option("--answers", type=click.Path(exists=True, dir_okay=False),
              help="JSON file of scripted answers {question: answer}")
@click.option("--quality-floor", default=None, type=float, help="override objective quality floor")
def query(config, question, session_id, explain, answers, quality_floor):
    """Plan and execute a natural-language question."""
    try:
        engine = _load_engine(config)
        session = engine.sessions.get_or_create(session_id)
        objective = None
        if quality_floor is not None:
            objective = {"quality_floor": quality_floor}
        scripted = {}
        if answers:
            raw = json.loads(Path(answers).read_text(encoding="utf-8"))
            scripted = {normalize_question(q): a for q, a in raw.items()}
        plan, record = engine.answer_question(session, question, objective)
        while record.status == "suspended":
            prompt = [m for m in session.messages() if m.kind == "prompt"][-1]
            payload = prompt.payload
            key = normalize_question(payload["question"])
            if key in scripted:
                answer = scripted[key]
            else:
                click.echo(f"[prompt] {payload['question']}")
                if payload.get("output_schema"):
                    click.echo(f"  expected schema: {json.dumps(payload['output_schema'])}")
                answer = click.prompt("answer")
            record = engine.executor.resume_with_answer(session, payload["prompt_id"], answer)
        if explain:
            explained = engine.planner.explain(plan)
            for row in explained["nodes"]:
                click.echo(
                    f"{row['node_id']:>6}  {row['operator_id']:<16} rows={row['out_rows']:<8.6g} "
                    f"latency={row['latency']:<10.6g} money={row['money']:<6.4g} quality={row['quality']:.2f}"
                )
        if record.status == "failed":
            click.echo(f"plan failed: {record.error}", err=True)
            sys.exit(1)
        _print_table(record.final.rows(0) if record.final else [])
    except EngineError as error:
        _fail(error)


@main.group()
def plan():
    """Plan file operations."""


def _read_plan(path) -> DataPlan:
    return DataPlan.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


@plan.command("refine")
@config_option
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
def plan_refine(config, plan_file):
    """Refine a plan JSON file; prints the refined plan."""
    try:
        engine = _load_engine(config)
        session = engine.create_session()
        from .planner import Planner

        planner = Planner(engine.session_ctx(session), cost_model=engine.config.get("cost_model"))
        refined = planner.refine(_read_plan(plan_file))
        click.echo(json.dumps(refined.to_obj(), indent=2, sort_keys=True))
    except EngineError as error:
        _fail(error)


@plan.command("optimize")
@config_option
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--quality-floor", default=0.0, show_default=True, type=float)
def plan_optimize(config, plan_file, quality_floor):
    """Optimize a (refined) plan JSON file; prints the executable plan."""
    try:
        engine = _load_engine(config)
        session = engine.create_session()
        from .planner import Planner

        planner = Planner(engine.session_ctx(session), cost_model=engine.config.get("cost_model"))
        optimized = planner.optimize(_read_plan(plan_file), Objective(quality_floor=quality_floor))
        click.echo(json.dumps(optimized.to_obj(), indent=2, sort_keys=True))
    except EngineError as error:
        _fail(error)


@plan.command("explain")
@config_option
@click.argument("plan_file", type=click.Path(exists=True, dir_okay=False))
def plan_explain(config, plan_file):
    """Print per-node cost estimates for a plan JSON file."""
    try:
        engine = _load_engine(config)
        explained = engine.planner.explain(_read_plan(plan_file))
        for row in explained["nodes"]:
            click.echo(
                f"{row['node_id']:>6}  {row['operator_id']:<16} rows={row['out_rows']:<8.6g} "
                f"latency={row['latency']:<10.6g} money={row['money']:<6.4g} quality={row['quality']:.2f}"
            )
        total = explained["total"]
        click.echo(
            f" total  latency={total['latency']:.6g} money={total['money']:.4g} quality={total['quality']:.2f}"
        )
    except EngineError as error:
        _fail(error)


@main.group()
def fixtures():
    """Fixture management."""


@fixtures.command("load")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
def fixtures_load(directory):
    """Load a fixture directory (expects a config.json inside) and sync."""
    try:
        config_path = Path(directory) / "config.json"
        if not config_path.exists():
            raise click.UsageError(f"{directory} has no config.json")
        engine = Engine.from_config_file(config_path)
        engine.sync_all()
        engine.save_registries()
        for descriptor in engine.registry.list_sources():
            entries = engine.registry.subtree(descriptor.source_id)
            click.echo(f"{descriptor.source_id} [{descriptor.protocol}]: {len(entries)} metadata entries")
    except EngineError as error:
        _fail(error)


if __name__ == "__main__":
    main()
