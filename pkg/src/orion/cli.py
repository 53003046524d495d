"""Operator command line: serve, one-shot runs, trace inspection, eval flows."""
from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from orion import evalharness
from orion.errors import OrionError
from orion.fixtures.media import FixtureError, load_fixture
from orion.model.types import ContentPart, Message, Role, parse_model_id
from orion.service.config import ServiceConfig
from orion.service.controller import AgentController
from orion.structured import parse_response_format

_MIME_BY_SUFFIX = {
    ".json": "application/json",
    ".pdf": "application/pdf",
    ".png": "image/png",
    ".jpg": "image/jpeg",
    ".jpeg": "image/jpeg",
    ".pgm": "image/x-portable-graymap",
}


def _load_config(config_path: Optional[str]) -> ServiceConfig:
    if config_path:
        return ServiceConfig.load(Path(config_path))
    return ServiceConfig.from_env()


def _controller(config_path: Optional[str]) -> AgentController:
    return AgentController(_load_config(config_path))


def _emit(doc, as_json: bool, human: str) -> None:
    click.echo(json.dumps(doc, indent=1, sort_keys=True) if as_json else human)


@click.group()
def cli() -> None:
    """Visual-agent service and tooling."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path: Optional[str], host: Optional[str], port: Optional[int]) -> None:
    """Start the HTTP service."""
    import uvicorn

    from orion.service.app import create_app

    config = _load_config(config_path)
    uvicorn.run(create_app(config), host=host or config.host, port=port or config.port)


@cli.command()
@click.argument("instruction")
@click.argument("files", nargs=-1, type=click.Path(exists=True))
@click.option("--schema", "schema_path", type=click.Path(exists=True), default=None)
@click.option("--mode", type=click.Choice(["auto", "fast"]), default="fast")
@click.option("--session", "session_id", default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
def run(
    instruction: str,
    files: tuple[str, ...],
    schema_path: Optional[str],
    mode: str,
    session_id: Optional[str],
    config_path: Optional[str],
    as_json: bool,
) -> None:
    """One-shot completion over local files; prints the answer and trace summary."""
    controller = _controller(config_path)
    parts = [ContentPart.of_text(instruction)]
    for raw in files:
        path = Path(raw)
        mime = _MIME_BY_SUFFIX.get(path.suffix.lower(), "application/octet-stream")
        stored = controller.store.put(path.read_bytes(), mime, name=path.name)
        parts.append(ContentPart.of_file(stored.id))
    schema = None
    if schema_path:
        doc = json.loads(Path(schema_path).read_text())
        schema = parse_response_format({"type": "json_schema", "schema": doc})

    outcome = controller.complete(
        parse_model_id(f"orion/agent:{mode}"),
        [Message.of(Role.user, parts)],
        final_schema=schema,
        session_id=session_id,
    )
    trace = controller.load_trace(outcome.trace_id) or {}
    steps = trace.get("steps", [])
    if as_json:
        _emit(
            {"answer": outcome.content, "trace_id": outcome.trace_id, "steps": steps},
            True,
            "",
        )
        return
    click.echo(outcome.content)
    click.echo(f"-- trace {outcome.trace_id}")
    tool_by_node = {n["id"]: n["tool"] for n in trace.get("plan", {}).get("nodes", [])}
    for step in steps:
        tool = tool_by_node.get(step["node_id"], "?")
        click.echo(f"   {step['node_id']} {tool}: {step['result']['status']}")


@cli.group()
def trace() -> None:
    """Inspect persisted run traces."""


@trace.command("show")
@click.argument("trace_id")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
def trace_show(trace_id: str, config_path: Optional[str], as_json: bool) -> None:
    """Print a trace's plan DAG, step statuses, and reflection verdicts."""
    controller = _controller(config_path)
    doc = controller.load_trace(trace_id)
    if doc is None:
        raise click.ClickException(f"no trace {trace_id}")
    if as_json:
        _emit(doc, True, "")
        return
    click.echo(f"trace {doc['trace_id']} [{doc['status']}]")
    tier = doc.get("routing", {}).get("tier")
    if tier:
        click.echo(f"tier: {tier}" + (" (escalated)" if doc["routing"].get("escalated") else ""))
    for node in doc.get("plan", {}).get("nodes", []):
        deps = sorted(
            {b["ref"]["node"] for b in node.get("inputs", {}).values() if "ref" in b}
        )
        click.echo(f"  {node['id']} {node['tool']}  after: {', '.join(deps) or '-'}")
    attempts: dict[str, int] = {}
    last_status: dict[str, str] = {}
    for step in doc.get("steps", []):
        attempts[step["node_id"]] = step["attempt"]
        last_status[step["node_id"]] = step["result"]["status"]
    for node_id in sorted(last_status):
        line = f"  {node_id}: {last_status[node_id]}"
        if attempts[node_id] > 1:
            line += f" (attempts {attempts[node_id]})"
        click.echo(line)
    for i, verdict in enumerate(doc.get("reflection", []), start=1):
        click.echo(f"  round {i}: {verdict['action']} — {verdict.get('reason', '')}")


@cli.group()
def tools() -> None:
    """Tool registry inspection."""


@tools.command("list")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
def tools_list(config_path: Optional[str], as_json: bool) -> None:
    """List registered tools with category, cost, and tier."""
    controller = _controller(config_path)
    descriptors = controller.registry.list()
    if as_json:
        _emit([d.to_json() for d in descriptors], True, "")
        return
    width = max(len(d.name) for d in descriptors)
    for d in descriptors:
        click.echo(f"{d.name:<{width}}  {d.category.value:<8}  {d.cost_hint.value:<6}  {d.tier.value}")


@cli.group()
def fixtures() -> None:
    """Fixture file management."""


@fixtures.command("validate")
@click.argument("paths", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def fixtures_validate(paths: tuple[str, ...], as_json: bool) -> None:
    """Check fixture files; fails on the first invalid one."""
    checked = []
    for raw in paths:
        try:
            fx = load_fixture(Path(raw))
        except (FixtureError, json.JSONDecodeError, OSError) as exc:
            raise click.ClickException(f"{raw}: {exc}")
        checked.append({"path": raw, "kind": fx.kind})
    if as_json:
        _emit(checked, True, "")
        return
    for entry in checked:
        click.echo(f"{entry['path']}: ok ({entry['kind']})")


@cli.group(name="eval")
def eval_group() -> None:
    """Blind-evaluation workflow: assign, ingest, report, bench."""


@eval_group.command()
@click.option("--tasks", required=True, help="comma-separated task ids")
@click.option("--models", required=True, help="comma-separated model names (max 4)")
@click.option("--evaluators", required=True, help="comma-separated evaluator ids (min 3)")
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
def assign(tasks: str, models: str, evaluators: str, seed: int, out_path: Optional[str]) -> None:
    """Draw blinded label assignments; deterministic under the seed."""
    split = lambda s: [t.strip() for t in s.split(",") if t.strip()]
    assignments = evalharness.assign_blind(split(tasks), split(models), split(evaluators), seed)
    text = evalharness.assignments_to_json(assignments)
    if out_path:
        Path(out_path).write_text(text)
        click.echo(f"wrote {len(assignments)} assignments to {out_path}")
    else:
        click.echo(text)


@eval_group.command()
@click.argument("scores_csv", type=click.Path(exists=True))
def ingest(scores_csv: str) -> None:
    """Parse a blinded score CSV and echo the normalized rows."""
    records = evalharness.read_scores_csv(Path(scores_csv).read_text().splitlines())
    rows = [
        {
            "task_id": r.task_id,
            "evaluator_id": r.evaluator_id,
            "label": r.label,
            "composite": evalharness.composite(r.sheet),
        }
        for r in records
    ]
    _emit(rows, True, "")


@eval_group.command()
@click.argument("scores_csv", type=click.Path(exists=True))
@click.argument("assignments_json", type=click.Path(exists=True))
@click.option("--categories", "categories_path", type=click.Path(exists=True), default=None)
@click.option("--markdown", "as_markdown", is_flag=True)
def report(
    scores_csv: str,
    assignments_json: str,
    categories_path: Optional[str],
    as_markdown: bool,
) -> None:
    """Unblind scores against the assignment file and aggregate."""
    records = evalharness.read_scores_csv(Path(scores_csv).read_text().splitlines())
    assignments = evalharness.assignments_from_json(Path(assignments_json).read_text())
    categories = json.loads(Path(categories_path).read_text()) if categories_path else None
    result = evalharness.aggregate(records, assignments, task_categories=categories)
    click.echo(result.to_markdown() if as_markdown else json.dumps(result.to_json(), indent=1, sort_keys=True))


@eval_group.command()
@click.option("--endpoint", default=None, help="service base URL; omit to run in-process")
@click.option("--api-key", default=None)
@click.option("--concurrency", type=int, default=4)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def bench(
    endpoint: Optional[str], api_key: Optional[str], concurrency: int, config_path: Optional[str]
) -> None:
    """Run the bundled toy benchmark against the service."""
    items = evalharness.toy_benchmark()
    if endpoint:
        ask = evalharness.http_endpoint(endpoint, api_key=api_key)
    else:
        controller = _controller(config_path)

        def ask(prompt, files):
            parts = [ContentPart.of_text(prompt)]
            for path in files:
                stored = controller.store.put(path.read_bytes(), "application/json", name=path.name)
                parts.append(ContentPart.of_file(stored.id))
            outcome = controller.complete(
                parse_model_id("orion/agent:fast"), [Message.of(Role.user, parts)]
            )
            return outcome.content

    run_record = evalharness.run_benchmark(items, ask, concurrency=concurrency)
    _emit(run_record.to_json(), True, "")
    if run_record.correct < run_record.total:
        raise click.ClickException(f"{run_record.total - run_record.correct} benchmark items failed")


@cli.group()
def store() -> None:
    """Artifact store maintenance."""


@store.command("prune")
@click.option("--older-than", "older_than_s", type=int, required=True, help="age threshold in seconds")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def store_prune(older_than_s: int, config_path: Optional[str]) -> None:
    """Drop stored files older than the threshold."""
    controller = _controller(config_path)
    removed = controller.store.prune(older_than_s)
    click.echo(f"removed {removed} files")


def main(argv: Optional[list[str]] = None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except OrionError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:  # internal faults get a distinct exit code
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
