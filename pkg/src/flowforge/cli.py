"""Command-line surface: validate, run, serve, inspect."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .codec import to_plain
from .engine import Runtime, Status
from .errors import FlowforgeError
from .invoker import default_registry
from .model import derive_entity_schemas, implementation_kind, resolve_type_ref
from .printer import print_expr
from .runner import IoScript, decode_io_values, report_for, run_flow, run_with_script
from .source import Severity
from .store import DocumentStore
from .validator import load_bundle
from .values import Value

STATE_ROOT_ENV = "FLOWFORGE_STATE_ROOT"


@click.group()
@click.version_option(package_name="flowforge")
def main():
    """Model toolchain and native execution engine for domain/bindings/flow files."""


def _load(paths, fmt: str | None = None):
    bundle, parse_diags = load_bundle(list(paths))
    return bundle, parse_diags


def _emit_diagnostics(bundle, parse_diags, fmt: str):
    diagnostics = parse_diags + bundle.report.diagnostics
    if fmt == "json":
        click.echo(json.dumps({
            "ok": bundle.ok and not parse_diags,
            "inferredStart": bundle.inferred_start,
            "diagnostics": [d.to_json() for d in diagnostics],
        }, indent=2))
    else:
        for d in diagnostics:
            click.echo(d.render())
        errors = sum(d.severity is Severity.ERROR for d in diagnostics)
        warnings = len(diagnostics) - errors
        status = "ok" if errors == 0 else "invalid"
        click.echo(f"{status}: {errors} error(s), {warnings} warning(s)")


@main.command()
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
def validate(paths, fmt):
    """Parse and validate model files; exit 0 only when error-free."""
    bundle, parse_diags = _load(paths)
    _emit_diagnostics(bundle, parse_diags, fmt)
    sys.exit(0 if bundle.ok and not parse_diags else 1)


@main.command()
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--flow", "flow_name", default=None,
              help="Flow to run (defaults to the bundle's flow).")
@click.option("--io-script", "io_script_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON array of {io, values} answering IO requests in order.")
@click.option("--interactive", is_flag=True,
              help="Answer IO requests from terminal prompts instead of a script.")
@click.option("--store", "store_root", type=click.Path(file_okay=False), required=True,
              help="Document store root directory.")
@click.option("--state", "state_root", type=click.Path(file_okay=False), default=None,
              envvar=STATE_ROOT_ENV, help="Instance image directory (optional).")
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
def run(paths, flow_name, io_script_path, interactive, store_root, state_root, fmt):
    """Run a flow to completion, answering IO from a script or the terminal."""
    bundle, parse_diags = _load(paths)
    if not bundle.ok or parse_diags:
        _emit_diagnostics(bundle, parse_diags, "text")
        sys.exit(1)
    if bundle.flow is None:
        raise click.UsageError("no .flow file in the bundle")
    flow_name = flow_name or bundle.flow.name
    if interactive:
        responder = _prompt_responder
    elif io_script_path:
        script = IoScript.load(io_script_path)
        responder = lambda _rt, req: script.next_for(req)  # noqa: E731
    else:
        raise click.UsageError("pass --io-script FILE or --interactive")

    with DocumentStore(store_root, bundle.entity_schemas()) as store:
        runtime = Runtime(bundle, store, state_root=state_root)
        try:
            instance = run_flow(runtime, flow_name, responder)
        except FlowforgeError as exc:
            click.echo(f"error[{exc.code}] {exc}", err=True)
            sys.exit(1)
    report = report_for(instance)
    if fmt == "json":
        click.echo(json.dumps(report.to_json(), indent=2))
    else:
        click.echo(report.render())
    sys.exit(0 if instance.status is Status.COMPLETED else 1)


def _prompt_responder(runtime: Runtime, request) -> dict:
    click.echo(f"io {request.io_name} (request {request.request_id})")
    for name, value in request.published.items():
        click.echo(f"  {name} = "
                   + json.dumps(to_plain(value, blobs=runtime.blobs,
                                         inline_images=True)))
    wire: dict = {}
    for name, ref in request.expected:
        hint = (ref.target.value if ref.is_basic else ref.target) + (
            " (set)" if ref.is_set else "")
        raw = click.prompt(f"  {name} [{hint}]", default="", show_default=False)
        wire[name] = _parse_prompt_value(raw, ref)
    return wire


def _parse_prompt_value(raw: str, ref):
    from .values import BasicType

    if ref.is_set or not ref.is_basic:
        return json.loads(raw) if raw else []
    basic = ref.target
    if basic is BasicType.INTEGER:
        return int(raw)
    if basic is BasicType.FLOAT:
        return float(raw)
    if basic is BasicType.BOOLEAN:
        return raw.strip().lower() in ("y", "yes", "true", "1")
    if basic is BasicType.LOCATION:
        lat, lon = (part.strip() for part in raw.split(","))
        return {"lat": float(lat), "lon": float(lon)}
    return raw


@main.command()
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--store", "store_root", type=click.Path(file_okay=False), required=True)
@click.option("--state", "state_root", type=click.Path(file_okay=False), default=None,
              envvar=STATE_ROOT_ENV)
@click.option("--bind", default="127.0.0.1:8700", help="host:port to listen on")
@click.option("--console", "console_dir", type=click.Path(file_okay=False), default=None,
              help="Directory with the web console's static assets.")
def serve(paths, store_root, state_root, bind, console_dir):
    """Serve the HTTP API (and optionally the web console) for one bundle."""
    import uvicorn

    from .api import create_app

    bundle, parse_diags = _load(paths)
    if not bundle.ok or parse_diags:
        _emit_diagnostics(bundle, parse_diags, "text")
        sys.exit(1)
    store = DocumentStore(store_root, bundle.entity_schemas())
    runtime = Runtime(bundle, store, state_root=state_root)
    app = create_app(runtime, console_dir=console_dir)
    host, _, port = bind.partition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8700),
                    log_level="warning")
    finally:
        store.close()


@main.command()
@click.argument("paths", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
def inspect(paths):
    """Summarize a bundle: elements, derived entity schemas, flow shape."""
    bundle, parse_diags = _load(paths)
    for d in parse_diags + bundle.report.diagnostics:
        click.echo(d.render())
    for dom in bundle.domains.values():
        click.echo(f"domain {dom.name}: {len(dom.types)} types,"
                   f" {len(dom.services)} services, {len(dom.ios)} ios,"
                   f" {len(dom.activities)} activities")
        for schema in derive_entity_schemas(dom):
            fields = ", ".join(
                f"{f.path}:{'set ' if f.repeated else ''}"
                f"{f.basic.value if f.basic else f.type_name}"
                for f in schema.fields)
            click.echo(f"  entity {schema.collection} [{fields}]")
    for service, (binding, abr) in sorted(bundle.bindings.items()):
        click.echo(f"binding {service} as {implementation_kind(binding.implementation)}"
                   f" (from {abr.name})")
    if bundle.flow is not None:
        flow = bundle.flow
        click.echo(f"flow {flow.name} uses {', '.join(flow.uses)}:"
                   f" {len(flow.steps)} steps, {len(flow.transitions)} transitions")
        if bundle.inferred_start:
            click.echo(f"  start: {bundle.inferred_start}")
        for t in flow.transitions:
            cond = f" when {print_expr(t.condition)}" if t.condition else ""
            click.echo(f"  {t.source} -> {t.target}{cond}")
    sys.exit(0 if bundle.ok and not parse_diags else 1)


if __name__ == "__main__":
    main()
