"""Thin command-line client for the run service.

Subcommands mirror the endpoints. By default requests go to an in-process
instance of the service over an ASGI transport; pass --server to talk to a
remote one. The client only parses configs, ships them, and writes the
returned files; all computation lives behind the HTTP surface.

Exit codes: 0 on success with all invariants passing, 1 when any model
invariant failed (the failing names are printed), 2 on configuration or
transport errors.
"""

from __future__ import annotations

import asyncio
import csv
import sys
from pathlib import Path

import click
import httpx

from .errors import ConfigError
from .runconfig import RunConfig, load_config_file


def _post(server: str | None, endpoint: str, payload: dict) -> dict:
    async def go():
        if server:
            transport = None
            base = server.rstrip("/")
        else:
            from .service import app

            transport = httpx.ASGITransport(app=app)
            base = "http://sjfa.local"
        async with httpx.AsyncClient(transport=transport, base_url=base,
                                     timeout=None) as client:
            resp = await client.post(endpoint, json=payload)
            if resp.status_code == 422:
                detail = resp.json().get("detail", resp.text)
                raise ConfigError(f"config rejected: {detail}")
            resp.raise_for_status()
            return resp.json()

    return asyncio.run(go())


def _load_trace_file(path: Path) -> list[dict]:
    """Read a job trace CSV (columns i,tau,size[,prime_priority])."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"tau", "size"} <= set(reader.fieldnames):
            raise ConfigError(f"trace file {path} needs tau and size columns")
        for rec in reader:
            rows.append({"tau": float(rec["tau"]), "size": float(rec["size"])})
    return rows


def _prepare_config(config_path: str, mode: str, seed, threads) -> dict:
    raw_path = Path(config_path)
    cfg = load_config_file(str(raw_path))
    doc = cfg.canonical()
    if doc["mode"] != mode:
        raise ConfigError(f'config mode "{doc["mode"]}" does not match the '
                          f'"{mode}" subcommand')
    if seed is not None:
        doc["seed"] = int(seed)
    if threads is not None:
        if doc.get("compare") is None:
            raise ConfigError("--threads applies to compare runs only")
        doc["compare"]["threads"] = int(threads)
    # a trace given as a file path is inlined client-side
    sim = doc.get("simulate")
    if sim is not None and isinstance(sim.get("trace"), str):
        sim["trace"] = _load_trace_file(raw_path.parent / sim["trace"])
    RunConfig.model_validate(doc)  # fail fast with key diagnostics
    return doc


def _write_outputs(out_dir: str, files: dict[str, str]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text, encoding="utf-8")


def _run_mode(mode: str, config, out, seed, threads, server) -> int:
    try:
        doc = _prepare_config(config, mode, seed, threads)
        result = _post(server, f"/{mode}", doc)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except httpx.HTTPError as exc:
        click.echo(f"transport error: {exc}", err=True)
        return 2
    _write_outputs(out, result["files"])
    failed = [inv for inv in result["invariants"] if not inv["passed"]]
    for inv in result["invariants"]:
        status = "ok" if inv["passed"] else "FAILED"
        click.echo(f"[{status}] {inv['name']}: {inv['detail']}")
    click.echo(f"wrote {len(result['files'])} files to {out}")
    if failed:
        click.echo("failed invariants: " + ", ".join(i["name"] for i in failed),
                   err=True)
        return 1
    return 0


_COMMON = [
    click.option("--config", required=True, type=click.Path(exists=True),
                 help="TOML run configuration (or a manifest.json)."),
    click.option("--out", required=True, type=click.Path(),
                 help="Directory the returned files are written to."),
    click.option("--seed", type=int, default=None,
                 help="Override the config seed."),
    click.option("--server", default=None,
                 help="Base URL of a running service; default is in-process."),
]


def _common(fn):
    for opt in reversed(_COMMON):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """SJF-with-aging queues: fluid limits, simulation, convergence checks."""


@main.command()
@_common
def fluid(config, out, seed, server):
    """Solve the fluid model and emit the (t, x) surface CSV."""
    sys.exit(_run_mode("fluid", config, out, seed, None, server))


@main.command()
@_common
def simulate(config, out, seed, server):
    """Run one pre-limit simulation; emit event log and empirical grid."""
    sys.exit(_run_mode("simulate", config, out, seed, None, server))


@main.command()
@_common
@click.option("--threads", type=int, default=None,
              help="Parallel replications for the experiment.")
def compare(config, out, seed, server, threads):
    """Run the simulation-to-fluid distance experiment."""
    sys.exit(_run_mode("compare", config, out, seed, threads, server))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8734, show_default=True, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("sjfa.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
