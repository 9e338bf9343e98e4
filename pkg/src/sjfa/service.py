"""HTTP front end: one POST endpoint per run mode, wrapping the runners.

Requests carry the same document the TOML configs hold; responses return
the emitted files as text plus the invariant report, so any client can
persist byte-identical outputs.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import __version__
from .errors import ConfigError, SjfaError
from .runconfig import RunConfig
from .runners import run


class InvariantReport(BaseModel):
    name: str
    passed: bool
    detail: str


class RunResponse(BaseModel):
    ok: bool
    manifest: dict
    files: dict[str, str]
    invariants: list[InvariantReport]


class HealthResponse(BaseModel):
    status: str
    version: str


def create_app() -> FastAPI:
    app = FastAPI(
        title="sjfa",
        description="SJF-with-aging queues: fluid limits, simulation, and "
                    "fluid-vs-simulation distance experiments.",
        version=__version__,
    )

    @app.get("/healthz", response_model=HealthResponse)
    def healthz():
        return HealthResponse(status="ok", version=__version__)

    def _execute(cfg: RunConfig, expected_mode: str) -> RunResponse:
        if cfg.mode != expected_mode:
            raise HTTPException(
                status_code=422,
                detail=f'config mode "{cfg.mode}" does not match endpoint '
                       f'"/{expected_mode}"')
        try:
            result = run(cfg)
        except ConfigError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except SjfaError as exc:
            raise HTTPException(status_code=500,
                                detail=f"{type(exc).__name__}: {exc}") from exc
        return RunResponse(**result.response_payload())

    @app.post("/fluid", response_model=RunResponse)
    def fluid(cfg: RunConfig):
        return _execute(cfg, "fluid")

    @app.post("/simulate", response_model=RunResponse)
    def simulate(cfg: RunConfig):
        return _execute(cfg, "simulate")

    @app.post("/compare", response_model=RunResponse)
    def compare(cfg: RunConfig):
        return _execute(cfg, "compare")

    return app


app = create_app()
