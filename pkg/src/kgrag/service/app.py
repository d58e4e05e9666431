"""FastAPI service wrapping the engine.

The graph, embedding cache, and backends live in the application state, so
one long-running process serves many clients without re-ingesting the KG.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..bench.grid import RunManifest
from ..config import RunConfig
from ..errors import (
    BackendError,
    ConfigError,
    DataError,
    EntityNotFound,
    KgragError,
)
from ..runtime import Engine, version_string
from .models import (
    AnswerRecordModel,
    AskRequest,
    BenchRequest,
    BenchResponse,
    ConfigResponse,
    HealthResponse,
    IngestRequest,
    RetrieveRequest,
    RetrieveResponse,
    StatsResponse,
    WarmCacheResponse,
)

logger = logging.getLogger(__name__)


def _status_for(exc: KgragError) -> int:
    if isinstance(exc, EntityNotFound):
        return 404
    if isinstance(exc, ConfigError):
        return 400
    if isinstance(exc, DataError):
        return 422
    if isinstance(exc, BackendError):
        return 502
    return 500


def create_app(config: RunConfig | None = None, engine: Engine | None = None) -> FastAPI:
    if engine is None:
        engine = Engine(config or RunConfig())

    app = FastAPI(title="kgrag", version=version_string())
    app.state.engine = engine

    @app.exception_handler(KgragError)
    async def kgrag_error_handler(_request: Request, exc: KgragError):
        payload = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        if isinstance(exc, ConfigError) and exc.problems:
            payload["error"]["problems"] = exc.problems
        return JSONResponse(status_code=_status_for(exc), content=payload)

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(
            status="ok", version=version_string(), graph_loaded=engine.graph_loaded
        )

    @app.get("/config", response_model=ConfigResponse)
    def config_echo():
        return ConfigResponse(config=engine.config.to_echo_dict())

    @app.get("/stats", response_model=StatsResponse)
    def stats():
        return StatsResponse(**engine.stats_payload())

    @app.post("/ingest", response_model=StatsResponse)
    def ingest(request: IngestRequest):
        engine.rebuild_graph(request.kb_path)
        return StatsResponse(**engine.stats_payload())

    @app.post("/retrieve", response_model=RetrieveResponse)
    def retrieve(request: RetrieveRequest):
        hops = engine.retrieve_payload(
            request.entities, request.n_hops, request.direction
        )
        return RetrieveResponse(hops=hops)

    @app.post("/ask", response_model=AnswerRecordModel)
    def ask(request: AskRequest):
        record = engine.ask(
            question=request.question,
            entities=request.entities,
            variant=request.variant,
            n_hops=request.n_hops,
            top_k=request.top_k,
            direction=request.direction,
            seed=request.seed,
        )
        return AnswerRecordModel(**record.to_dict())

    @app.post("/warm-cache", response_model=WarmCacheResponse)
    def warm_cache():
        return WarmCacheResponse(**engine.warm_cache())

    @app.post("/bench", response_model=BenchResponse)
    def bench(request: BenchRequest):
        if request.manifest is None and request.manifest_path is None:
            raise ConfigError("bench request needs 'manifest' or 'manifest_path'")
        if request.manifest is not None:
            manifest = RunManifest.from_dict(request.manifest)
        else:
            manifest = RunManifest.from_file(request.manifest_path)
        plan = engine.bench_plan(manifest)
        if request.dry_run:
            return BenchResponse(plan=plan)
        results, files = engine.run_bench(manifest, results_dir=request.results_dir)
        return BenchResponse(
            plan=plan, results=[r.to_dict() for r in results], files=files or None
        )

    return app
