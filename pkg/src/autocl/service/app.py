"""HTTP wiring: each route delegates to the matching operation.

Error mapping is uniform: config problems return 422, data problems 400,
numeric failures 500, always as {"error": {"kind", "message"}}.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import AutoCLError
from . import models as m
from . import ops

STATUS_BY_KIND = {"config": 422, "data": 400, "numeric": 500, "error": 500}


def create_app() -> FastAPI:
    app = FastAPI(title="autocl", version=__version__)

    @app.exception_handler(AutoCLError)
    async def _package_error(request: Request, exc: AutoCLError) -> JSONResponse:
        return JSONResponse(
            status_code=STATUS_BY_KIND.get(exc.kind, 500),
            content={"error": {"kind": exc.kind, "message": str(exc)}},
        )

    @app.get("/health", response_model=m.HealthResponse)
    def health() -> m.HealthResponse:
        return m.HealthResponse(status="ok", version=__version__)

    @app.post("/search", response_model=m.SearchResponse)
    def search(req: m.SearchRequest) -> m.SearchResponse:
        return ops.run_search(req)

    @app.post("/evaluate", response_model=m.EvaluateResponse)
    def evaluate(req: m.EvaluateRequest) -> m.EvaluateResponse:
        return ops.run_evaluate(req)

    @app.post("/pretrain", response_model=m.PretrainResponse)
    def pretrain(req: m.PretrainRequest) -> m.PretrainResponse:
        return ops.run_pretrain(req)

    @app.post("/ggs", response_model=m.GgsResponse)
    def ggs(req: m.GgsRequest) -> m.GgsResponse:
        return ops.run_ggs(req)

    @app.post("/report", response_model=m.ReportResponse)
    def report(req: m.ReportRequest) -> m.ReportResponse:
        return ops.run_report(req)

    @app.post("/ablate", response_model=m.AblateResponse)
    def ablate(req: m.AblateRequest) -> m.AblateResponse:
        return ops.run_ablate(req)

    return app


app = create_app()
