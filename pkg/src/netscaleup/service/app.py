"""FastAPI application exposing the estimation pipeline.

Endpoints mirror the CLI subcommands one-to-one; the CLI is a thin client
of ``ops`` and remote callers get the same behavior over HTTP.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..model import ValidationError
from . import models, ops


def create_app() -> FastAPI:
    app = FastAPI(
        title="netscaleup",
        description=(
            "Bayesian size estimation for hard-to-reach populations from "
            "network scale-up survey data"
        ),
        version=__version__,
    )

    @app.exception_handler(ValidationError)
    async def _validation_handler(request, exc: ValidationError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health", response_model=models.HealthResponse)
    def health() -> models.HealthResponse:
        return models.HealthResponse(status="ok", version=__version__)

    @app.post("/estimate", response_model=models.EstimateResponse)
    def estimate(request: models.EstimateRequest) -> models.EstimateResponse:
        return ops.estimate(request)

    @app.post("/simulate", response_model=models.SimulateResponse)
    def simulate(request: models.SimulateRequest) -> models.SimulateResponse:
        return ops.simulate(request)

    @app.post("/diagnose", response_model=models.DiagnoseResponse)
    def diagnose(request: models.DiagnoseRequest) -> models.DiagnoseResponse:
        return ops.diagnose_draws(request)

    @app.post("/benchmark", response_model=models.BenchmarkResponse)
    def benchmark(request: models.BenchmarkRequest) -> models.BenchmarkResponse:
        return ops.benchmark(request)

    return app


app = create_app()
