"""FastAPI application exposing the trajectory-optimization toolkit.

Fast operations (simulate, gradcheck) run synchronously; optimizations and
the bundled reproduction cases run as background jobs polled through
/jobs/{job_id}.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..errors import HarvestOptError, ParseError, ScenarioError
from ..scenario import bundled_scenario_names, load_bundled, dumps_scenario
from . import schemas as sm
from .handlers import handle_gradcheck, handle_optimize, handle_reproduce, handle_simulate
from .jobs import JobRegistry


def create_app() -> FastAPI:
    app = FastAPI(
        title="harvestopt",
        version=__version__,
        description="Multi-agent data-harvesting trajectory optimization "
                    "with event-driven sample-path gradients.",
    )
    jobs = JobRegistry()
    app.state.jobs = jobs

    @app.exception_handler(HarvestOptError)
    async def _domain_error(request, exc):
        from fastapi.responses import JSONResponse
        status = 422 if isinstance(exc, ScenarioError) else 400
        return JSONResponse(
            status_code=status,
            content={"detail": f"{type(exc).__name__}: {exc}"})

    @app.get("/health", response_model=sm.HealthResponse)
    def health():
        return sm.HealthResponse(status="ok", version=__version__)

    @app.get("/scenarios", response_model=sm.ScenarioListing)
    def scenarios():
        return sm.ScenarioListing(names=bundled_scenario_names())

    @app.get("/scenarios/{name}", response_model=sm.ScenarioText)
    def scenario_text(name: str):
        try:
            scenario, opts = load_bundled(name)
        except ParseError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return sm.ScenarioText(name=name, text=dumps_scenario(scenario, opts))

    @app.post("/simulate", response_model=sm.SimulateResponse)
    def simulate_route(req: sm.SimulateRequest):
        return handle_simulate(req)

    @app.post("/gradcheck", response_model=sm.GradcheckResponse)
    def gradcheck_route(req: sm.GradcheckRequest):
        return handle_gradcheck(req)

    @app.post("/optimize", response_model=sm.JobAccepted, status_code=202)
    def optimize_route(req: sm.OptimizeRequest):
        job_id = jobs.submit(lambda: handle_optimize(req))
        return sm.JobAccepted(job_id=job_id)

    @app.post("/reproduce", response_model=sm.JobAccepted, status_code=202)
    def reproduce_route(req: sm.ReproduceRequest):
        job_id = jobs.submit(lambda: handle_reproduce(req))
        return sm.JobAccepted(job_id=job_id)

    @app.get("/jobs/{job_id}", response_model=sm.JobStatus)
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail=f"no job {job_id!r}")
        return sm.JobStatus(job_id=job.job_id, status=job.status,
                            result=job.result, error=job.error)

    return app
