"""Pydantic request/response models for the HTTP service.

Requests reference a scenario one of three ways: a bundled name, raw
scenario-file text, or an inline structured definition. Responses carry
result summaries plus ready-to-write CSV payloads so clients (including
the CLI) can materialize the standard output files without another round
trip.
"""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TargetModel(BaseModel):
    x: float
    y: float
    r: float
    alpha: float = 1.0
    sigma: float = 0.0
    mu: Union[float, list[float]]
    x0: float = 0.0


class AgentModel(BaseModel):
    A: float
    B: float
    a: float
    b: float
    phi: float = 0.0


class OptionsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Optional[Literal["P1", "P2"]] = None
    max_iters: Optional[int] = None
    step_rule: Optional[Literal["fixed", "decay", "backtracking"]] = None
    eta0: Optional[float] = None
    decay_n0: Optional[float] = None
    armijo_c: Optional[float] = None
    shrink: Optional[float] = None
    max_backtracks: Optional[int] = None
    max_move: Optional[float] = None
    grad_tol: Optional[float] = None
    rel_impr_tol: Optional[float] = None
    patience: Optional[int] = None
    step: Optional[float] = None
    event_tol: Optional[float] = None
    quad_resolution: Optional[float] = None
    lam: Optional[float] = None


class ScenarioModel(BaseModel):
    horizon: float
    a_min: float = 0.05
    targets: list[TargetModel]
    agents: list[AgentModel]
    options: Optional[OptionsModel] = None


class ScenarioRef(BaseModel):
    """Exactly one of: bundled name, raw TOML text, inline definition."""

    bundled: Optional[str] = None
    text: Optional[str] = None
    scenario: Optional[ScenarioModel] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        given = [v is not None for v in (self.bundled, self.text, self.scenario)]
        if sum(given) != 1:
            raise ValueError(
                "provide exactly one of 'bundled', 'text' or 'scenario'")
        return self


class SimulateRequest(ScenarioRef):
    options: Optional[OptionsModel] = None


class OptimizeRequest(ScenarioRef):
    options: Optional[OptionsModel] = None
    seed: Optional[int] = None
    jitter: float = 0.0


class GradcheckRequest(ScenarioRef):
    options: Optional[OptionsModel] = None
    h: float = 1e-5
    max_halvings: int = 3


class ReproduceRequest(BaseModel):
    case: Literal["fig3", "fig4"]
    options: Optional[OptionsModel] = None


class EventModel(BaseModel):
    time: float
    kind: str
    target: int
    agent: Optional[int] = None


class SimulateResponse(BaseModel):
    horizon: float
    n_agents: int
    n_targets: int
    j1_time_avg: float
    x_final: list[float]
    event_count: int
    events: list[EventModel]
    warnings: list[str]
    trace_csv: str
    events_csv: str


class RunReportModel(BaseModel):
    mode: str
    J: float
    J1: float
    J2: float
    iterations: int
    wall_time_s: float
    stop_reason: str
    event_counts: dict[str, int]
    targets_visited: list[int]
    warnings: list[str] = Field(default_factory=list)
    context: dict[str, float] = Field(default_factory=dict)
    files: list[str] = Field(default_factory=list)


class OptimizeResponse(BaseModel):
    report: RunReportModel
    initial_J: float
    initial_J1: float
    initial_J2: float
    final_theta: list[float]
    history_csv: str
    trace_csv: str
    events_csv: str
    polyline_csv: str


class GradcheckRow(BaseModel):
    name: str
    ipa: float
    fd: float
    rel_err: Optional[float] = None
    checked: bool
    ok: bool
    h: float


class GradcheckResponse(BaseModel):
    mode: str
    rows: list[GradcheckRow]
    max_rel_err: float
    all_ok: bool
    gradcheck_csv: str


class JobAccepted(BaseModel):
    job_id: str


class JobStatus(BaseModel):
    job_id: str
    status: Literal["queued", "running", "done", "error"]
    result: Optional[OptimizeResponse] = None
    error: Optional[str] = None


class ScenarioListing(BaseModel):
    names: list[str]


class ScenarioText(BaseModel):
    name: str
    text: str


class HealthResponse(BaseModel):
    status: str
    version: str
