"""CSV emitters and the run report.

All floating-point values are printed with 9 significant digits; column
orders are part of the tool's external contract and must not change.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from .optimizer import OptHistory, param_names
from .scenario import Scenario, SolverOptions
from .simulation import SimTrace, _AgentGrid


def _f(v: float) -> str:
    return f"{v:.9g}"


def trace_csv(trace: SimTrace) -> str:
    """Sample rows: t, agent_id, s_x, s_y, then one backlog column per
    target (repeated on each agent's row)."""
    n_targets = trace.x.shape[1]
    n_agents = trace.positions.shape[1]
    header = "t,agent_id,s_x,s_y," + ",".join(
        f"x_{i}" for i in range(n_targets))
    lines = [header]
    for s in range(len(trace.times)):
        xs = ",".join(_f(v) for v in trace.x[s])
        for j in range(n_agents):
            px, py = trace.positions[s, j]
            lines.append(f"{_f(trace.times[s])},{j},{_f(px)},{_f(py)},{xs}")
    return "\n".join(lines) + "\n"


def events_csv(trace: SimTrace) -> str:
    lines = ["time,kind,target_id,agent_id"]
    for e in trace.events:
        agent = "" if e.agent is None else str(e.agent)
        lines.append(f"{_f(e.time)},{e.kind.value},{e.target},{agent}")
    return "\n".join(lines) + "\n"


def history_csv(history: OptHistory, n_agents: int) -> str:
    header = "iter,J,J1,J2,step,grad_norm," + ",".join(param_names(n_agents))
    lines = [header]
    for r in history.records:
        theta = ",".join(_f(v) for v in r.theta)
        lines.append(
            f"{r.n},{_f(r.j)},{_f(r.j1)},{_f(r.j2)},{_f(r.step)},"
            f"{_f(r.grad_norm)},{theta}")
    return "\n".join(lines) + "\n"


def polyline_csv(scenario: Scenario, agents, n_samples: int = 1000) -> str:
    """Plot-ready positions at uniform times over the horizon."""
    ts = np.linspace(0.0, scenario.horizon, n_samples)
    opts = SolverOptions()
    h_req = opts.step_for(scenario.horizon)
    n_steps = max(2, int(round(scenario.horizon / h_req)))
    t_nodes = np.linspace(0.0, scenario.horizon, n_steps + 1)
    lines = ["t,agent,x,y"]
    grids = [_AgentGrid(p, t_nodes) for p in agents]
    for j, grid in enumerate(grids):
        for t in ts:
            px, py = grid.xy_at(float(t))
            lines.append(f"{_f(t)},{j},{_f(px)},{_f(py)}")
    return "\n".join(lines) + "\n"


def gradcheck_csv(rows) -> str:
    lines = ["param,ipa,fd,rel_err,seq_preserved,h"]
    for r in rows:
        rel = "" if not r["checked"] else _f(r["rel_err"])
        lines.append(f"{r['name']},{_f(r['ipa'])},{_f(r['fd'])},{rel},"
                     f"{int(r['checked'])},{_f(r['h'])}")
    return "\n".join(lines) + "\n"


@dataclass
class RunReport:
    mode: str
    j: float
    j1: float
    j2: float
    iterations: int
    wall_time: float
    stop_reason: str
    event_counts: dict
    targets_visited: list
    warnings: list = dfield(default_factory=list)
    context: dict = dfield(default_factory=dict)
    files: list = dfield(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "J": self.j,
            "J1": self.j1,
            "J2": self.j2,
            "iterations": self.iterations,
            "wall_time_s": self.wall_time,
            "stop_reason": self.stop_reason,
            "event_counts": self.event_counts,
            "targets_visited": self.targets_visited,
            "warnings": self.warnings,
            "context": self.context,
            "files": self.files,
        }
