"""Request handlers shared by the HTTP routes and the local CLI."""

from __future__ import annotations

import dataclasses

import numpy as np

from ..optimizer import (
    OptHistory,
    evaluate,
    flatten_params,
    gradient,
    optimize,
    prepare_potential,
    unflatten_params,
)
from ..oracle import compare, fd_gradient
from ..reports import (
    RunReport,
    events_csv,
    gradcheck_csv,
    history_csv,
    polyline_csv,
    trace_csv,
)
from ..scenario import (
    OptimizerOptions,
    Scenario,
    Target,
    load_bundled,
    loads_scenario,
)
from ..trajectory import EllipseParams
from . import schemas as sm

# reference values for the bundled benchmark missions, reported as
# context only: the layouts and objective scale they were measured on are
# not fully recoverable
REFERENCE_VALUES = {
    "fig3": {"reference_J1": 0.0859, "reference_J": 0.2128,
             "shortest_path_J1": 0.0739},
    "fig4": {"reference_J1": 0.1004, "reference_J": 0.2979},
}


def _scenario_from_model(model: sm.ScenarioModel):
    targets = []
    n_agents = len(model.agents)
    for i, t in enumerate(model.targets):
        mu = t.mu if isinstance(t.mu, (int, float)) else None
        if mu is not None:
            mu_tuple = (float(t.mu),) * n_agents
        else:
            mu_tuple = tuple(float(m) for m in t.mu)
        targets.append(Target(x=t.x, y=t.y, r=t.r, alpha=t.alpha,
                              sigma=t.sigma, mu=mu_tuple, x0=t.x0))
    agents = tuple(EllipseParams(a.A, a.B, a.a, a.b, a.phi)
                   for a in model.agents)
    scenario = Scenario(targets=tuple(targets), agents=agents,
                        horizon=model.horizon, a_min=model.a_min).validate()
    options = _merge_options(OptimizerOptions(), model.options)
    return scenario, options


def _merge_options(base: OptimizerOptions,
                   over: sm.OptionsModel | None) -> OptimizerOptions:
    if over is None:
        return base
    data = over.model_dump(exclude_none=True)
    solver_keys = {"step", "event_tol", "quad_resolution", "lam"}
    solver_over = {k: v for k, v in data.items() if k in solver_keys}
    opt_over = {k: v for k, v in data.items() if k not in solver_keys}
    solver = dataclasses.replace(base.solver, **solver_over)
    return dataclasses.replace(base, solver=solver, **opt_over)


def resolve_scenario(ref: sm.ScenarioRef,
                     options: sm.OptionsModel | None = None):
    """(Scenario, OptimizerOptions) from any of the three reference forms,
    with request-level option overrides applied last."""
    if ref.bundled is not None:
        scenario, opts = load_bundled(ref.bundled)
    elif ref.text is not None:
        scenario, opts = loads_scenario(ref.text)
    else:
        scenario, opts = _scenario_from_model(ref.scenario)
    return scenario, _merge_options(opts, options)


def handle_simulate(req: sm.SimulateRequest) -> sm.SimulateResponse:
    scenario, opts = resolve_scenario(req, req.options)
    val = evaluate(scenario, scenario.agents, opts,
                   prepare_potential(scenario, opts)[0], with_gradient=False)
    trace = val.trace
    return sm.SimulateResponse(
        horizon=scenario.horizon,
        n_agents=scenario.n_agents,
        n_targets=scenario.n_targets,
        j1_time_avg=val.j1,
        x_final=[float(v) for v in trace.x[-1]],
        event_count=len(trace.events),
        events=[sm.EventModel(time=e.time, kind=e.kind.value,
                              target=e.target, agent=e.agent)
                for e in trace.events],
        warnings=list(trace.warnings),
        trace_csv=trace_csv(trace),
        events_csv=events_csv(trace),
    )


def _theta0_with_jitter(scenario: Scenario, seed, jitter: float):
    if not jitter:
        return None
    rng = np.random.default_rng(seed)
    theta = flatten_params(scenario.agents)
    return theta + rng.normal(scale=jitter, size=theta.shape)


def _optimize_response(scenario: Scenario, opts: OptimizerOptions,
                       history: OptHistory,
                       context: dict | None = None) -> sm.OptimizeResponse:
    final = history.final
    agents = unflatten_params(final.theta, scenario.n_agents)
    potential, _ = prepare_potential(scenario, opts)
    val = evaluate(scenario, agents, opts, potential, with_gradient=False)
    report = RunReport(
        mode=opts.mode,
        j=final.j, j1=final.j1, j2=final.j2,
        iterations=len(history.records) - 1,
        wall_time=history.wall_time,
        stop_reason=history.stop_reason,
        event_counts=val.trace.event_counts(),
        targets_visited=sorted(val.trace.targets_visited()),
        warnings=list(history.warnings) + list(val.trace.warnings),
        context=context or {},
    )
    return sm.OptimizeResponse(
        report=sm.RunReportModel(**report.as_dict()),
        initial_J=history.initial.j,
        initial_J1=history.initial.j1,
        initial_J2=history.initial.j2,
        final_theta=[float(v) for v in final.theta],
        history_csv=history_csv(history, scenario.n_agents),
        trace_csv=trace_csv(val.trace),
        events_csv=events_csv(val.trace),
        polyline_csv=polyline_csv(scenario, agents),
    )


def handle_optimize(req: sm.OptimizeRequest) -> sm.OptimizeResponse:
    scenario, opts = resolve_scenario(req, req.options)
    theta0 = _theta0_with_jitter(scenario, req.seed, req.jitter)
    history = optimize(scenario, theta0, opts)
    return _optimize_response(scenario, opts, history)


def handle_reproduce(req: sm.ReproduceRequest) -> sm.OptimizeResponse:
    scenario, opts = load_bundled(req.case)
    opts = _merge_options(opts, req.options)
    history = optimize(scenario, None, opts)
    return _optimize_response(scenario, opts, history,
                              context=REFERENCE_VALUES.get(req.case))


def handle_gradcheck(req: sm.GradcheckRequest) -> sm.GradcheckResponse:
    scenario, opts = resolve_scenario(req, req.options)
    val = gradient(scenario, None, opts)
    fd = fd_gradient(scenario, None, opts, h=req.h,
                     max_halvings=req.max_halvings)
    rows, all_ok = compare(val.gradient, fd)
    checked = [r["rel_err"] for r in rows if r["checked"]]
    return sm.GradcheckResponse(
        mode=opts.mode,
        rows=[sm.GradcheckRow(
            name=r["name"], ipa=r["ipa"], fd=r["fd"],
            rel_err=None if not r["checked"] else r["rel_err"],
            checked=r["checked"], ok=r["ok"], h=r["h"]) for r in rows],
        max_rel_err=max(checked) if checked else 0.0,
        all_ok=all_ok,
        gradcheck_csv=gradcheck_csv(rows),
    )
