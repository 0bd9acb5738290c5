"""Projected gradient descent over the trajectory parameters.

The decision vector stacks every agent's (A, B, a, b, phi). Mode P1
minimizes the time-averaged weighted backlog alone; mode P2 adds the
potential-field coverage term with mixing weight lam, which keeps the
gradient alive when a trajectory excites no collection events. After each
step the semi-axes are clamped to the feasible minimum and orientations
wrapped into [0, pi); feasible parameters pass through the projection
bitwise unchanged, so a zero gradient provably freezes the iterate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dfield

import numpy as np

from .errors import CollinearInput, NonFiniteGradient, TooFewPoints
from .potential_field import PotentialField, build_field
from .scenario import OptimizerOptions, Scenario
from .simulation import SimTrace, simulate
from .trajectory import EllipseParams, wrap_orientation

PARAM_LABELS = ("A", "B", "a", "b", "phi")


def flatten_params(agents) -> np.ndarray:
    return np.concatenate([p.as_array() for p in agents])


def unflatten_params(theta: np.ndarray, n_agents: int) -> tuple:
    return tuple(EllipseParams.from_array(theta[5 * j:5 * j + 5])
                 for j in range(n_agents))


def param_names(n_agents: int) -> list:
    return [f"{lbl}{j}" for j in range(n_agents) for lbl in PARAM_LABELS]


def project_theta(theta: np.ndarray, n_agents: int, a_min: float) -> tuple:
    out = []
    for j in range(n_agents):
        A, B, a, b, phi = (float(v) for v in theta[5 * j:5 * j + 5])
        out.append(EllipseParams(A, B,
                                 a if a >= a_min else a_min,
                                 b if b >= a_min else a_min,
                                 wrap_orientation(phi)))
    return tuple(out)


def step_distance_sq(theta_new: np.ndarray, theta_old: np.ndarray) -> float:
    """Squared parameter-space displacement with the orientation components
    measured on their pi-periodic circle, so a wrap at the [0, pi) boundary
    counts as the short way around."""
    diff = theta_new - theta_old
    total = 0.0
    for k, d in enumerate(diff):
        if k % 5 == 4:
            d = abs(d) % math.pi
            d = min(d, math.pi - d)
        total += d * d
    return total


@dataclass(frozen=True)
class ObjectiveValue:
    j: float
    j1: float
    j2: float
    trace: SimTrace
    gradient: np.ndarray | None = None


@dataclass
class IterationRecord:
    n: int
    theta: np.ndarray
    j: float
    j1: float
    j2: float
    gradient: np.ndarray
    grad_norm: float
    step: float
    event_count: int


@dataclass
class OptHistory:
    mode: str
    records: list = dfield(default_factory=list)
    stop_reason: str = ""
    wall_time: float = 0.0
    warnings: list = dfield(default_factory=list)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def initial(self) -> IterationRecord:
        return self.records[0]


def prepare_potential(scenario: Scenario, opts: OptimizerOptions):
    """Field for P2 runs, or None (with a note) when the target layout has
    a degenerate hull -- the coverage integral over a zero-area set is
    zero, so such runs fall back to the backlog term alone."""
    if opts.mode != "P2":
        return None, None
    try:
        return build_field(scenario, opts.solver.quad_resolution), None
    except (CollinearInput, TooFewPoints) as exc:
        return None, (f"target hull is degenerate ({exc}); "
                      "potential-field term inactive")


def evaluate(scenario: Scenario, agents, opts: OptimizerOptions,
             potential: PotentialField | None,
             with_gradient: bool = False) -> ObjectiveValue:
    trace = simulate(scenario, agents, opts.solver,
                     potential=potential, with_gradient=with_gradient)
    T = scenario.horizon
    lam = opts.solver.lam
    j1 = trace.j1_integral / T
    j2 = lam * trace.j2_integral / T if potential is not None else 0.0
    grad = None
    if with_gradient:
        grad = trace.j1_grad_integral / T
        if potential is not None:
            grad = grad + lam * trace.j2_grad_integral / T
    return ObjectiveValue(j1 + j2, j1, j2, trace, grad)


def objective(scenario: Scenario, agents=None,
              opts: OptimizerOptions | None = None) -> ObjectiveValue:
    """One-shot objective evaluation (builds the field itself in P2)."""
    opts = opts or OptimizerOptions()
    agents = agents if agents is not None else scenario.agents
    potential, _ = prepare_potential(scenario, opts)
    return evaluate(scenario, agents, opts, potential, with_gradient=False)


def gradient(scenario: Scenario, agents=None,
             opts: OptimizerOptions | None = None) -> ObjectiveValue:
    """Objective plus its sample-path gradient."""
    opts = opts or OptimizerOptions()
    agents = agents if agents is not None else scenario.agents
    potential, _ = prepare_potential(scenario, opts)
    return evaluate(scenario, agents, opts, potential, with_gradient=True)


def _step_size(opts: OptimizerOptions, n: int) -> float:
    if opts.step_rule == "decay":
        return opts.eta0 / (1.0 + n / opts.decay_n0)
    return opts.eta0


def optimize(scenario: Scenario, theta0=None,
             opts: OptimizerOptions | None = None) -> OptHistory:
    """Run the descent loop and return the full iteration history.

    Stops on the gradient-norm tolerance, on relative objective improvement
    below rel_impr_tol across `patience` iterations, on a failed line
    search, or at max_iters. A non-finite gradient raises
    NonFiniteGradient carrying the partial history.
    """
    opts = opts or OptimizerOptions()
    n_agents = scenario.n_agents
    a_min = scenario.a_min
    if theta0 is None:
        agents = tuple(scenario.agents)
    else:
        agents = project_theta(np.asarray(theta0, dtype=float), n_agents, a_min)

    history = OptHistory(mode=opts.mode)
    t_start = time.perf_counter()
    potential, note = prepare_potential(scenario, opts)
    if note:
        history.warnings.append(note)

    def finish(reason: str) -> OptHistory:
        history.stop_reason = reason
        history.wall_time = time.perf_counter() - t_start
        return history

    val = evaluate(scenario, agents, opts, potential, with_gradient=True)
    if not np.all(np.isfinite(val.gradient)):
        raise NonFiniteGradient("gradient not finite at the initial point",
                                history=finish("non_finite_gradient"))
    theta = flatten_params(agents)
    history.records.append(IterationRecord(
        0, theta.copy(), val.j, val.j1, val.j2, val.gradient.copy(),
        float(np.linalg.norm(val.gradient)), 0.0, len(val.trace.events)))

    for n in range(opts.max_iters):
        rec = history.records[-1]
        gnorm = rec.grad_norm
        if gnorm < opts.grad_tol:
            return finish("gradient_tolerance")
        if len(history.records) > opts.patience:
            j_then = history.records[-1 - opts.patience].j
            if (j_then - rec.j) < opts.rel_impr_tol * max(abs(j_then), 1e-12):
                return finish("no_improvement")

        if gnorm == 0.0:
            # zero direction: the iterate cannot move; reuse the evaluation
            history.records.append(IterationRecord(
                n + 1, rec.theta.copy(), rec.j, rec.j1, rec.j2,
                rec.gradient.copy(), 0.0, 0.0, rec.event_count))
            continue

        direction = -rec.gradient
        eta_start = opts.eta0
        if opts.max_move is not None:
            eta_start = min(eta_start, opts.max_move / gnorm)
        if opts.step_rule == "backtracking":
            # projected-gradient Armijo: sufficient decrease is measured by
            # the step actually taken after projection, so clamped
            # components cannot poison the acceptance test
            eta = eta_start
            accepted = None
            for _ in range(opts.max_backtracks):
                cand_agents = project_theta(rec.theta + eta * direction,
                                            n_agents, a_min)
                step_sq = step_distance_sq(flatten_params(cand_agents),
                                           rec.theta)
                if step_sq == 0.0:
                    break
                cand = evaluate(scenario, cand_agents, opts, potential,
                                with_gradient=False)
                if cand.j <= rec.j - (opts.armijo_c / eta) * step_sq:
                    accepted = (eta, cand_agents)
                    break
                eta *= opts.shrink
            if accepted is None:
                return finish("line_search_failed")
            eta, new_agents = accepted
        else:
            eta = _step_size(opts, n)
            if opts.max_move is not None:
                eta = min(eta, opts.max_move / gnorm)
            new_agents = project_theta(rec.theta + eta * direction,
                                       n_agents, a_min)

        val = evaluate(scenario, new_agents, opts, potential,
                       with_gradient=True)
        if not np.all(np.isfinite(val.gradient)) or not np.isfinite(val.j):
            raise NonFiniteGradient(
                f"gradient not finite at iteration {n + 1}",
                history=finish("non_finite_gradient"))
        history.records.append(IterationRecord(
            n + 1, flatten_params(new_agents), val.j, val.j1, val.j2,
            val.gradient.copy(), float(np.linalg.norm(val.gradient)),
            eta, len(val.trace.events)))

    return finish("max_iterations")
