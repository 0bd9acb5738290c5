"""Event-driven sensitivity propagation.

Target-state sensitivities x' evolve by a simple rule: between events they
integrate a flow that is zero unless the target is being collected, and at
certain events they jump. The jump follows the general sample-path rule

    x'(tau+) = x'(tau-) + (f_before - f_after) * tau'

where tau' is the event-time derivative of an endogenous event, obtained
from its guard function. Emptying events reset the row to zero (the state
is pinned at zero afterwards, so its sensitivity is too); visit ends with
an immediate handoff to another in-range agent are the one case with a
flow discontinuity and hence a nonzero jump. All other events leave x'
unchanged because the collection rate is continuous through them.

A guard met with near-zero normal velocity has no defined event-time
derivative; such grazing contacts raise TangentialCrossing and the caller
records a warning instead of applying a jump (the configurations are
measure-zero).
"""

from __future__ import annotations

import numpy as np

from .errors import TangentialCrossing

TRANSVERSALITY_EPS = 1e-8


def proximity(d: float, range_r: float) -> float:
    """Normalized collection efficiency: 1 at the target, linear to 0 at
    the range boundary, 0 beyond."""
    if range_r <= 0:
        raise ValueError("range_r must be positive")
    return max(0.0, 1.0 - d / range_r)


def xprime_flow(collecting: bool, mu: float, range_r: float,
                unit_vec, jacobian) -> np.ndarray:
    """Row rate dx'/dt for one target against one agent's parameter block.

    Zero when the target is idle or held empty. While collecting, the rate
    is -mu * grad_s p . s' which for the linear proximity model is
    (mu / r) * u^T J with u the unit vector from target to agent.
    """
    if not collecting:
        return np.zeros(np.asarray(jacobian).shape[-1])
    u = np.asarray(unit_vec, dtype=float)
    jac = np.asarray(jacobian, dtype=float)
    return (mu / range_r) * (u @ jac)


def visit_time_derivative(unit_vec, jacobian, velocity) -> np.ndarray:
    """tau' for a sensing-boundary crossing, per parameter of the crossing
    agent: -(u . s') / (u . s_dot)."""
    u = np.asarray(unit_vec, dtype=float)
    v = np.asarray(velocity, dtype=float)
    den = float(u @ v)
    if abs(den) < TRANSVERSALITY_EPS:
        raise TangentialCrossing(
            f"guard normal velocity {den:.3e} below {TRANSVERSALITY_EPS}")
    return -(u @ np.asarray(jacobian, dtype=float)) / den


def empty_time_derivative(x_prime_row, flow_before: float) -> np.ndarray:
    """tau' for a state-hits-zero event: -(x') / x_dot(tau-)."""
    if abs(flow_before) < TRANSVERSALITY_EPS:
        raise TangentialCrossing(
            f"state slope {flow_before:.3e} too small at emptying")
    return -np.asarray(x_prime_row, dtype=float) / flow_before


def apply_event_jump(kind: str, x_prime_row, tau_prime,
                     flow_before: float, flow_after: float) -> np.ndarray:
    """Post-event sensitivity row.

    kind "empty" zeroes the row. Any other event applies
    (f_before - f_after) tau'; a continuous flow therefore leaves the row
    untouched, matching the no-jump cases (visit starts, visit ends
    without handoff, refill starts).
    """
    row = np.asarray(x_prime_row, dtype=float)
    if kind == "empty":
        return np.zeros_like(row)
    if tau_prime is None or flow_before == flow_after:
        return row.copy()
    return row + (flow_before - flow_after) * np.asarray(tau_prime, dtype=float)


def backlog_gradient(trace) -> np.ndarray:
    """Gradient of the time-averaged weighted backlog assembled from a
    trace simulated with sensitivities: on an event-free path this is the
    exact zero vector."""
    if trace.j1_grad_integral is None:
        raise ValueError("trace was simulated without gradients")
    return trace.j1_grad_integral / trace.horizon
