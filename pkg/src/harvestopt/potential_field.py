"""Potential-field coverage term.

The field spreads each target's outstanding data over the targets' convex
hull as a reward density R(w) = sum_i alpha_i x_i / dplus_i(w), where
dplus saturates at the sensing range so the density stays bounded and
constant inside each disk. Pairing R with the quadratic travel cost
P(w, s) = sum_j ||s_j - w||^2 and integrating over the hull yields a
coverage objective whose parameter gradient is nonzero even when no
collection events occur, which is what keeps gradient descent moving on
event-free trajectories.

Evaluation uses cached node moments: because P is quadratic in the agent
positions and R is linear in the target states, the hull integral and its
gradient collapse to a handful of per-target constants; the node sums are
kept as the reference implementation and the two are tested against each
other.

The per-target spread constants follow the radial-line convention of the
hull integral (the radial integrand is 1/max(r, rho) along each ray
without the polar area factor); the density-identity check evaluates both
sides in that same convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TargetOnHullBoundary
from .geometry import (
    ConvexPolygon,
    QuadratureRule,
    _strictly_inside,
    convex_hull,
    d_plus_many,
    distance_to_boundary,
    quadrature_over,
    ray_boundary_distance,
)
from .scenario import Scenario

DEFAULT_RAYS = 720


@dataclass(frozen=True)
class PotentialField:
    """Hull, quadrature rule and per-target node caches for one scenario."""

    hull: ConvexPolygon
    rule: QuadratureRule
    targets_xy: np.ndarray   # (M, 2)
    ranges: np.ndarray       # (M,)
    alphas: np.ndarray       # (M,)
    dplus: np.ndarray        # (nodes, M) range-saturated distances
    kmat: np.ndarray         # (nodes, M) alpha_i / dplus_i(node)
    mom0: np.ndarray         # (M,)   sum_n w_n K_ni
    mom1: np.ndarray         # (M, 2) sum_n w_n K_ni w_n
    mom2: np.ndarray         # (M,)   sum_n w_n K_ni |w_n|^2

    @property
    def n_targets(self) -> int:
        return len(self.alphas)


def build_field(scenario: Scenario,
                resolution: float | None = None) -> PotentialField:
    """Construct the field for a scenario; the hull must be non-degenerate
    (raises CollinearInput / TooFewPoints otherwise)."""
    hull = convex_hull(scenario.target_positions())
    return build_field_over(hull, scenario.targets, resolution)


def build_field_over(hull: ConvexPolygon, targets,
                     resolution: float | None = None) -> PotentialField:
    """Construct a field over an explicit integration domain."""
    rule = quadrature_over(hull, resolution)
    xy = np.array([[t.x, t.y] for t in targets])
    ranges = np.array([t.r for t in targets])
    alphas = np.array([t.alpha for t in targets])
    dplus = np.stack([d_plus_many(rule.nodes, xy[i], ranges[i])
                      for i in range(len(ranges))], axis=1)
    kmat = alphas[None, :] / dplus
    w = rule.weights
    mom0 = w @ kmat
    mom1 = (w[:, None] * kmat).T @ rule.nodes
    mom2 = (w * np.einsum("nc,nc->n", rule.nodes, rule.nodes)) @ kmat
    return PotentialField(hull, rule, xy, ranges, alphas, dplus, kmat,
                          mom0, mom1, mom2)


def reward_density(field: PotentialField, target_states, point) -> float:
    """R(w) at an arbitrary point; strictly positive when any state is."""
    x = np.asarray(target_states, dtype=float)
    p = np.asarray(point, dtype=float)
    d = np.hypot(field.targets_xy[:, 0] - p[0], field.targets_xy[:, 1] - p[1])
    dplus = np.maximum(d, field.ranges)
    return float(np.sum(field.alphas * x / dplus))


def travel_cost(agent_positions, point) -> float:
    """Total squared distance from every agent to the point."""
    s = np.atleast_2d(np.asarray(agent_positions, dtype=float))
    p = np.asarray(point, dtype=float)
    diff = s - p[None, :]
    return float(np.einsum("jc,jc->", diff, diff))


def j2(field: PotentialField, agent_positions, target_states) -> float:
    """Hull integral of travel cost times reward density (node sum)."""
    x = np.asarray(target_states, dtype=float)
    s = np.atleast_2d(np.asarray(agent_positions, dtype=float))
    r_nodes = field.kmat @ x
    diff = field.rule.nodes[:, None, :] - s[None, :, :]
    p_nodes = np.einsum("njc,njc->n", diff, diff)
    return float(np.dot(field.rule.weights, p_nodes * r_nodes))


def j2_gradient(field: PotentialField, agent_positions, jacobians,
                target_states, x_prime) -> np.ndarray:
    """Parameter gradient of `j2` by direct node summation.

    jacobians: (N, 2, 5) position jacobian per agent; x_prime: (M, P) state
    sensitivities with P = 5 N. Returns a (P,) vector.
    """
    x = np.asarray(target_states, dtype=float)
    s = np.atleast_2d(np.asarray(agent_positions, dtype=float))
    jac = np.asarray(jacobians, dtype=float)
    xp = np.asarray(x_prime, dtype=float)
    n_agents = len(s)
    n_par = 5 * n_agents

    w = field.rule.weights
    nodes = field.rule.nodes
    r_nodes = field.kmat @ x
    diff = nodes[:, None, :] - s[None, :, :]
    p_nodes = np.einsum("njc,njc->n", diff, diff)

    grad = np.zeros(n_par)
    for j in range(n_agents):
        # dP/dtheta_j = 2 (s_j - w_node) . jac_j
        vec = -2.0 * diff[:, j, :]
        block = np.einsum("n,nc,cp->p", w * r_nodes, vec, jac[j])
        grad[5 * j:5 * j + 5] += block
    dr_dtheta = field.kmat @ xp      # (nodes, P)
    grad += (w * p_nodes) @ dr_dtheta
    return grad


def j2_fast(field: PotentialField, agent_positions, target_states) -> float:
    """Moment-based `j2`; algebraically identical to the node sum."""
    x = np.asarray(target_states, dtype=float)
    q = _q_values(field, np.atleast_2d(np.asarray(agent_positions, dtype=float)))
    return float(np.dot(x, q))


def _q_values(field: PotentialField, s: np.ndarray) -> np.ndarray:
    """q_i = integral of P over the hull against target i's kernel."""
    s2 = float(np.einsum("jc,jc->", s, s))
    ssum = s.sum(axis=0)
    return s2 * field.mom0 - 2.0 * (field.mom1 @ ssum) + len(s) * field.mom2


def j2_gradient_fast(field: PotentialField, agent_positions, jacobians,
                     target_states, x_prime) -> np.ndarray:
    """Moment-based `j2_gradient`; same value as the node sum."""
    x = np.asarray(target_states, dtype=float)
    s = np.atleast_2d(np.asarray(agent_positions, dtype=float))
    jac = np.asarray(jacobians, dtype=float)
    xp = np.asarray(x_prime, dtype=float)
    n_agents = len(s)

    m0 = float(np.dot(field.mom0, x))
    m1 = field.mom1.T @ x
    grad = np.zeros(5 * n_agents)
    for j in range(n_agents):
        vec = 2.0 * (m0 * s[j] - m1)
        grad[5 * j:5 * j + 5] = vec @ jac[j]
    grad += _q_values(field, s) @ xp
    return grad


def time_series_terms(field: PotentialField, positions: np.ndarray,
                      jacobians: np.ndarray, x: np.ndarray,
                      x_prime: np.ndarray | None):
    """Vectorized field terms along a trajectory.

    positions: (n, N, 2), jacobians: (n, N, 2, 5), x: (n, M),
    x_prime: (n, M, P) or None. Returns (j2_series (n,), grad_series
    (n, P) or None).
    """
    s2 = np.einsum("njc,njc->n", positions, positions)
    ssum = positions.sum(axis=1)
    n_agents = positions.shape[1]
    q = (s2[:, None] * field.mom0[None, :]
         - 2.0 * ssum @ field.mom1.T
         + n_agents * field.mom2[None, :])
    series = np.einsum("nm,nm->n", x, q)
    if x_prime is None:
        return series, None
    m0 = x @ field.mom0
    m1 = x @ field.mom1
    grad = np.empty(positions.shape[:1] + (5 * n_agents,))
    for j in range(n_agents):
        vec = 2.0 * (m0[:, None] * positions[:, j, :] - m1)
        grad[:, 5 * j:5 * j + 5] = np.einsum(
            "nc,ncp->np", vec, jacobians[:, j])
    grad += np.einsum("nm,nmp->np", q, x_prime)
    return series, grad


def _radial_line_integral(lam: float, r: float) -> float:
    """Along-ray integral of 1/max(r, rho) from 0 to lam."""
    if lam >= r:
        return 1.0 + math.log(lam / r)
    return lam / r


def spread_constants(hull: ConvexPolygon, targets,
                     n_rays: int = DEFAULT_RAYS) -> np.ndarray:
    """Per-target constant c_i relating the hull integral of the spread
    density to the target state: integral = sum_i c_i x_i.

    For a target whose every boundary ray exceeds its sensing range this is
    alpha_i (2 pi + angular integral of log(boundary distance / range)),
    evaluated with an n_rays trapezoid; the constant is positive for any
    strictly interior target. Targets on (or within 1e-9 of) the hull
    boundary are rejected -- the radial construction assumes an interior
    point.
    """
    out = np.empty(len(targets))
    angles = 2 * math.pi * np.arange(n_rays) / n_rays
    for i, t in enumerate(targets):
        loc = np.array([t.x, t.y])
        if not _strictly_inside(hull, loc) or distance_to_boundary(hull, loc) < 1e-9:
            raise TargetOnHullBoundary(
                f"target {i} at ({t.x}, {t.y}) is not strictly interior")
        acc = 0.0
        for ang in angles:
            lam = ray_boundary_distance(hull, loc, float(ang))
            acc += _radial_line_integral(lam, t.r)
        out[i] = t.alpha * acc * (2 * math.pi / n_rays)
    return out


def density_identity_residual(field: PotentialField, targets, target_states,
                              n_rays: int = 1024,
                              n_radial: int = 400) -> float:
    """Relative residual between the numerically integrated spread density
    and sum_i c_i x_i, both in the radial-line convention.

    The numeric side integrates 1/max(r, rho) by trapezoid along a dense
    ray fan -- independent of the closed-form radial integral inside
    `spread_constants`. Used by tests and diagnostics only.
    """
    x = np.asarray(target_states, dtype=float)
    cs = spread_constants(field.hull, targets, n_rays=DEFAULT_RAYS)
    analytic = float(np.dot(cs, x))

    numeric = 0.0
    angles = 2 * math.pi * np.arange(n_rays) / n_rays
    for i, t in enumerate(targets):
        if x[i] == 0.0:
            continue
        loc = np.array([t.x, t.y])
        acc = 0.0
        for ang in angles:
            lam = ray_boundary_distance(field.hull, loc, float(ang))
            rho = np.linspace(0.0, lam, n_radial)
            acc += np.trapezoid(1.0 / np.maximum(rho, t.r), rho)
        numeric += t.alpha * x[i] * acc * (2 * math.pi / n_rays)
    return abs(numeric - analytic) / max(analytic, 1e-12)
