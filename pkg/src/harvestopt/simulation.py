"""Hybrid-system simulator for the data-harvesting mission.

Agents move at unit speed on their ellipses while target backlogs follow
flow dynamics: a constant inflow, minus a proximity-weighted collection
rate while a connected agent is in range, with the state held at zero once
emptied (inflow below the collection rate). Four event types partition a
run into smooth segments: visit_start / visit_end when an agent crosses a
sensing boundary, empty / fill when a backlog reaches or leaves zero.

Integration scheme: classic fixed-step RK4 on a uniform grid. The anomaly
of each agent evolves independently of the targets, so it is integrated
first with its stage values recorded; the backlog states (whose flow does
not depend on the backlog itself within a mode) are then advanced with the
identical stage arguments, reproducing the fully coupled RK4 step exactly
while allowing whole inter-event segments to be vectorized. Every guard
crossing is bracketed on the grid (with a midpoint probe for double
crossings inside one step) and bisected to the event tolerance; the
integration restarts on the located event time.

State sensitivities are co-integrated the same way, and the running
objective integrals (backlog, backlog gradient, and optionally the
potential-field term and its gradient) accumulate alongside: the backlog
integrals use the RK4 stage quadrature, the field term a left-endpoint
rectangle rule on the realized steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import StepTooLarge, TangentialCrossing
from .potential_field import PotentialField, j2_fast, j2_gradient_fast, time_series_terms
from .scenario import Scenario, SolverOptions
from .sensitivity import (
    apply_event_jump,
    proximity,
    visit_time_derivative,
)
from .trajectory import (
    EllipseParams,
    anomaly_rate,
    position,
    position_jacobian,
    position_jacobian_many,
    tangent,
)

N_PER_AGENT = 5


class EventKind(str, Enum):
    VISIT_START = "visit_start"
    VISIT_END = "visit_end"
    EMPTY = "empty"
    FILL = "fill"


_KIND_RANK = {EventKind.VISIT_START: 0, EventKind.VISIT_END: 1,
              EventKind.EMPTY: 2, EventKind.FILL: 3}


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    target: int
    agent: int | None = None

    def key(self):
        return (self.time, _KIND_RANK[self.kind], self.target,
                -1 if self.agent is None else self.agent)


@dataclass
class SimTrace:
    """Sample-path record of one simulation."""

    times: np.ndarray         # (S,)
    positions: np.ndarray     # (S, N, 2)
    x: np.ndarray             # (S, M)
    connection: np.ndarray    # (S, M) agent index or -1
    events: list
    warnings: list
    horizon: float
    j1_integral: float                       # integral of sum_i alpha_i x_i
    j1_grad_integral: np.ndarray | None      # (P,)
    j2_integral: float                       # integral of the field term
    j2_grad_integral: np.ndarray | None      # (P,)
    x_prime_final: np.ndarray | None         # (M, P)

    def event_sequence(self) -> tuple:
        return tuple((e.kind.value, e.target, e.agent) for e in self.events)

    def event_counts(self) -> dict:
        out = {k.value: 0 for k in EventKind}
        for e in self.events:
            out[e.kind.value] += 1
        return out

    def targets_visited(self) -> set:
        return {e.target for e in self.events if e.kind is EventKind.VISIT_START}


def target_flow(x: float, sigma: float, mu: float, p: float) -> float:
    """Backlog flow: held at zero while the collection rate covers the
    inflow, otherwise inflow minus collection."""
    if x <= 0.0 and sigma <= mu * p:
        return 0.0
    return sigma - mu * p


def assign_connections(agent_positions, targets, previous=None) -> list:
    """One connected agent per target: a held connection persists until the
    agent leaves the range; otherwise the lowest-index in-range agent wins."""
    s = np.atleast_2d(np.asarray(agent_positions, dtype=float))
    out = []
    for i, t in enumerate(targets):
        d = np.hypot(s[:, 0] - t.x, s[:, 1] - t.y)
        prev = -1 if previous is None else previous[i]
        if prev >= 0 and d[prev] < t.r:
            out.append(prev)
            continue
        inside = np.nonzero(d < t.r)[0]
        out.append(int(inside[0]) if len(inside) else -1)
    return out


def _rho_derivs(a2, b2, aa, bb, rho, ga, gb):
    s = math.sin(rho)
    c = math.cos(rho)
    s2 = s * s
    c2 = c * c
    e = a2 * s2 + b2 * c2
    rate = e ** -0.5
    e32 = rate / e
    d_rho = -(a2 - b2) * s * c * e32
    return (rate,
            d_rho * ga - aa * s2 * e32,
            d_rho * gb - bb * c2 * e32)


class _AgentGrid:
    """Fixed-grid RK4 solution of one agent's anomaly and its (a, b)
    sensitivities, with the per-step stage arguments retained."""

    def __init__(self, params: EllipseParams, t_nodes: np.ndarray):
        self.params = params
        self.t = t_nodes
        self.h = float(t_nodes[1] - t_nodes[0])
        n = len(t_nodes) - 1
        a2, b2 = params.a * params.a, params.b * params.b
        aa, bb = params.a, params.b
        d2ab = a2 - b2
        h = self.h
        hh = 0.5 * h
        h6 = h / 6.0
        sin, cos = math.sin, math.cos
        rho = ga = gb = 0.0
        rho_nodes = [0.0]
        sens_nodes = [(0.0, 0.0)]
        rho_st = []
        sens_st = []
        for _ in range(n):
            # RK4 stages, inlined for speed (this loop dominates a run)
            s = sin(rho); c = cos(rho); s2 = s * s; c2 = c * c
            e = a2 * s2 + b2 * c2; f0 = e ** -0.5; e32 = f0 / e
            dr = -d2ab * s * c * e32
            f1 = dr * ga - aa * s2 * e32; f2 = dr * gb - bb * c2 * e32
            r2 = rho + hh * f0; ga2 = ga + hh * f1; gb2 = gb + hh * f2
            s = sin(r2); c = cos(r2); s2 = s * s; c2 = c * c
            e = a2 * s2 + b2 * c2; g0 = e ** -0.5; e32 = g0 / e
            dr = -d2ab * s * c * e32
            g1 = dr * ga2 - aa * s2 * e32; g2v = dr * gb2 - bb * c2 * e32
            r3 = rho + hh * g0; ga3 = ga + hh * g1; gb3 = gb + hh * g2v
            s = sin(r3); c = cos(r3); s2 = s * s; c2 = c * c
            e = a2 * s2 + b2 * c2; p0 = e ** -0.5; e32 = p0 / e
            dr = -d2ab * s * c * e32
            p1 = dr * ga3 - aa * s2 * e32; p2 = dr * gb3 - bb * c2 * e32
            r4 = rho + h * p0; ga4 = ga + h * p1; gb4 = gb + h * p2
            s = sin(r4); c = cos(r4); s2 = s * s; c2 = c * c
            e = a2 * s2 + b2 * c2; q0 = e ** -0.5; e32 = q0 / e
            dr = -d2ab * s * c * e32
            q1 = dr * ga4 - aa * s2 * e32; q2 = dr * gb4 - bb * c2 * e32
            rho_st.append((rho, r2, r3, r4))
            sens_st.append(((ga, gb), (ga2, gb2), (ga3, gb3), (ga4, gb4)))
            rho += h6 * (f0 + 2 * g0 + 2 * p0 + q0)
            ga += h6 * (f1 + 2 * g1 + 2 * p1 + q1)
            gb += h6 * (f2 + 2 * g2v + 2 * p2 + q2)
            rho_nodes.append(rho)
            sens_nodes.append((ga, gb))
        self.rho_nodes = np.array(rho_nodes)
        self.sens_nodes = np.array(sens_nodes)
        self.rho_st = np.array(rho_st)
        self.sens_st = np.array(sens_st)
        self.pos_nodes = position(params, self.rho_nodes)
        self.pos_st = position(params, self.rho_st)
        self.jac_nodes = None
        self.jac_st = None
        self._cp = math.cos(params.phi)
        self._sp = math.sin(params.phi)

    def build_jacobians(self):
        self.jac_nodes = position_jacobian_many(
            self.params, self.rho_nodes, self.sens_nodes)
        self.jac_st = position_jacobian_many(
            self.params, self.rho_st, self.sens_st)

    def state_at(self, t: float):
        """(rho, ga, gb) at an arbitrary time, via a partial RK4 step from
        the grid node on the left; exact grid values at the nodes."""
        h = self.h
        k = min(len(self.t) - 2, max(0, int(t / h)))
        if t < self.t[k]:
            k -= 1
        dt = t - self.t[k]
        rho = self.rho_nodes[k]
        ga, gb = self.sens_nodes[k]
        if dt <= 0.0:
            return float(rho), float(ga), float(gb)
        return self._step_from(float(rho), float(ga), float(gb), dt)

    def _step_from(self, rho, ga, gb, h):
        p = self.params
        a2, b2 = p.a * p.a, p.b * p.b
        hh = 0.5 * h
        k1 = _rho_derivs(a2, b2, p.a, p.b, rho, ga, gb)
        y2 = (rho + hh * k1[0], ga + hh * k1[1], gb + hh * k1[2])
        k2 = _rho_derivs(a2, b2, p.a, p.b, *y2)
        y3 = (rho + hh * k2[0], ga + hh * k2[1], gb + hh * k2[2])
        k3 = _rho_derivs(a2, b2, p.a, p.b, *y3)
        y4 = (rho + h * k3[0], ga + h * k3[1], gb + h * k3[2])
        k4 = _rho_derivs(a2, b2, p.a, p.b, *y4)
        return (rho + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                ga + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
                gb + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]))

    def stage_args(self, t0: float, h_step: float):
        """Stage (rho, ga, gb) triples for one RK4 step of size h_step
        starting at t0, consistent with the grid path."""
        rho, ga, gb = self.state_at(t0)
        p = self.params
        a2, b2 = p.a * p.a, p.b * p.b
        hh = 0.5 * h_step
        k1 = _rho_derivs(a2, b2, p.a, p.b, rho, ga, gb)
        y1 = (rho, ga, gb)
        y2 = (rho + hh * k1[0], ga + hh * k1[1], gb + hh * k1[2])
        k2 = _rho_derivs(a2, b2, p.a, p.b, *y2)
        y3 = (rho + hh * k2[0], ga + hh * k2[1], gb + hh * k2[2])
        k3 = _rho_derivs(a2, b2, p.a, p.b, *y3)
        y4 = (rho + h_step * k3[0], ga + h_step * k3[1], gb + h_step * k3[2])
        return (y1, y2, y3, y4)

    def xy_at(self, t: float):
        rho, _, _ = self.state_at(t)
        return self.xy_of(rho)

    def xy_of(self, rho: float):
        p = self.params
        c, s = math.cos(rho), math.sin(rho)
        return (p.A + p.a * c * self._cp - p.b * s * self._sp,
                p.B + p.a * c * self._sp + p.b * s * self._cp)

    def position_at(self, t: float) -> np.ndarray:
        return np.array(self.xy_at(t))

    def velocity_at(self, t: float) -> np.ndarray:
        rho, _, _ = self.state_at(t)
        return tangent(self.params, rho) * anomaly_rate(self.params, rho)

    def jacobian_at(self, t: float) -> np.ndarray:
        rho, ga, gb = self.state_at(t)
        sens = np.array([0.0, 0.0, ga, gb, 0.0])
        return position_jacobian(self.params, rho, sens)


class _Walk:
    """Sequential event walk over one sample path."""

    def __init__(self, scenario: Scenario, agents, opts: SolverOptions,
                 potential: PotentialField | None, with_gradient: bool):
        self.sc = scenario
        self.opts = opts
        self.potential = potential
        self.with_gradient = with_gradient
        self.T = scenario.horizon
        h_req = opts.step_for(self.T)
        self.n_steps = max(2, int(round(self.T / h_req)))
        self.t_nodes = np.linspace(0.0, self.T, self.n_steps + 1)
        self.h = self.T / self.n_steps
        self.M = scenario.n_targets
        self.N = len(agents)
        self.P = N_PER_AGENT * self.N

        self.grids = [_AgentGrid(p, self.t_nodes) for p in agents]
        need_jac = with_gradient
        if need_jac:
            for g in self.grids:
                g.build_jacobians()

        self.w_xy = scenario.target_positions()
        self.ranges = np.array([t.r for t in scenario.targets])
        self.alphas = np.array([t.alpha for t in scenario.targets])
        self.sigmas = np.array([t.sigma for t in scenario.targets])
        self.mus = np.array([t.mu for t in scenario.targets])  # (M, N)

        pos_nodes = np.stack([g.pos_nodes for g in self.grids], axis=1)
        self.pos_nodes = pos_nodes                      # (n+1, N, 2)
        diff = pos_nodes[:, None, :, :] - self.w_xy[None, :, None, :]
        self.d_nodes = np.hypot(diff[..., 0], diff[..., 1])  # (n+1, M, N)
        pos_mid = np.stack([g.pos_st[:, 1, :] for g in self.grids], axis=1)
        diffm = pos_mid[:, None, :, :] - self.w_xy[None, :, None, :]
        self.d_mid = np.hypot(diffm[..., 0], diffm[..., 1])  # (n, M, N)
        if need_jac and potential is not None:
            self.jac_nodes = np.stack([g.jac_nodes for g in self.grids], axis=1)
        else:
            self.jac_nodes = None

        # mutable walk state
        self.x = np.array([t.x0 for t in scenario.targets], dtype=float)
        self.xp = np.zeros((self.M, self.P)) if with_gradient else None
        self.conn = [-1] * self.M
        self.held = [False] * self.M
        self.events: list = []
        self.warnings: list = []
        self.i1 = 0.0
        self.g1 = np.zeros(self.P) if with_gradient else None
        self.i2 = 0.0
        self.g2 = np.zeros(self.P) if (with_gradient and potential is not None) else None

        self.sample_t = [0.0]
        self.sample_ref = [0]          # node index, or None for event times
        self.sample_x = [self.x.copy()]
        self.sample_conn = [list(self.conn)]

        self._init_modes()
        self.delta_queue = self._localize_delta_events()
        self.delta_idx = 0

    # ---------------- initialization ----------------

    def _p_of(self, i: int, j: int, t: float) -> float:
        px, py = self.grids[j].xy_at(t)
        d = math.hypot(px - self.w_xy[i, 0], py - self.w_xy[i, 1])
        return proximity(d, float(self.ranges[i]))

    def _init_modes(self):
        d0 = self.d_nodes[0]  # (M, N)
        self.conn = assign_connections(self.pos_nodes[0], self.sc.targets)
        for i in range(self.M):
            for j in range(self.N):
                if d0[i, j] < self.ranges[i]:
                    self.events.append(Event(0.0, EventKind.VISIT_START, i, j))
            j = self.conn[i]
            if self.x[i] <= 0.0:
                p = proximity(float(d0[i, j]), float(self.ranges[i])) if j >= 0 else 0.0
                self.held[i] = self.sigmas[i] <= self.mus[i, j] * p if j >= 0 \
                    else self.sigmas[i] <= 0.0
        self.sample_conn[0] = list(self.conn)

    # ---------------- event localization ----------------

    def _guard_fn(self, i: int, j: int):
        wx, wy = float(self.w_xy[i, 0]), float(self.w_xy[i, 1])
        r = float(self.ranges[i])
        grid = self.grids[j]

        def g(t: float) -> float:
            px, py = grid.xy_at(t)
            return math.hypot(px - wx, py - wy) - r
        return g

    def _bisect(self, fn, ta: float, tb: float) -> float:
        fa = fn(ta)
        fb = fn(tb)
        if fa == 0.0:
            return ta
        if fb == 0.0:
            return tb
        if fa * fb > 0.0:
            raise StepTooLarge(
                f"cannot bracket a guard crossing in [{ta:.9g}, {tb:.9g}]")
        tol = self.opts.event_tol
        while tb - ta > tol:
            tm = 0.5 * (ta + tb)
            fm = fn(tm)
            if fm == 0.0:
                return tm
            if fa * fm < 0.0:
                tb, fb = tm, fm
            else:
                ta, fa = tm, fm
        return 0.5 * (ta + tb)

    def _localize_delta_events(self) -> list:
        tn = self.t_nodes
        g = self.d_nodes - self.ranges[None, :, None]
        gm = self.d_mid - self.ranges[None, :, None]
        sa, sb = g[:-1], g[1:]
        singles = sa * sb < 0.0
        doubles = (sa * sb > 0.0) & (sa * gm < 0.0)
        out = []
        for k, i, j in zip(*np.nonzero(singles)):
            fn = self._guard_fn(i, j)
            tau = self._bisect(fn, tn[k], tn[k + 1])
            kind = EventKind.VISIT_START if sa[k, i, j] > 0 else EventKind.VISIT_END
            out.append(Event(tau, kind, int(i), int(j)))
        for k, i, j in zip(*np.nonzero(doubles)):
            fn = self._guard_fn(i, j)
            tm = 0.5 * (tn[k] + tn[k + 1])
            tau1 = self._bisect(fn, tn[k], tm)
            tau2 = self._bisect(fn, tm, tn[k + 1])
            if tau2 - tau1 < self.opts.event_tol:
                raise StepTooLarge(
                    f"two crossings of target {i} / agent {j} guard within "
                    f"{tau2 - tau1:.3e} s inside one step")
            if sa[k, i, j] > 0:
                first, second = EventKind.VISIT_START, EventKind.VISIT_END
            else:
                first, second = EventKind.VISIT_END, EventKind.VISIT_START
            out.append(Event(tau1, first, int(i), int(j)))
            out.append(Event(tau2, second, int(i), int(j)))
        out.sort(key=Event.key)
        return out

    # ---------------- segment integration ----------------

    def _split(self, ta: float, tb: float):
        """Partition [ta, tb] into (lead partial, first node, last node,
        trail partial); returns None when no grid node falls inside."""
        h = self.h
        tn = self.t_nodes
        tiny = 1e-9 * h
        ka = min(self.n_steps, int(math.floor(ta / h + 1e-9)))
        aligned_a = abs(ta - tn[ka]) <= tiny
        start = ka if aligned_a else ka + 1
        kb = min(self.n_steps, int(math.floor(tb / h + 1e-9)))
        aligned_b = abs(tb - tn[kb]) <= tiny
        end = kb
        if start > end:
            return None
        lead = None if aligned_a else (ta, float(tn[start]))
        trail = None if aligned_b else (float(tn[end]), tb)
        return lead, start, end, trail

    def _stage_rates_whole(self, ks: int, ke: int):
        """Per-target stage flow rates over whole steps [ks, ke).

        Returns (rates (L, 4, M), xp_blocks list of (j, (L, 4, 5)) or None).
        """
        L = ke - ks
        rates = np.empty((L, 4, self.M))
        blocks = [] if self.with_gradient else None
        for i in range(self.M):
            if self.held[i]:
                rates[:, :, i] = 0.0
                continue
            j = self.conn[i]
            if j < 0:
                rates[:, :, i] = self.sigmas[i]
                continue
            r = float(self.ranges[i])
            mu = float(self.mus[i, j])
            dvec = self.grids[j].pos_st[ks:ke] - self.w_xy[i]
            d = np.hypot(dvec[..., 0], dvec[..., 1])
            p = np.maximum(0.0, 1.0 - d / r)
            rates[:, :, i] = self.sigmas[i] - mu * p
            if self.with_gradient:
                u = dvec / np.maximum(d, 1e-300)[..., None]
                blk = (mu / r) * np.einsum(
                    "lsc,lscp->lsp", u, self.grids[j].jac_st[ks:ke])
                blocks.append((i, j, blk))
        return rates, blocks

    def _advance(self, ta: float, tb: float):
        if tb - ta <= 1e-15:
            return
        parts = self._split(ta, tb)
        if parts is None:
            self._advance_partial(ta, tb, node_ref=None)
            return
        lead, start, end, trail = parts
        if lead is not None:
            self._advance_partial(lead[0], lead[1], node_ref=start)
        if end > start:
            self._advance_whole(start, end)
        if trail is not None:
            self._advance_partial(trail[0], trail[1], node_ref=None)

    def _advance_whole(self, ks: int, ke: int):
        L = ke - ks
        h = self.h
        rates, blocks = self._stage_rates_whole(ks, ke)
        # backlog path at nodes ks..ke
        dx = (h / 6.0) * (rates[:, 0] + 2 * rates[:, 1]
                          + 2 * rates[:, 2] + rates[:, 3])     # (L, M)
        xpath = np.empty((L + 1, self.M))
        xpath[0] = self.x
        np.cumsum(dx, axis=0, out=xpath[1:])
        xpath[1:] += self.x

        # backlog integral via the stage quadrature
        rsum = rates[:, 0] + rates[:, 1] + rates[:, 2]          # (L, M)
        self.i1 += float(
            self.alphas @ (h * xpath[:-1].sum(axis=0) + (h * h / 6.0) * rsum.sum(axis=0)))

        xp_path = None
        if self.with_gradient:
            xp_path = np.broadcast_to(self.xp, (L + 1, self.M, self.P)).copy()
            for i, j, blk in blocks:
                sl = slice(N_PER_AGENT * j, N_PER_AGENT * (j + 1))
                dxp = (h / 6.0) * (blk[:, 0] + 2 * blk[:, 1]
                                   + 2 * blk[:, 2] + blk[:, 3])  # (L, 5)
                xp_path[1:, i, sl] += np.cumsum(dxp, axis=0)
            self.g1 += h * np.einsum("m,lmp->p", self.alphas, xp_path[:-1])
            for i, j, blk in blocks:
                sl = slice(N_PER_AGENT * j, N_PER_AGENT * (j + 1))
                self.g1[sl] += self.alphas[i] * (h * h / 6.0) * (
                    blk[:, 0] + blk[:, 1] + blk[:, 2]).sum(axis=0)

        if self.potential is not None:
            series, grads = time_series_terms(
                self.potential,
                self.pos_nodes[ks:ke],
                self.jac_nodes[ks:ke] if self.jac_nodes is not None else None,
                xpath[:-1],
                xp_path[:-1] if (self.with_gradient and xp_path is not None) else None)
            self.i2 += h * float(series.sum())
            if grads is not None:
                self.g2 += h * grads.sum(axis=0)

        self.x = xpath[-1].copy()
        if self.with_gradient:
            self.xp = xp_path[-1].copy()
        conn_row = list(self.conn)
        self.sample_t.extend(float(t) for t in self.t_nodes[ks + 1:ke + 1])
        self.sample_ref.extend(range(ks + 1, ke + 1))
        self.sample_x.extend(xpath[1:])
        self.sample_conn.extend([conn_row] * L)
        return None

    def _partial_stage_rates(self, t0: float, hs: float):
        stage_states = [g.stage_args(t0, hs) for g in self.grids]
        rates = np.zeros((4, self.M))
        blocks = [] if self.with_gradient else None
        for i in range(self.M):
            if self.held[i]:
                continue
            j = self.conn[i]
            if j < 0:
                rates[:, i] = self.sigmas[i]
                continue
            r = float(self.ranges[i])
            mu = float(self.mus[i, j])
            grid = self.grids[j]
            blk = np.zeros((4, N_PER_AGENT)) if self.with_gradient else None
            for s_idx, (rho, ga, gb) in enumerate(stage_states[j]):
                px, py = grid.xy_of(rho)
                dx, dy = px - self.w_xy[i, 0], py - self.w_xy[i, 1]
                d = math.hypot(dx, dy)
                p = max(0.0, 1.0 - d / r)
                rates[s_idx, i] = self.sigmas[i] - mu * p
                if self.with_gradient:
                    jac = position_jacobian(
                        grid.params, rho, np.array([0.0, 0.0, ga, gb, 0.0]))
                    u = np.array([dx, dy]) / max(d, 1e-300)
                    blk[s_idx] = (mu / r) * (u @ jac)
            if self.with_gradient:
                blocks.append((i, j, blk))
        return rates, blocks

    def _advance_partial(self, t0: float, t1: float, node_ref):
        hs = t1 - t0
        if hs <= 0.0:
            return
        if self.potential is not None:
            self._accumulate_field_rect(t0, hs)
        rates, blocks = self._partial_stage_rates(t0, hs)
        self.i1 += float(self.alphas @ (
            hs * self.x + (hs * hs / 6.0) * (rates[0] + rates[1] + rates[2])))
        self.x = self.x + (hs / 6.0) * (
            rates[0] + 2 * rates[1] + 2 * rates[2] + rates[3])
        if self.with_gradient:
            self.g1 += hs * (self.alphas @ self.xp)
            for i, j, blk in blocks:
                sl = slice(N_PER_AGENT * j, N_PER_AGENT * (j + 1))
                self.g1[sl] += self.alphas[i] * (hs * hs / 6.0) * (
                    blk[0] + blk[1] + blk[2])
                self.xp[i, sl] += (hs / 6.0) * (
                    blk[0] + 2 * blk[1] + 2 * blk[2] + blk[3])
        self._record_sample(t1, node_ref, self.x)

    def _accumulate_field_rect(self, t0: float, dt: float):
        pos = np.stack([g.position_at(t0) for g in self.grids])
        self.i2 += dt * j2_fast(self.potential, pos, self.x)
        if self.with_gradient and self.g2 is not None:
            jac = np.stack([g.jacobian_at(t0) for g in self.grids])
            self.g2 += dt * j2_gradient_fast(
                self.potential, pos, jac, self.x, self.xp)

    def _record_sample(self, t: float, node_idx, x_row):
        if t <= self.sample_t[-1] + 1e-15:
            return
        self.sample_t.append(t)
        self.sample_ref.append(node_idx)
        self.sample_x.append(np.array(x_row))
        self.sample_conn.append(list(self.conn))

    # ---------------- state-guard events ----------------

    def _x_increment(self, i: int, t0: float, t1: float) -> float:
        """Backlog increment for target i over [t0, t1] in the current mode
        (one RK4-stage quadrature; interval must be within one grid step)."""
        hs = t1 - t0
        if hs <= 0.0:
            return 0.0
        if self.held[i]:
            return 0.0
        j = self.conn[i]
        if j < 0:
            return self.sigmas[i] * hs
        r = float(self.ranges[i])
        mu = float(self.mus[i, j])
        sigma = float(self.sigmas[i])
        wx, wy = float(self.w_xy[i, 0]), float(self.w_xy[i, 1])
        grid = self.grids[j]
        vals = []
        for rho, _, _ in grid.stage_args(t0, hs):
            px, py = grid.xy_of(rho)
            d = math.hypot(px - wx, py - wy)
            vals.append(sigma - mu * max(0.0, 1.0 - d / r))
        return hs / 6.0 * (vals[0] + 2 * vals[1] + 2 * vals[2] + vals[3])

    def _find_xi(self, ta: float, tb: float):
        """Earliest backlog-guard event in (ta, tb), or None."""
        best = None
        parts = self._split(ta, tb)
        if parts is None:
            start = end = None
        else:
            _, start, end, _ = parts
        for i in range(self.M):
            j = self.conn[i]
            if j < 0:
                continue
            if self.held[i]:
                if self.sigmas[i] <= 0.0:
                    continue
                cand = self._scan_fill(i, j, ta, tb, start, end)
            else:
                if self.x[i] <= 0.0:
                    continue
                cand = self._scan_empty(i, j, ta, tb, start, end)
            if cand is not None and (best is None or cand.key() < best.key()):
                best = cand
        return best

    def _scan_fill(self, i, j, ta, tb, start, end):
        """First upward crossing of sigma - mu p in (ta, tb) for a held
        target, localized to the event tolerance."""
        sigma = float(self.sigmas[i])
        mu = float(self.mus[i, j])
        r = float(self.ranges[i])

        def gfn(t):
            return sigma - mu * self._p_of(i, j, t)

        ts = [ta]
        gs = [gfn(ta)]
        if start is not None:
            d_span = self.d_nodes[start:end + 1, i, j]
            g_span = sigma - mu * np.maximum(0.0, 1.0 - d_span / r)
            ts.extend(float(t) for t in self.t_nodes[start:end + 1])
            gs.extend(float(g) for g in g_span)
        if ts[-1] < tb:
            ts.append(tb)
            gs.append(gfn(tb))
        for k in range(1, len(ts)):
            if gs[k] > 0.0 >= gs[k - 1]:
                tau = self._bisect(gfn, ts[k - 1], ts[k])
                return Event(tau, EventKind.FILL, i, j)
        return None

    def _scan_empty(self, i, j, ta, tb, start, end):
        """First zero crossing of the backlog in (ta, tb) for a connected,
        non-empty target."""
        ts = [ta]
        xs = [float(self.x[i])]
        if start is not None:
            ts.append(float(self.t_nodes[start]))
            xs.append(xs[0] + self._x_increment(i, ta, ts[1]))
            if end > start:
                # whole grid steps, vectorized from the cached stage values
                r = float(self.ranges[i])
                mu = float(self.mus[i, j])
                dvec = self.grids[j].pos_st[start:end] - self.w_xy[i]
                d = np.hypot(dvec[..., 0], dvec[..., 1])
                rate = self.sigmas[i] - mu * np.maximum(0.0, 1.0 - d / r)
                dx = (self.h / 6.0) * (rate[:, 0] + 2 * rate[:, 1]
                                       + 2 * rate[:, 2] + rate[:, 3])
                path = xs[1] + np.cumsum(dx)
                ts.extend(float(t) for t in self.t_nodes[start + 1:end + 1])
                xs.extend(float(v) for v in path)
        if ts[-1] < tb:
            ts.append(tb)
            xs.append(xs[-1] + self._x_increment(i, ts[-2], tb))
        for k in range(1, len(ts)):
            if xs[k] <= 0.0 < xs[k - 1]:
                t_lo, x_lo = ts[k - 1], xs[k - 1]

                def xfn(t):
                    return x_lo + self._x_increment(i, t_lo, t)

                tau = self._bisect(xfn, t_lo, ts[k])
                return Event(tau, EventKind.EMPTY, i, j)
        return None

    # ---------------- event application ----------------

    def _flow_now(self, i: int, conn_j: int, held: bool, t: float,
                  p_override: float | None = None) -> float:
        if held:
            return 0.0
        if conn_j < 0:
            return float(self.sigmas[i])
        p = self._p_of(i, conn_j, t) if p_override is None else p_override
        return float(self.sigmas[i] - self.mus[i, conn_j] * p)

    def _visit_tau_prime(self, ev: Event):
        grid = self.grids[ev.agent]
        pos = grid.position_at(ev.time)
        dvec = pos - self.w_xy[ev.target]
        d = float(np.hypot(dvec[0], dvec[1]))
        u = dvec / max(d, 1e-300)
        try:
            block = visit_time_derivative(
                u, grid.jacobian_at(ev.time), grid.velocity_at(ev.time))
        except TangentialCrossing as exc:
            self.warnings.append(
                f"t={ev.time:.6f}: tangential {ev.kind.value} at target "
                f"{ev.target}, agent {ev.agent}: {exc}")
            return None
        tau = np.zeros(self.P)
        sl = slice(N_PER_AGENT * ev.agent, N_PER_AGENT * (ev.agent + 1))
        tau[sl] = block
        return tau

    def _apply_visit_start(self, ev: Event):
        i, j = ev.target, ev.agent
        if self.conn[i] < 0:
            self.conn[i] = j
            # boundary entry has zero proximity: flow is continuous, but the
            # held flag may flip only when sigma is zero (stays held)
            if self.x[i] <= 0.0:
                self.held[i] = self.sigmas[i] <= 0.0

    def _apply_visit_end(self, ev: Event):
        i, j = ev.target, ev.agent
        if self.conn[i] != j:
            return
        was_held = self.held[i]
        flow_before = self._flow_now(i, j, was_held, ev.time, p_override=0.0)
        d_now = np.array([
            math.hypot(g.xy_at(ev.time)[0] - self.w_xy[i, 0],
                       g.xy_at(ev.time)[1] - self.w_xy[i, 1])
            for g in self.grids])
        inside = [l for l in range(self.N)
                  if l != j and d_now[l] < self.ranges[i]]
        succ = inside[0] if inside else -1
        self.conn[i] = succ
        if self.x[i] <= 0.0:
            if succ >= 0:
                p_succ = proximity(float(d_now[succ]), float(self.ranges[i]))
                self.held[i] = self.sigmas[i] <= self.mus[i, succ] * p_succ
            else:
                self.held[i] = self.sigmas[i] <= 0.0
            if was_held and not self.held[i]:
                self.events.append(Event(ev.time, EventKind.FILL, i, succ if succ >= 0 else None))
        flow_after = self._flow_now(i, succ, self.held[i], ev.time)
        if self.with_gradient and flow_before != flow_after:
            tau = self._visit_tau_prime(ev)
            self.xp[i] = apply_event_jump(
                "visit_end", self.xp[i], tau, flow_before, flow_after)

    def _apply_empty(self, ev: Event):
        i = ev.target
        self.x[i] = 0.0
        self.held[i] = True
        if self.with_gradient:
            self.xp[i] = 0.0
        if self.sample_t and abs(self.sample_t[-1] - ev.time) <= 1e-15:
            self.sample_x[-1][i] = 0.0

    def _apply_fill(self, ev: Event):
        self.held[ev.target] = False

    def _apply_event(self, ev: Event):
        self.events.append(ev)
        if ev.kind is EventKind.VISIT_START:
            self._apply_visit_start(ev)
        elif ev.kind is EventKind.VISIT_END:
            self._apply_visit_end(ev)
        elif ev.kind is EventKind.EMPTY:
            self._apply_empty(ev)
        elif ev.kind is EventKind.FILL:
            self._apply_fill(ev)
        if self.sample_conn:
            self.sample_conn[-1] = list(self.conn)

    # ---------------- main loop ----------------

    def run(self) -> SimTrace:
        t = 0.0
        guard = 0
        max_events = 1000 * (self.M * max(1, self.N)) + 10000
        while t < self.T - 1e-12:
            guard += 1
            if guard > max_events:
                raise RuntimeError("event loop failed to make progress")
            if self.delta_idx < len(self.delta_queue):
                ev_delta = self.delta_queue[self.delta_idx]
                t_delta = min(ev_delta.time, self.T)
            else:
                ev_delta, t_delta = None, self.T
            stop = min(t_delta, self.T)
            xi = self._find_xi(t, stop) if stop > t else None
            if xi is not None and xi.time <= stop:
                self._advance(t, xi.time)
                self._apply_event(xi)
                t = xi.time
                continue
            self._advance(t, stop)
            t = stop
            if ev_delta is not None and ev_delta.time <= self.T:
                self.delta_idx += 1
                self._apply_event(ev_delta)

        return self._finish()

    def _finish(self) -> SimTrace:
        S = len(self.sample_t)
        positions = np.empty((S, self.N, 2))
        for s in range(S):
            ref = self.sample_ref[s]
            if ref is not None:
                positions[s] = self.pos_nodes[ref]
            else:
                tcur = self.sample_t[s]
                positions[s] = np.stack(
                    [g.position_at(tcur) for g in self.grids])
        self.events.sort(key=Event.key)
        return SimTrace(
            times=np.array(self.sample_t),
            positions=positions,
            x=np.stack(self.sample_x),
            connection=np.array(self.sample_conn, dtype=int),
            events=self.events,
            warnings=self.warnings,
            horizon=self.T,
            j1_integral=self.i1,
            j1_grad_integral=self.g1.copy() if self.g1 is not None else None,
            j2_integral=self.i2,
            j2_grad_integral=self.g2.copy() if self.g2 is not None else None,
            x_prime_final=self.xp.copy() if self.xp is not None else None,
        )


def simulate(scenario: Scenario, agents=None, opts: SolverOptions | None = None,
             potential: PotentialField | None = None,
             with_gradient: bool = True) -> SimTrace:
    """Run one sample path.

    agents defaults to the scenario's initial ellipses; pass a tuple of
    EllipseParams to simulate a different iterate. When a potential field
    is supplied its running integral and (if with_gradient) gradient are
    accumulated on the same sample times.
    """
    if agents is None:
        agents = scenario.agents
    if opts is None:
        opts = SolverOptions()
    walk = _Walk(scenario, tuple(agents), opts, potential, with_gradient)
    return walk.run()
