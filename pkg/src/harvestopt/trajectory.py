"""Elliptical trajectory kinematics.

An agent's path is an ellipse with parameter vector (A, B, a, b, phi):
center, semi-axes and orientation. The agent moves at unit speed, which
pins the time law of the eccentric anomaly to

    rho_dot = (a^2 sin^2 rho + b^2 cos^2 rho)^(-1/2)

the reciprocal of the tangent-vector norm; the orientation phi drops out
of that norm. Because the anomaly obeys its own ODE, sensitivities of the
position with respect to (a, b) must be carried through rho as well; the
variational equation for those two entries is provided here. (A, B, phi)
never enter the anomaly dynamics, so their anomaly sensitivities are
identically zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("A", "B", "a", "b", "phi")
N_PARAMS = len(PARAM_NAMES)
DEFAULT_AXIS_MIN = 0.05


@dataclass(frozen=True)
class EllipseParams:
    A: float
    B: float
    a: float
    b: float
    phi: float

    def __post_init__(self):
        vals = (self.A, self.B, self.a, self.b, self.phi)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite ellipse parameters: {vals}")
        if self.a <= 0 or self.b <= 0:
            raise ValueError("semi-axes must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.a, self.b, self.phi])

    @staticmethod
    def from_array(v) -> "EllipseParams":
        A, B, a, b, phi = (float(x) for x in v)
        return EllipseParams(A, B, a, b, phi)


def wrap_orientation(phi: float) -> float:
    """Wrap into [0, pi); values already in range pass through unchanged."""
    if 0.0 <= phi < math.pi:
        return phi
    return phi % math.pi


def project_params(p: EllipseParams, axis_min: float = DEFAULT_AXIS_MIN) -> EllipseParams:
    """Clamp semi-axes to the minimum and wrap the orientation.

    Feasible parameters are returned unchanged (same floats), so a
    zero-gradient step leaves the vector bitwise identical.
    """
    a = p.a if p.a >= axis_min else axis_min
    b = p.b if p.b >= axis_min else axis_min
    phi = wrap_orientation(p.phi)
    if a == p.a and b == p.b and phi == p.phi:
        return p
    return EllipseParams(p.A, p.B, a, b, phi)


def position(p: EllipseParams, rho):
    """Agent position at anomaly rho; accepts scalars or arrays."""
    c, s = np.cos(rho), np.sin(rho)
    cp, sp = math.cos(p.phi), math.sin(p.phi)
    x = p.A + p.a * c * cp - p.b * s * sp
    y = p.B + p.a * c * sp + p.b * s * cp
    return np.stack(np.broadcast_arrays(x, y), axis=-1)


def tangent(p: EllipseParams, rho):
    """d position / d rho."""
    c, s = np.cos(rho), np.sin(rho)
    cp, sp = math.cos(p.phi), math.sin(p.phi)
    tx = -p.a * s * cp - p.b * c * sp
    ty = -p.a * s * sp + p.b * c * cp
    return np.stack(np.broadcast_arrays(tx, ty), axis=-1)


def anomaly_rate(p: EllipseParams, rho):
    """Time derivative of the anomaly that keeps the path speed at one."""
    s2 = np.sin(rho) ** 2
    c2 = np.cos(rho) ** 2
    return (p.a * p.a * s2 + p.b * p.b * c2) ** -0.5


def anomaly_rate_partials(p: EllipseParams, rho):
    """(d rho_dot / d rho, d rho_dot / d a, d rho_dot / d b).

    rho_dot = E^(-1/2) with E = a^2 sin^2 + b^2 cos^2, so each partial is
    -(1/2) E^(-3/2) dE/d(.).
    """
    s, c = np.sin(rho), np.cos(rho)
    s2, c2 = s * s, c * c
    E = p.a * p.a * s2 + p.b * p.b * c2
    e32 = E ** -1.5
    d_rho = -(p.a * p.a - p.b * p.b) * s * c * e32
    d_a = -p.a * s2 * e32
    d_b = -p.b * c2 * e32
    return d_rho, d_a, d_b


def anomaly_sensitivity_rates(p: EllipseParams, rho, rho_sens):
    """Right-hand side of the variational equation for d rho / d theta.

    rho_sens is the 5-vector ordered as PARAM_NAMES; the returned rates for
    (A, B, phi) are exactly zero because the anomaly dynamics do not involve
    them.
    """
    d_rho, d_a, d_b = anomaly_rate_partials(p, rho)
    rates = np.zeros(N_PARAMS)
    rates[2] = d_rho * rho_sens[2] + d_a
    rates[3] = d_rho * rho_sens[3] + d_b
    rates[0] = d_rho * rho_sens[0]
    rates[1] = d_rho * rho_sens[1]
    rates[4] = d_rho * rho_sens[4]
    return rates


def position_jacobian(p: EllipseParams, rho, rho_sens):
    """Total derivative of position w.r.t. (A, B, a, b, phi), a 2x5 matrix.

    Combines the explicit parameter dependence with the chain-rule term
    through the anomaly: ds/dtheta = partial s/partial theta
    + (ds/drho) rho_sens^T.
    """
    c, s = math.cos(rho), math.sin(rho)
    cp, sp = math.cos(p.phi), math.sin(p.phi)
    jac = np.zeros((2, N_PARAMS))
    jac[0, 0] = 1.0
    jac[1, 1] = 1.0
    jac[0, 2] = c * cp
    jac[1, 2] = c * sp
    jac[0, 3] = -s * sp
    jac[1, 3] = s * cp
    jac[0, 4] = -(p.a * c * sp + p.b * s * cp)
    jac[1, 4] = p.a * c * cp - p.b * s * sp
    tan = tangent(p, rho)
    jac += np.outer(tan, np.asarray(rho_sens))
    return jac


def position_jacobian_many(p: EllipseParams, rho: np.ndarray,
                           sens_ab: np.ndarray) -> np.ndarray:
    """Vectorized `position_jacobian` over arrays of anomalies.

    sens_ab carries only the (a, b) anomaly sensitivities, shape
    rho.shape + (2,); the other three are structurally zero.
    """
    rho = np.asarray(rho, dtype=float)
    c, s = np.cos(rho), np.sin(rho)
    cp, sp = math.cos(p.phi), math.sin(p.phi)
    jac = np.zeros(rho.shape + (2, N_PARAMS))
    jac[..., 0, 0] = 1.0
    jac[..., 1, 1] = 1.0
    jac[..., 0, 2] = c * cp
    jac[..., 1, 2] = c * sp
    jac[..., 0, 3] = -s * sp
    jac[..., 1, 3] = s * cp
    jac[..., 0, 4] = -(p.a * c * sp + p.b * s * cp)
    jac[..., 1, 4] = p.a * c * cp - p.b * s * sp
    tx = -p.a * s * cp - p.b * c * sp
    ty = -p.a * s * sp + p.b * c * cp
    jac[..., 0, 2] += tx * sens_ab[..., 0]
    jac[..., 1, 2] += ty * sens_ab[..., 0]
    jac[..., 0, 3] += tx * sens_ab[..., 1]
    jac[..., 1, 3] += ty * sens_ab[..., 1]
    return jac


def velocity(p: EllipseParams, rho):
    """Time derivative of position; unit norm by construction."""
    t = tangent(p, rho)
    return t * np.asarray(anomaly_rate(p, rho))[..., None]
