"""Planar primitives: convex hulls, membership tests, ray casting and
quadrature rules over convex polygons.

Everything here is immutable after construction and safe to share across
threads. Vertices are stored counter-clockwise; boundary points count as
inside (the integration domains are closed sets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    CollinearInput,
    OriginOutside,
    ResolutionTooCoarse,
    TooFewPoints,
)

_COLLINEAR_EPS = 1e-12


class Point2(NamedTuple):
    x: float
    y: float


def _as_array(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    if pts.shape[-1] != 2:
        raise ValueError(f"expected (n, 2) points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must have finite coordinates")
    return pts


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class ConvexPolygon:
    """Strictly convex polygon with counter-clockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = _as_array(self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise TooFewPoints(f"polygon needs >= 3 vertices, got {len(verts)}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def area(self) -> float:
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def centroid(self) -> np.ndarray:
        v = self.vertices
        nxt = np.roll(v, -1, axis=0)
        w = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
        a = 0.5 * np.sum(w)
        return (v + nxt).T @ w / (6.0 * a)

    def edges(self):
        v = self.vertices
        return zip(v, np.roll(v, -1, axis=0))

    def bounding_box_diagonal(self) -> float:
        v = self.vertices
        span = v.max(axis=0) - v.min(axis=0)
        return float(np.hypot(span[0], span[1]))


def convex_hull(points: Sequence) -> ConvexPolygon:
    """Monotone-chain hull of a point set.

    Raises TooFewPoints for fewer than three distinct points and
    CollinearInput when all points lie on one line. Collinear boundary
    points are dropped so the result is strictly convex; every returned
    vertex is one of the inputs.
    """
    pts = _as_array(points)
    uniq = np.unique(pts, axis=0)
    if len(uniq) < 3:
        raise TooFewPoints(f"need >= 3 distinct points, got {len(uniq)}")

    scale = max(1.0, float(np.abs(uniq).max()))
    eps = _COLLINEAR_EPS * scale * scale
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    spts = uniq[order]

    def half(chain_pts):
        chain = []
        for p in chain_pts:
            while len(chain) >= 2 and _cross(chain[-2], chain[-1], p) <= eps:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(spts)
    upper = half(spts[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise CollinearInput("all points lie on a single line")
    return ConvexPolygon(np.array(hull))


def contains(poly: ConvexPolygon, point, tol: float = 1e-12) -> bool:
    """True when the point is inside or on the boundary of the polygon."""
    p = np.asarray(point, dtype=float)
    scale = max(1.0, float(np.abs(poly.vertices).max()))
    for a, b in poly.edges():
        if _cross(a, b, p) < -tol * scale * scale:
            return False
    return True


def _strictly_inside(poly: ConvexPolygon, p: np.ndarray) -> bool:
    scale = max(1.0, float(np.abs(poly.vertices).max()))
    return all(_cross(a, b, p) > 1e-12 * scale * scale for a, b in poly.edges())


def ray_boundary_distance(poly: ConvexPolygon, origin, angle: float) -> float:
    """Distance from an interior origin along (cos angle, sin angle) to the
    polygon boundary."""
    o = np.asarray(origin, dtype=float)
    if not _strictly_inside(poly, o):
        raise OriginOutside(f"ray origin {tuple(o)} is not strictly interior")
    d = np.array([math.cos(angle), math.sin(angle)])
    best = math.inf
    for a, b in poly.edges():
        e = b - a
        denom = d[0] * e[1] - d[1] * e[0]
        if abs(denom) < 1e-15:
            continue
        ao = o - a
        t = (e[0] * ao[1] - e[1] * ao[0]) / denom  # along the ray
        u = (d[0] * ao[1] - d[1] * ao[0]) / denom  # along the edge
        if t > 0.0 and -1e-12 <= u <= 1.0 + 1e-12:
            best = min(best, t)
    if not math.isfinite(best):
        raise OriginOutside("ray never met the boundary; origin outside?")
    return best


def distance_to_boundary(poly: ConvexPolygon, point) -> float:
    """Distance from a point to the nearest polygon edge segment."""
    p = np.asarray(point, dtype=float)
    best = math.inf
    for a, b in poly.edges():
        e = b - a
        t = float(np.dot(p - a, e) / np.dot(e, e))
        t = min(1.0, max(0.0, t))
        best = min(best, float(np.hypot(*(p - (a + t * e)))))
    return best


def d_plus(point, target_location, range_r: float) -> float:
    """Distance to a target, saturated from below at the sensing range."""
    if range_r <= 0:
        raise ValueError("range_r must be positive")
    p = np.asarray(point, dtype=float)
    w = np.asarray(target_location, dtype=float)
    return max(float(np.hypot(*(p - w))), range_r)


def d_plus_many(points: np.ndarray, target_location, range_r: float) -> np.ndarray:
    """Vectorized `d_plus` over an (n, 2) point array."""
    pts = _as_array(points)
    w = np.asarray(target_location, dtype=float)
    d = np.hypot(pts[:, 0] - w[0], pts[:, 1] - w[1])
    return np.maximum(d, range_r)


@dataclass(frozen=True)
class QuadratureRule:
    """Area-weighted nodes over a convex polygon; weights sum to its area."""

    nodes: np.ndarray    # (n, 2)
    weights: np.ndarray  # (n,)

    def total_weight(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))


def quadrature_over(poly: ConvexPolygon, resolution: float | None = None,
                    min_nodes: int = 16) -> QuadratureRule:
    """Fan-triangulate from the centroid, then split each triangle into a
    uniform grid of congruent sub-triangles; each contributes its centroid
    with weight area/k^2.

    The default spacing is the bounding-box diagonal over 60, which keeps
    smooth integrands below ~1% quadrature error at per-iteration cost.
    """
    if resolution is None:
        resolution = poly.bounding_box_diagonal() / 60.0
    if resolution <= 0:
        raise ValueError("resolution must be positive")

    c = poly.centroid()
    nodes, weights = [], []
    for a, b in poly.edges():
        tri_area = 0.5 * abs(_cross(c, a, b))
        if tri_area == 0.0:
            continue
        longest = max(np.hypot(*(a - c)), np.hypot(*(b - c)), np.hypot(*(b - a)))
        k = max(1, math.ceil(longest / resolution))
        w_sub = tri_area / (k * k)
        # rows of upright and inverted sub-triangle centroids in barycentric form
        for i in range(k):
            for j in range(k - i):
                l1 = (i + 1.0 / 3.0) / k
                l2 = (j + 1.0 / 3.0) / k
                nodes.append(c + l1 * (a - c) + l2 * (b - c))
                weights.append(w_sub)
                if j < k - i - 1:
                    l1 = (i + 2.0 / 3.0) / k
                    l2 = (j + 2.0 / 3.0) / k
                    nodes.append(c + l1 * (a - c) + l2 * (b - c))
                    weights.append(w_sub)
    rule = QuadratureRule(np.array(nodes), np.array(weights))
    if len(rule.weights) < min_nodes:
        raise ResolutionTooCoarse(
            f"{len(rule.weights)} nodes < {min_nodes}; decrease the spacing")
    return rule
