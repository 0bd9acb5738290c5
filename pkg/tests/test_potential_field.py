import math

import numpy as np
import pytest

from harvestopt.errors import TargetOnHullBoundary
from harvestopt.geometry import ConvexPolygon, contains, convex_hull
from harvestopt.potential_field import (
    build_field,
    build_field_over,
    density_identity_residual,
    j2,
    j2_fast,
    j2_gradient,
    j2_gradient_fast,
    reward_density,
    spread_constants,
    time_series_terms,
    travel_cost,
)
from harvestopt.scenario import Scenario, Target
from harvestopt.trajectory import EllipseParams, position, position_jacobian


def square_hull(half=1.0, center=(0.0, 0.0)):
    cx, cy = center
    return ConvexPolygon(np.array([
        [cx - half, cy - half], [cx + half, cy - half],
        [cx + half, cy + half], [cx - half, cy + half]]))


def ring_scenario(n=5, radius=2.0, r=0.2):
    targets = tuple(
        Target(radius * math.cos(2 * math.pi * k / n),
               radius * math.sin(2 * math.pi * k / n),
               r, sigma=0.5, mu=(10.0,))
        for k in range(n))
    return Scenario(targets=targets,
                    agents=(EllipseParams(0, 0, 1, 1, 0.0),),
                    horizon=10.0).validate()


class TestRewardDensity:
    def test_single_target_point_value(self):
        field = build_field_over(square_hull(3.0), [Target(0, 0, 0.2, mu=(1.0,))])
        assert reward_density(field, [1.0], (2.0, 0.0)) == pytest.approx(0.5)

    def test_zero_states_zero_density(self):
        field = build_field(ring_scenario())
        assert reward_density(field, np.zeros(5), (0.3, 0.1)) == 0.0

    def test_saturates_inside_disk(self):
        field = build_field_over(square_hull(3.0), [Target(0, 0, 0.2, mu=(1.0,))])
        v_center = reward_density(field, [1.0], (0.0, 0.0))
        v_edgeish = reward_density(field, [1.0], (0.1, 0.05))
        assert v_center == pytest.approx(5.0)
        assert v_edgeish == pytest.approx(5.0)

    def test_positive_whenever_some_state_positive(self):
        field = build_field(ring_scenario())
        x = np.zeros(5)
        x[3] = 1e-6
        vals = [reward_density(field, x, node) for node in field.rule.nodes[::37]]
        assert all(v > 0 for v in vals)

    def test_monotone_decay_beyond_range(self):
        field = build_field_over(square_hull(5.0), [Target(0, 0, 0.2, mu=(1.0,))])
        radii = np.linspace(0.25, 4.0, 40)
        vals = [reward_density(field, [2.0], (rr, 0.0)) for rr in radii]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestTravelCost:
    def test_single_agent(self):
        assert travel_cost([(0.0, 0.0)], (3.0, 4.0)) == pytest.approx(25.0)

    def test_coincident(self):
        assert travel_cost([(1.0, -2.0)], (1.0, -2.0)) == 0.0

    def test_two_agents(self):
        assert travel_cost([(1.0, 0.0), (0.0, 1.0)], (0.0, 0.0)) == pytest.approx(2.0)


class TestJ2:
    def test_zero_states(self):
        field = build_field(ring_scenario())
        assert j2(field, [(0.0, 0.0)], np.zeros(5)) == 0.0

    def test_linear_in_states(self):
        field = build_field(ring_scenario())
        x = np.array([0.5, 1.0, 0.0, 2.0, 0.25])
        v1 = j2(field, [(0.3, -0.2)], x)
        v2 = j2(field, [(0.3, -0.2)], 2 * x)
        assert v2 == pytest.approx(2 * v1, rel=1e-12)

    def test_brute_force_grid(self):
        # independent oracle: uniform cell grid over the square at 4x the
        # node density of the module rule
        hull = square_hull(1.0)
        target = Target(0, 0, 0.2, mu=(1.0,))
        field = build_field_over(hull, [target], resolution=0.05)
        agent = (0.0, 0.0)
        n = 400
        xs = np.linspace(-1 + 1 / n, 1 - 1 / n, n)
        gx, gy = np.meshgrid(xs, xs)
        cell = (2.0 / n) ** 2
        d = np.maximum(np.hypot(gx, gy), 0.2)
        p = gx ** 2 + gy ** 2
        brute = float(np.sum(p / d) * cell)
        assert j2(field, [agent], [1.0]) == pytest.approx(brute, rel=0.01)

    def test_fast_matches_node_sum(self):
        rng = np.random.default_rng(8)
        field = build_field(ring_scenario())
        for _ in range(5):
            s = rng.normal(size=(2, 2))
            x = rng.uniform(0, 3, size=5)
            assert j2_fast(field, s, x) == pytest.approx(
                j2(field, s, x), rel=1e-10)

    def test_cached_distances_saturate_at_range(self):
        field = build_field(ring_scenario())
        assert np.all(field.dplus >= field.ranges[None, :])


class TestJ2Gradient:
    def _setup(self):
        field = build_field(ring_scenario())
        p = EllipseParams(0.2, -0.3, 0.9, 0.6, 0.7)
        rho = 1.1
        s = position(p, rho).reshape(1, 2)
        jac = position_jacobian(p, rho, np.zeros(5)).reshape(1, 2, 5)
        return field, p, rho, s, jac

    def test_position_term_matches_fd(self):
        # oracle: central differences of j2 through the ellipse position at
        # frozen anomaly and states
        field, p, rho, s, jac = self._setup()
        x = np.array([1.0, 0.5, 2.0, 0.0, 0.7])
        grad = j2_gradient(field, s, jac, x, np.zeros((5, 5)))
        h = 1e-6
        vec = p.as_array()
        for k in range(5):
            vp, vm = vec.copy(), vec.copy()
            vp[k] += h
            vm[k] -= h
            jp = j2(field, position(EllipseParams(*vp), rho).reshape(1, 2), x)
            jm = j2(field, position(EllipseParams(*vm), rho).reshape(1, 2), x)
            assert grad[k] == pytest.approx((jp - jm) / (2 * h), rel=1e-4, abs=1e-8)

    def test_state_term_is_linear_map(self):
        # d j2 / d theta through x alone equals j2 evaluated at the
        # sensitivity column because the integral is linear in x
        field, p, rho, s, jac = self._setup()
        rng = np.random.default_rng(9)
        xp = rng.normal(size=(5, 5))
        grad = j2_gradient(field, s, np.zeros((1, 2, 5)), np.zeros(5), xp)
        for k in range(5):
            assert grad[k] == pytest.approx(j2(field, s, xp[:, k]), rel=1e-10)

    def test_fast_matches_node_sum(self):
        field, p, rho, s, jac = self._setup()
        rng = np.random.default_rng(10)
        x = rng.uniform(0, 2, size=5)
        xp = rng.normal(size=(5, 5))
        np.testing.assert_allclose(
            j2_gradient_fast(field, s, jac, x, xp),
            j2_gradient(field, s, jac, x, xp), rtol=1e-9, atol=1e-12)

    def test_nonzero_without_events(self):
        # all sensitivities zero but states positive: the travel-cost term
        # still produces a usable direction
        field, p, rho, s, jac = self._setup()
        grad = j2_gradient(field, s, jac, np.ones(5), np.zeros((5, 5)))
        assert np.linalg.norm(grad) > 0

    def test_all_zero_states_and_sens(self):
        field, p, rho, s, jac = self._setup()
        grad = j2_gradient(field, s, jac, np.zeros(5), np.zeros((5, 5)))
        np.testing.assert_array_equal(grad, np.zeros(5))


class TestTimeSeriesTerms:
    def test_matches_pointwise_evaluation(self):
        field = build_field(ring_scenario())
        p0 = EllipseParams(0.1, 0.0, 1.0, 0.7, 0.3)
        p1 = EllipseParams(-0.2, 0.4, 0.8, 0.5, 1.2)
        rng = np.random.default_rng(11)
        rho = rng.uniform(0, 2 * math.pi, size=(6, 2))
        pos = np.stack([position(p0, rho[:, 0]), position(p1, rho[:, 1])], axis=1)
        jac = np.stack([
            np.stack([position_jacobian(p0, r, np.zeros(5)) for r in rho[:, 0]]),
            np.stack([position_jacobian(p1, r, np.zeros(5)) for r in rho[:, 1]]),
        ], axis=1)
        x = rng.uniform(0, 2, size=(6, 5))
        xp = rng.normal(size=(6, 5, 10))
        series, grads = time_series_terms(field, pos, jac, x, xp)
        for k in range(6):
            full_jac = np.zeros((2, 2, 5))
            full_jac[0] = jac[k, 0]
            full_jac[1] = jac[k, 1]
            assert series[k] == pytest.approx(
                j2(field, pos[k], x[k]), rel=1e-9)
            np.testing.assert_allclose(
                grads[k],
                j2_gradient_fast(field, pos[k], full_jac, x[k], xp[k]),
                rtol=1e-9, atol=1e-12)


class TestSpreadConstants:
    def test_disk_closed_form(self):
        # 64-gon approximation of the unit disk; interior target with
        # range 0.2 has constant 2*pi*(1 + log 5)
        ang = 2 * np.pi * np.arange(64) / 64
        hull = ConvexPolygon(np.stack([np.cos(ang), np.sin(ang)], axis=1))
        c = spread_constants(hull, [Target(0, 0, 0.2, mu=(1.0,))])
        expected = 2 * math.pi * (1 + math.log(5.0))
        assert c[0] == pytest.approx(expected, rel=5e-3)

    def test_hull_equal_to_sensing_circle(self):
        ang = 2 * np.pi * np.arange(128) / 128
        r = 0.7
        hull = ConvexPolygon(r * np.stack([np.cos(ang), np.sin(ang)], axis=1))
        c = spread_constants(hull, [Target(0, 0, r, mu=(1.0,))])
        assert c[0] == pytest.approx(2 * math.pi, rel=2e-3)

    def test_linear_in_alpha(self):
        hull = square_hull(2.0)
        c1 = spread_constants(hull, [Target(0.2, -0.3, 0.2, alpha=1.0, mu=(1.0,))])
        c2 = spread_constants(hull, [Target(0.2, -0.3, 0.2, alpha=2.0, mu=(1.0,))])
        assert c2[0] == pytest.approx(2 * c1[0], rel=1e-12)

    def test_positive_for_interior_targets(self):
        rng = np.random.default_rng(12)
        hull = convex_hull(rng.normal(size=(10, 2)) * 3.0)
        for _ in range(10):
            p = hull.centroid() + rng.normal(size=2) * 0.3
            if not contains(hull, p):
                continue
            c = spread_constants(hull, [Target(p[0], p[1], 0.1, mu=(1.0,))])
            assert c[0] > 0

    def test_boundary_target_rejected(self):
        hull = square_hull(1.0)
        with pytest.raises(TargetOnHullBoundary):
            spread_constants(hull, [Target(1.0, 0.0, 0.1, mu=(1.0,))])


class TestDensityIdentity:
    def test_zero_states(self):
        hull = square_hull(1.5)
        targets = [Target(0.2, -0.1, 0.2, mu=(1.0,))]
        field = build_field_over(hull, targets)
        assert density_identity_residual(field, targets, [0.0]) == 0.0

    def test_single_interior_target_square_hull(self):
        hull = square_hull(1.5)
        targets = [Target(0.2, -0.1, 0.2, mu=(1.0,))]
        field = build_field_over(hull, targets)
        res = density_identity_residual(field, targets, [1.0])
        assert res < 1e-2

    def test_scale_invariance(self):
        hull = square_hull(1.5)
        targets = [Target(0.2, -0.1, 0.2, mu=(1.0,)),
                   Target(-0.6, 0.5, 0.15, alpha=1.4, mu=(1.0,))]
        field = build_field_over(hull, targets)
        r1 = density_identity_residual(field, targets, [1.0, 0.5])
        r2 = density_identity_residual(field, targets, [10.0, 5.0])
        assert r1 == pytest.approx(r2, rel=1e-9)


def field_targets(field):
    return [Target(xy[0], xy[1], field.ranges[i], alpha=field.alphas[i], mu=(1.0,))
            for i, xy in enumerate(field.targets_xy)]
