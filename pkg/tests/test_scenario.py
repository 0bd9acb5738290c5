import math

import pytest

from harvestopt.errors import ParseError, ValidationError
from harvestopt.scenario import (
    OptimizerOptions,
    Scenario,
    SolverOptions,
    Target,
    dumps_scenario,
    load_bundled,
    loads_scenario,
)
from harvestopt.trajectory import EllipseParams

GOOD = """
# two harvest targets, one circling agent
horizon = 12.0

[[targets]]
x = 0.0
y = -0.9
r = 0.2
sigma = 0.5
mu = 5.0

[[targets]]
x = 0.0
y = 0.9
r = 0.2
alpha = 2.0
sigma = 0.25
mu = 5.0
x0 = 1.5

[[agents]]
A = 0.0
B = 0.0
a = 1.2
b = 0.6
phi = 1.5707963267948966

[options]
mode = "P1"
max_iters = 40
eta0 = 0.1
"""


class TestLoad:
    def test_parses_targets_and_defaults(self):
        sc, opts = loads_scenario(GOOD)
        assert sc.n_targets == 2 and sc.n_agents == 1
        assert sc.targets[0].alpha == 1.0 and sc.targets[0].x0 == 0.0
        assert sc.targets[1].x0 == 1.5
        assert sc.targets[0].mu == (5.0,)
        assert opts.mode == "P1" and opts.max_iters == 40
        assert opts.solver.lam == 1.0

    def test_mu_list_per_agent(self):
        text = GOOD.replace('mu = 5.0', 'mu = [5.0]', 1)
        sc, _ = loads_scenario(text)
        assert sc.targets[0].mu == (5.0,)

    def test_missing_field_is_parse_error(self):
        with pytest.raises(ParseError, match="targets\\[0\\]"):
            loads_scenario("horizon=1.0\n[[targets]]\nx=0.0\n[[agents]]\nA=0.0\nB=0.0\na=1.0\nb=1.0\n")

    def test_bad_toml_is_parse_error(self):
        with pytest.raises(ParseError):
            loads_scenario("horizon = = 3")

    def test_overlapping_disks_rejected(self):
        text = """
horizon = 10.0
[[targets]]
x = 0.0
y = 0.0
r = 0.2
sigma = 0.5
mu = 1.0
[[targets]]
x = 0.3
y = 0.0
r = 0.2
sigma = 0.5
mu = 1.0
[[agents]]
A = 0.0
B = 0.0
a = 1.0
b = 1.0
"""
        with pytest.raises(ValidationError, match="overlap"):
            loads_scenario(text)

    def test_tiny_axes_rejected(self):
        text = GOOD.replace("a = 1.2", "a = 0.01")
        with pytest.raises(ValidationError, match="a_min"):
            loads_scenario(text)

    def test_bad_mode_rejected(self):
        text = GOOD.replace('mode = "P1"', 'mode = "P9"')
        with pytest.raises(ValidationError, match="mode"):
            loads_scenario(text)


class TestRoundTrip:
    def test_reload_is_identical(self):
        sc, opts = loads_scenario(GOOD)
        text = dumps_scenario(sc, opts)
        sc2, opts2 = loads_scenario(text)
        assert sc2 == sc
        assert opts2 == opts

    def test_round_trip_multi_agent_mu(self):
        sc = Scenario(
            targets=(Target(0, 0, 0.5, sigma=0.1, mu=(3.0, 7.0)),),
            agents=(EllipseParams(0, 0, 1, 1, 0.0),
                    EllipseParams(2, 2, 1, 0.5, 0.25)),
            horizon=5.0,
        ).validate()
        sc2, _ = loads_scenario(dumps_scenario(sc))
        assert sc2 == sc


class TestBundled:
    def test_fig3_contents(self):
        sc, opts = load_bundled("fig3")
        assert sc.n_targets == 7 and sc.n_agents == 1
        assert sc.horizon == 50.0
        for t in sc.targets:
            assert t.r == 0.2 and t.sigma == 0.003 and t.alpha == 1.0
            assert t.mu == (100.0,)
        # seven targets equally spaced on one circle
        radii = [math.hypot(t.x, t.y) for t in sc.targets]
        assert max(radii) - min(radii) < 1e-9
        assert opts.mode == "P2"

    def test_fig3_heavy_inflow_variant(self):
        sc, _ = load_bundled("fig3-heavy-inflow")
        light, _ = load_bundled("fig3")
        assert all(t.sigma == 0.5 for t in sc.targets)
        assert [(t.x, t.y, t.r, t.mu) for t in sc.targets] == \
               [(t.x, t.y, t.r, t.mu) for t in light.targets]
        assert sc.agents == light.agents

    def test_fig4_contents(self):
        sc, _ = load_bundled("fig4")
        assert sc.n_targets == 7 and sc.n_agents == 2
        assert sc.horizon == 50.0
        for t in sc.targets:
            assert t.r == 0.5 and t.sigma == 0.5
            assert t.mu == (10.0, 10.0)

    def test_two_target_contents(self):
        sc, _ = load_bundled("two-target")
        assert sc.n_targets == 2 and sc.n_agents == 1

    def test_unknown_name(self):
        with pytest.raises(ParseError, match="available"):
            load_bundled("nope")


class TestOptions:
    def test_defaults(self):
        o = OptimizerOptions()
        assert o.mode == "P2"
        assert o.step_rule == "backtracking"
        assert o.grad_tol == 1e-4
        assert o.solver.event_tol == 1e-9

    def test_step_default_scales_with_horizon(self):
        assert SolverOptions().step_for(50.0) == pytest.approx(0.01)
        assert SolverOptions(step=0.002).step_for(50.0) == 0.002
