"""Problem instances and their on-disk format.

A scenario is an immutable set of data-emitting targets, initial agent
ellipses and a mission horizon. Files use TOML: comment-friendly, hand
editable, round-trips exactly. Sensing disks must be pairwise disjoint --
overlapping disks are rejected at load time because the collection model
assigns one agent per target.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

from .errors import ParseError, ValidationError
from .trajectory import DEFAULT_AXIS_MIN, EllipseParams

_MODES = ("P1", "P2")
_STEP_RULES = ("fixed", "decay", "backtracking")


@dataclass(frozen=True)
class Target:
    x: float
    y: float
    r: float
    alpha: float = 1.0
    sigma: float = 0.5
    mu: tuple = (1.0,)
    x0: float = 0.0

    @property
    def location(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class SolverOptions:
    """Integrator and field-quadrature settings for one simulation."""

    step: float | None = None            # None -> horizon / 5000
    event_tol: float = 1e-9              # event localization tolerance [s]
    quad_resolution: float | None = None  # None -> hull bbox diagonal / 60
    lam: float = 1.0                     # field-term mixing weight

    def step_for(self, horizon: float) -> float:
        return self.step if self.step is not None else horizon / 5000.0


@dataclass(frozen=True)
class OptimizerOptions:
    mode: str = "P2"
    max_iters: int = 1000
    step_rule: str = "backtracking"
    eta0: float = 0.5
    decay_n0: float = 50.0
    armijo_c: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    max_move: float | None = None   # cap on parameter movement per iteration
    grad_tol: float = 1e-4
    rel_impr_tol: float = 1e-6
    patience: int = 10
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValidationError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.step_rule not in _STEP_RULES:
            raise ValidationError(
                f"step_rule must be one of {_STEP_RULES}, got {self.step_rule!r}")
        if self.eta0 <= 0:
            raise ValidationError("eta0 must be positive")
        if self.grad_tol < 0 or self.rel_impr_tol < 0:
            raise ValidationError("tolerances must be non-negative")


@dataclass(frozen=True)
class Scenario:
    targets: tuple
    agents: tuple
    horizon: float
    a_min: float = DEFAULT_AXIS_MIN

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    def target_positions(self) -> np.ndarray:
        return np.array([[t.x, t.y] for t in self.targets])

    def validate(self) -> "Scenario":
        if self.horizon <= 0:
            raise ValidationError("horizon must be positive")
        if not self.targets:
            raise ValidationError("at least one target is required")
        if not self.agents:
            raise ValidationError("at least one agent is required")
        for i, t in enumerate(self.targets):
            if t.r <= 0:
                raise ValidationError(f"target {i}: sensing range must be positive")
            if t.sigma < 0:
                raise ValidationError(f"target {i}: inflow must be non-negative")
            if t.x0 < 0:
                raise ValidationError(f"target {i}: initial data must be non-negative")
            if len(t.mu) != self.n_agents:
                raise ValidationError(
                    f"target {i}: needs one collection rate per agent "
                    f"({self.n_agents}), got {len(t.mu)}")
            if any(m < 0 for m in t.mu):
                raise ValidationError(
                    f"target {i}: collection rates must be non-negative")
        for i in range(len(self.targets)):
            for j in range(i + 1, len(self.targets)):
                ti, tj = self.targets[i], self.targets[j]
                dist = math.hypot(ti.x - tj.x, ti.y - tj.y)
                if dist <= ti.r + tj.r:
                    raise ValidationError(
                        f"sensing disks of targets {i} and {j} overlap "
                        f"(separation {dist:.6g} <= {ti.r + tj.r:.6g})")
        for j, p in enumerate(self.agents):
            if p.a < self.a_min or p.b < self.a_min:
                raise ValidationError(
                    f"agent {j}: semi-axes must be >= a_min={self.a_min}")
            if not (0 <= p.phi < math.pi):
                raise ValidationError(f"agent {j}: phi must lie in [0, pi)")
        return self

    def with_agents(self, agents) -> "Scenario":
        return replace(self, agents=tuple(agents))


def _field(table: dict, name: str, where: str, default=None, required=False):
    if name in table:
        return table[name]
    if required:
        raise ParseError(f"{where}: missing required field '{name}'")
    return default


def _build_target(table: dict, idx: int, n_agents: int) -> Target:
    where = f"targets[{idx}]"
    x = _field(table, "x", where, required=True)
    y = _field(table, "y", where, required=True)
    r = _field(table, "r", where, required=True)
    mu_raw = _field(table, "mu", where, required=True)
    if isinstance(mu_raw, (int, float)):
        mu = (float(mu_raw),) * n_agents
    elif isinstance(mu_raw, list):
        mu = tuple(float(m) for m in mu_raw)
    else:
        raise ParseError(f"{where}: mu must be a number or a per-agent list")
    return Target(
        x=float(x), y=float(y), r=float(r),
        alpha=float(_field(table, "alpha", where, default=1.0)),
        sigma=float(_field(table, "sigma", where, default=0.0)),
        mu=mu,
        x0=float(_field(table, "x0", where, default=0.0)),
    )


def _build_agent(table: dict, idx: int) -> EllipseParams:
    where = f"agents[{idx}]"
    try:
        return EllipseParams(
            A=float(_field(table, "A", where, required=True)),
            B=float(_field(table, "B", where, required=True)),
            a=float(_field(table, "a", where, required=True)),
            b=float(_field(table, "b", where, required=True)),
            phi=float(_field(table, "phi", where, default=0.0)),
        )
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from exc


def _build_options(table: dict) -> OptimizerOptions:
    solver = SolverOptions(
        step=table.get("step"),
        event_tol=float(table.get("event_tol", 1e-9)),
        quad_resolution=table.get("quad_resolution"),
        lam=float(table.get("lam", 1.0)),
    )
    kwargs = {}
    for key in ("mode", "step_rule"):
        if key in table:
            kwargs[key] = table[key]
    for key in ("max_iters", "patience", "max_backtracks"):
        if key in table:
            kwargs[key] = int(table[key])
    for key in ("eta0", "decay_n0", "armijo_c", "shrink",
                "grad_tol", "rel_impr_tol", "max_move"):
        if key in table:
            kwargs[key] = float(table[key])
    return OptimizerOptions(solver=solver, **kwargs)


def loads_scenario(text: str):
    """Parse scenario TOML text into (Scenario, OptimizerOptions)."""
    try:
        doc = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ParseError(f"scenario file is not valid TOML: {exc}") from exc

    horizon = _field(doc, "horizon", "top level", required=True)
    agent_tables = doc.get("agents", [])
    if not isinstance(agent_tables, list) or not agent_tables:
        raise ParseError("top level: at least one [[agents]] table is required")
    target_tables = doc.get("targets", [])
    if not isinstance(target_tables, list) or not target_tables:
        raise ParseError("top level: at least one [[targets]] table is required")

    n_agents = len(agent_tables)
    scenario = Scenario(
        targets=tuple(_build_target(t, i, n_agents)
                      for i, t in enumerate(target_tables)),
        agents=tuple(_build_agent(t, i) for i, t in enumerate(agent_tables)),
        horizon=float(horizon),
        a_min=float(doc.get("a_min", DEFAULT_AXIS_MIN)),
    ).validate()
    options = _build_options(doc.get("options", {}))
    return scenario, options


def load_scenario(path):
    """Load and validate a scenario file. See `loads_scenario`."""
    with open(path, "r", encoding="utf-8") as fh:
        return loads_scenario(fh.read())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value)}")


def dumps_scenario(scenario: Scenario, options: OptimizerOptions | None = None) -> str:
    """Serialize to TOML; loading the output reproduces the inputs exactly."""
    lines = [f"horizon = {_fmt(scenario.horizon)}",
             f"a_min = {_fmt(scenario.a_min)}", ""]
    for t in scenario.targets:
        mu = list(t.mu) if len(set(t.mu)) > 1 or len(t.mu) > 1 else t.mu[0]
        lines += ["[[targets]]",
                  f"x = {_fmt(t.x)}",
                  f"y = {_fmt(t.y)}",
                  f"r = {_fmt(t.r)}",
                  f"alpha = {_fmt(t.alpha)}",
                  f"sigma = {_fmt(t.sigma)}",
                  f"mu = {_fmt(mu)}",
                  f"x0 = {_fmt(t.x0)}", ""]
    for p in scenario.agents:
        lines += ["[[agents]]",
                  f"A = {_fmt(p.A)}",
                  f"B = {_fmt(p.B)}",
                  f"a = {_fmt(p.a)}",
                  f"b = {_fmt(p.b)}",
                  f"phi = {_fmt(p.phi)}", ""]
    if options is not None:
        lines += ["[options]",
                  f'mode = {_fmt(options.mode)}',
                  f"max_iters = {_fmt(options.max_iters)}",
                  f'step_rule = {_fmt(options.step_rule)}',
                  f"eta0 = {_fmt(options.eta0)}",
                  f"decay_n0 = {_fmt(options.decay_n0)}",
                  f"armijo_c = {_fmt(options.armijo_c)}",
                  f"shrink = {_fmt(options.shrink)}",
                  f"max_backtracks = {_fmt(options.max_backtracks)}",
                  f"grad_tol = {_fmt(options.grad_tol)}",
                  f"rel_impr_tol = {_fmt(options.rel_impr_tol)}",
                  f"patience = {_fmt(options.patience)}",
                  f"event_tol = {_fmt(options.solver.event_tol)}",
                  f"lam = {_fmt(options.solver.lam)}"]
        if options.solver.step is not None:
            lines.append(f"step = {_fmt(options.solver.step)}")
        if options.solver.quad_resolution is not None:
            lines.append(f"quad_resolution = {_fmt(options.solver.quad_resolution)}")
        lines.append("")
    return "\n".join(lines)


def bundled_scenario_names() -> list:
    root = resources.files("harvestopt").joinpath("scenarios")
    return sorted(p.name[:-len(".scenario")]
                  for p in root.iterdir() if p.name.endswith(".scenario"))


def load_bundled(name: str):
    """Load one of the scenarios shipped with the package."""
    fname = name if name.endswith(".scenario") else f"{name}.scenario"
    res = resources.files("harvestopt").joinpath("scenarios").joinpath(fname)
    try:
        text = res.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError(
            f"no bundled scenario {name!r}; available: {bundled_scenario_names()}")
    return loads_scenario(text)
