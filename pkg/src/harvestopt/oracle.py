"""Central-difference gradient oracle.

Independent of the event-driven gradient path: it only ever runs full
simulations at perturbed parameter vectors. Sample-path derivatives are
valid within one event sequence, so each component records whether the
+/- h runs reproduced the nominal sequence; on a mismatch the step is
halved (up to max_halvings) before the component is flagged and excluded
from comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optimizer import evaluate, flatten_params, param_names, prepare_potential, unflatten_params
from .scenario import OptimizerOptions, Scenario


@dataclass(frozen=True)
class FDResult:
    values: np.ndarray          # (P,) central differences
    sequence_match: np.ndarray  # (P,) bool
    h_used: np.ndarray          # (P,)
    names: list
    nominal_sequence: tuple


def fd_gradient(scenario: Scenario, agents=None,
                opts: OptimizerOptions | None = None,
                h: float = 1e-5, max_halvings: int = 3,
                objective_fn=None) -> FDResult:
    """Central differences of the optimization objective per parameter.

    objective_fn(scenario, agents, opts) -> float substitutes the objective
    (self-test hook); event-sequence checking is skipped in that case since
    there is no trace to compare.
    """
    opts = opts or OptimizerOptions()
    agents = tuple(agents) if agents is not None else scenario.agents
    n_agents = len(agents)
    theta0 = flatten_params(agents)
    n_par = len(theta0)

    if objective_fn is None:
        potential, _ = prepare_potential(scenario, opts)

        def run(vec):
            val = evaluate(scenario, unflatten_params(vec, n_agents), opts,
                           potential, with_gradient=False)
            return val.j, val.trace.event_sequence()

        nominal_seq = run(theta0)[1]
    else:
        def run(vec):
            return objective_fn(scenario, unflatten_params(vec, n_agents),
                                opts), None

        nominal_seq = None

    values = np.empty(n_par)
    match = np.zeros(n_par, dtype=bool)
    h_used = np.empty(n_par)
    for k in range(n_par):
        hk = h
        for _ in range(max_halvings + 1):
            vp, vm = theta0.copy(), theta0.copy()
            vp[k] += hk
            vm[k] -= hk
            jp, seq_p = run(vp)
            jm, seq_m = run(vm)
            values[k] = (jp - jm) / (2.0 * hk)
            h_used[k] = hk
            if nominal_seq is None or (seq_p == nominal_seq == seq_m):
                match[k] = True
                break
            hk *= 0.5
    return FDResult(values, match, h_used, param_names(n_agents), nominal_seq)


def compare(ipa: np.ndarray, fd: FDResult,
            rel_tol: float = 1e-2, abs_floor: float = 1e-6):
    """Componentwise check of an event-driven gradient against the oracle.

    Components with |fd| < abs_floor are compared absolutely at abs_floor;
    flagged (sequence-mismatch) components are skipped. Returns a list of
    row dicts and the overall pass flag.
    """
    rows = []
    ok_all = True
    for k, name in enumerate(fd.names):
        fd_k = float(fd.values[k])
        ipa_k = float(ipa[k])
        if not fd.sequence_match[k]:
            rows.append({"name": name, "ipa": ipa_k, "fd": fd_k,
                         "rel_err": float("nan"), "checked": False,
                         "ok": True, "h": float(fd.h_used[k])})
            continue
        if abs(fd_k) < abs_floor:
            ok = abs(ipa_k - fd_k) < abs_floor
            rel = abs(ipa_k - fd_k)
        else:
            rel = abs(ipa_k - fd_k) / abs(fd_k)
            ok = rel < rel_tol
        ok_all &= ok
        rows.append({"name": name, "ipa": ipa_k, "fd": fd_k,
                     "rel_err": rel, "checked": True, "ok": ok,
                     "h": float(fd.h_used[k])})
    return rows, ok_all
