"""Registry of runnable scenarios and their registered target numbers.

Targets carry a ``kind``: ``reference`` values are closed forms stated for
the model being reproduced, ``derived`` values were computed independently
for this package (analytic substitution, arithmetic, or a direct oracle).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Target:
    name: str
    value: float
    kind: str  # reference | derived


@dataclass(frozen=True)
class Scenario:
    id: str
    reproduces: str
    targets: tuple = ()
    model: str | None = None
    defaults: dict = field(default_factory=dict)

    @property
    def property_only(self) -> bool:
        return not self.targets


E = math.e

SCENARIOS = {s.id: s for s in [
    Scenario("ex1_chain",
             "absorbing chain on {0} u {1/n} u {n}: eventually continuous, Cesàro e-property fails at 0",
             (Target("Q_n f(1/n) - Q_n f(0) lower bound", 1 - 2 / E, "reference"),),
             model="ex1_chain"),
    Scenario("ex2_decomposition",
             "integer chain with classes [0], [1] and mixtures [2n+1]: ergodic decomposition",
             (Target("limit from 1: mass on 1 and on 3", 0.5, "reference"),
              Target("limit from 5: mass on 0", 0.5, "reference"),
              Target("limit from 5: mass on 1 and on 3", 0.25, "reference")),
             model="ex2_decomposition"),
    Scenario("ex3_jump_ifs",
             "jump system on R+ with maps 0, x, 1/x: asymptotically stable without the Cesàro e-property",
             (Target("single-inversion mass at n=2, lambda=1, s=2", math.exp(-1) / 2, "reference"),
              Target("Cesàro lower bound at lambda=1", 0.5 * (1 - 2 / E), "reference"),
              Target("A2 ratio at x=1/3", 1 - 1 / 3 + 1.5, "reference")),
             model="ex3_jump_ifs"),
    Scenario("ex5_ifs_times_rotation",
             "jump system times circle rotation: mean ergodic, not asymptotically stable",
             model="ex5_ifs_times_rotation"),
    Scenario("ex6_place_dependent",
             "place-dependent halving system: asymptotically stable towards 0",
             (Target("P_t(ln 2, {ln 2}) at lambda=1, t=2", math.exp(-1), "reference"),
              Target("J_3(0)", 0.125, "reference"),
              Target("contraction series at x=1/8", 0.25 / (math.exp(-1 / 8) / 2), "derived")),
             model="ex6_place_dependent"),
    Scenario("ex7_ex6_times_rotation",
             "halving system times circle rotation",
             model="ex7_ex6_times_rotation"),
    Scenario("bks_contractive",
             "uniformly contracting affine pair under a user flow",
             model="bks_contractive"),
    Scenario("torus_rotation",
             "unit-speed circle rotation: Cesàro averages converge, P_t does not",
             (Target("C3 proxy at z=0, eps=pi/2", 0.5, "derived"),),
             model="torus_rotation"),
    Scenario("hopf_radial",
             "single stochastic Hopf mode radius and its invariant law",
             (Target("invariant radius at a=1, b=0", 1.0, "derived"),),
             model="hopf_radial"),
    Scenario("hopf_mode",
             "truncated stochastic Hopf spectral state (radii and rotating phases)",
             (Target("time average of cos(t1 - t2) with frequencies (1, sqrt 2)", 0.0, "derived"),),
             model="hopf_mode"),
    Scenario("hopf_phase_transition",
             "viscosity sweep of active Hopf modes"),
    Scenario("lorenz",
             "stochastic Lorenz system with rho < 1: invariant plane X = Y = 0",
             (Target("stationary Z variance at beta=8/3, noise 1", 1 / (2 * 8 / 3), "derived"),),
             model="lorenz"),
    Scenario("drift", "translation x + t on R: mass escapes every ball", model="drift"),
    Scenario("identity", "constant semigroup", model="identity"),
    Scenario("absorbing", "instant absorption at 0", model="absorbing"),
]}


def get(scenario_id: str) -> Scenario:
    try:
        return SCENARIOS[scenario_id]
    except KeyError:
        raise KeyError(f"unknown scenario {scenario_id!r}") from None


def table_rows() -> list[tuple[str, str, str]]:
    rows = []
    for s in SCENARIOS.values():
        if s.property_only:
            rows.append((s.id, s.reproduces, "property-only"))
        else:
            rows.append((s.id, s.reproduces,
                         "; ".join(f"{t.name} = {t.value:.6g} [{t.kind}]" for t in s.targets)))
    return rows
