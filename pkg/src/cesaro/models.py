"""Adapters exposing every simulator through one sampling contract.

A model knows its state space and can

* ``paths(x0, times, n, seed)``: states of ``n`` trajectories at ``times``,
  shape ``(n, len(times), dim)``;
* ``occupation(f, x0, t_grid, n, seed)``: per-trajectory time averages
  ``(1/t) int_0^t f(X_s) ds`` for every ``t`` in ``t_grid``, shape
  ``(n, len(t_grid))``;
* ``trajectory(x0, T, seed)``: one queryable path.

Optional exact hooks (``exact_pf``, ``exact_qf``, ``exact_cesaro``,
``exact_marginal``) let probes swap Monte Carlo for closed forms.
Seeds are shared between starts, so two starts see common random numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import chains, ifs, sde
from .metric import Euclidean, MetricSpace, Product, Torus

OCC_CHUNK = 2048


def _cumulative_average(vals, s, t_grid):
    """``(1/t) int_0^t`` from samples ``vals`` (n, K) on grid ``s`` by trapezoid."""
    inc = 0.5 * (vals[:, 1:] + vals[:, :-1]) * np.diff(s)
    cum = np.concatenate([np.zeros((len(vals), 1)), np.cumsum(inc, axis=1)], axis=1)
    out = np.empty((len(vals), len(t_grid)))
    for c, t in enumerate(t_grid):
        out[:, c] = np.array([np.interp(t, s, row) for row in cum]) / t
    return out


class SemigroupModel:
    space: MetricSpace
    name: str = "model"
    dt: float = 0.05
    exact_pf: Callable | None = None
    exact_qf: Callable | None = None
    exact_cesaro: Callable | None = None
    exact_marginal: Callable | None = None

    def paths(self, x0, times, n: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    def point(self, x0) -> np.ndarray:
        return self.space.as_points(x0).reshape(-1)

    def occupation(self, f, x0, t_grid, n: int, seed: int) -> np.ndarray:
        T = float(max(t_grid))
        K = max(64, int(math.ceil(T / self.dt)))
        s = np.linspace(0.0, T, K + 1)
        vals = f(self.paths(x0, s, n, seed))
        return _cumulative_average(np.asarray(vals, dtype=float), s, t_grid)


@dataclass(eq=False)
class JumpModel(SemigroupModel):
    """Any jump system or deterministic flow from the IFS engine."""

    system: ifs.IfsModel
    dt: float = 0.05
    exact_pf: Callable | None = None
    exact_qf: Callable | None = None
    exact_cesaro: Callable | None = None
    exact_marginal: Callable | None = None

    @property
    def space(self):
        return self.system.space

    @property
    def name(self):
        return self.system.name

    def ensemble(self, x0, T: float, n: int, seed: int) -> ifs.IfsEnsemble:
        return ifs.simulate_ensemble(self.system, self.point(x0), T, n, seed)

    def trajectory(self, x0, T: float, seed: int) -> ifs.IfsTrajectory:
        return ifs.simulate(self.system, self.point(x0), T, seed)

    def paths(self, x0, times, n, seed):
        times = np.asarray(times, dtype=float)
        return self.ensemble(x0, float(times.max()), n, seed).states_at(times)

    def occupation(self, f, x0, t_grid, n, seed):
        T = float(max(t_grid))
        ens = self.ensemble(x0, T, n, seed)
        if self.system.flow_is_identity:
            return np.stack([ens.occupation_average(f, t) for t in t_grid], axis=1)
        K = max(64, int(math.ceil(T / self.dt)))
        s = np.linspace(0.0, T, K + 1)
        vals = np.empty((n, K + 1))
        for k0 in range(0, K + 1, OCC_CHUNK):
            vals[:, k0:k0 + OCC_CHUNK] = f(ens.states_at(s[k0:k0 + OCC_CHUNK]))
        return _cumulative_average(vals, s, t_grid)


@dataclass(eq=False)
class HopfRadialModel(SemigroupModel):
    """Radius of a single Hopf mode; the start is the initial radius."""

    a: float
    b: float
    h: float = 0.01
    mode_index: int = 0
    name: str = "hopf_radial"

    def __post_init__(self):
        self.space = Euclidean(1)
        self.dt = self.h

    def _grid(self, times):
        T = float(np.max(times))
        return math.ceil(T / self.h - 1e-9) * self.h

    def paths(self, x0, times, n, seed):
        times = np.asarray(times, dtype=float)
        T = self._grid(times)
        r = sde.hopf_radial_ensemble(self.a, self.b, float(self.point(x0)[0]), T, self.h, n,
                                     seed, record=np.rint(times / self.h) * self.h,
                                     mode_index=self.mode_index)
        return r[..., None]

    def occupation(self, f, x0, t_grid, n, seed):
        T = self._grid(t_grid)
        s = np.arange(int(round(T / self.h)) + 1) * self.h
        return _cumulative_average(np.asarray(f(self.paths(x0, s, n, seed)), float), s, t_grid)

    def trajectory(self, x0, T, seed):
        grid = sde.BrownianGrid.sample(T, self.h, seed, self.mode_index, 0)
        mode = sde.HopfMode(self.mode_index, self.a, self.b, r0=float(self.point(x0)[0]))
        return grid.times, sde.hopf_radial_path(mode, grid)

    def invariant_samples(self, n: int, seed: int) -> np.ndarray:
        return sde.hopf_lambda_samples(self.a, self.b, n, seed, h=self.h)


@dataclass(eq=False)
class HopfModel(SemigroupModel):
    """Truncated spectral state ``(r_n, theta_n)`` for the listed modes.

    A start is the flat vector ``(r_1, theta_1, r_2, theta_2, ...)``.
    """

    modes: tuple
    h: float = 0.01
    name: str = "hopf_mode"

    def __post_init__(self):
        self.space = Product([Euclidean(1), Torus(1)] * len(self.modes))
        self.dt = self.h

    def paths(self, x0, times, n, seed):
        x = self.point(x0)
        times = np.asarray(times, dtype=float)
        T = math.ceil(float(times.max()) / self.h - 1e-9) * self.h
        rec = np.rint(times / self.h) * self.h
        out = np.empty((n, len(times), self.space.dim))
        for c, m in enumerate(self.modes):
            r0, th0 = x[2 * c], x[2 * c + 1]
            out[:, :, 2 * c] = sde.hopf_radial_ensemble(m.a, m.b, r0, T, self.h, n, seed,
                                                        record=rec, mode_index=m.index)
            out[:, :, 2 * c + 1] = sde.hopf_angle(th0, m.im_F, rec)[None, :]
        return out


@dataclass(eq=False)
class LorenzModel(SemigroupModel):
    params: sde.LorenzParams = field(default_factory=sde.LorenzParams)
    h: float = 0.001
    name: str = "lorenz"

    def __post_init__(self):
        self.space = Euclidean(3)
        self.dt = max(self.h, 0.01)

    def paths(self, x0, times, n, seed):
        times = np.asarray(times, dtype=float)
        T = math.ceil(float(times.max()) / self.h - 1e-9) * self.h
        return sde.lorenz_simulate(self.point(x0), T, self.h, seed, self.params, n_paths=n,
                                   record=np.rint(times / self.h) * self.h).states


# --------------------------------------------------------------------------
# ready-made models with their exact hooks
# --------------------------------------------------------------------------


def absorbing_chain_model() -> JumpModel:
    chain = chains.AbsorbingChain()
    return JumpModel(ifs.absorbing_chain_ifs(),
                     exact_pf=lambda f, x, t: chain.Pf(f, float(np.ravel(x)[0]), t),
                     exact_qf=lambda f, x, t: chains.cesaro_exact(chain, f, float(np.ravel(x)[0]), t),
                     exact_marginal=lambda x, t: chain.row(float(np.ravel(x)[0]), t))


def integer_chain_model(n_max: int = 200, tol: float = 1e-8) -> JumpModel:
    chain = chains.integer_chain(n_max)

    def state(x):
        return int(round(float(np.ravel(x)[0])))

    return JumpModel(
        ifs.integer_chain_ifs(),
        exact_pf=lambda f, x, t: chain.Pf(f, state(x), t),
        exact_cesaro=lambda x, t: chains.cesaro_uniformized(chain, state(x), t, tol).measure,
        exact_marginal=lambda x, t: chains.uniformized_transition(chain, state(x), t, tol).measure)


def build_model(name: str, **params) -> SemigroupModel:
    """Construct a registered model by name with keyword parameters."""
    lam = params.get("lam", 1.0)
    if name == "ex1_chain":
        return absorbing_chain_model()
    if name == "ex2_decomposition":
        return integer_chain_model(params.get("n_max", 200))
    if name == "ex3_jump_ifs":
        return JumpModel(ifs.ex3_jump_ifs(lam))
    if name == "ex5_ifs_times_rotation":
        return JumpModel(ifs.ex5_ifs_times_rotation(lam), dt=params.get("dt", 0.05))
    if name == "ex6_place_dependent":
        return JumpModel(ifs.ex6_place_dependent(lam))
    if name == "ex7_ex6_times_rotation":
        return JumpModel(ifs.ex7_ex6_times_rotation(lam), dt=params.get("dt", 0.05))
    if name == "bks_contractive":
        return JumpModel(ifs.bks_contractive(lam, contraction=params.get("contraction", 0.5)),
                         dt=params.get("dt", 0.05))
    if name == "torus_rotation":
        return JumpModel(ifs.torus_rotation(), dt=params.get("dt", 0.01))
    if name == "drift":
        return JumpModel(ifs.drift_model(), dt=params.get("dt", 0.05))
    if name == "identity":
        return JumpModel(ifs.identity_model())
    if name == "absorbing":
        return JumpModel(ifs.absorbing_model(), dt=params.get("dt", 0.05))
    if name == "hopf_radial":
        return HopfRadialModel(params.get("a", 1.0), params.get("b", 0.5), params.get("h", 0.01))
    if name == "hopf_mode":
        spec = params.get("modes", [{"index": 0, "a": 1.0, "b": 0.5, "im_F": 1.0}])
        modes = tuple(sde.HopfMode(int(m["index"]), float(m["a"]), float(m["b"]),
                                   float(m.get("im_F", 0.0))) for m in spec)
        return HopfModel(modes, params.get("h", 0.01))
    if name == "lorenz":
        p = sde.LorenzParams(**{k: params[k] for k in ("sigma", "beta", "rho", "alpha")
                                if k in params})
        return LorenzModel(p, params.get("h", 0.001))
    raise KeyError(f"unknown model {name!r}")
