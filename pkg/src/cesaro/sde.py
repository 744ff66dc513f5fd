"""Exactly solvable stochastic Hopf modes and the stochastic Lorenz system.

Each Hopf mode decouples into a radial SDE

    dr = (a + b^2/2) r dt - r^3 dt + b r dB,

whose solution is explicit in the driving Brownian path,

    r(t) = r0 exp(a t + b B(t)) / sqrt(1 + 2 r0^2 int_0^t exp(2 a s + 2 b B(s)) ds),

and a rigid rotation theta(t) = theta0 + Im F t.  Everything is evaluated in
log space.  The time integral uses the exact integral of the exponential of
the piecewise-linear interpolant of the exponent, which is exact when the
exponent is linear (b = 0) and agrees with the trapezoid rule to O(h^2).

Gaussian increments for path ``j`` of mode ``m`` come from the counter
stream ``(seed, BROWNIAN, m, j)``; chunked draws from a persistent generator
reproduce one long draw, so results do not depend on the chunk size.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .metric import TWO_PI, EmpiricalMeasure, Euclidean, Product, Torus

CHUNK = 512


class SdeError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Brownian increments
# --------------------------------------------------------------------------


def _normal_chunks(generators, n_steps: int, chunk: int = CHUNK):
    """Yield ``(k0, z)`` with ``z`` of shape ``(len(generators), m)``."""
    k0 = 0
    while k0 < n_steps:
        m = min(chunk, n_steps - k0)
        yield k0, np.stack([g.standard_normal(m) for g in generators])
        k0 += m


def _steps(T: float, h: float) -> int:
    if h <= 0 or T < 0:
        raise SdeError("need h > 0 and T >= 0")
    K = int(round(T / h))
    if abs(K * h - T) > 1e-9 * max(1.0, T):
        raise SdeError(f"T = {T} is not a multiple of h = {h}")
    return K


@dataclass(frozen=True, eq=False)
class BrownianGrid:
    h: float
    increments: np.ndarray

    @classmethod
    def sample(cls, T: float, h: float, seed: int, mode: int = 0, path: int = 0):
        K = _steps(T, h)
        g = rngmod.stream(seed, rngmod.BROWNIAN, mode, path)
        return cls(h, g.standard_normal(K) * math.sqrt(h))

    @property
    def n_steps(self) -> int:
        return len(self.increments)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.h

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])


# --------------------------------------------------------------------------
# Hopf modes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HopfMode:
    index: int
    a: float
    b: float
    im_F: float = 0.0
    r0: float = 1.0
    theta0: float = 0.0

    def __post_init__(self):
        if self.r0 < 0:
            raise SdeError("initial radius must be nonnegative")
        object.__setattr__(self, "theta0", float(np.mod(self.theta0, TWO_PI)))


def _log_panel(g0, g1):
    """log of (e^{g1} - e^{g0}) / (g1 - g0), the mean of exp over a linear panel."""
    d = g1 - g0
    ad = np.abs(d)
    hi = np.maximum(g0, g1)
    small = ad < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        big = hi + np.log(-np.expm1(-ad)) - np.log(ad)
    return np.where(small, 0.5 * (g0 + g1) + d * d / 24.0, big)


def _log_cumint(G, h, log_start=None):
    """Running log of int exp(G) over panels of width ``h`` along the last axis."""
    lp = math.log(h) + _log_panel(G[..., :-1], G[..., 1:])
    if log_start is not None:
        lp = np.concatenate([np.asarray(log_start)[..., None], lp], axis=-1)
        return np.logaddexp.accumulate(lp, axis=-1)[..., 1:]
    return np.logaddexp.accumulate(lp, axis=-1)


def _log_radius(log_r0, Gt, logI):
    """log r given G(t) = 2 a t + 2 b B(t) and log I(t)."""
    return log_r0 + 0.5 * Gt - 0.5 * np.logaddexp(0.0, math.log(2.0) + 2 * log_r0 + logI)


def hopf_radial_path(mode: HopfMode, grid: BrownianGrid) -> np.ndarray:
    """Closed-form radius at every grid point."""
    if mode.r0 == 0:
        return np.zeros(grid.n_steps + 1)
    G = 2 * mode.a * grid.times + 2 * mode.b * grid.values
    logI = np.concatenate([[-np.inf], _log_cumint(G, grid.h)])
    r = np.exp(_log_radius(math.log(mode.r0), G, logI))
    if np.any(r <= 0):
        raise SdeError("radius underflowed to 0 from a positive start")
    return r


def hopf_radial_ensemble(a: float, b: float, r0, T: float, h: float, n: int,
                         seed: int, record: Sequence[float] | np.ndarray = None,
                         mode_index: int = 0, path_offset: int = 0) -> np.ndarray:
    """Radii of ``n`` independent paths at the ``record`` times.

    ``record`` is either a list of times shared by all paths or an integer
    array ``(n, m)`` of grid indices per path.  Returns ``(n, m)``.
    """
    K = _steps(T, h)
    if record is None:
        record = [T]
    rec = np.asarray(record)
    if rec.ndim == 1:
        idx = np.rint(np.asarray(rec, dtype=float) / h).astype(int)
        idx = np.broadcast_to(idx, (n, len(idx)))
    else:
        idx = rec.astype(int)
    if np.any(idx < 0) or np.any(idx > K):
        raise SdeError("record times outside [0, T]")
    r0 = np.broadcast_to(np.asarray(r0, dtype=float), (n,)).copy()
    if np.any(r0 < 0):
        raise SdeError("initial radius must be nonnegative")
    zero = r0 == 0
    log_r0 = np.log(np.where(zero, 1.0, r0))
    out = np.zeros(idx.shape)
    hit = idx == 0
    out[hit] = np.broadcast_to(r0[:, None], idx.shape)[hit]
    gens = [rngmod.stream(seed, rngmod.BROWNIAN, mode_index, path_offset + j) for j in range(n)]
    B = np.zeros(n)
    logI = np.full(n, -np.inf)
    sq = math.sqrt(h)
    for k0, z in _normal_chunks(gens, K):
        m = z.shape[1]
        Bc = np.concatenate([B[:, None], B[:, None] + np.cumsum(z * sq, axis=1)], axis=1)
        tc = (k0 + np.arange(m + 1)) * h
        G = 2 * a * tc + 2 * b * Bc
        li = _log_cumint(G, h, log_start=logI)
        lr = _log_radius(log_r0[:, None], G[:, 1:], li)
        sel = (idx > k0) & (idx <= k0 + m)
        if np.any(sel):
            rr, cc = np.nonzero(sel)
            out[rr, cc] = np.exp(lr[rr, idx[rr, cc] - k0 - 1])
        B, logI = Bc[:, -1], li[:, -1]
    out[zero] = 0.0
    return out


def hopf_lambda_samples(a: float, b: float, n: int, seed: int, tol: float = 1e-10,
                        h: float = 0.01, max_blocks: int = 2**10) -> np.ndarray:
    """Samples of ``(2 int_0^inf exp(-2 a s + 2 b W(s)) ds)^{-1/2}``.

    ``W`` is the time-reversed two-sided Brownian path.  The backward path is
    extended in blocks of length ``10/max(a, 1)`` until the last block adds
    less than ``tol`` times the accumulated integral.
    """
    if a < 0:
        raise SdeError("the invariant radius law needs a >= 0")
    if a == 0:
        return np.zeros(n)
    block = 10.0 / max(a, 1.0)
    m = max(1, int(round(block / h)))
    gens = [rngmod.stream(seed, rngmod.LAMBDA, j) for j in range(n)]
    W = np.zeros(n)
    logI = np.full(n, -np.inf)
    active = np.arange(n)
    sq = math.sqrt(h)
    for blk in range(max_blocks):
        z = np.stack([gens[j].standard_normal(m) for j in active])
        Wc = np.concatenate([W[active, None], W[active, None] + np.cumsum(z * sq, axis=1)], axis=1)
        s = (blk * m + np.arange(m + 1)) * h
        G = -2 * a * s + 2 * b * Wc
        lb = np.logaddexp.reduce(math.log(h) + _log_panel(G[:, :-1], G[:, 1:]), axis=1)
        logI[active] = np.logaddexp(logI[active], lb)
        W[active] = Wc[:, -1]
        done = lb < math.log(tol) + logI[active]
        active = active[~done]
        if len(active) == 0:
            break
    else:
        raise SdeError(f"backward integral did not settle within {max_blocks} blocks")
    return np.exp(-0.5 * (math.log(2.0) + logI))


def hopf_lambda_sample(a: float, b: float, tol: float, seed: int, h: float = 0.01) -> float:
    return float(hopf_lambda_samples(a, b, 1, seed, tol=tol, h=h)[0])


def hopf_angle(theta0, im_F: float, t: float):
    return np.mod(np.asarray(theta0, dtype=float) + im_F * t, TWO_PI)


def quasiperiodic_average(g: Callable, theta0, omega, T: float,
                          n_panels: int | None = None) -> float:
    """Trapezoid value of ``(1/T) int_0^T g(theta0 + omega s) ds``.

    ``g`` takes an array ``(m, d)`` of angles.
    """
    if T <= 0:
        raise SdeError("T must be positive")
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if n_panels is None:
        n_panels = max(1000, int(math.ceil(40 * T * max(1.0, float(np.max(np.abs(omega)))))))
    s = np.linspace(0.0, T, n_panels + 1)
    vals = np.asarray(g(np.mod(theta0 + s[:, None] * omega, TWO_PI)), dtype=float)
    return float(np.trapezoid(vals, s) / T)


def torus_average(g: Callable, d: int, n: int = 64) -> float:
    """Flat average over the d-torus by a tensor midpoint grid."""
    ax = (np.arange(n) + 0.5) * (TWO_PI / n)
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return float(np.mean(g(pts)))


@dataclass(frozen=True, eq=False)
class HopfSample:
    """Samples of the truncated spectral state, one row per sample."""

    indices: tuple
    r: np.ndarray
    theta: np.ndarray
    times: np.ndarray

    @property
    def l2_norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.r**2, axis=1))

    @property
    def space(self) -> Product:
        return Product([Euclidean(1), Torus(1)] * len(self.indices))

    @property
    def measure(self) -> EmpiricalMeasure:
        pts = np.stack([self.r, self.theta], axis=2).reshape(len(self.r), -1)
        return EmpiricalMeasure.from_samples(pts, self.space)


def in_x0(modes: Sequence[HopfMode]) -> bool:
    """All retained modes start away from 0."""
    return all(m.r0 > 0 for m in modes)


def hopf_assemble(modes: Sequence[HopfMode], t: float, n_samples: int, seed: int,
                  h: float = 0.01, cesaro: bool = False,
                  n_max: int | None = None) -> HopfSample:
    """Sample the state ``(r_n, theta_n)`` at time ``t`` or, with ``cesaro``,
    at an independent uniform time in ``[0, t]`` per sample (a draw from
    ``Q_t``)."""
    idx = [m.index for m in modes]
    if len(set(idx)) != len(idx):
        raise SdeError("duplicate mode indices")
    if n_max is not None and sorted(idx) != list(range(-n_max, n_max + 1)):
        raise SdeError(f"modes must cover |n| <= {n_max} exactly")
    K = _steps(t, h)
    if cesaro:
        u = rngmod.stream(seed, rngmod.MISC, 0).random(n_samples)
        kk = np.minimum((u * (K + 1)).astype(int), K)
    else:
        kk = np.full(n_samples, K)
    times = kk * h
    r = np.empty((n_samples, len(modes)))
    th = np.empty_like(r)
    for c, m in enumerate(modes):
        r[:, c] = hopf_radial_ensemble(m.a, m.b, m.r0, t, h, n_samples, seed,
                                       record=kk[:, None], mode_index=m.index)[:, 0]
        th[:, c] = hopf_angle(m.theta0, m.im_F, times)
    return HopfSample(tuple(idx), r, th, times)


def phase_transition_sweep(nus: Sequence[float], c: float, n_tilde: int,
                           rel_tol: float = 1e-12) -> list[dict]:
    """Active modes ``0 < |n| <= n_tilde`` with ``a_n = c - nu n^2 > 0`` per viscosity.

    Boundary viscosities (``a_n = 0`` up to ``rel_tol``) leave the mode
    inactive.  Each active mode contributes a complex (2 real) dimension to
    the support of the nontrivial ergodic measure.
    """
    rows = []
    for nu in nus:
        act = [n for n in range(-n_tilde, n_tilde + 1)
               if n != 0 and c - nu * n * n > rel_tol * c]
        rows.append({"nu": float(nu), "active_modes": act, "support_dim": 2 * len(act)})
    return rows


def dump_hopf_csv(path, mode: HopfMode, grid: BrownianGrid) -> None:
    r = hopf_radial_path(mode, grid)
    th = hopf_angle(mode.theta0, mode.im_F, grid.times)
    with open(path, "w") as fh:
        fh.write("t,r,theta\n")
        for row in zip(grid.times, r, th):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def dump_sweep_json(path, rows: list[dict]) -> None:
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=2)


# --------------------------------------------------------------------------
# stochastic Lorenz system
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    beta: float = 8.0 / 3.0
    rho: float = 0.5
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.sigma > 0 and self.beta > 0 and self.alpha >= 0):
            raise SdeError("need sigma > 0, beta > 0, noise >= 0")
        if not self.rho < 1:
            raise SdeError("the Lorenz scenario requires rho < 1")


@dataclass(frozen=True, eq=False)
class LorenzPath:
    times: np.ndarray
    states: np.ndarray  # (n_paths, len(times), 3)
    params: LorenzParams

    def to_csv(self, path, j: int = 0) -> None:
        with open(path, "w") as fh:
            fh.write("t,X,Y,Z\n")
            for t, s in zip(self.times, self.states[j]):
                fh.write(",".join(repr(float(v)) for v in (t, *s)) + "\n")


def lorenz_simulate(init, T: float, h: float, seed: int, params: LorenzParams = LorenzParams(),
                    n_paths: int = 1, record: Sequence[float] | None = None) -> LorenzPath:
    """Euler-Maruyama paths; noise enters the Z equation only.

    From a start on the plane X = Y = 0 the X and Y updates are products of
    exact zeros, so the plane is preserved bit for bit.
    """
    p = params
    if h * max(p.sigma, p.beta, abs(p.rho)) >= 0.1:
        raise SdeError("step too large: need h * max(sigma, beta, |rho|) < 0.1")
    K = _steps(T, h)
    x = np.broadcast_to(np.asarray(init, dtype=float), (n_paths, 3)).copy()
    rec = np.arange(K + 1) if record is None else np.rint(np.asarray(record) / h).astype(int)
    if np.any(rec < 0) or np.any(rec > K):
        raise SdeError("record times outside [0, T]")
    out = np.empty((n_paths, len(rec), 3))
    slot = {int(k): i for i, k in enumerate(rec)}
    if 0 in slot:
        out[:, slot[0]] = x
    gens = [rngmod.stream(seed, rngmod.LORENZ, j) for j in range(n_paths)]
    X, Y, Z = x[:, 0].copy(), x[:, 1].copy(), x[:, 2].copy()
    sq = p.alpha * math.sqrt(h)
    for k0, z in _normal_chunks(gens, K):
        for j in range(z.shape[1]):
            dX = p.sigma * (Y - X)
            dY = X * (p.rho - Z) - Y
            dZ = -(p.beta * Z + X * Y)
            X = X + h * dX
            Y = Y + h * dY
            Z = Z + h * dZ + sq * z[:, j]
            k = k0 + j + 1
            if k in slot:
                out[:, slot[k], 0], out[:, slot[k], 1], out[:, slot[k], 2] = X, Y, Z
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y)) and np.all(np.isfinite(Z))):
            raise SdeError(f"non-finite Lorenz state by step {k0 + z.shape[1]}")
    return LorenzPath(rec * h, out, p)


def ou_em_stationary_variance(beta: float, alpha: float, h: float) -> float:
    """Stationary variance of the Euler-Maruyama OU recursion (-> alpha^2/(2 beta))."""
    return alpha**2 / (2 * beta - beta**2 * h)
