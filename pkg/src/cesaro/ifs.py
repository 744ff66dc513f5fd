"""Iterated function systems with jumps (piecewise-deterministic processes).

A trajectory follows a deterministic flow ``S(t)`` between the ticks of an
exponential clock of rate ``lambda``.  At each tick the pre-jump point ``xi``
picks map ``i`` with probability ``p_i(xi)`` and the state becomes
``w_i(xi)``.

Randomness is counter based: the clock gap and the map-selection uniform of
the ``k``-th jump of trajectory ``j`` are row ``j`` of the uniform pairs drawn
from the stream keyed by ``(seed, k)``.  Two ensembles run with the same seed from different starts
therefore share every clock and every uniform (common random numbers), and
``simulate`` reproduces trajectory 0 of ``simulate_ensemble``.

Maps, probabilities and flows act on batches: arrays of shape ``(n, dim)``.
No continuity is assumed anywhere; discontinuous maps are evaluated pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .metric import TWO_PI, Countable, Euclidean, MetricSpace, Product, Torus

MAX_ENUMERATION = 4**12


class IfsError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class IfsModel:
    maps: tuple
    probs: Callable[[np.ndarray], np.ndarray]
    jump_rate: float
    space: MetricSpace
    flow: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    growth_bound: float | None = None
    contraction_fn: Callable | None = None
    contraction_const: float | None = None
    modulus: Callable | None = None
    anchor: np.ndarray | None = None
    jn_closed_form: Callable[[np.ndarray, int], float] | None = None
    name: str = "ifs"

    @property
    def n_maps(self) -> int:
        return len(self.maps)

    @property
    def flow_is_identity(self) -> bool:
        return self.flow is None

    def apply_flow(self, t, x):
        if self.flow is None:
            return x
        t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
        return self.flow(t, x)

    def prob_vector(self, x):
        p = np.asarray(self.probs(x), dtype=float)
        bad = (np.abs(p.sum(axis=-1) - 1.0) > 1e-12) | np.any(p < -1e-15, axis=-1)
        if np.any(bad):
            where = np.asarray(x)[np.nonzero(bad)[0][0]]
            raise IfsError(f"probability vector does not normalize at {where}")
        return p

    def apply_maps(self, idx, x):
        out = np.empty_like(x)
        for i, w in enumerate(self.maps):
            sel = idx == i
            if np.any(sel):
                out[sel] = w(x[sel])
        return out


@dataclass(frozen=True, eq=False)
class IfsEnsemble:
    """Jump skeletons of ``n`` trajectories.

    ``jump_times[j, k]`` is tau_k (tau_0 = 0; ``inf`` after the horizon),
    ``states[j, k]`` the post-jump state Phi_k and ``indices[j, k-1]`` the
    map chosen at jump ``k`` (``-1`` when that jump never happened).
    """

    model: IfsModel
    jump_times: np.ndarray
    states: np.ndarray
    indices: np.ndarray
    horizon: float
    seed: int

    @property
    def n(self) -> int:
        return self.jump_times.shape[0]

    def _last_jump(self, t: float) -> np.ndarray:
        return np.sum(self.jump_times <= t, axis=1) - 1

    def state_at(self, t: float) -> np.ndarray:
        """States of all trajectories at time ``t`` (``0 <= t <= horizon``)."""
        if t < 0 or t > self.horizon * (1 + 1e-12):
            raise IfsError(f"time {t} outside [0, {self.horizon}]")
        k = self._last_jump(t)
        rows = np.arange(self.n)
        base = self.states[rows, k]
        return self.model.apply_flow(t - self.jump_times[rows, k], base)

    def states_at(self, times: Sequence[float]) -> np.ndarray:
        """States at many times at once, shape ``(n, len(times), dim)``."""
        times = np.asarray(times, dtype=float)
        if np.any(times < 0) or np.any(times > self.horizon * (1 + 1e-12)):
            raise IfsError(f"times outside [0, {self.horizon}]")
        k = np.empty((self.n, len(times)), dtype=int)
        for j in range(self.n):
            k[j] = np.searchsorted(self.jump_times[j], times, side="right") - 1
        rows = np.arange(self.n)[:, None]
        base = self.states[rows, k]
        return self.model.apply_flow(times[None, :] - self.jump_times[rows, k], base)

    def trajectory(self, j: int) -> "IfsTrajectory":
        live = np.isfinite(self.jump_times[j])
        k = int(live.sum())
        return IfsTrajectory(self.model, self.jump_times[j, :k].copy(),
                             self.states[j, :k].copy(), self.indices[j, :k - 1].copy(),
                             self.horizon)

    def occupation_average(self, f, t: float, n_grid: int = 1024) -> np.ndarray:
        """Per-trajectory ``(1/t) int_0^t f(Phi(s)) ds``.

        Exact for identity flows (piecewise-constant paths); otherwise a
        midpoint rule on ``n_grid`` points.
        """
        if t <= 0 or t > self.horizon * (1 + 1e-12):
            raise IfsError("occupation window must lie in (0, horizon]")
        if self.model.flow_is_identity:
            start = np.minimum(self.jump_times, t)
            end = np.minimum(np.concatenate(
                [self.jump_times[:, 1:], np.full((self.n, 1), np.inf)], axis=1), t)
            vals = f(self.states)
            return np.sum(vals * (end - start), axis=1) / t
        grid = (np.arange(n_grid) + 0.5) * (t / n_grid)
        return np.mean(f(self.states_at(grid)), axis=1)


@dataclass(frozen=True, eq=False)
class IfsTrajectory:
    model: IfsModel
    jump_times: np.ndarray
    states: np.ndarray
    indices: np.ndarray
    horizon: float

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.jump_times)

    def state_at(self, t: float) -> np.ndarray:
        if t < 0 or t > self.horizon * (1 + 1e-12):
            raise IfsError(f"time {t} outside [0, {self.horizon}]")
        k = int(np.searchsorted(self.jump_times, t, side="right") - 1)
        return self.model.apply_flow(t - self.jump_times[k], self.states[k:k + 1])[0]

    def to_csv(self, path, grid: Sequence[float] | None = None) -> None:
        """Dump ``t, tau_index, state coords`` at the jump times (or on ``grid``)."""
        times = self.jump_times if grid is None else np.asarray(grid, dtype=float)
        dim = self.states.shape[1]
        with open(path, "w") as fh:
            fh.write(",".join(["t", "tau_index"] + [f"x{i}" for i in range(dim)]) + "\n")
            for t in times:
                k = int(np.searchsorted(self.jump_times, t, side="right") - 1)
                x = self.state_at(float(t))
                fh.write(",".join([repr(float(t)), str(k)] + [repr(float(c)) for c in x]) + "\n")


def simulate_ensemble(model: IfsModel, x0, horizon: float, n: int,
                      seed: int) -> IfsEnsemble:
    """Run Steps 1-4 of the jump construction for ``n`` trajectories in lockstep."""
    if horizon <= 0:
        raise IfsError("horizon must be positive")
    x = model.space.as_points(x0).astype(float)
    if x.ndim == 1:
        x = np.broadcast_to(x, (n, model.space.dim)).copy()
    if x.shape != (n, model.space.dim):
        raise IfsError("x0 must be one point or one point per trajectory")
    model.prob_vector(x)
    t = np.zeros(n)
    times, states, indices = [t.copy()], [x.copy()], []
    alive = np.ones(n, dtype=bool)
    k = 0
    lam = model.jump_rate
    while lam > 0 and alive.any():
        k += 1
        g = rngmod.stream(seed, rngmod.JUMP, k)
        # inversion on row j keeps element j independent of n
        pair = g.random((n, 2))
        gaps = -np.log1p(-pair[:, 0]) / lam
        u = pair[:, 1]
        t_next = t + gaps
        jump = alive & (t_next <= horizon)
        new_t = np.full(n, np.inf)
        new_x = states[-1].copy()
        idx = np.full(n, -1)
        if jump.any():
            xi = model.apply_flow(gaps[jump], x[jump])
            p = model.prob_vector(xi)
            choice = np.minimum(np.sum(np.cumsum(p, axis=1) < u[jump, None], axis=1),
                                model.n_maps - 1)
            nx = model.apply_maps(choice, xi)
            if not np.all(np.isfinite(nx)):
                raise IfsError(f"non-finite state after jump {k}")
            x = x.copy()
            x[jump] = nx
            new_x[jump] = nx
            new_t[jump] = t_next[jump]
            idx[jump] = choice
            t = np.where(jump, t_next, t)
        alive = jump
        times.append(new_t)
        states.append(new_x)
        indices.append(idx)
        if not alive.any():
            break
    jt = np.stack(times, axis=1)
    st = np.stack(states, axis=1)
    ix = np.stack(indices, axis=1) if indices else np.zeros((n, 0), dtype=int)
    # trailing slot of a dead trajectory carries its last state; keep times inf
    return IfsEnsemble(model, jt, st, ix, float(horizon), int(seed))


def simulate(model: IfsModel, x0, horizon: float, seed: int) -> IfsTrajectory:
    """Single trajectory; identical to trajectory 0 of an ensemble with ``seed``."""
    x = model.space.as_points(x0)
    if x.ndim > 1:
        x = x.reshape(-1)
    return simulate_ensemble(model, x[None, :], horizon, 1, seed).trajectory(0)


# --------------------------------------------------------------------------
# contraction bounds and assumption checks
# --------------------------------------------------------------------------


def jn_bound(model: IfsModel, x, n: int, cap: int = 12,
             use_closed_form: bool = True) -> float:
    """``J_n(x) = max over i in I^n of prod_{j<n} r(w_{i[j]}(x))`` where
    ``w_{i[j]} = w_{i_1} o ... o w_{i_j}``.

    Only the first ``n - 1`` indices enter the product, so the enumeration
    runs over ``|I|^(n-1)`` prefixes.
    """
    if model.contraction_fn is None:
        raise IfsError("the model declares no contraction function r(x)")
    x = model.space.as_points(x).reshape(1, -1)
    if n == 0:
        return 1.0
    if use_closed_form and model.jn_closed_form is not None:
        return float(model.jn_closed_form(x[0], n))
    N = model.n_maps
    if n > cap or N**n > MAX_ENUMERATION:
        raise IfsError(f"J_{n} enumeration over {N}^{n} words exceeds the cap; "
                       "register a closed form")
    r = model.contraction_fn
    prod = np.asarray(r(x), dtype=float).reshape(1)
    idx = np.zeros((1, 0), dtype=int)
    for j in range(1, n):
        idx = np.concatenate([np.repeat(idx, N, axis=0),
                              np.tile(np.arange(N), len(idx))[:, None]], axis=1)
        y = np.broadcast_to(x, (len(idx), x.shape[1])).copy()
        for col in range(j - 1, -1, -1):  # innermost map first
            y = model.apply_maps(idx[:, col], y)
        prod = np.repeat(prod, N) * np.asarray(r(y), dtype=float).reshape(-1)
    return float(prod.max())


@dataclass(frozen=True)
class SeriesReport:
    partial_sum: float
    tail_bound: float | None
    n_terms: int
    threshold: float
    verdict: str  # holds | fails | inconclusive
    terms: tuple = field(repr=False, default=())

    @property
    def total(self) -> float | None:
        return None if self.tail_bound is None else self.partial_sum + self.tail_bound


def b5_series_check(model: IfsModel, x, M: int = 0, gamma: float = 0.0,
                    n_max: int = 10_000, cap: int = 12) -> SeriesReport:
    """Check ``sum_{n>=M} omega(J_n(x) rho(x,z) (lambda/(lambda-alpha))^n) < 1 - gamma``.

    Terms are summed up to ``n_max`` (or the enumeration cap when ``J_n`` has
    no closed form).  A geometric tail bound is added when the last term
    ratios are below one and nonincreasing.
    """
    if model.modulus is None or model.anchor is None or model.contraction_fn is None:
        raise IfsError("need omega, r and the anchor z")
    if not 0 <= gamma < 1:
        raise IfsError("gamma must lie in [0, 1)")
    lam = model.jump_rate
    alpha = model.growth_bound or 0.0
    if lam <= alpha:
        raise IfsError("lambda <= alpha: the series diverges by construction")
    growth = lam / (lam - alpha)
    rho = float(model.space.distance(model.space.as_points(x), model.anchor))
    last = n_max if model.jn_closed_form is not None else min(n_max, cap)
    ns = np.arange(M, last + 1)
    jn = np.array([jn_bound(model, x, int(n), cap) for n in ns])
    with np.errstate(over="ignore"):
        args = jn * rho * growth ** ns.astype(float)
    terms = np.asarray(model.modulus(args), dtype=float)
    partial = float(terms.sum())
    threshold = 1.0 - gamma
    tail = None
    pos = np.nonzero(terms > 1e-290)[0]
    if len(pos) == 0:
        tail = 0.0
    else:
        # subnormal and underflowed terms after a decreasing run are ignored
        k = int(pos[-1])
        live = terms[:k + 1]
        if len(live) >= 4 and np.all(live[-4:] > 0):
            ratios = live[-3:] / live[-4:-1]
            if np.all(ratios < 1) and np.all(np.diff(ratios) <= 1e-12):
                q = float(ratios[-1])
                tail = float(live[-1] * q / (1 - q))
    if tail is not None and (partial + tail < threshold if gamma == 0
                             else partial + tail <= threshold):
        verdict = "holds"
    elif partial >= threshold:
        verdict = "fails"
    else:
        verdict = "inconclusive"
    return SeriesReport(partial, tail, len(terms), threshold, verdict, tuple(terms[:50]))


@dataclass(frozen=True)
class AssumptionReport:
    which: str
    n_pairs: int
    lhs: np.ndarray
    rhs: np.ndarray
    max_violation: float
    satisfied: bool
    note: str = "sampled check, not a certificate"
    extra: dict = field(default_factory=dict)

    @property
    def residuals(self) -> np.ndarray:
        return self.lhs - self.rhs


def check_assumptions(model: IfsModel, pairs, which: str,
                      t_grid: Sequence[float] = (0.1, 1.0, 10.0),
                      tol: float = 1e-12) -> AssumptionReport:
    """Sampled check of one contraction-type assumption.

    ``pairs`` is an array ``(m, 2, dim)`` of point pairs ``(x, y)``; the
    anchor-based checks B2/B3 use only the ``x`` of each pair.
    """
    sp = model.space
    P = np.asarray(pairs, dtype=float)
    if P.ndim == 2:
        P = P[..., None]
    x, y = P[:, 0, :], P[:, 1, :]
    extra: dict = {}
    if which == "A2":
        p = model.prob_vector(x)
        dist = np.stack([sp.distance(w(x), w(y)) for w in model.maps], axis=1)
        lhs = np.sum(p * dist, axis=1)
        d = sp.distance(x, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0, lhs / d, 0.0)
        extra["ratio"] = ratio
        r = model.contraction_const
        if r is None:
            extra["smallest_uniform_r"] = float(ratio.max())
            r = 1.0
        rhs = r * d
        if model.contraction_const is None:
            lhs_ok = ratio.max() < 1
            viol = float(np.max(lhs - rhs))
            return AssumptionReport(which, len(x), lhs, rhs, viol, bool(lhs_ok), extra=extra)
    elif which in ("A3", "B3"):
        if model.modulus is None:
            raise IfsError("no modulus omega declared")
        other = y if which == "A3" else np.broadcast_to(model.anchor, x.shape)
        lhs = np.sum(np.abs(model.prob_vector(x) - model.prob_vector(other)), axis=1)
        d = sp.distance(x, other)
        rhs = np.asarray(model.modulus(d), dtype=float)
        extra.update(_modulus_shape(model.modulus, d))
    elif which == "B2":
        if model.anchor is None or model.contraction_fn is None:
            raise IfsError("B2 needs the anchor z and r(x)")
        z = np.broadcast_to(model.anchor, x.shape)
        p = model.prob_vector(x)
        dist = np.stack([sp.distance(w(x), z) for w in model.maps], axis=1)
        lhs = np.sum(p * dist, axis=1)
        rhs = np.asarray(model.contraction_fn(x), dtype=float).reshape(-1) * sp.distance(x, z)
    elif which in ("A4", "B4"):
        alpha = model.growth_bound
        if alpha is None:
            raise IfsError("no growth bound alpha declared")
        lhs_l, rhs_l = [], []
        for t in t_grid:
            lhs_l.append(sp.distance(model.apply_flow(t, x), model.apply_flow(t, y)))
            rhs_l.append(math.exp(alpha * t) * sp.distance(x, y))
        lhs, rhs = np.concatenate(lhs_l), np.concatenate(rhs_l)
    else:
        raise IfsError(f"unknown assumption {which!r}")
    viol = float(np.max(lhs - rhs))
    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)))
    ok = viol <= tol * scale and extra.get("omega_shape_ok", True)
    return AssumptionReport(which, len(x), lhs, rhs, viol, bool(ok), extra=extra)


def _modulus_shape(omega, d) -> dict:
    """Sampled monotonicity / concavity of omega and omega(0) = 0."""
    u = np.unique(np.concatenate([[0.0], np.asarray(d).ravel()]))
    w = np.asarray(omega(u), dtype=float)
    mono = bool(np.all(np.diff(w) >= -1e-12))
    conc = True
    if len(u) >= 3:
        a, b, c = u[:-2], u[1:-1], u[2:]
        lam = (c - b) / (c - a)
        conc = bool(np.all(w[1:-1] >= lam * w[:-2] + (1 - lam) * w[2:] - 1e-12))
    return {"omega_zero": float(w[0]), "omega_monotone": mono, "omega_concave": conc,
            "omega_shape_ok": mono and conc and abs(w[0]) <= 1e-12}


# --------------------------------------------------------------------------
# scenario models and their closed forms
# --------------------------------------------------------------------------

R1 = Euclidean(1)
TORUS1 = Torus(1)
RT = Product([R1, TORUS1])


def _col(f):
    return lambda x: f(x[..., 0])[..., None]


def _inversion_probs(x):
    x = x[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        low = np.stack([x / 2, 1 - x, x / 2], axis=-1)
        mid = np.full(x.shape + (3,), 1 / 3)
        high = np.stack([1 / (2 * x), 1 - 1 / x, 1 / (2 * x)], axis=-1)
    return np.where((x < 2 / 3)[..., None], low,
                    np.where((x <= 1.5)[..., None], mid, high))


def _inv_or_zero(x):
    with np.errstate(divide="ignore"):
        return np.where(x != 0, 1.0 / np.where(x != 0, x, 1.0), 0.0)


INVERSION_MAPS = (_col(np.zeros_like), _col(lambda x: x), _col(_inv_or_zero))


def ex3_jump_ifs(lam: float = 1.0) -> IfsModel:
    """Identity flow on R_+, maps ``0, x, 1/x`` with piecewise probabilities;
    0 is the only absorbing state and the maps are discontinuous at 0."""
    return IfsModel(INVERSION_MAPS, _inversion_probs, lam, R1, name="ex3_jump_ifs")


def _lift_radial(maps, probs):
    def lift(w):
        def g(x):
            out = x.copy()
            out[..., :1] = w(x[..., :1])
            return out
        return g
    return tuple(lift(w) for w in maps), (lambda x: probs(x[..., :1]))


def _rotate(t, x):
    out = x.copy()
    out[..., 1] = np.mod(x[..., 1] + t, TWO_PI)
    return out


def ex5_ifs_times_rotation(lam: float = 1.0) -> IfsModel:
    """The jump system on R_+ paired with a unit-speed rotation of the circle."""
    maps, probs = _lift_radial(INVERSION_MAPS, _inversion_probs)
    return IfsModel(maps, probs, lam, RT, flow=_rotate, growth_bound=0.0,
                    name="ex5_ifs_times_rotation")


def _halving_contraction(x):
    return 1.0 - np.exp(-np.asarray(x)[..., 0]) / 2.0


HALVING_MAPS = (_col(lambda x: x / 2), _col(lambda x: x))


def _halving_probs(x):
    e = np.exp(-x[..., 0])
    return np.stack([e, 1 - e], axis=-1)


def ex6_place_dependent(lam: float = 1.0) -> IfsModel:
    """Halving map chosen with probability ``e^{-x}``, identity otherwise."""
    return IfsModel(HALVING_MAPS, _halving_probs, lam, R1, growth_bound=0.0,
                    contraction_fn=_halving_contraction, modulus=lambda u: 2.0 * np.asarray(u),
                    anchor=np.zeros(1),
                    jn_closed_form=lambda x, n: float(_halving_contraction(x)) ** n,
                    name="ex6_place_dependent")


def ex7_ex6_times_rotation(lam: float = 1.0) -> IfsModel:
    maps, probs = _lift_radial(HALVING_MAPS, _halving_probs)

    def r(x):
        return _halving_contraction(np.asarray(x)[..., :1])

    return IfsModel(maps, probs, lam, RT, flow=_rotate, growth_bound=0.0,
                    contraction_fn=r, modulus=lambda u: 2.0 * np.asarray(u),
                    name="ex7_ex6_times_rotation")


def bks_contractive(lam: float = 1.0, flow=None, growth_bound: float = 0.0,
                    contraction: float = 0.5) -> IfsModel:
    """Uniformly contracting pair of affine maps ``c x`` and ``c x + 1`` with
    equal weights, under a user flow (default ``x e^{-t}``)."""
    c = contraction
    maps = (lambda x: c * x, lambda x: c * x + 1.0)
    flow = flow if flow is not None else (lambda t, x: x * np.exp(-t)[..., None])
    return IfsModel(maps, lambda x: np.full(x.shape[:-1] + (2,), 0.5), lam, R1,
                    flow=flow, growth_bound=growth_bound, contraction_const=c,
                    contraction_fn=lambda x: np.full(np.shape(x)[:-1], c),
                    modulus=lambda u: 0.0 * np.asarray(u), anchor=np.zeros(1),
                    name="bks_contractive")


def inversion_jump_prob(n: int, lam: float, s: float) -> float:
    """Mass of the single-inversion paths from ``1/n`` that sit at ``n`` at
    time ``s``: ``(1/2)(1/n) lam s exp(-lam s / n)``.  A lower bound on
    ``P(Phi_s = n)``."""
    if n < 2:
        raise IfsError("n must be at least 2")
    return 0.5 * (lam * s / n) * math.exp(-lam * s / n)


def inversion_cesaro_bound(lam: float) -> float:
    """``(1/(2 lam))(1 - lam e^{-lam} - e^{-lam})``."""
    return (1.0 - lam * math.exp(-lam) - math.exp(-lam)) / (2.0 * lam)


def two_state_occupation(n: int, lam: float, s: float) -> float:
    """Exact ``P(Phi_s = n)`` from ``1/n``.

    From both ``1/n`` and ``n`` the chain leaves at rate ``lam/(2n)`` to 0
    and at rate ``lam/(2n)`` to the partner state, which gives
    ``(e^{-lam s/(2n)} - e^{-3 lam s/(2n)}) / 2``; inversions may repeat.
    """
    if n < 2:
        raise IfsError("n must be at least 2")
    a = lam * s / (2 * n)
    return 0.5 * (math.exp(-a) - math.exp(-3 * a))


def halving_stay_prob(x: float, lam: float, t: float) -> float:
    """``P_t(x, {x}) = exp(-e^{-x} lam t)``."""
    return math.exp(-math.exp(-x) * lam * t)


# --------------------------------------------------------------------------
# countable chains and toy flows written as jump systems
# --------------------------------------------------------------------------


def absorbing_chain_ifs() -> IfsModel:
    """The absorbing chain on {0} u {1/n} u {n} as a jump system with clock
    rate 1/2: from ``1/n`` or ``n`` the advancing map is taken with
    probability ``2/n`` (holding rate ``1/n``), otherwise the state stays."""

    def advance(x):
        v = x[..., 0]
        with np.errstate(divide="ignore"):
            out = np.where(v == 0, 0.0, np.where(v < 1, 1.0 / np.where(v == 0, 1, v), 0.0))
        return out[..., None]

    def probs(x):
        v = x[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            p = np.where(v == 0, 0.0, 2.0 * np.minimum(v, 1.0 / np.where(v == 0, 1, v)))
        return np.stack([p, 1 - p], axis=-1)

    return IfsModel((advance, lambda x: x), probs, 0.5, Countable(), name="ex1_chain")


def integer_chain_ifs() -> IfsModel:
    """The integer chain of the decomposition example, with a rate-1 clock."""

    def primary(x):
        s = x[..., 0]
        out = np.where(s == 1, 3.0, np.where(s == 3, 1.0, s))
        even = (s > 0) & (np.mod(s, 2) == 0)
        out = np.where(even, s - 2, out)
        odd5 = (s >= 5) & (np.mod(s, 2) == 1)
        out = np.where(odd5, 0.0, out)
        out = np.where(s < 0, s - 1, out)
        return out[..., None]

    def secondary(x):
        s = x[..., 0]
        out = primary(x)[..., 0]
        out = np.where((s >= 5) & (np.mod(s, 2) == 1), 1.0, out)
        out = np.where(s < 0, 0.0, out)
        return out[..., None]

    def probs(x):
        s = x[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            n_odd = np.where(s >= 5, (s - 1) / 2, 1.0)
            p = np.where((s >= 5) & (np.mod(s, 2) == 1), 1.0 / n_odd, 1.0)
            p = np.where(s < 0, np.exp(-1.0 / np.where(s < 0, s, 1.0) ** 2), p)
        return np.stack([p, 1 - p], axis=-1)

    return IfsModel((primary, secondary), probs, 1.0, Countable(), name="ex2_decomposition")


def flow_model(flow, space: MetricSpace, name: str) -> IfsModel:
    """Deterministic flow without jumps."""
    return IfsModel((lambda x: x,), lambda x: np.ones(x.shape[:-1] + (1,)), 0.0, space,
                    flow=flow, name=name)


def torus_rotation() -> IfsModel:
    return flow_model(lambda t, x: np.mod(x + t[..., None], TWO_PI), TORUS1, "torus_rotation")


def drift_model() -> IfsModel:
    return flow_model(lambda t, x: x + t[..., None], R1, "drift")


def identity_model(space: MetricSpace = R1) -> IfsModel:
    return flow_model(lambda t, x: x, space, "identity")


def absorbing_model(space: MetricSpace = R1) -> IfsModel:
    return flow_model(lambda t, x: np.where((t > 0)[..., None], 0.0, x), space, "absorbing")
