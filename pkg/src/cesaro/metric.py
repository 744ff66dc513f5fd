"""Metric state spaces, bounded Lipschitz observables and empirical measures.

Points are numpy arrays whose last axis holds the coordinates, so every
distance and observable here works on single points and on batches alike.
Countable state sets (integers, ``{0} u {1/n} u {n}``) are embedded in the
real line and use :class:`Countable`, which is the Euclidean metric on R.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.stats import wasserstein_distance

TWO_PI = 2.0 * np.pi
EXACT_SMALL_MAX_ATOMS = 64


class MeasureError(ValueError):
    pass


# --------------------------------------------------------------------------
# spaces
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricSpace:
    dim: int

    kind = "abstract"

    def distance(self, x, y):
        raise NotImplementedError

    def as_points(self, x) -> np.ndarray:
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.shape[-1] != self.dim:
            if self.dim == 1:
                arr = arr[..., None]
            else:
                raise MeasureError(
                    f"points have {arr.shape[-1]} coordinates, space has {self.dim}")
        return arr

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class Euclidean(MetricSpace):
    kind = "euclidean"

    def distance(self, x, y):
        x, y = self.as_points(x), self.as_points(y)
        return np.sqrt(np.sum((x - y) ** 2, axis=-1))


@dataclass(frozen=True)
class Countable(Euclidean):
    """A countable state set embedded in R with the usual distance |x - y|."""

    kind = "countable"

    def __init__(self):
        object.__setattr__(self, "dim", 1)

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class Torus(MetricSpace):
    """Flat torus R^d / 2piZ^d; distance is the max of the circle distances."""

    kind = "torus"

    def distance(self, x, y):
        x, y = self.as_points(x), self.as_points(y)
        d = np.abs(np.mod(x - y, TWO_PI))
        d = np.minimum(d, TWO_PI - d)
        return np.max(d, axis=-1)


@dataclass(frozen=True)
class Product(MetricSpace):
    """Product of spaces with the max of the component distances."""

    components: tuple = field(default=())
    kind = "product"

    def __init__(self, components: Sequence[MetricSpace]):
        comps = tuple(components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "dim", sum(c.dim for c in comps))

    def split(self, x):
        x = self.as_points(x)
        out, start = [], 0
        for c in self.components:
            out.append(x[..., start:start + c.dim])
            start += c.dim
        return out

    def distance(self, x, y):
        parts = [c.distance(a, b) for c, a, b in
                 zip(self.components, self.split(x), self.split(y))]
        return np.max(np.stack(np.broadcast_arrays(*parts)), axis=0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "components": [c.to_dict() for c in self.components]}


def space_from_dict(d: dict) -> MetricSpace:
    kind = d["kind"]
    if kind == "euclidean":
        return Euclidean(int(d["dim"]))
    if kind == "countable":
        return Countable()
    if kind == "torus":
        return Torus(int(d["dim"]))
    if kind == "product":
        return Product([space_from_dict(c) for c in d["components"]])
    raise MeasureError(f"unknown space kind {kind!r}")


# --------------------------------------------------------------------------
# test functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Bounded Lipschitz observable with its recorded sup bound and Lipschitz
    constant.  ``evaluator`` maps an ``(..., dim)`` array to ``(...)``."""

    __test__ = False  # not a pytest class

    evaluator: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    lip_constant: float
    name: str = "f"

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(x, dtype=float)), dtype=float)

    @property
    def norm(self) -> float:
        """``||f||_L = ||f||_inf + ||f||_Lip``."""
        return self.sup_bound + self.lip_constant

    def normalized(self) -> "TestFunction":
        n = self.norm
        if n <= 1.0:
            return self
        ev = self.evaluator
        return TestFunction(lambda x: ev(x) / n, self.sup_bound / n,
                            self.lip_constant / n, self.name)

    def scaled(self, c: float) -> "TestFunction":
        ev = self.evaluator
        return TestFunction(lambda x: c * ev(x), abs(c) * self.sup_bound,
                            abs(c) * self.lip_constant, self.name)

    def violations(self, points, space: MetricSpace, rtol: float = 1e-12) -> dict:
        """Check both recorded bounds on the given points (and all their pairs)."""
        pts = space.as_points(points)
        vals = self(pts)
        sup_excess = float(np.max(np.abs(vals)) - self.sup_bound)
        n = len(pts)
        i, j = np.triu_indices(n, 1) if n <= 2000 else _random_pairs(n, 200_000)
        d = space.distance(pts[i], pts[j])
        lip_excess = float(np.max(np.abs(vals[i] - vals[j]) - self.lip_constant * d,
                                  initial=-np.inf))
        return {"sup_excess": sup_excess, "lip_excess": lip_excess,
                "ok": sup_excess <= rtol and lip_excess <= rtol}


def _random_pairs(n, m):
    rng = np.random.default_rng(0)
    i = rng.integers(0, n, m)
    j = rng.integers(0, n, m)
    keep = i != j
    return i[keep], j[keep]


def constant_function(c: float) -> TestFunction:
    return TestFunction(lambda x: np.full(np.shape(x)[:-1], float(c)), abs(c), 0.0,
                        f"const({c})")


def make_bump_function(z, r_inner: float, r_outer: float,
                       space: MetricSpace) -> TestFunction:
    """``clamp((r_outer - d(x, z)) / (r_outer - r_inner), 0, 1)``: equal to 1 on
    ``B(z, r_inner)`` and to 0 off ``B(z, r_outer)``."""
    if not 0 < r_inner < r_outer:
        raise MeasureError("need 0 < r_inner < r_outer")
    z = space.as_points(z)
    width = r_outer - r_inner

    def f(x):
        return np.clip((r_outer - space.distance(x, z)) / width, 0.0, 1.0)

    return TestFunction(f, 1.0, 1.0 / width, f"bump({r_inner},{r_outer})")


def clamped_distance_function(anchor, space: MetricSpace, cap: float = 1.0,
                              coord: int | None = None) -> TestFunction:
    """``min(d(x, anchor), cap)``, or ``min(|x_coord - anchor_coord|, cap)``."""
    a = space.as_points(anchor)
    if coord is None:
        def f(x):
            return np.minimum(space.distance(x, a), cap)
    else:
        def f(x):
            x = space.as_points(x)
            return np.minimum(np.abs(x[..., coord] - a[..., coord]), cap)
    return TestFunction(f, cap, 1.0, f"min(d,{cap})")


# --------------------------------------------------------------------------
# measures
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray
    space: MetricSpace

    def __post_init__(self):
        pts = self.space.as_points(self.points)
        if pts.ndim == 1:
            pts = pts[None, :]
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(pts):
            raise MeasureError("points and weights differ in length")
        if np.any(~(w > 0)):
            raise MeasureError("atom weights must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    # construction ---------------------------------------------------------

    @classmethod
    def dirac(cls, point, space: MetricSpace) -> "EmpiricalMeasure":
        return cls(space.as_points(point).reshape(1, -1), np.ones(1), space)

    @classmethod
    def from_samples(cls, samples, space: MetricSpace, merge: bool = True):
        pts = space.as_points(samples).reshape(-1, space.dim)
        mu = cls(pts, np.full(len(pts), 1.0 / len(pts)), space)
        return mu.merged() if merge else mu

    @classmethod
    def from_mapping(cls, masses: dict, space: MetricSpace) -> "EmpiricalMeasure":
        items = [(k, v) for k, v in masses.items() if v > 0]
        pts = np.array([np.atleast_1d(k) for k, _ in items], dtype=float)
        return cls(pts, np.array([v for _, v in items]), space)

    @staticmethod
    def mixture(measures: Sequence["EmpiricalMeasure"],
                coefs: Sequence[float]) -> "EmpiricalMeasure":
        pairs = [(m, c) for m, c in zip(measures, coefs) if c > 0]
        pts = np.concatenate([m.points for m, _ in pairs])
        w = np.concatenate([c * m.weights / m.total_weight for m, c in pairs])
        return EmpiricalMeasure(pts, w, pairs[0][0].space).merged()

    # properties -----------------------------------------------------------

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    def is_probability(self, tol: float = 1e-12) -> bool:
        return abs(self.total_weight - 1.0) <= tol

    def normalized(self) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self.points, self.weights / self.total_weight, self.space)

    def merged(self, decimals: int | None = None) -> "EmpiricalMeasure":
        """Combine atoms at identical (optionally rounded) locations."""
        pts = self.points if decimals is None else np.round(self.points, decimals)
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        w = np.bincount(inv.reshape(-1), weights=self.weights, minlength=len(uniq))
        return EmpiricalMeasure(uniq, w, self.space)

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.points)) / self.total_weight)

    def mass_of(self, point, tol: float = 1e-12) -> float:
        d = self.space.distance(self.points, self.space.as_points(point))
        return float(np.sum(self.weights[d <= tol]) / self.total_weight)

    def as_dict(self) -> dict:
        """``{scalar point: weight}`` for one-dimensional measures."""
        return {float(p[0]): float(w) for p, w in zip(self.points, self.weights)}

    # serialization --------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i}" for i in range(self.space.dim)] + ["weight"])
            for p, w in zip(self.points, self.weights):
                wr.writerow([repr(float(c)) for c in p] + [repr(float(w))])

    @classmethod
    def from_csv(cls, path, space: MetricSpace) -> "EmpiricalMeasure":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != space.dim + 1:
            raise MeasureError("CSV column count does not match the space dimension")
        return cls(data[:, :-1], data[:, -1], space)

    def to_json(self) -> str:
        return json.dumps({"space": self.space.to_dict(),
                           "points": self.points.tolist(),
                           "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "EmpiricalMeasure":
        d = json.loads(text)
        return cls(np.array(d["points"], dtype=float), np.array(d["weights"]),
                   space_from_dict(d["space"]))


def ball_mass(mu: EmpiricalMeasure, z, eps: float) -> float:
    """Normalized mass of the open ball ``B(z, eps)``."""
    d = mu.space.distance(mu.points, mu.space.as_points(z))
    return float(np.sum(mu.weights[d < eps]) / mu.total_weight)


def total_variation(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """``sup_A |mu(A) - nu(A)|`` for atomic measures (merged on exact points)."""
    pts, c = _signed_difference(mu, nu)
    return 0.5 * float(np.sum(np.abs(c)))


# --------------------------------------------------------------------------
# dual-Lipschitz (Fortet-Mourier) distance
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DistanceResult:
    value: float
    mode: str
    lower_bound: bool = False

    def __float__(self):
        return float(self.value)


def _signed_difference(mu, nu):
    if mu.space != nu.space:
        raise MeasureError("measures live on different spaces")
    pts = np.concatenate([mu.points, nu.points])
    w = np.concatenate([mu.weights / mu.total_weight, -nu.weights / nu.total_weight])
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    c = np.bincount(inv.reshape(-1), weights=w, minlength=len(uniq))
    return uniq, c


def _bl_lp(c, rows, cols, dists):
    """max c.f  s.t.  f_i - f_j <= L d_ij on the listed pairs, |f| <= M, M + L <= 1."""
    m = len(c)
    k = len(rows)
    # variables: f_0..f_{m-1}, M, L
    e = np.arange(k)
    lip = sparse.csr_matrix(
        (np.concatenate([np.ones(k), -np.ones(k), -dists]),
         (np.concatenate([e, e, e]), np.concatenate([rows, cols, np.full(k, m + 1)]))),
        shape=(k, m + 2))
    eye = sparse.identity(m, format="csr")
    mcol = sparse.csr_matrix(np.ones((m, 1)))
    zcol = sparse.csr_matrix((m, 1))
    upper = sparse.hstack([eye, -mcol, zcol])
    lower = sparse.hstack([-eye, -mcol, zcol])
    budget = sparse.csr_matrix(np.r_[np.zeros(m), 1.0, 1.0][None, :])
    A = sparse.vstack([lip, upper, lower, budget], format="csr")
    b = np.r_[np.zeros(k + 2 * m), 1.0]
    obj = -np.r_[c, 0.0, 0.0]
    bounds = [(None, None)] * m + [(0, 1), (0, 1)]
    res = linprog(obj, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise MeasureError(f"LP solver failed: {res.message}")
    return max(0.0, -res.fun)


def _line_value(x, c, M, L):
    """max sum c_i f_i over L-Lipschitz f on sorted points x with |f| <= M.

    Dynamic program over concave piecewise-linear value functions kept as two
    heaps of slope breakpoints (left of the plateau, right of the plateau).
    Domain clipping is done with walls whose slope exceeds sum |c|.
    """
    wall = 2.0 * float(np.sum(np.abs(c))) + 1.0
    left, right = [], []  # left: max-heap via negated raw positions
    off_l = off_r = 0.0
    vmax = 0.0
    heapq.heappush(left, (M, wall))  # stored as -(p - off_l) with p = -M
    heapq.heappush(right, (M, wall))
    n = len(x)
    for i in range(n):
        ci = float(c[i])
        if ci > 0:
            cur = right[0][0] + off_r
            val = vmax + ci * cur
            slope = ci
            while slope > 0:
                raw, u = heapq.heappop(right)
                p = raw + off_r
                val += slope * (p - cur)
                cur = p
                if u > slope:
                    heapq.heappush(left, (-(p - off_l), slope))
                    heapq.heappush(right, (raw, u - slope))
                    slope = 0.0
                else:
                    heapq.heappush(left, (-(p - off_l), u))
                    slope -= u
            vmax = val
        elif ci < 0:
            cur = -left[0][0] + off_l
            val = vmax + ci * cur
            slope = -ci
            while slope > 0:
                raw, u = heapq.heappop(left)
                p = -raw + off_l
                val += slope * (cur - p)
                cur = p
                if u > slope:
                    heapq.heappush(right, (p - off_r, slope))
                    heapq.heappush(left, (raw, u - slope))
                    slope = 0.0
                else:
                    heapq.heappush(right, (p - off_r, u))
                    slope -= u
            vmax = val
        if i + 1 < n:
            w = L * float(x[i + 1] - x[i])
            off_l -= w
            off_r += w
            heapq.heappush(left, (-(-M - off_l), wall))
            heapq.heappush(right, (M - off_r, wall))
    return vmax


def _bl_line(x, c, tol=1e-12):
    """Exact dual-Lipschitz value on the line: golden search over the concave
    value as a function of the Lipschitz share L (sup share M = 1 - L)."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, 1.0
    a, b = hi - g * (hi - lo), lo + g * (hi - lo)
    fa, fb = _line_value(x, c, 1 - a, a), _line_value(x, c, 1 - b, b)
    best = max(fa, fb, _line_value(x, c, 1.0, 0.0), _line_value(x, c, 0.0, 1.0))
    while hi - lo > tol:
        if fa < fb:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = _line_value(x, c, 1 - b, b)
        else:
            hi, b, fb = b, a, fa
            a = hi - g * (hi - lo)
            fa = _line_value(x, c, 1 - a, a)
        best = max(best, fa, fb)
    return max(0.0, best)


def _dictionary_value(mu, nu, max_centers=64):
    space = mu.space
    pts, c = _signed_difference(mu, nu)
    if len(pts) > max_centers:
        centers = pts[np.linspace(0, len(pts) - 1, max_centers).astype(int)]
    else:
        centers = pts
    best = 0.0
    for p in centers:
        d = space.distance(pts, p)
        pos = d[d > 0]
        if len(pos) == 0:
            continue
        for a in np.quantile(pos, [0.25, 0.5, 1.0]):
            if a <= 0:
                continue
            clamp = np.maximum(a - d, 0.0) / (a + 1.0)
            tent = (a / (a + 2.0)) * np.clip(1.0 - 2.0 * d / a, -1.0, 1.0)
            best = max(best, abs(float(c @ clamp)), abs(float(c @ tent)))
    return best


def dual_lipschitz_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure,
                            space: MetricSpace | None = None,
                            mode: str = "exact_small") -> DistanceResult:
    """``sup{|<f,mu> - <f,nu>| : ||f||_inf + ||f||_Lip <= 1}``.

    ``exact_small`` solves the finite LP over atom values (<= 64 merged atoms).
    ``exact_line`` handles one-dimensional spaces, where Lipschitz
    constraints between neighbouring atoms suffice: on the line it runs a
    slope-trick dynamic program per Lipschitz level and optimizes the level
    by golden section; on the circle it solves the banded LP.  ``dictionary`` returns a lower bound from clamped-distance and
    tent functions; ``auto`` picks the best applicable mode.
    """
    if space is not None and (mu.space != space or nu.space != space):
        raise MeasureError("measures do not live on the given space")
    if not (mu.is_probability(1e-9) and nu.is_probability(1e-9)):
        raise MeasureError("dual-Lipschitz distance needs probability measures")
    sp = mu.space
    if mode == "auto":
        pts, _ = _signed_difference(mu, nu)
        if len(pts) <= EXACT_SMALL_MAX_ATOMS:
            mode = "exact_small"
        elif sp.dim == 1 and sp.kind in ("euclidean", "countable", "torus"):
            mode = "exact_line"
        else:
            mode = "dictionary"
    if mode == "exact_small":
        pts, c = _signed_difference(mu, nu)
        if len(pts) > EXACT_SMALL_MAX_ATOMS:
            raise MeasureError(
                f"exact_small handles at most {EXACT_SMALL_MAX_ATOMS} atoms, got {len(pts)}")
        if np.all(c == 0):
            return DistanceResult(0.0, mode)
        i, j = np.where(~np.eye(len(pts), dtype=bool))
        d = sp.distance(pts[i], pts[j])
        return DistanceResult(_bl_lp(c, i, j, d), mode)
    if mode == "exact_line":
        if sp.dim != 1:
            raise MeasureError("exact_line needs a one-dimensional space")
        pts, c = _signed_difference(mu, nu)
        order = np.argsort(pts[:, 0])
        pts, c = pts[order], c[order]
        if np.all(c == 0):
            return DistanceResult(0.0, mode)
        if sp.kind != "torus":
            return DistanceResult(_bl_line(pts[:, 0], c), mode)
        i = np.arange(len(pts) - 1)
        rows, cols = [i, i + 1], [i + 1, i]
        if sp.kind == "torus" and len(pts) > 2:
            rows += [np.array([len(pts) - 1]), np.array([0])]
            cols += [np.array([0]), np.array([len(pts) - 1])]
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        d = sp.distance(pts[rows], pts[cols])
        return DistanceResult(_bl_lp(c, rows, cols, d), mode)
    if mode == "dictionary":
        return DistanceResult(_dictionary_value(mu, nu), mode, lower_bound=True)
    raise MeasureError(f"unknown mode {mode!r}")


def wasserstein1_line(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """W1 on the line; an upper bound for the dual-Lipschitz distance."""
    return float(wasserstein_distance(mu.points[:, 0], nu.points[:, 0],
                                      mu.weights, nu.weights))
