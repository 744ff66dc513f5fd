"""Monte Carlo probes for regularity, lower-bound and ergodicity properties.

Every asymptotic quantity is replaced by a finite proxy:

* ``limsup_{t -> inf}`` and ``liminf`` become the max / min over the trailing
  half of a geometric time grid;
* an infimum over starting points becomes the minimum over a finite grid;

so a "supported" verdict means supported on the probed grid, nothing more.
Verdicts use a three-standard-error convention; refutations always carry a
witness ``(x, t, value, se)``.  Two starts probed together share their
random numbers, which sharpens differences without changing either law.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .metric import (DistanceResult, EmpiricalMeasure, MetricSpace,
                     dual_lipschitz_distance)
from .models import SemigroupModel

SUPPORTED = "supported"
REFUTED = "refuted_at_confidence"
INCONCLUSIVE = "inconclusive"


class ProbeError(RuntimeError):
    pass


def geometric_grid(t0: float, ratio: float = 1.5, n: int = 12) -> list[float]:
    return [float(t0 * ratio**k) for k in range(n)]


def trailing_half(seq):
    return seq[len(seq) // 2:]


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, EmpiricalMeasure):
        return obj.as_dict()
    if isinstance(obj, DistanceResult):
        return float(obj.value)
    return obj


def ball_indicator(z, eps: float, space: MetricSpace) -> Callable:
    """``1{d(x, z) < eps}`` (open ball)."""
    z = space.as_points(z)

    def f(x):
        return (space.distance(x, z) < eps).astype(float)

    return f


def neighbourhood_indicator(K, eps: float, space: MetricSpace) -> Callable:
    """``1{d(x, K) < eps}`` for a finite point set ``K``."""
    K = space.as_points(K)
    if K.ndim == 1:
        K = K[None, :]

    def f(x):
        d = np.stack([space.distance(x, k) for k in K], axis=-1)
        return (d.min(axis=-1) < eps).astype(float)

    return f


def _mean_se(samples):
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n < 2:
        raise ProbeError("need at least two trajectories")
    se = samples.std(axis=0, ddof=1) / math.sqrt(n)
    # samples equal up to rounding have no spread
    flat = np.ptp(samples, axis=0) <= 1e-12 * (1.0 + np.max(np.abs(samples), axis=0))
    se = np.where(flat, 0.0, se)
    return samples.mean(axis=0), (float(se) if se.ndim == 0 else se)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CesaroEstimate:
    value: float
    std_error: float
    n_trajectories: int
    t: float
    method: str = "ensemble_time_average"


def estimate_Qt(model: SemigroupModel, f, x, t: float, n_traj: int,
                seed: int) -> CesaroEstimate:
    """Ensemble mean of per-trajectory time averages of ``f`` over ``[0, t]``."""
    if t <= 0:
        raise ProbeError("t must be positive")
    occ = model.occupation(f, x, [t], n_traj, seed)[:, 0]
    m, se = _mean_se(occ)
    return CesaroEstimate(float(m), float(se), n_traj, float(t))


def estimate_Qt_curve(model, f, x, t_grid, n_traj, seed):
    """Means and standard errors of ``Q_t f(x)`` along ``t_grid`` from one ensemble."""
    occ = model.occupation(f, x, list(t_grid), n_traj, seed)
    return _mean_se(occ)


def estimate_Pt_curve(model, f, x, t_grid, n_traj, seed):
    vals = np.asarray(f(model.paths(x, np.asarray(t_grid, dtype=float), n_traj, seed)), float)
    return _mean_se(vals)


def estimate_Qt_measure(model: SemigroupModel, x, t: float, n_traj: int,
                        n_time_samples: int, seed: int) -> EmpiricalMeasure:
    """Pooled occupation measure: every trajectory observed at
    ``n_time_samples`` evenly spaced midpoint times in ``[0, t]``."""
    if t <= 0:
        raise ProbeError("t must be positive")
    times = (np.arange(n_time_samples) + 0.5) * (t / n_time_samples)
    pts = model.paths(x, times, n_traj, seed).reshape(-1, model.space.dim)
    return EmpiricalMeasure.from_samples(pts, model.space)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class ConditionReport:
    condition: str
    verdict: str
    proxy: float
    std_error: float
    evidence: list
    window: dict
    witness: dict | None = None
    seed: int | None = None
    n_traj: int | None = None
    notes: list = field(default_factory=list)
    children: dict = field(default_factory=dict)
    software_version: str = __version__

    def to_dict(self) -> dict:
        d = asdict(self)
        d["children"] = {k: v.to_dict() for k, v in self.children.items()}
        return _json_ready(d)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        keys = sorted({k for row in self.evidence for k in row})
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for row in self.evidence:
                w.writerow({k: _json_ready(v) for k, v in row.items()})


def _window(t_grid):
    t_grid = list(map(float, t_grid))
    tail = trailing_half(t_grid)
    return {"t_grid": t_grid, "trailing_from": tail[0], "trailing_points": len(tail),
            "proxy": "max/min over trailing half of the grid"}


def _verdict(proxy, se, margin, refute_below):
    if proxy - 3 * se > margin:
        return SUPPORTED
    if proxy + 3 * se < refute_below or (se == 0 and proxy <= margin):
        return REFUTED
    return INCONCLUSIVE


def probe_lower_bound(model: SemigroupModel, which: str, z, eps: float, x_grid,
                      t_grid, n_traj: int, seed: int, margin: float = 0.0,
                      refute_below: float = 0.01) -> ConditionReport:
    """Lower-bound conditions on ball masses.

    ``C1``: limsup_t Q_t(z, B(z, eps)) at ``x = z``; ``C2``/``C3``: limsup of
    Q_t(x, B(z, eps)) for each / the worst ``x`` in ``x_grid``; ``C4``:
    liminf of P_t(x, B(z, eps)); ``C``: limsup of Q_t(x, K^eps) where ``z``
    is a finite set ``K``.
    """
    t_grid = sorted(map(float, t_grid))
    if len(t_grid) < 4:
        raise ProbeError("t_grid needs at least 4 points")
    sp = model.space
    if which == "C":
        f = neighbourhood_indicator(z, eps, sp)
    elif which in ("C1", "C2", "C3", "C4"):
        f = ball_indicator(z, eps, sp)
    else:
        raise ProbeError(f"unknown condition {which!r}")
    xs = [z] if which == "C1" else list(x_grid)
    tail = len(t_grid) // 2
    evidence, per_x = [], []
    for x in xs:
        if which == "C4":
            m, se = estimate_Pt_curve(model, f, x, t_grid, n_traj, seed)
        else:
            m, se = estimate_Qt_curve(model, f, x, t_grid, n_traj, seed)
        for t, v, s in zip(t_grid, m, se):
            evidence.append({"x": np.ravel(x).tolist(), "t": t, "estimate": float(v),
                             "se": float(s)})
        k = tail + int(np.argmin(m[tail:]) if which == "C4" else np.argmax(m[tail:]))
        per_x.append((float(m[k]), float(se[k]), x, t_grid[k]))
    worst = min(per_x, key=lambda r: r[0])
    proxy, se, wx, wt = worst
    verdict = _verdict(proxy, se, margin, refute_below)
    witness = {"x": np.ravel(wx).tolist(), "t": wt, "value": proxy, "se": se}
    notes = ["infimum over a finite x grid (sampled, not certified)"] if len(xs) > 1 else []
    return ConditionReport(which, verdict, proxy, se, evidence, _window(t_grid),
                           witness if verdict != SUPPORTED else None, seed, n_traj, notes)


def probe_regularity(model: SemigroupModel, which: str, z, f, radii, t_grid,
                     n_traj: int, seed: int, direction=None, x_points=None,
                     tol: float = 0.05, use_exact: bool = False) -> ConditionReport:
    """Gap-versus-radius curve for the e-property (``e_prop``), Cesàro
    e-property (``cesaro_e_prop``) and their eventual versions (``evc``,
    ``cesaro_evc``).

    For radius ``r`` the start is ``z + r * direction`` (or ``x_points[i]``).
    ``t_grid`` may be a callable ``r -> grid``.  ``sup`` uses the whole grid,
    ``limsup`` its trailing half.  With ``use_exact`` the model's exact
    hooks replace Monte Carlo.
    """
    if which not in ("e_prop", "cesaro_e_prop", "evc", "cesaro_evc"):
        raise ProbeError(f"unknown regularity notion {which!r}")
    radii = list(map(float, radii))
    if any(b >= a for a, b in zip(radii, radii[1:])):
        raise ProbeError("radii must decrease")
    sp = model.space
    zp = sp.as_points(z).reshape(-1)
    if x_points is None:
        d = np.ones(sp.dim) if direction is None else np.asarray(direction, float)
        x_points = [zp + r * d / max(float(np.max(np.abs(d))), 1e-300) for r in radii]
    cesaro = which.startswith("cesaro")
    eventual = which.endswith("evc")
    evidence, curve = [], []
    for r, x in zip(radii, x_points):
        grid = sorted(map(float, t_grid(r) if callable(t_grid) else t_grid))
        if use_exact:
            hook = model.exact_qf if cesaro else model.exact_pf
            if hook is None:
                raise ProbeError("model has no exact hook for this notion")
            diff = np.array([hook(f, x, t) - hook(f, z, t) for t in grid])
            se = np.zeros_like(diff)
        else:
            if cesaro:
                ax = model.occupation(f, x, grid, n_traj, seed)
                az = model.occupation(f, z, grid, n_traj, seed)
            else:
                times = np.asarray(grid)
                ax = np.asarray(f(model.paths(x, times, n_traj, seed)), float)
                az = np.asarray(f(model.paths(z, times, n_traj, seed)), float)
            diff, se = _mean_se(ax - az)
        gaps = np.abs(diff)
        window = range(len(grid) // 2, len(grid)) if eventual else range(len(grid))
        k = max(window, key=lambda i: gaps[i])
        curve.append((r, float(gaps[k]), float(se[k]), grid[k], x))
        for t, g, s in zip(grid, gaps, se):
            evidence.append({"radius": r, "x": np.ravel(x).tolist(), "t": t, "gap": float(g),
                             "se": float(s)})
    small = curve[len(curve) // 2:]
    if all(g - 3 * s > tol for _, g, s, _, _ in small):
        verdict = REFUTED
    elif curve[-1][1] + 3 * curve[-1][2] < tol:
        verdict = SUPPORTED
    else:
        verdict = INCONCLUSIVE
    r, g, s, t, x = min(small, key=lambda c: c[1])
    witness = {"radius": r, "x": np.ravel(x).tolist(), "t": t, "gap": g, "se": s}
    rep = ConditionReport(which, verdict, curve[-1][1], curve[-1][2], evidence,
                          {"radii": radii, "sup_window": "all" if not eventual else "trailing half"},
                          witness if verdict == REFUTED else None, seed, n_traj)
    rep.notes.append("gap curve: " + ", ".join(f"r={c[0]:.4g}: {c[1]:.4g}" for c in curve))
    return rep


# --------------------------------------------------------------------------
# ergodic decomposition
# --------------------------------------------------------------------------


@dataclass
class ErgodicClassReport:
    representatives: list
    limits: list
    stable: list
    distances: np.ndarray
    classes: list
    support_gap: np.ndarray
    ergodic_candidates: list
    emds_violation: bool
    notes: list = field(default_factory=list)

    def class_of(self, i: int) -> int:
        for c, members in enumerate(self.classes):
            if i in members:
                return c
        raise KeyError(i)

    def to_dict(self) -> dict:
        return _json_ready({
            "representatives": [np.ravel(x).tolist() for x in self.representatives],
            "limits": self.limits, "stable": self.stable, "distances": self.distances,
            "classes": self.classes, "support_gap": self.support_gap,
            "ergodic_candidates": self.ergodic_candidates,
            "emds_violation": self.emds_violation, "notes": self.notes,
            "software_version": __version__})


def single_linkage(D: np.ndarray, threshold: float) -> list[list[int]]:
    """Partition from merging pairs with distance below ``threshold`` in
    increasing order of distance (ties by index)."""
    n = len(D)
    parent = list(range(n))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    pairs = sorted((D[i, j], i, j) for i in range(n) for j in range(i + 1, n))
    for d, i, j in pairs:
        if d >= threshold:
            break
        ri, rj = root(i), root(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(root(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def _support(mu: EmpiricalMeasure, floor: float) -> np.ndarray:
    w = mu.weights / mu.total_weight
    return mu.points[w >= floor]


def support_gap(mu, nu, floor: float = 0.01) -> float:
    """Smallest distance between atoms carrying at least ``floor`` mass."""
    a, b = _support(mu, floor), _support(nu, floor)
    if len(a) == 0 or len(b) == 0:
        return math.inf
    sp = mu.space
    return float(min(np.min(sp.distance(a, p)) for p in b))


def ergodic_decomposition(model: SemigroupModel, x_list, t: float, n_traj: int,
                          cluster_tol: float, seed: int, n_time_samples: int = 64,
                          use_exact: bool = False, support_floor: float = 0.01,
                          overlap_eps: float = 1e-9,
                          distance_mode: str = "auto") -> ErgodicClassReport:
    """Estimate ``x -> eps_x`` on a finite set of starts and group equal limits.

    Limits come from the Cesàro occupation measure at ``t`` (exact hook when
    ``use_exact``).  A limit counts as stable when its estimate at ``t/2`` is
    within ``cluster_tol/2``.  A class is an ergodic candidate when it is
    stable and not within ``cluster_tol`` of any mixture (weights in steps
    of 0.05) of two other classes; EMDS is flagged violated when two
    candidates have supports closer than ``overlap_eps``.
    """

    def limit(x, tt):
        if use_exact:
            if model.exact_cesaro is None:
                raise ProbeError("model has no exact Cesàro hook")
            return model.exact_cesaro(x, tt).normalized()
        return estimate_Qt_measure(model, x, tt, n_traj, n_time_samples, seed)

    def dist(a, b):
        return dual_lipschitz_distance(a, b, mode=distance_mode).value

    lims, stable, notes = [], [], []
    for x in x_list:
        full, half = limit(x, t), limit(x, t / 2)
        lims.append(full)
        ok = dist(full, half) < cluster_tol / 2
        stable.append(bool(ok))
        if not ok:
            notes.append(f"start {np.ravel(x).tolist()}: t vs t/2 unstable, inconclusive")
    n = len(lims)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = dist(lims[i], lims[j])
    classes = single_linkage(D, cluster_tol)
    reps = [lims[c[0]] for c in classes]
    m = len(classes)
    gaps = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            gaps[a, b] = gaps[b, a] = support_gap(reps[a], reps[b], support_floor)
    weights = np.round(np.arange(0, 1.0001, 0.05), 10)
    candidates = []
    for a in range(m):
        if not all(stable[i] for i in classes[a]):
            continue
        mixture = False
        others = [b for b in range(m) if b != a]
        for i, b in enumerate(others):
            for c in others[i + 1:]:
                for w in weights[1:-1]:
                    mix = EmpiricalMeasure.mixture([reps[b], reps[c]], [w, 1 - w])
                    if dist(reps[a], mix) < cluster_tol:
                        mixture = True
                        break
                if mixture:
                    break
            if mixture:
                break
        if not mixture:
            candidates.append(a)
    violation = any(gaps[a, b] <= overlap_eps for i, a in enumerate(candidates)
                    for b in candidates[i + 1:])
    return ErgodicClassReport(list(x_list), lims, stable, D, classes, gaps, candidates,
                              bool(violation), notes)


# --------------------------------------------------------------------------
# global checks
# --------------------------------------------------------------------------


def weak_star_mean_ergodicity_check(model: SemigroupModel, x_list, f_list, t_grid,
                                    n_traj: int, seed: int, tol: float = 0.05,
                                    companions: dict | None = None) -> ConditionReport:
    """Do Cesàro averages of every test function agree across starts at the
    largest time?  ``companions`` may hold extra reports (lower bound and
    Cesàro eventual continuity) bundled into one combined report."""
    if len(x_list) < 2 or len(f_list) < 3:
        raise ProbeError("need at least two starts and three test functions")
    T = float(max(t_grid))
    evidence, worst = [], (0.0, 0.0, None)
    for fi, f in enumerate(f_list):
        vals = [model.occupation(f, x, [T], n_traj, seed)[:, 0] for x in x_list]
        for i in range(len(x_list)):
            for j in range(i + 1, len(x_list)):
                g, se = _mean_se(vals[i] - vals[j])
                g = abs(float(g))
                evidence.append({"f": fi, "x": np.ravel(x_list[i]).tolist(),
                                 "y": np.ravel(x_list[j]).tolist(), "t": T,
                                 "gap": g, "se": float(se)})
                if g - 3 * se > worst[0] - 3 * worst[1] or worst[2] is None:
                    worst = (g, float(se), evidence[-1])
    gmax = max(e["gap"] for e in evidence)
    if gmax < tol:
        verdict = SUPPORTED
    elif worst[0] - 3 * worst[1] > tol:
        verdict = REFUTED
    else:
        verdict = INCONCLUSIVE
    rep = ConditionReport("weak_star_mean_ergodicity", verdict, gmax,
                          max(e["se"] for e in evidence), evidence, _window(t_grid),
                          worst[2] if verdict == REFUTED else None, seed, n_traj)
    rep.children = dict(companions or {})
    return rep


def pt_convergence_check(model: SemigroupModel, x_list, f_list, t_grid, n_traj: int,
                         seed: int, tol: float = 0.05) -> ConditionReport:
    """Does ``P_t f(x)`` settle?  Refuted when its oscillation over the
    trailing half of the grid exceeds ``tol`` by 3 standard errors."""
    t_grid = sorted(map(float, t_grid))
    tail = len(t_grid) // 2
    evidence, osc = [], []
    for fi, f in enumerate(f_list):
        for x in x_list:
            m, se = estimate_Pt_curve(model, f, x, t_grid, n_traj, seed)
            for t, v, s in zip(t_grid, m, se):
                evidence.append({"f": fi, "x": np.ravel(x).tolist(), "t": t,
                                 "estimate": float(v), "se": float(s)})
            hi, lo = tail + int(np.argmax(m[tail:])), tail + int(np.argmin(m[tail:]))
            osc.append((float(m[hi] - m[lo]), float(se[hi] + se[lo]), fi, x,
                        t_grid[hi], t_grid[lo]))
    o, s, fi, x, th, tl = max(osc, key=lambda r: r[0] - 3 * r[1])
    if o - 3 * s > tol:
        verdict = REFUTED
    elif max(r[0] for r in osc) < tol:
        verdict = SUPPORTED
    else:
        verdict = INCONCLUSIVE
    witness = {"f": fi, "x": np.ravel(x).tolist(), "t_high": th, "t_low": tl,
               "oscillation": o, "se": s}
    return ConditionReport("pt_convergence", verdict, o, s, evidence, _window(t_grid),
                           witness if verdict == REFUTED else None, seed, n_traj)


def sweep_check(model: SemigroupModel, K, x_list, t_grid, n_traj: int,
                seed: int, use_exact: bool = False) -> ConditionReport:
    """Mass ``P_t(x, K)`` of a box ``K = (lo, hi)`` (coordinatewise, closed)
    along ``t_grid``; supported when it trends to 0 and ends within 3 SE of 0."""
    t_grid = sorted(map(float, t_grid))
    lo, hi = (np.atleast_1d(np.asarray(v, float)) for v in K)
    empty = bool(np.any(lo > hi))

    def f(x):
        x = np.asarray(x, float)
        if empty:
            return np.zeros(x.shape[:-1])
        return np.all((x >= lo) & (x <= hi), axis=-1).astype(float)

    evidence, finals, ok = [], [], True
    for x in x_list:
        if use_exact and model.exact_marginal is not None:
            m = np.array([model.exact_marginal(x, t).integrate(f) for t in t_grid])
            se = np.zeros_like(m)
        else:
            m, se = estimate_Pt_curve(model, f, x, t_grid, n_traj, seed)
        for t, v, s in zip(t_grid, m, se):
            evidence.append({"x": np.ravel(x).tolist(), "t": t, "mass": float(v), "se": float(s)})
        final_ok = m[-1] <= 3 * se[-1] + 1e-12
        ok = ok and final_ok and m[-1] <= np.max(m) + 1e-15
        finals.append((float(m[-1]), float(se[-1]), x))
    v, s, x = max(finals, key=lambda r: r[0])
    verdict = SUPPORTED if ok else INCONCLUSIVE
    return ConditionReport("sweep", verdict, v, s, evidence, _window(t_grid), None, seed,
                           n_traj, ["box " + json.dumps([lo.tolist(), hi.tolist()])])


def tightness_curve(model: SemigroupModel, x, anchor, radii, t_grid, n_traj: int,
                    seed: int) -> list[dict]:
    """Mass of ``Q_t(x, .)`` outside ``B(anchor, R)`` for each ``R`` and ``t``:
    evidence for (not a certificate of) tightness of the Cesàro family."""
    sp = model.space
    rows = []
    for R in radii:
        inside = ball_indicator(anchor, R, sp)
        m, se = estimate_Qt_curve(model, lambda y: 1.0 - inside(y), x, t_grid, n_traj, seed)
        rows += [{"R": float(R), "t": float(t), "outside": float(v), "se": float(s)}
                 for t, v, s in zip(t_grid, m, se)]
    return rows
