"""The acceptance suite: ten numbered criteria, each a bundle of checks.

Every check records the measured value, the target, the tolerance and the
comparison used.  Failures are aggregated, never short-circuited.  The
payload of a run (everything except runtimes) is deterministic given the
seed; criterion 10 reruns criteria 1-9 and compares payload digests.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import chains, ifs, probes, sde
from .metric import (Countable, EmpiricalMeasure, Euclidean, Product, Torus, clamped_distance_function,
                     dual_lipschitz_distance, make_bump_function, total_variation,
                     wasserstein1_line, TestFunction)
from .models import build_model, absorbing_chain_model, integer_chain_model

DEFAULT_SEED = 20240611
R1 = Euclidean(1)


@dataclass
class Check:
    name: str
    measured: float
    target: float | None
    tolerance: float | None
    relation: str  # "<=", ">=", "|d|<=", "<", "==", "3se"
    passed: bool
    note: str = ""


@dataclass
class CriterionResult:
    number: int
    title: str
    budget_s: float
    checks: list = field(default_factory=list)
    runtime_s: float = 0.0
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        bad = [c for c in self.checks if not c.passed]
        detail = self.error or (f"{len(bad)} of {len(self.checks)} checks failed: "
                                + "; ".join(_fmt(c) for c in bad) if bad
                                else f"{len(self.checks)} checks")
        return (f"criterion {self.number:>2} {status}  {self.title}  "
                f"[{self.runtime_s:.1f}s / {self.budget_s:.0f}s]  {detail}")


def _fmt(c: Check) -> str:
    tgt = "" if c.target is None else f" target {c.target:.6g}"
    tol = "" if c.tolerance is None else f" tol {c.tolerance:.3g}"
    return f"{c.name}: measured {c.measured:.6g}{tgt}{tol}"


def _within(name, measured, target, tol, note=""):
    return Check(name, float(measured), float(target), float(tol), "|d|<=",
                 bool(abs(measured - target) <= tol), note)


def _within_se(name, measured, se, target, note=""):
    return Check(name, float(measured), float(target), float(3 * se), "3se",
                 bool(abs(measured - target) <= 3 * se), note)


def _below(name, measured, bound, strict=True, note=""):
    ok = measured < bound if strict else measured <= bound
    return Check(name, float(measured), float(bound), None, "<" if strict else "<=", bool(ok), note)


def _above(name, measured, bound, note=""):
    return Check(name, float(measured), float(bound), None, ">=", bool(measured >= bound), note)


def _scale(n, quick):
    return max(200, n // 10) if quick else n


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------

F_CLAMP = clamped_distance_function(0.0, R1)


def criterion_1(seed, quick):
    res = CriterionResult(1, "absorbing chain: Cesàro gap at z = 0", 60)
    chain = chains.AbsorbingChain()
    target = 1 - 2 / math.e
    gaps = []
    for n in range(2, 51):
        q = chains.cesaro_exact(chain, F_CLAMP, 1.0 / n, float(n))
        q0 = chains.cesaro_exact(chain, F_CLAMP, 0.0, float(n))
        gaps.append(q - q0)
        closed = chain.cesaro_closed_form(F_CLAMP, 1.0 / n, float(n))
        if abs(q - closed) > 1e-8:
            res.checks.append(_within(f"quadrature vs closed form n={n}", q, closed, 1e-8))
    res.checks.append(_above("min over n=2..50 of Q_n f(1/n) - Q_n f(0)", min(gaps), target))
    model = absorbing_chain_model()
    for n in (2, 10):
        est = probes.estimate_Qt(model, F_CLAMP, 1.0 / n, float(n), _scale(10_000, quick), seed)
        res.checks.append(_within_se(f"Monte Carlo Q_n f(1/n), n={n}", est.value, est.std_error,
                                     gaps[n - 2] + chains.cesaro_exact(chain, F_CLAMP, 0.0, n)))
    return res


def criterion_2(seed, quick):
    res = CriterionResult(2, "absorbing chain: eventual continuity vs Cesàro e-property", 60)
    chain = chains.AbsorbingChain()
    worst = 0.0
    for n in range(2, 51):
        for k in (50, 100, 200, 400, 800):
            t = float(k * n)
            worst = max(worst, abs(chain.Pf(F_CLAMP, 1.0 / n, t) - chain.Pf(F_CLAMP, 0.0, t)))
    res.checks.append(_below("max over n, t >= 50n of |P_t f(1/n) - P_t f(0)|", worst, 1e-6,
                             strict=False))
    model = absorbing_chain_model()
    radii = [1.0 / n for n in (2, 5, 10, 20, 50)]
    ces = probes.probe_regularity(model, "cesaro_e_prop", 0.0, F_CLAMP, radii,
                                  lambda r: [1.0 / r], 2, seed, use_exact=True, tol=0.05)
    evc = probes.probe_regularity(model, "evc", 0.0, F_CLAMP, radii,
                                  lambda r: [50 / r * 2**k for k in range(6)], 2, seed,
                                  use_exact=True, tol=1e-6)
    res.checks.append(Check("Cesàro e-property verdict is refuted", float(ces.verdict == probes.REFUTED),
                            1.0, None, "==", ces.verdict == probes.REFUTED, ces.notes[-1]))
    res.checks.append(Check("eventual continuity verdict is supported", float(evc.verdict == probes.SUPPORTED),
                            1.0, None, "==", evc.verdict == probes.SUPPORTED, evc.notes[-1]))
    return res


def criterion_3(seed, quick):
    res = CriterionResult(3, "integer chain: ergodic decomposition by uniformization", 60)
    chain = chains.integer_chain(200)

    def lim(x):
        return chains.cesaro_uniformized(chain, x, 200.0, 1e-8).measure.normalized()

    def ref(masses):
        return EmpiricalMeasure.from_mapping(masses, Countable())

    e0, e1, e5 = lim(0), lim(1), lim(5)
    res.checks.append(_within("TV(eps_0, delta_0)", total_variation(e0, ref({0: 1.0})), 0.0, 1e-9))
    res.checks.append(_below("TV(eps_1, (delta_1 + delta_3)/2)",
                             total_variation(e1, ref({1: 0.5, 3: 0.5})), 0.02, strict=False))
    res.checks.append(_below("TV(eps_5, delta_0/2 + delta_1/4 + delta_3/4)",
                             total_variation(e5, ref({0: 0.5, 1: 0.25, 3: 0.25})), 0.02,
                             strict=False))
    dec = probes.ergodic_decomposition(integer_chain_model(), [0, 1, 3, 5, 7], 200.0, 0, 0.05, seed,
                                       use_exact=True)
    c0, c1 = dec.class_of(0), dec.class_of(1)
    res.checks.append(Check("classes of 1 and 3 coincide, 0 separate",
                            float(dec.class_of(2) == c1 and c0 != c1), 1.0, None, "==",
                            dec.class_of(2) == c1 and c0 != c1, str(dec.classes)))
    gap = float(dec.support_gap[c0, c1])
    res.checks.append(Check("supports of the [0] and [1] limits disjoint", gap, 0.0, None, ">",
                            gap > 0 and not dec.emds_violation,
                            f"EMDS flag {'raised' if dec.emds_violation else 'clean'}"))
    return res




def criterion_4(seed, quick):
    res = CriterionResult(4, "jump system: transition to n from 1/n", 120)
    n, lam = 2, 1.0
    N = _scale(100_000, quick)
    model = ifs.ex3_jump_ifs(lam)
    ens = ifs.simulate_ensemble(model, 1.0 / n, 4.0, N, seed)
    for s in (0.5, 1.0, 2.0, 4.0):
        hit = (ens.state_at(s)[:, 0] == n).astype(float)
        m, se = hit.mean(), hit.std(ddof=1) / math.sqrt(N)
        exact = ifs.two_state_occupation(n, lam, s)
        res.checks.append(_within_se(f"P(state {n} at s={s})", m, se,
                                     ifs.inversion_jump_prob(n, lam, s),
                                     note=f"two-state exact value {exact:.6f}"))
    occ = ens.occupation_average(lambda x: (x[..., 0] == n).astype(float), float(n))
    m, se = occ.mean(), occ.std(ddof=1) / math.sqrt(N)
    exact = 0.5 * (2 * (1 - math.exp(-0.5)) - (2 / 3) * (1 - math.exp(-1.5)))
    res.checks.append(_within_se("Cesàro occupation of n over [0, n]", m, se,
                                 ifs.inversion_cesaro_bound(lam),
                                 note=f"two-state exact value {exact:.6f}"))
    return res


def criterion_5(seed, quick):
    res = CriterionResult(5, "place-dependent halving: stability and closed forms", 120)
    lam = 1.0
    model = ifs.ex6_place_dependent(lam)
    N = _scale(10_000, quick)
    T = 200.0 / lam
    for x in (0.5, 1.0, 5.0):
        ens = ifs.simulate_ensemble(model, x, T, N, seed)
        v = np.minimum(ens.state_at(T)[:, 0], 1.0)
        stay = math.exp(-math.exp(-x) * lam * T)
        res.checks.append(_below(f"E min(Phi_T, 1) from x={x}", v.mean(), 0.05,
                                 note=f"P(no halving by T) = {stay:.4f}"))
    for x, t in ((math.log(2), 2.0), (1.0, 1.0), (5.0, 50.0)):
        ens = ifs.simulate_ensemble(model, x, t, N, seed)
        hit = (ens.state_at(t)[:, 0] == x).astype(float)
        res.checks.append(_within_se(f"P_t(x, {{x}}) at x={x:.4g}, t={t}", hit.mean(),
                                     hit.std(ddof=1) / math.sqrt(N),
                                     ifs.halving_stay_prob(x, lam, t)))
    rep = ifs.b5_series_check(model, 1 / 8, M=0, gamma=0.0, n_max=10_000)
    closed = 0.25 / (math.exp(-1 / 8) / 2)
    res.checks.append(_within("series sum at x=1/8", rep.partial_sum, closed, 1e-9))
    res.checks.append(Check("series verdict holds", float(rep.verdict == "holds"), 1.0, None, "==",
                            rep.verdict == "holds", rep.verdict))
    return res


def criterion_6(seed, quick):
    res = CriterionResult(6, "Hopf radius: closed form, decay, invariant law", 300)
    g = sde.BrownianGrid.sample(50.0, 0.01, seed)
    r = sde.hopf_radial_path(sde.HopfMode(0, 1.0, 0.0, r0=1.0), g)
    res.checks.append(_below("max |r(t) - 1| with b=0, a=1", float(np.max(np.abs(r - 1))), 1e-9,
                             strict=False))
    rT = sde.hopf_radial_ensemble(-1.0, 0.3, 1.0, 50.0, 0.01, _scale(1000, quick), seed)[:, 0]
    res.checks.append(_below("mean r(50) with a=-1, b=0.3", rT.mean(), 1e-3))
    N = _scale(10_000, quick)
    r30 = sde.hopf_radial_ensemble(1.0, 0.5, 1.0, 30.0, 0.01, N, seed)[:, 0]
    lam = sde.hopf_lambda_samples(1.0, 0.5, N, seed)
    d = dual_lipschitz_distance(EmpiricalMeasure.from_samples(r30, R1),
                                EmpiricalMeasure.from_samples(lam, R1), mode="exact_line").value
    res.checks.append(_below("dual-Lipschitz(r(30), invariant law)", d, 0.05))
    return res


QP_FUNCS = {
    "cos t1": lambda x: np.cos(x[:, 0]),
    "cos(t1 - t2)": lambda x: np.cos(x[:, 0] - x[:, 1]),
    "sin(t1 + 2 t2)": lambda x: np.sin(x[:, 0] + 2 * x[:, 1]),
}


def criterion_7(seed, quick):
    res = CriterionResult(7, "quasi-periodic time averages", 30)
    omega = [1.0, math.sqrt(2.0)]
    theta0 = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed))).uniform(
        0, 2 * math.pi, 2)
    for name, g in QP_FUNCS.items():
        ta = sde.quasiperiodic_average(g, theta0, omega, 1e4)
        fa = sde.torus_average(g, 2)
        res.checks.append(_below(f"|time - torus average| for {name}", abs(ta - fa), 0.02))
    return res


def criterion_8(seed, quick):
    res = CriterionResult(8, "Lorenz: invariant plane and Gaussian Z marginal", 120)
    N = _scale(10_000, quick)
    params = sde.LorenzParams(sigma=10.0, beta=8 / 3, rho=0.5, alpha=1.0)
    init = np.zeros((N, 3))
    init[:, 2] = np.linspace(-2.0, 2.0, N)
    path = sde.lorenz_simulate(init, 20.0, 0.001, seed, params, n_paths=N, record=[20.0])
    xy = float(np.max(np.abs(path.states[:, 0, :2])))
    res.checks.append(Check("max |X(T)|, |Y(T)|", xy, 0.0, None, "==", xy == 0.0))
    var = float(path.states[:, 0, 2].var(ddof=1))
    target = params.alpha**2 / (2 * params.beta)
    res.checks.append(_within("Z variance at T=20", var, target, 0.05 * target,
                              note=f"Euler-Maruyama stationary value "
                                   f"{sde.ou_em_stationary_variance(params.beta, params.alpha, 0.001):.6f}"))
    return res


def criterion_9(seed, quick):
    res = CriterionResult(9, "circle rotation: lower bound and mean ergodicity", 30)
    model = build_model("torus_rotation")
    T1 = Torus(1)
    grid = probes.geometric_grid(50.0)
    xs = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    lb = probes.probe_lower_bound(model, "C3", 0.0, math.pi / 2, xs, grid, 2, seed)
    res.checks.append(_within("C3 proxy at eps = pi/2", lb.proxy, 0.5, 0.01))
    fl = [make_bump_function(0.0, 0.5, 1.0, T1), clamped_distance_function(0.0, T1),
          TestFunction(lambda x: 0.5 * np.cos(np.asarray(x)[..., 0]), 0.5, 0.5, "cos/2")]
    me = probes.weak_star_mean_ergodicity_check(model, xs[:3], fl, grid, 2, seed)
    pt = probes.pt_convergence_check(model, xs[:3], fl, grid, 2, seed)
    res.checks.append(Check("Cesàro averages agree across starts (supported)", me.proxy, 0.05,
                            None, "<", me.verdict == probes.SUPPORTED, me.verdict))
    res.checks.append(Check("P_t convergence refuted", pt.proxy, 0.05, None, ">",
                            pt.verdict == probes.REFUTED, pt.verdict))
    return res


def _property_checks(seed):
    checks = []
    g = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 10])))
    for sp in (Euclidean(2), Torus(2), Product([Euclidean(1), Torus(1)])):
        x, y, z = (g.uniform(-7, 7, (500, sp.dim)) for _ in range(3))
        dxx = float(np.max(np.abs(sp.distance(x, x))))
        sym = float(np.max(np.abs(sp.distance(x, y) - sp.distance(y, x))))
        tri = float(np.max(sp.distance(x, z) - sp.distance(x, y) - sp.distance(y, z)))
        checks.append(_below(f"{sp.kind}: metric axioms (max violation)", max(dxx, sym, tri),
                             1e-12, strict=False))
    worst_order, worst_w1 = -1.0, -1.0
    for _ in range(40):
        a = g.normal(size=(g.integers(1, 10), 1))
        b = g.normal(size=(g.integers(1, 10), 1)) * 2
        mu = EmpiricalMeasure(a, g.uniform(0.1, 1, len(a)), R1).normalized()
        nu = EmpiricalMeasure(b, g.uniform(0.1, 1, len(b)), R1).normalized()
        ex = dual_lipschitz_distance(mu, nu, mode="exact_small").value
        dc = dual_lipschitz_distance(mu, nu, mode="dictionary").value
        worst_order = max(worst_order, dc - ex)
        worst_w1 = max(worst_w1, ex - min(wasserstein1_line(mu, nu), 2 * total_variation(mu, nu)))
    checks.append(_below("dictionary lower bound <= exact (max excess)", worst_order, 1e-9,
                         strict=False))
    checks.append(_below("exact <= min(W1, 2 TV) (max excess)", worst_w1, 1e-9, strict=False))
    chain = chains.integer_chain(60)
    rs = chain.row_sums()
    checks.append(_below("uniformized jump matrix row sums <= 1", float(rs.max()) - 1.0, 1e-12,
                         strict=False))
    tol = 1e-10
    ck = 0.0
    for i in (0, 1, 5, 7, -3):
        s, t = 1.3, 2.2
        direct = chains.uniformized_transition(chain, i, s + t, tol)
        first = chains.uniformized_transition(chain, i, s, tol)
        comp = np.zeros_like(direct.vector)
        for j, m in zip(chain.states, first.vector):
            if m > 0:
                comp += m * chains.uniformized_transition(chain, int(j), t, tol).vector
        ck = max(ck, float(np.max(np.abs(comp - direct.vector))))
    checks.append(_below("Chapman-Kolmogorov max deviation", ck, 1e-8, strict=False))
    sysm = ifs.ex5_ifs_times_rotation(1.0)
    tr = ifs.simulate(sysm, [0.5, 1.0], 30.0, seed)
    dev = max(float(np.max(np.abs(tr.state_at(float(t)) - s)))
              for t, s in zip(tr.jump_times, tr.states))
    ens = ifs.simulate_ensemble(sysm, [0.5, 1.0], 30.0, 4, seed).trajectory(0)
    same = np.array_equal(ens.jump_times, tr.jump_times) and np.array_equal(ens.states, tr.states)
    checks.append(Check("trajectory re-evaluation at jump times is bit-exact", dev, 0.0, None,
                        "==", dev == 0.0))
    checks.append(Check("single trajectory equals ensemble row 0", float(same), 1.0, None, "==",
                        bool(same)))
    return checks


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9]


def _run_one(fn, seed, quick):
    t0 = time.perf_counter()
    try:
        res = fn(seed, quick)
    except Exception as exc:
        num = int(fn.__name__.rsplit("_", 1)[1])
        res = CriterionResult(num, fn.__name__, 0, error=f"{type(exc).__name__}: {exc}")
    res.runtime_s = time.perf_counter() - t0
    return res


def payload(results) -> list:
    """Everything deterministic about a run: checks without runtimes."""
    return [{"number": r.number, "error": r.error,
             "checks": [asdict(c) for c in r.checks]} for r in results]


def digest(results) -> str:
    return hashlib.sha256(json.dumps(payload(results), sort_keys=True).encode()).hexdigest()


@dataclass
class AcceptanceReport:
    seed: int
    quick: bool
    results: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def lines(self) -> list[str]:
        return [r.line() for r in self.results]

    def to_dict(self) -> dict:
        return probes._json_ready({
            "seed": self.seed, "quick": self.quick, "passed": self.passed,
            "criteria": [dict(number=r.number, title=r.title, passed=r.passed,
                              runtime_s=r.runtime_s, budget_s=r.budget_s, error=r.error,
                              checks=[asdict(c) for c in r.checks]) for r in self.results]})


def run_acceptance(seed: int = DEFAULT_SEED, quick: bool = False, only=None,
                   rerun: bool = True, progress=None) -> AcceptanceReport:
    """Run the criteria (``only`` restricts to a set of numbers).

    Criterion 10 needs the first-run digest of criteria 1-9 and reruns them
    when ``rerun`` is set.
    """
    wanted = set(range(1, 11)) if only is None else set(only)
    results = []
    for fn in CRITERIA:
        num = int(fn.__name__.rsplit("_", 1)[1])
        if num in wanted:
            results.append(_run_one(fn, seed, quick))
            if progress:
                progress(results[-1].line())
    if 10 in wanted:
        t0 = time.perf_counter()
        c10 = CriterionResult(10, "property suites and seed determinism", 120)
        try:
            c10.checks.extend(_property_checks(seed))
            if rerun:
                first = [r for r in results if r.number <= 9]
                again = [_run_one(fn, seed, quick) for fn in CRITERIA
                         if int(fn.__name__.rsplit("_", 1)[1]) in {r.number for r in first}]
                same = digest(first) == digest(again)
                c10.checks.append(Check("criteria 1-9 payload identical across two runs",
                                        float(same), 1.0, None, "==", same,
                                        digest(first)[:16]))
        except Exception as exc:
            c10.error = f"{type(exc).__name__}: {exc}"
        c10.runtime_s = time.perf_counter() - t0
        results.append(c10)
        if progress:
            progress(c10.line())
    return AcceptanceReport(seed, quick, results)
