"""Config-driven execution of probes on a registered scenario.

A config (TOML or JSON) names a scenario, a mandatory seed, optional model
parameters and a list of probes:

    schema_version = 1
    scenario = "ex1_chain"
    seed = 7

    [[probes]]
    kind = "cesaro_gap"
    n = [2, 10, 50]

Each probe writes ``<name>.json`` (full report), ``<name>.csv`` (flat rows)
and, unless ``plots = false``, ``<name>.png``.  The manifest is written last.
Identical configs give byte-identical JSON and CSV payloads.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, ifs, probes, scenarios, sde
from .metric import (EmpiricalMeasure, Euclidean, TestFunction, clamped_distance_function,
                     constant_function, dual_lipschitz_distance, make_bump_function)
from .models import build_model

SCHEMA_VERSION = 1
OUTPUT_ENV = "CESARO_OUTPUT_ROOT"


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError([(str(path), f"cannot read: {exc}")]) from None
    try:
        if path.suffix == ".json":
            cfg = json.loads(text)
        else:
            try:
                import tomllib
            except ImportError:  # Python < 3.11
                import tomli as tomllib
            cfg = tomllib.loads(text.decode())
    except Exception as exc:
        raise ConfigError([(str(path), f"parse error: {exc}")]) from None
    validate(cfg)
    return cfg


PROBE_FIELDS = {
    "estimate_Qt": {"x", "t"},
    "cesaro_gap": {"n"},
    "lower_bound": {"which", "z", "eps"},
    "regularity": {"which", "z", "radii"},
    "decomposition": {"x_list", "t"},
    "mean_ergodicity": {"x_list"},
    "pt_convergence": {"x_list"},
    "sweep": {"box", "x_list", "t_grid"},
    "tightness": {"x", "radii"},
    "jump_law": {"n", "s"},
    "b5_series": {"x"},
    "assumptions": {"which"},
    "hopf_invariant": {"T"},
    "lorenz_plane": {"T"},
    "phase_sweep": {"nu", "c", "n_tilde"},
    "quasiperiodic": {"omega", "T"},
}


def validate(cfg: dict) -> None:
    errs = []
    if not isinstance(cfg, dict):
        raise ConfigError([("<root>", "config must be a table")])
    if cfg.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        errs.append(("schema_version", f"unsupported, expected {SCHEMA_VERSION}"))
    sid = cfg.get("scenario")
    if sid not in scenarios.SCENARIOS:
        errs.append(("scenario", f"unknown scenario id {sid!r}"))
    seed = cfg.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        errs.append(("seed", "mandatory 64-bit unsigned integer"))
    if not isinstance(cfg.get("model", {}), dict):
        errs.append(("model", "must be a table"))
    probes_cfg = cfg.get("probes", [])
    if not isinstance(probes_cfg, list):
        errs.append(("probes", "must be an array of tables"))
        probes_cfg = []
    names = set()
    for i, p in enumerate(probes_cfg):
        where = f"probes[{i}]"
        if not isinstance(p, dict):
            errs.append((where, "must be a table"))
            continue
        kind = p.get("kind")
        if kind not in PROBE_FIELDS:
            errs.append((f"{where}.kind", f"unknown probe kind {kind!r}"))
            continue
        for req in sorted(PROBE_FIELDS[kind] - set(p)):
            errs.append((f"{where}.{req}", "missing"))
        for key, val in p.items():
            if isinstance(val, list) and len(val) == 0:
                errs.append((f"{where}.{key}", "grid must be nonempty"))
        name = p.get("name", f"{i:02d}_{kind}")
        if name in names:
            errs.append((f"{where}.name", f"duplicate probe name {name!r}"))
        names.add(name)
    if errs:
        raise ConfigError(errs)


def config_hash(cfg: dict) -> str:
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode()).hexdigest()


# --------------------------------------------------------------------------
# test functions from config
# --------------------------------------------------------------------------


def build_function(spec, space) -> TestFunction:
    if spec is None:
        spec = {"kind": "clamp"}
    kind = spec.get("kind", "clamp")
    if kind == "clamp":
        return clamped_distance_function(spec.get("anchor", [0.0] * space.dim), space,
                                         spec.get("cap", 1.0), spec.get("coord"))
    if kind == "bump":
        return make_bump_function(spec.get("center", [0.0] * space.dim), spec["r_inner"],
                                  spec["r_outer"], space)
    if kind == "const":
        return constant_function(spec.get("c", 1.0))
    if kind == "cos":
        c = spec.get("coord", 0)
        return TestFunction(lambda x: 0.5 * np.cos(np.asarray(x)[..., c]), 0.5, 0.5, "cos/2")
    raise ConfigError([("function.kind", f"unknown test function {kind!r}")])


def _grid(p, key="t_grid", default=(10.0, 1.5, 12)):
    if key in p:
        return [float(t) for t in p[key]]
    t0, ratio, n = p.get("t0", default[0]), p.get("ratio", default[1]), p.get("n_t", default[2])
    return probes.geometric_grid(t0, ratio, n)


# --------------------------------------------------------------------------
# probe implementations: each returns (summary, report, rows, figure)
# --------------------------------------------------------------------------


def _condition_payload(rep, xkey="t", ykey="estimate", group="x"):
    rows = rep.evidence
    series = {}
    for r in rows:
        key = json.dumps(r.get(group))
        s = series.setdefault(key, {"label": f"{group}={r.get(group)}", "x": [], "y": [], "yerr": []})
        s["x"].append(r[xkey])
        s["y"].append(r[ykey])
        s["yerr"].append(r.get("se", 0.0))
    fig = {"kind": "lines", "xlabel": xkey, "ylabel": ykey, "logx": True,
           "series": list(series.values())}
    return rep.to_dict(), rows, fig


def run_probe(p: dict, scenario: scenarios.Scenario, model_params: dict, seed: int):
    kind = p["kind"]
    n_traj = int(p.get("n_traj", 1000))
    model = build_model(scenario.model, **model_params) if scenario.model else None
    space = model.space if model is not None else Euclidean(1)
    target = None

    if kind == "estimate_Qt":
        f = build_function(p.get("function"), space)
        est = probes.estimate_Qt(model, f, p["x"], float(p["t"]), n_traj, seed)
        summary = {"verdict": "estimate", "headline": est.value, "se": est.std_error}
        rows = [{"t": est.t, "value": est.value, "se": est.std_error}]
        return summary, {"estimate": est.__dict__}, rows, None

    if kind == "cesaro_gap":
        if model.exact_qf is None:
            raise ValueError("scenario has no exact Cesàro evaluator")
        f = build_function(p.get("function"), space)
        rows = []
        for n in p["n"]:
            gap = model.exact_qf(f, 1.0 / n, float(n)) - model.exact_qf(f, 0.0, float(n))
            rows.append({"n": int(n), "gap": gap})
        target = 1 - 2 / math.e
        worst = min(r["gap"] for r in rows)
        summary = {"verdict": "holds" if worst >= target - 1e-12 else "fails",
                   "headline": worst, "target": target}
        fig = {"kind": "lines", "xlabel": "n", "ylabel": "Q_n f(1/n) - Q_n f(0)", "hline": target,
               "series": [{"label": "exact", "x": [r["n"] for r in rows],
                           "y": [r["gap"] for r in rows]}]}
        return summary, {"rows": rows, "target": target}, rows, fig

    if kind == "lower_bound":
        rep = probes.probe_lower_bound(model, p["which"], p["z"], float(p["eps"]),
                                       p.get("x_grid", [p["z"]]), _grid(p), n_traj, seed,
                                       p.get("margin", 0.0))
        summary = {"verdict": rep.verdict, "headline": rep.proxy, "se": rep.std_error}
        return (summary, *_condition_payload(rep))

    if kind == "regularity":
        f = build_function(p.get("function"), space)
        rep = probes.probe_regularity(model, p["which"], p["z"], f, p["radii"], _grid(p),
                                      n_traj, seed, direction=p.get("direction"),
                                      tol=p.get("tol", 0.05), use_exact=p.get("exact", False))
        summary = {"verdict": rep.verdict, "headline": rep.proxy, "se": rep.std_error}
        rows = rep.evidence
        series = {}
        for r in rows:
            s = series.setdefault(r["radius"], [])
            s.append(r["gap"])
        fig = {"kind": "lines", "xlabel": "radius", "ylabel": "max gap", "logx": True,
               "series": [{"label": rep.condition, "x": list(series),
                           "y": [max(v) for v in series.values()]}]}
        return summary, rep.to_dict(), rows, fig

    if kind == "decomposition":
        rep = probes.ergodic_decomposition(model, p["x_list"], float(p["t"]), n_traj,
                                           p.get("cluster_tol", 0.05), seed,
                                           p.get("n_time_samples", 64), p.get("exact", False))
        summary = {"verdict": "EMDS violated" if rep.emds_violation else "EMDS clean",
                   "headline": len(rep.classes), "classes": rep.classes}
        rows = [{"i": i, "j": j, "distance": float(rep.distances[i, j])}
                for i in range(len(p["x_list"])) for j in range(len(p["x_list"]))]
        fig = {"kind": "matrix", "matrix": rep.distances.tolist(),
               "labels": [str(x) for x in p["x_list"]], "title": "dual-Lipschitz distances"}
        return summary, rep.to_dict(), rows, fig

    if kind in ("mean_ergodicity", "pt_convergence"):
        fl = [build_function(s, space) for s in p.get("functions", [
            {"kind": "clamp"}, {"kind": "bump", "r_inner": 0.5, "r_outer": 1.0}, {"kind": "cos"}])]
        fn = (probes.weak_star_mean_ergodicity_check if kind == "mean_ergodicity"
              else probes.pt_convergence_check)
        rep = fn(model, p["x_list"], fl, _grid(p), n_traj, seed, tol=p.get("tol", 0.05))
        summary = {"verdict": rep.verdict, "headline": rep.proxy, "se": rep.std_error}
        key = "gap" if kind == "mean_ergodicity" else "estimate"
        return (summary, *_condition_payload(rep, ykey=key, group="f" if key == "gap" else "x"))

    if kind == "sweep":
        rep = probes.sweep_check(model, p["box"], p["x_list"], p["t_grid"], n_traj, seed,
                                 use_exact=p.get("exact", False))
        summary = {"verdict": rep.verdict, "headline": rep.proxy, "se": rep.std_error}
        return (summary, *_condition_payload(rep, ykey="mass"))

    if kind == "tightness":
        rows = probes.tightness_curve(model, p["x"], p.get("anchor", [0.0] * space.dim),
                                      p["radii"], _grid(p), n_traj, seed)
        summary = {"verdict": "diagnostic", "headline": rows[-1]["outside"]}
        series = {}
        for r in rows:
            s = series.setdefault(r["R"], {"label": f"R={r['R']}", "x": [], "y": [], "yerr": []})
            s["x"].append(r["t"])
            s["y"].append(r["outside"])
            s["yerr"].append(r["se"])
        fig = {"kind": "lines", "xlabel": "t", "ylabel": "mass outside B(anchor, R)",
               "logx": True, "series": list(series.values())}
        return summary, {"rows": rows}, rows, fig

    if kind == "jump_law":
        n, lam = int(p["n"]), float(model_params.get("lam", 1.0))
        svals = [float(s) for s in p["s"]]
        ens = ifs.simulate_ensemble(model.system, 1.0 / n, max(svals), n_traj, seed)
        rows = []
        for s in svals:
            hit = (ens.state_at(s)[:, 0] == n).astype(float)
            m, se = hit.mean(), hit.std(ddof=1) / math.sqrt(n_traj)
            rows.append({"s": s, "mc": m, "se": se, "single_inversion": ifs.inversion_jump_prob(n, lam, s),
                         "exact": ifs.two_state_occupation(n, lam, s)})
        summary = {"verdict": "estimate", "headline": rows[-1]["mc"],
                   "target": rows[-1]["single_inversion"]}
        fig = {"kind": "lines", "xlabel": "s", "ylabel": f"P(state = {n})", "series": [
            {"label": "Monte Carlo", "x": svals, "y": [r["mc"] for r in rows],
             "yerr": [r["se"] for r in rows]},
            {"label": "single-inversion formula", "x": svals, "y": [r["single_inversion"] for r in rows]},
            {"label": "two-state exact", "x": svals, "y": [r["exact"] for r in rows]}]}
        return summary, {"rows": rows}, rows, fig

    if kind == "b5_series":
        rep = ifs.b5_series_check(model.system, p["x"], p.get("M", 0), p.get("gamma", 0.0),
                                  p.get("n_max", 10_000))
        summary = {"verdict": rep.verdict, "headline": rep.partial_sum, "tail": rep.tail_bound}
        rows = [{"n": i, "term": t} for i, t in enumerate(rep.terms)]
        return summary, {"partial_sum": rep.partial_sum, "tail_bound": rep.tail_bound,
                         "threshold": rep.threshold, "verdict": rep.verdict,
                         "n_terms": rep.n_terms}, rows, None

    if kind == "assumptions":
        lo, hi = p.get("range", [0.0, 5.0])
        n_pairs = int(p.get("n_pairs", 100))
        g = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        pairs = g.uniform(lo, hi, (n_pairs, 2, space.dim))
        rep = ifs.check_assumptions(model.system, pairs, p["which"])
        summary = {"verdict": "satisfied on sample" if rep.satisfied else "violated on sample",
                   "headline": rep.max_violation}
        rows = [{"pair": i, "lhs": float(a), "rhs": float(b)} for i, (a, b) in
                enumerate(zip(rep.lhs, rep.rhs))]
        return summary, {"which": rep.which, "n_pairs": rep.n_pairs, "max_violation":
                         rep.max_violation, "satisfied": rep.satisfied, "note": rep.note}, rows, None

    if kind == "hopf_invariant":
        a, b = float(model_params.get("a", 1.0)), float(model_params.get("b", 0.5))
        h = float(model_params.get("h", 0.01))
        T = float(p["T"])
        rT = sde.hopf_radial_ensemble(a, b, p.get("r0", 1.0), T, h, n_traj, seed)[:, 0]
        lam = sde.hopf_lambda_samples(a, b, n_traj, seed, h=h)
        R = Euclidean(1)
        d = dual_lipschitz_distance(EmpiricalMeasure.from_samples(rT, R),
                                    EmpiricalMeasure.from_samples(lam, R), mode="auto").value
        summary = {"verdict": "estimate", "headline": d}
        qs = np.linspace(0.01, 0.99, 99)
        rows = [{"q": float(q), "r_T": float(x), "lambda": float(y)}
                for q, x, y in zip(qs, np.quantile(rT, qs), np.quantile(lam, qs))]
        fig = {"kind": "lines", "xlabel": "quantile level", "ylabel": "radius", "series": [
            {"label": f"r({T:g})", "x": qs.tolist(), "y": [r["r_T"] for r in rows]},
            {"label": "invariant law", "x": qs.tolist(), "y": [r["lambda"] for r in rows]}]}
        return summary, {"distance": d, "T": T, "a": a, "b": b}, rows, fig

    if kind == "lorenz_plane":
        params = sde.LorenzParams(**{k: model_params[k] for k in ("sigma", "beta", "rho", "alpha")
                                     if k in model_params})
        h, T = float(model_params.get("h", 0.001)), float(p["T"])
        path = sde.lorenz_simulate([0.0, 0.0, p.get("z0", 1.0)], T, h, seed, params,
                                   n_paths=n_traj, record=[T])
        Z = path.states[:, 0, 2]
        var = float(Z.var(ddof=1))
        xy = float(np.max(np.abs(path.states[:, 0, :2])))
        summary = {"verdict": "plane preserved" if xy == 0 else "plane left", "headline": var,
                   "target": params.alpha**2 / (2 * params.beta)}
        return summary, {"variance": var, "max_abs_xy": xy, "em_variance":
                         sde.ou_em_stationary_variance(params.beta, params.alpha, h)}, \
            [{"path": i, "Z": float(z)} for i, z in enumerate(Z)], None

    if kind == "phase_sweep":
        rows = sde.phase_transition_sweep(p["nu"], float(p["c"]), int(p["n_tilde"]))
        summary = {"verdict": "diagnostic", "headline": rows[0]["support_dim"]}
        fig = {"kind": "lines", "xlabel": "viscosity", "ylabel": "support dimension", "logx": True,
               "series": [{"label": "", "x": [r["nu"] for r in rows],
                           "y": [r["support_dim"] for r in rows]}]}
        flat = [{"nu": r["nu"], "active_modes": " ".join(map(str, r["active_modes"])),
                 "support_dim": r["support_dim"]} for r in rows]
        return summary, {"rows": rows}, flat, fig

    if kind == "quasiperiodic":
        omega = [float(w) for w in p["omega"]]
        theta0 = p.get("theta0", [0.0] * len(omega))
        funcs = {"cos1": lambda x: np.cos(x[:, 0]),
                 "cos1m2": lambda x: np.cos(x[:, 0] - x[:, 1]),
                 "sin1p2": lambda x: np.sin(x[:, 0] + 2 * x[:, 1])}
        rows = []
        for name in p.get("functions", list(funcs)):
            ta = sde.quasiperiodic_average(funcs[name], theta0, omega, float(p["T"]))
            fa = sde.torus_average(funcs[name], len(omega))
            rows.append({"g": name, "time_average": ta, "torus_average": fa,
                         "difference": abs(ta - fa)})
        summary = {"verdict": "estimate", "headline": max(r["difference"] for r in rows)}
        return summary, {"rows": rows}, rows, None

    raise ValueError(f"unknown probe kind {kind!r}")


# --------------------------------------------------------------------------
# run + manifest
# --------------------------------------------------------------------------


@dataclass
class RunManifest:
    config_hash: str
    software_version: str
    scenario: str
    seed: int
    results: dict = field(default_factory=dict)
    summaries: list = field(default_factory=list)
    streams: list = field(default_factory=list)
    partial: bool = False
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _write_csv(path, rows):
    keys = []
    for r in rows:
        for k in r:
            if k not in keys:
                keys.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v)
                        for k, v in r.items()})


def _write_gnuplot(path, fig):
    """Figure data as a gnuplot ``index`` file: one block per series, or a
    plain matrix for heat maps."""
    with open(path, "w") as fh:
        if fig["kind"] == "matrix":
            fh.write(f"# {fig.get('title', '')}; labels {' '.join(fig.get('labels', []))}\n")
            for row in fig["matrix"]:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            return
        fh.write(f"# x: {fig.get('xlabel', '')}  y: {fig.get('ylabel', '')}\n")
        for i, ser in enumerate(fig["series"]):
            if i:
                fh.write("\n\n")
            fh.write(f"# index {i}: {ser.get('label') or 'series'}\n")
            err = ser.get("yerr")
            for k, (x, y) in enumerate(zip(ser["x"], ser["y"])):
                cols = [x, y] + ([err[k]] if err is not None else [])
                fh.write(" ".join(repr(float(c)) for c in cols) + "\n")


def output_root(override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV, "cesaro_output"))


def run(cfg: dict, out_dir=None, plots: bool | None = None) -> RunManifest:
    validate(cfg)
    start = time.perf_counter()
    h = config_hash(cfg)
    sc = scenarios.get(cfg["scenario"])
    out = Path(out_dir) if out_dir else output_root() / f"{sc.id}-{h[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    plots = cfg.get("plots", True) if plots is None else plots
    man = RunManifest(h, __version__, sc.id, cfg["seed"])
    params = dict(sc.defaults, **cfg.get("model", {}))
    for i, p in enumerate(cfg.get("probes", [])):
        name = p.get("name", f"{i:02d}_{p['kind']}")
        seed = int(p.get("seed", cfg["seed"]))
        man.streams.append({"probe": name, "seed": seed, "n_traj": int(p.get("n_traj", 1000))})
        try:
            summary, report, rows, fig = run_probe(p, sc, params, seed)
        except Exception as exc:  # isolate per probe
            man.partial = True
            man.summaries.append({"probe": name, "kind": p["kind"], "verdict": "error",
                                  "error": f"{type(exc).__name__}: {exc}"})
            continue
        payload = probes._json_ready({"probe": name, "kind": p["kind"], "scenario": sc.id,
                                      "seed": seed, "config": p, "summary": summary,
                                      "report": report, "software_version": __version__})
        files = [out / f"{name}.json", out / f"{name}.csv"]
        files[0].write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _write_csv(files[1], probes._json_ready(rows))
        if fig is not None:
            files.append(out / f"{name}.dat")
            _write_gnuplot(files[-1], fig)
        if plots and fig is not None:
            from . import plotting

            files.append(Path(plotting.render(fig, out / f"{name}.png")))
        man.results[name] = [str(f) for f in files]
        man.summaries.append(probes._json_ready({"probe": name, "kind": p["kind"], **summary}))
    man.wall_time = time.perf_counter() - start
    (out / "manifest.json").write_text(json.dumps(man.to_dict(), indent=2, sort_keys=True) + "\n")
    return man


def summary_table(man: RunManifest) -> str:
    sc = scenarios.get(man.scenario)
    targets = "; ".join(f"{t.name} = {t.value:.6g} [{t.kind}]" for t in sc.targets) or "property-only"
    lines = [f"scenario {sc.id}  seed {man.seed}  config {man.config_hash[:12]}",
             f"registered targets: {targets}",
             f"{'probe':<28} {'verdict':<24} {'headline':>14}  target"]
    for s in man.summaries:
        head = s.get("headline")
        head = f"{head:.6g}" if isinstance(head, (int, float)) else str(head)
        tgt = s.get("target")
        lines.append(f"{s['probe']:<28} {str(s.get('verdict')):<24} {head:>14}  "
                     f"{'' if tgt is None else format(tgt, '.6g')}"
                     + (f"  {s['error']}" if "error" in s else ""))
    return "\n".join(lines)
