"""Command-line experiment runner.

``harnack-lab run <config|preset> [--jobs N] [--out DIR]`` executes one
experiment and writes ``summary.json``, ``margins.csv``, ``series.csv`` and
SVG plots.  Exit status: 0 every check passes, 1 some margin is below
``-tolerance``, 2 configuration or hypothesis-audit error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import action, closed_forms, estimates, flow, pde, svg
from .config import ExperimentConfig, defaults_table, expand_sweep, parse_config
from .errors import (ConfigError, CurveError, DomainError, GridError, HarnackLabError, HypothesisError,
                     NotSteadyError, PositivityError, PotentialError, SolverDivergence, CFLError)
from .fields import GridSpec, ScalarField
from .pde import SolverConfig
from .potentials import (PotentialSpec, audit_comparison, audit_flow, audit_hypotheses, audit_porous)
from .report import EstimateReport

FLOOR = 1e-30
EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
NUMERICAL_ERRORS = (SolverDivergence, CFLError, PositivityError, CurveError, NotSteadyError, FloatingPointError)
CONFIG_ERRORS = (ConfigError, GridError, PotentialError, DomainError, ValueError)


@dataclass
class Outcome:
    """What an experiment produced: verdict reports plus time series for ``series.csv`` and plots."""

    reports: list = field(default_factory=list)
    series_header: list = field(default_factory=list)
    series: list = field(default_factory=list)
    plots: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    audit: dict | None = None


@dataclass
class RunSummary:
    config: dict
    status: str
    exit_code: int
    checks: list
    min_margin: float | None
    artifacts: list
    wall_clock: float
    incomplete: bool = False
    error: str | None = None
    audit: dict | None = None
    children: list = field(default_factory=list)

    def as_dict(self) -> dict:
        d = {
            "name": self.config.get("estimate", {}).get("name"),
            "experiment": self.config.get("estimate", {}).get("experiment"),
            "status": self.status,
            "exit_code": self.exit_code,
            "min_margin": self.min_margin,
            "checks": self.checks,
            "incomplete": self.incomplete,
            "error": self.error,
            "audit": self.audit,
            "artifacts": self.artifacts,
            "config": self.config,
        }
        if self.children:
            d["children"] = self.children
        return d


# -- building blocks ------------------------------------------------------------------------

def build_grid(cfg: ExperimentConfig) -> GridSpec:
    g = cfg.values["grid"]
    return GridSpec.cube(g["dim"], g["extent"], g["count"], g["topology"])


def build_potential(cfg: ExperimentConfig, section: str) -> PotentialSpec:
    dim = cfg.get("grid", "dim")
    if section not in cfg.values:
        return PotentialSpec.zero(dim)
    u = cfg.values[section]
    fam = u["family"]
    if fam == "zero":
        U = PotentialSpec.zero(dim)
    elif fam == "quadratic":
        U = PotentialSpec.quadratic(dim, u["a"], u["b"], u["c"])
    elif fam == "constant":
        U = PotentialSpec.constant(dim, u["value"])
    elif fam == "gaussian_bump":
        U = PotentialSpec.gaussian_bump(dim, u["amplitude"], u["center"] or (0.0,), u["width"])
    else:
        period = u["period"] if u["period"] is not None else cfg.get("grid", "extent")
        U = PotentialSpec.trig(dim, u["amplitudes"], u["modes"], period, u["phases"])
    if u["offset"]:
        U = U + PotentialSpec.constant(dim, u["offset"])
    return U


def sharp_k(cfg: ExperimentConfig) -> float:
    """``k`` of the quadratic drift ``U1 = -k|x|^2/2`` (0 for the zero potential)."""
    u = cfg.values["u1"]
    return -u["a"] if u["family"] == "quadratic" else 0.0


def initial_datum(cfg: ExperimentConfig, grid: GridSpec, t0: float) -> ScalarField:
    sol = cfg.values["solver"]
    x = grid.coords()
    kind = sol["initial"]
    if kind == "fund":
        vals = closed_forms.gaussian_like_solution(grid.dim, sharp_k(cfg), t0, x)
    elif kind == "heat":
        vals = closed_forms.heat_kernel(grid.dim, t0, x)
    elif kind == "barenblatt":
        vals = closed_forms.barenblatt(grid.dim, cfg.get("estimate", "m"), t0, x, sol["barenblatt_c"])
    elif kind == "cosine":
        vals = np.full(grid.shape, sol["base"])
        for amp, mode in zip(sol["amplitudes"], sol["modes"]):
            vals = vals + amp * np.cos(2 * np.pi * (x @ (np.asarray(mode, float) / np.asarray(grid.extent))))
    else:
        vals = np.full(grid.shape, sol["base"])
    return ScalarField(grid, np.maximum(vals, FLOOR))


def solver_config(cfg: ExperimentConfig, t_end: float, snapshots=()) -> SolverConfig:
    sol = cfg.values["solver"]
    return SolverConfig(scheme=sol["scheme"], dt=sol["dt"], t_start=sol["t_start"], t_end=t_end,
                        snapshots=tuple(s for s in snapshots if s < t_end))


def linear_trajectory(cfg: ExperimentConfig, grid, U1, U2, times) -> pde.Trajectory:
    """Snapshots at ``times`` from the closed form or a solve from ``t_start``."""
    times = sorted(set(float(t) for t in times))
    if cfg.get("solver", "source") == "closed_form":
        k = sharp_k(cfg)
        snaps = [ScalarField(grid, closed_forms.gaussian_like_solution(grid.dim, k, t, grid.coords())) for t in times]
        return pde.Trajectory(times, snaps, "linear", {"U1": U1, "U2": U2})
    t0 = cfg.get("solver", "t_start")
    rho0 = initial_datum(cfg, grid, t0)
    return pde.solve_linear(rho0, U1, U2, solver_config(cfg, max(times), times))


def resolve_k(cfg, audit, field_name) -> float:
    k = cfg.get("estimate", "k")
    return getattr(audit, field_name) if k == "auto" else float(k)


def _equality_companion(r: EstimateReport) -> EstimateReport:
    """Two-sided version of a report: passes iff every checked ``|margin| <= tolerance``."""
    return EstimateReport(r.name + "_equality", dict(r.params), -np.abs(r.margin), r.locations, r.mask, r.tolerance,
                          r.observed, r.bound, dict(r.excluded))


def _scalar_report(name, params, margins, times, tolerance) -> EstimateReport:
    m = np.asarray(margins, float)
    return EstimateReport(name, params, m, np.asarray(times, float).reshape(-1, 1), np.ones(m.size, bool), tolerance)


def _finish(cfg, reports):
    if cfg.get("estimate", "expect") == "equality":
        reports = reports + [_equality_companion(r) for r in reports if not r.name.endswith("_equality")]
    return reports


def _min_series(reports):
    rows = []
    for r in reports:
        t = r.params.get("t")
        rows.append([r.name, t, r.min_margin, r.max_abs_margin, int(r.passed)])
    return ["check", "t", "min_margin", "max_abs_margin", "pass"], rows


def _margin_plot(reports, title):
    groups = {}
    for r in reports:
        if "t" in r.params and r.checked:
            groups.setdefault(r.name, []).append((r.params["t"], r.min_margin))
    lines = {name: sorted(pts) for name, pts in groups.items() if len(pts) > 1}
    return [("margins.svg", title, "t", "min margin", lines)] if lines else []


# -- experiments ------------------------------------------------------------------------------

def run_liyau(cfg: ExperimentConfig, matrix: bool = False) -> Outcome:
    grid = build_grid(cfg)
    U1, U2 = build_potential(cfg, "u1"), build_potential(cfg, "u2")
    est = cfg.values["estimate"]
    audit = audit_hypotheses(U1, U2, grid, 0.0)
    k = resolve_k(cfg, audit, "k_min_hessian" if matrix else "k_min_laplacian")
    audit = audit_hypotheses(U1, U2, grid, k)
    ok = audit.hessian_ok if matrix else audit.laplacian_ok
    if not ok:
        raise HypothesisError(f"audit fails for k = {k:g}", audit)
    reports = []
    tol = est["tolerance"]
    if "stencil" in est["derivatives"]:
        traj = linear_trajectory(cfg, grid, U1, U2, est["times"])
        for t in est["times"]:
            if matrix:
                reports.append(estimates.check_matrix_li_yau(traj, U1, k, t, U2=U2, tolerance=tol))
            else:
                reports.append(estimates.check_li_yau(traj, U1, k, t, U2=U2, tolerance=tol))
    if "analytic" in est["derivatives"]:
        pts = grid.points()[grid.interior_mask(2).ravel()]
        for t in est["times"]:
            fn = estimates.check_matrix_li_yau_sharp if matrix else estimates.check_li_yau_sharp
            reports.append(fn(grid.dim, k, t, pts, tolerance=tol))
    reports = _finish(cfg, reports)
    header, rows = _min_series(reports)
    return Outcome(reports, header, rows, _margin_plot(reports, cfg.name), audit=audit.as_dict())


def _harnack_pairs(cfg, grid, k, s, t):
    est = cfg.values["estimate"]
    rng = np.random.default_rng(est["pair_seed"])
    count, n = est["pair_count"], grid.dim
    if est["pairs"] == "characteristic":
        ys = rng.uniform(-est["pair_radius"], est["pair_radius"], size=(count, n))
        xs = ys * (math.sinh(k * s) / math.sinh(k * t) if k > 0 else s / t)
        return np.stack([xs, ys], 1)
    lo = np.asarray(grid.origin) + 3 * np.asarray(grid.spacing)
    hi = np.asarray(grid.origin) + np.asarray(grid.extent) - 3 * np.asarray(grid.spacing)
    if not grid.periodic:
        lo = np.maximum(lo, -est["pair_radius"])
        hi = np.minimum(hi, est["pair_radius"])
    xs = rng.uniform(lo, hi, size=(count, n))
    ys = xs + est["pair_spread"] * rng.normal(size=(count, n))
    if not grid.periodic:
        ys = np.clip(ys, lo, hi)
    return np.stack([xs, ys], 1)


def run_harnack(cfg: ExperimentConfig) -> Outcome:
    grid = build_grid(cfg)
    U1, U2 = build_potential(cfg, "u1"), build_potential(cfg, "u2")
    est = cfg.values["estimate"]
    audit = audit_hypotheses(U1, U2, grid, 0.0)
    k = resolve_k(cfg, audit, "k_min_laplacian")
    audit = audit_hypotheses(U1, U2, grid, k)
    if not (audit.laplacian_ok and audit.bounded_below):
        raise HypothesisError(f"audit fails for k = {k:g}", audit)
    s, t = est["s"], est["t"]
    traj = linear_trajectory(cfg, grid, U1, U2, [s, t])
    pairs = _harnack_pairs(cfg, grid, k, s, t)
    r = estimates.check_harnack(traj, U1, k, s, t, pairs, U2=U2, nodes=est["nodes"], tolerance=est["tolerance"])
    reports = _finish(cfg, [r])
    header = ["pair", "x", "y", "lhs", "rhs", "margin"]
    d = grid.dim
    rows = [[i, " ".join(repr(float(v)) for v in r.locations[i, :d]),
             " ".join(repr(float(v)) for v in r.locations[i, d:]), r.observed[i], np.asarray(r.bound)[i], r.margin[i]]
            for i in range(r.margin.size)]
    return Outcome(reports, header, rows, audit=audit.as_dict())


def run_cheeger_yau(cfg: ExperimentConfig) -> Outcome:
    grid = build_grid(cfg)
    U1, U2 = build_potential(cfg, "u1"), build_potential(cfg, "u2")
    est = cfg.values["estimate"]
    audit = audit_hypotheses(U1, U2, grid, 0.0)
    k = resolve_k(cfg, audit, "k_min_laplacian")
    audit = audit_hypotheses(U1, U2, grid, k)
    if not (audit.laplacian_ok and audit.bounded_below):
        raise HypothesisError(f"audit fails for k = {k:g}", audit)
    t = est["t"]
    x0 = est["x0"] or (0.0,) * grid.dim
    if cfg.get("solver", "source") == "closed_form":
        kernel = ScalarField(grid, closed_forms.gaussian_like_solution(grid.dim, sharp_k(cfg), t,
                                                                       grid.coords() - np.asarray(x0)))
    else:
        sol = cfg.values["solver"]
        kernel = pde.fundamental_solution_approx(x0, t, U1, U2, grid, SolverConfig(scheme=sol["scheme"], dt=sol["dt"]),
                                                 sol["sigma0"])
    r = estimates.check_cheeger_yau(kernel, x0, U1, k, t, U2=U2, nodes=est["nodes"], tolerance=est["tolerance"])
    reports = _finish(cfg, [r])
    header = ["x", "log_kernel", "log_bound", "margin"]
    rows = [[" ".join(repr(float(v)) for v in r.locations[i]), r.observed[i], np.asarray(r.bound).ravel()[i],
             r.margin[i]] for i in np.flatnonzero(r.mask)]
    return Outcome(reports, header, rows, audit=audit.as_dict())


def run_ab(cfg: ExperimentConfig) -> Outcome:
    grid = build_grid(cfg)
    U = build_potential(cfg, "u1")
    est = cfg.values["estimate"]
    m = est["m"]
    if est["k3"] == "auto":
        k3 = 2.0 * m * audit_porous(U, grid, m, 0.0).inf_lap_U
    else:
        k3 = float(est["k3"])
    audit = audit_porous(U, grid, m, k3)
    if not audit.ok:
        raise HypothesisError(f"porous audit fails for k3 = {k3:g}", audit)
    times = sorted(est["times"])
    t0 = cfg.get("solver", "t_start")
    rho0 = initial_datum(cfg, grid, t0)
    traj = pde.solve_porous_medium(rho0, m, U, solver_config(cfg, times[-1], times))
    reports = [estimates.check_aronson_benilan(traj, m, k3, t, U=U, tolerance=est["tolerance"], band=est["band"])
               for t in times]
    reports = _finish(cfg, reports)
    header, rows = _min_series(reports)
    return Outcome(reports, header, rows, _margin_plot(reports, cfg.name),
                   audit={"inf_lap_U": audit.inf_lap_U, "k3": k3, "m": m, "ok": audit.ok})


def run_cost_compare(cfg: ExperimentConfig) -> Outcome:
    grid = build_grid(cfg)
    U1, U2 = build_potential(cfg, "u1"), build_potential(cfg, "u2")
    est = cfg.values["estimate"]
    base = audit_comparison(U1, U2, grid, 0.0)
    if est["k3"] == "auto":
        k3_lap, k3_hess = base.inf_lap_W, base.inf_hess_W
    else:
        k3_lap = k3_hess = float(est["k3"])
    audit = audit_comparison(U1, U2, grid, min(k3_lap, k3_hess))
    if not (base.inf_lap_W >= k3_lap - 1e-9 and base.inf_hess_W >= k3_hess - 1e-9):
        raise HypothesisError(f"comparison audit fails for k3 = {k3_lap:g}", audit)
    t = est["t"]
    x0 = est["x0"] or (0.0,) * grid.dim
    fn = action.CostFunctional.from_potentials(U1, U2)
    costs = action.cost_field(x0, t, fn, grid, nodes=est["nodes"])
    tol = est["tolerance"]
    reports = [action.check_laplacian_comparison(costs, k3_lap, grid.dim, t, tol),
               action.check_hessian_comparison(costs, k3_hess, t, tol)]
    reports = _finish(cfg, reports)
    header = ["x", "cost", "converged", "multiplicity"]
    rows = [[" ".join(repr(float(v)) for v in p), c, int(ok), mult]
            for p, c, ok, mult in zip(grid.points(), costs.values.values.ravel(), costs.converged.ravel(),
                                      costs.multiplicity.ravel())]
    return Outcome(reports, header, rows,
                   audit={"inf_lap_W": base.inf_lap_W, "inf_hess_W": base.inf_hess_W, "k3_laplacian": k3_lap,
                          "k3_hessian": k3_hess})


def run_flow(cfg: ExperimentConfig) -> Outcome:
    grid = build_grid(cfg)
    U = build_potential(cfg, "u1")
    f, est = cfg.values["flow"], cfg.values["estimate"]
    base = audit_flow(U, grid, 0.0)
    k = base.k_min if est["k"] == "auto" else float(est["k"])
    K = base.inf_hess_U if f["K"] == "auto" else float(f["K"])
    audit = audit_flow(U, grid, k, K)
    if not (audit.hessian_ok and audit.lower_ok):
        raise HypothesisError(f"flow audit fails for k = {k:g}, K = {K:g}", audit)
    k3 = -k * k if est["k3"] == "auto" else float(est["k3"])
    center = f["center"]
    if f["curve"] == "circle":
        curve = flow.CurveState.circle(f["radius"], f["nodes"], center)
    else:
        curve = flow.CurveState.ellipse(f["axes"][0], f["axes"][1], f["nodes"], center)
    ksharp = sharp_k(cfg)
    T = flow.circle_extinction_time(f["radius"], ksharp) if f["T"] == "auto" else float(f["T"])
    times = np.round(np.linspace(0.0, f["t_end"], f["outputs"] + 1), 12)
    if not T > times[-1]:
        raise ValueError(f"T = {T:g} must exceed the last flow time {times[-1]:g}")
    if f["density"] == "sharp":
        density = flow.SharpDensity(ksharp)
    else:
        tau0 = cfg.get("solver", "t_start") if "solver" in cfg.values else 0.0
        if "solver" not in cfg.values:
            raise ValueError("a solved ambient density needs a [solver] section")
        rho0 = initial_datum(cfg, grid, tau0)
        amb = flow.ambient_trajectory(U, rho0, tau0, T, times, solver_config(cfg, T))
        density = flow.TrajectoryDensity(amb)
    rec = flow.huisken_run(curve, U, density, T, times, f["variant"], k=k, k3=k3, K=K, dt=f["dt"])
    tol = est["tolerance"]
    q0 = abs(rec.Q[0])
    mids = 0.5 * (rec.times[1:] + rec.times[:-1])
    params = {"variant": f["variant"], "k": k, "K": K, "k3": k3, "T": T}
    reports = [_scalar_report("huisken_slope", params, -rec.slopes / q0, mids, tol)]
    if est["expect"] == "equality":
        reports.append(_scalar_report("huisken_drift", params, -np.abs(rec.Q / rec.Q[0] - 1), rec.times, tol))
        if f["density"] == "sharp":
            reports.append(_scalar_report("huisken_balance", params, -np.abs(rec.balance()) / q0, mids, tol))
    if f["curve"] == "circle" and cfg.values["u1"]["family"] in ("quadratic", "zero") and not any(center):
        dev = [np.max(np.abs(c.radii() / flow.circle_radius(f["radius"], ksharp, c.t) - 1)) for c in rec.curves]
        reports.append(_scalar_report("circle_radius", {"k": ksharp}, -np.asarray(dev), rec.times,
                                      f["radius_tolerance"]))
    header = ["t", "Q", "dissipation", "mass", "prefactor"]
    rows = [list(r) for r in zip(rec.times, rec.Q, rec.dissipation, rec.mass, rec.prefactor)]
    plots = [("q.svg", cfg.name, "t", "Q", {"Q": list(zip(rec.times, rec.Q))})]
    return Outcome(reports, header, rows, plots, rec.curves,
                   audit={"sup_hess_Vflow": audit.sup_hess_Vflow, "inf_hess_U": audit.inf_hess_U, "k": k, "K": K})


def run_volume(cfg: ExperimentConfig) -> Outcome:
    grid = build_grid(cfg)
    U1, U2 = build_potential(cfg, "u1"), build_potential(cfg, "u2")
    est, sol = cfg.values["estimate"], cfg.values["solver"]
    audit = audit_hypotheses(U1, U2, grid, 0.0)
    k3 = -audit.sup_lap_V if est["k3"] == "auto" else float(est["k3"])
    if k3 > -audit.sup_lap_V + 1e-9:
        raise HypothesisError(f"k3 = {k3:g} exceeds -sup Lap V = {-audit.sup_lap_V:g}", audit)
    t0, t1, step = sol["t_start"], sol["t_end"], sol["snapshot_step"]
    count = max(1, round((t1 - t0) / step))
    times = np.round(np.linspace(t0, t1, count + 1), 12)
    if sol["source"] == "closed_form":
        traj = linear_trajectory(cfg, grid, U1, U2, times)
    else:
        rho0 = initial_datum(cfg, grid, t0)
        traj = pde.solve_linear(rho0, U1, U2, solver_config(cfg, t1, times[1:-1]))
    rng = np.random.default_rng(est["seed_rng"])
    n, hw = grid.dim, est["seed_halfwidth"]
    if grid.periodic:
        seeds = rng.uniform(0.0, np.asarray(grid.extent), size=(est["seed_count"], n))
        volume = float(np.prod(grid.extent))
    else:
        center = np.asarray(est["x0"] or (0.0,) * n)
        seeds = center + rng.uniform(-hw, hw, size=(est["seed_count"], n))
        volume = (2 * hw) ** n
    va = flow.volume_audit(traj, seeds, t0, t1, k3, U1=U1, volume=volume, tolerance=est["tolerance"])
    tol = est["tolerance"]
    mids = 0.5 * (va.times[1:] + va.times[:-1])
    reports = [_scalar_report("volume_monotone", {"k3": k3}, -va.relative_steps, mids, tol)]
    if est["expect"] == "equality":
        reports.append(_scalar_report("volume_constant", {"k3": k3}, -np.abs(va.normalized / va.normalized[0] - 1),
                                      va.times, tol))
    header = ["t", "volume", "normalized"]
    rows = [list(r) for r in zip(va.times, va.volumes, va.normalized)]
    plots = [("volume.svg", cfg.name, "t", "normalized volume", {"normalized": list(zip(va.times, va.normalized))})]
    return Outcome(reports, header, rows, plots, audit={"sup_lap_V": audit.sup_lap_V, "k3": k3})


RUNNERS = {
    "liyau": run_liyau,
    "matrix-liyau": lambda cfg: run_liyau(cfg, matrix=True),
    "harnack": run_harnack,
    "cheeger-yau": run_cheeger_yau,
    "ab": run_ab,
    "cost-compare": run_cost_compare,
    "flow": run_flow,
    "volume": run_volume,
}


# -- outputs ------------------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_margins(path, reports):
    width = max((r.locations.shape[1] for r in reports), default=0)
    rows = []
    for r in reports:
        t = r.params.get("t")
        obs = r.observed if r.observed is not None else np.full(r.margin.size, np.nan)
        for i in range(r.margin.size):
            loc = list(r.locations[i]) + [None] * (width - r.locations.shape[1])
            rows.append([r.name, t, i, *loc, obs[i], r.margin[i], int(r.mask[i])])
    _write_rows(path, ["check", "t", "index", *[f"loc{j}" for j in range(width)], "observed", "margin", "checked"], rows)


def _json_default(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def _clean(v):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def write_summary(path, summary: RunSummary):
    with open(path, "w") as fh:
        json.dump(_clean(summary.as_dict()), fh, indent=2, default=_json_default)
        fh.write("\n")


def _output_dir(cfg: ExperimentConfig, out) -> Path:
    if out is not None:
        return Path(out)
    d = cfg.get("output", "dir") if "output" in cfg.values else None
    return Path(d) if d else Path("runs") / cfg.name


def _status(reports):
    if not reports:
        return "fail", EXIT_FAIL
    return ("pass", EXIT_PASS) if all(r.passed for r in reports) else ("fail", EXIT_FAIL)


def run(cfg: ExperimentConfig, out=None, jobs: int = 1) -> RunSummary:
    """Execute one experiment (or every child of a sweep) and write its artifacts."""
    outdir = _output_dir(cfg, out)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.experiment == "sweep":
        return _run_sweep(cfg, outdir, jobs)
    start = time.perf_counter()
    formats = cfg.get("output", "formats") if "output" in cfg.values else ("json", "csv", "svg")
    outcome, error, status, code, audit = None, None, None, None, None
    try:
        outcome = RUNNERS[cfg.experiment](cfg)
    except HypothesisError as exc:
        error, status, code = str(exc), "audit_error", EXIT_CONFIG
        audit = exc.audit.as_dict() if hasattr(exc.audit, "as_dict") else (
            exc.audit.__dict__ if exc.audit is not None else None)
    except NUMERICAL_ERRORS as exc:
        error, status, code = f"{type(exc).__name__}: {exc}", "numerical_error", EXIT_NUMERICAL
    except CONFIG_ERRORS as exc:
        error, status, code = f"{type(exc).__name__}: {exc}", "config_error", EXIT_CONFIG
    artifacts = []
    checks, min_margin = [], None
    if outcome is not None:
        status, code = _status(outcome.reports)
        audit = outcome.audit
        checks = [r.as_dict() for r in outcome.reports]
        mins = [r.min_margin for r in outcome.reports if r.checked]
        min_margin = min(mins) if mins else None
        if "csv" in formats:
            write_margins(outdir / "margins.csv", outcome.reports)
            artifacts.append("margins.csv")
            if outcome.series:
                _write_rows(outdir / "series.csv", outcome.series_header, outcome.series)
                artifacts.append("series.csv")
            if outcome.curves:
                flow.write_curves_csv(outcome.curves, outdir / "curves.csv")
                artifacts.append("curves.csv")
        if "svg" in formats:
            for fname, title, xlabel, ylabel, lines in outcome.plots:
                svg.line_plot(outdir / fname, lines, title=title, xlabel=xlabel, ylabel=ylabel)
                artifacts.append(fname)
    summary = RunSummary(cfg.echo(), status, code, checks, min_margin, artifacts, time.perf_counter() - start,
                         incomplete=outcome is None, error=error, audit=audit)
    if "json" in formats:
        summary.artifacts.append("summary.json")
        write_summary(outdir / "summary.json", summary)
    return summary


def _run_child(args):
    child, outdir = args
    s = run(child, outdir)
    return s.as_dict() | {"wall_clock": s.wall_clock}


def _run_sweep(cfg: ExperimentConfig, outdir: Path, jobs: int) -> RunSummary:
    start = time.perf_counter()
    children = expand_sweep(cfg)
    tasks = [(child, outdir / label) for label, child in children]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_child, tasks))
    else:
        results = [_run_child(t) for t in tasks]
    code = max(r["exit_code"] for r in results)
    status = {EXIT_PASS: "pass", EXIT_FAIL: "fail", EXIT_CONFIG: "config_error", EXIT_NUMERICAL: "numerical_error"}[code]
    mins = [r["min_margin"] for r in results if isinstance(r["min_margin"], float)]
    brief = [{"label": label, "status": r["status"], "exit_code": r["exit_code"], "min_margin": r["min_margin"],
              "dir": label} for (label, _), r in zip(children, results)]
    summary = RunSummary(cfg.echo(), status, code, [], min(mins) if mins else None, ["summary.json"],
                         time.perf_counter() - start, children=brief)
    write_summary(outdir / "summary.json", summary)
    return summary


# -- presets and entry point -------------------------------------------------------------------

def preset_names() -> list:
    files = resources.files("harnack_lab").joinpath("presets")
    return sorted(p.name[:-4] for p in files.iterdir() if p.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    path = resources.files("harnack_lab").joinpath("presets", f"{name}.cfg")
    if not path.is_file():
        raise FileNotFoundError(f"no preset named {name!r}")
    return path.read_text(encoding="utf-8")


def load_config(target: str) -> ExperimentConfig:
    """Parse a config file path, or a preset name when no such file exists."""
    if os.path.exists(target):
        text = Path(target).read_text(encoding="utf-8")
    else:
        text = preset_text(target[:-4] if target.endswith(".cfg") else target)
    return parse_config(text)


def run_preset(name: str, out=None, jobs: int = 1) -> RunSummary:
    return run(parse_config(preset_text(name)), out, jobs)


def _preset_description(name):
    for line in preset_text(name).splitlines():
        if line.startswith("#"):
            return line.lstrip("# ").strip()
    return ""


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="harnack-lab", description="Run estimate-checking experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a config file or a preset")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel sweep children")
    p_run.add_argument("--out", default=None, help="output directory")
    sub.add_parser("presets", help="list shipped presets")
    p_val = sub.add_parser("validate", help="check a config without running it")
    p_val.add_argument("config")
    sub.add_parser("defaults", help="print every config key with its default")
    args = parser.parse_args(argv)

    if args.command == "presets":
        for name in preset_names():
            print(f"{name:28s} {_preset_description(name)}")
        return EXIT_PASS
    if args.command == "defaults":
        for section, key, default, doc in defaults_table():
            print(f"[{section}] {key} = {default}" + (f"    # {doc}" if doc else ""))
        return EXIT_PASS
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            if cfg.experiment == "sweep":
                print(f"valid sweep with {len(expand_sweep(cfg))} children")
            else:
                print(f"valid {cfg.experiment} config {cfg.name!r}")
            return EXIT_PASS
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run(cfg, args.out, args.jobs)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HarnackLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for c in summary.checks:
        verdict = "PASS" if c["pass"] else "FAIL"
        at = f" t={c['params']['t']}" if "t" in c["params"] else ""
        print(f"{verdict} {c['name']}{at}: min margin {c['min_margin']} "
              f"(tol {c['tolerance']:.1e}, {c['checked']} checked)")
    for child in summary.children:
        print(f"{child['status'].upper()} {child['label']}: min margin {child['min_margin']}")
    if summary.error:
        print(f"error: {summary.error}", file=sys.stderr)
    print(f"{summary.status} in {summary.wall_clock:.2f} s -> {_output_dir(cfg, args.out)}")
    return summary.exit_code


if __name__ == "__main__":
    sys.exit(main())
