"""Property suite behind ``blowuplab verify``.

Each check returns a Check; the suite passes iff all of them pass.  The
options ``epsilon="printed"`` and ``perturb_table`` exist to demonstrate
that the corresponding checks discriminate.
"""
from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import analysis, heun, io, presets, runner
from .evolve import evolve, make_initial_data
from .model import (D_MAX, D_MIN, Kind, ModelSpec, PotentialMismatch, SimilarityProfile, energy,
                    potential_V, printed_ym_potential, profile_residual)
from .shooting import shooting_wronskian

ALL_CELLS = [ModelSpec(k, d) for k in (Kind.WM, Kind.YM) for d in range(D_MIN, D_MAX + 1)]
TABLE_CELLS = [m for m in ALL_CELLS if m.d <= 8]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


# ---------------------------------------------------------------- model-core

def check_profiles() -> Check:
    worst, where = 0.0, None
    for m in ALL_CELLS:
        prof = SimilarityProfile.of(m)
        y = np.linspace(1e-3, 1.0, 1000)
        res = profile_residual(m, prof.phi, y, prof.dphi, prof.d2phi)
        if res > worst:
            worst, where = res, m
    return Check("profile ODE residual", worst <= 1e-10,
                 f"max {worst:.2e} (at {where}) over {len(ALL_CELLS)} cells, tol 1e-10; YM d=9 parameters are extrapolated")


def check_potential() -> Check:
    y = np.linspace(1e-3, 1.0, 1000)
    failures = []
    for m in ALL_CELLS:
        try:
            potential_V(m, y, tol=1e-12)
        except PotentialMismatch as exc:
            failures.append(f"{m}: {exc}")
    # the coefficients as typeset must be rejected by the same comparison
    rejected = 0
    for d in range(D_MIN, D_MAX + 1):
        m = ModelSpec(Kind.YM, d)
        good = potential_V(m, y)
        if np.max(np.abs(printed_ym_potential(d, y) - good) / np.maximum(1, np.abs(good))) > 1e-12:
            rejected += 1
    ok = not failures and rejected == D_MAX - D_MIN + 1
    detail = f"rational form equals f'(phi0)/y^2 to 1e-12 on all cells; typeset YM coefficients rejected in {rejected}/7 dims"
    if failures:
        detail = "; ".join(failures)
    return Check("potential V dual computation", ok, detail)


# ---------------------------------------------------------------- heun-spectral

def epsilon_residual(model: ModelSpec, epsilon: float | None, lams=(-0.3, -1.3, 0.4)) -> float:
    """Worst scaled residual of the eigenvalue equation for back-mapped
    anchor-0 solutions at non-eigenvalue lambdas."""
    y = np.linspace(0.05, 0.95, 91)
    worst = 0.0
    for lam in lams:
        v, dv, d2v = heun.eigenfunction_derivatives(model, lam, y, epsilon)
        res = heun.eigen_residual(model, lam, y, v, dv, d2v)
        scale = np.abs(d2v) + np.abs(dv) / y + np.abs(v) / y**2 + 1.0
        worst = max(worst, float(np.max(np.abs(res) / scale)))
    return worst


def check_epsilon(mode: str = "fuchs") -> Check:
    lines, ok = [], True
    for m in ALL_CELLS:
        s = heun.heun_setup(m, 0.0)
        eps = None if mode == "fuchs" else heun.printed_epsilon(m)
        res = epsilon_residual(m, eps)
        passed = res <= 1e-8
        ok &= passed
        if m.kind is Kind.WM or not passed:
            lines.append(f"{m}: eps={s.epsilon if eps is None else eps:g} residual {res:.1e}")
    detail = (f"epsilon from {'Fuchs relation' if mode == 'fuchs' else 'typeset d/2 (WM)'}; "
              "typeset WM value d/2 violates the Fuchs relation; " + ", ".join(lines[:4]) + ", ...")
    return Check("epsilon resolution (back-map residual)", ok, detail)


def check_gauge() -> Check:
    worst_w, worst_v = 0.0, 0.0
    y = np.linspace(0.0, 0.98, 99)
    for m in ALL_CELLS:
        worst_w = max(worst_w, abs(heun.wronskian(m, 1.0)))
        worst_v = max(worst_v, float(np.max(np.abs(heun.eigenfunction_backmap(m, 1.0, y) - heun.gauge_mode(m, y)))))
    return Check("gauge mode lambda=1", worst_w <= 1e-10 and worst_v <= 1e-10,
                 f"max |W(1)| {worst_w:.1e}, max |v - y phi0'| {worst_v:.1e} over {len(ALL_CELLS)} cells, tol 1e-10")


def check_table(perturb: float = 0.0) -> tuple[Check, dict]:
    worst, bad, spectra = 0.0, [], {}
    t0 = time.perf_counter()
    for m in TABLE_CELLS:
        spec = heun.find_eigenvalues(m, (-7.0, 1.5), 0.05)
        spectra[m] = spec
        table = list(io.reference_eigenvalues(m.kind.value, m.d))
        if perturb and m == ModelSpec(Kind.WM, 4):
            table[1] += perturb
        rows = runner.compare_with_table(spec.values, table, spec.scan_window)
        devs = [r["abs_dev"] if r["abs_dev"] is not None else math.inf for r in rows]
        worst = max(worst, max(devs))
        if any(not r["ok"] for r in rows):
            bad.append(str(m))
    elapsed = time.perf_counter() - t0
    detail = f"max |dlambda| {worst:.1e} over 12 cells x 5 values, tol {runner.TABLE_TOL:g}; {elapsed:.1f}s"
    if perturb:
        detail += f"; table entry WM4 n=1 perturbed by {perturb:g}"
    if bad:
        detail += f"; mismatch in {', '.join(bad)}"
    return Check("spectrum vs reference tables", not bad, detail), spectra


def shooting_roots(model: ModelSpec, window=(-7.0, 1.5), step=0.05) -> list[float]:
    from scipy.optimize import brentq

    grid = heun.scan_grid(window, step)
    vals = [shooting_wronskian(model, l) for l in grid]
    roots = []
    for i in range(len(grid)):
        if vals[i] == 0:
            roots.append(float(grid[i]))
        elif i + 1 < len(grid) and vals[i] * vals[i + 1] < 0:
            roots.append(brentq(lambda l: shooting_wronskian(model, l), grid[i], grid[i + 1], xtol=1e-9))
    return sorted(roots, reverse=True)


def check_dual(spectra: dict | None = None, cells=None) -> Check:
    cells = cells or TABLE_CELLS
    worst, bad = 0.0, []
    for m in cells:
        hv = spectra[m].values if spectra and m in spectra else heun.find_eigenvalues(m).values
        sv = shooting_roots(m)
        if len(hv) != len(sv):
            bad.append(f"{m}: {len(hv)} Heun vs {len(sv)} shooting roots")
            continue
        dev = max(abs(a - b) for a, b in zip(hv, sv))
        worst = max(worst, dev)
        if dev > 1e-4:
            bad.append(f"{m}: dev {dev:.1e}")
    detail = f"root sets match one-to-one, max |dlambda| {worst:.1e} over {len(cells)} cells, tol 1e-4"
    if bad:
        detail = "; ".join(bad)
    return Check("dual-method spectral agreement", not bad, detail)


# ---------------------------------------------------------------- blowup-evolver

def _solution_at(config, t_end, adapt=30):
    _, st = evolve(make_initial_data(config, adapt), config, t_end=t_end)
    return st


def check_zero() -> Check:
    cfg = presets.get("wm4-zero").config()
    st = _solution_at(cfg, 2.0)
    m = float(max(np.max(np.abs(st.u)), np.max(np.abs(st.ut))))
    return Check("zero data stays zero", m <= 1e-12, f"max |u|, |u_t| = {m:.1e} at t=2, tol 1e-12")


def refinement_errors(name="wm4-gauss-C", t_end=0.2, ns=(129, 257, 513), n_ref=2049):
    base = presets.get(name).config()
    rr = np.linspace(0.0, 3.0, 3001)
    ref = _solution_at(base.with_(n_nodes=n_ref), t_end)
    uref = CubicSpline(ref.r, ref.u)(rr)
    errs = []
    for n in ns:
        st = _solution_at(base.with_(n_nodes=n), t_end)
        errs.append(float(np.max(np.abs(CubicSpline(st.r, st.u)(rr) - uref))))
    return errs


def check_refinement() -> Check:
    errs = refinement_errors()
    ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
    order = math.log2(ratios[-1])
    return Check("mesh refinement order", min(ratios) >= 3.5,
                 f"wm4-gauss-C at t=0.2 (T~0.278), n=129/257/513 vs 2049: errors "
                 + ", ".join(f"{e:.1e}" for e in errs)
                 + f"; ratios {', '.join(f'{r:.2f}' for r in ratios)} (>= 3.5), order {order:.2f}")


def energy_drift(n_nodes=1025, t_end=10.0) -> float:
    cfg = presets.get("wm4-small").config(n_nodes=n_nodes, snapshot_stride=25)
    traj, st = evolve(make_initial_data(cfg), cfg, t_end=t_end)
    snaps = traj.snapshots + [st.snapshot()]
    e = np.array([energy(sn, cfg.model) for sn in snaps])
    return float(np.max(np.abs(e - e[0])) / e[0]), float(max(traj.max_ur))


def check_energy() -> Check:
    drift, mx = energy_drift()
    return Check("energy conservation (dispersive run)", drift <= 1e-4,
                 f"wm4-small (A=0.01), n=1025, t in [0, 10]: max relative drift {drift:.1e} (tol 1e-4), max|u_r| {mx:.3g}")


def scaling_error(L=2.0, t_end=0.1) -> float:
    c1 = presets.get("wm4-gauss-A").config()
    c2 = c1.with_(A=c1.A / L, sigma=c1.sigma * L, R=c1.R * L)
    s1 = _solution_at(c1, t_end)
    s2 = _solution_at(c2, L * t_end)
    rr = np.linspace(0.0, 3.0, 3001)
    return float(np.max(np.abs(CubicSpline(s2.r, s2.u)(L * rr) - CubicSpline(s1.r, s1.u)(rr))))


def check_scaling() -> Check:
    err = scaling_error()
    return Check("scaling equivariance", err <= 1e-3,
                 f"u0(r/2) evolved to t=0.2 vs u0(r) to t=0.1: max diff {err:.1e} (tol 1e-3)")


def seed_run(kind="wm", d=4):
    pr = presets.get(f"{kind}{d}-selfsimilar")
    cfg = pr.config()
    traj, _ = evolve(make_initial_data(cfg), cfg)
    s = traj.series()
    T = analysis.estimate_blowup_time(s["t"], s["origin"], pr.model.parity)
    sup = analysis.supnorm_series(traj, T, pr.model)
    # decades of the length scale T - t; the observable grows like (T - t)^-p
    decades = math.log10(abs(s["origin"][-1] / s["origin"][0])) / pr.model.parity
    return T, sup, decades, traj


def check_seed() -> Check:
    T, sup, decades, _ = seed_run()
    worst = max(v for _, v in sup)
    ok = worst <= 1e-2 and decades >= 6 and abs(T - 1.0) <= 1e-3
    return Check("self-similar seed fidelity", ok,
                 f"sup|U - phi0| <= {worst:.1e} over {decades:.2f} decades of focusing; T_est - 1 = {T - 1:.1e}")


def blowup_time_consistency(name="wm4-gauss-A"):
    """(T_est - t_stop) in units of the final scale, and relative change of
    T_est when only the last half decade of growth is fitted."""
    pr = presets.get(name)
    cfg = pr.config()
    traj, _ = evolve(make_initial_data(cfg), cfg)
    s = traj.series()
    p = pr.model.parity
    T = analysis.estimate_blowup_time(s["t"], s["origin"], p)
    T_late = analysis.estimate_blowup_time(s["t"], s["origin"], p, decades=0.5)
    scale = (SimilarityProfile.of(pr.model).origin_coefficient / abs(s["origin"][-1])) ** (1 / p)
    return (T - s["t"][-1]) / scale, abs(T_late - T) / T


def check_blowup_time() -> Check:
    gap, shift = blowup_time_consistency()
    ok = 0 < gap <= 10 and shift <= 1e-6
    return Check("blowup-time consistency", ok,
                 f"wm4-gauss-A: T_est - t_stop = {gap:.3f} x final scale (<= 10); "
                 f"late-window refit shifts T_est by {shift:.1e} relative (<= 1e-6)")


def check_determinism() -> Check:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        for run in ("a", "b"):
            runner.cmd_profile(io.parse_config("profile", {"model": "ym", "d": 8}), tmp / run / "profile")
            runner.cmd_spectrum(io.parse_config("spectrum", {"model": "wm", "d": 4, "window": [-1, 1.5]}),
                                tmp / run / "spectrum")
            runner.cmd_evolve(io.parse_config("evolve", {"preset": "wm4-gauss-A", "n_nodes": 257}),
                              tmp / run / "evolve", raw_keys=("preset", "n_nodes"))
        files = sorted(p.relative_to(tmp / "a") for p in (tmp / "a").rglob("*")
                       if p.is_file() and p.name != "manifest.json")
        diff = [str(f) for f in files if not filecmp.cmp(tmp / "a" / f, tmp / "b" / f, shallow=False)]
    return Check("determinism", not diff and bool(files),
                 f"{len(files)} data files byte-identical across repeated runs" if not diff else f"differ: {diff}")


def write_overlays(out_dir, cells=(("wm", 4),)) -> list[Path]:
    """CSV overlays of U(s, .) against phi0 for the A presets."""
    paths = []
    for kind, d in cells:
        cfg = io.parse_config("evolve", {"preset": f"{kind}{d}-gauss-A", "snapshot_files": 0})
        runner.cmd_evolve(cfg, Path(out_dir) / f"{kind}{d}-gauss-A", raw_keys=("preset",))
        paths.append(Path(out_dir) / f"{kind}{d}-gauss-A" / "overlay.csv")
    return paths


# ---------------------------------------------------------------- suite

def _timed(fn: Callable[[], Check]) -> Check:
    t0 = time.perf_counter()
    c = fn()
    c.seconds = time.perf_counter() - t0
    return c


def run_suite(epsilon: str = "fuchs", perturb_table: float = 0.0, quick: bool = False, out_dir=None,
              echo: Callable[[str], None] | None = None) -> list[Check]:
    checks: list[Check] = []

    def add(fn):
        c = _timed(fn)
        checks.append(c)
        if echo:
            echo(c.line())
        return c

    add(check_profiles)
    add(check_potential)
    add(lambda: check_epsilon(epsilon))
    add(check_gauge)
    holder = {}

    def table():
        c, holder["spectra"] = check_table(perturb_table)
        return c

    add(table)
    add(lambda: check_dual(holder.get("spectra"),
                           cells=[ModelSpec(Kind.WM, 4), ModelSpec(Kind.YM, 6)] if quick else None))
    add(check_zero)
    add(check_seed)
    add(check_blowup_time)
    add(check_energy)
    add(check_scaling)
    add(check_refinement)
    if not quick:
        add(check_determinism)
    if out_dir is not None:
        def overlays():
            paths = write_overlays(out_dir)
            return Check("similarity overlays written", all(p.is_file() for p in paths),
                         ", ".join(str(p) for p in paths))
        add(overlays)
    return checks
