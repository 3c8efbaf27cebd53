"""Command implementations behind the CLI: each writes its artifacts and a
manifest into one run directory."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, heun, io, presets
from .evolve import EvolutionConfig, EvolutionError, evolve, make_initial_data
from .model import Kind, ModelSpec, SimilarityProfile, potential_V

log = logging.getLogger(__name__)

TABLE_TOL = 1e-4


def model_of(cfg: dict) -> ModelSpec:
    return ModelSpec.parse(cfg["model"], cfg["d"])


# ---------------------------------------------------------------- profile

def profile_grid(model: ModelSpec, n_samples: int, y_max: float) -> np.ndarray:
    """Uniform grid on (0, y_max] plus landmarks: the light cone y = 1 and,
    for WM, the point y = sqrt(d-2) where phi0 reaches the equator."""
    y = y_max * np.arange(1, n_samples + 1) / n_samples
    marks = [1.0]
    if model.kind is Kind.WM:
        marks.append(math.sqrt(model.d - 2))
    extra = [m for m in marks if m <= y_max and np.min(np.abs(y - m)) > 1e-12 * y_max]
    return np.sort(np.concatenate([y, extra]))


def cmd_profile(cfg: dict, out_dir) -> dict:
    model = model_of(cfg)
    prof = SimilarityProfile.of(model)
    y = profile_grid(model, cfg["n_samples"], cfg["y_max"])
    header = [f"model={model.kind.value} d={model.d}"]
    if model.kind is Kind.YM:
        header.append(f"a={io.fmt(prof.a)} b={io.fmt(prof.b)}")
        if model.d == 9:
            header.append("note=d9_parameters_extrapolated")
    header.append(f"phi_star={io.fmt(prof.phi_star)}")
    out = Path(out_dir)
    man = io.RunManifest(out, "profile", cfg, model)
    path = io.write_csv(out / "profile.csv",
                        {"y": y, "phi0": prof.phi(y), "phi0_prime": prof.dphi(y), "V": potential_V(model, y)},
                        header)
    man.add(path)
    man.results = {"a": prof.a, "b": prof.b, "phi_star": prof.phi_star, "rows": len(y)}
    man.write()
    return man.results


# ---------------------------------------------------------------- spectrum

def compare_with_table(values: list[float], table: list[float] | None, window) -> list[dict]:
    """Side-by-side rows: each tabulated value inside ``window`` against the
    nearest computed eigenvalue."""
    if table is None:
        return []
    rows = []
    for n, ref in enumerate(table):
        if not window[0] <= ref <= window[1]:
            continue
        if values:
            got = min(values, key=lambda v: abs(v - ref))
            dev = abs(got - ref)
        else:
            got, dev = None, None
        rows.append({"n": n, "lambda_table": ref, "lambda": got, "abs_dev": dev,
                     "ok": dev is not None and dev <= TABLE_TOL})
    return rows


def spectrum_document(spec: heun.Spectrum, table) -> dict:
    comparison = compare_with_table(spec.values, table, spec.scan_window)
    return {
        "model": spec.model.kind.value,
        "d": spec.model.d,
        "window": list(spec.scan_window),
        "step": spec.scan_step,
        "eigenvalues": [
            {"lambda": e.lam, "residual": e.wronskian_residual, "bracket_lo": e.bracket[0],
             "bracket_hi": e.bracket[1], "converged": e.converged}
            for e in spec.eigenvalues
        ],
        "no_roots": spec.empty,
        "stalled_brackets": [list(b) for b in spec.stalled],
        "complex_plane_scanned": False,
        "comparison": comparison,
        "table_match": bool(comparison) and all(r["ok"] for r in comparison),
    }


def cmd_spectrum(cfg: dict, out_dir) -> dict:
    model = model_of(cfg)
    window = tuple(float(v) for v in cfg["window"])
    spec = heun.find_eigenvalues(model, window, cfg["step"], cfg["xtol"], cfg["workers"])
    table = io.reference_eigenvalues(model.kind.value, model.d)
    doc = spectrum_document(spec, table)
    out = Path(out_dir)
    man = io.RunManifest(out, "spectrum", cfg, model)
    man.add(io.write_json(out / "spectrum.json", doc))
    if doc["comparison"]:
        rows = doc["comparison"]
        man.add(io.write_csv(out / "comparison.csv", {
            "n": [r["n"] for r in rows],
            "lambda_table": [r["lambda_table"] for r in rows],
            "lambda": [np.nan if r["lambda"] is None else r["lambda"] for r in rows],
            "abs_dev": [np.nan if r["abs_dev"] is None else r["abs_dev"] for r in rows],
        }, [f"model={model.kind.value} d={model.d}"]))
    y = np.linspace(0.0, cfg["eigenfunction_y_max"], cfg["eigenfunction_samples"])
    for i, e in enumerate(spec.eigenvalues):
        v = heun.eigenfunction_backmap(model, e.lam, y)
        man.add(io.write_csv(out / f"eigenfunction_{i}.csv", {"y": y, "v": v},
                             [f"model={model.kind.value} d={model.d} lambda={io.fmt(e.lam)}"]))
    man.results = {"eigenvalues": spec.values, "no_roots": spec.empty, "table_match": doc["table_match"]}
    man.checks = {"table_match": doc["table_match"]} if doc["comparison"] else {}
    man.write()
    doc["_manifest"] = str(out / "manifest.json")
    return doc


def format_comparison(doc: dict) -> str:
    lines = [f"{doc['model']} d={doc['d']}  window={doc['window']}  step={doc['step']}"]
    if doc["no_roots"]:
        lines.append("no roots in window")
    lines.append(f"{'n':>2}  {'table':>12}  {'computed':>14}  {'|dev|':>9}")
    for r in doc["comparison"]:
        got = "missing" if r["lambda"] is None else f"{r['lambda']:.8f}"
        dev = "-" if r["abs_dev"] is None else f"{r['abs_dev']:.2e}"
        lines.append(f"{r['n']:>2}  {r['lambda_table']:>12.6f}  {got:>14}  {dev:>9}")
    extra = [e["lambda"] for e in doc["eigenvalues"]
             if all(r["lambda"] != e["lambda"] for r in doc["comparison"])]
    if extra:
        lines.append("further roots: " + ", ".join(f"{v:.6f}" for v in extra))
    return "\n".join(lines)


# ---------------------------------------------------------------- evolve + fit

_FAMILY_KEYS = ("family", "A", "sigma", "r0", "T0")
_NUMERIC_KEYS = ("n_nodes", "R", "tau_relax", "monitor_floor", "smoothing_passes", "cfl",
                 "stop_threshold", "t_max", "snapshot_stride")


def evolution_config(cfg: dict, raw_keys=()) -> tuple[EvolutionConfig, str | None]:
    """EvolutionConfig from a parsed evolve config.  A preset supplies model
    and initial data; keys given explicitly override it."""
    preset_id = cfg.get("preset")
    overrides = {k: cfg[k] for k in _NUMERIC_KEYS}
    if preset_id:
        pr = presets.get(preset_id)
        for k, v in (("model", pr.kind), ("d", pr.d)):
            if k in raw_keys and str(cfg[k]).lower() != str(v).lower():
                raise io.ConfigError(f"{k}={cfg[k]!r} contradicts preset {preset_id!r}")
        fam = {k: cfg[k] for k in _FAMILY_KEYS if k in raw_keys}
        return pr.config(**fam, **overrides), preset_id
    if cfg.get("model") is None or cfg.get("d") is None:
        raise io.ConfigError("evolve needs either a preset or model and d")
    fam = {k: cfg[k] for k in _FAMILY_KEYS}
    return EvolutionConfig(model=model_of(cfg), **fam, **overrides), None


def lambda1_table(model: ModelSpec) -> float | None:
    table = io.reference_eigenvalues(model.kind.value, model.d)
    return None if table is None else table[1]


def _series_columns(traj, model: ModelSpec) -> dict:
    s = traj.series()
    name = "dr_u_origin" if model.parity == 1 else "d2r_u_origin"
    return {"t": s["t"], name: s["origin"], "min_cell": s["min_cell"], "dt": s["dt"], "tau": s["tau"]}


def analyse_run(traj, model: ModelSpec, profile_s: float = 4.0):
    """(T_est or None, BlowupReport or None, supnorm series, reason)."""
    s = traj.series()
    if not traj.blowup:
        return None, None, [], f"no blowup detected (stopped on {traj.stop_reason})"
    try:
        T = analysis.estimate_blowup_time(s["t"], s["origin"], model.parity)
    except analysis.DiagnosticError as exc:
        return None, None, [], f"no blowup detected: {exc}"
    lam1 = lambda1_table(model)
    report = analysis.fit_rate(traj, T, model, lambda1=lam1, profile_s=profile_s)
    sup = analysis.supnorm_series(traj, T, model)
    report.supnorm_series = sup
    return T, report, sup, report.reason


def cmd_evolve(cfg: dict, out_dir, raw_keys=()) -> dict:
    econf, preset_id = evolution_config(cfg, raw_keys)
    model = econf.model
    out = Path(out_dir)
    man = io.RunManifest(out, "evolve", {**cfg, "resolved": _econf_dict(econf)}, model)
    try:
        traj, final = evolve(make_initial_data(econf), econf)
    except EvolutionError as exc:
        if exc.state is not None:
            st = exc.state
            man.add(io.write_csv(out / "failure_state.csv", {"r": st.r, "u": st.u, "ut": st.ut},
                                 [f"t={io.fmt(st.t)}", f"tau={io.fmt(st.tau)}", f"step={st.step_count}",
                                  f"error={str(exc).replace(' ', '_')}"]))
        man.results = {"error": str(exc)}
        man.write()
        raise
    man.add(io.write_csv(out / "series.csv", _series_columns(traj, model),
                         [f"model={model.kind.value} d={model.d}", f"stop={traj.stop_reason}"]))
    T, report, sup, reason = analyse_run(traj, model, cfg.get("profile_s", 4.0))
    lam_ref = lambda1_table(model)
    if report is None:
        doc = {"model": model.kind.value, "d": model.d, "T_est": None, "C_fit": None, "lambda1_fit": None,
               "lambda1_table": lam_ref, "rel_err": None, "converged": False, "reason": reason,
               "preset_id": preset_id, "stop_reason": traj.stop_reason}
    else:
        doc = report.as_dict(lam_ref, preset_id)
        doc.update({
            "stop_reason": traj.stop_reason,
            "T_fit_window": list(report.T_fit_window),
            "lambda1_loglog": report.lambda1_loglog,
            "offset_fit": report.offset_fit,
            "r_squared": report.r_squared,
            "n_fit": report.n_fit,
            "profile_mismatch": report.profile_mismatch,
            "supnorm_final": sup[-1][1] if sup else None,
            "supnorm_max": max(v for _, v in sup) if sup else None,
            "attractor": bool(sup) and sup[-1][1] < 1e-2,
            "t_stop": traj.t[-1],
            "amplification": abs(traj.origin[-1]) / max(abs(traj.origin[0]), 1e-300),
        })
        if sup:
            man.add(io.write_csv(out / "supnorm.csv", {"s": [a for a, _ in sup], "sup_dist": [b for _, b in sup]},
                                 ["sup over y in [0, 0.5] of |U(s,y) - phi0(y)|"]))
        _write_snapshots(man, out, traj, T, cfg.get("snapshot_files", 12))
        try:
            y, phi, curves = analysis.similarity_overlay(traj, T, model, cfg.get("overlay_s", [2, 4, 6, 8, 10]))
        except analysis.DiagnosticError:
            curves = []
        if curves:
            cols = {"y": y, "phi0": phi}
            header = [f"model={model.kind.value} d={model.d} T_est={io.fmt(T)}"]
            for k, (s, U) in enumerate(curves):
                cols[f"U_{k}"] = U
                header.append(f"U_{k}_s={io.fmt(s)}")
            man.add(io.write_csv(out / "overlay.csv", cols, header))
    man.add(io.write_json(out / "report.json", doc))
    man.results = {k: doc.get(k) for k in ("T_est", "lambda1_fit", "rel_err", "converged", "reason")}
    man.checks = {"blowup": traj.blowup}
    if report is not None:
        man.checks["attractor"] = doc["attractor"]
    man.write()
    return doc


def _econf_dict(econf: EvolutionConfig) -> dict:
    d = {k: getattr(econf, k) for k in econf.__dataclass_fields__ if k != "model"}
    d["model"] = econf.model.kind.value
    d["d"] = econf.model.d
    return d


def _write_snapshots(man, out: Path, traj, T: float, count: int):
    snaps = [sn for sn in traj.snapshots if sn.t < T]
    if count <= 0 or not snaps:
        return
    s_all = np.array([-math.log(T - sn.t) for sn in snaps])
    targets = np.linspace(s_all[0], s_all[-1], min(count, len(snaps)))
    picked = sorted({int(np.argmin(np.abs(s_all - t))) for t in targets})
    for k, i in enumerate(picked):
        sn = snaps[i]
        man.add(io.write_csv(out / "snapshots" / f"snapshot_{k:03d}.csv", {"r": sn.r, "u": sn.u, "ut": sn.ut},
                             [f"t={io.fmt(sn.t)}", f"s={io.fmt(s_all[i])}", f"T_est={io.fmt(T)}"]))


def cmd_fit(cfg: dict, out_dir) -> dict:
    """Re-fit blowup time and rate from a stored series.csv."""
    run = Path(cfg["run_dir"])
    series_path = run / "series.csv"
    if not series_path.is_file():
        raise io.ConfigError(f"{series_path} not found")
    meta, cols = io.read_csv(series_path)
    model = ModelSpec.parse(meta.get("model", ""), int(meta.get("d", 0)))
    origin = cols.get("dr_u_origin", cols.get("d2r_u_origin"))
    if origin is None:
        raise io.ConfigError(f"{series_path} has no origin-derivative column")
    out = Path(out_dir)
    man = io.RunManifest(out, "fit", cfg, model)
    lam_ref = lambda1_table(model)
    try:
        T = analysis.estimate_blowup_time(cols["t"], origin, model.parity)
    except analysis.DiagnosticError as exc:
        doc = {"model": model.kind.value, "d": model.d, "T_est": None, "C_fit": None, "lambda1_fit": None,
               "lambda1_table": lam_ref, "rel_err": None, "converged": False,
               "reason": f"no blowup detected: {exc}", "preset_id": None}
    else:
        rep = analysis.fit_rate({"t": cols["t"], "origin": origin}, T, model)
        doc = rep.as_dict(lam_ref, None)
        doc.update({"T_fit_window": list(rep.T_fit_window), "r_squared": rep.r_squared, "n_fit": rep.n_fit,
                    "offset_fit": rep.offset_fit, "lambda1_loglog": rep.lambda1_loglog})
    man.add(io.write_json(out / "report.json", doc))
    man.results = {k: doc.get(k) for k in ("T_est", "lambda1_fit", "rel_err", "converged")}
    man.write()
    return doc


# ---------------------------------------------------------------- sweep

def _sweep_one(args):
    name, out, n_nodes = args
    cfg = io.parse_config("evolve", {"preset": name, "n_nodes": n_nodes})
    try:
        doc = cmd_evolve(cfg, out, raw_keys=("preset", "n_nodes"))
    except EvolutionError as exc:
        return name, {"error": str(exc)}
    return name, doc


def cmd_sweep(cfg: dict, out_dir) -> dict:
    names = cfg["presets"]
    if names is None:
        names = [f"{k}{d}-gauss-{s}" for k, d in presets.ATTRACTOR_CELLS for s in "ABC"]
    for n in names:
        presets.get(n)
    out = Path(out_dir)
    jobs = [(n, out / n, cfg["n_nodes"]) for n in names]
    if cfg["workers"] > 1:
        with ProcessPoolExecutor(cfg["workers"]) as pool:
            results = dict(pool.map(_sweep_one, jobs))
    else:
        results = dict(map(_sweep_one, jobs))
    summary = {}
    for n in names:
        doc = results[n]
        summary[n] = {k: doc.get(k) for k in ("T_est", "lambda1_fit", "rel_err", "converged", "supnorm_final",
                                              "attractor", "error")}
    man = io.RunManifest(out, "sweep", cfg)
    man.add(io.write_json(out / "sweep.json", summary))
    for n in names:
        man.add(out / n / "manifest.json")
    man.checks = {n: bool(summary[n].get("attractor")) for n in names}
    man.write()
    return summary
