"""blowuplab command line.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__, io, runner, verify
from .analysis import DiagnosticError
from .evolve import EvolutionError
from .heun import SeriesError
from .model import ModelError
from .shooting import ShootingError

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blowuplab", description="Self-similar blowup laboratory for wave maps and Yang-Mills.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, model=True, out=True):
        if model:
            sp.add_argument("--model", choices=["wm", "ym"], type=str.lower)
            sp.add_argument("--dim", type=int, metavar="N")
        sp.add_argument("--config", type=Path, metavar="FILE", help="JSON file with command parameters")
        if out:
            sp.add_argument("--out", type=Path, metavar="DIR", help="run directory")

    sp = sub.add_parser("profile", help="sample phi0, phi0' and V(y) to CSV")
    common(sp)
    sp = sub.add_parser("spectrum", help="real eigenvalues from the Heun Wronskian")
    common(sp)
    sp = sub.add_parser("evolve", help="moving-mesh evolution to blowup, then rate fit")
    common(sp)
    sp.add_argument("--preset", metavar="NAME")
    sp = sub.add_parser("fit", help="re-fit blowup time and rate from a stored run")
    common(sp, model=False)
    sp.add_argument("--run-dir", type=Path, metavar="DIR")
    sp = sub.add_parser("verify", help="run the property suite")
    common(sp, model=False)
    sp.add_argument("--epsilon", choices=["fuchs", "printed"], help="Heun epsilon used by the back-map check")
    sp.add_argument("--perturb-table", type=float, metavar="DELTA", help="shift one reference eigenvalue")
    sp.add_argument("--quick", action="store_true", help="skip determinism and most shooting scans")
    sp = sub.add_parser("sweep", help="evolve several presets, one run directory each")
    common(sp, model=False)
    sp.add_argument("--preset", action="append", metavar="NAME", help="repeatable; default: all attractor presets")
    sp.add_argument("--workers", type=int)
    sp = sub.add_parser("presets", help="list initial-data presets")
    return p


def _raw_config(args) -> dict:
    raw = io.load_config_file(args.config) if getattr(args, "config", None) else {}
    if not isinstance(raw, dict):
        raise io.ConfigError("config must be a JSON object")
    flags = {
        "model": getattr(args, "model", None),
        "d": getattr(args, "dim", None),
        "preset": getattr(args, "preset", None),
        "run_dir": None if getattr(args, "run_dir", None) is None else str(args.run_dir),
        "epsilon": getattr(args, "epsilon", None),
        "perturb_table": getattr(args, "perturb_table", None),
        "workers": getattr(args, "workers", None),
    }
    if args.command == "sweep":
        flags["presets"] = flags.pop("preset")
    if args.command == "verify" and args.quick:
        flags["quick"] = True
    for k, v in flags.items():
        if v is not None:
            raw[k] = v
    return raw


def _default_out(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    if args.command == "fit":
        return Path(cfg["run_dir"]) / "fit"
    tag = cfg.get("preset") or (f"{cfg.get('model')}{cfg.get('d')}" if cfg.get("model") else "")
    return Path("runs") / (f"{args.command}-{tag}" if tag else args.command)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        from .presets import PRESETS
        for name, pr in sorted(PRESETS.items()):
            print(f"{name:22s} {pr.family:12s} A={pr.A:<6g} sigma={pr.sigma:<4g} r0={pr.r0:<4g}"
                  + ("" if pr.threshold is None else f" threshold~{pr.threshold:g}"))
        return EXIT_OK
    try:
        raw = _raw_config(args)
        cfg = io.parse_config(args.command, raw)
        out = _default_out(args, cfg)
        if args.command == "profile":
            res = runner.cmd_profile(cfg, out)
            print(f"profile written to {out} ({res['rows']} rows)")
        elif args.command == "spectrum":
            doc = runner.cmd_spectrum(cfg, out)
            print(runner.format_comparison(doc))
            print(f"written to {out}")
        elif args.command == "evolve":
            doc = runner.cmd_evolve(cfg, out, raw_keys=tuple(raw))
            _print_report(doc)
            print(f"written to {out}")
        elif args.command == "fit":
            doc = runner.cmd_fit(cfg, out)
            _print_report(doc)
        elif args.command == "sweep":
            summary = runner.cmd_sweep(cfg, out)
            for name, row in summary.items():
                print(f"{name:16s} T={row.get('T_est')} sup={row.get('supnorm_final')} "
                      f"lambda1={row.get('lambda1_fit')} attractor={row.get('attractor')}")
            if not all(r.get("attractor") for r in summary.values()):
                return EXIT_VERIFY
        elif args.command == "verify":
            return _verify(cfg, args.out)
    except (io.ConfigError, ModelError, KeyError) as exc:
        print(f"blowuplab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvolutionError, SeriesError, ShootingError, DiagnosticError, ArithmeticError) as exc:
        print(f"blowuplab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _print_report(doc: dict):
    keys = ("model", "d", "preset_id", "T_est", "lambda1_fit", "lambda1_table", "rel_err", "converged",
            "reason", "supnorm_final")
    for k in keys:
        if k in doc:
            print(f"  {k:14s} {doc[k]}")


def _verify(cfg: dict, out) -> int:
    t0 = time.perf_counter()
    checks = verify.run_suite(cfg["epsilon"], cfg["perturb_table"], cfg["quick"], out_dir=out, echo=print)
    failed = [c.name for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed in {time.perf_counter() - t0:.0f}s")
    if out is not None:
        man = io.RunManifest(out, "verify", cfg)
        man.checks = {c.name: c.passed for c in checks}
        man.results = {c.name: c.detail for c in checks}
        for p in Path(out).rglob("*"):
            if p.is_file() and p.name != "manifest.json" and p.parent == Path(out):
                man.add(p)
        man.write()
    if failed:
        print("FAILED: " + ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
