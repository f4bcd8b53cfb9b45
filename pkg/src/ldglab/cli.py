"""Command line entry point ``ldg``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from .fieldio import FormatError, export_vtk, import_field
from .harness import ConfigError, ExperimentConfig, _json_safe, dump_json, run, sweep
from .hedgehog import solve_profile

ANALYSES = ("defects", "region", "energy", "gl", "vtk", "all")


def _config(args) -> ExperimentConfig:
    over = {"n": args.n, "mode": args.mode, "out": args.out, "seed": args.seed}
    if args.t is not None:
        over["t"] = args.t
    return ExperimentConfig.load(args.config, **over)


def cmd_run(args) -> int:
    rep = run(_config(args))
    print(json.dumps({k: rep.get(k) for k in ("run_id", "solver", "core", "warning") if k in rep}, indent=2))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.workers:
        cfg.workers = args.workers
    bundle = sweep(cfg)
    print(json.dumps({"table": bundle["table"], "scaling": bundle.get("scaling"), "notices": bundle["notices"]},
                     indent=2))
    return 0


def cmd_ode(args) -> int:
    prof = solve_profile(args.rmax)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prof.export(out)
    print(json.dumps(prof.metadata(), indent=2))
    return 0


def analyze_file(path, mode: str, thresh: float = 0.75, delta: float = 0.5, epsilon: float = 0.3) -> dict:
    F = import_field(path)
    out: dict = {"field": str(path), "t": F.params.t}
    d = an.detect_defects(F, thresh)
    core = d.points[0].center if len(d) else None
    if mode in ("defects", "all"):
        out["defects"] = d.as_dict()
    if core is not None and mode in ("region", "all"):
        out["region"] = an.biaxial_region(F, core, delta, min(epsilon, F.grid.R - np.linalg.norm(core))).as_dict()
    if core is not None and mode in ("energy", "all"):
        radii = [0.05 * k for k in range(1, 19) if np.linalg.norm(core) + 0.05 * k <= F.grid.R]
        out["normalized_energy"] = an.normalized_energy(F, core, radii)
    if core is not None and mode in ("gl", "all"):
        out["gl"] = an.gl_residual(F, core, 4 * F.params.xi_b).as_dict()
    if mode == "vtk":
        out["vtk"] = str(export_vtk(F, Path(path).with_suffix(".vtk")))
    return _json_safe(out)


def cmd_analyze(args) -> int:
    res = analyze_file(args.field, args.mode, args.thresh)
    if args.json:
        dump_json(res, args.json)
    print(json.dumps(res, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ldg", description="Landau-de Gennes ball experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("sweep", cmd_sweep)):
        s = sub.add_parser(name, help="solve one temperature" if name == "run" else "solve a list of temperatures")
        s.add_argument("config", help="JSON experiment config")
        s.add_argument("--t", type=float, nargs="+", help="override reduced temperature(s)")
        s.add_argument("--n", type=int, help="override grid points per axis")
        s.add_argument("--mode", help="full | uniaxial | harmonic | hedgehog-ode | stability")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int)
        if name == "sweep":
            s.add_argument("--workers", type=int, help="parallel processes over t")
        s.set_defaults(func=fn)
    s = sub.add_parser("ode", help="solve the hedgehog profile and export the table")
    s.add_argument("--rmax", type=float, default=20.0)
    s.add_argument("--out", default="hedgehog", help="output directory")
    s.set_defaults(func=cmd_ode)
    s = sub.add_parser("analyze", help="measure a saved field.bin")
    s.add_argument("field", help="binary field file")
    s.add_argument("--mode", choices=ANALYSES, default="all")
    s.add_argument("--thresh", type=float, default=0.75, help="defect |Q| threshold")
    s.add_argument("--json", help="write the report here instead of stdout")
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError, OSError) as exc:
        print(f"ldg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
