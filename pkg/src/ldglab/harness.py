"""Experiment configuration, single runs, t-sweeps and report assembly.

A run goes init -> solve -> analyse -> persist and writes its outputs to
``<out>/<run_id>/``.  Reports are plain JSON; wall-clock time lives under
``provenance.wall_time`` and is the only non-deterministic entry.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field, fields, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import __version__
from . import analysis as an
from .field import DirectorField, Grid, QField, boundary_degree, build_grid, energy_total, init_field
from .fieldio import export_field, export_vtk
from .hedgehog import solve_profile
from .material import ReducedParams
from .relax import DirectorState, SolveOptions, harmonic_map, minimize_full, minimize_uniaxial
from .stability import biaxial_probe, min_eig_rayleigh

logger = logging.getLogger(__name__)

MODES = ("full", "uniaxial", "harmonic", "hedgehog-ode", "stability")


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class ExperimentConfig:
    # grid and boundary data
    n: int = 49
    R: float = 1.0
    boundary: str = "radial"
    degree: int = 1
    axis: list = dc_field(default_factory=lambda: [0.0, 0.0, 1.0])
    # material
    t: list = dc_field(default_factory=lambda: [200.0])
    Lbar: float = 1.0
    # solver
    mode: str = "full"
    init: str = "radial-ansatz"
    perturb: float = 1e-3
    method: str = "lbfgs"
    max_iters: int = 50000
    tol_grad: float | None = None
    memory: int = 10
    # analysis
    delta: float = 0.5
    epsilon: float = 0.3
    defect_thresh: float = 0.75
    sigma_eps: float = 0.25
    radii: list = dc_field(default_factory=lambda: [0.05 * k for k in range(1, 19)])
    blowup_window: float = 8.0
    gl_window: float | None = None  # None -> 4 xi_b
    stability_iters: int = 400
    harmonic_n: int | None = None  # None -> n
    r_max: float = 20.0
    # bookkeeping
    seed: int = 0
    out: str = "runs"
    workers: int = 1
    vtk: bool = False

    def __post_init__(self):
        if isinstance(self.t, (int, float)):
            self.t = [float(self.t)]
        self.t = [float(v) for v in self.t]
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.mode != "hedgehog-ode":
            if not isinstance(self.n, int) or self.n < 17 or self.n % 2 == 0:
                raise ConfigError("n", f"must be an odd integer >= 17, got {self.n!r}")
            if not self.R > 0:
                raise ConfigError("R", "must be positive")
        if self.boundary not in ("radial", "azimuthal", "constant"):
            raise ConfigError("boundary", f"unknown kind {self.boundary!r}")
        if len(self.axis) != 3 or not np.linalg.norm(self.axis) > 0:
            raise ConfigError("axis", "must be a nonzero 3-vector")
        if not self.t or any(not v > 0 for v in self.t):
            raise ConfigError("t", "needs one or more positive values")
        if not self.Lbar > 0:
            raise ConfigError("Lbar", "must be positive")
        if self.init not in ("radial-ansatz", "harmonic-extension", "random"):
            raise ConfigError("init", f"unknown initializer {self.init!r}")
        if self.method not in ("lbfgs", "gd", "projected"):
            raise ConfigError("method", f"unknown method {self.method!r}")
        if self.tol_grad is not None and not self.tol_grad > 0:
            raise ConfigError("tol_grad", "must be positive")
        if not 0 < self.delta < 1:
            raise ConfigError("delta", "must lie in (0, 1)")
        if not 0 < self.epsilon <= self.R:
            raise ConfigError("epsilon", "must lie in (0, R]")
        if self.r_max < 20:
            raise ConfigError("r_max", "must be at least 20")
        if self.workers < 1:
            raise ConfigError("workers", "must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        for k in d:
            if k not in known:
                raise ConfigError(k, "unknown key")
        return cls(**d)

    @classmethod
    def load(cls, path, **overrides) -> "ExperimentConfig":
        d = json.loads(Path(path).read_text())
        d.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def director(self) -> DirectorField:
        return DirectorField(kind=self.boundary, degree=self.degree, axis=tuple(self.axis))

    def solve_options(self) -> SolveOptions:
        method = self.method
        if self.mode == "full" and method == "projected":
            method = "gd"
        return SolveOptions(max_iters=self.max_iters, tol_grad=self.tol_grad, method=method,
                            memory=self.memory, log_every=200)

    def run_id(self, t: float) -> str:
        return f"{self.mode}_t{t:g}_n{self.n}_s{self.seed}"


# ------------------------------------------------------------------ helpers


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, path):
    Path(path).write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def strip_timing(report: dict) -> dict:
    """Copy of a report without wall-clock entries (for determinism checks)."""
    out = json.loads(json.dumps(_json_safe(report)))

    def walk(d):
        if isinstance(d, dict):
            d.pop("wall_time", None)
            for v in d.values():
                walk(v)
        elif isinstance(d, list):
            for v in d:
                walk(v)

    walk(out)
    return out


def harmonic_singularities(state: DirectorState, cos_thresh: float = 0.5) -> np.ndarray:
    """Approximate singular points of a discrete director field.

    Nodes with a nearest neighbour whose director makes an angle above
    ``arccos(cos_thresh)`` are clustered (26-connectivity); each cluster
    contributes the node whose neighbour directors cancel the most.
    """
    from .relax import _neighbour_sum

    g = state.grid
    n = state.n
    act = g.active
    bad = np.zeros(act.shape, dtype=bool)
    for ax in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        both = act[tuple(lo)] & act[tuple(hi)]
        dot = np.abs(np.sum(n[tuple(lo)] * n[tuple(hi)], axis=-1))
        jump = both & (dot < cos_thresh)
        bad[tuple(lo)] |= jump
        bad[tuple(hi)] |= jump
    bad &= g.interior
    labels, count = ndimage.label(bad, structure=np.ones((3, 3, 3), dtype=bool))
    cancel = np.linalg.norm(_neighbour_sum(n), axis=-1)
    pts = []
    for k in range(1, count + 1):
        sel = labels == k
        pts.append(g.coords[sel][np.argmin(cancel[sel])])
    return np.array(pts).reshape(-1, 3)


_HARMONIC_CACHE: dict = {}


def limiting_map(cfg: ExperimentConfig, grid: Grid):
    key = (grid.n, grid.R, cfg.boundary, cfg.degree, tuple(cfg.axis))
    if key not in _HARMONIC_CACHE:
        st = harmonic_map(cfg.director(), grid, SolveOptions(max_iters=200000, log_every=0))
        _HARMONIC_CACHE[key] = st
    return _HARMONIC_CACHE[key]


def _write_series(path, rows, header):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _state_summary(st) -> dict:
    return {"iterations": st.iterations, "energy": st.energy, "grad_sup": st.grad_sup,
            "converged": st.converged, "message": st.message}


# --------------------------------------------------------------- pipelines


def analyze_field(F: QField, cfg: ExperimentConfig, harmonic=None, singular=None) -> dict:
    """Measurements shared by the full and uniaxial pipelines."""
    rp = F.params
    E = energy_total(F)
    out = {"energy": {"total": E.total, "elastic": E.elastic, "bulk": E.bulk,
                      "bulk_temperature": E.bulk_temperature, "bulk_biaxial": E.bulk_biaxial}}
    defects = an.detect_defects(F, cfg.defect_thresh)
    if not len(defects):
        # weak cores (|Q| dips only slightly) still mark the low-norm set
        m = float(F.norm[F.grid.interior].min())
        if m < 1.0 - 1e-6:
            thr = m + 0.5 * (1.0 - m)
            logger.info("no node below %.3g; retrying defect detection at %.4f", cfg.defect_thresh, thr)
            defects = an.detect_defects(F, thr)
    out["defects"] = defects.as_dict()
    if singular is None:
        singular = np.zeros((1, 3)) if cfg.boundary == "radial" else defects.locations()
    out["singular_set"] = np.asarray(singular).tolist()
    core = None
    if len(defects):
        ref = singular[0] if len(singular) else np.zeros(3)
        core = defects.nearest(ref).center
    out["core"] = None if core is None else core.tolist()
    if core is not None:
        eps = min(cfg.epsilon, F.grid.R - np.linalg.norm(core))
        out["region"] = an.biaxial_region(F, core, cfg.delta, eps).as_dict()
        out["biaxial_outside"] = an.biaxial_outside(F, defects.centers(), cfg.delta, cfg.epsilon)
        radii = [r for r in cfg.radii if np.linalg.norm(core) + r <= F.grid.R]
        dens = E.density / rp.Lbar
        prof = an.normalized_energy(F, core, radii, density=dens)
        out["normalized_energy"] = prof
        out["normalized_energy_monotone"] = an.is_monotone(prof)
        window = cfg.gl_window if cfg.gl_window is not None else 4 * rp.xi_b
        out["gl"] = an.gl_residual(F, core, max(window, 4 * rp.xi_b)).as_dict()
    b2 = an.biaxiality_field(F)
    out["beta2_max"] = float(np.nanmax(b2))
    out["beta2_min"] = float(np.nanmin(b2))
    if harmonic is not None:
        out["distance"] = an.sup_distance(F, harmonic.field, cfg.sigma_eps, singular).as_dict()
    else:
        dev = np.abs(np.linalg.norm(F.interior_values, axis=-1) - 1.0)
        out["distance"] = {"sup_norm_deviation": float(dev.max())}
    return out


def _persist(F: QField, st, outdir: Path, cfg: ExperimentConfig):
    export_field(F, outdir / "field.bin")
    if cfg.vtk:
        export_vtk(F, outdir / "field.vtk")
    _write_series(outdir / "energies.csv", list(enumerate(st.energies)), ["iter", "energy"])


def _solve_q(cfg: ExperimentConfig, t: float, grid: Grid, uniaxial: bool, profile=None):
    rp = ReducedParams.from_t(t, Lbar=cfg.Lbar)
    df = cfg.director()
    F0 = init_field(grid, df, rp, init=cfg.init, seed=cfg.seed, profile=profile,
                    perturb=0.0 if uniaxial else cfg.perturb)
    opts = cfg.solve_options()
    st = minimize_uniaxial(F0, opts) if uniaxial else minimize_full(F0, opts)
    init_energy = energy_total(F0).total
    return F0, st, init_energy


def _run_one(cfg: ExperimentConfig, t: float) -> dict:
    """Single-t pipeline; returns the per-t report and writes its directory."""
    t0 = time.perf_counter()
    outdir = Path(cfg.out) / cfg.run_id(t)
    outdir.mkdir(parents=True, exist_ok=True)
    rep: dict = {"run_id": cfg.run_id(t), "t": t, "mode": cfg.mode}
    if cfg.mode == "hedgehog-ode":
        prof = solve_profile(cfg.r_max)
        prof.export(outdir)
        rep["profile"] = prof.metadata()
        rep["far_field"] = {"one_minus_h_at_20": float(1.0 - np.interp(20.0, prof.r, prof.h)), "expected": 3 / 400}
    else:
        grid = build_grid(cfg.n, cfg.R)
        rp = ReducedParams.from_t(t, Lbar=cfg.Lbar)
        rep["params"] = asdict(rp)
        deg, raw = boundary_degree(cfg.director())
        rep["boundary_degree"] = {"degree": deg, "raw": raw}
        if cfg.mode == "harmonic":
            st = harmonic_map(cfg.director(), grid, cfg.solve_options())
            F = QField(grid, st.field.tensor(), rp, cfg.director())
            rep["solver"] = _state_summary(st)
            rep["dirichlet_energy"] = st.energy
            rep["dirichlet_energy_over_8pi"] = st.energy / (8 * np.pi)
            sing = harmonic_singularities(st.field)
            rep["singular_set"] = sing.tolist()
            c = sing[0] if len(sing) else np.zeros(3)
            radii = [r for r in cfg.radii if np.linalg.norm(c) + r <= cfg.R]
            prof = an.normalized_energy(F, c, radii)
            # Q energy is three times the director energy
            rep["normalized_director_energy"] = [(r, v / 3.0) for r, v in prof]
            np.save(outdir / "director.npy", st.field.n)
            _write_series(outdir / "normalized_energy.csv", rep["normalized_director_energy"], ["r", "value"])
        else:
            harm = limiting_map(cfg, grid)
            sing = harmonic_singularities(harm.field)
            uni = cfg.mode in ("uniaxial", "stability")
            profile = solve_profile(cfg.r_max) if uni or cfg.init == "radial-ansatz" else None
            F0, st, e0 = _solve_q(cfg, t, grid, uni, profile)
            F = st.field
            rep["solver"] = _state_summary(st)
            rep["initial_energy"] = e0
            if not st.converged:
                rep["warning"] = f"solver did not converge: {st.message}"
                logger.warning("%s: %s", rep["run_id"], rep["warning"])
            rep.update(analyze_field(F, cfg, harm, sing))
            if uni:
                s = 1.5 * np.linalg.eigvalsh(_to_mats(F.interior_values))[:, -1]
                rep["uniaxial"] = {"s_min": float(s.min()),
                                   "beta2_max": float(np.nanmax(an.biaxiality_field(F))),
                                   "energy_bound": 1.5 * cfg.Lbar * 8 * np.pi}
                core = rep.get("core")
                if core is not None:
                    iso = an.detect_defects(F, an.ISOTROPIC_THRESH)
                    rep["isotropic"] = iso.as_dict()
                    try:
                        rep["blowup"] = an.blowup_compare(F, core, profile, cfg.blowup_window).as_dict()
                    except an.ResolutionError as exc:
                        rep["blowup"] = {"error": str(exc)}
            if cfg.mode == "stability" and rep.get("core") is not None:
                rep["stability"] = stability_report(F, np.array(rep["core"]), cfg)
            _persist(F, st, outdir, cfg)
            if "normalized_energy" in rep:
                _write_series(outdir / "normalized_energy.csv", rep["normalized_energy"], ["r", "value"])
    rep["provenance"] = {"version": __version__, "seed": cfg.seed, "wall_time": time.perf_counter() - t0}
    dump_json(rep, outdir / "report.json")
    return _json_safe(rep)


def _to_mats(q):
    from .qtensor import to_matrix

    return to_matrix(q)


def stability_report(F: QField, core, cfg: ExperimentConfig) -> dict:
    """Biaxial probe quotient and a Rayleigh minimisation started from it."""
    from .stability import rayleigh_quotient

    tol_eig = 1e-4 * F.params.t
    radius = max(3 * F.grid.h, 4 * F.params.xi_b)
    probe = biaxial_probe(F, core, radius)
    q_probe = rayleigh_quotient(F, probe)
    res = min_eig_rayleigh(F, SolveOptions(max_iters=cfg.stability_iters, log_every=0), start=probe, seed=cfg.seed)
    lam = res.lambda_min
    verdict = "unstable" if lam < -tol_eig else "stable"
    return {"probe_radius": radius, "probe_quotient": q_probe, "lambda_min": lam, "tol_eig": tol_eig,
            "verdict": verdict, "iterations": res.iterations, "residual": res.residual,
            "converged": res.converged}


def run(cfg: ExperimentConfig) -> dict:
    """Run a single-t experiment; returns the report dict (also written as ``report.json``)."""
    if len(cfg.t) != 1:
        raise ConfigError("t", f"run takes exactly one value, got {cfg.t}; use sweep")
    return _run_one(cfg, cfg.t[0])


def _sweep_task(args):
    cfg, t = args
    try:
        return _run_one(cfg, t)
    except Exception as exc:  # recorded, excluded from aggregation
        logger.exception("run t=%g failed", t)
        return {"t": t, "run_id": cfg.run_id(t), "failed": f"{type(exc).__name__}: {exc}"}


def sweep(cfg: ExperimentConfig) -> dict:
    """Per-t runs plus trend tables and the diameter scaling fit."""
    t0 = time.perf_counter()
    tasks = [(replace(cfg, t=[t]), t) for t in cfg.t]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            runs = list(ex.map(_sweep_task, tasks))
    else:
        runs = [_sweep_task(a) for a in tasks]
    bundle: dict = {"config": cfg.to_dict(), "runs": {r["run_id"]: r for r in runs}}
    ok = [r for r in runs if "failed" not in r]
    notices = [f"{r['run_id']} excluded: {r['failed']}" for r in runs if "failed" in r]
    notices += [f"{r['run_id']} excluded: not converged" for r in ok if not r.get("solver", {}).get("converged", True)]
    good = [r for r in ok if r.get("solver", {}).get("converged", True)]
    table = []
    for r in good:
        table.append({
            "t": r["t"],
            "energy": r.get("energy", {}).get("total"),
            "sup_norm_deviation": r.get("distance", {}).get("sup_norm_deviation"),
            "sup_distance": r.get("distance", {}).get("sup_distance"),
            "beta2_max_near_core": r.get("region", {}).get("max_beta2"),
            "beta2_min_near_core": r.get("region", {}).get("min_beta2"),
            "diameter": r.get("region", {}).get("diameter"),
            "gl_residual": r.get("gl", {}).get("residual"),
            "lambda_min": r.get("stability", {}).get("lambda_min"),
            "verdict": r.get("stability", {}).get("verdict"),
        })
    bundle["table"] = table
    samples = [(row["t"], row["diameter"]) for row in table if row["diameter"] is not None]
    if cfg.mode in ("full", "uniaxial", "stability"):
        if len(samples) < 4:
            notices.append(f"scaling fit omitted: {len(samples)} usable samples (need 4)")
        else:
            try:
                bundle["scaling"] = an.fit_scaling(samples, h=2.0 * cfg.R / (cfg.n - 1)).as_dict()
            except an.ScalingError as exc:
                notices.append(f"scaling fit omitted: {exc}")
    bundle["notices"] = notices
    bundle["provenance"] = {"version": __version__, "seed": cfg.seed, "wall_time": time.perf_counter() - t0}
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(bundle, out / "sweep.json")
    if table:
        keys = list(table[0])
        _write_series(out / "sweep.csv", [[row[k] for k in keys] for row in table], keys)
    return _json_safe(bundle)
