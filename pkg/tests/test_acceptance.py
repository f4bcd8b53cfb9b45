"""Acceptance criteria 1-8.

Each test checks every clause of one criterion, records a PASS/FAIL line
(printed in the terminal summary) and then asserts.  The heavy runs (the
n=49 sweep, the constrained t=3200 run, the n=65 harmonic map) are shared
module fixtures.
"""
import numpy as np
import pytest

from ldglab import analysis as an
from ldglab import qtensor as qt
from ldglab.field import DirectorField, QField, boundary_degree, build_grid
from ldglab.fieldio import import_field
from ldglab.harness import ExperimentConfig, harmonic_singularities, run, strip_timing, sweep
from ldglab.hedgehog import eval_h, ode_residual, solve_profile
from ldglab.material import (
    ReducedParams, bulk_gradient, bulk_hessian_apply, bulk_original, bulk_reduced, energy_scale,
    physical_from_reduced, rescale,
)
from ldglab.relax import SolveOptions, harmonic_map
from conftest import jacobi_eigenvalues, record_criterion

SWEEP_T = [50.0, 200.0, 800.0, 3200.0]


def _check(number, clauses):
    """``clauses`` maps a label to ``(ok, measured)``; records and asserts."""
    ok = all(c[0] for c in clauses.values())
    detail = "; ".join(f"{k} {'ok' if v[0] else 'FAILED'} ({v[1]})" for k, v in clauses.items())
    record_criterion(number, ok, detail)
    assert ok, detail


@pytest.fixture(scope="module")
def sweep_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = ExperimentConfig(n=49, t=SWEEP_T, mode="full", out=str(out), seed=0)
    bundle = sweep(cfg)
    runs = {r["t"]: r for r in bundle["runs"].values()}
    fields = {t: import_field(out / runs[t]["run_id"] / "field.bin") for t in SWEEP_T}
    return cfg, bundle, runs, fields


@pytest.fixture(scope="module")
def uniaxial_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("uniaxial")
    cfg = ExperimentConfig(n=49, t=[3200.0], mode="stability", out=str(out), seed=0)
    rep = run(cfg)
    return cfg, rep, import_field(out / rep["run_id"] / "field.bin")


@pytest.fixture(scope="module")
def harmonic65():
    g = build_grid(65)
    return g, harmonic_map(DirectorField("radial"), g, SolveOptions(log_every=0))


def test_criterion_1_vacuum_exactness():
    rng = np.random.default_rng(1)
    worst_f = worst_g = 0.0
    for t in (50.0, 200.0, 800.0, 3200.0):
        rp = ReducedParams.from_t(t)
        n = rng.standard_normal((100, 3))
        q = qt.vacuum(n / np.linalg.norm(n, axis=1, keepdims=True))
        worst_f = max(worst_f, float(np.max(np.abs(bulk_reduced(q, rp)))))
        worst_g = max(worst_g, float(np.max(np.abs(bulk_gradient(q, rp)))))
    # minimum of the physical potential mapped through the rescaling
    errs = []
    for B, C in ((1.0, 1.0), (0.64, 0.35)):
        p = physical_from_reduced(200.0, 1.0, B, C)
        rp = rescale(p)
        qmin = qt.uniaxial_from(rp.s_plus, np.array([0.0, 0.0, 1.0]))
        errs.append(abs(energy_scale(p) * bulk_original(qmin, p) + (rp.t + rp.h_plus) / 8))
    _check(1, {
        "f=0 on vacuum": (worst_f <= 1e-12, f"max {worst_f:.2e}"),
        "grad=0 on vacuum": (worst_g <= 1e-12, f"max {worst_g:.2e}"),
        "min f = -(t+h+)/8": (max(errs) <= 1e-12 * 200, f"err {max(errs):.2e}"),
    })


def test_criterion_2_gradient_hessian_oracles():
    rng = np.random.default_rng(2)
    eps = 1e-5
    worst_g = worst_h = 0.0
    for t in (50.0, 3200.0):
        rp = ReducedParams.from_t(t)
        for q, v in zip(rng.standard_normal((100, 5)), rng.standard_normal((100, 5))):
            g = bulk_gradient(q, rp)
            fd = np.array([(bulk_reduced(q + eps * e, rp) - bulk_reduced(q - eps * e, rp)) / (2 * eps) for e in np.eye(5)])
            worst_g = max(worst_g, np.linalg.norm(g - fd) / np.linalg.norm(g))
            hv = bulk_hessian_apply(q, rp, v)
            fdh = (bulk_gradient(q + eps * v, rp) - bulk_gradient(q - eps * v, rp)) / (2 * eps)
            worst_h = max(worst_h, np.linalg.norm(hv - fdh) / np.linalg.norm(hv))
    _check(2, {
        "gradient vs FD": (worst_g <= 1e-6, f"max rel {worst_g:.2e}"),
        "Hessian vs FD": (worst_h <= 1e-6, f"max rel {worst_h:.2e}"),
    })


def test_criterion_3_hedgehog_ode():
    p = solve_profile(20.0, tol=1e-10)
    p2 = solve_profile(20.0, tol=5e-11)
    far = (1 - float(eval_h(p, 20.0))) / (3 / 400)
    digits = abs(p.a2 - p2.a2) / abs(p.a2)
    _check(3, {
        "monotone": (bool(np.all(np.diff(p.h) > 0)), "strict"),
        "h(0)=0": (p.h[0] == 0.0 and float(eval_h(p, 0.0)) == 0.0, f"h(0)={p.h[0]}"),
        "residual<1e-8": (ode_residual(p) < 1e-8, f"{ode_residual(p):.2e}"),
        "far field within 20% of 3/400": (abs(far - 1) < 0.2, f"ratio {far:.4f}"),
        "a2 to 6 digits under tol halving": (digits < 5e-7, f"a2={p.a2:.10f}, rel diff {digits:.1e}"),
    })


def test_criterion_4_harmonic_map(harmonic65):
    g, st = harmonic65
    F = QField(g, st.field.tensor(), ReducedParams.from_t(200.0))
    radii = [0.05 * k for k in range(7, 19)]  # r >= 10h
    prof = [(r, v / 3.0) for r, v in an.normalized_energy(F, np.zeros(3), radii)]
    vals = np.array([v for _, v in prof]) / (4 * np.pi)
    ratio = st.energy / (8 * np.pi)
    _check(4, {
        "converged": (st.converged, f"residual {st.grad_sup:.1e}"),
        "Dirichlet energy within 5% of 8pi": (abs(ratio - 1) < 0.05, f"ratio {ratio:.4f}"),
        "plateau within 10% of 4pi": (bool(np.all(np.abs(vals - 1) < 0.1)),
                                      f"r in [0.35,0.9]: {vals.min():.3f}..{vals.max():.3f}"),
    })


def test_criterion_5_full_sweep(sweep_bundle):
    cfg, bundle, runs, fields = sweep_bundle
    conv = all(runs[t]["solver"]["converged"] for t in SWEEP_T)
    dev = [runs[t]["distance"]["sup_norm_deviation"] for t in SWEEP_T]
    dist = [runs[t]["distance"]["sup_distance"] for t in SWEEP_T]
    r32 = runs[3200.0]
    region = r32.get("region", {})
    scaling = bundle.get("scaling")
    slope = None if scaling is None else scaling["slope"]
    _check(5, {
        "all converged": (conv, ""),
        "(a) sup||Q|-1| decreasing": (bool(np.all(np.diff(dev) < 0)), ", ".join(f"{v:.4f}" for v in dev)),
        "(a) <0.05 at t=3200": (dev[-1] < 0.05, f"{dev[-1]:.4f}"),
        "(b) line-field distance decreasing": (bool(np.all(np.diff(dist) < 0)), ", ".join(f"{v:.4f}" for v in dist)),
        "(c) max beta2>0.95 near defect": (region.get("max_beta2", 0) > 0.95, f"{region.get('max_beta2')}"),
        "(c) min beta2<0.05 near defect": (region.get("min_beta2", 1) < 0.05, f"{region.get('min_beta2')}"),
        "(d) B_1/2 inside B(defect,0.3)": (r32.get("biaxial_outside", 1) == 0 and "core" in r32,
                                           f"{r32.get('biaxial_outside')} nodes outside"),
        "(e) slope in [-0.35,-0.15]": (slope is not None and -0.35 <= slope <= -0.15,
                                       f"slope {slope}" if slope is not None else "; ".join(bundle["notices"])),
    })


def test_criterion_6_monotonicity_quantization(sweep_bundle):
    cfg, bundle, runs, fields = sweep_bundle
    mono = {t: an.is_monotone(runs[t]["normalized_energy"]) for t in SWEEP_T}
    r32 = runs[3200.0]
    xi = ReducedParams.from_t(3200.0).xi_b
    window = [(r, v) for r, v in r32["normalized_energy"] if 5 * xi <= r <= 0.3 + 1e-12]
    vals = np.array([v for _, v in window]) / (12 * np.pi)
    top = max(v for _, v in r32["normalized_energy"]) / (12 * np.pi)
    _check(6, {
        "monotone within 3%": (all(mono.values()), str(mono)),
        "plateau <= 1.2*12pi": (top <= 1.2, f"max {top:.3f}*12pi"),
        "plateau within 20% of 12pi on [5xi_b,0.3]": (bool(vals.size and np.all(np.abs(vals - 1) <= 0.2)),
                                                      ", ".join(f"{v:.3f}" for v in vals) + " (*12pi)"),
    })


def test_criterion_7_uniaxial_pipeline(uniaxial_run, harmonic_singular49):
    cfg, rep, F = uniaxial_run
    g = F.grid
    s_min = rep["uniaxial"]["s_min"]
    energy = rep["energy"]["total"]
    bound = 1.5 * cfg.Lbar * 8 * np.pi * 1.1
    iso = [p for p in rep["isotropic"]["points"] if p["norm"] < 0.1]
    dmin = min((np.linalg.norm(np.array(p["location"]) - harmonic_singular49) for p in iso), default=np.inf)
    blow = rep.get("blowup", {})
    lam = rep["stability"]["lambda_min"]
    _check(7, {
        "converged": (rep["solver"]["converged"], rep["solver"]["message"]),
        "s >= -1e-9": (s_min >= -1e-9, f"s_min {s_min:.2e}"),
        "energy <= 1.1*(3/2)*8pi": (energy <= bound, f"{energy:.4f} <= {bound:.4f}"),
        "isotropic node within 3h of harmonic defect": (dmin <= 3 * g.h + 1e-12, f"distance {dmin:.4f}"),
        "blow-up rel err < 0.15": (blow.get("rel_err", np.inf) < 0.15, f"{blow.get('rel_err')}"),
        "negative Rayleigh witness": (lam < 0, f"lambda {lam:.4g}, tol_eig {rep['stability']['tol_eig']}"),
    })


@pytest.fixture(scope="module")
def harmonic_singular49():
    g = build_grid(49)
    st = harmonic_map(DirectorField("radial"), g, SolveOptions(log_every=0))
    pts = harmonic_singularities(st.field)
    assert len(pts) == 1
    return pts[0]


def test_criterion_8_cross_checks(sweep_bundle, tmp_path):
    cfg, bundle, runs, fields = sweep_bundle
    rng = np.random.default_rng(8)
    q = rng.standard_normal((1000, 5)) * rng.uniform(0.01, 3, (1000, 1))
    b2 = qt.biaxiality(q)
    worst = 0.0
    for k in range(1000):
        lam, _ = jacobi_eigenvalues(qt.to_matrix(q[k]))
        worst = max(worst, abs(b2[k] - (1 - 6 * np.sum(lam**3) ** 2 / np.sum(lam**2) ** 3)))
    degs = (boundary_degree(DirectorField("radial"))[0], boundary_degree(DirectorField("constant"))[0],
            boundary_degree(DirectorField("azimuthal", degree=2))[0])
    gl = [runs[t].get("gl", {}).get("residual", np.nan) for t in SWEEP_T]
    small = ExperimentConfig(n=33, t=[200.0], out=str(tmp_path / "det"), seed=11)
    a, b = run(small), run(small)
    _check(8, {
        "beta2 vs eigenvalue oracle": (worst <= 1e-10, f"max {worst:.1e}"),
        "degrees (1,0,2)": (degs == (1, 0, 2), str(degs)),
        "GL residual decreasing": (bool(np.all(np.isfinite(gl)) and np.all(np.diff(gl) < 0)), ", ".join(f"{v:.4g}" for v in gl)),
        "deterministic reports": (strip_timing(a) == strip_timing(b), "same seed twice"),
    })
