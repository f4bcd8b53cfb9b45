"""Measurements on converged fields.

Defects, biaxial regions and their diameters, power-law fits, normalised
energies, distances to the limiting harmonic map, blow-up comparison with
the hedgehog profile and Ginzburg-Landau residuals.  All functions are pure
reads of their inputs.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy import ndimage, stats

from . import qtensor as qt
from .field import QField, energy_total, laplacian_array
from .hedgehog import HedgehogProfile, eval_h, hedgehog_field
from .material import bulk_reduced

logger = logging.getLogger(__name__)

ISOTROPIC_THRESH = 0.1
DEFAULT_DELTA = 0.5
DEFAULT_EPSILON = 0.3


class ResolutionError(RuntimeError):
    """Raised when a measurement needs more grid nodes than are available."""


class ScalingError(ValueError):
    pass


# ---------------------------------------------------------------- defects


@dataclass
class Defect:
    location: np.ndarray
    norm: float
    kind: str  # "isotropic" or "low-norm-minimum"
    size: int  # nodes in the merged cluster
    centroid: np.ndarray

    @property
    def center(self):
        """Cluster centroid; differs from ``location`` when the low-norm set is a ring."""
        return self.centroid

    def as_dict(self):
        return {"location": self.location.tolist(), "norm": self.norm, "kind": self.kind,
                "size": self.size, "centroid": self.centroid.tolist()}


@dataclass
class DefectSet:
    points: list
    threshold: float

    def __len__(self):
        return len(self.points)

    def locations(self):
        return np.array([d.location for d in self.points]).reshape(-1, 3)

    def centers(self):
        return np.array([d.center for d in self.points]).reshape(-1, 3)

    def nearest(self, x):
        if not self.points:
            return None
        d = np.linalg.norm(self.centers() - np.asarray(x), axis=1)
        return self.points[int(np.argmin(d))]

    def as_dict(self):
        return {"threshold": self.threshold, "points": [p.as_dict() for p in self.points]}


def detect_defects(F: QField, thresh: float = 0.5, iso_thresh: float = ISOTROPIC_THRESH) -> DefectSet:
    """Clusters of interior nodes with ``|Q| < thresh`` (26-connectivity).

    Each cluster is reduced to its ``|Q|``-argmin node; clusters whose
    representatives lie within ``2h`` of each other are merged.
    """
    g = F.grid
    nrm = F.norm
    low = g.interior & (nrm < thresh)
    labels, count = ndimage.label(low, structure=np.ones((3, 3, 3), dtype=bool))
    reps = []
    for lab in range(1, count + 1):
        idx = np.argwhere(labels == lab)
        vals = nrm[tuple(idx.T)]
        k = int(np.argmin(vals))
        pts = g.coords[tuple(idx.T)]
        reps.append([g.coords[tuple(idx[k])], float(vals[k]), len(idx), pts.sum(axis=0)])
    reps.sort(key=lambda r: r[1])
    merged = []
    for loc, val, size, psum in reps:
        for m in merged:
            if np.linalg.norm(m[0] - loc) <= 2 * g.h + 1e-12:
                m[2] += size
                m[3] = m[3] + psum
                break
        else:
            merged.append([loc, val, size, psum])
    points = [
        Defect(location=np.array(loc), norm=val, kind="isotropic" if val < iso_thresh else "low-norm-minimum",
               size=size, centroid=psum / size)
        for loc, val, size, psum in merged
    ]
    return DefectSet(points=points, threshold=float(thresh))


# ------------------------------------------------------------ biaxiality


def biaxiality_field(F: QField, floor: float = 1e-6) -> np.ndarray:
    """beta^2 on the grid; NaN at indeterminate (``|Q| < floor``) and non-interior nodes."""
    out = np.full(F.grid.interior.shape, np.nan)
    out[F.grid.interior] = qt.biaxiality(F.interior_values, floor=floor)
    return out


def max_pairwise_distance(pts, chunk: int = 2048) -> float:
    """Exact diameter of a point set."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        return 0.0
    best = 0.0
    for i in range(0, len(pts), chunk):
        blk = pts[i:i + chunk]
        d2 = np.sum((blk[:, None, :] - pts[None, i:, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


@dataclass
class RegionStats:
    delta: float
    epsilon: float
    count: int
    diameter: float
    max_beta2: float
    min_beta2: float
    ball_nodes: int
    indeterminate: int
    uniaxial_fraction: float

    def as_dict(self):
        return asdict(self)


def biaxial_region(F: QField, defect, delta: float = DEFAULT_DELTA, epsilon: float = DEFAULT_EPSILON,
                   floor: float = 1e-6) -> RegionStats:
    """Statistics of ``B_delta = {beta^2 > delta}`` inside the closed ball ``B(defect, epsilon)``.

    ``uniaxial_fraction`` is the share of determinate ball nodes with
    ``beta^2 < 1e-6``.
    """
    g = F.grid
    c = np.asarray(defect, dtype=float)
    ball = g.interior & (np.linalg.norm(g.coords - c, axis=-1) <= epsilon)
    b2 = biaxiality_field(F, floor)[ball]
    det = ~np.isnan(b2)
    if not det.any():
        raise ResolutionError("no determinate nodes in the ball")
    sel = det.copy()
    sel[det] = b2[det] > delta
    pts = g.coords[ball][sel]
    vals = b2[det]
    return RegionStats(
        delta=float(delta), epsilon=float(epsilon), count=int(sel.sum()), diameter=max_pairwise_distance(pts),
        max_beta2=float(vals.max()), min_beta2=float(vals.min()), ball_nodes=int(ball.sum()),
        indeterminate=int((~det).sum()), uniaxial_fraction=float(np.mean(vals < 1e-6)),
    )


def biaxial_outside(F: QField, centers, delta: float = DEFAULT_DELTA, epsilon: float = DEFAULT_EPSILON,
                    floor: float = 1e-6) -> int:
    """Number of nodes with ``beta^2 > delta`` farther than ``epsilon`` from every centre."""
    g = F.grid
    b2 = biaxiality_field(F, floor)
    hot = g.interior & (np.nan_to_num(b2, nan=-1.0) > delta)
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    for c in centers:
        hot &= np.linalg.norm(g.coords - c, axis=-1) > epsilon
    return int(hot.sum())


# ---------------------------------------------------------------- scaling


@dataclass
class ScalingFit:
    samples: list
    slope: float
    intercept: float
    residual: float
    half_width: float
    excluded: list = dc_field(default_factory=list)

    @property
    def prefactor(self):
        return float(np.exp(self.intercept))

    def as_dict(self):
        d = asdict(self)
        d["prefactor"] = self.prefactor
        return d


def fit_scaling(samples, h: float | None = None, min_samples: int = 4, level: float = 0.95) -> ScalingFit:
    """Least squares fit of ``log d = slope log t + intercept``.

    Samples with ``d <= 4h`` are under-resolved; they are reported in
    ``excluded`` and left out.  At least ``min_samples`` resolved samples
    are required.  ``half_width`` is the ``level`` confidence half-width of
    the slope (zero for an exact fit).
    """
    samples = [(float(t), float(d)) for t, d in samples]
    if len(samples) < min_samples:
        raise ScalingError(f"need at least {min_samples} samples, got {len(samples)}")
    used, excluded = [], []
    for t, d in samples:
        if d <= 0 or (h is not None and d <= 4 * h):
            excluded.append((t, d))
        else:
            used.append((t, d))
    if excluded:
        logger.warning("under-resolved samples excluded from the fit: %s", excluded)
    if len(used) < min_samples:
        raise ScalingError(f"only {len(used)} resolved samples (need {min_samples}); excluded {excluded}")
    x = np.log([t for t, _ in used])
    y = np.log([d for _, d in used])
    fit = stats.linregress(x, y)
    res = y - (fit.slope * x + fit.intercept)
    hw = float(stats.t.ppf(0.5 + level / 2, len(used) - 2) * fit.stderr)
    return ScalingFit(samples=used, slope=float(fit.slope), intercept=float(fit.intercept),
                      residual=float(np.sqrt(np.mean(res**2))), half_width=hw, excluded=excluded)


# ----------------------------------------------------------------- energy


def _ball_weights(grid, center, r):
    # smoothed indicator: a node counts fully once its cell is inside the ball
    d = np.linalg.norm(grid.coords - np.asarray(center), axis=-1)
    return np.clip((r - d) / grid.h + 0.5, 0.0, 1.0)


def normalized_energy(F: QField, center, radii, density=None) -> list:
    """``(r, (1/r) int_{B_r(center)} e dV)`` with ``e = |grad Q|^2/2 + f``.

    ``density`` may be passed to reuse a precomputed per-node density of
    the same convention (energy per unit volume divided by ``Lbar``).
    """
    g = F.grid
    c = np.asarray(center, dtype=float)
    if density is None:
        density = energy_total(F).density / F.params.Lbar
    out = []
    for r in radii:
        if r <= 0 or np.linalg.norm(c) + r > g.R + 1e-12:
            raise ValueError(f"ball of radius {r} at {c.tolist()} leaves the domain")
        w = _ball_weights(g, c, r)
        out.append((float(r), float(np.sum(w * density) * g.h**3 / r)))
    return out


def is_monotone(profile, slack: float = 0.03) -> bool:
    """Each value is at least ``(1 - slack)`` times the running maximum."""
    vals = np.array([v for _, v in profile])
    run = np.maximum.accumulate(vals)
    return bool(np.all(vals >= (1 - slack) * run - 1e-14))


def plateau(profile, r_lo: float, r_hi: float) -> dict:
    vals = np.array([v for r, v in profile if r_lo <= r <= r_hi])
    if vals.size == 0:
        raise ValueError("no radii inside the plateau window")
    return {"min": float(vals.min()), "max": float(vals.max()), "mean": float(vals.mean()), "count": int(vals.size)}


# --------------------------------------------------------- harmonic limit


@dataclass
class DistanceReport:
    sup_distance: float
    sup_norm_deviation: float
    nodes: int

    def as_dict(self):
        return asdict(self)


def _as_tensor(grid, n0):
    if hasattr(n0, "tensor"):
        return n0.tensor()
    n0 = np.asarray(n0, dtype=float)
    if n0.shape[-1] == 3:
        out = np.zeros(n0.shape[:-1] + (5,))
        act = grid.active
        out[act] = qt.vacuum(n0[act])
        return out
    return n0


def sup_distance(F: QField, n0, sigma_eps: float, singular=None) -> DistanceReport:
    """Sup of ``|Q - sqrt(3/2)(n0 n0 - I/3)|`` over interior nodes at distance ``>= sigma_eps`` from ``singular``.

    Comparing tensors makes the distance insensitive to ``n0 -> -n0``.
    ``n0`` is a director array, a director state or a component array.
    Also reports ``sup ||Q| - 1|`` over the whole interior.
    """
    g = F.grid
    target = _as_tensor(g, n0)
    keep = g.interior.copy()
    if singular is not None:
        for c in np.asarray(singular, dtype=float).reshape(-1, 3):
            keep &= np.linalg.norm(g.coords - c, axis=-1) >= sigma_eps
    if not keep.any():
        raise ResolutionError("no nodes outside the excluded set")
    dist = np.linalg.norm(F.values[keep] - target[keep], axis=-1)
    dev = np.abs(np.linalg.norm(F.interior_values, axis=-1) - 1.0)
    return DistanceReport(sup_distance=float(dist.max()), sup_norm_deviation=float(dev.max()), nodes=int(keep.sum()))


# ---------------------------------------------------------------- blow-up


def _polar(M):
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def procrustes_directors(xhat, m, starts: int = 24, seed: int = 0, iters: int = 50):
    """Orthogonal ``T`` minimising ``sum_i min_s |T xhat_i - s m_i|^2`` over signs ``s``.

    Alternates a per-sample sign choice with an orthogonal Procrustes
    solve, started from the identity and ``starts`` random orthogonal
    matrices; returns ``(T, signs, cost)`` of the best run.
    """
    rng = np.random.default_rng(seed)
    inits = [np.eye(3)] + [_polar(rng.standard_normal((3, 3))) for _ in range(starts)]
    best = None
    for T in inits:
        for _ in range(iters):
            s = np.sign(np.einsum("ij,ij->i", xhat @ T.T, m))
            s[s == 0] = 1.0
            Tn = _polar((s[:, None] * m).T @ xhat)
            done = np.max(np.abs(Tn - T)) < 1e-14
            T = Tn
            if done:
                break
        s = np.sign(np.einsum("ij,ij->i", xhat @ T.T, m))
        s[s == 0] = 1.0
        cost = float(np.sum((xhat @ T.T - s[:, None] * m) ** 2))
        if best is None or cost < best[2]:
            best = (T, s, cost)
    return best


@dataclass
class BlowupFit:
    T: np.ndarray
    rel_err: float
    nodes: int
    xi: float
    inner: float
    outer: float

    def as_dict(self):
        d = asdict(self)
        d["T"] = self.T.tolist()
        return d


def blowup_compare(F: QField, core, profile: HedgehogProfile, window: float, inner: float = 2.0,
                   min_nodes: int = 50, xi: float | None = None) -> BlowupFit:
    """Fit the hedgehog ``H_T`` to ``F`` on the annulus ``xi * [inner, window]`` around ``core``.

    ``window`` and ``inner`` are in units of the core length ``xi``
    (default ``xi_b``).  Directors are the top eigenvectors; ``T`` comes
    from :func:`procrustes_directors`.  The error is the discrete relative
    L2 norm ``|F - H_T| / |H_T|`` over the annulus.
    """
    g = F.grid
    xi = F.params.xi_b if xi is None else xi
    c = np.asarray(core, dtype=float)
    rel = g.coords - c
    d = np.linalg.norm(rel, axis=-1)
    ann = g.interior & (d >= inner * xi) & (d <= window * xi)
    count = int(ann.sum())
    if count < min_nodes:
        raise ResolutionError(f"annulus has {count} nodes (< {min_nodes}); refine the grid or widen the window")
    x = rel[ann]
    xhat = x / d[ann][:, None]
    m = qt.eigen(F.values[ann]).vectors[..., :, 0]
    T, _, _ = procrustes_directors(xhat, m)
    H = hedgehog_field(profile, T, x / xi)
    err = float(np.linalg.norm(F.values[ann] - H) / np.linalg.norm(H))
    return BlowupFit(T=T, rel_err=err, nodes=count, xi=float(xi), inner=float(inner), outer=float(window))


# ------------------------------------------------------------ GL residual


@dataclass
class GLReport:
    residual: float
    energy_per_radius: float
    min_norm: float
    nodes: int
    under_resolved: bool

    def as_dict(self):
        return asdict(self)


def gl_residual(F: QField, core, window: float) -> GLReport:
    """Ginzburg-Landau residual of the field rescaled by ``xi_b`` around ``core``.

    With ``Qt(y) = Q(core + xi_b y)`` the residual is
    ``sup |xi_b^2 lap_h Q - (|Q|^2 - 1) Q|`` over interior nodes within
    ``window`` (physical units).  The rescaled GL energy per unit radius is
    ``(1/W) int_{B_W} |grad Qt|^2/2 + (1 - |Qt|^2)^2/4`` with ``W = window/xi_b``.
    """
    g = F.grid
    xi = F.params.xi_b
    if window < 4 * xi:
        raise ValueError(f"window {window} is below 4 xi_b = {4 * xi}")
    under = xi < 2 * g.h
    if under:
        logger.warning("core length xi_b=%.3g is below 2h=%.3g", xi, 2 * g.h)
    c = np.asarray(core, dtype=float)
    ball = g.interior & (np.linalg.norm(g.coords - c, axis=-1) <= window)
    q = F.values[ball]
    lap = laplacian_array(F.values, g)[ball]
    nsq = np.sum(q**2, axis=-1, keepdims=True)
    res = xi**2 * lap - (nsq - 1.0) * q
    # elastic density from the shared per-node split, with the GL potential on top
    E = energy_total(F)
    dens = E.density.copy()
    dens[g.interior] -= bulk_reduced(F.interior_values, F.params)
    dens /= F.params.Lbar
    dens[g.interior] += 0.25 * (1.0 - np.sum(F.interior_values**2, axis=-1)) ** 2 / xi**2
    w = _ball_weights(g, c, window)
    energy = float(np.sum(w * dens) * g.h**3 / window)
    return GLReport(residual=float(np.max(np.abs(res))), energy_per_radius=energy,
                    min_norm=float(np.sqrt(nsq.min())), nodes=int(ball.sum()), under_resolved=bool(under))
