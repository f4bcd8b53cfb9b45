"""Radial-hedgehog profile ``h(r)`` and the blow-up tensor field built from it.

The profile solves

    h'' + (2/r) h' - 6 h / r^2 = h^3 - h,    h(0) = 0,  h(inf) = 1.

Near ``r = 0`` the bounded branch is ``h = a r^2 - a r^4 / 14 + ...`` (indicial
exponents 2 and -3); far away ``h = 1 - 3/r^2 - 7.5/r^4 - ...``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_bvp, solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .qtensor import SQ3_2, from_matrix

logger = logging.getLogger(__name__)

R0 = 1e-3


class ShootingError(RuntimeError):
    pass


def _rhs(r, y):
    h, dh = y
    return np.array([dh, h**3 - h - 2.0 * dh / r + 6.0 * h / r**2])


def far_field_coefficients(k_max: int = 12) -> np.ndarray:
    """Coefficients ``c_k`` of ``1 - h ~ sum_k c_k r^(-2k)`` (``c_1 = 3``)."""
    c = np.zeros(k_max + 1)
    for k in range(1, k_max + 1):
        rhs = 6.0 if k == 1 else 0.0
        if k > 1:
            m = 2 * (k - 1)
            rhs += (m * (m - 1) - 6.0) * c[k - 1]
        rhs += 3.0 * sum(c[i] * c[k - i] for i in range(1, k))
        rhs -= sum(c[i] * c[j] * c[k - i - j] for i in range(1, k) for j in range(1, k - i))
        c[k] = rhs / 2.0
    return c


_C = far_field_coefficients()


def far_field(r):
    """Optimally truncated asymptotic series for ``(h, h')`` at large ``r``."""
    r = np.asarray(r, dtype=float)
    terms = np.array([_C[k] * r ** (-2 * k) for k in range(1, len(_C))])
    # stop before the terms start to grow
    mags = np.abs(terms)
    grow = np.cumsum(np.diff(mags, axis=0, prepend=mags[:1] * 2) > 0, axis=0) > 0
    terms = np.where(grow, 0.0, terms)
    dterms = np.array([-2 * k * _C[k] * r ** (-2 * k - 1) for k in range(1, len(_C))])
    dterms = np.where(grow, 0.0, dterms)
    return 1.0 - terms.sum(axis=0), -dterms.sum(axis=0)


def _series_start(a, r0=R0):
    return np.array([a * r0**2 - a * r0**4 / 14.0, 2 * a * r0 - 4 * a * r0**3 / 14.0])


def _shoot(a, r_max, rtol):
    """Classify a trial coefficient: +1 overshoot (h > 1), -1 undershoot (h' < 0), 0 neither."""

    def over(r, y):
        return y[0] - 1.0

    def under(r, y):
        return y[1]

    over.terminal = under.terminal = True
    over.direction, under.direction = 1, -1
    sol = solve_ivp(_rhs, (R0, r_max), _series_start(a), method="RK45", rtol=rtol, atol=rtol * 1e-2,
                    events=(over, under))
    if sol.t_events[0].size:
        return 1, sol.t_events[0][0]
    if sol.t_events[1].size:
        return -1, sol.t_events[1][0]
    return 0, r_max


def shoot_coefficient(r_max: float = 20.0, tol: float = 1e-10, bracket=(0.05, 2.0), rel: float = 1e-15):
    """Bisect on the ``r^2`` coefficient until the bracket collapses.

    ``bracket`` must straddle the answer (lower end undershoots, upper end
    overshoots); otherwise :class:`ShootingError` lists the tried range.
    """
    lo, hi = map(float, bracket)
    klo, _ = _shoot(lo, r_max, tol)
    khi, _ = _shoot(hi, r_max, tol)
    if klo != -1 or khi != 1:
        raise ShootingError(f"no bracket in a = [{lo}, {hi}] (classes {klo}, {khi})")
    while hi - lo > rel * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        k, _ = _shoot(mid, r_max, tol)
        if k == 1:
            hi = mid
        elif k == -1:
            lo = mid
        else:
            lo = hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class HedgehogProfile:
    r_max: float
    r: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    a2: float
    a2_shooting: float
    residual: float

    def __post_init__(self):
        object.__setattr__(self, "_spline", CubicHermiteSpline(self.r, self.h, self.dh))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "h", "dh"])
            for row in zip(self.r, self.h, self.dh):
                w.writerow([repr(float(x)) for x in row])

    def metadata(self) -> dict:
        return {"a2": self.a2, "a2_shooting": self.a2_shooting, "r_max": self.r_max, "residual": self.residual}

    def export(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.to_csv(directory / "profile.csv")
        (directory / "profile.json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True))


def _table_mesh(r_max):
    inner = np.arange(R0, 1.0, 1e-3)
    mid = np.arange(1.0, 10.0, 2e-3)
    outer = np.arange(10.0, r_max, 5e-3)
    return np.concatenate([inner, mid, outer, [r_max]])


def solve_profile(r_max: float = 20.0, tol: float = 1e-10, bracket=(0.05, 2.0)) -> HedgehogProfile:
    """Solve the hedgehog boundary-value problem on ``[0, r_max]``.

    The ``r^2`` coefficient is first bracketed by shooting and bisection; the
    shot is only trustworthy up to the radius where roundoff excites the
    growing exponential mode, so the profile itself comes from a collocation
    solve seeded by the shot, with the asymptotic far field imposed at
    ``r_max`` and the bounded series branch imposed at ``r = 1e-3``.
    """
    if r_max < 20:
        raise ValueError("r_max must be at least 20")
    a_shoot = shoot_coefficient(r_max, tol, bracket)

    def bc(ya, yb):
        start = _series_start(1.0)
        ratio = start[1] / start[0]
        hb, _ = far_field(r_max)
        return np.array([ya[1] - ratio * ya[0], yb[0] - hb])

    # initial guess: shot solution while it stays monotone and below 1, far field after
    mesh = np.concatenate([np.geomspace(R0, 1.0, 60, endpoint=False), np.linspace(1.0, r_max, 400)])
    shot = solve_ivp(_rhs, (R0, r_max), _series_start(a_shoot), method="RK45", rtol=tol, atol=tol * 1e-2,
                     dense_output=True)
    y0 = np.empty((2, mesh.size))
    y0[:, :] = np.nan
    ff = np.array(far_field(mesh))
    y0[:, :] = shot.sol(mesh) if shot.status == 0 else ff
    bad = (y0[0] > 1) | (y0[1] < 0) | ~np.isfinite(y0[0])
    if bad.any():
        first = np.argmax(bad)
        y0[:, first:] = ff[:, first:]
    res = solve_bvp(_rhs, bc, mesh, y0, tol=tol, max_nodes=200000, bc_tol=tol)
    if not res.success:
        raise ShootingError(f"collocation refinement failed: {res.message}")
    r = _table_mesh(r_max)
    h, dh = res.sol(r)
    a2 = float(h[0] / (R0**2 - R0**4 / 14.0))
    r = np.concatenate([[0.0], r])
    h = np.concatenate([[0.0], h])
    dh = np.concatenate([[0.0], dh])
    prof = HedgehogProfile(r_max=float(r_max), r=r, h=h, dh=dh, a2=a2, a2_shooting=a_shoot, residual=np.nan)
    object.__setattr__(prof, "residual", ode_residual(prof))
    logger.info("hedgehog profile: a2=%.12g (shooting %.12g), residual %.3g", a2, a_shoot, prof.residual)
    return prof


def eval_h(p: HedgehogProfile, r):
    """Profile value at ``r``; the asymptotic series is used beyond ``r_max``."""
    r = np.asarray(r, dtype=float)
    inside = np.clip(r, 0.0, p.r_max)
    out = p._spline(inside)
    if np.any(r > p.r_max):
        out = np.where(r > p.r_max, far_field(np.maximum(r, p.r_max))[0], out)
    out = np.where(r <= 0.0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def hedgehog_field(p: HedgehogProfile, T, x):
    """``sqrt(3/2) h(|x|) (T x (x) T x / |x|^2 - I/3)`` for points ``x`` of shape ``(..., 3)``."""
    T = np.asarray(T, dtype=float)
    if np.max(np.abs(T @ T.T - np.eye(3))) > 1e-10:
        raise ValueError("T must be orthogonal")
    x = np.asarray(x, dtype=float)
    rad = np.linalg.norm(x, axis=-1)
    safe = np.where(rad > 0, rad, 1.0)
    u = np.einsum("ij,...j->...i", T, x) / safe[..., None]
    amp = SQ3_2 * eval_h(p, rad)
    m = amp[..., None, None] * (u[..., :, None] * u[..., None, :] - np.eye(3) / 3.0)
    return np.where((rad > 0)[..., None], from_matrix(m), 0.0)


def _fd_derivative(r, y):
    """Fourth-order first derivative from 5-point Lagrange stencils (any mesh)."""
    d = np.gradient(y, r, edge_order=2)
    idx = np.arange(2, r.size - 2)
    pts = np.stack([r[idx + k] for k in range(-2, 3)])
    x0 = r[idx]
    w = np.zeros_like(pts)
    for j in range(5):
        for k in range(5):
            if k == j:
                continue
            term = 1.0 / (pts[j] - pts[k])
            for m in range(5):
                if m not in (j, k):
                    term = term * (x0 - pts[m]) / (pts[j] - pts[m])
            w[j] += term
    d[idx] = sum(w[k] * y[idx + k - 2] for k in range(5))
    return d


def ode_residual(p: HedgehogProfile, r_min: float = 0.01) -> float:
    """Sup of the ODE residual on ``[r_min, r_max]`` with ``h''`` from differencing ``h'``."""
    r, h, dh = p.r, p.h, p.dh
    d2h = _fd_derivative(r, dh)
    res = d2h + 2.0 * dh / np.where(r > 0, r, 1.0) - 6.0 * h / np.where(r > 0, r, 1.0) ** 2 - (h**3 - h)
    sel = (r >= r_min) & (r <= p.r_max)
    # endpoints of the table carry one-sided stencils
    sel[-2:] = False
    return float(np.max(np.abs(res[sel])))


def radial_profile_from_series(a: float, r_end: float, rtol: float = 1e-12):
    """Direct forward integration from the series start; used as a cross-check."""
    return solve_ivp(_rhs, (R0, r_end), _series_start(a), method="DOP853", rtol=rtol, atol=rtol * 1e-3,
                     dense_output=True)
