"""Masked-ball finite-difference grids carrying Q-tensor fields.

Values live on a full ``(n, n, n, 5)`` array.  Interior nodes (``|x| < R``)
are unknowns, shell nodes (non-interior nodes with an interior 6-neighbour)
carry frozen Dirichlet data evaluated at the radial projection ``x/|x|``,
and exterior nodes are zero.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.ndimage import binary_dilation, generate_binary_structure
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import cg

from . import qtensor as qt
from .material import ReducedParams, bulk_reduced, bulk_reduced_terms, bulk_gradient

logger = logging.getLogger(__name__)

SHIFTS = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]


class ConfigurationError(ValueError):
    pass


class DegreeError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    R: float
    h: float
    coords: np.ndarray  # (n, n, n, 3)
    interior: np.ndarray  # bool (n, n, n)
    shell: np.ndarray

    @property
    def active(self):
        return self.interior | self.shell

    @property
    def center_index(self):
        c = self.n // 2
        return (c, c, c)

    @property
    def radius(self):
        return np.linalg.norm(self.coords, axis=-1)


def build_grid(n: int, R: float = 1.0) -> Grid:
    if n < 17 or n % 2 == 0:
        raise ConfigurationError(f"n must be odd and at least 17, got {n}")
    if not R > 0:
        raise ConfigurationError("R must be positive")
    # one extra layer on each side so the shell never touches the array edge
    h = 2.0 * R / (n - 1)
    ax = np.linspace(-R, R, n)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    coords = np.stack([X, Y, Z], axis=-1)
    rad = np.linalg.norm(coords, axis=-1)
    interior = rad < R * (1 - 1e-12)
    interior[[0, -1], :, :] = interior[:, [0, -1], :] = interior[:, :, [0, -1]] = False
    six = generate_binary_structure(3, 1)
    shell = binary_dilation(interior, structure=six) & ~interior
    return Grid(n=n, R=float(R), h=h, coords=coords, interior=interior, shell=shell)


@dataclass(frozen=True)
class DirectorField:
    """Boundary director: ``radial``, ``azimuthal`` (degree ``d`` about the z axis) or ``constant``."""

    kind: str = "radial"
    degree: int = 1
    axis: tuple = (0.0, 0.0, 1.0)
    rotation: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("radial", "azimuthal", "constant"):
            raise ConfigurationError(f"unknown director kind {self.kind!r}")

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        rad = np.linalg.norm(x, axis=-1)
        if np.any(rad == 0):
            raise ValueError("director undefined at the origin")
        if self.rotation is not None:
            R = np.asarray(self.rotation, dtype=float)
            x = np.einsum("ji,...j->...i", R, x)  # R^T x
        u = x / rad[..., None]
        if self.kind == "radial":
            out = u
        elif self.kind == "constant":
            a = np.asarray(self.axis, dtype=float)
            out = np.broadcast_to(a / np.linalg.norm(a), x.shape).copy()
        else:
            theta = np.arccos(np.clip(u[..., 2], -1.0, 1.0))
            phi = np.arctan2(u[..., 1], u[..., 0])
            d = self.degree
            st = np.sin(theta)
            out = np.stack([st * np.cos(d * phi), st * np.sin(d * phi), np.cos(theta)], axis=-1)
        if self.rotation is not None and self.kind != "constant":
            out = np.einsum("ij,...j->...i", R, out)
        return out


def eval_director(df: DirectorField, x):
    return df.evaluate(x)


def _degree_quadrature(df: DirectorField, mesh_n: int) -> float:
    nt, nph = mesh_n, 2 * mesh_n
    dth, dph = math.pi / nt, 2 * math.pi / nph
    th = (np.arange(nt) + 0.5) * dth
    ph = np.arange(nph) * dph
    T, P = np.meshgrid(th, ph, indexing="ij")

    def at(t, p):
        x = np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)
        return df.evaluate(x)

    e = 1e-5
    n0 = at(T, P)
    n_t = (at(T + e, P) - at(T - e, P)) / (2 * e)
    n_p = (at(T, P + e) - at(T, P - e)) / (2 * e)
    integrand = np.einsum("...i,...i->...", n0, np.cross(n_t, n_p))
    return float(integrand.sum() * dth * dph / (4 * math.pi))


def boundary_degree(df: DirectorField, mesh_n: int = 128, snap: float = 0.02, refinements: int = 3):
    """Topological degree of the boundary director; returns ``(degree, raw)``."""
    raw = _degree_quadrature(df, mesh_n)
    for _ in range(refinements):
        if abs(raw - round(raw)) <= snap:
            break
        mesh_n *= 2
        raw = _degree_quadrature(df, mesh_n)
    if abs(raw - round(raw)) > 0.1:
        raise DegreeError(f"degree quadrature did not converge: raw value {raw}")
    return int(round(raw)), raw


@dataclass(eq=False)
class QField:
    grid: Grid
    values: np.ndarray  # (n, n, n, 5)
    params: ReducedParams
    director: DirectorField | None = None

    def copy(self) -> "QField":
        return replace(self, values=self.values.copy())

    def with_values(self, values) -> "QField":
        return replace(self, values=values)

    @property
    def interior_values(self):
        return self.values[self.grid.interior]

    def set_interior(self, vals):
        out = self.values.copy()
        out[self.grid.interior] = vals
        return self.with_values(out)

    @property
    def norm(self):
        return np.linalg.norm(self.values, axis=-1)


def shell_values(grid: Grid, df: DirectorField):
    vals = np.zeros(grid.coords.shape[:-1] + (5,))
    x = grid.coords[grid.shell]
    vals[grid.shell] = qt.vacuum(df.evaluate(x))
    return vals


def _interior_index(grid: Grid):
    idx = -np.ones(grid.interior.shape, dtype=np.int64)
    idx[grid.interior] = np.arange(grid.interior.sum())
    return idx


def harmonic_extension(grid: Grid, boundary):
    """Componentwise discrete harmonic extension of shell data (conjugate gradients)."""
    idx = _interior_index(grid)
    N = int(grid.interior.sum())
    pts = np.argwhere(grid.interior)
    rows, cols, data = [np.arange(N)], [np.arange(N)], [np.full(N, 6.0)]
    rhs = np.zeros((N, boundary.shape[-1]))
    for s in SHIFTS:
        nb = pts + np.array(s)
        j = idx[nb[:, 0], nb[:, 1], nb[:, 2]]
        inner = j >= 0
        rows.append(np.nonzero(inner)[0])
        cols.append(j[inner])
        data.append(-np.ones(inner.sum()))
        rhs[~inner] += boundary[nb[~inner, 0], nb[~inner, 1], nb[~inner, 2]]
    A = coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)).tocsc()
    out = boundary.copy()
    for c in range(rhs.shape[1]):
        sol, info = cg(A, rhs[:, c], rtol=1e-12, maxiter=20 * grid.n)
        if info:
            logger.warning("harmonic extension: CG stopped with info=%d", info)
        out[grid.interior, c] = sol
    return out


def init_field(grid: Grid, df: DirectorField, rp: ReducedParams, init: str = "radial-ansatz", seed: int = 0,
               profile=None, perturb: float = 0.0) -> QField:
    """Initial field with Dirichlet shell data and one of three interior initializers.

    ``harmonic-extension``: discrete harmonic extension of the shell tensors.
    ``radial-ansatz``: ``sqrt(3/2) h(|x|/xi_b) (n n - I/3)`` with ``n`` the
    boundary director at ``x/|x|``; vanishes at the origin.
    ``random``: independent Gaussian tensors scaled to ``|Q| <= 1``.
    ``perturb`` adds seeded noise of that amplitude to any initializer.
    """
    vals = shell_values(grid, df)
    interior = grid.interior
    rng = np.random.default_rng(seed)
    if init == "harmonic-extension":
        vals = harmonic_extension(grid, vals)
    elif init == "radial-ansatz":
        from .hedgehog import eval_h, solve_profile

        prof = profile if profile is not None else solve_profile()
        x = grid.coords[interior]
        rad = np.linalg.norm(x, axis=-1)
        amp = eval_h(prof, rad / rp.xi_b)
        nz = rad > 0
        q = np.zeros((x.shape[0], 5))
        q[nz] = amp[nz, None] * qt.vacuum(df.evaluate(x[nz]))
        vals[interior] = q
    elif init == "random":
        q = rng.standard_normal((int(interior.sum()), 5))
        q /= np.maximum(np.linalg.norm(q, axis=-1, keepdims=True), 1.0) * 1.5
        vals[interior] = q
    else:
        raise ConfigurationError(f"unknown initializer {init!r}")
    if perturb:
        vals[interior] += perturb * rng.standard_normal((int(interior.sum()), 5))
    return QField(grid=grid, values=vals, params=rp, director=df)


def laplacian_array(values, grid: Grid):
    """7-point Laplacian of a full array; zero outside the interior."""
    out = np.zeros_like(values)
    v = values
    c = v[1:-1, 1:-1, 1:-1]
    acc = (
        v[2:, 1:-1, 1:-1] + v[:-2, 1:-1, 1:-1] + v[1:-1, 2:, 1:-1] + v[1:-1, :-2, 1:-1]
        + v[1:-1, 1:-1, 2:] + v[1:-1, 1:-1, :-2] - 6.0 * c
    )
    out[1:-1, 1:-1, 1:-1] = acc / grid.h**2
    out[~grid.interior] = 0.0
    return out


def laplacian(F: QField):
    return laplacian_array(F.values, F.grid)


def _edge_masks(grid: Grid):
    """For each axis, mask of edges (i, i+e) with at least one interior end."""
    I = grid.interior
    return [
        I[1:, :, :] | I[:-1, :, :],
        I[:, 1:, :] | I[:, :-1, :],
        I[:, :, 1:] | I[:, :, :-1],
    ]


def _edge_sq(values, grid: Grid):
    """Squared differences on each axis' edges, masked to edges touching the interior."""
    masks = _edge_masks(grid)
    diffs = [np.diff(values, axis=a) for a in range(3)]
    return [np.sum(d * d, axis=-1) * m for d, m in zip(diffs, masks)]


def elastic_energy(values, grid: Grid, Lbar: float) -> float:
    return 0.5 * Lbar * grid.h * sum(float(e.sum()) for e in _edge_sq(values, grid))


@dataclass
class Energy:
    total: float
    elastic: float
    bulk: float
    bulk_temperature: float
    bulk_biaxial: float
    density: np.ndarray = dc_field(repr=False)


def energy_total(F: QField) -> Energy:
    """Discrete energy ``sum_edges Lbar/2 |dQ/h|^2 h^3 + sum_interior Lbar f h^3``.

    The per-node density assigns half of each edge term to each end, so
    ``density.sum() * h**3 == total``.
    """
    g = F.grid
    h3 = g.h**3
    esq = _edge_sq(F.values, g)
    elastic = 0.5 * F.params.Lbar * g.h * sum(float(e.sum()) for e in esq)
    dens = np.zeros(g.interior.shape)
    for a, e in enumerate(esq):
        half = 0.25 * F.params.Lbar * e / g.h**2
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[a] = slice(0, -1)
        sl_hi[a] = slice(1, None)
        dens[tuple(sl_lo)] += half
        dens[tuple(sl_hi)] += half
    temp, biax = bulk_reduced_terms(F.interior_values, F.params)
    dens[g.interior] += temp + biax
    bt, bb = float(temp.sum()) * h3, float(biax.sum()) * h3
    return Energy(total=elastic + bt + bb, elastic=elastic, bulk=bt + bb, bulk_temperature=bt,
                  bulk_biaxial=bb, density=dens)


def energy_value(values, grid: Grid, rp: ReducedParams) -> float:
    bulk = float(bulk_reduced(values[grid.interior], rp).sum()) * grid.h**3
    return elastic_energy(values, grid, rp.Lbar) + bulk


def el_residual(values, grid: Grid, rp: ReducedParams):
    """Per-volume energy gradient ``-Lbar lap Q + Lbar Gamma(Q)`` on interior nodes, shape ``(N, 5)``."""
    lap = laplacian_array(values, grid)[grid.interior]
    return -rp.Lbar * lap + bulk_gradient(values[grid.interior], rp)


def energy_and_gradient(values, grid: Grid, rp: ReducedParams):
    """Total discrete energy and per-volume gradient on interior nodes (fused kernel)."""
    from ._kernels import energy_grad

    grad = np.empty((int(grid.interior.sum()), 5))
    el, bulk = energy_grad(np.ascontiguousarray(values), grid.interior, grid.h, rp.t, rp.h_plus, rp.Lbar, grad)
    return el + bulk, grad
