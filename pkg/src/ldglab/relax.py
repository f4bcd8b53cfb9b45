"""Energy minimisation on masked-ball grids.

Three solvers share the same discrete energy from :mod:`ldglab.field`:

* :func:`minimize_full` - unconstrained Q-tensor minimisation.
* :func:`minimize_uniaxial` - minimisation over uniaxial tensors with
  non-negative order parameter.
* :func:`harmonic_map` - S^2-valued Dirichlet energy minimisation for the
  limiting director.

Gradients are reported per unit volume, so the stopping test
``sup |grad| <= tol_grad`` reads directly as a bound on the discrete
Euler-Lagrange residual ``|Lbar lap Q - Lbar Gamma(Q)|``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import qtensor as qt
from .field import (
    DirectorField,
    Grid,
    QField,
    el_residual,
    energy_and_gradient,
    energy_value,
    laplacian_array,
)

logger = logging.getLogger(__name__)

# relative energy change treated as roundoff by the line search
ROUNDOFF = 1e-12


@dataclass
class SolveOptions:
    max_iters: int = 20000
    tol_grad: float | None = None  # None -> see tolerance()
    step0: float | None = None  # None -> h^2 / (12 Lbar)
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    log_every: int = 200
    method: str = "lbfgs"
    memory: int = 10
    log_path: str | None = None

    def __post_init__(self):
        if self.tol_grad is not None and not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")

    def tolerance(self, t: float, h: float, Lbar: float = 1.0) -> float:
        """Gradient threshold.

        The default bounds the update of the reference explicit flow (step
        ``h^2 / (12 Lbar)``) by ``1e-7 t / 100``; divided by that step it
        becomes a bound on the gradient itself.
        """
        if self.tol_grad is not None:
            return self.tol_grad
        return 1e-7 * (t / 100.0) * 12.0 * Lbar / h**2


@dataclass
class ConvergedState:
    field: object
    iterations: int
    energy: float
    grad_sup: float
    converged: bool
    energies: list = dc_field(default_factory=list, repr=False)
    message: str = ""
    extra: dict = dc_field(default_factory=dict)


class _Log:
    def __init__(self, path, every):
        self.every = max(int(every), 1)
        self.fh = open(path, "w", newline="") if path else None
        if self.fh:
            self.w = csv.writer(self.fh)
            self.w.writerow(["iter", "energy", "grad_sup", "step"])

    def __call__(self, k, energy, grad_sup, step, force=False):
        if k % self.every == 0 or force:
            logger.debug("iter %d energy %.12g grad %.3g step %.3g", k, energy, grad_sup, step)
            if self.fh:
                self.w.writerow([k, repr(energy), repr(grad_sup), repr(step)])

    def close(self):
        if self.fh:
            self.fh.close()


def _lbfgs(fun, x0, tol, opts: SolveOptions, residual, log: _Log):
    """Limited-memory BFGS (two-loop recursion) with monotone backtracking.

    ``fun`` returns ``(value, gradient)``; iteration stops once the sup-norm
    of the gradient drops to ``tol``.  Steps that fail to decrease the value
    are rejected, so the recorded values are non-increasing.  When the
    decrease falls below roundoff, a step that keeps the value within
    ``ROUNDOFF`` relative and reduces the gradient norm is accepted instead;
    if no such step exists the memory is reset once and the run ends if that
    does not help either.
    """
    from ._kernels import two_loop

    x = x0.copy()
    f, g = fun(x)
    energies = [f]
    m = opts.memory
    S = np.empty((m, x.size))
    Y = np.empty((m, x.size))
    rho = np.empty(m)
    order: list[int] = []
    d = np.empty_like(x)
    k = 0
    msg = "max_iters reached"
    stalls = 0
    while k < opts.max_iters:
        gsup = float(np.max(np.abs(g))) if g.size else 0.0
        if gsup <= tol:
            msg = "converged"
            break
        if order:
            j = order[-1]
            gamma = float(S[j] @ Y[j]) / float(Y[j] @ Y[j])
        else:
            gamma = 1e-2 / max(gsup, 1e-300)
        two_loop(g, S, Y, rho, np.array(order, dtype=np.int64), gamma, d)
        np.negative(d, out=d)
        slope = float(g @ d)
        if slope >= 0:
            order = []
            d = -g * (1e-2 / max(gsup, 1e-300))
            slope = float(g @ d)
        step = 1.0
        accepted = False
        for _ in range(40):
            xn = x + step * d
            fn, gn = fun(xn)
            if fn <= f + opts.armijo_c * step * slope:
                accepted = True
                break
            # approximate Wolfe: energy flat to roundoff but the slope drops
            if abs(fn - f) <= ROUNDOFF * abs(f) and float(gn @ d) <= 0.9 * abs(slope) and float(gn @ gn) < float(g @ g):
                accepted = True
                break
            step *= opts.backtrack
        if not accepted:
            stalls += 1
            if stalls > 1 or not order:
                msg = "line search stalled (roundoff)"
                break
            order = []
            continue
        stalls = 0
        slot = order.pop(0) if len(order) == m else min(set(range(m)) - set(order))
        np.subtract(xn, x, out=S[slot])
        np.subtract(gn, g, out=Y[slot])
        sy = float(S[slot] @ Y[slot])
        if sy > 1e-12 * float(np.sqrt((S[slot] @ S[slot]) * (Y[slot] @ Y[slot]))):
            rho[slot] = 1.0 / sy
            order.append(slot)
        step_sup = float(np.max(np.abs(S[slot])))
        x, f, g = xn, fn, gn
        k += 1
        energies.append(f)
        log(k, f, float(np.max(np.abs(g))), step_sup)
    return x, k, energies, msg


def _armijo(fun, x0, tol, opts: SolveOptions, step0, residual, log: _Log, project=None):
    """Explicit (optionally projected) gradient descent with Armijo backtracking."""
    x = x0.copy()
    if project is not None:
        x = project(x)
    f, g = fun(x)
    energies = [f]
    step = step0
    k = 0
    msg = "max_iters reached"
    while k < opts.max_iters:
        r = residual(x, g)
        if r <= tol:
            msg = "converged"
            break
        while True:
            xn = x - step * g
            if project is not None:
                xn = project(xn)
            fn, gn = fun(xn)
            dx = xn - x
            if fn <= f - opts.armijo_c / step * float(dx @ dx) or step < 1e-16:
                break
            step *= opts.backtrack
        if step < 1e-16:
            msg = "step underflow"
            break
        k += 1
        log(k, fn, r, step)
        x, f, g = xn, fn, gn
        energies.append(f)
        step = min(step / opts.backtrack, 64 * step0)
    return x, k, energies, msg


def minimize_full(F0: QField, opts: SolveOptions | None = None) -> ConvergedState:
    """Minimise the discrete LdG energy over interior values (shell frozen)."""
    opts = opts or SolveOptions()
    g, rp = F0.grid, F0.params
    h3 = g.h**3
    mask = g.interior
    base = F0.values.copy()
    N = int(mask.sum())
    tol = opts.tolerance(rp.t, g.h, rp.Lbar)

    flat = base.reshape(-1, 5)
    where = np.flatnonzero(mask)

    def unpack(x):
        # writes into a shared buffer; copy before keeping the result
        flat[where] = x.reshape(N, 5)
        return base

    def fun(x):
        e, grad = energy_and_gradient(unpack(x), g, rp)
        return e / h3, grad.ravel()

    def residual(x, grad):
        return float(np.max(np.abs(grad))) if grad.size else 0.0

    log = _Log(opts.log_path, opts.log_every)
    x0 = F0.values[mask].ravel()
    try:
        if opts.method == "lbfgs":
            x, k, energies, msg = _lbfgs(fun, x0, tol, opts, residual, log)
        elif opts.method == "gd":
            step0 = opts.step0 or g.h**2 / (12.0 * rp.Lbar)
            x, k, energies, msg = _armijo(fun, x0, tol, opts, step0, residual, log)
        else:
            raise ValueError(f"unknown method {opts.method!r}")
        v = unpack(x).copy()
        gsup = float(np.max(np.abs(el_residual(v, g, rp)))) if N else 0.0
        e = energy_value(v, g, rp)
        log(k, e, gsup, 0.0, force=True)
    finally:
        log.close()
    energies = [float(E) * h3 for E in energies]
    return ConvergedState(field=F0.with_values(v), iterations=k, energy=e, grad_sup=gsup,
                          converged=gsup <= tol, energies=energies, message=msg)


def uniaxial_residual(q, grad, floor: float = 1e-8):
    """Per-node norm of the gradient component tangent to the uniaxial cone ``s >= 0``.

    At nodes with order parameter above ``floor`` this is the projection onto
    the tangent space spanned by ``d s`` and director rotations; at isotropic
    nodes it is the size of the best feasible descent direction.
    """
    es = qt.eigen(q)
    n = es.vectors[..., :, 0]
    s = 1.5 * es.values[..., 0]
    G = qt.to_matrix(grad)
    A0 = qt.vacuum(n)
    along = np.sum(grad * A0, axis=-1)
    Gn = np.einsum("...ij,...j->...i", G, n)
    perp = Gn - np.sum(Gn * n, axis=-1)[..., None] * n
    tangent = np.sqrt(along**2 + 2.0 * np.sum(perp * perp, axis=-1))
    cone = np.linalg.norm(qt.project_uniaxial(-grad), axis=-1)
    return np.where(s > floor, tangent, cone)


def lift(u):
    """Uniaxial tensor ``sqrt(3/2) (u u - |u|^2 I/3)`` from a vector ``u``; ``s = sqrt(3/2)|u|^2``."""
    return qt.from_matrix(qt.SQ3_2 * u[..., :, None] * u[..., None, :])


def unlift(q):
    es = qt.eigen(qt.project_uniaxial(q))
    s = np.maximum(1.5 * es.values[..., 0], 0.0)
    return np.sqrt(s / qt.SQ3_2)[..., None] * es.vectors[..., :, 0]


def minimize_uniaxial(F0: QField, opts: SolveOptions | None = None) -> ConvergedState:
    """Minimise over uniaxial fields with non-negative order parameter.

    ``method="projected"`` runs projected gradient descent, mapping every
    trial point onto the nearest uniaxial tensor.  ``method="lbfgs"`` runs
    L-BFGS on the vector lift ``Q = sqrt(3/2)(u u - |u|^2 I/3)``, which spans
    the same set smoothly (including ``s = 0``).
    """
    opts = opts or SolveOptions()
    g, rp = F0.grid, F0.params
    h3 = g.h**3
    mask = g.interior
    base = F0.values.copy()
    N = int(mask.sum())
    tol = opts.tolerance(rp.t, g.h, rp.Lbar)
    log = _Log(opts.log_path, opts.log_every)

    flat = base.reshape(-1, 5)
    where = np.flatnonzero(mask)

    def unpack(qint):
        # writes into a shared buffer; copy before keeping the result
        flat[where] = qint
        return base

    try:
        if opts.method == "lbfgs":
            def fun(x):
                u = x.reshape(N, 3)
                e, grad = energy_and_gradient(unpack(lift(u)), g, rp)
                G = qt.to_matrix(grad)
                return e / h3, (np.sqrt(6.0) * np.einsum("nij,nj->ni", G, u)).ravel()

            x0 = unlift(F0.values[mask]).ravel()
            x, k, energies, msg = _lbfgs(fun, x0, tol, opts, None, log)
            qint = lift(x.reshape(N, 3))
        elif opts.method == "projected":
            def fun(x):
                e, grad = energy_and_gradient(unpack(x.reshape(N, 5)), g, rp)
                return e / h3, grad.ravel()

            def project(x):
                return qt.project_uniaxial(x.reshape(N, 5)).ravel()

            def residual(x, grad):
                return float(np.max(uniaxial_residual(x.reshape(N, 5), grad.reshape(N, 5))))

            step0 = opts.step0 or g.h**2 / (12.0 * rp.Lbar)
            x, k, energies, msg = _armijo(fun, F0.values[mask].ravel(), tol, opts, step0, residual, log,
                                          project=project)
            qint = x.reshape(N, 5)
        else:
            raise ValueError(f"unknown method {opts.method!r}")
        v = unpack(qint).copy()
        grad = el_residual(v, g, rp)
        gsup = float(np.max(uniaxial_residual(qint, grad))) if N else 0.0
        e = energy_value(v, g, rp)
        log(k, e, gsup, 0.0, force=True)
    finally:
        log.close()
    energies = [float(E) * h3 for E in energies]
    return ConvergedState(field=F0.with_values(v), iterations=k, energy=e, grad_sup=gsup,
                          converged=gsup <= tol, energies=energies, message=msg)


@dataclass
class DirectorState:
    """S^2-valued field on the grid (zero outside interior and shell)."""

    grid: Grid
    n: np.ndarray  # (n, n, n, 3)

    def tensor(self):
        """Uniaxial lift ``sqrt(3/2)(n n - I/3)`` as a full component array."""
        out = np.zeros(self.n.shape[:-1] + (5,))
        act = self.grid.active
        out[act] = qt.vacuum(self.n[act])
        return out


def dirichlet_energy(n, grid: Grid) -> float:
    """Discrete ``int |grad n|^2`` over edges touching the interior."""
    from .field import _edge_sq

    return grid.h * sum(float(e.sum()) for e in _edge_sq(n, grid))


def _neighbour_sum(n):
    out = np.zeros_like(n)
    out[1:-1, 1:-1, 1:-1] = (
        n[2:, 1:-1, 1:-1] + n[:-2, 1:-1, 1:-1] + n[1:-1, 2:, 1:-1] + n[1:-1, :-2, 1:-1]
        + n[1:-1, 1:-1, 2:] + n[1:-1, 1:-1, :-2]
    )
    return out


def harmonic_residual(n, grid: Grid):
    """Tangential part of the discrete Laplacian, ``lap n - (n . lap n) n``, on interior nodes."""
    lap = laplacian_array(n, grid)[grid.interior]
    m = n[grid.interior]
    return lap - np.sum(lap * m, axis=-1)[:, None] * m


def harmonic_map(df: DirectorField, grid: Grid, opts: SolveOptions | None = None, init: str = "extension",
                 seed: int = 0, omega: float | None = None, check_every: int = 10) -> ConvergedState:
    """Minimise the discrete Dirichlet energy of unit vectors with boundary director ``df``.

    Sweeps move each node towards its normalised neighbour sum (the exact
    minimiser of the local energy) with over-relaxation ``omega`` and
    renormalise.  The energy is checked every ``check_every`` sweeps; if it
    rose, the sweeps are undone and ``omega`` is damped towards 1, where
    each update is a local minimisation and the energy cannot increase.  ``init="extension"`` normalises the harmonic
    extension of the boundary director; ``"random"`` uses seeded noise.
    """
    from ._kernels import sor_sweep
    from .field import harmonic_extension

    opts = opts or SolveOptions()
    tol = opts.tol_grad if opts.tol_grad is not None else 1e-6
    n = np.zeros(grid.coords.shape[:-1] + (3,))
    n[grid.shell] = df.evaluate(grid.coords[grid.shell])
    rng = np.random.default_rng(seed)
    if init == "extension":
        n = harmonic_extension(grid, n)
        n[grid.interior] += 1e-9 * rng.standard_normal((int(grid.interior.sum()), 3))
    elif init == "random":
        n[grid.interior] = rng.standard_normal((int(grid.interior.sum()), 3))
    else:
        raise ValueError(f"unknown initializer {init!r}")
    m = n[grid.interior]
    n[grid.interior] = m / np.linalg.norm(m, axis=-1, keepdims=True)
    omega = 2.0 / (1.0 + np.sin(np.pi * grid.h / (2.0 * grid.R))) if omega is None else float(omega)
    log = _Log(opts.log_path, opts.log_every)
    energies = [dirichlet_energy(n, grid)]
    saved = n.copy()
    k = 0
    msg = "max_iters reached"
    res = float(np.max(np.abs(harmonic_residual(n, grid))))
    try:
        while k < opts.max_iters:
            if res <= tol:
                msg = "converged"
                break
            for _ in range(check_every):
                sor_sweep(n, grid.interior, omega)
            k += check_every
            e = dirichlet_energy(n, grid)
            if e > energies[-1] * (1 + 1e-13) and omega > 1.0:
                # over-relaxation overshot: restore and damp
                n[...] = saved
                omega = 1.0 + 0.5 * (omega - 1.0)
                logger.debug("harmonic map: energy rose, omega -> %.4f", omega)
                continue
            saved[...] = n
            energies.append(e)
            res = float(np.max(np.abs(harmonic_residual(n, grid))))
            log(k, e, res, omega)
        log(k, energies[-1], res, omega, force=True)
    finally:
        log.close()
    return ConvergedState(field=DirectorState(grid, n), iterations=k, energy=energies[-1], grad_sup=res,
                          converged=res <= tol, energies=energies, message=msg)
