"""Second variation of the discrete energy and its smallest eigenvalue.

Perturbations vanish on the Dirichlet shell and are normalised in the
discrete L2 norm ``sum |V|^2 h^3 = 1``.  The Hessian operator used here is
the per-volume one, ``A V = -Lbar lap V + D^2(Lbar f)(Q) V``, so that
``<V, A V> h^3`` equals the second variation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import qtensor as qt
from .field import QField, _edge_sq, laplacian_array
from .material import bulk_hessian_apply
from .relax import SolveOptions

logger = logging.getLogger(__name__)


class PerturbationError(ValueError):
    pass


@dataclass
class Perturbation:
    values: np.ndarray  # (n, n, n, 5), zero off the interior

    def norm(self, h: float) -> float:
        return float(np.sqrt(np.sum(self.values**2) * h**3))


def _check(F: QField, V: Perturbation):
    off = ~F.grid.interior
    if np.any(V.values[off] != 0.0):
        raise PerturbationError("perturbation must vanish outside the interior")


def normalized(F: QField, values) -> Perturbation:
    v = np.where(F.grid.interior[..., None], values, 0.0)
    nrm = np.sqrt(np.sum(v**2) * F.grid.h**3)
    if nrm == 0:
        raise PerturbationError("zero perturbation")
    return Perturbation(v / nrm)


def hessian_apply(F: QField, V) -> np.ndarray:
    """Per-volume Hessian applied to a full perturbation array (zero off interior)."""
    g = F.grid
    out = -F.params.Lbar * laplacian_array(V, g)
    out[g.interior] += bulk_hessian_apply(F.values[g.interior], F.params, V[g.interior])
    return out


def second_variation(F: QField, V: Perturbation) -> float:
    """``sum_edges Lbar |dV/h|^2 h^3 + sum_interior <V, D^2(Lbar f) V> h^3``."""
    _check(F, V)
    g = F.grid
    elastic = F.params.Lbar * g.h * sum(float(e.sum()) for e in _edge_sq(V.values, g))
    vi = V.values[g.interior]
    bulk = float(np.sum(vi * bulk_hessian_apply(F.values[g.interior], F.params, vi))) * g.h**3
    return elastic + bulk


def rayleigh_quotient(F: QField, V: Perturbation) -> float:
    return second_variation(F, V) / (np.sum(V.values**2) * F.grid.h**3)


@dataclass
class EigenResult:
    lambda_min: float
    witness: Perturbation
    iterations: int
    residual: float
    converged: bool
    history: list


def min_eig_rayleigh(F: QField, opts: SolveOptions | None = None, start: Perturbation | None = None,
                     seed: int = 0, tol: float = 1e-6) -> EigenResult:
    """Minimise the Rayleigh quotient over shell-vanishing perturbations.

    Each step takes the Rayleigh-Ritz minimiser over ``span{x, r, p}`` with
    ``r`` the quotient gradient and ``p`` the previous update (locally optimal
    conjugate gradient), so the quotient never increases.  The returned value
    is the quotient of the returned witness, an upper bound for the smallest
    eigenvalue.  ``tol`` bounds the relative residual ``|Ax - qx| / |A|``.
    """
    opts = opts or SolveOptions(max_iters=3000)
    g = F.grid
    mask = g.interior
    N = int(mask.sum())
    rng = np.random.default_rng(seed)

    def A(x):
        full = np.zeros(mask.shape + (5,))
        full[mask] = x.reshape(N, 5)
        return hessian_apply(F, full)[mask].ravel()

    if start is None:
        x = rng.standard_normal(N * 5)
    else:
        x = start.values[mask].ravel().copy()
    x /= np.linalg.norm(x)
    Ax = A(x)
    q = float(x @ Ax)
    p = Ap = None
    history = [q]
    scale = abs(q) + 12.0 * F.params.Lbar / g.h**2 + F.params.t
    k = 0
    res = np.inf
    for k in range(1, opts.max_iters + 1):
        r = Ax - q * x
        res = float(np.linalg.norm(r)) / scale
        if res <= tol:
            k -= 1
            break
        basis = [x, r / np.linalg.norm(r)]
        images = [Ax, A(basis[1])]
        if p is not None:
            pn = np.linalg.norm(p)
            basis.append(p / pn)
            images.append(Ap / pn)
        B = np.array(basis)
        AB = np.array(images)
        G = B @ B.T
        H = B @ AB.T
        H = 0.5 * (H + H.T)
        # orthonormalise through the Gram matrix, dropping near-dependent directions
        w, U = np.linalg.eigh(G)
        keep = w > 1e-12 * w.max()
        T = U[:, keep] / np.sqrt(w[keep])
        mu, Z = np.linalg.eigh(T.T @ H @ T)
        c = T @ Z[:, 0]
        if mu[0] > q:
            break
        xn = c @ B
        Axn = c @ AB
        nrm = np.linalg.norm(xn)
        xn /= nrm
        Axn /= nrm
        p = xn - x * float(x @ xn)
        Ap = Axn - Ax * float(x @ xn)
        x, Ax = xn, Axn
        q = float(x @ Ax)
        history.append(q)
        if opts.log_every and k % opts.log_every == 0:
            logger.debug("rayleigh iter %d q %.8g res %.3g", k, q, res)
    full = np.zeros(mask.shape + (5,))
    full[mask] = x.reshape(N, 5)
    W = normalized(F, full)
    lam = rayleigh_quotient(F, W)
    return EigenResult(lambda_min=lam, witness=W, iterations=k, residual=res, converged=res <= tol, history=history)


def normal_projection(q, W):
    """Component of ``W`` orthogonal to ``Q`` and to the uniaxial tangent space at ``Q``.

    With ``e1`` the top eigenvector, this keeps the traceless part of
    ``W`` restricted to the plane orthogonal to ``e1``: the maximally biaxial
    directions.
    """
    es = qt.eigen(q)
    e1 = es.vectors[..., :, 0]
    P = np.eye(3) - e1[..., :, None] * e1[..., None, :]
    Wm = qt.to_matrix(W)
    M = P @ Wm @ P
    tr = np.trace(M, axis1=-2, axis2=-1)
    M = M - 0.5 * tr[..., None, None] * P
    return qt.from_matrix(M)


def biaxial_probe(F: QField, center, radius: float, W=None, floor: float = 1e-6) -> Perturbation:
    """Compactly supported biaxial perturbation around ``center``.

    Envelope ``(1 - (|x-c|/radius)^2)^3``; at each node the direction is the
    normal projection of the fixed tensor ``W`` (default: uniaxial along z).
    Nodes with ``|Q| < floor`` have no uniaxial frame and receive ``W``
    itself.
    """
    g = F.grid
    if radius < 3 * g.h:
        raise PerturbationError(f"probe radius {radius} is below 3h = {3 * g.h}")
    c = np.asarray(center, dtype=float)
    if np.linalg.norm(c) >= g.R:
        raise PerturbationError("probe centre must be interior")
    if W is None:
        W = qt.vacuum(np.array([0.0, 0.0, 1.0]))
    W = np.asarray(W, dtype=float)
    d = np.linalg.norm(g.coords - c, axis=-1) / radius
    env = np.clip(1.0 - d**2, 0.0, None) ** 3
    sel = g.interior & (env > 0)
    q = F.values[sel]
    dirs = normal_projection(q, np.broadcast_to(W, q.shape))
    iso = np.linalg.norm(q, axis=-1) < floor
    dirs[iso] = W
    vals = np.zeros(F.values.shape)
    vals[sel] = env[sel][:, None] * dirs
    return normalized(F, vals)


def random_perturbation(F: QField, seed: int, center=None, radius=None) -> Perturbation:
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal(F.values.shape)
    if center is not None:
        d = np.linalg.norm(F.grid.coords - np.asarray(center), axis=-1) / radius
        vals *= (np.clip(1.0 - d**2, 0.0, None) ** 3)[..., None]
    return normalized(F, vals)
