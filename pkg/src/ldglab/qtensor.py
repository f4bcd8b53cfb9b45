"""Algebra of symmetric traceless 3x3 tensors.

A tensor is stored as 5 components ``q`` in an orthonormal basis of S0, so
that ``sum(q**2)`` equals the Frobenius norm squared of the matrix.  Every
function accepts arrays of shape ``(..., 5)`` and broadcasts over the
leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SQ2 = np.sqrt(2.0)
SQ3_2 = np.sqrt(1.5)
SQ6 = np.sqrt(6.0)

BASIS = np.zeros((5, 3, 3))
BASIS[0] = np.diag([1.0, -1.0, 0.0]) / SQ2
BASIS[1] = np.diag([1.0, 1.0, -2.0]) / SQ6
BASIS[2][0, 1] = BASIS[2][1, 0] = 1.0 / SQ2
BASIS[3][0, 2] = BASIS[3][2, 0] = 1.0 / SQ2
BASIS[4][1, 2] = BASIS[4][2, 1] = 1.0 / SQ2

DEGENERACY_TOL = 1e-10
NORM_FLOOR = 1e-12


class ConsistencyError(RuntimeError):
    """An analytically bounded quantity left its range by more than roundoff."""


def to_matrix(q):
    """Components ``(..., 5)`` -> symmetric traceless matrices ``(..., 3, 3)``."""
    return np.einsum("...a,aij->...ij", np.asarray(q, dtype=float), BASIS)


def from_matrix(m):
    """Orthogonal projection of ``(..., 3, 3)`` matrices onto S0 components.

    The trace and the antisymmetric part are discarded.
    """
    return np.einsum("...ij,aij->...a", np.asarray(m, dtype=float), BASIS)


_R2, _R6 = np.sqrt(2.0), np.sqrt(6.0)


def sym_product(a, b):
    """Components of the traceless part of ``(AB + BA)/2``; ``sym_product(q, q)`` is ``Q^2 - |Q|^2 I/3``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2, a3, a4 = (a[..., k] for k in range(5))
    b0, b1, b2, b3, b4 = (b[..., k] for k in range(5))
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = _R6 / 6 * (a0 * b1 + a1 * b0) + _R2 / 4 * (a3 * b3 - a4 * b4)
    out[..., 1] = _R6 / 6 * (a0 * b0 - a1 * b1 + a2 * b2) - _R6 / 12 * (a3 * b3 + a4 * b4)
    out[..., 2] = _R6 / 6 * (a1 * b2 + a2 * b1) + _R2 / 4 * (a3 * b4 + a4 * b3)
    out[..., 3] = _R2 / 4 * (a0 * b3 + a3 * b0 + a2 * b4 + a4 * b2) - _R6 / 12 * (a1 * b3 + a3 * b1)
    out[..., 4] = _R2 / 4 * (a2 * b3 + a3 * b2 - a0 * b4 - a4 * b0) - _R6 / 12 * (a1 * b4 + a4 * b1)
    return out


def invariants(q):
    """Return ``(|Q|^2, tr Q^3)``."""
    q = np.asarray(q, dtype=float)
    normsq = np.sum(q * q, axis=-1)
    tr3 = np.sum(q * sym_product(q, q), axis=-1)
    return normsq, tr3


def biaxiality(q, floor: float = NORM_FLOOR):
    """Biaxiality parameter ``1 - 6 (tr Q^3)^2 / |Q|^6``.

    Nodes with ``|Q|^2 < floor`` are indeterminate and come back as NaN.
    """
    normsq, tr3 = invariants(q)
    normsq = np.asarray(normsq)
    ok = normsq >= floor
    safe = np.where(ok, normsq, 1.0)
    beta2 = 1.0 - 6.0 * tr3**2 / safe**3
    bad = ok & ((beta2 < -1e-8) | (beta2 > 1.0 + 1e-8))
    if np.any(bad):
        raise ConsistencyError(f"beta^2 out of [0, 1]: {beta2[bad].ravel()[:3]}")
    beta2 = np.clip(beta2, 0.0, 1.0)
    beta2 = np.where(ok, beta2, np.nan)
    return beta2[()] if beta2.ndim == 0 else beta2


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray  # (..., 3), descending
    vectors: np.ndarray  # (..., 3, 3), column k belongs to values[..., k]


def _fix_sign(v):
    # positive first component whose magnitude exceeds the tolerance
    first = np.argmax(np.abs(v) > 1e-12, axis=-1)
    lead = np.take_along_axis(v, first[..., None], axis=-1)
    return np.where(lead < 0, -v, v)


def _canonical_pair(u, v, other):
    """Deterministic orthonormal basis of span(u, v), completing ``other``."""
    # project the coordinate axes onto the plane and keep the longest projection
    p = u[..., None, :] * u[..., :, None] + v[..., None, :] * v[..., :, None]
    lens = np.linalg.norm(p, axis=-1)
    best = np.argmax(lens - 1e-9 * np.arange(3), axis=-1)
    a = np.take_along_axis(p, best[..., None, None].repeat(3, -1), axis=-2)[..., 0, :]
    a = _fix_sign(a / np.linalg.norm(a, axis=-1, keepdims=True))
    b = _fix_sign(np.cross(other, a))
    return a, b


def eigen(q) -> EigenSystem:
    """Eigen-decomposition with descending eigenvalues and a deterministic frame.

    Vectors are signed so their first nonzero component is positive.  Inside a
    degenerate pair the basis is fixed by projecting the coordinate axes onto
    the eigenspace; a fully degenerate tensor returns the coordinate axes.
    """
    q = np.asarray(q, dtype=float)
    shape = q.shape[:-1]
    m = to_matrix(q).reshape(-1, 3, 3)
    w, v = np.linalg.eigh(m)
    w = w[:, ::-1].copy()
    v = v[:, :, ::-1].copy()
    vt = np.swapaxes(v, 1, 2)  # rows are eigenvectors
    vt = _fix_sign(vt)
    scale = np.maximum(np.abs(w).max(axis=1), 1.0)
    d01 = (w[:, 0] - w[:, 1]) <= DEGENERACY_TOL * scale
    d12 = (w[:, 1] - w[:, 2]) <= DEGENERACY_TOL * scale
    iso = d01 & d12
    if np.any(iso):
        vt[iso] = np.eye(3)
    sel = d01 & ~iso
    if np.any(sel):
        a, b = _canonical_pair(vt[sel, 0], vt[sel, 1], vt[sel, 2])
        vt[sel, 0], vt[sel, 1] = a, b
    sel = d12 & ~iso
    if np.any(sel):
        a, b = _canonical_pair(vt[sel, 1], vt[sel, 2], vt[sel, 0])
        vt[sel, 1], vt[sel, 2] = a, b
    return EigenSystem(w.reshape(shape + (3,)), np.swapaxes(vt, 1, 2).reshape(shape + (3, 3)))


def uniaxial_from(s, n):
    """``s (n n^T - I/3)`` as components; ``n`` must be a unit vector."""
    n = np.asarray(n, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(np.linalg.norm(n, axis=-1) - 1.0) > 1e-12):
        raise ValueError("director must be a unit vector")
    nn = n[..., :, None] * n[..., None, :]
    return from_matrix(s[..., None, None] * (nn - np.eye(3) / 3.0))


def vacuum(n):
    """Rescaled vacuum tensor ``sqrt(3/2) (n n^T - I/3)``."""
    q = uniaxial_from(SQ3_2, n)
    # renormalize so |Q| = 1 to the last ulp; the bulk gradient scales roundoff by t
    return q / np.sqrt(np.sum(q * q, axis=-1, keepdims=True))


def project_uniaxial(q):
    """Frobenius-nearest uniaxial tensor on the non-negative order parameter branch.

    Returns ``s* (e1 e1^T - I/3)`` with ``s* = 3/2 lambda_1``.
    """
    q = np.asarray(q, dtype=float)
    m = to_matrix(q)
    w, v = np.linalg.eigh(m.reshape(-1, 3, 3))
    e1 = v[:, :, -1]
    s = 1.5 * w[:, -1]
    nn = e1[:, :, None] * e1[:, None, :]
    out = from_matrix(s[:, None, None] * (nn - np.eye(3) / 3.0))
    return out.reshape(q.shape)
