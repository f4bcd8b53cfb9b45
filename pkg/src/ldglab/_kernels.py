"""Fused stencil kernels for the discrete energy and its gradient."""
from __future__ import annotations

import math

import numba
import numpy as np

R2 = math.sqrt(2.0)
R6 = math.sqrt(6.0)


@numba.njit(cache=True, inline="always")
def _sym(a0, a1, a2, a3, a4, b0, b1, b2, b3, b4, out):
    out[0] = R6 / 6 * (a0 * b1 + a1 * b0) + R2 / 4 * (a3 * b3 - a4 * b4)
    out[1] = R6 / 6 * (a0 * b0 - a1 * b1 + a2 * b2) - R6 / 12 * (a3 * b3 + a4 * b4)
    out[2] = R6 / 6 * (a1 * b2 + a2 * b1) + R2 / 4 * (a3 * b4 + a4 * b3)
    out[3] = R2 / 4 * (a0 * b3 + a3 * b0 + a2 * b4 + a4 * b2) - R6 / 12 * (a1 * b3 + a3 * b1)
    out[4] = R2 / 4 * (a2 * b3 + a3 * b2 - a0 * b4 - a4 * b0) - R6 / 12 * (a1 * b4 + a4 * b1)


@numba.njit(cache=True)
def energy_grad(v, interior, h, t, hp, Lbar, grad):
    """Return (elastic, bulk) energies; write per-volume gradient of interior nodes into ``grad`` (N, 5)."""
    n0, n1, n2 = interior.shape
    C = v.shape[3]
    el = 0.0
    bulk = 0.0
    q2 = np.empty(5)
    idx = 0
    ih2 = 1.0 / (h * h)
    for i in range(n0):
        for j in range(n1):
            for k in range(n2):
                c_in = interior[i, j, k]
                if i + 1 < n0 and (c_in or interior[i + 1, j, k]):
                    for c in range(C):
                        d = v[i + 1, j, k, c] - v[i, j, k, c]
                        el += d * d
                if j + 1 < n1 and (c_in or interior[i, j + 1, k]):
                    for c in range(C):
                        d = v[i, j + 1, k, c] - v[i, j, k, c]
                        el += d * d
                if k + 1 < n2 and (c_in or interior[i, j, k + 1]):
                    for c in range(C):
                        d = v[i, j, k + 1, c] - v[i, j, k, c]
                        el += d * d
                if not c_in:
                    continue
                a0 = v[i, j, k, 0]
                a1 = v[i, j, k, 1]
                a2 = v[i, j, k, 2]
                a3 = v[i, j, k, 3]
                a4 = v[i, j, k, 4]
                ns = a0 * a0 + a1 * a1 + a2 * a2 + a3 * a3 + a4 * a4
                _sym(a0, a1, a2, a3, a4, a0, a1, a2, a3, a4, q2)
                tr3 = a0 * q2[0] + a1 * q2[1] + a2 * q2[2] + a3 * q2[3] + a4 * q2[4]
                bulk += t / 8.0 * (1.0 - ns) ** 2 + hp / 8.0 * (1.0 + 3.0 * ns * ns - 4.0 * R6 * tr3)
                for c in range(5):
                    lap = (v[i + 1, j, k, c] + v[i - 1, j, k, c] + v[i, j + 1, k, c] + v[i, j - 1, k, c]
                           + v[i, j, k + 1, c] + v[i, j, k - 1, c] - 6.0 * v[i, j, k, c]) * ih2
                    qc = v[i, j, k, c]
                    grad[idx, c] = (-Lbar * lap + 0.5 * t * qc * (ns - 1.0)
                                    + 1.5 * hp * (ns * qc - R6 * q2[c]))
                idx += 1
    return 0.5 * Lbar * h * el, bulk * h * h * h


@numba.njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.size):
        s += a[i] * b[i]
    return s


@numba.njit(cache=True)
def two_loop(g, S, Y, rho, order, gamma, out):
    """L-BFGS direction ``out = H g`` from pairs stored in rows ``order`` (oldest first)."""
    m = order.size
    alpha = np.empty(m)
    for i in range(g.size):
        out[i] = g[i]
    for jj in range(m - 1, -1, -1):
        j = order[jj]
        a = rho[j] * _dot(S[j], out)
        alpha[jj] = a
        y = Y[j]
        for i in range(out.size):
            out[i] -= a * y[i]
    for i in range(out.size):
        out[i] *= gamma
    for jj in range(m):
        j = order[jj]
        b = rho[j] * _dot(Y[j], out)
        s = S[j]
        c = alpha[jj] - b
        for i in range(out.size):
            out[i] += c * s[i]


@numba.njit(cache=True)
def sor_sweep(n, interior, omega):
    """One lexicographic over-relaxed sweep of the normalised-neighbour-sum update.

    Returns the largest change of any node.  Nodes whose neighbour sum
    vanishes are left alone.
    """
    nx, ny, nz = interior.shape
    big = 0.0
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            for k in range(1, nz - 1):
                if not interior[i, j, k]:
                    continue
                s0 = n[i + 1, j, k, 0] + n[i - 1, j, k, 0] + n[i, j + 1, k, 0] + n[i, j - 1, k, 0] + n[i, j, k + 1, 0] + n[i, j, k - 1, 0]
                s1 = n[i + 1, j, k, 1] + n[i - 1, j, k, 1] + n[i, j + 1, k, 1] + n[i, j - 1, k, 1] + n[i, j, k + 1, 1] + n[i, j, k - 1, 1]
                s2 = n[i + 1, j, k, 2] + n[i - 1, j, k, 2] + n[i, j + 1, k, 2] + n[i, j - 1, k, 2] + n[i, j, k + 1, 2] + n[i, j, k - 1, 2]
                sn = np.sqrt(s0 * s0 + s1 * s1 + s2 * s2)
                if sn < 1e-300:
                    continue
                a0 = n[i, j, k, 0] + omega * (s0 / sn - n[i, j, k, 0])
                a1 = n[i, j, k, 1] + omega * (s1 / sn - n[i, j, k, 1])
                a2 = n[i, j, k, 2] + omega * (s2 / sn - n[i, j, k, 2])
                an = np.sqrt(a0 * a0 + a1 * a1 + a2 * a2)
                if an < 1e-300:
                    a0, a1, a2, an = s0, s1, s2, sn
                a0 /= an
                a1 /= an
                a2 /= an
                d = max(abs(a0 - n[i, j, k, 0]), abs(a1 - n[i, j, k, 1]), abs(a2 - n[i, j, k, 2]))
                if d > big:
                    big = d
                n[i, j, k, 0] = a0
                n[i, j, k, 1] = a1
                n[i, j, k, 2] = a2
    return big
