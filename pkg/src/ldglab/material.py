"""Material constants, the reduced-temperature rescaling and the bulk potential.

Potentials and gradients here follow the "reduced density" convention: they
return ``Lbar * f`` and ``Lbar * Gamma`` so that the energy density of a
rescaled field is ``Lbar/2 |grad Q|^2 + bulk_reduced(Q)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qtensor import SQ6, invariants, sym_product


class RegimeError(ValueError):
    """Parameters outside the low-temperature regime (A < 0)."""


@dataclass(frozen=True)
class PhysicalParams:
    A: float
    B: float
    C: float
    L: float

    def __post_init__(self):
        if not (self.B > 0 and self.C > 0 and self.L > 0):
            raise ValueError("B, C and L must be positive")


@dataclass(frozen=True)
class ReducedParams:
    t: float
    h_plus: float
    s_plus: float
    xi_b: float
    Lbar: float

    def __post_init__(self):
        if not self.t > 0 or not self.Lbar > 0:
            raise ValueError("t and Lbar must be positive")
        h = (3.0 + math.sqrt(9.0 + 8.0 * self.t)) / 4.0
        xi = math.sqrt(2.0 * self.Lbar / self.t)
        if abs(h - self.h_plus) > 1e-12 * h or abs(xi - self.xi_b) > 1e-12 * xi:
            raise ValueError("inconsistent reduced parameters")

    @classmethod
    def from_t(cls, t: float, Lbar: float = 1.0) -> "ReducedParams":
        """Reduced parameters for a given ``t``, taking ``B = C = 1``."""
        return rescale(physical_from_reduced(t, Lbar))


def h_plus_of(t):
    return (3.0 + np.sqrt(9.0 + 8.0 * np.asarray(t, dtype=float))) / 4.0


def physical_from_reduced(t: float, Lbar: float = 1.0, B: float = 1.0, C: float = 1.0) -> PhysicalParams:
    return PhysicalParams(A=-t * B**2 / (27.0 * C), B=B, C=C, L=2.0 * B**2 * Lbar / (27.0 * C))


def rescale(p: PhysicalParams) -> ReducedParams:
    if p.A >= 0:
        raise RegimeError(f"A = {p.A} is not in the low-temperature regime (A < 0)")
    t = 27.0 * abs(p.A) * p.C / p.B**2
    h = float(h_plus_of(t))
    s_plus = (p.B + math.sqrt(p.B**2 + 24.0 * abs(p.A) * p.C)) / (4.0 * p.C)
    if abs(s_plus - p.B * h / (3.0 * p.C)) > 1e-12 * s_plus:
        raise ArithmeticError("s_plus identity violated")
    Lbar = 27.0 * p.C * p.L / (2.0 * p.B**2)
    xi_b = math.sqrt(27.0 * p.L * p.C / (p.B**2 * t))
    return ReducedParams(t=t, h_plus=h, s_plus=s_plus, xi_b=xi_b, Lbar=Lbar)


def bulk_original(q, p: PhysicalParams):
    """``A/2 |Q|^2 - B/3 tr Q^3 + C/4 |Q|^4`` in physical (unscaled) units."""
    normsq, tr3 = invariants(q)
    return 0.5 * p.A * normsq - p.B / 3.0 * tr3 + 0.25 * p.C * normsq**2


def energy_scale(p: PhysicalParams) -> float:
    """Factor ``3 Lbar / (2 L s_+^2)`` multiplying physical energies."""
    rp = rescale(p)
    return 3.0 * rp.Lbar / (2.0 * p.L * rp.s_plus**2)


def to_reduced_tensor(q, p: PhysicalParams):
    """Physical Q -> rescaled ``sqrt(3/2) Q / s_+``."""
    return np.sqrt(1.5) * np.asarray(q, dtype=float) / rescale(p).s_plus


def bulk_reduced_terms(q, rp: ReducedParams):
    normsq, tr3 = invariants(q)
    temp = rp.t / 8.0 * (1.0 - normsq) ** 2
    biax = rp.h_plus / 8.0 * (1.0 + 3.0 * normsq**2 - 4.0 * SQ6 * tr3)
    return temp, biax


def bulk_reduced(q, rp: ReducedParams):
    """``Lbar f(Q, t) = t/8 (1-|Q|^2)^2 + h+/8 (1 + 3|Q|^4 - 4 sqrt6 tr Q^3)``."""
    temp, biax = bulk_reduced_terms(q, rp)
    return temp + biax


def bulk_gradient(q, rp: ReducedParams):
    """``Lbar Gamma(Q)``, the S0 gradient of :func:`bulk_reduced`."""
    q = np.asarray(q, dtype=float)
    normsq = np.sum(q * q, axis=-1)[..., None]
    q2 = sym_product(q, q)
    return 0.5 * rp.t * q * (normsq - 1.0) + 1.5 * rp.h_plus * (normsq * q - SQ6 * q2)


def bulk_hessian_apply(q, rp: ReducedParams, v):
    """Second derivative of :func:`bulk_reduced` at ``q`` applied to ``v``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    normsq = np.sum(q * q, axis=-1)[..., None]
    qv = np.sum(q * v, axis=-1)[..., None]
    sym = 2.0 * sym_product(q, v)
    return 0.5 * rp.t * (v * (normsq - 1.0) + 2.0 * qv * q) + 1.5 * rp.h_plus * (
        2.0 * qv * q + normsq * v - SQ6 * sym
    )
