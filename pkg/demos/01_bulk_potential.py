"""Reduced bulk potential: vacuum manifold, isotropic value, biaxiality.

Run: python demos/01_bulk_potential.py
"""
import numpy as np

from ldglab import qtensor as qt
from ldglab.material import ReducedParams, bulk_gradient, bulk_reduced

rng = np.random.default_rng(0)

for t in (50.0, 200.0, 3200.0):
    rp = ReducedParams.from_t(t)
    n = rng.standard_normal((1000, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    q = qt.vacuum(n)
    print(f"t={t:7.0f}  h+={rp.h_plus:8.4f}  xi_b={rp.xi_b:.4f}  "
          f"max f(vacuum)={np.abs(bulk_reduced(q, rp)).max():.1e}  "
          f"max |grad f|={np.abs(bulk_gradient(q, rp)).max():.1e}  "
          f"f(0)={bulk_reduced(np.zeros(5), rp):.4f}")

# walk from a uniaxial tensor to a maximally biaxial one and watch beta^2 climb to 1
rp = ReducedParams.from_t(200.0)
for lam in np.linspace(0.0, 1.0, 6):
    m = (1.0 - lam) * np.diag([2.0, -1.0, -1.0]) / np.sqrt(6) + lam * np.diag([1.0, 0.0, -1.0]) / np.sqrt(2)
    q = qt.from_matrix(m)
    q = q / np.linalg.norm(q)
    print(f"mix={lam:.1f}  beta2={float(qt.biaxiality(q)):.3f}  f={float(bulk_reduced(q, rp)):9.4f}")
