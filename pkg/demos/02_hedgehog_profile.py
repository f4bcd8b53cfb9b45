"""Radial hedgehog profile on the half line and its far-field tail.

Run: python demos/02_hedgehog_profile.py
"""
import numpy as np

from ldglab.hedgehog import eval_h, ode_residual, solve_profile

p = solve_profile(20.0)
print(f"shooting coefficient a2 = {p.a2:.10f}")
print(f"ODE residual           = {ode_residual(p):.2e}")
for r in (0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0):
    h = float(eval_h(p, r))
    print(f"r={r:5.1f}  h={h:.6f}  (1-h) r^2 / 3 = {(1 - h) * r * r / 3:.4f}")
