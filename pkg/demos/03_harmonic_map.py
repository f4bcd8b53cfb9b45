"""Radial harmonic map in the unit ball: energy 8 pi, normalized energy 4 pi.

Run: python demos/03_harmonic_map.py   (about ten seconds)
"""
import logging

import numpy as np

from ldglab import analysis as an
from ldglab.field import DirectorField, QField, build_grid
from ldglab.harness import harmonic_singularities
from ldglab.material import ReducedParams
from ldglab.relax import SolveOptions, harmonic_map

logging.basicConfig(level=logging.INFO, format="%(message)s")

grid = build_grid(65)
st = harmonic_map(DirectorField("radial"), grid, SolveOptions(log_every=50))
print(f"Dirichlet energy / 8 pi = {st.energy / (8 * np.pi):.4f}")
print(f"singular points: {harmonic_singularities(st.field).round(3).tolist()}")

# the director energy is one third of the energy of its vacuum tensor
F = QField(grid, st.field.tensor(), ReducedParams.from_t(200.0))
for r, v in an.normalized_energy(F, np.zeros(3), [0.1, 0.3, 0.5, 0.7, 0.9]):
    print(f"r={r:.1f}  E(r)/r = {v / 3 / (4 * np.pi):.3f} x 4 pi")
