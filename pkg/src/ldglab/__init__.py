"""Landau-de Gennes Q-tensor minimisers on a ball: solvers and measurements."""

__version__ = "0.1.0"

from .material import PhysicalParams, ReducedParams, rescale  # noqa: E402
from .field import DirectorField, QField, build_grid, init_field  # noqa: E402
from .relax import SolveOptions, harmonic_map, minimize_full, minimize_uniaxial  # noqa: E402
from .hedgehog import solve_profile  # noqa: E402

__all__ = [
    "PhysicalParams", "ReducedParams", "rescale", "DirectorField", "QField", "build_grid", "init_field",
    "SolveOptions", "harmonic_map", "minimize_full", "minimize_uniaxial", "solve_profile",
]
