import numpy as np
import pytest

from ldglab import qtensor as qt
from ldglab.field import (
    ConfigurationError, DirectorField, QField, boundary_degree, build_grid, el_residual, energy_and_gradient,
    energy_total, energy_value, harmonic_extension, init_field, laplacian_array, shell_values,
)
from ldglab.material import ReducedParams, bulk_gradient


@pytest.fixture(scope="module")
def grid():
    return build_grid(17)


def test_grid_geometry(grid):
    assert grid.h == pytest.approx(2 / 16)
    assert np.all(np.linalg.norm(grid.coords[grid.interior], axis=-1) < 1)
    assert not np.any(grid.interior & grid.shell)
    # every neighbour of an interior node is interior or shell
    act = grid.active
    for ax in range(3):
        for sh in (1, -1):
            nb = np.roll(grid.interior, sh, axis=ax)
            assert np.all(act[nb])
    with pytest.raises(ConfigurationError):
        build_grid(16)
    with pytest.raises(ConfigurationError):
        build_grid(9)


def test_boundary_degree_integers():
    assert boundary_degree(DirectorField("radial"))[0] == 1
    assert boundary_degree(DirectorField("constant"))[0] == 0
    assert boundary_degree(DirectorField("azimuthal", degree=2))[0] == 2
    deg, raw = boundary_degree(DirectorField("azimuthal", degree=1))
    assert deg == 1 and abs(raw - 1) < 0.1


def test_director_rejects_origin_and_unknown_kind():
    with pytest.raises(ValueError):
        DirectorField("radial").evaluate(np.zeros(3))
    with pytest.raises(ConfigurationError):
        DirectorField("spiral")


def test_laplacian_exact_on_quadratics(grid):
    x = grid.coords
    vals = np.zeros(x.shape[:-1] + (5,))
    vals[..., 0] = x[..., 0] ** 2 + 2 * x[..., 1] ** 2 - x[..., 2] * x[..., 0]
    lap = laplacian_array(vals, grid)[grid.interior]
    assert np.allclose(lap[:, 0], 6.0, atol=1e-9)
    assert np.allclose(lap[:, 1:], 0.0)


def test_shell_values_are_vacuum(grid):
    vals = shell_values(grid, DirectorField("radial"))
    assert np.allclose(np.linalg.norm(vals[grid.shell], axis=-1), 1.0)
    assert np.all(vals[grid.interior] == 0)


def test_harmonic_extension_is_discrete_harmonic(grid):
    vals = shell_values(grid, DirectorField("azimuthal", degree=2))
    ext = harmonic_extension(grid, vals)
    assert np.max(np.abs(laplacian_array(ext, grid)[grid.interior])) < 1e-8 / grid.h**2
    assert np.array_equal(ext[grid.shell], vals[grid.shell])


@pytest.mark.parametrize("init", ["radial-ansatz", "harmonic-extension", "random"])
def test_init_field(grid, init):
    rp = ReducedParams.from_t(200.0)
    F = init_field(grid, DirectorField("radial"), rp, init=init, seed=3)
    assert np.allclose(np.linalg.norm(F.values[grid.shell], axis=-1), 1.0)
    assert np.all(F.values[~grid.active] == 0)
    assert np.max(F.norm[grid.interior]) <= 1.0 + 1e-12
    G = init_field(grid, DirectorField("radial"), rp, init=init, seed=3)
    assert np.array_equal(F.values, G.values)
    with pytest.raises(ConfigurationError):
        init_field(grid, DirectorField("radial"), rp, init="nope")


def test_energy_density_sums_to_total(grid, rng):
    rp = ReducedParams.from_t(50.0)
    F = init_field(grid, DirectorField("radial"), rp, init="random", seed=1)
    E = energy_total(F)
    assert E.total == pytest.approx(E.density.sum() * grid.h**3, rel=1e-12)
    assert E.total == pytest.approx(E.elastic + E.bulk, rel=1e-14)
    assert E.total == pytest.approx(energy_value(F.values, grid, rp), rel=1e-12)


def test_vacuum_constant_has_zero_energy(grid):
    rp = ReducedParams.from_t(200.0)
    F = init_field(grid, DirectorField("constant", axis=(0, 1, 1)), rp, init="harmonic-extension")
    E = energy_total(F)
    assert abs(E.total) < 1e-20 + 1e-12 * rp.t
    assert np.max(np.abs(el_residual(F.values, grid, rp))) < 1e-9


def test_gradient_matches_finite_differences(grid, rng):
    rp = ReducedParams.from_t(50.0)
    F = init_field(grid, DirectorField("radial"), rp, init="random", seed=2)
    e, g = energy_and_gradient(F.values, grid, rp)
    assert e == pytest.approx(energy_total(F).total, rel=1e-12)
    idx = np.argwhere(grid.interior)
    eps = 1e-5
    for k in rng.choice(len(idx), 12, replace=False):
        for c in range(5):
            v = F.values.copy()
            v[tuple(idx[k])][c] += eps
            ep = energy_value(v, grid, rp)
            v[tuple(idx[k])][c] -= 2 * eps
            em = energy_value(v, grid, rp)
            fd = (ep - em) / (2 * eps) / grid.h**3
            assert fd == pytest.approx(g[k][c], rel=1e-6, abs=1e-6)


def test_el_residual_formula(grid):
    rp = ReducedParams.from_t(50.0)
    F = init_field(grid, DirectorField("radial"), rp, init="random", seed=4)
    r = el_residual(F.values, grid, rp)
    ref = -rp.Lbar * laplacian_array(F.values, grid)[grid.interior] + bulk_gradient(F.interior_values, rp)
    assert np.allclose(r, ref, atol=1e-9)
