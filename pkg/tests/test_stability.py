import numpy as np
import pytest
from scipy.sparse.linalg import LinearOperator, eigsh

from ldglab.field import DirectorField, build_grid, energy_value, init_field
from ldglab.material import ReducedParams
from ldglab.relax import SolveOptions, minimize_full, minimize_uniaxial
from ldglab.stability import (
    Perturbation, PerturbationError, biaxial_probe, hessian_apply, min_eig_rayleigh, normal_projection,
    normalized, random_perturbation, rayleigh_quotient, second_variation,
)
from ldglab import qtensor as qt


@pytest.fixture(scope="module")
def setup():
    g = build_grid(17)
    rp = ReducedParams.from_t(50.0)
    F = init_field(g, DirectorField("radial"), rp, init="random", seed=7)
    return g, F


def test_second_variation_matches_energy_fd(setup):
    g, F = setup
    V = random_perturbation(F, 1)
    eps = 1e-4
    e0 = energy_value(F.values, g, F.params)
    ep = energy_value(F.values + eps * V.values, g, F.params)
    em = energy_value(F.values - eps * V.values, g, F.params)
    fd = (ep - 2 * e0 + em) / eps**2
    assert second_variation(F, V) == pytest.approx(fd, rel=1e-5)


def test_hessian_is_symmetric(setup):
    g, F = setup
    a, b = random_perturbation(F, 2).values, random_perturbation(F, 3).values
    lhs = np.sum(a * hessian_apply(F, b))
    rhs = np.sum(b * hessian_apply(F, a))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_shell_trace_rejected(setup):
    g, F = setup
    vals = np.zeros(F.values.shape)
    vals[g.shell] = 1.0
    with pytest.raises(PerturbationError):
        second_variation(F, Perturbation(vals))


def test_rayleigh_matches_eigsh(setup):
    g, F = setup
    mask = g.interior
    N = int(mask.sum())

    def mv(x):
        full = np.zeros(mask.shape + (5,))
        full[mask] = x.reshape(N, 5)
        return hessian_apply(F, full)[mask].ravel()

    op = LinearOperator((5 * N, 5 * N), matvec=mv, dtype=float)
    ref = eigsh(op, k=1, which="SA", tol=1e-10)[0][0]
    res = min_eig_rayleigh(F, SolveOptions(max_iters=5000, log_every=0), tol=1e-8)
    assert res.converged
    assert res.lambda_min == pytest.approx(ref, rel=1e-6, abs=1e-6 * F.params.t)
    assert np.all(np.diff(res.history) <= 1e-9 * np.abs(np.array(res.history[:-1])) + 1e-12)
    assert res.witness.norm(g.h) == pytest.approx(1.0)


def test_probe_shape(setup):
    g, F = setup
    with pytest.raises(PerturbationError):
        biaxial_probe(F, np.zeros(3), 2 * g.h)
    P = biaxial_probe(F, np.zeros(3), 0.5)
    assert P.norm(g.h) == pytest.approx(1.0)
    far = np.linalg.norm(g.coords, axis=-1) >= 0.5
    assert np.all(P.values[far] == 0)


def test_normal_projection_is_orthogonal_to_uniaxial_tangent(rng):
    n = rng.standard_normal((20, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    q = 0.8 * qt.vacuum(n)
    W = rng.standard_normal((20, 5))
    P = normal_projection(q, W)
    assert np.allclose(np.sum(P * q, axis=-1), 0, atol=1e-12)
    # orthogonal to director rotations d/dtheta of n n
    m = np.cross(n, rng.standard_normal((20, 3)))
    rot = qt.from_matrix(n[:, :, None] * m[:, None, :] + m[:, :, None] * n[:, None, :])
    assert np.allclose(np.sum(P * rot, axis=-1), 0, atol=1e-12)


def test_minimiser_is_stable():
    g = build_grid(17)
    rp = ReducedParams.from_t(50.0)
    F0 = init_field(g, DirectorField("radial"), rp, init="radial-ansatz", perturb=1e-3)
    F = minimize_full(F0, SolveOptions(log_every=0, tol_grad=1e-6)).field
    res = min_eig_rayleigh(F, SolveOptions(max_iters=2000, log_every=0))
    assert res.lambda_min >= -1e-4 * rp.t
    for seed in range(20):
        assert rayleigh_quotient(F, random_perturbation(F, seed, np.zeros(3), 0.5)) >= -1e-4 * rp.t


@pytest.mark.parametrize("n", [25, 49])
def test_uniaxial_hedgehog_is_unstable(n):
    g = build_grid(n)
    rp = ReducedParams.from_t(800.0)
    F0 = init_field(g, DirectorField("radial"), rp, init="radial-ansatz")
    F = minimize_uniaxial(F0, SolveOptions(log_every=0)).field
    probe = biaxial_probe(F, np.zeros(3), max(3 * g.h, 4 * rp.xi_b))
    res = min_eig_rayleigh(F, SolveOptions(max_iters=300, log_every=0), start=probe)
    assert res.lambda_min < -1e-4 * rp.t
    assert res.lambda_min <= rayleigh_quotient(F, probe) + 1e-12
