import numpy as np
import pytest

from ldglab import qtensor as qt
from ldglab.material import ReducedParams


def jacobi_eigenvalues(m, tol=1e-15, sweeps=100):
    """Cyclic Jacobi rotations for a symmetric 3x3 matrix (independent oracle)."""
    a = np.array(m, dtype=float)
    v = np.eye(3)
    for _ in range(sweeps):
        off = sum(a[i, j] ** 2 for i in range(3) for j in range(3) if i != j)
        if off < tol**2:
            break
        for p in range(2):
            for q in range(p + 1, 3):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = 0.5 * np.arctan2(2 * a[p, q], a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                J = np.eye(3)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                a = J.T @ a @ J
                v = v @ J
    order = np.argsort(np.diag(a))[::-1]
    return np.diag(a)[order], v[:, order]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[50.0, 200.0, 3200.0])
def rp(request):
    return ReducedParams.from_t(request.param)


def random_unit(rng, size=None):
    v = rng.standard_normal((size, 3) if size else 3)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_q(rng, size):
    return rng.standard_normal((size, 5))


__all__ = ["jacobi_eigenvalues", "random_unit", "random_q", "qt", "record_criterion"]


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
