import numpy as np
import pytest

from pshlab.form_calculus import GridSpec, HermitianForm11Field, ScalarField
from pshlab.scenarios import random_modes

# acceptance lines collected by test_acceptance.py and echoed in the terminal summary
AC_LINES = {}


def random_field(grid, seed, K=1, scale=1.0):
    rng = np.random.default_rng(seed)
    f = ScalarField.from_modes(grid, random_modes(rng, grid.ndim, K)).values
    return ScalarField(grid, scale * f / max(np.abs(f).max(), 1e-300))


def random_positive_field(grid, seed, K=1, fraction=0.5):
    """Constant positive matrix plus a band-limited Hermitian perturbation of relative size `fraction`."""
    from pshlab.hermitian_algebra import eigvalsh, random_positive
    rng = np.random.default_rng(seed)
    n = grid.n
    P = random_positive(rng, n, (), floor=0.2)
    S = np.zeros(grid.shape + (n, n), dtype=complex)
    for j in range(n):
        for k in range(j, n):
            a = ScalarField.from_modes(grid, random_modes(rng, grid.ndim, K)).values
            if j == k:
                S[..., j, j] = a
            else:
                b = ScalarField.from_modes(grid, random_modes(rng, grid.ndim, K)).values
                S[..., j, k] = a + 1j * b
                S[..., k, j] = a - 1j * b
    S /= np.abs(eigvalsh(S)).max()
    return HermitianForm11Field(grid, P + fraction * float(eigvalsh(P)[0]) * S)


@pytest.fixture(scope="session")
def grid2():
    return GridSpec(2, 16)


def pytest_terminal_summary(terminalreporter):
    if AC_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(AC_LINES, key=lambda s: int(s[2:])):
            terminalreporter.write_line(AC_LINES[k])
