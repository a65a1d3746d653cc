import numpy as np
import pytest

from kinelim.collision import CollisionKernel, assemble_L_matrix, matrix_free_handle
from kinelim.errors import IllPosedInput
from kinelim.macro import project_P
from kinelim.transport import compute_transport, heat_moments, solve_inverse_L, viscous_moments
from kinelim.velocity import VelocityGrid

HS = CollisionKernel.hard_sphere()


@pytest.fixture(scope="module")
def grid():
    return VelocityGrid(4.5, 8)


@pytest.fixture(scope="module")
def fine():
    return VelocityGrid(6.0, 16)


@pytest.fixture(scope="module")
def op(grid):
    return assemble_L_matrix(HS, grid)


def test_gaussian_moment_sums(fine):
    # sum_ij E[A_ij^2] = 10, sum_i E[B_i^2] = 21/2 and 15/2 once the N component is removed
    h3 = fine.h**3
    A, B = viscous_moments(fine), heat_moments(fine)
    _, _, B2 = project_P(B, fine)
    assert h3 * np.sum(A * A) == pytest.approx(10.0, rel=1e-6)
    assert h3 * np.sum(B * B) == pytest.approx(10.5, rel=1e-5)
    assert h3 * np.sum(B2 * B2) == pytest.approx(7.5, rel=1e-5)


@pytest.mark.parametrize("tau", [0.1, 1.0, 2.5])
def test_bgk_closed_form(fine, tau):
    tc = compute_transport(CollisionKernel.bgk(tau), fine)
    assert tc.nu == pytest.approx(2.0 * tau / 3.0, rel=1e-6)
    assert tc.nu_limit == pytest.approx(tau, rel=1e-6)
    assert tc.kappa == pytest.approx(tau, rel=1e-5)  # the |v|^6 tail converges slowest in V
    assert tc.kappa_limit == tc.kappa
    assert tc.method == "closed_form"


def test_inverse_lies_in_complement_and_solves(grid, op):
    rng = np.random.default_rng(3)
    _, _, r = project_P(rng.standard_normal((4, grid.size)) * grid.maxwellian**0.25, grid)
    f = solve_inverse_L(r, op, grid)
    _, Pf, _ = project_P(f, grid)
    assert np.abs(Pf).max() < 1e-12 * np.abs(f).max()
    np.testing.assert_allclose(op.apply(f), r, atol=1e-9 * np.abs(r).max())


def test_cg_and_cholesky_agree(grid, op):
    _, _, r = project_P(viscous_moments(grid)[0, 1], grid)
    a = solve_inverse_L(r, op, grid, method="cholesky")
    b = solve_inverse_L(r, matrix_free_handle(HS, grid), grid, method="cg", tol=1e-12)
    np.testing.assert_allclose(a, b, atol=1e-8 * np.abs(a).max())


def test_null_rhs_rejected_and_mixed_rhs_warned(grid, op):
    with pytest.raises(IllPosedInput):
        solve_inverse_L(grid.sqrt_maxwellian, op, grid)
    _, _, r = project_P(heat_moments(grid)[0], grid)
    with pytest.warns(UserWarning):
        solve_inverse_L(r + 1e-3 * grid.sqrt_maxwellian, op, grid)


def test_hard_sphere_coefficients_positive_and_isotropic(grid, op):
    tc = compute_transport(HS, grid, op=op)
    assert tc.nu > 0 and tc.kappa > 0
    assert tc.nu_limit == pytest.approx(1.5 * tc.nu)
    # isotropy: (A_12, Ahat_12) is one tenth of the full contraction
    assert tc.nu12 == pytest.approx(tc.nu_limit, rel=2e-2)
    assert tc.residual_A < 1e-8 and tc.residual_B < 1e-8
