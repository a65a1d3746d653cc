import numpy as np
import pytest

from kinelim.collision import CollisionKernel, angular_rule, assemble_L_matrix
from kinelim.energy import (
    check_equivalence_constants,
    energy_functionals,
    triple_norm,
    triple_norm_matrix,
)
from kinelim.errors import UnsupportedOperation, UsageError
from kinelim.macro import reconstruct
from kinelim.spectral import Torus
from kinelim.velocity import VelocityGrid

HS = CollisionKernel.hard_sphere()
BGK = CollisionKernel.bgk(0.5)


@pytest.fixture(scope="module")
def grid():
    return VelocityGrid(4.5, 8)


@pytest.fixture(scope="module")
def space():
    return Torus(2, 16)


def brute_triple(f, grid, kernel):
    """Loop over v with the standard integrands, trilinear f' (zero outside) vectorised over (v_*, sigma)."""
    ct, st, cp, sp, aw = angular_rule(kernel.n_theta, kernel.n_phi)
    v, mu, sm, h, n, V = grid.nodes, grid.maxwellian, grid.sqrt_maxwellian, grid.h, grid.n, grid.cutoff
    F = f.reshape(n, n, n)

    def interp(p):
        s = (p + V) / h - 0.5
        inside = np.all((s >= 0) & (s <= n - 1), axis=-1)
        i0 = np.clip(s.astype(int), 0, n - 2)
        t = s - i0
        out = np.zeros(p.shape[:-1])
        for a in (0, 1):
            for b in (0, 1):
                for c in (0, 1):
                    w = (t[..., 0] if a else 1 - t[..., 0]) * (t[..., 1] if b else 1 - t[..., 1])
                    w = w * (t[..., 2] if c else 1 - t[..., 2])
                    out += w * F[i0[..., 0] + a, i0[..., 1] + b, i0[..., 2] + c]
        return np.where(inside, out, 0.0)

    total = 0.0
    for k in range(grid.size):
        j = np.arange(grid.size) != k
        w = v[k] - v[j]
        nw = np.linalg.norm(w, axis=1)
        a = w / nw[:, None]
        lead = np.where(a[:, 0] != 0, a[:, 0], np.where(a[:, 1] != 0, a[:, 1], a[:, 2]))
        s = a * np.sign(lead)[:, None]
        e1 = np.cross(s, np.eye(3)[np.argmin(np.abs(s), axis=1)])
        e1 /= np.linalg.norm(e1, axis=1)[:, None]
        e2 = np.cross(s, e1)
        sig = (ct[:, None, None] * a + st[:, None, None] * (cp[:, None, None] * e1 + sp[:, None, None] * e2))
        vp = 0.5 * (v[k] + v[j]) + 0.5 * nw[:, None] * sig
        c = h**6 * kernel.b0 * nw**kernel.gamma * aw[:, None]
        smp = (2 * np.pi) ** -0.75 * np.exp(-0.25 * np.sum(vp * vp, axis=-1))
        total += np.sum(c * (mu[j] * (interp(vp) - f[k]) ** 2 + f[j] ** 2 * (smp - sm[k]) ** 2))
    return np.sqrt(total)


def test_triple_norm_zero_and_null_direction(grid):
    assert triple_norm(np.zeros(grid.size), HS, grid) == 0.0
    val = triple_norm(grid.sqrt_maxwellian, HS, grid)
    assert 0 < val < np.inf and val.label == "standard"


def test_triple_norm_matches_double_loop_oracle(grid):
    small = grid
    k = HS
    rng = np.random.default_rng(0)
    f = rng.standard_normal(small.size) * small.maxwellian**0.25
    assert triple_norm(f, k, small) == pytest.approx(brute_triple(f, small, k), rel=1e-10)


def test_triple_norm_matrix_is_quadratic_form(grid):
    T = triple_norm_matrix(HS, grid)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(grid.size) * grid.maxwellian**0.25
    assert np.sqrt(f @ T @ f) == pytest.approx(triple_norm(f, HS, grid), rel=1e-10)
    assert np.linalg.eigvalsh(T).min() > 0


def test_triple_norm_reflection_invariant(grid):
    rng = np.random.default_rng(2)
    f = rng.standard_normal(grid.size) * grid.maxwellian**0.25
    assert triple_norm(f[grid.mirror_index()], HS, grid) == pytest.approx(triple_norm(f, HS, grid), rel=1e-10)


def test_triple_norm_variants(grid):
    f = grid.sqrt_maxwellian
    assert triple_norm(f, HS, grid, literal=True).label == "literal"
    cut = triple_norm(f, HS, grid, theta_min=0.2)
    assert cut.label == "truncated"
    assert triple_norm(f, HS, grid, theta_min=0.2, singularity=0.5) > 0
    with pytest.raises(UnsupportedOperation):
        triple_norm(f, HS, grid, singularity=0.5)
    b = triple_norm(f, BGK, grid)
    assert b.label == "l2" and b == pytest.approx(np.sqrt(grid.h**3 * f @ f))


def test_equivalence_constants_bgk(grid):
    c = check_equivalence_constants(100, BGK, grid)
    assert c.c_coercive == pytest.approx(1 / BGK.tau, abs=1e-6)
    assert c.C2 == pytest.approx(1.0, abs=1e-12)
    assert min(c.C1, c.C2, c.c_coercive, c.C_trilinear) > 0


def test_equivalence_constants_hard_sphere(grid):
    c = check_equivalence_constants(100, HS, grid, op=assemble_L_matrix(HS, grid))
    assert min(c.C1, c.C2, c.c_coercive, c.C_trilinear) > 0
    assert c.C1 <= c.C2
    with pytest.raises(UsageError):
        check_equivalence_constants(0, HS, grid)


def test_functionals_zero_and_constant_maxwellian(grid, space):
    zero = energy_functionals(np.zeros(space.shape + (grid.size,)), BGK, grid, space, 2)
    assert (zero.E_N, zero.C_N, zero.D_N) == (0.0, 0.0, 0.0)
    g = np.broadcast_to(grid.sqrt_maxwellian, space.shape + (grid.size,))
    rep = energy_functionals(g, HS, grid, space, 2)
    assert rep.C_N < 1e-10 and rep.D_N < 1e-6
    # ||sqrt(mu)||_{L^2_v} = 1 up to the grid mass defect; the torus measure is (2 pi)^2
    assert rep.E_N == pytest.approx(2 * np.pi, rel=1e-5)
    assert rep.E_N == pytest.approx(2 * np.pi * np.sqrt(grid.h**3 * grid.maxwellian.sum()), rel=1e-12)
    with pytest.raises(UsageError):
        energy_functionals(g, HS, grid, space, 0)


def test_single_mode_derivative_structure(grid, space):
    x = space.x
    g = np.sin(x[0])[..., None] * grid.nodes[:, 0] * grid.sqrt_maxwellian
    e0 = np.sqrt(space.l2(g) ** 2 * grid.h**3)
    e1 = energy_functionals(g, BGK, grid, space, 1).E_N
    assert e1**2 == pytest.approx(2 * e0**2, rel=1e-12)


def test_monotone_in_N_and_C_below_E(grid, space):
    rng = np.random.default_rng(3)
    x = space.x
    a = np.sin(x[0] + 2 * x[1])
    b = np.stack([np.cos(x[1]), 0.3 * np.sin(2 * x[0]), np.zeros_like(a)])
    c = 0.2 * np.cos(3 * x[0])
    g = reconstruct(a, b, c, grid) + 0.1 * np.sin(x[1])[..., None] * rng.standard_normal(grid.size) * grid.sqrt_maxwellian
    prev = None
    for N in (1, 2, 3):
        r = energy_functionals(g, BGK, grid, space, N)
        assert r.C_N <= r.E_N * (1 + 1e-8)
        if prev is not None:
            assert r.E_N >= prev.E_N and r.D_N >= prev.D_N
        prev = r


def test_combined_energy_equivalence(grid, space):
    rng = np.random.default_rng(4)
    x = space.x
    ratios = []
    for _ in range(100):
        m = rng.integers(1, 3, size=2)
        phase = np.sin(m[0] * x[0] + m[1] * x[1] + rng.uniform(0, 6))
        g = phase[..., None] * rng.standard_normal(grid.size) * grid.maxwellian**0.25
        r = energy_functionals(g, BGK, grid, space, 2, eps=rng.uniform(0.05, 1.0))
        ratios.append(r.E_N_combined / r.E_N)
    assert 0.5 < min(ratios) <= max(ratios) < 1.5


def test_parseval_against_physical_derivatives(grid, space):
    x = space.x
    f = np.sin(x[0]) * np.cos(2 * x[1]) + 0.3 * np.cos(x[0] + x[1])
    g = f[..., None] * grid.sqrt_maxwellian
    phys = space.l2(f) ** 2
    for a in range(2):
        da = space.deriv(f, a)
        phys += space.l2(da) ** 2
    via_fft = energy_functionals(g, BGK, grid, space, 1).E_N ** 2 / (grid.h**3 * grid.sqrt_maxwellian @ grid.sqrt_maxwellian)
    assert via_fft == pytest.approx(phys, rel=1e-8)
