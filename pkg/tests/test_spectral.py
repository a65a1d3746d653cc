import numpy as np
import pytest

from kinelim.errors import ConfigError
from kinelim.spectral import Torus


@pytest.fixture(scope="module")
def t2():
    return Torus(2, 16)


def test_derivative_of_trig_exact(t2):
    x, y = t2.x
    f = np.sin(3 * x) * np.cos(2 * y)
    np.testing.assert_allclose(t2.deriv(f, 0), 3 * np.cos(3 * x) * np.cos(2 * y), atol=1e-12)
    np.testing.assert_allclose(t2.laplacian(f), -13 * f, atol=1e-11)


def test_div_of_grad_is_laplacian(t2):
    rng = np.random.default_rng(0)
    f = rng.standard_normal(t2.shape)
    # random data has a Nyquist component that odd derivatives drop
    fh = t2.rfft(f)
    fh[t2.nyquist_mask_r] = 0
    f = t2.irfft(fh)
    np.testing.assert_allclose(t2.div(t2.grad(f)), t2.laplacian(f), atol=1e-10)


def test_leray_is_projection_and_divergence_free(t2):
    rng = np.random.default_rng(1)
    w = rng.standard_normal((3,) + t2.shape)
    pw = t2.leray(w)
    assert np.abs(t2.div(pw[:2])).max() < 1e-12
    np.testing.assert_allclose(t2.leray(pw), pw, atol=1e-12)
    np.testing.assert_array_equal(pw[2], w[2])


def test_leray_keeps_solenoidal_and_kills_gradients(t2):
    x, y = t2.x
    u = np.stack([np.sin(y), np.sin(x)])
    np.testing.assert_allclose(t2.leray(u), u, atol=1e-13)
    g = np.stack([np.cos(x + 2 * y), 2 * np.cos(x + 2 * y)])
    assert np.abs(t2.leray(g)).max() < 1e-12


def test_free_stream_is_exact_translation():
    t1 = Torus(1, 32)
    x = t1.x[0]
    nodes = np.array([[0.7, 0.0, 0.0], [-1.3, 0.0, 0.0]])
    g = np.stack([np.sin(2 * x), np.cos(x)], axis=-1)
    out = t1.free_stream(g, nodes, 0.5)
    np.testing.assert_allclose(out[:, 0], np.sin(2 * (x - 0.35)), atol=1e-12)
    np.testing.assert_allclose(out[:, 1], np.cos(x + 0.65), atol=1e-12)


def test_v_grad_matches_product(t2):
    x, y = t2.x
    g = np.sin(x)[..., None] * np.array([1.0, 2.0]) + np.cos(y)[..., None]
    nodes = np.array([[1.0, 2.0, 5.0], [0.5, -1.0, 0.0]])
    expect = np.stack([np.cos(x) - 2 * np.sin(y), 2 * 0.5 * np.cos(x) + np.sin(y)], axis=-1)
    np.testing.assert_allclose(t2.v_grad(g, nodes), expect, atol=1e-12)


def test_parseval_and_sobolev(t2):
    x, y = t2.x
    f = np.sin(x) + 0.5 * np.cos(3 * y)
    l2sq = t2.l2(f) ** 2
    assert l2sq == pytest.approx((2 * np.pi) ** 2 * (0.5 + 0.125), rel=1e-12)
    assert t2.hs_norm(f, 0) ** 2 == pytest.approx(l2sq, rel=1e-12)
    # H^1 = |f|^2 + |grad f|^2
    grad_sq = (2 * np.pi) ** 2 * (0.5 + 0.125 * 9)
    assert t2.hn_norm(f, 1) ** 2 == pytest.approx(l2sq + grad_sq, rel=1e-12)
    assert t2.hs_norm(f, 1) ** 2 == pytest.approx(l2sq + grad_sq, rel=1e-12)


def test_sobolev_with_component_axes(t2):
    x, _ = t2.x
    u = np.stack([np.sin(x), np.sin(x)])
    assert t2.hn_norm(u, 2, comp_axes=1) ** 2 == pytest.approx(2 * t2.hn_norm(u[0], 2) ** 2, rel=1e-12)


def test_integrate_and_mean(t2):
    assert t2.integrate(np.ones(t2.shape)) == pytest.approx(t2.volume)
    assert t2.mean(np.full(t2.shape, 3.0)) == pytest.approx(3.0)


@pytest.mark.parametrize("d,n", [(0, 8), (4, 8), (2, 7), (2, 2)])
def test_bad_torus(d, n):
    with pytest.raises(ConfigError):
        Torus(d, n)
