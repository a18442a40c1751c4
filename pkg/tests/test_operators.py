import numpy as np
import pytest
from scipy import ndimage

from core.errors import DomainError
from core.types import GradientField, Image
from restoration.operators import (
    SpectralCache,
    blur_apply,
    blur_transpose,
    grad_central,
    grad_forward,
    grad_transpose,
    make_psf,
    system_symbol_min,
    u_solve,
)


@pytest.fixture
def psf():
    """Small Gaussian blur used by most operator tests."""
    return make_psf(3, 1.0)


@pytest.fixture
def cache(psf):
    """Spectral cache for 8x8 images."""
    return SpectralCache((8, 8), psf)


def test_make_psf_normalised():
    """Test that the kernel sums to one and is symmetric."""
    psf = make_psf(9, 2.0)
    assert psf.kernel.shape == (9, 9)
    assert psf.kernel.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(psf.kernel, psf.kernel.T)
    assert psf.kernel[4, 4] == psf.kernel.max()


def test_make_psf_rejects_even_band():
    """Test that even or non-positive bands and sigma are rejected."""
    with pytest.raises(DomainError):
        make_psf(4, 1.0)
    with pytest.raises(DomainError):
        make_psf(0, 1.0)
    with pytest.raises(DomainError):
        make_psf(3, 0.0)


def test_band_one_is_identity(rng):
    """Test that band = 1 makes K the identity."""
    u = rng.random((6, 7))
    cache = SpectralCache(u.shape, make_psf(1, 1.0))
    np.testing.assert_allclose(cache.blur(u), u, atol=1e-14)


def test_forward_difference_values():
    """Test the periodic forward differences on a small ramp."""
    u = Image(data=np.array([[0.0, 1.0, 3.0], [2.0, 2.0, 2.0]]))
    grad = grad_forward(u)
    np.testing.assert_allclose(grad.gx, [[1.0, 2.0, -3.0], [0.0, 0.0, 0.0]])
    np.testing.assert_allclose(grad.gy, [[2.0, 1.0, -1.0], [-2.0, -1.0, 1.0]])


def test_gradient_adjoint(rng):
    """Test <Du, t> = <u, D^T t> to 1e-12."""
    u = Image(data=rng.standard_normal((9, 11)))
    t = GradientField(gx=rng.standard_normal((9, 11)), gy=rng.standard_normal((9, 11)))
    du = grad_forward(u)
    lhs = np.sum(du.gx * t.gx) + np.sum(du.gy * t.gy)
    rhs = np.sum(u.data * grad_transpose(t).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_central_difference_of_linear_ramp():
    """Test central differences away from the periodic seam."""
    u = Image(data=np.tile(np.arange(8.0), (4, 1)))
    grad = grad_central(u)
    np.testing.assert_allclose(grad.gx[:, 1:-1], 1.0)
    np.testing.assert_allclose(grad.gy, 0.0)


def test_spectral_difference_matches_roll(rng, cache):
    """Test that the cached D_h and D_v symbols reproduce forward_difference."""
    u = rng.standard_normal((8, 8))
    grad = grad_forward(Image(data=u))
    spectrum = np.fft.fft2(u)
    np.testing.assert_allclose(np.fft.ifft2(cache.dh * spectrum).real, grad.gx, atol=1e-12)
    np.testing.assert_allclose(np.fft.ifft2(cache.dv * spectrum).real, grad.gy, atol=1e-12)


def test_blur_matches_wrapped_convolution(rng, psf, cache):
    """Test that FFT blur equals circular convolution with the kernel."""
    u = Image(data=rng.random((8, 8)))
    expected = ndimage.convolve(u.data, psf.kernel, mode="wrap")
    np.testing.assert_allclose(blur_apply(u, psf, cache).data, expected, atol=1e-12)


def test_blur_adjoint(rng, psf, cache):
    """Test <Ku, v> = <u, K^T v> to 1e-12."""
    u = Image(data=rng.standard_normal((8, 8)))
    v = Image(data=rng.standard_normal((8, 8)))
    lhs = np.sum(blur_apply(u, psf, cache).data * v.data)
    rhs = np.sum(u.data * blur_transpose(v, psf, cache).data)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_wide_kernel_folds_onto_small_image():
    """Test that a kernel wider than the image still preserves constants."""
    cache = SpectralCache((4, 4), make_psf(9, 2.0))
    np.testing.assert_allclose(cache.blur(np.full((4, 4), 0.3)), 0.3, atol=1e-14)


def test_shape_and_psf_mismatch(psf, cache):
    """Test that a different shape or PSF is rejected."""
    with pytest.raises(DomainError):
        blur_apply(Image(data=np.zeros((5, 5))), psf, cache)
    with pytest.raises(DomainError):
        blur_apply(Image(data=np.zeros((8, 8))), make_psf(5, 1.0), cache)


def test_system_symbol_min_positive(cache):
    """Test that null(D) and null(K) only share zero for a normalised kernel."""
    value = system_symbol_min(cache, 1.0)
    assert 0.0 < value <= 1.0 + 1e-12


def _dense(apply, n_in, shape_in):
    columns = []
    for k in range(n_in):
        e = np.zeros(n_in)
        e[k] = 1.0
        columns.append(np.ravel(apply(e.reshape(shape_in))))
    return np.array(columns).T


def _stacked_gradient(u):
    grad = grad_forward(Image(data=u))
    return np.concatenate([grad.gx.ravel(), grad.gy.ravel()])


def test_u_solve_matches_dense_solve(rng, psf, cache):
    """Test the spectral u-solve against a dense linear solve on 8x8."""
    shape = (8, 8)
    n = 64
    D = _dense(_stacked_gradient, n, shape)
    K = _dense(cache.blur, n, shape)
    beta_r, beta_t = 3.0, 7.0
    ratio = beta_r / beta_t

    rhs_t = GradientField(gx=rng.standard_normal(shape), gy=rng.standard_normal(shape))
    rhs_r = Image(data=rng.standard_normal(shape))
    g = Image(data=rng.random(shape))
    u = u_solve(rhs_t, rhs_r, g, beta_r, beta_t, cache)

    t_vec = np.concatenate([rhs_t.gx.ravel(), rhs_t.gy.ravel()])
    system = D.T @ D + ratio * K.T @ K
    rhs = D.T @ t_vec + ratio * K.T @ (rhs_r.data + g.data).ravel()
    expected = np.linalg.solve(system, rhs)
    residual = np.linalg.norm(system @ u.data.ravel() - rhs) / np.linalg.norm(rhs)
    assert residual < 1e-10
    np.testing.assert_allclose(u.data.ravel(), expected, atol=1e-9)


def test_u_solve_rejects_non_positive_penalty(cache):
    """Test that beta_r <= 0 is rejected."""
    zeros = np.zeros((8, 8))
    with pytest.raises(DomainError):
        u_solve(GradientField(gx=zeros, gy=zeros), Image(data=zeros), Image(data=zeros), 0.0, 1.0, cache)


def test_operators_commute_with_cyclic_shifts(rng, psf, cache):
    """Test that shift-then-apply equals apply-then-shift for D, D^T, K and K^T."""
    u = rng.standard_normal((8, 8))
    shift = (3, -2)

    def rolled(a):
        return np.roll(a, shift, axis=(0, 1))

    grad = grad_forward(Image(data=u))
    shifted_grad = grad_forward(Image(data=rolled(u)))
    np.testing.assert_allclose(shifted_grad.gx, rolled(grad.gx), atol=1e-12)
    np.testing.assert_allclose(shifted_grad.gy, rolled(grad.gy), atol=1e-12)

    central = grad_central(Image(data=u))
    shifted_central = grad_central(Image(data=rolled(u)))
    np.testing.assert_allclose(shifted_central.gx, rolled(central.gx), atol=1e-12)
    np.testing.assert_allclose(shifted_central.gy, rolled(central.gy), atol=1e-12)

    t = GradientField(gx=rng.standard_normal((8, 8)), gy=rng.standard_normal((8, 8)))
    shifted_t = GradientField(gx=rolled(t.gx), gy=rolled(t.gy))
    np.testing.assert_allclose(grad_transpose(shifted_t).data, rolled(grad_transpose(t).data), atol=1e-12)

    np.testing.assert_allclose(
        blur_apply(Image(data=rolled(u)), psf, cache).data, rolled(blur_apply(Image(data=u), psf, cache).data), atol=1e-12
    )
    np.testing.assert_allclose(
        blur_transpose(Image(data=rolled(u)), psf, cache).data,
        rolled(blur_transpose(Image(data=u), psf, cache).data),
        atol=1e-12,
    )


def test_u_solve_keeps_constant_observation(cache):
    """Test that t = 0, r = 0 and a constant g give u equal to that constant."""
    zeros = np.zeros((8, 8))
    g = Image(data=np.full((8, 8), 0.37))
    u = u_solve(GradientField(gx=zeros, gy=zeros), Image(data=zeros), g, 2.0, 5.0, cache)
    np.testing.assert_allclose(u.data, 0.37, atol=1e-12)
