import math

import numpy as np
import pytest
from scipy import integrate

from config.config import settings
from core.errors import DegenerateSamplesError, DomainError
from core.synthetic import add_noise, constant, edge
from core.types import BggdParams, Image
from estimation.bggd import (
    EstimatorConfig,
    SampleSet,
    _GridSearch,
    bggd_logpdf,
    bggd_pdf,
    detect_degenerate,
    estimate,
    estimate_global,
    estimate_maps,
    neg_log_likelihood,
    neighborhood_windows,
    sample_bggd,
    scale_mle,
)


@pytest.fixture
def truth():
    """Benchmark truth p = 1, e1 = 1.4, theta = 45 deg, m = 0.3."""
    return BggdParams.from_geometry(1.0, 1.4, math.radians(45.0), 0.3)


def test_gaussian_density_at_origin():
    """Test that p = 2, rho = 0, m = 1 gives 1/(2 pi) at the origin."""
    params = BggdParams(p=2.0, phi=0.0, rho=0.0, m=1.0)
    assert bggd_pdf([0.0, 0.0], params) == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-14)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0])
def test_density_integrates_to_one(p):
    """Test normalisation along whitened rays, where Q = s^2 is angle independent."""
    params = BggdParams(p=p, phi=1.1, rho=0.5, m=0.7)
    evals, evecs = np.linalg.eigh(params.sigma)
    sigma_half = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    det_half = math.sqrt(np.linalg.det(params.sigma))

    def ray(s, angle):
        x = sigma_half @ np.array([math.cos(angle), math.sin(angle)]) * s
        return bggd_pdf(x, params) * s

    radial, _ = integrate.quad(ray, 0.0, np.inf, args=(0.3,), limit=200)
    assert 2.0 * math.pi * det_half * radial == pytest.approx(1.0, rel=1e-7)
    other, _ = integrate.quad(ray, 0.0, np.inf, args=(2.4,), limit=200)
    assert other == pytest.approx(radial, rel=1e-9)


def test_density_is_symmetric(rng, truth):
    """Test that pdf(x) = pdf(-x)."""
    x = rng.standard_normal((20, 2))
    np.testing.assert_allclose(bggd_logpdf(x, truth), bggd_logpdf(-x, truth), rtol=1e-14)


def test_sampler_radial_moment(truth):
    """Test that the mean of Q^{p/2} matches 4 m^{p/2} / p."""
    samples = sample_bggd(truth, 200_000, seed=1)
    quad = np.einsum("ni,ij,nj->n", samples.x, truth.sigma_inv, samples.x)
    moment = np.mean(quad ** (truth.p / 2.0))
    assert moment == pytest.approx(4.0 * truth.m ** (truth.p / 2.0) / truth.p, rel=1e-2)


def test_gaussian_sampler_covariance():
    """Test that p = 2 samples have covariance m Sigma."""
    params = BggdParams(p=2.0, phi=0.6, rho=0.5, m=0.5)
    samples = sample_bggd(params, 200_000, seed=2)
    np.testing.assert_allclose(np.cov(samples.x.T), 0.5 * params.sigma, atol=1e-2)
    identity = sample_bggd(BggdParams(p=2.0, phi=0.0, rho=0.0), 200_000, seed=3)
    np.testing.assert_allclose(np.cov(identity.x.T), np.eye(2), atol=2e-2)


def test_sampler_is_deterministic(truth):
    """Test that equal seeds give equal samples."""
    a = sample_bggd(truth, 50, seed=7)
    b = sample_bggd(truth, 50, seed=7)
    c = sample_bggd(truth, 50, seed=8)
    np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)
    with pytest.raises(DomainError):
        sample_bggd(truth, 0, seed=7)


def test_profiled_likelihood_matches_direct_sum(truth):
    """Test F(p, phi, rho) against -sum log pdf at the scale maximiser."""
    samples = sample_bggd(truth, 500, seed=4)
    for p, phi, rho in [(1.0, 0.3, 0.2), (0.6, 4.0, 0.7), (2.5, 1.0, 0.0)]:
        sigma_inv = BggdParams(p=p, phi=phi, rho=rho).sigma_inv
        m = scale_mle(p, sigma_inv, samples)
        direct = -np.sum(bggd_logpdf(samples.x, BggdParams(p=p, phi=phi, rho=rho, m=m)))
        assert neg_log_likelihood(p, phi, rho, samples) == pytest.approx(direct, rel=1e-8)


def test_likelihood_rotation_and_period(truth):
    """Test that rotating samples by alpha shifts phi by -2 alpha, and 2pi periodicity."""
    samples = sample_bggd(truth, 300, seed=5)
    alpha = 0.4
    base = neg_log_likelihood(1.2, 0.9, 0.5, samples)
    turned = neg_log_likelihood(1.2, 0.9 - 2 * alpha, 0.5, samples.rotated(alpha))
    assert turned == pytest.approx(base, rel=1e-10)
    assert neg_log_likelihood(1.2, 0.9 + 2 * math.pi, 0.5, samples) == pytest.approx(base, rel=1e-12)


def test_likelihood_rejects_bad_arguments(truth):
    """Test that rho >= 1, p <= 0 and all-zero samples are rejected."""
    samples = sample_bggd(truth, 10, seed=6)
    with pytest.raises(DomainError):
        neg_log_likelihood(1.0, 0.0, 1.0, samples)
    with pytest.raises(DomainError):
        neg_log_likelihood(0.0, 0.0, 0.5, samples)
    with pytest.raises(DomainError):
        neg_log_likelihood(1.0, 0.0, 0.5, np.zeros((4, 2)))


def test_scale_mle_single_sample():
    """Test m* for one sample (sqrt 2, 0) with p = 2 and Sigma = I."""
    assert scale_mle(2.0, np.eye(2), SampleSet(x=[[math.sqrt(2.0), 0.0]])) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        scale_mle(1.0, np.eye(2), np.zeros((3, 2)))


def test_scale_mle_is_stationary(truth):
    """Test that perturbing m away from m* increases -log L."""
    samples = sample_bggd(truth, 400, seed=9)
    m_star = scale_mle(truth.p, truth.sigma_inv, samples)

    def nll(m):
        return -np.sum(bggd_logpdf(samples.x, truth.model_copy(update={"m": m})))

    assert nll(m_star) < nll(m_star * 1.001)
    assert nll(m_star) < nll(m_star * 0.999)


def test_detect_degenerate():
    """Test collinear, zero and single-sample sets against a generic one."""
    t = np.linspace(-1.0, 1.0, 10)
    assert detect_degenerate(np.stack([t, 2 * t], axis=1))
    assert detect_degenerate(np.zeros((5, 2)))
    assert detect_degenerate([[1.0, 2.0]])
    assert not detect_degenerate([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])


def test_detect_degenerate_is_scale_invariant(rng):
    """Test that scaling the samples never changes the verdict."""
    generic = rng.standard_normal((20, 2))
    t = rng.standard_normal(20)
    collinear = np.stack([t, 2 * t], axis=1)
    for scale in (1e-6, 1e-3, 1e3):
        assert not detect_degenerate(scale * generic)
        assert detect_degenerate(scale * collinear)


def test_detect_degenerate_perturbed_line():
    """Test that collinear samples plus AWGN with sigma 0.03 are not degenerate."""
    t = np.linspace(-1.0, 1.0, 49)
    line = np.stack([t, 2 * t], axis=1)
    for seed in range(100):
        noise = np.random.default_rng(seed).normal(0.0, 0.03, line.shape)
        assert not detect_degenerate(line + noise)


def test_estimate_rejects_degenerate_samples():
    """Test that collinear samples raise DegenerateSamplesError."""
    t = np.linspace(-1.0, 1.0, 10)
    with pytest.raises(DegenerateSamplesError):
        estimate(np.stack([t, -t], axis=1))


def test_estimate_not_worse_than_truth_or_grid(truth):
    """Test F(estimate) <= F(truth) and <= the best coarse-grid node."""
    samples = sample_bggd(truth, 2000, seed=10)
    config = EstimatorConfig()
    est = estimate(samples, config)
    value = neg_log_likelihood(est.p, est.phi, est.rho, samples)
    assert value <= neg_log_likelihood(truth.p, truth.phi, truth.rho, samples) + 1e-9
    assert value <= _GridSearch(samples.x, config).evaluate().min() + 1e-9
    assert 0.0 <= est.phi < 2 * math.pi
    assert config.p_min <= est.p <= config.p_max


def test_estimate_is_rotation_equivariant(truth):
    """Test that rotating the samples by alpha turns the major axis by alpha."""
    samples = sample_bggd(truth, 2000, seed=15)
    alpha = 0.6
    base = estimate(samples)
    turned = estimate(samples.rotated(alpha))
    assert turned.p == pytest.approx(base.p, abs=0.01)
    assert turned.weights.e1 == pytest.approx(base.weights.e1, abs=0.01)
    assert turned.m == pytest.approx(base.m, rel=0.01)
    shift = (turned.weights.theta - base.weights.theta - alpha) % math.pi
    assert min(shift, math.pi - shift) < math.radians(1.0)


def test_refinement_skips_per_call_validation(monkeypatch, truth):
    """Test that the local refinement does not go through neg_log_likelihood."""
    samples = sample_bggd(truth, 500, seed=16)
    expected = estimate(samples)

    def fail(*args, **kwargs):
        raise AssertionError("validated likelihood called inside the optimiser")

    monkeypatch.setattr("estimation.bggd.neg_log_likelihood", fail)
    again = estimate(samples)
    assert (again.p, again.phi, again.rho, again.m) == (expected.p, expected.phi, expected.rho, expected.m)


@pytest.mark.slow
def test_scale_mle_recovers_truth_scale(truth):
    """Test that m* at the true (p, Sigma) is within 2% of m from 1e5 samples."""
    samples = sample_bggd(truth, 100_000, seed=11)
    assert scale_mle(truth.p, truth.sigma_inv, samples) == pytest.approx(0.3, rel=0.02)


def test_estimate_isotropic_gaussian():
    """Test that Gaussian samples give p near 2 and rho near 0."""
    est = estimate(sample_bggd(BggdParams(p=2.0, phi=0.0, rho=0.0), 10_000, seed=12))
    assert est.p == pytest.approx(2.0, abs=0.15)
    assert est.rho < 0.05


def test_estimator_config_validation():
    """Test the p range and the restoration preset."""
    with pytest.raises(ValueError):
        EstimatorConfig(p_min=2.0, p_max=1.0)
    with pytest.raises(ValueError):
        EstimatorConfig(rho_cap=1.0)
    assert EstimatorConfig.for_restoration().p_max == settings.P_MAX_RESTORE
    assert EstimatorConfig.for_benchmark().p_max == settings.P_MAX_BENCH


def test_neighborhood_windows_wrap():
    """Test window shape and periodic wrap at the corner."""
    image = Image(data=np.arange(25.0).reshape(5, 5))
    wx, wy = neighborhood_windows(image, 1)
    assert wx.shape == (5, 5, 3, 3)
    assert wy.shape == (5, 5, 3, 3)
    # centre of the window at (0, 0) is the gradient at (0, 0)
    gx = 0.5 * (np.roll(image.data, -1, axis=1) - np.roll(image.data, 1, axis=1))
    assert wx[0, 0, 1, 1] == pytest.approx(gx[0, 0])
    assert wx[0, 0, 0, 0] == pytest.approx(gx[4, 4])


def test_edge_neighbourhood_orientation():
    """Test that a window on a vertical edge has heavy tails and a horizontal major axis."""
    image = add_noise(edge((32, 32)), 0.03, seed=13)
    wx, wy = neighborhood_windows(image, 5)
    config = EstimatorConfig.for_restoration()

    def fit(row, col):
        x = np.stack([wx[row, col].ravel(), wy[row, col].ravel()], axis=1)
        return estimate(x, config)

    on_edge = fit(16, 16)
    flat = fit(16, 8)
    theta = math.degrees(on_edge.weights.theta)
    assert min(theta, 180.0 - theta) < 10.0
    assert on_edge.weights.e1 > flat.weights.e1
    assert on_edge.p < flat.p
    assert on_edge.p < 0.5


@pytest.mark.slow
def test_flat_noisy_region_is_gaussian():
    """Test that pure noise over 7x7 windows gives a median p in [1.7, 2.3]."""
    image = add_noise(constant((16, 16), 0.5), 0.03, seed=14)
    maps = estimate_maps(image, half_width=3)
    assert 1.7 <= float(np.median(maps.p)) <= 2.3


def test_constant_image_falls_back():
    """Test that an all-zero gradient field gives p = 2, rho = 0, m = M_FLOOR."""
    maps = estimate_maps(constant((6, 6)), half_width=1)
    np.testing.assert_array_equal(maps.p, 2.0)
    np.testing.assert_array_equal(maps.rho, 0.0)
    np.testing.assert_array_equal(maps.m, settings.M_FLOOR)
    global_fit = estimate_global(constant((6, 6)))
    assert global_fit.p == 2.0
    assert global_fit.m == settings.M_FLOOR


def test_estimate_maps_independent_of_workers(rng):
    """Test that a process pool gives the same maps as the serial loop."""
    image = Image(data=rng.random((6, 6)))
    config = EstimatorConfig.for_restoration(n_p=4, n_phi=8, n_rho=4, max_evals=100)
    serial = estimate_maps(image, half_width=1, config=config, workers=1)
    pooled = estimate_maps(image, half_width=1, config=config, workers=2)
    for name in ("p", "phi", "rho", "m"):
        np.testing.assert_array_equal(getattr(serial, name), getattr(pooled, name))
    with pytest.raises(DomainError):
        estimate_maps(image, half_width=0)
