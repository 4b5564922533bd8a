"""Distributions, tessellations, proxy measures, quadrature, moments."""

import numpy as np
import pytest

from bregquant import (ToleranceError, adaptive_simpson, build_proxy,
                       empirical, gaussian_truncated, moment_sigma, point_mass,
                       proxy_l1_error, pseudo_norm, sample, tessellate,
                       triangular, uniform_box)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def test_sampling_deterministic():
    u = uniform_box(0.0, 1.0)
    assert np.array_equal(sample(u, 3, seed=7), sample(u, 3, seed=7))


def test_sampling_prefix_property():
    for dist in (uniform_box([0.0, 0.0], [1.0, 1.0]), triangular(),
                 gaussian_truncated([-3.0, -3.0], [3.0, 3.0])):
        big = sample(dist, 100, seed=5)
        small = sample(dist, 40, seed=5)
        assert np.array_equal(big[:40], small), dist.label


def test_uniform_square_means():
    u = uniform_box([0.0, 0.0], [1.0, 1.0])
    pts = sample(u, 100_000, seed=1)
    # CLT bound at ~3.3 sigma: sd of the mean is 1/sqrt(12 N)
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.01)


def test_samples_stay_in_support():
    for dist in (uniform_box([1.0], [2.0]), triangular(),
                 gaussian_truncated([-2.0], [1.0], mean=0.5, sigma=2.0)):
        pts = sample(dist, 10_000, seed=3)
        lo, hi = dist.support_box
        assert np.all(pts >= lo) and np.all(pts <= hi), dist.label


def test_triangular_matches_density():
    # mean of h(x) = 2x is 2/3
    pts = sample(triangular(), 200_000, seed=11)
    assert pts.mean() == pytest.approx(2.0 / 3.0, abs=0.005)


def test_gaussian_truncated_density_normalized():
    g = gaussian_truncated([-2.0], [1.5], mean=0.3, sigma=0.8)
    val, _ = adaptive_simpson(lambda t: float(g.density(np.array([t]))), -2.0, 1.5, tol=1e-12)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_empirical_resamples_points():
    pts = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
    e = empirical(pts)
    draw = sample(e, 50, seed=9)
    assert all(any(np.array_equal(row, p) for p in pts) for row in draw)


# ---------------------------------------------------------------------------
# Tessellation
# ---------------------------------------------------------------------------

def test_tessellate_1d_cells():
    t = tessellate([0.0], [1.0], 2)
    assert t.n_cells == 2
    assert np.allclose(t.centers.ravel(), [0.25, 0.75])
    assert t.cell_edge == pytest.approx(0.5)


def test_tessellate_2d_diameter():
    t = tessellate([0.0, 0.0], [1.0, 1.0], 3)
    assert t.n_cells == 9
    assert t.cell_diameter == pytest.approx(np.sqrt(2.0) / 3.0)


def test_locate_half_open_convention():
    t = tessellate([0.0], [1.0], 2)
    assert int(t.locate(0.49)) == 0
    assert int(t.locate(0.5)) == 1
    assert int(t.locate(0.0)) == 0
    assert int(t.locate(1.0)) == 1      # hi joins the last cell
    assert np.array_equal(t.locate([[0.1], [0.9]]), [0, 1])


def test_cells_partition_the_box():
    t = tessellate([0.0, 0.0], [2.0, 2.0], 4)
    rng = np.random.default_rng(13)
    pts = 2.0 * rng.random((5_000, 2))
    idx = t.locate(pts)
    assert idx.min() >= 0 and idx.max() < t.n_cells
    # each point lies inside its located half-open cell
    for i in rng.integers(0, 5_000, size=64):
        lo, hi = t.cell_box(int(idx[i]))
        assert np.all(pts[i] >= lo - 1e-12) and np.all(pts[i] < hi + 1e-12)


def test_tessellate_rejects_bad_input():
    with pytest.raises(ValueError):
        tessellate([0.0], [1.0], 0)
    with pytest.raises(ValueError):
        tessellate([0.0, 0.0], [1.0, 2.0], 2)    # not a hypercube


# ---------------------------------------------------------------------------
# Proxy measure
# ---------------------------------------------------------------------------

def test_proxy_uniform_exact():
    u = uniform_box(0.0, 1.0)
    proxy = build_proxy(u, tessellate([0.0], [1.0], 2), mode="quadrature")
    assert np.allclose(proxy.cell_probs, [0.5, 0.5], atol=1e-12)


def test_proxy_triangular_quadrature():
    proxy = build_proxy(triangular(), tessellate([0.0], [1.0], 2), mode="quadrature")
    assert np.allclose(proxy.cell_probs, [0.25, 0.75], atol=1e-10)


def test_proxy_mc_within_binomial_ci():
    proxy_q = build_proxy(triangular(), tessellate([0.0], [1.0], 4), mode="quadrature")
    proxy_mc = build_proxy(triangular(), tessellate([0.0], [1.0], 4), mode="mc",
                           n_samples=1_000_000, seed=17)
    p = proxy_q.cell_probs
    ci = 3.0 * np.sqrt(p * (1 - p) / 1_000_000)
    assert np.all(np.abs(proxy_mc.cell_probs - p) <= ci + 1e-9)


def test_proxy_density_form():
    # h_m = (m/L)^d p_i on cell i
    proxy = build_proxy(triangular(), tessellate([0.0], [1.0], 2), mode="quadrature")
    assert proxy.h_m([0.2])[0] == pytest.approx(2.0 * 0.25)
    assert proxy.h_m([0.8])[0] == pytest.approx(2.0 * 0.75)


def test_proxy_l1_error_triangular_exact():
    # cellwise average of h(x) = 2x gives integral of |h - h_m| = 1/(2m)
    for m in (2, 4, 8):
        proxy = build_proxy(triangular(), tessellate([0.0], [1.0], m), mode="quadrature")
        assert proxy_l1_error(triangular(), proxy) == pytest.approx(1.0 / (2 * m), rel=1e-8)


def test_proxy_l1_error_decreasing_dyadic():
    prev = np.inf
    g = gaussian_truncated([0.0], [1.0], mean=0.4, sigma=0.3)
    for m in (2, 4, 8, 16, 32, 64):
        proxy = build_proxy(g, tessellate([0.0], [1.0], m), mode="quadrature")
        err = proxy_l1_error(g, proxy)
        assert err < prev
        prev = err


# ---------------------------------------------------------------------------
# Pseudo-norm quadrature
# ---------------------------------------------------------------------------

def test_pseudo_norm_constant():
    for p in (0.25, 0.5, 1.0):
        val, err = pseudo_norm(lambda x: np.ones(x.shape[:-1]), p, [0.0], [1.0])
        assert val == pytest.approx(1.0, abs=1e-12)


def test_pseudo_norm_closed_form_oracle():
    # g(x) = x^-2 with p = 1/3: integral of x^(-2/3) on [1,2] is 3(2^(1/3)-1)
    val, err = pseudo_norm(lambda x: x[..., 0] ** -2.0, 1.0 / 3.0, [1.0], [2.0])
    exact = (3.0 * (2.0 ** (1.0 / 3.0) - 1.0)) ** 3
    assert val == pytest.approx(exact, rel=1e-10)


def test_pseudo_norm_p1_is_plain_integral():
    val, _ = pseudo_norm(lambda x: x[..., 0] ** 2, 1.0, [0.0], [1.0])
    assert val == pytest.approx(1.0 / 3.0, rel=1e-10)


def test_pseudo_norm_2d_constant_and_smooth():
    val, _ = pseudo_norm(lambda x: np.ones(x.shape[:-1]), 0.5, [0.0, 0.0], [1.0, 1.0])
    assert val == pytest.approx(1.0, abs=1e-12)
    # separable oracle: int (xy)^(1/2) = (2/3)^2
    val, _ = pseudo_norm(lambda x: x[..., 0] * x[..., 1], 0.5, [0.0, 0.0], [1.0, 1.0])
    assert val == pytest.approx((2.0 / 3.0) ** 4, rel=1e-8)


def test_pseudo_norm_3d_stratified_mc():
    val, err = pseudo_norm(lambda x: np.ones(x.shape[:-1]), 0.5,
                           [0.0, 0.0, 0.0], [1.0, 1.0, 1.0], n_samples=20_000)
    assert val == pytest.approx(1.0, abs=1e-9)


def test_pseudo_norm_rejects_bad_p():
    with pytest.raises(ValueError):
        pseudo_norm(lambda x: np.ones(x.shape[:-1]), 1.5, [0.0], [1.0])


def test_adaptive_simpson_depth_cap():
    with pytest.raises(ToleranceError) as info:
        adaptive_simpson(lambda t: abs(t) ** 0.1, -1.0, 1.0, tol=1e-300, depth_cap=6)
    assert np.isfinite(info.value.best)


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def test_moment_point_mass_zero():
    est = moment_sigma(point_mass([0.0, 0.0]), 2.0, mode="mc", n_samples=1_000)
    assert est.value == 0.0


def test_moment_uniform_closed_form():
    est = moment_sigma(uniform_box(0.0, 1.0), 2.0, mode="quadrature")
    assert est.value == pytest.approx(np.sqrt(1.0 / 3.0), rel=1e-9)
    mc = moment_sigma(uniform_box(0.0, 1.0), 2.0, mode="mc", n_samples=200_000, seed=3)
    assert mc.value == pytest.approx(est.value, rel=0.01)


def test_moment_centering_never_increases():
    for dist in (uniform_box(0.0, 1.0), triangular()):
        raw = moment_sigma(dist, 2.0, mode="mc", n_samples=50_000, seed=5)
        centered = moment_sigma(dist, 2.0, mode="mc", n_samples=50_000, seed=5,
                                center="mean")
        assert centered.value <= raw.value + 1e-12
