"""Divergence evaluation, catalog closed forms, bisectors, bounds."""

import numpy as np
import pytest

from bregquant import (DomainError, DomainSpec, bregman_bisector, builtin,
                       eval_field_similarity, eval_phi, eval_phi_quadrature,
                       hessian_field, marginal_product_form, phi_pairwise,
                       regularize, verify_bounds, with_bounds)

RNG = np.random.default_rng(20240901)

# (spec, box to draw test points from, strictly inside the domain)
CATALOG_1D = [
    (builtin("sq-euclid"), (-3.0, 3.0)),
    (builtin("norm-like"), (0.1, 3.0)),
    (builtin("norm-like", a=2.5), (0.1, 3.0)),
    (builtin("itakura-saito"), (0.1, 3.0)),
    (builtin("kl"), (0.1, 3.0)),
    (builtin("logistic"), (0.05, 0.95)),
    (builtin("softplus"), (-3.0, 3.0)),
    (builtin("softplus", a=2.0), (-3.0, 3.0)),
    (builtin("exponential"), (-2.0, 2.0)),
    (builtin("exponential", rho=-0.5), (-2.0, 2.0)),
    (builtin("cosh"), (-2.0, 2.0)),
]

CATALOG_ND = [
    (builtin("sq-euclid", d=2), (-3.0, 3.0)),
    (builtin("mahalanobis", S=np.array([[4.0, 1.0], [1.0, 2.0]])), (-3.0, 3.0)),
    (builtin("marginal-additive", f="itakura-saito", d=2), (0.1, 3.0)),
    (builtin("marginal-additive", f="softplus", d=3), (-2.0, 2.0)),
    (builtin("marginal-multiplicative", f="cosh", d=2), (-2.0, 2.0)),
    (builtin("softmax-marginal", f="sq-euclid", d=2, lam=0.7), (-2.0, 2.0)),
]

CATALOG = CATALOG_1D + CATALOG_ND


def draw_points(spec, box, k, rng=RNG):
    lo, hi = box
    return lo + (hi - lo) * rng.random((k, spec.domain.dimension))


# ---------------------------------------------------------------------------
# eval_phi
# ---------------------------------------------------------------------------

def test_phi_sq_euclid_is_squared_distance():
    spec = builtin("sq-euclid", d=2)
    assert eval_phi(spec, [3.0, 4.0], [0.0, 0.0]) == pytest.approx(25.0, abs=1e-12)


def test_phi_zero_on_diagonal():
    for spec, box in CATALOG:
        x = draw_points(spec, box, 8)
        assert np.all(eval_phi(spec, x, x) == 0.0), spec.name


def test_phi_itakura_saito_closed_form():
    spec = builtin("itakura-saito")
    assert eval_phi(spec, 2.0, 1.0) == pytest.approx(1.0 - np.log(2.0), rel=1e-14)


def test_phi_kl_closed_form():
    spec = builtin("kl")
    assert eval_phi(spec, 1.0, float(np.e)) == pytest.approx(np.e - 2.0, rel=1e-14)


def test_phi_nonnegative_and_positive_off_diagonal():
    for spec, box in CATALOG:
        xi = draw_points(spec, box, 500)
        x = draw_points(spec, box, 500)
        phi = eval_phi(spec, xi, x)
        assert np.all(phi >= 0.0), spec.name
        off = np.linalg.norm(xi - x, axis=-1) > 1e-6
        assert np.all(phi[off] > 0.0), spec.name


def test_phi_domain_guard():
    spec = builtin("itakura-saito")
    with pytest.raises(DomainError):
        eval_phi(spec, -1.0, 1.0)
    with pytest.raises(DomainError):
        eval_phi(spec, 1.0, 1e-15)       # within the boundary margin


def test_phi_pairwise_matches_eval_phi():
    for spec, box in CATALOG:
        pts = draw_points(spec, box, 40)
        cs = draw_points(spec, box, 7)
        mat = phi_pairwise(spec, pts, cs)
        for i in (0, 13, 39):
            for j in range(7):
                assert mat[i, j] == pytest.approx(
                    float(eval_phi(spec, pts[i], cs[j])), rel=1e-12, abs=1e-13), spec.name


# ---------------------------------------------------------------------------
# Quadrature form
# ---------------------------------------------------------------------------

def test_quadrature_exact_for_constant_hessian():
    spec = builtin("sq-euclid", d=2)
    val = eval_phi_quadrature(spec, [1.0, 0.0], [0.0, 0.0], nodes=4)
    assert val == pytest.approx(1.0, rel=1e-14)


def test_quadrature_itakura_saito():
    spec = builtin("itakura-saito")
    val = eval_phi_quadrature(spec, 2.0, 1.0, nodes=32)
    assert val == pytest.approx(1.0 - np.log(2.0), rel=1e-8)


def test_quadrature_zero_on_diagonal():
    for spec, box in CATALOG:
        x = draw_points(spec, box, 3)
        assert np.allclose(eval_phi_quadrature(spec, x, x, nodes=8), 0.0, atol=1e-15)


def test_quadrature_consistency_full_catalog():
    # 10^4 random pairs per member, 32 nodes, 1e-8 relative
    rng = np.random.default_rng(7)
    for spec, box in CATALOG:
        xi = draw_points(spec, box, 10_000, rng)
        x = draw_points(spec, box, 10_000, rng)
        direct = eval_phi(spec, xi, x)
        quad = eval_phi_quadrature(spec, xi, x, nodes=32)
        assert np.all(np.abs(quad - direct) <= 1e-8 * (1.0 + np.abs(direct))), spec.name


# ---------------------------------------------------------------------------
# Derivative consistency (finite differences)
# ---------------------------------------------------------------------------

def test_finite_difference_grad_and_hess():
    h = 1e-4
    rng = np.random.default_rng(3)
    for spec, box in CATALOG:
        d = spec.domain.dimension
        pts = draw_points(spec, box, 100, rng)
        g = spec.grad(pts)
        hess = spec.hess(pts)
        for k in range(d):
            e = np.zeros(d)
            e[k] = h
            fd_g = (spec.F(pts + e) - spec.F(pts - e)) / (2 * h)
            scale = 1.0 + np.abs(g[:, k])
            assert np.all(np.abs(fd_g - g[:, k]) <= 1e-5 * scale), spec.name
            fd_h = (spec.grad(pts + e) - spec.grad(pts - e)) / (2 * h)
            hscale = 1.0 + np.abs(hess[:, :, k])
            assert np.all(np.abs(fd_h - hess[:, :, k]) <= 1e-5 * hscale), spec.name


def test_hessians_are_spd_at_sampled_points():
    rng = np.random.default_rng(5)
    for spec, box in CATALOG:
        pts = draw_points(spec, box, 50, rng)
        eigs = np.linalg.eigvalsh(spec.hess(pts))
        assert np.all(eigs > 0), spec.name


# ---------------------------------------------------------------------------
# Bisectors
# ---------------------------------------------------------------------------

def test_bisector_euclid_midpoint():
    spec = builtin("sq-euclid")
    assert bregman_bisector(spec, 0.0, 1.0).root_1d() == pytest.approx(0.5, abs=1e-14)


def test_bisector_itakura_saito_root():
    spec = builtin("itakura-saito")
    root = bregman_bisector(spec, 1.0, 2.0).root_1d()
    assert root == pytest.approx(2.0 * np.log(2.0), rel=1e-13)


def test_bisector_affinity_full_catalog():
    rng = np.random.default_rng(11)
    for spec, box in CATALOG:
        a, b = draw_points(spec, box, 2, rng)
        bis = bregman_bisector(spec, a, b)
        xi = draw_points(spec, box, 1_000, rng)
        diff = eval_phi(spec, xi, a) - eval_phi(spec, xi, b)
        mag = 1.0 + np.abs(diff)
        assert np.all(np.abs(bis.value(xi) - diff) <= 1e-10 * mag), spec.name


def test_bisector_antisymmetry_and_unit_normal():
    spec = builtin("kl")
    fwd = bregman_bisector(spec, 0.5, 2.0)
    bwd = bregman_bisector(spec, 2.0, 0.5)
    xi = np.linspace(0.1, 3.0, 17)[:, None]
    assert np.allclose(fwd.value(xi), -bwd.value(xi), atol=1e-14)
    assert np.linalg.norm(fwd.unit_normal) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(np.sign(fwd.side(xi)), np.sign(fwd.value(xi)))


def test_bisector_rejects_equal_codewords():
    spec = builtin("sq-euclid")
    with pytest.raises(ValueError):
        bregman_bisector(spec, 1.0, 1.0)


# ---------------------------------------------------------------------------
# Matrix fields
# ---------------------------------------------------------------------------

def test_field_similarity_identity():
    f = builtin("const-field", S=np.eye(2))
    assert eval_field_similarity(f, [1.0, 1.0], [0.0, 0.0]) == pytest.approx(2.0)
    assert eval_field_similarity(f, [0.3, 0.4], [0.3, 0.4]) == 0.0


def test_field_similarity_scaled_identity():
    f = builtin("const-field", S=2.0 * np.eye(2))
    assert eval_field_similarity(f, [1.0, 0.0], [0.0, 0.0]) == pytest.approx(2.0)


def test_mahalanobis_reduces_to_constant_field():
    S = np.array([[3.0, 0.5], [0.5, 1.0]])
    spec = builtin("mahalanobis", S=S)
    f = builtin("const-field", S=S)
    rng = np.random.default_rng(13)
    xi = rng.standard_normal((100, 2))
    x = rng.standard_normal((100, 2))
    assert np.allclose(eval_phi(spec, xi, x), eval_field_similarity(f, xi, x),
                       rtol=1e-12, atol=1e-12)


def test_mahalanobis_identity_matches_sq_euclid():
    spec_m = builtin("mahalanobis", S=np.eye(2))
    spec_e = builtin("sq-euclid", d=2)
    rng = np.random.default_rng(17)
    xi = rng.standard_normal((100, 2))
    x = rng.standard_normal((100, 2))
    assert np.allclose(eval_phi(spec_m, xi, x), eval_phi(spec_e, xi, x), rtol=1e-12)


def test_const_field_requires_spd():
    with pytest.raises(ValueError):
        builtin("const-field", S=np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_hessian_field_matches_hessian():
    spec = builtin("marginal-additive", f="softplus", d=2)
    f = hessian_field(spec)
    pts = np.array([[0.2, -0.4]])
    assert np.allclose(f.S(pts), spec.hess(pts))


# ---------------------------------------------------------------------------
# Regularization
# ---------------------------------------------------------------------------

def test_regularize_scales_sq_euclid():
    spec = builtin("sq-euclid", d=2)
    reg = regularize(spec, 0.5)
    rng = np.random.default_rng(19)
    xi = rng.standard_normal((50, 2))
    x = rng.standard_normal((50, 2))
    assert np.allclose(eval_phi(reg, xi, x),
                       1.5 * np.sum((xi - x) ** 2, axis=-1), rtol=1e-12)


def test_regularize_shifts_divergence_and_hessian():
    rng = np.random.default_rng(23)
    for spec, box in [(builtin("itakura-saito"), (0.1, 3.0)),
                      (builtin("softplus"), (-3.0, 3.0))]:
        eps = 0.25
        reg = regularize(spec, eps)
        xi = draw_points(spec, box, 64, rng)
        x = draw_points(spec, box, 64, rng)
        expect = eval_phi(spec, xi, x) + eps * np.sum((xi - x) ** 2, axis=-1)
        assert np.allclose(eval_phi(reg, xi, x), expect, rtol=1e-12, atol=1e-14)
        base = np.linalg.eigvalsh(spec.hess(x))
        shifted = np.linalg.eigvalsh(reg.hess(x))
        assert np.allclose(shifted, base + 2.0 * eps, rtol=1e-12, atol=1e-14)
        assert np.all(eval_phi(reg, x, x) == 0.0)


def test_regularize_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        regularize(builtin("sq-euclid"), 0.0)


# ---------------------------------------------------------------------------
# Comparison bounds
# ---------------------------------------------------------------------------

def test_bounds_tight_for_sq_euclid():
    spec = builtin("sq-euclid", d=2)
    rng = np.random.default_rng(29)
    pairs = rng.uniform(-10, 10, size=(1000, 2, 2))
    report = verify_bounds(spec, pairs)
    assert report.ok
    # equality case: both margins vanish to rounding
    assert abs(report.worst_upper_margin) < 1e-10
    assert abs(report.worst_lower_margin) < 1e-10


def test_bounds_softplus_upper():
    spec = builtin("softplus")
    rng = np.random.default_rng(31)
    pairs = rng.uniform(-10, 10, size=(10_000, 2, 1))
    report = verify_bounds(spec, pairs)
    assert report.checked_upper and not report.checked_lower
    assert report.upper_violations == 0


def test_bounds_itakura_saito_interval_constants():
    # On [1, 2] the second derivative 1/x^2 lies in [1/4, 1]
    spec = with_bounds(builtin("itakura-saito"), lip_grad=1.0, alpha=0.25)
    rng = np.random.default_rng(37)
    pairs = rng.uniform(1.0, 2.0, size=(10_000, 2, 1))
    report = verify_bounds(spec, pairs)
    assert report.ok


# ---------------------------------------------------------------------------
# Builders / misc
# ---------------------------------------------------------------------------

def test_builtin_unknown_name():
    with pytest.raises(ValueError):
        builtin("not-a-divergence")


def test_domain_kinds():
    dom = DomainSpec.positive_orthant(2)
    assert dom.contains([1.0, 2.0])
    assert not dom.contains([1.0, -2.0])
    assert not dom.contains([1.0, 0.0])
    box = DomainSpec.open_unit_box(1)
    assert box.contains([0.5]) and not box.contains([1.0])


def test_marginal_product_form_variants():
    xi = np.array([1.2, 0.8])
    x = np.array([0.5, 1.5])
    vf = marginal_product_form("cosh", xi, x, variant="f")
    vphi = marginal_product_form("cosh", xi, x, variant="phi")
    assert np.isfinite(vf) and np.isfinite(vphi)
    assert vf != pytest.approx(vphi)      # genuinely different display forms
    with pytest.raises(ValueError):
        marginal_product_form("cosh", xi, x, variant="bogus")
