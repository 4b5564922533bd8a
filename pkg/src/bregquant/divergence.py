"""Bregman divergences: evaluation, built-in catalog, bisectors, comparison bounds.

A divergence is described by a potential F (strictly convex, C^2) on an open
convex domain U, together with its gradient and Hessian in closed form.  The
divergence of xi with respect to x is

    phi(xi, x) = F(xi) - F(x) - <grad F(x), xi - x>  >= 0,

with equality iff xi == x.  Because F(xi) cancels in phi(xi, a) - phi(xi, b),
the locus where two codewords tie is an affine hyperplane; this is what makes
nearest-codeword cells intersections of halfspaces and 1D cells intervals.

All evaluators are pure and vectorized over a leading batch shape: points are
arrays of shape (..., d) and scalars are accepted when d == 1.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.special import expit

# Evaluators reject points closer than this to a finite domain boundary:
# the log / 1/x catalog members blow up there.
BOUNDARY_MARGIN = 1e-12

# Negative phi values within this relative tolerance of zero are rounding
# noise near xi == x and get clamped.
NEG_CLAMP = 1e-12


class DomainError(ValueError):
    """A point lies outside (or too close to the boundary of) the domain."""


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------

@dataclass
class DomainSpec:
    """Open convex domain: a product of open intervals (possibly unbounded).

    kind is one of "full-space", "positive-orthant", "open-box",
    "open-unit-box"; lo/hi are the per-axis interval ends with +-inf on
    unbounded sides.
    """

    kind: str
    dimension: int
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (self.dimension,)).copy()
        self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (self.dimension,)).copy()
        if not np.all(self.lo < self.hi):
            raise DomainError(f"empty domain: lo={self.lo}, hi={self.hi}")

    @classmethod
    def full_space(cls, dimension: int) -> "DomainSpec":
        return cls("full-space", dimension, -np.inf, np.inf)

    @classmethod
    def positive_orthant(cls, dimension: int) -> "DomainSpec":
        return cls("positive-orthant", dimension, 0.0, np.inf)

    @classmethod
    def open_unit_box(cls, dimension: int) -> "DomainSpec":
        return cls("open-unit-box", dimension, 0.0, 1.0)

    @classmethod
    def open_box(cls, lo, hi) -> "DomainSpec":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        return cls("open-box", lo.shape[0], lo, hi)

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    def contains(self, points, margin: float = BOUNDARY_MARGIN):
        """Membership test, strict by `margin` on every finite side."""
        pts = as_points(points, self.dimension)
        lo = np.where(np.isfinite(self.lo), self.lo + margin, self.lo)
        hi = np.where(np.isfinite(self.hi), self.hi - margin, self.hi)
        return np.all((pts > lo) & (pts < hi), axis=-1)

    def require(self, points, what: str = "point") -> None:
        ok = self.contains(points)
        if not np.all(ok):
            bad = as_points(points, self.dimension)[~np.atleast_1d(ok)][:1]
            raise DomainError(f"{what} outside domain {self.kind}: {bad}")

    def project_inside(self, points, margin: float = 1e-9):
        """Clip points onto the domain with a guard margin on finite sides."""
        pts = as_points(points, self.dimension)
        lo = np.where(np.isfinite(self.lo), self.lo + margin, self.lo)
        hi = np.where(np.isfinite(self.hi), self.hi - margin, self.hi)
        return np.clip(pts, lo, hi)


def as_points(x, dimension: int) -> np.ndarray:
    """Coerce scalars / sequences to float arrays of shape (..., dimension)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if dimension != 1:
            raise ValueError(f"scalar point given for dimension {dimension}")
        return arr.reshape(1)
    if arr.shape[-1] != dimension:
        if dimension == 1:
            return arr[..., None]
        raise ValueError(f"point shape {arr.shape} incompatible with dimension {dimension}")
    return arr


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------

@dataclass
class DivergenceSpec:
    """Potential triple (F, grad, hess) on a domain.

    F maps (..., d) -> (...); grad maps (..., d) -> (..., d); hess maps
    (..., d) -> (..., d, d) and must be symmetric positive definite on the
    domain.  lip_grad / alpha, when set, are a Lipschitz constant of grad F
    and an alpha-convexity constant valid on the whole domain.
    """

    name: str
    domain: DomainSpec
    F: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]
    lip_grad: Optional[float] = None
    alpha: Optional[float] = None
    params: dict = field(default_factory=dict)


@dataclass
class MatrixFieldSpec:
    """Continuous field x -> S(x) of symmetric positive definite matrices."""

    name: str
    domain: DomainSpec
    S: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Bisector:
    """Affine functional g(xi) = normal . xi + offset with
    g(xi) = phi(xi, a) - phi(xi, b) exactly, so g(xi) <= 0 iff a wins.

    `unit_normal` / `unit_offset` give the same hyperplane rescaled to a unit
    normal, which is the better-conditioned form for halfspace tests.
    """

    normal: np.ndarray
    offset: float

    def value(self, xi) -> np.ndarray:
        pts = as_points(xi, self.normal.shape[0])
        return pts @ self.normal + self.offset

    @property
    def unit_normal(self) -> np.ndarray:
        return self.normal / np.linalg.norm(self.normal)

    @property
    def unit_offset(self) -> float:
        return self.offset / np.linalg.norm(self.normal)

    def side(self, xi) -> np.ndarray:
        """Signed distance to the tie hyperplane; <= 0 means a is closer."""
        pts = as_points(xi, self.normal.shape[0])
        return pts @ self.unit_normal + self.unit_offset

    def root_1d(self) -> float:
        """Tie point for d == 1."""
        if self.normal.shape[0] != 1:
            raise ValueError("root_1d only defined in one dimension")
        return -self.offset / self.normal[0]


# ---------------------------------------------------------------------------
# Core evaluation
# ---------------------------------------------------------------------------

def eval_phi(spec: DivergenceSpec, xi, x) -> np.ndarray:
    """Bregman divergence phi(xi, x), clamped to 0 near the diagonal."""
    d = spec.domain.dimension
    xi = as_points(xi, d)
    x = as_points(x, d)
    spec.domain.require(xi, "xi")
    spec.domain.require(x, "x")
    f_xi = spec.F(xi)
    g = spec.grad(x)
    val = f_xi - spec.F(x) - np.sum(g * (xi - x), axis=-1)
    tol = NEG_CLAMP * (1.0 + np.abs(f_xi))
    val = np.where((val < 0) & (np.abs(val) <= tol), 0.0, val)
    return val[()] if np.ndim(val) == 0 else val


def phi_pairwise(spec: DivergenceSpec, points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """phi(points[i], centers[j]) as an (N, M) matrix.

    Uses the affine decomposition phi(xi, a) = F(xi) + c_a - <grad F(a), xi>
    so the cross term is a single matmul; this is the hot path for
    assignment and Monte Carlo distortion.
    """
    d = spec.domain.dimension
    pts = as_points(points, d).reshape(-1, d)
    cs = as_points(centers, d).reshape(-1, d)
    f_pts = spec.F(pts)
    g = spec.grad(cs)
    const = np.sum(g * cs, axis=-1) - spec.F(cs)
    val = f_pts[:, None] + const[None, :] - pts @ g.T
    tol = NEG_CLAMP * (1.0 + np.abs(f_pts))[:, None]
    np.clip(val, 0.0, None, out=val, where=np.abs(val) <= tol)
    return val


@lru_cache(maxsize=16)
def _gauss_legendre_01(nodes: int):
    t, w = np.polynomial.legendre.leggauss(nodes)
    return (t + 1.0) / 2.0, w / 2.0


def eval_phi_quadrature(spec: DivergenceSpec, xi, x, nodes: int = 32) -> np.ndarray:
    """phi(xi, x) through the integral remainder form

        int_0^1 (1 - u) hess(x + u (xi - x)) . (xi - x)^{x2} du,

    evaluated with a `nodes`-point Gauss-Legendre rule on [0, 1].
    """
    d = spec.domain.dimension
    xi = as_points(xi, d)
    x = as_points(x, d)
    spec.domain.require(xi, "xi")
    spec.domain.require(x, "x")
    diff = xi - x
    u, w = _gauss_legendre_01(nodes)
    acc = 0.0
    for uk, wk in zip(u, w):
        h = spec.hess(x + uk * diff)
        quad = np.einsum("...ij,...i,...j->...", h, diff, diff)
        acc = acc + wk * (1.0 - uk) * quad
    return acc[()] if np.ndim(acc) == 0 else acc


def eval_field_similarity(fieldspec: MatrixFieldSpec, xi, a) -> np.ndarray:
    """Quadratic-form similarity (xi - a)^T S(a) (xi - a)."""
    d = fieldspec.domain.dimension
    xi = as_points(xi, d)
    a = as_points(a, d)
    fieldspec.domain.require(xi, "xi")
    fieldspec.domain.require(a, "a")
    diff = xi - a
    s = fieldspec.S(a)
    val = np.einsum("...ij,...i,...j->...", s, diff, diff)
    return val[()] if np.ndim(val) == 0 else val


def bregman_bisector(spec: DivergenceSpec, a, b) -> Bisector:
    """Affine tie functional of the codeword pair (a, b).

    phi(xi, a) - phi(xi, b) is affine in xi because F(xi) cancels; the
    coefficients below reproduce the difference exactly.
    """
    d = spec.domain.dimension
    a = as_points(a, d).reshape(d)
    b = as_points(b, d).reshape(d)
    if np.array_equal(a, b):
        raise ValueError("bisector undefined for identical codewords")
    spec.domain.require(a, "a")
    spec.domain.require(b, "b")
    ga = spec.grad(a)
    gb = spec.grad(b)
    normal = gb - ga
    offset = float(spec.F(b) - spec.F(a) - gb @ b + ga @ a)
    return Bisector(normal=normal, offset=offset)


def regularize(spec: DivergenceSpec, eps: float) -> DivergenceSpec:
    """Quadratic regularization F_eps(x) = F(x) + eps |x|^2.

    Adds eps |xi - x|^2 to the divergence and 2 eps I to the Hessian, turning
    a merely convex potential into a strictly convex one.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    d = spec.domain.dimension
    eye = np.eye(d)
    base_f, base_g, base_h = spec.F, spec.grad, spec.hess

    def F(x):
        return base_f(x) + eps * np.sum(x * x, axis=-1)

    def grad(x):
        return base_g(x) + 2.0 * eps * x

    def hess(x):
        return base_h(x) + 2.0 * eps * eye

    return DivergenceSpec(
        name=f"{spec.name}+eps",
        domain=spec.domain,
        F=F,
        grad=grad,
        hess=hess,
        lip_grad=None if spec.lip_grad is None else spec.lip_grad + 2.0 * eps,
        alpha=2.0 * eps if spec.alpha is None else spec.alpha + 2.0 * eps,
        params={**spec.params, "eps": eps},
    )


def with_bounds(spec: DivergenceSpec, lip_grad: Optional[float] = None,
                alpha: Optional[float] = None) -> DivergenceSpec:
    """Copy of `spec` with caller-supplied comparison constants.

    Useful when constants valid on a sub-interval of the domain are known
    (e.g. Hessian bounds on the support of the data) but no global constant
    exists.
    """
    return dataclasses.replace(spec, lip_grad=lip_grad, alpha=alpha)


@dataclass
class BoundReport:
    """Outcome of the quadratic sandwich check; report-only, never raises."""

    n_pairs: int
    checked_upper: bool
    checked_lower: bool
    upper_violations: int = 0
    lower_violations: int = 0
    worst_upper_margin: float = np.inf
    worst_lower_margin: float = np.inf

    @property
    def ok(self) -> bool:
        return self.upper_violations == 0 and self.lower_violations == 0


def verify_bounds(spec: DivergenceSpec, pairs) -> BoundReport:
    """Check (alpha/2) |xi-x|^2 <= phi(xi, x) <= (lip/2) |xi-x|^2 on pairs.

    `pairs` is an array of shape (K, 2, d) (or (K, 2) when d == 1).  Margins
    are slack-adjusted by a small multiple of machine rounding so that the
    equality case (squared Euclidean) does not report spurious violations.
    """
    d = spec.domain.dimension
    arr = np.asarray(pairs, dtype=float)
    if d == 1 and arr.ndim == 2:
        arr = arr[..., None]
    xi, x = arr[:, 0, :], arr[:, 1, :]
    phi = eval_phi(spec, xi, x)
    sq = np.sum((xi - x) ** 2, axis=-1)
    report = BoundReport(
        n_pairs=arr.shape[0],
        checked_upper=spec.lip_grad is not None,
        checked_lower=spec.alpha is not None,
    )
    slack = 1e-10 * (1.0 + np.abs(phi) + sq)
    if spec.lip_grad is not None:
        margin = 0.5 * spec.lip_grad * sq - phi
        report.upper_violations = int(np.sum(margin < -slack))
        report.worst_upper_margin = float(np.min(margin))
    if spec.alpha is not None:
        margin = phi - 0.5 * spec.alpha * sq
        report.lower_violations = int(np.sum(margin < -slack))
        report.worst_lower_margin = float(np.min(margin))
    return report


# ---------------------------------------------------------------------------
# One-dimensional potential registry
# ---------------------------------------------------------------------------
# Each entry builds (f, fp, fpp, domain, extras) with f/fp/fpp elementwise;
# the same triples back the 1D catalog members and the marginal builders.

def _pot_sq_euclid(params):
    return (lambda t: t * t,
            lambda t: 2.0 * t,
            lambda t: np.full_like(t, 2.0),
            DomainSpec.full_space(1),
            {"lip_grad": 2.0, "alpha": 2.0})


def _pot_norm_like(params):
    a = float(params.get("a", 1.5))
    if a <= 1.0:
        raise ValueError("norm-like exponent must satisfy a > 1")
    return (lambda t: t ** a,
            lambda t: a * t ** (a - 1.0),
            lambda t: a * (a - 1.0) * t ** (a - 2.0),
            DomainSpec.positive_orthant(1),
            {})


def _pot_itakura_saito(params):
    return (lambda t: -np.log(t),
            lambda t: -1.0 / t,
            lambda t: 1.0 / (t * t),
            DomainSpec.positive_orthant(1),
            {})


def _pot_kl(params):
    return (lambda t: t * np.log(t),
            lambda t: np.log(t) + 1.0,
            lambda t: 1.0 / t,
            DomainSpec.positive_orthant(1),
            {})


def _pot_logistic(params):
    return (lambda t: t * np.log(t) + (1.0 - t) * np.log1p(-t),
            lambda t: np.log(t) - np.log1p(-t),
            lambda t: 1.0 / (t * (1.0 - t)),
            DomainSpec.open_unit_box(1),
            {})


def _pot_softplus(params):
    a = float(params.get("a", 1.0))
    if a <= 0:
        raise ValueError("softplus scale must be positive")
    return (lambda t: np.logaddexp(0.0, a * t) / a,
            lambda t: expit(a * t),
            lambda t: a * expit(a * t) * expit(-a * t),
            DomainSpec.full_space(1),
            {"lip_grad": a / 4.0})


def _pot_exponential(params):
    rho = float(params.get("rho", 1.0))
    if rho == 0:
        raise ValueError("exponential rate must be nonzero")
    return (lambda t: np.exp(rho * t),
            lambda t: rho * np.exp(rho * t),
            lambda t: rho * rho * np.exp(rho * t),
            DomainSpec.full_space(1),
            {})


def _pot_cosh(params):
    # Not a catalog member; a positive strictly convex potential used as the
    # default factor of the multiplicative marginal builder (products of
    # cosh stay convex in any dimension).
    return (np.cosh, np.sinh, np.cosh, DomainSpec.full_space(1), {})


_POTENTIALS = {
    "sq-euclid": _pot_sq_euclid,
    "norm-like": _pot_norm_like,
    "itakura-saito": _pot_itakura_saito,
    "kl": _pot_kl,
    "logistic": _pot_logistic,
    "softplus": _pot_softplus,
    "exponential": _pot_exponential,
    "cosh": _pot_cosh,
}


def _scalar_potential(name: str, params: dict):
    if name not in _POTENTIALS:
        raise ValueError(f"unknown 1D potential {name!r}")
    return _POTENTIALS[name](params)


def _spec_from_potential(name: str, params: dict) -> DivergenceSpec:
    f, fp, fpp, dom, extras = _scalar_potential(name, params)

    def F(x):
        return f(x[..., 0])

    def grad(x):
        return fp(x[..., 0])[..., None]

    def hess(x):
        return fpp(x[..., 0])[..., None, None]

    return DivergenceSpec(name=name, domain=dom, F=F, grad=grad, hess=hess,
                          params=dict(params), **extras)


# ---------------------------------------------------------------------------
# Multidimensional builders
# ---------------------------------------------------------------------------

def _check_spd(S: np.ndarray) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S must be a square matrix")
    if not np.allclose(S, S.T, atol=1e-12):
        raise ValueError("S must be symmetric")
    if np.min(np.linalg.eigvalsh(S)) <= 0:
        raise ValueError("S must be positive definite")
    return S


def _spec_sq_euclid(d: int) -> DivergenceSpec:
    eye = np.eye(d)

    def F(x):
        return np.sum(x * x, axis=-1)

    def grad(x):
        return 2.0 * x

    def hess(x):
        return np.broadcast_to(2.0 * eye, x.shape[:-1] + (d, d))

    return DivergenceSpec("sq-euclid", DomainSpec.full_space(d), F, grad, hess,
                          lip_grad=2.0, alpha=2.0, params={"d": d})


def _spec_mahalanobis(S: np.ndarray) -> DivergenceSpec:
    S = _check_spd(S)
    d = S.shape[0]
    eigs = np.linalg.eigvalsh(S)

    def F(x):
        return np.einsum("...i,ij,...j->...", x, S, x)

    def grad(x):
        return 2.0 * (x @ S)

    def hess(x):
        return np.broadcast_to(2.0 * S, x.shape[:-1] + (d, d))

    return DivergenceSpec("mahalanobis", DomainSpec.full_space(d), F, grad, hess,
                          lip_grad=float(2.0 * eigs[-1]), alpha=float(2.0 * eigs[0]),
                          params={"S": S})


def _marginal_domain(dom1: DomainSpec, d: int) -> DomainSpec:
    kind = dom1.kind if dom1.kind != "open-box" else "open-box"
    return DomainSpec(kind, d, np.full(d, dom1.lo[0]), np.full(d, dom1.hi[0]))


def _spec_marginal_additive(fname: str, d: int, fparams: dict) -> DivergenceSpec:
    f, fp, fpp, dom1, extras = _scalar_potential(fname, fparams)

    def F(x):
        return np.sum(f(x), axis=-1)

    def grad(x):
        return fp(x)

    def hess(x):
        out = np.zeros(x.shape[:-1] + (d, d))
        idx = np.arange(d)
        out[..., idx, idx] = fpp(x)
        return out

    lip = extras.get("lip_grad")
    alpha = extras.get("alpha")
    return DivergenceSpec(f"marginal-additive({fname})", _marginal_domain(dom1, d),
                          F, grad, hess, lip_grad=lip, alpha=alpha,
                          params={"f": fname, "d": d, **fparams})


def _spec_marginal_multiplicative(fname: str, d: int, fparams: dict) -> DivergenceSpec:
    f, fp, fpp, dom1, _ = _scalar_potential(fname, fparams)

    def F(x):
        return np.prod(f(x), axis=-1)

    def grad(x):
        vals = f(x)
        total = np.prod(vals, axis=-1, keepdims=True)
        return fp(x) * total / vals

    def hess(x):
        vals = f(x)
        dvals = fp(x)
        total = np.prod(vals, axis=-1)
        part = total[..., None] / vals          # prod over j != i
        out = (dvals[..., :, None] * dvals[..., None, :]
               * total[..., None, None] / (vals[..., :, None] * vals[..., None, :]))
        idx = np.arange(d)
        out[..., idx, idx] = fpp(x) * part
        return out

    return DivergenceSpec(f"marginal-multiplicative({fname})", _marginal_domain(dom1, d),
                          F, grad, hess, params={"f": fname, "d": d, **fparams})


def _spec_softmax_marginal(fname: str, d: int, lam: float, fparams: dict) -> DivergenceSpec:
    f, fp, fpp, dom1, _ = _scalar_potential(fname, fparams)
    if lam <= 0:
        raise ValueError("softmax temperature must be positive")

    def _weights(x):
        z = lam * f(x)
        z = z - np.max(z, axis=-1, keepdims=True)
        e = np.exp(z)
        return e / np.sum(e, axis=-1, keepdims=True)

    def F(x):
        z = lam * f(x)
        zmax = np.max(z, axis=-1)
        return (zmax + np.log(np.sum(np.exp(z - zmax[..., None]), axis=-1))) / lam

    def grad(x):
        return _weights(x) * fp(x)

    def hess(x):
        w = _weights(x)
        dfx = fp(x)
        v = w * dfx
        out = -lam * v[..., :, None] * v[..., None, :]
        idx = np.arange(d)
        out[..., idx, idx] += w * fpp(x) + lam * w * dfx * dfx
        return out

    return DivergenceSpec(f"softmax-marginal({fname})", _marginal_domain(dom1, d),
                          F, grad, hess,
                          params={"f": fname, "d": d, "lam": lam, **fparams})


def marginal_product_form(fname: str, xi, x, variant: str = "f",
                          fparams: Optional[dict] = None) -> np.ndarray:
    """Sum-of-products display form of the multiplicative marginal divergence.

    variant "f" (default) uses factors f(x_j); variant "phi" uses factors
    phi_f(xi_i, x_j).  Both circulate in the literature; neither coincides
    with the exact Bregman divergence of F(x) = prod f(x_i), which is what
    builtin("marginal-multiplicative") evaluates.
    """
    f, fp, fpp, dom1, _ = _scalar_potential(fname, fparams or {})
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = xi.shape[-1]
    phi1 = f(xi) - f(x) - fp(x) * (xi - x)
    total = 0.0
    for i in range(d):
        others = [j for j in range(d) if j != i]
        if variant == "f":
            factor = np.prod(f(x[..., others]), axis=-1)
        elif variant == "phi":
            fac = [f(xi[..., i]) - f(x[..., j]) - fp(x[..., j]) * (xi[..., i] - x[..., j])
                   for j in others]
            factor = np.prod(np.stack(fac, axis=-1), axis=-1) if fac else 1.0
        else:
            raise ValueError("variant must be 'f' or 'phi'")
        total = total + phi1[..., i] * factor
    return total


def hessian_field(spec: DivergenceSpec) -> MatrixFieldSpec:
    """Matrix field S(x) = hess F(x), the local quadratic surrogate of phi."""
    return MatrixFieldSpec(name=f"hess({spec.name})", domain=spec.domain,
                           S=spec.hess, params=dict(spec.params))


def builtin(name: str, **params):
    """Build a catalog divergence (or matrix field) by name.

    Divergences: sq-euclid, norm-like(a), itakura-saito, kl, logistic,
    softplus(a), exponential(rho), mahalanobis(S), marginal-additive(f),
    marginal-multiplicative(f), softmax-marginal(f, lam).
    Fields: const-field(S).
    """
    if name == "sq-euclid":
        d = int(params.get("d", 1))
        return _spec_sq_euclid(d) if d > 1 else _spec_from_potential(name, {})
    if name == "mahalanobis":
        if "S" not in params:
            raise ValueError("mahalanobis requires S")
        return _spec_mahalanobis(params["S"])
    if name == "const-field":
        if "S" not in params:
            raise ValueError("const-field requires S")
        S = _check_spd(params["S"])
        d = S.shape[0]

        def field_eval(x):
            return np.broadcast_to(S, np.asarray(x).shape[:-1] + (d, d))

        return MatrixFieldSpec("const-field", DomainSpec.full_space(d), field_eval,
                               params={"S": S})
    if name == "marginal-additive":
        d = int(params.pop("d", 2))
        fname = params.pop("f", "itakura-saito")
        return _spec_marginal_additive(fname, d, params)
    if name == "marginal-multiplicative":
        d = int(params.pop("d", 2))
        fname = params.pop("f", "cosh")
        return _spec_marginal_multiplicative(fname, d, params)
    if name == "softmax-marginal":
        d = int(params.pop("d", 2))
        fname = params.pop("f", "sq-euclid")
        lam = float(params.pop("lam", 1.0))
        return _spec_softmax_marginal(fname, d, lam, params)
    if name in _POTENTIALS:
        return _spec_from_potential(name, params)
    raise ValueError(f"unknown divergence {name!r}")
