"""Probability inputs, hypercube tessellations, proxy measures and quadrature.

Distributions carry a seeded sampler plus (optionally) a density on a box
support.  Samplers are stateless functions of (seed, count) built on a
counter-style stream, so sampling is reproducible and the first k points of
an n-sample coincide with the k-sample (prefix property).  All inverse-CDF
transforms are used instead of rejection so the prefix property survives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from .divergence import as_points


class ToleranceError(RuntimeError):
    """Quadrature refinement hit its depth cap before reaching tolerance."""

    def __init__(self, message: str, best: float, err: float):
        super().__init__(message)
        self.best = best
        self.err = err


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for a sub-task, deterministic in (seed, key...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

@dataclass
class DistributionSpec:
    label: str
    dimension: int
    support: Optional[tuple]                 # (lo, hi) arrays, or None
    sampler: Callable[[int, int], np.ndarray]   # (seed, count) -> (count, d)
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: dict = field(default_factory=dict)

    @property
    def support_box(self):
        if self.support is None:
            raise ValueError(f"{self.label} has unbounded support")
        return self.support


def sample(dist: DistributionSpec, n: int, seed: int) -> np.ndarray:
    """Draw n points; deterministic in (seed, n) with the prefix property."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = np.asarray(dist.sampler(seed, n), dtype=float)
    return pts.reshape(n, dist.dimension)


def _uniform01(seed: int, count: int, d: int) -> np.ndarray:
    # One float64 per coordinate off a fresh stream: the first k rows of a
    # count-row draw equal the k-row draw.
    return derive_rng(seed).random((count, d))


def uniform_box(lo, hi, label: Optional[str] = None) -> DistributionSpec:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape).astype(float)
    if not np.all(hi > lo):
        raise ValueError("need hi > lo")
    d = lo.shape[0]
    vol = float(np.prod(hi - lo))

    def sampler(seed, count):
        return lo + (hi - lo) * _uniform01(seed, count, d)

    def density(x):
        pts = as_points(x, d)
        inside = np.all((pts >= lo) & (pts <= hi), axis=-1)
        return np.where(inside, 1.0 / vol, 0.0)

    return DistributionSpec(label or "uniform-box", d, (lo, hi), sampler, density,
                            params={"lo": lo, "hi": hi})


def triangular() -> DistributionSpec:
    """Density h(x) = 2x on [0, 1]; inverse CDF is sqrt(u)."""
    lo, hi = np.array([0.0]), np.array([1.0])

    def sampler(seed, count):
        return np.sqrt(_uniform01(seed, count, 1))

    def density(x):
        pts = as_points(x, 1)
        t = pts[..., 0]
        return np.where((t >= 0.0) & (t <= 1.0), 2.0 * t, 0.0)

    return DistributionSpec("triangular", 1, (lo, hi), sampler, density)


def gaussian_truncated(lo, hi, mean=0.0, sigma=1.0) -> DistributionSpec:
    """Coordinatewise N(mean, sigma^2) truncated to the box [lo, hi]."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape).astype(float)
    d = lo.shape[0]
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (d,)).astype(float)
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (d,)).astype(float)
    a = (lo - mean) / sigma
    b = (hi - mean) / sigma
    cdf_a, cdf_b = ndtr(a), ndtr(b)
    mass = cdf_b - cdf_a
    if np.any(mass <= 0):
        raise ValueError("truncation box carries no mass")
    log_norm = np.log(sigma * mass * np.sqrt(2.0 * np.pi))

    def sampler(seed, count):
        u = _uniform01(seed, count, d)
        return mean + sigma * ndtri(cdf_a + u * mass)

    def density(x):
        pts = as_points(x, d)
        z = (pts - mean) / sigma
        logpdf = -0.5 * z * z - log_norm
        inside = np.all((pts >= lo) & (pts <= hi), axis=-1)
        return np.where(inside, np.exp(np.sum(logpdf, axis=-1)), 0.0)

    return DistributionSpec("gaussian-truncated", d, (lo, hi), sampler, density,
                            params={"lo": lo, "hi": hi, "mean": mean, "sigma": sigma})


def empirical(points: np.ndarray, label: str = "empirical") -> DistributionSpec:
    """Resampling distribution of a fixed point set (no density)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)

    def sampler(seed, count):
        idx = derive_rng(seed).integers(0, pts.shape[0], size=count)
        return pts[idx]

    return DistributionSpec(label, pts.shape[1], (lo, hi), sampler, None,
                            params={"n_points": pts.shape[0]})


def empirical_from_csv(path, label: str = "empirical") -> DistributionSpec:
    pts = np.loadtxt(path, delimiter=",", ndmin=2)
    return empirical(pts, label=label)


def point_mass(x) -> DistributionSpec:
    x = np.atleast_1d(np.asarray(x, dtype=float))

    def sampler(seed, count):
        return np.tile(x, (count, 1))

    return DistributionSpec("point-mass", x.shape[0], (x.copy(), x.copy()), sampler, None)


# ---------------------------------------------------------------------------
# Tessellations and the proxy measure
# ---------------------------------------------------------------------------

@dataclass
class Tessellation:
    """m^d congruent half-open hypercube cells covering a cube [lo, hi]."""

    lo: np.ndarray
    hi: np.ndarray
    m: int
    centers: np.ndarray          # (m^d, d), axis 0 slowest (C order)

    @property
    def dimension(self) -> int:
        return self.lo.shape[0]

    @property
    def edge(self) -> float:
        return float(self.hi[0] - self.lo[0])

    @property
    def cell_edge(self) -> float:
        return self.edge / self.m

    @property
    def half_width(self) -> float:
        return self.cell_edge / 2.0

    @property
    def n_cells(self) -> int:
        return self.m ** self.dimension

    @property
    def cell_volume(self) -> float:
        return self.cell_edge ** self.dimension

    @property
    def cell_diameter(self) -> float:
        return float(np.sqrt(self.dimension)) * self.cell_edge

    def locate(self, points) -> np.ndarray:
        """Cell index per point; cells are half-open [a, a + edge/m) so every
        boundary point resolves deterministically (hi itself joins the last cell)."""
        pts = as_points(points, self.dimension)
        idx = np.floor((pts - self.lo) / self.cell_edge).astype(int)
        idx = np.clip(idx, 0, self.m - 1)
        flat = np.ravel_multi_index(np.moveaxis(idx, -1, 0), (self.m,) * self.dimension)
        return flat

    def cell_box(self, i: int):
        idx = np.array(np.unravel_index(i, (self.m,) * self.dimension))
        lo = self.lo + idx * self.cell_edge
        return lo, lo + self.cell_edge


def tessellate(lo, hi, m: int) -> Tessellation:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape).astype(float)
    if m < 1:
        raise ValueError("m must be >= 1")
    edges = hi - lo
    if not np.allclose(edges, edges[0], rtol=1e-12, atol=0):
        raise ValueError("tessellation box must be a hypercube (common edge length)")
    d = lo.shape[0]
    w = edges[0] / m
    axes = [lo[k] + (np.arange(m) + 0.5) * w for k in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=-1)
    return Tessellation(lo=lo, hi=hi, m=m, centers=centers)


@dataclass
class ProxyMeasure:
    """Piecewise-uniform surrogate: mass p_i spread uniformly over cell i,
    with density h_m = (m/L)^d p_i on cell i."""

    tessellation: Tessellation
    cell_probs: np.ndarray

    def __post_init__(self):
        total = float(np.sum(self.cell_probs))
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValueError(f"cell probabilities sum to {total}, expected 1")

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.cell_probs > 0)

    def h_m(self, points) -> np.ndarray:
        idx = self.tessellation.locate(points)
        scale = (self.tessellation.m / self.tessellation.edge) ** self.tessellation.dimension
        return scale * self.cell_probs[idx]


def build_proxy(dist: DistributionSpec, tess: Tessellation, mode: str = "quadrature",
                n_samples: int = 1_000_000, seed: int = 0) -> ProxyMeasure:
    """Cell masses p_i ~= P(C_i), by per-cell quadrature of the density or by
    empirical frequencies of a seeded sample."""
    if mode == "quadrature":
        if dist.density is None:
            raise ValueError("quadrature mode needs a density")
        probs = np.empty(tess.n_cells)
        if tess.dimension == 1:
            for i in range(tess.n_cells):
                lo, hi = tess.cell_box(i)
                probs[i], _ = adaptive_simpson(lambda t: float(dist.density(np.array([t]))),
                                               float(lo[0]), float(hi[0]), tol=1e-12)
        elif tess.dimension == 2:
            for i in range(tess.n_cells):
                lo, hi = tess.cell_box(i)
                probs[i] = _gauss_2d(lambda p: dist.density(p), lo, hi, 16)
        else:
            raise ValueError("quadrature proxies implemented for d <= 2")
        total = probs.sum()
        if not np.isclose(total, 1.0, atol=1e-6):
            raise ValueError(f"density mass over the box is {total}, expected 1")
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
    elif mode == "mc":
        pts = sample(dist, n_samples, seed)
        idx = tess.locate(pts)
        probs = np.bincount(idx, minlength=tess.n_cells) / n_samples
    else:
        raise ValueError(f"unknown proxy mode {mode!r}")
    return ProxyMeasure(tessellation=tess, cell_probs=probs)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10,
                     depth_cap: int = 40):
    """Adaptive Simpson integration of a scalar function on [a, b].

    Returns (value, error_estimate).  Raises ToleranceError (carrying the
    best estimate) if the recursion exhausts depth_cap without meeting tol.
    """
    if a == b:
        return 0.0, 0.0
    if a > b:
        v, e = adaptive_simpson(f, b, a, tol, depth_cap)
        return -v, e

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, tol, depth):
        xm = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0, abs(delta) / 15.0
        if depth >= depth_cap:
            raise ToleranceError(
                f"adaptive Simpson stalled on [{x0}, {x2}]",
                best=left + right + delta / 15.0, err=abs(delta) / 15.0)
        vl, el = recurse(x0, xm, f0, fl, f1, left, tol / 2.0, depth + 1)
        vr, er = recurse(xm, x2, f1, fr, f2, right, tol / 2.0, depth + 1)
        return vl + vr, el + er

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


def _gauss_nodes(n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1.0) / 2.0, w / 2.0


def _gauss_2d(f, lo, hi, n: int) -> float:
    """(n x n)-point tensor Gauss-Legendre rule; f takes (..., 2) points."""
    t, w = _gauss_nodes(n)
    x = lo[0] + (hi[0] - lo[0]) * t
    y = lo[1] + (hi[1] - lo[1]) * t
    gx, gy = np.meshgrid(x, y, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    vals = np.asarray(f(pts), dtype=float).reshape(n, n)
    area = float((hi[0] - lo[0]) * (hi[1] - lo[1]))
    return float(area * w @ vals @ w)


def pseudo_norm(g, p: float, lo, hi, tol: float = 1e-10,
                n_samples: int = 200_000, seed: int = 0):
    """||g||_p = (int_box g^p dlambda)^{1/p} for p in (0, 1].

    g must be nonnegative on the box; g takes (..., d) points.  1D uses
    adaptive Simpson to `tol`; 2D a 32x32 tensor Gauss rule with one
    refinement to 64x64 (the difference is the error estimate); d >= 3 falls
    back to stratified Monte Carlo with a reported standard error.
    Returns (value, error_estimate on the inner integral).
    """
    if not (0.0 < p <= 1.0):
        raise ValueError("p must lie in (0, 1]")
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape).astype(float)
    d = lo.shape[0]

    def gp(x):
        vals = np.asarray(g(as_points(x, d)), dtype=float)
        if np.any(vals < -1e-12):
            raise ValueError("pseudo_norm requires g >= 0 on the box")
        return np.clip(vals, 0.0, None) ** p

    if d == 1:
        integral, err = adaptive_simpson(lambda t: float(gp(np.array([t]))),
                                         float(lo[0]), float(hi[0]), tol=tol)
    elif d == 2:
        coarse = _gauss_2d(gp, lo, hi, 32)
        integral = _gauss_2d(gp, lo, hi, 64)
        err = abs(integral - coarse)
        if err > max(tol, 1e-14 * abs(integral)):
            raise ToleranceError("2D tensor rule did not stabilize",
                                 best=integral ** (1.0 / p), err=err)
    else:
        # Stratify over a coarse tessellation so narrow features still get hit.
        m = max(2, int(round(n_samples ** (1.0 / (2 * d)))))
        tess = tessellate(lo, hi, m)
        per_cell = max(1, n_samples // tess.n_cells)
        rng = derive_rng(seed, 101)
        cell_lo = tess.centers - tess.half_width
        u = rng.random((tess.n_cells, per_cell, d))
        pts = cell_lo[:, None, :] + tess.cell_edge * u
        vals = gp(pts.reshape(-1, d)).reshape(tess.n_cells, per_cell)
        means = vals.mean(axis=1)
        integral = float(tess.cell_volume * means.sum())
        var = vals.var(axis=1, ddof=1).sum() / per_cell if per_cell > 1 else np.inf
        err = float(tess.cell_volume * np.sqrt(var))
    if integral < 0:
        integral = 0.0
    return integral ** (1.0 / p), err


def proxy_l1_error(dist: DistributionSpec, proxy: ProxyMeasure, tol: float = 1e-10) -> float:
    """||h_m - h||_1 over the tessellated box, integrated cell by cell so the
    proxy's jumps never cross an integration panel."""
    if dist.density is None:
        raise ValueError("needs a density")
    tess = proxy.tessellation
    scale = (tess.m / tess.edge) ** tess.dimension
    total = 0.0
    if tess.dimension == 1:
        for i in range(tess.n_cells):
            lo, hi = tess.cell_box(i)
            const = scale * proxy.cell_probs[i]
            val, _ = adaptive_simpson(
                lambda t: abs(float(dist.density(np.array([t]))) - const),
                float(lo[0]), float(hi[0]), tol=tol)
            total += val
    elif tess.dimension == 2:
        for i in range(tess.n_cells):
            lo, hi = tess.cell_box(i)
            const = scale * proxy.cell_probs[i]
            total += _gauss_2d(lambda p: np.abs(dist.density(p) - const), lo, hi, 32)
    else:
        raise ValueError("proxy L1 error implemented for d <= 2")
    return total


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

@dataclass
class MomentEstimate:
    value: float
    std_error: Optional[float]
    method: str
    divergent: bool = False


def moment_sigma(dist: DistributionSpec, s: float, mode: str = "mc",
                 n_samples: int = 200_000, seed: int = 0,
                 center: Optional[str] = None) -> MomentEstimate:
    """(E |X - a|^s)^{1/s}: the scale entering the nonasymptotic rate bound.

    Default a = 0 (the plain upper bound); center="mean" additionally shifts
    by the mean and keeps the smaller value.  Monte Carlo estimates flag
    suspected divergence when doubling the sample doubles the estimate.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if mode == "mc":
        pts = sample(dist, n_samples, seed)
        divergent = False
        half = np.sum(np.linalg.norm(pts[: n_samples // 2], axis=1) ** s) / (n_samples // 2)
        full = np.mean(np.linalg.norm(pts, axis=1) ** s)
        if half > 0 and full > 2.0 * half:
            divergent = True

        def estimate(a):
            r = np.linalg.norm(pts - a, axis=1) ** s
            mean = float(np.mean(r))
            se = float(np.std(r, ddof=1) / np.sqrt(n_samples))
            return mean, se

        mean0, se0 = estimate(0.0)
        best, se = mean0, se0
        if center == "mean":
            mean_shift, se_shift = estimate(pts.mean(axis=0))
            if mean_shift < best:
                best, se = mean_shift, se_shift
        value = best ** (1.0 / s)
        # delta method on x -> x^{1/s}
        se_value = se / (s * best ** (1.0 - 1.0 / s)) if best > 0 else 0.0
        return MomentEstimate(value=value, std_error=se_value, method="mc",
                              divergent=divergent)
    if mode == "quadrature":
        if dist.density is None or dist.dimension > 2:
            raise ValueError("quadrature moments need a density in d <= 2")
        lo, hi = dist.support_box

        def raw(a):
            if dist.dimension == 1:
                val, _ = adaptive_simpson(
                    lambda t: abs(t - a) ** s * float(dist.density(np.array([t]))),
                    float(lo[0]), float(hi[0]), tol=1e-12)
            else:
                val = _gauss_2d(
                    lambda p: np.linalg.norm(p - a, axis=-1) ** s * dist.density(p),
                    lo, hi, 64)
            return val

        best = raw(np.zeros(dist.dimension) if dist.dimension > 1 else 0.0)
        if center == "mean":
            mean = sample(dist, 100_000, seed).mean(axis=0)
            a = mean if dist.dimension > 1 else float(mean[0])
            best = min(best, raw(a))
        return MomentEstimate(value=best ** (1.0 / s), std_error=None, method="quadrature")
    raise ValueError(f"unknown mode {mode!r}")
