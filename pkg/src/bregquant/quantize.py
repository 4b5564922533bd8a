"""Codebooks, nearest-codeword assignment, distortion, and Lloyd training.

The distortion of a codebook at order r is

    e_r^r = E[ min_a phi(X, a)^{r/2} ],

measured exactly in one dimension (cells are intervals between affine tie
points, integrated adaptively) or by seeded Monte Carlo in general.  Lloyd
training alternates assignment with the stationarity update: the cell
conditional mean for r = 2, and the phi^{r/2-1}-weighted cell mean, iterated
to a fixed point, for r > 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .divergence import (NEG_CLAMP, DivergenceSpec, DomainError, as_points,
                         bregman_bisector, eval_phi, phi_pairwise)
from .measures import (DistributionSpec, ProxyMeasure, Tessellation,
                       adaptive_simpson, derive_rng, sample)

CHUNK = 1 << 16


class ConvergenceError(RuntimeError):
    """An inner or outer fixed-point iteration failed to converge."""


@dataclass
class Codebook:
    points: np.ndarray          # (n, d), all inside the divergence domain
    divergence: str
    r: float

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def to_csv(self, path) -> None:
        lines = [",".join(f"{v:.17g}" for v in row) for row in self.points]
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_json_dict(self, **metadata) -> dict:
        return {"points": self.points.tolist(), "divergence": self.divergence,
                "r": self.r, "n": self.n, **metadata}

    def save_json(self, path, **metadata) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_json_dict(**metadata), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path, divergence: str = "", r: float = 2.0) -> "Codebook":
        pts = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(points=pts, divergence=divergence, r=r)


@dataclass
class ErrorEstimate:
    """Distortion e_r^r with its r-th root and provenance."""

    value: float
    r: float
    method: str                  # "exact-1d" | "mc"
    std_error: Optional[float] = None
    n_samples: Optional[int] = None
    tol: Optional[float] = None

    @property
    def e_r(self) -> float:
        return self.value ** (1.0 / self.r)


# ---------------------------------------------------------------------------
# Assignment
# ---------------------------------------------------------------------------

def min_phi(spec: DivergenceSpec, points: np.ndarray, codebook: np.ndarray,
            chunk: int = CHUNK):
    """(min_a phi(x, a), argmin_a) per point, chunked over points.

    Per point, phi(x, a) = F(x) + (c_a - <grad F(a), x>); F(x) does not move
    the argmin, so only the affine scores are materialized per chunk and
    F(x) is added to the selected minimum afterwards.  Ties resolve to the
    lowest codeword index, and the result does not depend on the chunk size.
    """
    pts = np.atleast_2d(points)
    cb = np.atleast_2d(codebook)
    n = pts.shape[0]
    g = spec.grad(cb)
    const = np.sum(g * cb, axis=-1) - spec.F(cb)
    vals = np.empty(n)
    idx = np.empty(n, dtype=int)
    for start in range(0, n, chunk):
        block = pts[start:start + chunk]
        scores = block @ (-g.T)
        scores += const
        rows = np.arange(scores.shape[0])
        best = np.argmin(scores, axis=1)
        idx[start:start + chunk] = best
        vals[start:start + chunk] = spec.F(block) + scores[rows, best]
    tol = NEG_CLAMP * (1.0 + np.abs(vals))
    np.clip(vals, 0.0, None, out=vals, where=np.abs(vals) <= tol)
    return vals, idx


def assign(cb: Codebook, xi, spec: DivergenceSpec):
    """Index of the divergence-nearest codeword (lowest index on ties)."""
    if cb.n == 0:
        raise ValueError("empty codebook")
    pts = as_points(xi, spec.domain.dimension)
    spec.domain.require(pts, "xi")
    single = pts.ndim == 1
    _, idx = min_phi(spec, pts.reshape(-1, spec.domain.dimension), cb.points)
    return int(idx[0]) if single else idx.reshape(pts.shape[:-1])


# ---------------------------------------------------------------------------
# Distortion
# ---------------------------------------------------------------------------

def _sorted_boundaries(spec: DivergenceSpec, points_sorted: np.ndarray,
                       lo: float, hi: float) -> np.ndarray:
    """Interval cell boundaries for a sorted 1D codebook on [lo, hi].

    In 1D, phi(xi, a) is unimodal in a for fixed xi, so cells are intervals
    separated by the adjacent-pair tie points (the affine bisector roots,
    computed here in batch).
    """
    c = points_sorted[:, 0]
    if c.shape[0] == 1:
        return np.array([lo, hi])
    if np.any(np.diff(c) <= 0):
        raise ValueError("codewords must be sorted and pairwise distinct")
    pts = points_sorted
    f = spec.F(pts)
    g = spec.grad(pts)[:, 0]
    normal = g[1:] - g[:-1]
    offset = f[1:] - f[:-1] - g[1:] * c[1:] + g[:-1] * c[:-1]
    roots = -offset / normal
    bounds = np.concatenate([[lo], roots, [hi]])
    if np.any(np.diff(bounds) < -1e-12):
        raise ValueError("tie points out of order; codewords too close or duplicated")
    return np.maximum.accumulate(bounds)


def _exact_1d_value(spec: DivergenceSpec, cb: Codebook, dist: DistributionSpec,
                    r: float, tol: float) -> float:
    lo, hi = dist.support_box
    order = np.argsort(cb.points[:, 0], kind="stable")
    pts = cb.points[order]
    bounds = _sorted_boundaries(spec, pts, float(lo[0]), float(hi[0]))
    total = 0.0
    for i in range(pts.shape[0]):
        a = float(pts[i, 0])
        left, right = bounds[i], bounds[i + 1]
        if right <= left:
            continue

        def integrand(t, a=a):
            return float(eval_phi(spec, np.array([t]), np.array([a])) ** (r / 2.0)
                         * dist.density(np.array([t])))

        # phi^{r/2} kinks at t == a for odd r; split there so each panel is smooth
        for seg_lo, seg_hi in ((left, min(a, right)), (max(a, left), right)):
            if seg_hi > seg_lo:
                val, _ = adaptive_simpson(integrand, seg_lo, seg_hi, tol=tol)
                total += val
    return total


def distortion(cb: Codebook, dist: DistributionSpec, r: float, spec: DivergenceSpec,
               mode: str = "mc", tol: float = 1e-10,
               n_samples: int = 100_000, seed: int = 0) -> ErrorEstimate:
    """Distortion e_r^r of the codebook against the distribution."""
    if r <= 0:
        raise ValueError("r must be positive")
    if not np.all(spec.domain.contains(cb.points)):
        raise DomainError("codeword outside the divergence domain")
    if mode == "exact-1d":
        if dist.dimension != 1 or dist.density is None:
            raise ValueError("exact-1d needs a one-dimensional density")
        value = _exact_1d_value(spec, cb, dist, r, tol)
        return ErrorEstimate(value=value, r=r, method="exact-1d", tol=tol)
    if mode == "mc":
        pts = sample(dist, n_samples, seed)
        vals, _ = min_phi(spec, pts, cb.points)
        y = vals ** (r / 2.0)
        mean = float(np.mean(y))
        se = float(np.std(y, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else None
        return ErrorEstimate(value=mean, r=r, method="mc", std_error=se,
                             n_samples=n_samples)
    raise ValueError(f"unknown distortion mode {mode!r}")


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_seed(samples: Optional[np.ndarray], n: int, r: float, spec: DivergenceSpec,
              strategy: str = "kpp", seed: int = 0, box=None) -> Codebook:
    """Initial codebook: kpp (divergence-weighted seeding), grid, or given."""
    d = spec.domain.dimension
    if strategy == "given":
        pts = as_points(samples, d).reshape(-1, d)
        spec.domain.require(pts, "codeword")
        return Codebook(points=pts, divergence=spec.name, r=r)
    if strategy == "grid":
        if box is None:
            if samples is None:
                raise ValueError("grid strategy needs a box or samples")
            pts = np.atleast_2d(samples)
            box = (pts.min(axis=0), pts.max(axis=0))
        lo = np.atleast_1d(np.asarray(box[0], dtype=float))
        hi = np.broadcast_to(np.asarray(box[1], dtype=float), lo.shape).astype(float)
        m = int(np.ceil(n ** (1.0 / d)))
        axes = [lo[k] + (np.arange(m) + 0.5) * (hi[k] - lo[k]) / m for k in range(d)]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)[:n]
        return Codebook(points=pts, divergence=spec.name, r=r)
    if strategy == "kpp":
        pts = np.atleast_2d(np.asarray(samples, dtype=float))
        distinct = np.unique(pts, axis=0)
        if distinct.shape[0] < n:
            raise ValueError(f"kpp needs at least {n} distinct samples, "
                             f"got {distinct.shape[0]}")
        rng = derive_rng(seed, 7)
        chosen = [pts[rng.integers(0, pts.shape[0])]]
        best = None
        while len(chosen) < n:
            new = phi_pairwise(spec, pts, np.array(chosen[-1])[None, :])[:, 0]
            best = new if best is None else np.minimum(best, new)
            w = best ** (r / 2.0)
            total = w.sum()
            if total <= 0:
                raise ValueError("kpp weights vanished; samples not distinct enough")
            chosen.append(pts[rng.choice(pts.shape[0], p=w / total)])
        return Codebook(points=np.array(chosen), divergence=spec.name, r=r)
    raise ValueError(f"unknown init strategy {strategy!r}")


# ---------------------------------------------------------------------------
# Lloyd
# ---------------------------------------------------------------------------

@dataclass
class LloydResult:
    codebook: Codebook
    trace: list
    iterations: int
    converged: bool
    stationarity_residual: float
    distortion: float = field(init=False)

    def __post_init__(self):
        self.distortion = self.trace[-1] if self.trace else np.nan


def _weighted_center(spec: DivergenceSpec, members: np.ndarray, c0: np.ndarray,
                     r: float, scale: float, weights: Optional[np.ndarray] = None,
                     inner_tol: float = 1e-10, inner_max: int = 100) -> np.ndarray:
    """Solve the stationarity equation of one cell: the phi^{r/2-1}-weighted
    mean fixed point for r > 2, the plain weighted mean for r = 2.

    The raw fixed-point map overshoots: its derivative at a symmetric
    squared-Euclidean solution is -(r-2), so plain iteration already
    diverges at r = 4.  Damping the step by 1/(r-1) cancels that derivative
    (Newton-like near the solution); backtracking on the cell distortion
    guards the remaining cases.  Convergence is measured on the undamped
    residual, which is the stationarity-equation residual itself.
    """
    base = np.ones(members.shape[0]) if weights is None else weights
    if r == 2.0:
        return base @ members / base.sum()

    def cell_cost(c):
        phi = phi_pairwise(spec, members, c[None, :])[:, 0]
        return float(base @ phi ** (r / 2.0)), phi

    beta0 = 1.0 / (r - 1.0)
    c = c0.copy()
    cost, phi = cell_cost(c)
    for _ in range(inner_max):
        w = base * phi ** (r / 2.0 - 1.0)
        total = w.sum()
        if not np.isfinite(total):
            raise ConvergenceError("non-finite weight in the r > 2 update")
        if total <= 0:
            return c
        step = w @ members / total - c
        if np.linalg.norm(step) <= inner_tol * scale:
            return c + step
        beta = beta0
        while beta >= 2.0 ** -20:
            cand = spec.domain.project_inside(c + beta * step)
            cand_cost, cand_phi = cell_cost(cand)
            if cand_cost <= cost:
                c, cost, phi = cand, cand_cost, cand_phi
                break
            beta /= 2.0
        else:
            return c          # numerically stationary: no descent direction left
    raise ConvergenceError("weighted-center update did not converge")


def _cluster_means(pts: np.ndarray, labels: np.ndarray, n: int):
    """Per-cluster means via bincount (deterministic summation order)."""
    counts = np.bincount(labels, minlength=n)
    sums = np.column_stack([np.bincount(labels, weights=pts[:, k], minlength=n)
                            for k in range(pts.shape[1])])
    means = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], np.nan)
    return means, counts


def _lloyd_samples(pts: np.ndarray, n: int, r: float, spec: DivergenceSpec,
                   init: Codebook, tol: float, max_iter: int) -> LloydResult:
    scale = float(np.max(pts.max(axis=0) - pts.min(axis=0))) or 1.0
    c = init.points.copy()
    trace = []
    converged = False
    labels_prev = None
    for it in range(max_iter):
        vals, labels = min_phi(spec, pts, c)
        d_cur = float(np.mean(vals ** (r / 2.0)))
        if trace and d_cur > trace[-1] + 1e-12 * (1.0 + trace[-1]):
            raise ConvergenceError(
                f"distortion increased at iteration {it}: {trace[-1]} -> {d_cur}")
        trace.append(d_cur)
        if labels_prev is not None and np.array_equal(labels, labels_prev):
            converged = True
            break
        if len(trace) >= 2 and trace[-2] - trace[-1] < tol * max(trace[-2], 1e-300):
            converged = True
            break
        labels_prev = labels
        # reseed empty cells at the worst-served sample, one at a time
        counts = np.bincount(labels, minlength=n)
        blocked = vals.copy()
        for j in np.flatnonzero(counts == 0):
            k = int(np.argmax(blocked))
            c[j] = pts[k]
            blocked[k] = -np.inf
        if np.any(counts == 0):
            continue
        if r == 2.0:
            means, counts = _cluster_means(pts, labels, n)
            keep = counts > 0
            c[keep] = means[keep]
        else:
            for j in range(n):
                c[j] = _weighted_center(spec, pts[labels == j], c[j], r, scale)
        c = spec.domain.project_inside(c)
    # residual of the stationarity map at the returned codebook
    vals, labels = min_phi(spec, pts, c)
    if r == 2.0:
        means, counts = _cluster_means(pts, labels, n)
        keep = counts > 0
        residual = float(np.max(np.linalg.norm(means[keep] - c[keep], axis=1),
                                initial=0.0))
    else:
        residual = 0.0
        for j in range(n):
            members = pts[labels == j]
            if members.shape[0] == 0:
                continue
            cj = _weighted_center(spec, members, c[j], r, scale)
            residual = max(residual, float(np.linalg.norm(cj - c[j])))
    return LloydResult(Codebook(points=c, divergence=spec.name, r=r),
                       trace, len(trace), converged, residual / scale)


def _cell_nodes(bounds: np.ndarray, k: int):
    """Gauss-Legendre nodes/weights on every interval [bounds_i, bounds_{i+1}]."""
    t, w = np.polynomial.legendre.leggauss(k)
    t = (t + 1.0) / 2.0
    w = w / 2.0
    widths = np.diff(bounds)
    nodes = bounds[:-1, None] + widths[:, None] * t[None, :]
    weights = widths[:, None] * w[None, :]
    return nodes, weights


def _cell_phi(spec: DivergenceSpec, nodes: np.ndarray, c: np.ndarray) -> np.ndarray:
    """phi(nodes[j, k], c[j]) for the (n, K) node matrix of interval cells."""
    f_nodes = spec.F(nodes[..., None])
    f_c = spec.F(c[:, None])
    g_c = spec.grad(c[:, None])[:, 0]
    phi = f_nodes - f_c[:, None] - g_c[:, None] * (nodes - c[:, None])
    tol = NEG_CLAMP * (1.0 + np.abs(f_nodes))
    return np.where((phi < 0) & (np.abs(phi) <= tol), 0.0, phi)


def _lloyd_density_1d(dist: DistributionSpec, n: int, r: float, spec: DivergenceSpec,
                      init: Codebook, tol: float, max_iter: int,
                      gl_nodes: int = 24) -> LloydResult:
    lo, hi = dist.support_box
    lo, hi = float(lo[0]), float(hi[0])
    scale = hi - lo
    c = np.sort(init.points[:, 0])
    trace = []
    converged = False

    def cells(c):
        bounds = _sorted_boundaries(spec, c[:, None], lo, hi)
        nodes, weights = _cell_nodes(bounds, gl_nodes)
        h = dist.density(nodes.reshape(-1, 1)).reshape(nodes.shape)
        return nodes, weights * h

    for it in range(max_iter):
        nodes, wh = cells(c)
        phi = _cell_phi(spec, nodes, c)
        d_cur = float(np.sum(wh * phi ** (r / 2.0)))
        if trace and d_cur > trace[-1] + 1e-12 * (1.0 + trace[-1]):
            raise ConvergenceError(
                f"distortion increased at iteration {it}: {trace[-1]} -> {d_cur}")
        trace.append(d_cur)
        if len(trace) >= 2 and trace[-2] - trace[-1] < tol * max(trace[-2], 1e-300):
            converged = True
            break
        if r == 2.0:
            mass = wh.sum(axis=1)
            keep = mass > 0
            c[keep] = (wh * nodes).sum(axis=1)[keep] / mass[keep]
        else:
            for j in range(n):
                if wh[j].sum() <= 0:
                    continue
                c[j] = _weighted_center(spec, nodes[j][:, None], np.array([c[j]]),
                                        r, scale, weights=wh[j])[0]
        c = np.sort(spec.domain.project_inside(c[:, None])[:, 0])
    nodes, wh = cells(c)
    residual = 0.0
    for j in range(n):
        if wh[j].sum() <= 0:
            continue
        cj = _weighted_center(spec, nodes[j][:, None], np.array([c[j]]),
                              r, scale, weights=wh[j])[0]
        residual = max(residual, abs(cj - c[j]))
    return LloydResult(Codebook(points=c[:, None], divergence=spec.name, r=r),
                       trace, len(trace), converged, residual / scale)


def lloyd(data: Union[np.ndarray, DistributionSpec], n: int, r: float,
          spec: DivergenceSpec, init: Codebook, tol: float = 1e-9,
          max_iter: int = 500) -> LloydResult:
    """Train a level-n codebook by alternating assignment and the
    stationarity update until the relative distortion gain drops below tol.

    `data` is either an (N, d) sample array (empirical measure) or a 1D
    DistributionSpec with a density (cell integrals by Gauss-Legendre).
    The trace of distortions is checked to be non-increasing.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if r < 2:
        raise ValueError("Lloyd updates are defined for r >= 2")
    if init.n != n:
        raise ValueError(f"init has {init.n} codewords, expected {n}")
    spec.domain.require(init.points, "init codeword")
    if isinstance(data, DistributionSpec):
        if data.dimension != 1 or data.density is None:
            raise ValueError("density-mode Lloyd needs a 1D density; "
                             "pass samples otherwise")
        return _lloyd_density_1d(data, n, r, spec, init, tol, max_iter)
    pts = np.atleast_2d(np.asarray(data, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("empty working set")
    return _lloyd_samples(pts, n, r, spec, init, tol, max_iter)


def train(data, n: int, r: float, spec: DivergenceSpec, restarts: int = 5,
          seed: int = 0, tol: float = 1e-9, max_iter: int = 500,
          init_samples: Optional[np.ndarray] = None,
          n_init_samples: int = 4096) -> LloydResult:
    """Best of `restarts` Lloyd runs: one grid start, the rest kpp starts."""
    if isinstance(data, DistributionSpec):
        box = data.support_box
        if init_samples is None:
            init_samples = sample(data, max(n_init_samples, 4 * n), seed)
    else:
        init_samples = np.atleast_2d(np.asarray(data, dtype=float))
        box = (init_samples.min(axis=0), init_samples.max(axis=0))
    best = None
    for k in range(restarts):
        if k == 0:
            init = init_seed(None, n, r, spec, strategy="grid", box=box)
            init = Codebook(points=spec.domain.project_inside(init.points),
                            divergence=spec.name, r=r)
        else:
            init = init_seed(init_samples, n, r, spec, strategy="kpp",
                             seed=derive_rng(seed, 13, k).integers(2 ** 31))
        try:
            result = lloyd(data, n, r, spec, init, tol=tol, max_iter=max_iter)
        except ConvergenceError:
            continue
        if best is None or result.distortion < best.distortion:
            best = result
    if best is None:
        raise ConvergenceError("all Lloyd restarts failed")
    return best


# ---------------------------------------------------------------------------
# Constructive allocation (upper-bound quantizer)
# ---------------------------------------------------------------------------

def allocate_levels(weights, n: int, d: int, r: float) -> np.ndarray:
    """Budget split n_i = floor(n x_i) with x_i = y_i^{d/(d+r)} normalized.

    This is the allocation that makes the reverse Hoelder bound tight; the
    proportions n_i / n converge to x_i as n grows.
    """
    y = np.asarray(weights, dtype=float)
    if np.any(y <= 0):
        raise ValueError("weights must be positive")
    x = y ** (d / (d + r))
    x = x / x.sum()
    return np.floor(n * x).astype(int)


def compose_local(tess: Tessellation, proxy: ProxyMeasure, spec: DivergenceSpec,
                  r: float, n: int, hess_at_centers: Optional[np.ndarray] = None) -> Codebook:
    """Feasible level-n codebook from per-cell budgets and local grids.

    Cells receive n_i codewords proportional (after the d/(d+r) tilt) to
    det(hess at the cell center)^{r/2d} times the cell mass; each budget is
    spent on a midpoint grid inside the cell.  The result upper-bounds the
    optimal distortion of the proxy measure by construction.
    """
    active = proxy.active
    if active.size == 0:
        raise ValueError("no cell carries mass")
    if hess_at_centers is None:
        hess_at_centers = spec.hess(tess.centers[active])
    dets = np.linalg.det(np.atleast_3d(hess_at_centers).reshape(active.size, tess.dimension,
                                                                tess.dimension))
    d = tess.dimension
    y = dets ** (r / (2.0 * d)) * proxy.cell_probs[active]
    levels = allocate_levels(y, n, d, r)
    blocks = []
    for cell, n_i in zip(active, levels):
        if n_i == 0:
            continue
        lo, hi = tess.cell_box(cell)
        grid = init_seed(None, int(n_i), r, spec, strategy="grid", box=(lo, hi))
        blocks.append(grid.points)
    if not blocks:
        raise ValueError("level budget too small: every cell got 0 codewords")
    return Codebook(points=np.vstack(blocks), divergence=spec.name, r=r)
