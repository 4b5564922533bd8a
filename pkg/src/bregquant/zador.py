"""Sharp-rate constants, convergence experiments, and verifiable identities.

The distortion of level-n codebooks decays like n^{-r/d}; the limiting
constant for a divergence with Hessian field H and density h is

    2^{-r/2} * Q_r([0,1]^d) * || det(H)^{r/2d} h ||_{d/(d+r)},

where Q_r([0,1]^d) is the uniform-cube constant of the squared-Euclidean
case.  For a raw matrix-field similarity (xi-a)^T S(a) (xi-a) the same
expression holds without the 2^{-r/2} factor.  Everything here either
computes those constants, runs levelled Lloyd experiments against them, or
checks the exact per-sample identities (Mahalanobis square-root transform,
dilation covariance, moment-scaled rate bound).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from .divergence import DivergenceSpec, MatrixFieldSpec, builtin
from .measures import (DistributionSpec, MomentEstimate, derive_rng, moment_sigma,
                       pseudo_norm, sample)
from .quantize import Codebook, ErrorEstimate, distortion, train


@dataclass
class ConstantEstimate:
    """A limiting constant and how much to trust it."""

    value: float
    provenance: str              # exact-1d | paper-2d | conjecture-3d | empirical
    uncertainty: Optional[float] = None
    warnings: tuple = ()

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("constant must be positive")


def q_r_cube(d: int, r: float, levels: Sequence[int] = (32, 64, 128),
             n_train: int = 60_000, restarts: int = 3, seed: int = 0) -> ConstantEstimate:
    """Uniform-cube constant Q_r([0,1]^d) = lim n^{r/d} e_{r,n}^r.

    d = 1 is exact for every r (from the unique midpoint-grid optimum,
    e_{r,n} = 1 / (2n (r+1)^{1/r})); d = 2, r = 2 is the hexagonal-tiling
    value and d = 3, r = 2 the truncated-octahedron value, still a
    conjecture.  Everything else is estimated by levelled Lloyd runs.
    """
    if d < 1 or r <= 0:
        raise ValueError("need d >= 1 and r > 0")
    if d == 1:
        return ConstantEstimate(1.0 / (2.0 ** r * (r + 1.0)), "exact-1d")
    if d == 2 and r == 2:
        return ConstantEstimate(5.0 / (18.0 * np.sqrt(3.0)), "paper-2d")
    if d == 3 and r == 2:
        return ConstantEstimate(19.0 / (64.0 * 2.0 ** (1.0 / 3.0)), "conjecture-3d")
    spec = builtin("sq-euclid", d=d)
    dist = _uniform_cube(d)
    qs = []
    for i, n in enumerate(levels):
        best = train(sample(dist, n_train, derive_rng(seed, 3, i).integers(2 ** 31)),
                     n, r, spec, restarts=restarts, seed=derive_rng(seed, 4, i).integers(2 ** 31))
        est = distortion(best.codebook, dist, r, spec, mode="mc",
                         n_samples=4 * n_train, seed=derive_rng(seed, 5, i).integers(2 ** 31))
        # e_{r,n} of sq-euclid is the squared norm to the power r/2: undo the
        # square so q matches the norm-based definition of Q_r
        qs.append(n ** (r / d) * est.value)
    value = qs[-1]
    unc = abs(qs[-1] - qs[-2]) if len(qs) >= 2 else None
    return ConstantEstimate(value, "empirical", uncertainty=unc)


def _uniform_cube(d: int) -> DistributionSpec:
    from .measures import uniform_box
    return uniform_box(np.zeros(d), np.ones(d))


def zador_constant(spec: Union[DivergenceSpec, MatrixFieldSpec], dist: DistributionSpec,
                   r: float, tol: float = 1e-10) -> ConstantEstimate:
    """Limiting constant Q_r for (spec, dist): the target of n^{r/d} e_{r,n}^r."""
    if dist.density is None:
        raise ValueError("the constant needs a density")
    d = dist.dimension
    lo, hi = dist.support_box
    is_field = isinstance(spec, MatrixFieldSpec)
    matrix = spec.S if is_field else spec.hess

    def g(x):
        dets = np.linalg.det(matrix(x))
        return dets ** (r / (2.0 * d)) * dist.density(x)

    norm, _ = pseudo_norm(g, d / (d + r), lo, hi, tol=tol)
    base = q_r_cube(d, r)
    factor = 1.0 if is_field else 2.0 ** (-r / 2.0)
    warnings = list(base.warnings)
    probe = sample(dist, 512, 0)
    hnorms = np.linalg.norm(matrix(probe), axis=(-2, -1))
    if not np.all(np.isfinite(hnorms)) or np.max(hnorms) > 1e8 * max(np.median(hnorms), 1e-300):
        warnings.append("hessian-appears-unbounded-on-support")
    return ConstantEstimate(factor * base.value * norm, base.provenance,
                            uncertainty=base.uncertainty, warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# Rate experiments
# ---------------------------------------------------------------------------

@dataclass
class RateLevel:
    n: int
    estimate: Optional[ErrorEstimate]
    q: Optional[float]           # n^{1/d} e_{r,n}
    restarts_used: int
    error: Optional[str] = None


@dataclass
class RateExperiment:
    r: float
    d: int
    divergence: str
    distribution: str
    levels: List[int]
    results: List[RateLevel]
    slope: Optional[float] = None
    intercept: Optional[float] = None
    theoretical: Optional[ConstantEstimate] = None

    @property
    def ratio_at_max(self) -> Optional[float]:
        if self.theoretical is None:
            return None
        good = [lv for lv in self.results if lv.q is not None]
        if not good:
            return None
        return good[-1].q / self.theoretical.value ** (1.0 / self.r)

    def csv_rows(self) -> List[str]:
        rows = ["n,e_rn,std_err,q_n,restarts_used"]
        for lv in self.results:
            if lv.estimate is None:
                rows.append(f"{lv.n},nan,nan,nan,{lv.restarts_used}")
                continue
            se = lv.estimate.std_error
            rows.append(",".join([
                f"{lv.n}",
                f"{lv.estimate.e_r:.17g}",
                "" if se is None else f"{se:.17g}",
                f"{lv.q:.17g}",
                f"{lv.restarts_used}",
            ]))
        return rows

    def summary_dict(self) -> dict:
        out = {
            "divergence": self.divergence,
            "distribution": self.distribution,
            "r": self.r,
            "d": self.d,
            "levels": list(self.levels),
            "slope": self.slope,
            "intercept": self.intercept,
        }
        if self.theoretical is not None:
            out["theoretical_constant"] = self.theoretical.value
            out["constant_provenance"] = self.theoretical.provenance
            out["ratio_at_max_n"] = self.ratio_at_max
        return out


def fit_power_law(ns: Sequence[float], es: Sequence[float],
                  largest_half: bool = True):
    """Least-squares slope/intercept of log e against log n.

    Small levels are pre-asymptotic, so the fit defaults to the largest half
    of the levels.
    """
    ns = np.asarray(ns, dtype=float)
    es = np.asarray(es, dtype=float)
    if largest_half and ns.size >= 4:
        keep = ns.size // 2
        ns, es = ns[-keep:], es[-keep:]
    slope, intercept = np.polyfit(np.log(ns), np.log(es), 1)
    return float(slope), float(intercept)


def rate_experiment(spec: DivergenceSpec, dist: DistributionSpec, r: float,
                    levels: Sequence[int], restarts: int = 5, seed: int = 0,
                    mode: str = "exact-1d", n_train: int = 120_000,
                    n_mc: int = 1_000_000, tol: float = 1e-10,
                    theoretical: Optional[ConstantEstimate] = None,
                    lloyd_tol: float = 1e-9, max_iter: int = 500) -> RateExperiment:
    """Levelled best-of-restarts Lloyd training with a power-law fit.

    mode "exact-1d" trains against the density and integrates the final
    distortion; mode "mc" trains on n_train samples and measures the final
    codebook on a fresh n_mc sample.  Failures at one level are recorded and
    the experiment continues.
    """
    levels = sorted(int(n) for n in levels)
    d = dist.dimension
    results: List[RateLevel] = []
    for i, n in enumerate(levels):
        try:
            if mode == "exact-1d":
                best = train(dist, n, r, spec, restarts=restarts,
                             seed=derive_rng(seed, 21, i).integers(2 ** 31),
                             tol=lloyd_tol, max_iter=max_iter)
                est = distortion(best.codebook, dist, r, spec, mode="exact-1d", tol=tol)
            elif mode == "mc":
                pts = sample(dist, n_train, derive_rng(seed, 22, i).integers(2 ** 31))
                best = train(pts, n, r, spec, restarts=restarts,
                             seed=derive_rng(seed, 23, i).integers(2 ** 31),
                             tol=lloyd_tol, max_iter=max_iter)
                est = distortion(best.codebook, dist, r, spec, mode="mc",
                                 n_samples=n_mc,
                                 seed=derive_rng(seed, 24, i).integers(2 ** 31))
            else:
                raise ValueError(f"unknown mode {mode!r}")
            results.append(RateLevel(n=n, estimate=est, q=n ** (1.0 / d) * est.e_r,
                                     restarts_used=restarts))
        except Exception as exc:                       # recorded, not fatal
            results.append(RateLevel(n=n, estimate=None, q=None,
                                     restarts_used=restarts, error=str(exc)))
    exp = RateExperiment(r=r, d=d, divergence=spec.name, distribution=dist.label,
                         levels=list(levels), results=results, theoretical=theoretical)
    good = [(lv.n, lv.estimate.e_r) for lv in results if lv.estimate is not None]
    if len(good) >= 2:
        ns, es = zip(*good)
        exp.slope, exp.intercept = fit_power_law(ns, es)
    return exp


# ---------------------------------------------------------------------------
# Identities
# ---------------------------------------------------------------------------

def sqrtm_spd(S: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric positive definite matrix."""
    S = np.asarray(S, dtype=float)
    vals, vecs = np.linalg.eigh(S)
    if np.min(vals) <= 0:
        raise ValueError("matrix is not positive definite")
    return (vecs * np.sqrt(vals)) @ vecs.T


@dataclass
class ResidualReport:
    max_rel_residual: float
    argmin_mismatches: int
    n_samples: int

    @property
    def ok(self) -> bool:
        return self.argmin_mismatches == 0


def mahalanobis_transform_check(S: np.ndarray, cb: Codebook, samples: np.ndarray,
                                r: float = 2.0) -> ResidualReport:
    """Per-sample identity min_a (xi-a)^T S (xi-a) == min_a |sqrt(S) xi - sqrt(S) a|^2.

    The square-root map sends the quadratic-form problem to a plain
    Euclidean one; each candidate's value is preserved, so the minimizer and
    the minimum agree sample by sample.
    """
    S = np.asarray(S, dtype=float)
    root = sqrtm_spd(S)
    pts = np.atleast_2d(samples)
    diff = pts[:, None, :] - cb.points[None, :, :]
    v_form = np.einsum("nki,ij,nkj->nk", diff, S, diff)
    mapped = (pts @ root)[:, None, :] - (cb.points @ root)[None, :, :]
    v_eucl = np.sum(mapped * mapped, axis=-1)
    i_form = np.argmin(v_form, axis=1)
    i_eucl = np.argmin(v_eucl, axis=1)
    m_form = v_form[np.arange(pts.shape[0]), i_form]
    m_eucl = v_eucl[np.arange(pts.shape[0]), i_eucl]
    denom = np.maximum(np.maximum(m_form, m_eucl), 1e-300)
    rel = np.abs(m_form - m_eucl) / denom
    return ResidualReport(max_rel_residual=float(rel.max()),
                          argmin_mismatches=int(np.sum(i_form != i_eucl)),
                          n_samples=pts.shape[0])


def dilation_check(S: np.ndarray, A: float, B: float, cb: Codebook,
                   samples_unit: np.ndarray, r: float = 2.0) -> ResidualReport:
    """Dilation covariance: mapping [0,1]^d onto [A,B]^d scales every
    per-sample quadratic-form value by (B-A)^2 (hence e_r by B-A)."""
    if not A < B:
        raise ValueError("need A < B")
    S = np.asarray(S, dtype=float)
    u = np.atleast_2d(samples_unit)
    xi = A + (B - A) * u
    cb_mapped = A + (B - A) * cb.points

    def min_form(points, centers):
        diff = points[:, None, :] - centers[None, :, :]
        vals = np.einsum("nki,ij,nkj->nk", diff, S, diff)
        return vals.min(axis=1), vals.argmin(axis=1)

    v_unit, i_unit = min_form(u, cb.points)
    v_big, i_big = min_form(xi, cb_mapped)
    expect = (B - A) ** 2 * v_unit
    denom = np.maximum(np.maximum(v_big, expect), 1e-300)
    rel = np.abs(v_big - expect) / denom
    return ResidualReport(max_rel_residual=float(rel.max()),
                          argmin_mismatches=int(np.sum(i_unit != i_big)),
                          n_samples=u.shape[0])


# ---------------------------------------------------------------------------
# Moment-scaled rate bound
# ---------------------------------------------------------------------------

@dataclass
class PierceReport:
    levels: List[int]
    e_values: List[float]
    b_values: List[float]
    sigma: MomentEstimate
    bounded: bool = field(init=False)

    def __post_init__(self):
        finite = [b for b in self.b_values if np.isfinite(b)]
        if not finite:
            self.bounded = True
            return
        self.bounded = bool(max(finite) <= 2.0 * np.median(finite))


def pierce_check(dist: DistributionSpec, r: float, delta: float,
                 levels: Sequence[int], spec: DivergenceSpec, mode: str = "mc",
                 restarts: int = 3, seed: int = 0, n_train: int = 60_000,
                 n_mc: int = 200_000) -> PierceReport:
    """b_n = n^{1/d} e_{r,n} / sigma_{r(1+delta)} across levels.

    The nonasymptotic bound says b_n stays below a constant depending only
    on (d, r, delta); with the constant unknown, boundedness is checked as
    max <= 2 x median.  Levels are capped at the number of distinct training
    samples (a smaller codebook is always feasible).
    """
    s = r * (1.0 + delta)
    sigma = moment_sigma(dist, s, mode="mc", n_samples=n_train,
                         seed=derive_rng(seed, 41).integers(2 ** 31), center="mean")
    d = dist.dimension
    e_values: List[float] = []
    b_values: List[float] = []
    levels = [int(n) for n in levels]
    for i, n in enumerate(levels):
        if mode == "exact-1d":
            best = train(dist, n, r, spec, restarts=restarts,
                         seed=derive_rng(seed, 42, i).integers(2 ** 31))
            est = distortion(best.codebook, dist, r, spec, mode="exact-1d")
        else:
            pts = sample(dist, n_train, derive_rng(seed, 43, i).integers(2 ** 31))
            n_distinct = np.unique(pts, axis=0).shape[0]
            n_eff = min(n, n_distinct)
            best = train(pts, n_eff, r, spec, restarts=restarts,
                         seed=derive_rng(seed, 44, i).integers(2 ** 31))
            est = distortion(best.codebook, dist, r, spec, mode="mc",
                             n_samples=n_mc,
                             seed=derive_rng(seed, 45, i).integers(2 ** 31))
        e = est.e_r
        e_values.append(e)
        if sigma.value == 0.0:
            b_values.append(0.0 if e == 0.0 else np.inf)
        else:
            b_values.append(n ** (1.0 / d) * e / sigma.value)
    return PierceReport(levels=list(levels), e_values=e_values, b_values=b_values,
                        sigma=sigma)
