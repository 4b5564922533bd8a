"""Cube shrinking, epsilon-interiors, and the boundary firewall net.

The firewall construction places finitely many points on the boundary of a
shrunken cell so that every point of the shrunken cell is divergence-closer
to the net than to anything outside the cell.  Constants controlling how
fine the net must be are not computable from a black-box potential, so the
net is certified per instance: build, verify on samples, and halve the
covering radius until verification passes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .divergence import DivergenceSpec, DomainSpec, phi_pairwise
from .measures import derive_rng


class EmptyInteriorError(ValueError):
    """Shrinking by eps would leave nothing of the domain."""


def epsilon_interior(domain: DomainSpec, eps: float) -> DomainSpec:
    """Points of the domain at distance more than eps from its complement.

    For interval-product domains this shrinks every finite face by eps;
    the full space is its own interior.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    lo = np.where(np.isfinite(domain.lo), domain.lo + eps, domain.lo)
    hi = np.where(np.isfinite(domain.hi), domain.hi - eps, domain.hi)
    if not np.all(lo < hi):
        raise EmptyInteriorError(f"eps={eps} empties the domain {domain.kind}")
    kind = domain.kind if domain.kind == "full-space" else "open-box"
    return DomainSpec(kind, domain.dimension, lo, hi)


@dataclass(frozen=True)
class Cube:
    center: np.ndarray
    half: float

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    @property
    def edge(self) -> float:
        return 2.0 * self.half

    @property
    def lo(self) -> np.ndarray:
        return self.center - self.half

    @property
    def hi(self) -> np.ndarray:
        return self.center + self.half

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all(np.abs(pts - self.center) <= self.half, axis=-1)


def cube(center, half: float) -> Cube:
    return Cube(center=np.atleast_1d(np.asarray(center, dtype=float)), half=float(half))


def shrink_cube(cell: Cube, varpi: float) -> Cube:
    """Same center, every face moved inward by varpi (edge shrinks by 2 varpi)."""
    if not (0.0 < varpi < cell.half):
        raise ValueError(f"varpi must lie in (0, {cell.half}); got {varpi}")
    return Cube(center=cell.center, half=cell.half - varpi)


@dataclass
class FirewallNet:
    """Finite covering of the boundary of a (shrunken) cube.

    Every boundary point lies within Euclidean distance rho * edge of the
    net; the construction is affine in the cube, so congruent cubes get
    congruent nets of identical cardinality.
    """

    cube: Cube
    rho: float
    points: np.ndarray

    @property
    def nu(self) -> int:
        return self.points.shape[0]

    @property
    def covering_radius(self) -> float:
        return self.rho * self.cube.edge


def _unit_boundary_grid(d: int, rho: float) -> np.ndarray:
    """Net on the boundary of [0, 1]^d with sup-norm face grids."""
    if d == 1:
        return np.array([[0.0], [1.0]])
    k = int(np.ceil(np.sqrt(d - 1) / (2.0 * rho))) + 1
    axis = np.linspace(0.0, 1.0, k)
    pts = []
    for fixed_dim in range(d):
        for side in (0.0, 1.0):
            for combo in itertools.product(axis, repeat=d - 1):
                p = np.empty(d)
                p[fixed_dim] = side
                others = [j for j in range(d) if j != fixed_dim]
                p[others] = combo
                pts.append(p)
    return np.unique(np.array(pts), axis=0)


def boundary_net(cell: Cube, rho: float) -> FirewallNet:
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    unit = _unit_boundary_grid(cell.dimension, rho)
    pts = cell.lo + cell.edge * unit
    return FirewallNet(cube=cell, rho=rho, points=pts)


def sample_cube_boundary(cell: Cube, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform points on the boundary of the cube (uniform over faces)."""
    d = cell.dimension
    if d == 1:
        side = rng.integers(0, 2, size=n)
        return np.where(side[:, None] == 0, cell.lo, cell.hi)
    face = rng.integers(0, 2 * d, size=n)
    pts = cell.lo + cell.edge * rng.random((n, d))
    rows = np.arange(n)
    pts[rows, face // 2] = np.where(face % 2 == 0, cell.lo[face // 2], cell.hi[face // 2])
    return pts


def sample_exterior(cell: Cube, outer_lo, outer_hi, n: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Uniform points of the outer box that fall outside the cube."""
    outer_lo = np.asarray(outer_lo, dtype=float)
    outer_hi = np.asarray(outer_hi, dtype=float)
    out = np.empty((0, cell.dimension))
    while out.shape[0] < n:
        cand = outer_lo + (outer_hi - outer_lo) * rng.random((2 * n, cell.dimension))
        keep = cand[~cell.contains(cand)]
        out = np.vstack([out, keep])
    return out[:n]


@dataclass
class FirewallReport:
    violations: int
    worst_margin: float
    rho_used: float
    nu: int
    n_interior: int
    n_exterior: int

    @property
    def ok(self) -> bool:
        return self.violations == 0


def verify_firewall(net: FirewallNet, cell: Cube, varpi: float, spec: DivergenceSpec,
                    outer_box, n_interior: int = 10_000, n_boundary: int = 1_000,
                    n_bulk: int = 4_000, seed: int = 0,
                    chunk: int = 1 << 14) -> FirewallReport:
    """Sampled check of min over the net <= min over the exterior.

    Interior points are drawn from the shrunken cube; exterior candidates
    mix points of the cell boundary (where the exterior infimum is attained,
    by convexity of phi along segments toward xi) with bulk points of the
    outer box outside the cell.  Report-only.
    """
    inner = shrink_cube(cell, varpi)
    rng = derive_rng(seed, 31)
    xi = inner.lo + inner.edge * rng.random((n_interior, cell.dimension))
    exterior = np.vstack([
        sample_cube_boundary(cell, n_boundary, rng),
        sample_exterior(cell, outer_box[0], outer_box[1], n_bulk, rng),
    ])
    worst = np.inf
    violations = 0
    for start in range(0, n_interior, chunk):
        block = xi[start:start + chunk]
        lhs = phi_pairwise(spec, block, net.points).min(axis=1)
        rhs = phi_pairwise(spec, block, exterior).min(axis=1)
        margin = rhs - lhs
        violations += int(np.sum(margin < 0))
        worst = min(worst, float(margin.min()))
    return FirewallReport(violations=violations, worst_margin=worst, rho_used=net.rho,
                          nu=net.nu, n_interior=n_interior,
                          n_exterior=exterior.shape[0])


def auto_rho_firewall(cell: Cube, varpi: float, spec: DivergenceSpec, outer_box,
                      n_interior: int = 10_000, n_boundary: int = 1_000,
                      n_bulk: int = 4_000, seed: int = 0, rho0: float = None,
                      rho_min: float = 1e-3):
    """Halve rho until the sampled firewall check passes; fail below rho_min.

    The starting radius defaults to varpi / edge, the scale at which the
    Euclidean case already separates.
    """
    rho = rho0 if rho0 is not None else min(1.0, varpi / cell.edge)
    while True:
        net = boundary_net(shrink_cube(cell, varpi), rho)
        report = verify_firewall(net, cell, varpi, spec, outer_box,
                                 n_interior=n_interior, n_boundary=n_boundary,
                                 n_bulk=n_bulk, seed=seed)
        if report.ok:
            return net, report
        rho /= 2.0
        if rho < rho_min:
            raise RuntimeError(
                f"no covering radius above {rho_min} certifies the firewall "
                f"(last report: {report.violations} violations)")
