"""Optimal vector quantization under Bregman divergences.

Train codebooks by Lloyd iteration of the stationarity equations, measure
(r, phi)-quantization error exactly in 1D or by Monte Carlo, and verify the
sharp n^{-1/d} rate against its limiting constant, together with the exact
transform, dilation, firewall, and moment-bound identities.
"""

from .divergence import (Bisector, BoundReport, DivergenceSpec, DomainError,
                         DomainSpec, MatrixFieldSpec, bregman_bisector, builtin,
                         eval_field_similarity, eval_phi, eval_phi_quadrature,
                         hessian_field, marginal_product_form, phi_pairwise,
                         regularize, verify_bounds, with_bounds)
from .geometry import (Cube, FirewallNet, FirewallReport, auto_rho_firewall,
                       boundary_net, cube, epsilon_interior, shrink_cube,
                       verify_firewall)
from .measures import (DistributionSpec, MomentEstimate, ProxyMeasure,
                       Tessellation, ToleranceError, adaptive_simpson,
                       build_proxy, derive_rng, empirical, empirical_from_csv,
                       gaussian_truncated, moment_sigma, point_mass,
                       proxy_l1_error, pseudo_norm, sample, tessellate,
                       triangular, uniform_box)
from .quantize import (Codebook, ConvergenceError, ErrorEstimate, LloydResult,
                       allocate_levels, assign, compose_local, distortion,
                       init_seed, lloyd, min_phi, train)
from .zador import (ConstantEstimate, PierceReport, RateExperiment, RateLevel,
                    ResidualReport, dilation_check, fit_power_law,
                    mahalanobis_transform_check, pierce_check, q_r_cube,
                    rate_experiment, sqrtm_spd, zador_constant)

__version__ = "0.1.0"
