"""Zeroth-order Riemannian gradient estimation from paired value queries.

The estimator probes the objective at two antipodal geodesic offsets of the
query point and scales the difference by the tangent-space dimension:

    g(x) = (d / (2 delta)) * (F(exp_x(delta u), nu) - F(exp_x(-delta u), nu)) * u

with u uniform on the unit sphere of T_x and the *same* sample nu in both
evaluations. Each call costs exactly one sample draw and two value queries.
The exponential map (not the retraction) generates the probe points, so the
manifold must support it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError
from .geometry import Manifold, ManifoldPoint, TangentVector, sample_unit_tangent
from .oracles import OracleStats, draw_sample, stochastic_value
from .rng import CounterRng


@dataclass(frozen=True)
class ZoConfig:
    """Smoothing radius and tangent dimension for the two-point estimator.

    The radius must lie in (0, 1]; this also keeps the probe offsets within
    the sphere's injectivity radius.
    """

    smoothing_radius: float
    tangent_dim: int

    def __post_init__(self):
        if not (0.0 < self.smoothing_radius <= 1.0):
            raise ValueError("smoothing radius must lie in (0, 1]")
        if self.tangent_dim < 1:
            raise ValueError("tangent dimension must be >= 1")

    @classmethod
    def for_manifold(cls, manifold: Manifold, smoothing_radius: float) -> "ZoConfig":
        return cls(smoothing_radius=smoothing_radius, tangent_dim=manifold.intrinsic_dim)


def estimate_along(
    problem,
    x: ManifoldPoint,
    cfg: ZoConfig,
    direction: TangentVector,
    nu,
    stats: OracleStats | None = None,
) -> TangentVector:
    """Two-point estimate along a given unit probe direction.

    Antithetic by construction: replacing the direction by its negation flips
    both the probe points and the value difference, leaving the product
    bit-for-bit unchanged.
    """
    manifold = x.manifold
    delta = cfg.smoothing_radius
    x_plus = ManifoldPoint._trusted(
        manifold, manifold.exp_coords(x.coords, delta * direction.coords)
    )
    x_minus = ManifoldPoint._trusted(
        manifold, manifold.exp_coords(x.coords, -delta * direction.coords)
    )
    f_plus = stochastic_value(problem, x_plus, nu, stats)
    f_minus = stochastic_value(problem, x_minus, nu, stats)
    scale = cfg.tangent_dim / (2.0 * delta) * (f_plus - f_minus)
    return TangentVector._trusted(x, scale * direction.coords)


def zo_gradient(
    problem,
    x: ManifoldPoint,
    cfg: ZoConfig,
    rng: CounterRng,
    stats: OracleStats | None = None,
) -> TangentVector:
    """Two-point gradient estimate at x, anchored at x.

    Consumes randomness in a fixed order (probe direction u first, then the
    sample draw) so batched replays can reproduce calls exactly.
    """
    manifold = x.manifold
    if not manifold.has_exp:
        raise CapabilityError(f"{manifold.kind} lacks the exponential map needed here")
    if cfg.tangent_dim != manifold.intrinsic_dim:
        raise ValueError(
            f"config tangent dimension {cfg.tangent_dim} != manifold {manifold.intrinsic_dim}"
        )
    u = sample_unit_tangent(x, rng)
    nu = draw_sample(problem, rng, stats)
    return estimate_along(problem, x, cfg, u, nu, stats)
