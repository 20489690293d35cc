"""Manifold kernels: unit sphere and Stiefel manifold in ambient coordinates.

Points and tangent vectors are stored extrinsically. The sphere
S^{n-1} = {x in R^n : ||x|| = 1} supports the full kit (retraction,
exponential/logarithm maps, geodesic distance, parallel transport); the
Stiefel manifold St(n, p) = {X in R^{n x p} : X^T X = I_p} supports only
tangent projection and the polar retraction, which is all the projection
update variant of the optimizer needs. Unsupported operations raise
:class:`CapabilityError` rather than silently approximating.

All operations are pure functions of their inputs; constructed values are
immutable (backing arrays are frozen) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AntipodalError, CapabilityError
from .rng import CounterRng

# Construction tolerances for point / tangent invariants.
SPHERE_POINT_TOL = 1e-10
STIEFEL_POINT_TOL = 1e-8
SPHERE_TANGENT_TOL = 1e-10
STIEFEL_TANGENT_TOL = 1e-8

# Inner products this close to -1 mean the minimizing geodesic is not unique.
ANTIPODAL_MARGIN = 1e-9

_SAMPLE_RETRIES = 16
_TINY = 1e-12


@dataclass(frozen=True)
class Sphere:
    """Unit sphere S^{n-1} embedded in R^n with the induced metric."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("sphere ambient dimension must be >= 2")

    @property
    def kind(self) -> str:
        return "sphere"

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.n,)

    @property
    def ambient_dim(self) -> int:
        return self.n

    @property
    def intrinsic_dim(self) -> int:
        """Dimension of the tangent space; the scaling used by the
        zeroth-order estimator."""
        return self.n - 1

    @property
    def point_tol(self) -> float:
        return SPHERE_POINT_TOL

    @property
    def tangent_tol(self) -> float:
        return SPHERE_TANGENT_TOL

    # -- capabilities ------------------------------------------------------
    has_exp = True
    has_log = True
    has_dist = True
    has_transport = True

    # -- raw-coordinate kernels -------------------------------------------
    def feasibility_residual(self, x: np.ndarray) -> float:
        return abs(float(np.linalg.norm(x)) - 1.0)

    def project_point(self, z: np.ndarray) -> np.ndarray:
        nz = float(np.linalg.norm(z))
        if nz < _TINY:
            raise ValueError("cannot project a (near-)zero vector to the sphere")
        return z / nz

    def project_tangent_coords(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return z - (x @ z) * x

    def tangency_residual(self, x: np.ndarray, v: np.ndarray) -> float:
        return abs(float(x @ v))

    def retract_coords(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Normalization retraction (x + v) / ||x + v||.

        This is the p = 1 case of the Stiefel polar retraction. Exact
        identity at v = 0; the division renormalizes defensively so that
        long runs cannot drift off the sphere.
        """
        if not np.any(v):
            return x.copy()
        y = x + v
        return y / np.linalg.norm(y)

    def exp_coords(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        theta = float(np.linalg.norm(v))
        if theta < _TINY:
            return x.copy()
        y = np.cos(theta) * x + (np.sin(theta) / theta) * v
        return y / np.linalg.norm(y)

    def log_coords(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        c = float(np.clip(x @ y, -1.0, 1.0))
        if c <= -1.0 + ANTIPODAL_MARGIN:
            raise AntipodalError("log map undefined for (near-)antipodal points")
        u = y - c * x
        nu = float(np.linalg.norm(u))
        if nu < _TINY:
            return np.zeros_like(x)
        return (np.arccos(c) / nu) * u

    def dist_coords(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.arccos(np.clip(x @ y, -1.0, 1.0)))

    def transport_coords(self, x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Parallel transport along the minimizing geodesic from x to y.

        Decompose v into its component along the geodesic direction
        u = log_x(y)/dist(x, y) and the orthogonal remainder; the along
        component rotates to u cos(theta) - x sin(theta) while the remainder
        is carried unchanged:

            v  ->  v + a ((cos(theta) - 1) u - sin(theta) x),   a = <u, v>.
        """
        c = float(np.clip(x @ y, -1.0, 1.0))
        if c <= -1.0 + ANTIPODAL_MARGIN:
            raise AntipodalError("parallel transport undefined for (near-)antipodal points")
        u = y - c * x
        nu = float(np.linalg.norm(u))
        if nu < _TINY:
            return v.copy()
        u = u / nu
        theta = np.arccos(c)
        a = float(u @ v)
        return v + a * ((np.cos(theta) - 1.0) * u - np.sin(theta) * x)

    def random_point_coords(self, rng: CounterRng) -> np.ndarray:
        z = rng.standard_normal(self.n)
        return z / np.linalg.norm(z)


@dataclass(frozen=True)
class Stiefel:
    """Stiefel manifold St(n, p) of n x p matrices with orthonormal columns."""

    n: int
    p: int

    def __post_init__(self):
        if not (1 <= self.p <= self.n):
            raise ValueError("Stiefel requires 1 <= p <= n")
        if self.n * self.p < 2:
            raise ValueError("ambient dimension must be >= 2")

    @property
    def kind(self) -> str:
        return "stiefel"

    @property
    def ambient_shape(self) -> tuple[int, ...]:
        return (self.n, self.p)

    @property
    def ambient_dim(self) -> int:
        return self.n * self.p

    @property
    def intrinsic_dim(self) -> int:
        return self.n * self.p - self.p * (self.p + 1) // 2

    @property
    def point_tol(self) -> float:
        return STIEFEL_POINT_TOL

    @property
    def tangent_tol(self) -> float:
        return STIEFEL_TANGENT_TOL

    has_exp = False
    has_log = False
    has_dist = False
    has_transport = False

    def feasibility_residual(self, x: np.ndarray) -> float:
        g = x.T @ x
        return float(np.linalg.norm(g - np.eye(self.p)))

    def project_point(self, z: np.ndarray) -> np.ndarray:
        # nearest point in Frobenius norm: the orthogonal polar factor
        u, _, vt = np.linalg.svd(z, full_matrices=False)
        return u @ vt

    def project_tangent_coords(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        xtz = x.T @ z
        return z - x @ ((xtz + xtz.T) / 2.0)

    def tangency_residual(self, x: np.ndarray, v: np.ndarray) -> float:
        xtv = x.T @ v
        return float(np.linalg.norm((xtv + xtv.T) / 2.0))

    def retract_coords(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Polar retraction (X + V)(I + V^T V)^{-1/2}.

        The p x p Gram matrix I + V^T V is SPD with eigenvalues >= 1, so the
        inverse square root via symmetric eigendecomposition is
        unconditionally stable; the result is feasible up to that
        factorization's rounding, so no re-orthonormalization is applied.
        """
        if not np.any(v):
            return x.copy()
        m = np.eye(self.p) + v.T @ v
        w, q = np.linalg.eigh(m)
        inv_sqrt = (q / np.sqrt(w)) @ q.T
        return (x + v) @ inv_sqrt

    def exp_coords(self, x, v):
        raise CapabilityError("Stiefel does not support the exponential map")

    def log_coords(self, x, y):
        raise CapabilityError("Stiefel does not support the logarithm map")

    def dist_coords(self, x, y):
        raise CapabilityError("Stiefel does not support geodesic distance")

    def transport_coords(self, x, y, v):
        raise CapabilityError("Stiefel does not support parallel transport")

    def random_point_coords(self, rng: CounterRng) -> np.ndarray:
        z = rng.standard_normal((self.n, self.p))
        q, r = np.linalg.qr(z)
        return q * np.sign(np.diag(r))


Manifold = Sphere | Stiefel


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A feasible point on a manifold, stored in ambient coordinates."""

    manifold: Manifold
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.shape != self.manifold.ambient_shape:
            raise ValueError(
                f"point shape {coords.shape} != ambient shape {self.manifold.ambient_shape}"
            )
        residual = self.manifold.feasibility_residual(coords)
        if residual > self.manifold.point_tol:
            raise ValueError(f"point violates manifold invariant (residual {residual:.3e})")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    @classmethod
    def _trusted(cls, manifold: Manifold, coords: np.ndarray) -> "ManifoldPoint":
        """Wrap coordinates known feasible (internal fast path)."""
        point = object.__new__(cls)
        coords = np.asarray(coords, dtype=np.float64)
        coords.flags.writeable = False
        object.__setattr__(point, "manifold", manifold)
        object.__setattr__(point, "coords", coords)
        return point


@dataclass(frozen=True, eq=False)
class TangentVector:
    """An ambient-coordinate vector lying in the tangent space at its anchor."""

    base: ManifoldPoint
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        manifold = self.base.manifold
        if coords.shape != manifold.ambient_shape:
            raise ValueError(
                f"tangent shape {coords.shape} != ambient shape {manifold.ambient_shape}"
            )
        residual = manifold.tangency_residual(self.base.coords, coords)
        scale = float(np.linalg.norm(coords))
        if residual > manifold.tangent_tol * max(scale, 1e-300):
            raise ValueError(f"vector is not tangent at its anchor (residual {residual:.3e})")
        coords.flags.writeable = False
        object.__setattr__(self, "coords", coords)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))

    @classmethod
    def _trusted(cls, base: ManifoldPoint, coords: np.ndarray) -> "TangentVector":
        vec = object.__new__(cls)
        coords = np.asarray(coords, dtype=np.float64)
        coords.flags.writeable = False
        object.__setattr__(vec, "base", base)
        object.__setattr__(vec, "coords", coords)
        return vec


def _require_same_manifold(a: ManifoldPoint, b: ManifoldPoint) -> None:
    if a.manifold != b.manifold:
        raise ValueError("points live on different manifolds")


def _require_anchor(v: TangentVector, x: ManifoldPoint) -> None:
    if v.base.manifold != x.manifold or not np.array_equal(v.base.coords, x.coords):
        raise ValueError("tangent vector is anchored at a different point")


def project_tangent(x: ManifoldPoint, z: np.ndarray) -> TangentVector:
    """Orthogonal projection of an ambient vector onto the tangent space at x."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != x.manifold.ambient_shape:
        raise ValueError(f"ambient shape {z.shape} != {x.manifold.ambient_shape}")
    return TangentVector._trusted(x, x.manifold.project_tangent_coords(x.coords, z))


def retract(x: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    """First-order feasible step: R_x(v)."""
    _require_anchor(v, x)
    return ManifoldPoint._trusted(x.manifold, x.manifold.retract_coords(x.coords, v.coords))


def exp_map(x: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    """Geodesic step: exp_x(v). Sphere only."""
    _require_anchor(v, x)
    return ManifoldPoint._trusted(x.manifold, x.manifold.exp_coords(x.coords, v.coords))


def log_map(x: ManifoldPoint, y: ManifoldPoint) -> TangentVector:
    """Inverse of exp_x; rejects antipodal pairs. Sphere only."""
    _require_same_manifold(x, y)
    return TangentVector._trusted(x, x.manifold.log_coords(x.coords, y.coords))


def dist(x: ManifoldPoint, y: ManifoldPoint) -> float:
    """Geodesic distance. Sphere only."""
    _require_same_manifold(x, y)
    return x.manifold.dist_coords(x.coords, y.coords)


def parallel_transport(x: ManifoldPoint, y: ManifoldPoint, v: TangentVector) -> TangentVector:
    """Carry v from T_x to T_y along the minimizing geodesic. Sphere only."""
    _require_same_manifold(x, y)
    _require_anchor(v, x)
    return TangentVector._trusted(y, x.manifold.transport_coords(x.coords, y.coords, v.coords))


def sample_unit_tangent(x: ManifoldPoint, rng: CounterRng) -> TangentVector:
    """Uniform draw from the unit sphere of T_x.

    A standard-normal ambient draw is projected onto the tangent space and
    normalized; the projected Gaussian is isotropic within T_x, so the
    normalized vector is uniform on its unit sphere.
    """
    manifold = x.manifold
    for _ in range(_SAMPLE_RETRIES):
        z = rng.standard_normal(manifold.ambient_shape)
        w = manifold.project_tangent_coords(x.coords, z)
        nw = float(np.linalg.norm(w))
        if nw >= _TINY:
            return TangentVector._trusted(x, w / nw)
    raise RuntimeError("tangent sampling failed: projected draws degenerate")


def clip_coords(coords: np.ndarray, radius: float) -> np.ndarray:
    """Radial clip in raw coordinates with a guaranteed post-clip norm <= radius.

    The rescale can land one ulp above the radius; the loop shaves that off so
    clipping is exactly idempotent and the clipped-norm invariant is exact.
    """
    norm = float(np.linalg.norm(coords))
    if norm <= radius:
        return coords
    out = coords * (radius / norm)
    while float(np.linalg.norm(out)) > radius:
        out = out * (1.0 - 2.0**-52)
    return out


def clip_to_ball(v: TangentVector, radius: float) -> TangentVector:
    """Radially rescale v onto the closed ball of the given radius."""
    if radius <= 0:
        raise ValueError("clip radius must be positive")
    if v.norm() <= radius:
        return v
    return TangentVector._trusted(v.base, clip_coords(v.coords, radius))


def random_point(manifold: Manifold, rng: CounterRng) -> ManifoldPoint:
    """Uniform random point (Haar for Stiefel, uniform for the sphere)."""
    return ManifoldPoint._trusted(manifold, manifold.random_point_coords(rng))
