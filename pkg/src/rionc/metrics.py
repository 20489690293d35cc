"""Stationarity proxy and transport-chain measurement utilities.

Computing the exact minimum-norm element of the neighborhood subdifferential
hull would need a convex-hull minimization, so runs are scored with the
computable surrogate

    proxy = || (1/T) sum_t chain_inverse(transport(w_t -> x_{t+1})(grad_t)) ||

where chain_inverse carries each summand back along the epoch's iterate path
to the common tangent space at the epoch start. Every transport is isometric,
so each summand keeps the norm of its gradient. The gradient source defaults
to the deterministic full subgradient of the mean objective.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .geometry import ManifoldPoint, TangentVector, parallel_transport
from .oracles import full_rgrad


@dataclass(frozen=True)
class TransportChain:
    """An ordered point list; transport composes segment-wise from first to last."""

    points: tuple[ManifoldPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("chain needs at least one point")
        manifold = self.points[0].manifold
        for p in self.points:
            if p.manifold != manifold:
                raise ValueError("chain points live on different manifolds")
        if not manifold.has_transport:
            raise ValueError(f"{manifold.kind} does not support parallel transport")

    def reversed(self) -> "TransportChain":
        return TransportChain(self.points[::-1])

    def length(self) -> float:
        pts = self.points
        return float(
            sum(
                pts[i].manifold.dist_coords(pts[i].coords, pts[i + 1].coords)
                for i in range(len(pts) - 1)
            )
        )

    def is_loop(self, tol: float = 1e-12) -> bool:
        a, b = self.points[0].coords, self.points[-1].coords
        return bool(np.linalg.norm(a - b) <= tol)


@dataclass(frozen=True)
class ProxyReport:
    """Per-epoch stationarity proxy value with the scales it was measured at."""

    epoch: int
    value: float
    clip_radius: float
    delta: float
    num_terms: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("proxy value must be nonnegative")


def chain_transport(chain: TransportChain, v: TangentVector) -> TangentVector:
    """Transport v (anchored at the chain start) segment-wise to the chain end."""
    pts = chain.points
    if v.base.manifold != pts[0].manifold or not np.array_equal(v.base.coords, pts[0].coords):
        raise ValueError("vector must be anchored at the chain start")
    out = v
    for i in range(len(pts) - 1):
        out = parallel_transport(pts[i], pts[i + 1], out)
    return out


def holonomy_defect(loop: TransportChain, v: TangentVector) -> float:
    """How far transport around a closed loop moves v: ||v - transport(v)||.

    On the unit sphere this is bounded by ||v|| times the loop length.
    """
    if not loop.is_loop():
        raise ValueError("chain does not close on itself")
    carried = chain_transport(loop, v)
    return float(np.linalg.norm(v.coords - carried.coords))


class ProxyAccumulator:
    """Streaming per-epoch proxy, O(1) memory.

    Instead of carrying every summand back to the epoch start, the running
    sum is carried *forward*: with B_t the sum expressed at x_{t+1},

        B_t = transport(x_t -> x_{t+1})(B_{t-1}) + transport(w_t -> x_{t+1})(grad_t),

    and ||B_{T-1}|| equals the norm of the backward-anchored sum because every
    transport is an isometry.
    """

    def __init__(self, manifold):
        if not manifold.has_transport:
            raise ValueError(f"{manifold.kind} does not support parallel transport")
        self._manifold = manifold
        self._sum = None
        self._terms = 0

    def update(
        self, x: np.ndarray, x_next: np.ndarray, w: np.ndarray, grad: np.ndarray
    ) -> None:
        m = self._manifold
        carried = m.transport_coords(w, x_next, grad)
        if self._sum is None:
            self._sum = carried
        else:
            self._sum = m.transport_coords(x, x_next, self._sum) + carried
        self._terms += 1

    def value(self) -> float:
        if self._terms == 0:
            raise ValueError("no gradients accumulated")
        return float(np.linalg.norm(self._sum)) / self._terms


def goldstein_proxy(trace, grad_fn: Callable[[ManifoldPoint], TangentVector] | None = None,
                    problem=None) -> ProxyReport:
    """Stationarity proxy for one recorded epoch.

    ``trace`` is a full epoch record (see the optimizer's ``EpochTrace``)
    holding the iterate path x_0..x_T and probe points w_0..w_{T-1}. Each
    gradient is evaluated at w_t, carried to x_{t+1}, then carried back along
    the reversed iterate path to x_0 where the summands are averaged. The
    isometry of every summand is asserted as it is accumulated.

    Exactly one of ``grad_fn`` and ``problem`` must be given; with ``problem``
    the deterministic full subgradient is used, matching how runs are scored.
    """
    if grad_fn is None:
        if problem is None:
            raise ValueError("provide grad_fn or problem")
        grad_fn = lambda w: full_rgrad(problem, w)
    manifold = trace.manifold
    if not manifold.has_transport:
        raise ValueError(f"{manifold.kind} does not support parallel transport")
    xs = trace.points
    ws = trace.probes
    num_terms = ws.shape[0]
    if xs.shape[0] != num_terms + 1:
        raise ValueError("trace is missing iterate points for this epoch")
    total = np.zeros(manifold.ambient_shape)
    for t in range(num_terms):
        w_pt = ManifoldPoint._trusted(manifold, ws[t])
        grad = grad_fn(w_pt)
        g_norm = grad.norm()
        carried = manifold.transport_coords(ws[t], xs[t + 1], grad.coords)
        for i in range(t + 1, 0, -1):
            carried = manifold.transport_coords(xs[i], xs[i - 1], carried)
        back_norm = float(np.linalg.norm(carried))
        if abs(back_norm - g_norm) > 1e-9 * max(g_norm, 1.0) * (t + 2):
            raise AssertionError(
                f"transport chain broke isometry at term {t}: {back_norm} vs {g_norm}"
            )
        total += carried
    value = float(np.linalg.norm(total)) / num_terms
    return ProxyReport(
        epoch=trace.epoch,
        value=value,
        clip_radius=trace.clip_radius,
        delta=trace.clip_radius * num_terms,
        num_terms=num_terms,
    )


def rate_slope(points: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(proxy) against log(N) over sweep results."""
    if len(points) < 3:
        raise ValueError("need at least 3 sweep points to fit a slope")
    n_vals = np.asarray([p[0] for p in points], dtype=np.float64)
    proxies = np.asarray([p[1] for p in points], dtype=np.float64)
    if np.any(n_vals <= 0) or np.any(proxies <= 0):
        raise ValueError("sweep points must be positive to fit in log-log space")
    coeffs = np.polyfit(np.log(n_vals), np.log(proxies), 1)
    return float(coeffs[0])
