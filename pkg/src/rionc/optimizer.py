"""Clipped online-to-nonconvex optimization on manifolds.

A run consists of K epochs of T inner iterations. Within an epoch the action
Delta accumulates negated gradients like online gradient descent, is clipped
to a ball of radius D after every update, and moves the iterate through the
retraction; gradients are queried at a point w_t drawn uniformly along the
retraction curve between x_t and x_{t+1}. Actions and gradients live in
different tangent spaces, so consecutive updates reconcile them either with
parallel transports (isometric, sphere only) or with a single orthogonal
projection onto the new tangent space (works on sphere and Stiefel). Each
epoch contributes its midpoint probe as a representative; the run output is
drawn uniformly from the representatives.

The schedule ties the scales together: T ~ (delta * N)^(2/3) with a floor of
8, D = delta / T, and step size eta = D / (G sqrt(T)) where G bounds the
root mean square gradient norm.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ConfigError, InfeasibleIterateError
from .estimator import ZoConfig, zo_gradient
from .geometry import Manifold, ManifoldPoint, TangentVector, clip_coords
from .metrics import ProxyAccumulator
from .oracles import OracleStats, draw_sample, stochastic_rgrad
from .rng import CounterRng

# Runtime feasibility tolerance: looser than the construction tolerance to
# absorb accumulated rounding over ~1e5 steps; drift stays near machine
# epsilon because every retraction renormalizes.
RUN_FEASIBILITY_TOL = 1e-6

MIN_EPOCH_LEN = 8
MIN_TOTAL_ROUNDS = 64


@dataclass(frozen=True)
class Schedule:
    """Derived run parameters; invariant: clip_radius * epoch_len == delta."""

    total_rounds: int
    delta: float
    epoch_len: int
    epochs: int
    clip_radius: float
    step_size: float
    grad_bound: float


def _finish_schedule(epochs: int, epoch_len: int, delta: float, grad_bound: float) -> Schedule:
    if grad_bound <= 0:
        raise ConfigError("gradient bound must be positive")
    clip_radius = delta / epoch_len
    delta_eff = clip_radius * epoch_len  # recomputed so D * T = delta exactly
    step_size = clip_radius / (grad_bound * math.sqrt(epoch_len))
    return Schedule(
        total_rounds=epochs * epoch_len,
        delta=delta_eff,
        epoch_len=epoch_len,
        epochs=epochs,
        clip_radius=clip_radius,
        step_size=step_size,
        grad_bound=grad_bound,
    )


def plan_schedule(n_rounds: int, delta: float, grad_bound: float) -> Schedule:
    """Schedule for a total budget of n_rounds gradient rounds.

    epoch_len = max(8, ceil((delta * n_rounds)^(2/3))); the floor keeps the
    proxy's transport-chain error bound valid. epochs = floor(n_rounds /
    epoch_len), so epochs * epoch_len never exceeds the budget.
    """
    if n_rounds < MIN_TOTAL_ROUNDS:
        raise ConfigError(f"need at least {MIN_TOTAL_ROUNDS} rounds, got {n_rounds}")
    if not (0.0 < delta <= 1.0):
        raise ConfigError("delta must lie in (0, 1]")
    epoch_len = max(MIN_EPOCH_LEN, math.ceil((delta * n_rounds) ** (2.0 / 3.0)))
    epochs = n_rounds // epoch_len
    if epochs < 1:
        raise ConfigError(f"budget {n_rounds} cannot fit one epoch of length {epoch_len}")
    return _finish_schedule(epochs, epoch_len, delta, grad_bound)


def schedule_from_epochs(epochs: int, epoch_len: int, delta: float, grad_bound: float) -> Schedule:
    """Schedule with epoch structure pinned explicitly."""
    if epoch_len < MIN_EPOCH_LEN:
        raise ConfigError(f"epoch length must be >= {MIN_EPOCH_LEN}, got {epoch_len}")
    if epochs < 1:
        raise ConfigError("need at least one epoch")
    if not (0.0 < delta <= 1.0):
        raise ConfigError("delta must lie in (0, 1]")
    return _finish_schedule(epochs, epoch_len, delta, grad_bound)


class TransportMode(enum.Enum):
    PARALLEL_TRANSPORT = "parallel_transport"
    PROJECTION = "projection"


class TracePolicy(enum.Enum):
    FULL = "full"
    PER_EPOCH = "per_epoch"
    FINAL = "final"


@dataclass(frozen=True)
class FirstOrder:
    """Gradient source: one stochastic subgradient query per iteration."""


@dataclass(frozen=True)
class ZerothOrder:
    """Gradient source: two value queries per iteration through the estimator."""

    config: ZoConfig


GradientSource = FirstOrder | ZerothOrder


@dataclass
class EpochTrace:
    """Full record of one epoch (only kept under TracePolicy.FULL).

    points holds x_0..x_T, probes w_0..w_{T-1}, actions Delta_0..Delta_T
    (Delta_0 = 0), probe_fractions the uniform draws s_t, gradients the
    g_t used by the update (anchored at w_t).
    """

    epoch: int
    manifold: Manifold
    clip_radius: float
    points: np.ndarray
    probes: np.ndarray
    actions: np.ndarray
    probe_fractions: np.ndarray
    gradients: np.ndarray
    representative_index: int


@dataclass
class RunResult:
    output_point: ManifoldPoint
    output_epoch: int
    epoch_proxies: np.ndarray
    epoch_value_queries: np.ndarray
    epoch_grad_queries: np.ndarray
    epoch_wallclock_s: np.ndarray
    representatives: list[ManifoldPoint]
    stats: OracleStats
    schedule: Schedule
    seed: int | None
    mode: TransportMode
    grad_source: GradientSource
    max_action_norm: float
    max_feasibility_residual: float
    wallclock_s: float
    trace: list[EpochTrace] | None = None
    warmup_grad_bound: float | None = None


def _pt_step_coords(manifold, x, x_next, w, action, grad, step_size, clip_radius):
    carried_action = manifold.transport_coords(x, x_next, action)
    carried_grad = manifold.transport_coords(w, x_next, grad)
    return clip_coords(carried_action - step_size * carried_grad, clip_radius)


def _proj_step_coords(manifold, x_next, action, grad, step_size, clip_radius):
    return clip_coords(
        manifold.project_tangent_coords(x_next, action - step_size * grad), clip_radius
    )


def step_parallel_transport(
    x: ManifoldPoint,
    x_next: ManifoldPoint,
    w: ManifoldPoint,
    action: TangentVector,
    grad: TangentVector,
    step_size: float,
    clip_radius: float,
) -> TangentVector:
    """One action update with isometric transports, clipped at the new anchor."""
    manifold = x.manifold
    if not manifold.has_transport:
        raise CapabilityError(f"{manifold.kind} does not support parallel transport")
    coords = _pt_step_coords(
        manifold, x.coords, x_next.coords, w.coords, action.coords, grad.coords,
        step_size, clip_radius,
    )
    return TangentVector._trusted(x_next, coords)


def step_projection(
    x_next: ManifoldPoint,
    action: TangentVector,
    grad: TangentVector,
    step_size: float,
    clip_radius: float,
) -> TangentVector:
    """One action update by ambient subtraction and tangent projection."""
    coords = _proj_step_coords(
        x_next.manifold, x_next.coords, action.coords, grad.coords, step_size, clip_radius
    )
    return TangentVector._trusted(x_next, coords)


def run(
    problem,
    manifold: Manifold,
    mode: TransportMode,
    grad_source: GradientSource,
    schedule: Schedule,
    x0: ManifoldPoint,
    rng: CounterRng,
    trace_policy: TracePolicy = TracePolicy.PER_EPOCH,
    seed: int | None = None,
) -> RunResult:
    """Execute the full epoch loop from x0.

    Randomness is consumed in a fixed order: per iteration one uniform draw
    for the probe fraction, then whatever the gradient source needs (sample
    draw for first order; probe direction then sample draw for zeroth order);
    after the last epoch a single uniform integer picks the output
    representative. Identical (inputs, seed) give an identical result.

    Per-epoch proxies are streamed with the deterministic full subgradient
    when the manifold supports transport; otherwise they are recorded as NaN.
    """
    if mode is TransportMode.PARALLEL_TRANSPORT and not manifold.has_transport:
        raise CapabilityError(f"{manifold.kind} does not support parallel transport")
    if isinstance(grad_source, ZerothOrder) and not manifold.has_exp:
        raise CapabilityError(f"{manifold.kind} lacks the exponential map for zeroth order")
    if x0.manifold != manifold:
        raise ConfigError("initial point lives on a different manifold")

    t_start = time.perf_counter()
    big_k, big_t = schedule.epochs, schedule.epoch_len
    clip_radius, step_size = schedule.clip_radius, schedule.step_size
    stats = OracleStats()
    proxy_possible = manifold.has_transport and trace_policy is not TracePolicy.FINAL
    rep_index = big_t // 2

    x = np.asarray(x0.coords, dtype=np.float64).copy()
    proxies = np.full(big_k, np.nan)
    epoch_value_q = np.zeros(big_k, dtype=np.int64)
    epoch_grad_q = np.zeros(big_k, dtype=np.int64)
    epoch_wallclock = np.zeros(big_k)
    representatives: list[ManifoldPoint] = []
    traces: list[EpochTrace] | None = [] if trace_policy is TracePolicy.FULL else None
    max_action = 0.0
    max_residual = 0.0
    shape = manifold.ambient_shape

    for k in range(1, big_k + 1):
        action = np.zeros(shape)
        acc = ProxyAccumulator(manifold) if proxy_possible else None
        rep_coords = None
        if traces is not None:
            ep_points = np.empty((big_t + 1,) + shape)
            ep_probes = np.empty((big_t,) + shape)
            ep_actions = np.zeros((big_t + 1,) + shape)
            ep_fracs = np.empty(big_t)
            ep_grads = np.empty((big_t,) + shape)
            ep_points[0] = x

        for t in range(big_t):
            x_next = manifold.retract_coords(x, action)
            s = rng.uniform()
            w = manifold.retract_coords(x, s * action)

            w_pt = ManifoldPoint._trusted(manifold, w)
            if isinstance(grad_source, FirstOrder):
                nu = draw_sample(problem, rng, stats)
                grad = stochastic_rgrad(problem, w_pt, nu, stats).coords
            else:
                grad = zo_gradient(problem, w_pt, grad_source.config, rng, stats).coords

            if acc is not None:
                full_grad = manifold.project_tangent_coords(w, problem._mean_grad_ambient(w))
                acc.update(x, x_next, w, full_grad)

            if mode is TransportMode.PARALLEL_TRANSPORT:
                new_action = _pt_step_coords(
                    manifold, x, x_next, w, action, grad, step_size, clip_radius
                )
            else:
                new_action = _proj_step_coords(
                    manifold, x_next, action, grad, step_size, clip_radius
                )

            residual = manifold.feasibility_residual(x_next)
            if residual > RUN_FEASIBILITY_TOL:
                raise InfeasibleIterateError(
                    f"iterate left the manifold at epoch {k}, step {t}: "
                    f"residual {residual:.3e} > {RUN_FEASIBILITY_TOL:.0e}"
                )
            max_residual = max(max_residual, residual)
            max_action = max(max_action, float(np.linalg.norm(new_action)))

            if traces is not None:
                ep_probes[t] = w
                ep_fracs[t] = s
                ep_grads[t] = grad
                ep_actions[t + 1] = new_action
                ep_points[t + 1] = x_next
            if t == rep_index:
                rep_coords = w

            x = x_next
            action = new_action

        representatives.append(ManifoldPoint._trusted(manifold, rep_coords))
        if acc is not None:
            proxies[k - 1] = acc.value()
        epoch_value_q[k - 1] = stats.value_queries
        epoch_grad_q[k - 1] = stats.gradient_queries
        epoch_wallclock[k - 1] = time.perf_counter() - t_start
        if traces is not None:
            traces.append(
                EpochTrace(
                    epoch=k,
                    manifold=manifold,
                    clip_radius=clip_radius,
                    points=ep_points,
                    probes=ep_probes,
                    actions=ep_actions,
                    probe_fractions=ep_fracs,
                    gradients=ep_grads,
                    representative_index=rep_index,
                )
            )

    out_idx = rng.uniform_int(big_k)
    return RunResult(
        output_point=representatives[out_idx],
        output_epoch=out_idx + 1,
        epoch_proxies=proxies,
        epoch_value_queries=epoch_value_q,
        epoch_grad_queries=epoch_grad_q,
        epoch_wallclock_s=epoch_wallclock,
        representatives=representatives,
        stats=stats,
        schedule=schedule,
        seed=seed,
        mode=mode,
        grad_source=grad_source,
        max_action_norm=max_action,
        max_feasibility_residual=max_residual,
        wallclock_s=time.perf_counter() - t_start,
        trace=traces,
    )
