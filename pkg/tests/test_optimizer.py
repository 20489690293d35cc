import math

import numpy as np
import pytest

from golden_trace import GOLDEN_PATH, golden_run, serialize
from rionc.errors import CapabilityError, ConfigError, InfeasibleIterateError
from rionc.estimator import ZoConfig
from rionc.geometry import (
    ManifoldPoint,
    Sphere,
    Stiefel,
    TangentVector,
    clip_coords,
    dist,
    project_tangent,
    random_point,
    retract,
    sample_unit_tangent,
)
from rionc.metrics import goldstein_proxy
from rionc.optimizer import (
    FirstOrder,
    TracePolicy,
    TransportMode,
    ZerothOrder,
    plan_schedule,
    run,
    schedule_from_epochs,
    step_parallel_transport,
    step_projection,
)
from rionc.oracles import (
    LinearProblem,
    SparsePcaProblem,
    ZeroProblem,
    generate_covariance,
)
from rionc.rng import CounterRng


def small_problem(n=8, mu=0.1, seed=3):
    return SparsePcaProblem.from_covariance(generate_covariance(n, seed=seed), mu=mu)


class TestPlanSchedule:
    def test_reference_budget_small_delta(self):
        s = plan_schedule(10**5, 0.1, 1.0)
        assert s.epoch_len == 465
        assert s.epochs == 215
        assert s.clip_radius == 0.1 / 465
        assert s.epochs * s.epoch_len <= 10**5

    def test_reference_budget_delta_one(self):
        s = plan_schedule(10**5, 1.0, 1.0)
        assert s.epoch_len == 2155
        assert s.epochs == 46

    def test_epoch_floor(self):
        s = plan_schedule(100, 0.1, 1.0)  # delta * N = 10 < 8^1.5
        assert s.epoch_len == 8

    def test_product_identity_exact(self):
        for n_rounds, delta in ((10**5, 0.1), (4096, 0.37), (777, 0.9)):
            s = plan_schedule(n_rounds, delta, 2.0)
            assert s.clip_radius * s.epoch_len == s.delta

    def test_step_size_formula(self):
        s = plan_schedule(10**4, 0.5, 3.0)
        assert s.step_size == s.clip_radius / (3.0 * math.sqrt(s.epoch_len))

    def test_budget_too_small(self):
        with pytest.raises(ConfigError):
            plan_schedule(63, 0.5, 1.0)

    def test_delta_out_of_range(self):
        with pytest.raises(ConfigError):
            plan_schedule(1000, 0.0, 1.0)
        with pytest.raises(ConfigError):
            plan_schedule(1000, 1.5, 1.0)

    def test_explicit_epoch_structure(self):
        s = schedule_from_epochs(10, 20, 0.4, 1.5)
        assert (s.epochs, s.epoch_len, s.total_rounds) == (10, 20, 200)
        with pytest.raises(ConfigError):
            schedule_from_epochs(10, 7, 0.4, 1.5)
        with pytest.raises(ConfigError):
            schedule_from_epochs(0, 20, 0.4, 1.5)
        with pytest.raises(ConfigError):
            schedule_from_epochs(10, 20, 0.4, 0.0)


def _setup_step(n=6, seed=0, action_scale=0.05):
    sphere = Sphere(n)
    rng = CounterRng(seed)
    x = random_point(sphere, rng)
    action = TangentVector(x, action_scale * sample_unit_tangent(x, rng).coords)
    x_next = retract(x, action)
    s = rng.uniform()
    w = retract(x, TangentVector(x, s * action.coords))
    grad = TangentVector(w, 0.8 * sample_unit_tangent(w, rng).coords)
    return sphere, x, x_next, w, action, grad


class TestStepParallelTransport:
    def test_zero_gradient_preserves_norm(self):
        _, x, x_next, w, action, _ = _setup_step()
        zero_grad = TangentVector(w, np.zeros(6))
        out = step_parallel_transport(x, x_next, w, action, zero_grad, 0.1, 1.0)
        assert out.base is x_next
        assert abs(out.norm() - action.norm()) < 1e-12

    def test_epoch_start_is_clipped_euclidean(self):
        sphere = Sphere(5)
        rng = CounterRng(1)
        x = random_point(sphere, rng)
        zero = TangentVector(x, np.zeros(5))
        grad = TangentVector(x, 2.0 * sample_unit_tangent(x, rng).coords)
        out = step_parallel_transport(x, x, x, zero, grad, 0.7, 0.3)
        assert np.array_equal(out.coords, clip_coords(-0.7 * grad.coords, 0.3))

    def test_flat_limit_matches_euclidean_norm(self):
        # with every vector at 1e-6 scale the update norm agrees with the
        # Euclidean accumulator to second order in the scale
        _, x, x_next, w, action, grad = _setup_step(action_scale=1e-6)
        tiny_grad = TangentVector(w, 1e-6 * sample_unit_tangent(w, CounterRng(9)).coords)
        eta = 0.7
        out = step_parallel_transport(x, x_next, w, action, tiny_grad, eta, 1.0)
        euclid = action.coords - eta * tiny_grad.coords
        assert abs(out.norm() - np.linalg.norm(euclid)) <= 1e-9 * np.linalg.norm(euclid)

    def test_requires_transport_capability(self):
        st = Stiefel(4, 2)
        x = random_point(st, CounterRng(2))
        v = TangentVector(x, np.zeros((4, 2)))
        with pytest.raises(CapabilityError):
            step_parallel_transport(x, x, x, v, v, 0.1, 1.0)


class TestStepProjection:
    def test_all_zero(self):
        sphere = Sphere(5)
        x = random_point(sphere, CounterRng(3))
        zero = TangentVector(x, np.zeros(5))
        out = step_projection(x, zero, zero, 0.5, 1.0)
        assert np.all(out.coords == 0.0)

    def test_same_tangent_space_reduces_to_euclidean(self):
        sphere = Sphere(5)
        rng = CounterRng(4)
        x = random_point(sphere, rng)
        action = TangentVector(x, 0.2 * sample_unit_tangent(x, rng).coords)
        grad = TangentVector(x, 0.9 * sample_unit_tangent(x, rng).coords)
        out = step_projection(x, action, grad, 0.3, 10.0)
        euclid = action.coords - 0.3 * grad.coords
        assert np.allclose(out.coords, euclid, atol=1e-15)

    def test_agrees_with_transport_step_to_first_order(self):
        rng = CounterRng(5)
        for _ in range(20):
            _, x, x_next, w, action, grad = _setup_step(seed=rng.uniform_int(10_000))
            eta, radius = 0.15, 0.08
            pt = step_parallel_transport(x, x_next, w, action, grad, eta, radius)
            pj = step_projection(x_next, action, grad, eta, radius)
            gap = np.linalg.norm(pt.coords - pj.coords)
            bound = 4 * 2 * radius * (action.norm() + eta * grad.norm())
            assert gap <= bound


class TestRunBasics:
    def test_zero_oracle_freezes_iterates(self):
        sphere = Sphere(6)
        x0 = random_point(sphere, CounterRng(6))
        schedule = schedule_from_epochs(3, 8, 0.5, 1.0)
        result = run(
            ZeroProblem(), sphere, TransportMode.PARALLEL_TRANSPORT, FirstOrder(),
            schedule, x0, CounterRng(7), TracePolicy.FULL,
        )
        assert result.max_action_norm == 0.0
        assert np.array_equal(result.output_point.coords, x0.coords)
        for epoch in result.trace:
            assert np.all(epoch.actions == 0.0)
            assert np.all(epoch.points == x0.coords)
        assert np.allclose(result.epoch_proxies, 0.0)

    def test_determinism(self):
        problem = small_problem()
        sphere = Sphere(8)
        x0 = random_point(sphere, CounterRng(8))
        schedule = schedule_from_epochs(4, 10, 0.3, 1.5)

        def go():
            return run(
                problem, sphere, TransportMode.PROJECTION, FirstOrder(),
                schedule, x0, CounterRng(77), TracePolicy.PER_EPOCH,
            )

        a, b = go(), go()
        assert np.array_equal(a.epoch_proxies, b.epoch_proxies)
        assert np.array_equal(a.output_point.coords, b.output_point.coords)
        assert a.output_epoch == b.output_epoch

    def test_golden_trace_regression(self):
        assert serialize(golden_run()) == GOLDEN_PATH.read_text(encoding="ascii")

    def test_first_order_query_accounting(self):
        problem = small_problem()
        sphere = Sphere(8)
        x0 = random_point(sphere, CounterRng(9))
        schedule = schedule_from_epochs(5, 12, 0.3, 1.5)
        result = run(
            problem, sphere, TransportMode.PARALLEL_TRANSPORT, FirstOrder(),
            schedule, x0, CounterRng(10),
        )
        n_rounds = 5 * 12
        assert result.stats.gradient_queries == n_rounds
        assert result.stats.samples_drawn == n_rounds
        assert result.stats.value_queries == 0
        assert result.epoch_grad_queries[-1] == n_rounds

    def test_zeroth_order_query_accounting(self):
        problem = small_problem()
        sphere = Sphere(8)
        x0 = random_point(sphere, CounterRng(11))
        schedule = schedule_from_epochs(5, 12, 0.3, 4.0)
        result = run(
            problem, sphere, TransportMode.PARALLEL_TRANSPORT,
            ZerothOrder(ZoConfig.for_manifold(sphere, 0.1)),
            schedule, x0, CounterRng(12),
        )
        n_rounds = 5 * 12
        assert result.stats.value_queries == 2 * n_rounds
        assert result.stats.samples_drawn == n_rounds
        assert result.stats.gradient_queries == 0

    def test_trace_policies(self):
        problem = small_problem()
        sphere = Sphere(8)
        x0 = random_point(sphere, CounterRng(13))
        schedule = schedule_from_epochs(3, 8, 0.2, 1.5)
        per_epoch = run(
            problem, sphere, TransportMode.PROJECTION, FirstOrder(), schedule, x0,
            CounterRng(14), TracePolicy.PER_EPOCH,
        )
        assert per_epoch.trace is None and np.all(np.isfinite(per_epoch.epoch_proxies))
        final = run(
            problem, sphere, TransportMode.PROJECTION, FirstOrder(), schedule, x0,
            CounterRng(14), TracePolicy.FINAL,
        )
        assert final.trace is None and np.all(np.isnan(final.epoch_proxies))
        assert np.array_equal(final.output_point.coords, per_epoch.output_point.coords)


@pytest.fixture(scope="module")
def traced_run():
    problem = small_problem(n=10, mu=0.1, seed=5)
    sphere = Sphere(10)
    x0 = random_point(sphere, CounterRng(15))
    schedule = schedule_from_epochs(6, 16, 0.4, 1.2)
    result = run(
        problem, sphere, TransportMode.PARALLEL_TRANSPORT, FirstOrder(),
        schedule, x0, CounterRng(16), TracePolicy.FULL,
    )
    return sphere, schedule, x0, result


class TestRunInvariants:

    def test_actions_clipped(self, traced_run):
        # norms evaluated exactly as the clip does (1-d norm per action)
        _, schedule, _, result = traced_run
        for epoch in result.trace:
            norms = np.array([np.linalg.norm(row) for row in epoch.actions])
            assert np.all(norms <= schedule.clip_radius)
            assert norms[0] == 0.0
        assert result.max_action_norm <= schedule.clip_radius

    def test_step_locality(self, traced_run):
        sphere, schedule, _, result = traced_run
        rad = schedule.clip_radius
        for epoch in result.trace:
            for t in range(schedule.epoch_len):
                x = ManifoldPoint(sphere, epoch.points[t])
                x_next = ManifoldPoint(sphere, epoch.points[t + 1])
                w = ManifoldPoint(sphere, epoch.probes[t])
                assert dist(x, x_next) <= rad * (1 + 1e-8)
                assert dist(x, w) <= rad * (1 + 1e-8)

    def test_feasibility_throughout(self, traced_run):
        sphere, _, _, result = traced_run
        assert result.max_feasibility_residual <= 1e-6
        for epoch in result.trace:
            for row in epoch.points:
                assert sphere.feasibility_residual(row) <= 1e-12

    def test_epoch_handoff_and_representatives(self, traced_run):
        _, schedule, x0, result = traced_run
        first = result.trace[0]
        assert np.array_equal(first.points[0], x0.coords)
        for prev, nxt in zip(result.trace, result.trace[1:]):
            assert np.array_equal(nxt.points[0], prev.points[-1])
        for epoch, rep in zip(result.trace, result.representatives):
            assert epoch.representative_index == schedule.epoch_len // 2
            assert np.array_equal(rep.coords, epoch.probes[schedule.epoch_len // 2])
        assert any(
            np.array_equal(result.output_point.coords, rep.coords)
            for rep in result.representatives
        )

    def test_trace_recomputes_update_rule(self, traced_run):
        sphere, schedule, _, result = traced_run
        eta, rad = schedule.step_size, schedule.clip_radius
        epoch = result.trace[-1]
        for t in range(schedule.epoch_len):
            x = epoch.points[t]
            x_next = sphere.retract_coords(x, epoch.actions[t])
            assert np.array_equal(x_next, epoch.points[t + 1])
            w = sphere.retract_coords(x, epoch.probe_fractions[t] * epoch.actions[t])
            assert np.array_equal(w, epoch.probes[t])
            carried = sphere.transport_coords(x, x_next, epoch.actions[t])
            carried_grad = sphere.transport_coords(w, x_next, epoch.gradients[t])
            nxt = clip_coords(carried - eta * carried_grad, rad)
            assert np.array_equal(nxt, epoch.actions[t + 1])

    def test_streaming_proxy_matches_trace_proxy(self, traced_run):
        _, _, _, result = traced_run
        problem = small_problem(n=10, mu=0.1, seed=5)
        for k, epoch in enumerate(result.trace):
            report = goldstein_proxy(epoch, problem=problem)
            assert report.value == pytest.approx(result.epoch_proxies[k], rel=1e-9)

    def test_objective_descends(self, traced_run):
        _, _, x0, result = traced_run
        problem = small_problem(n=10, mu=0.1, seed=5)
        assert problem.mean_value(result.output_point) < problem.mean_value(x0)


class TestRunGuards:
    def test_mode_capability_checked(self):
        st = Stiefel(4, 2)
        x0 = random_point(st, CounterRng(17))
        schedule = schedule_from_epochs(2, 8, 0.2, 1.0)
        with pytest.raises(CapabilityError):
            run(
                ZeroProblem(), st, TransportMode.PARALLEL_TRANSPORT, FirstOrder(),
                schedule, x0, CounterRng(18),
            )
        with pytest.raises(CapabilityError):
            run(
                ZeroProblem(), st, TransportMode.PROJECTION,
                ZerothOrder(ZoConfig(smoothing_radius=0.1, tangent_dim=st.intrinsic_dim)),
                schedule, x0, CounterRng(18),
            )

    def test_wrong_manifold_start(self):
        schedule = schedule_from_epochs(2, 8, 0.2, 1.0)
        x0 = random_point(Sphere(5), CounterRng(19))
        with pytest.raises(ConfigError):
            run(
                ZeroProblem(), Sphere(6), TransportMode.PROJECTION, FirstOrder(),
                schedule, x0, CounterRng(20),
            )

    def test_infeasible_iterate_aborts(self, monkeypatch):
        problem = small_problem()
        sphere = Sphere(8)
        x0 = random_point(sphere, CounterRng(21))
        schedule = schedule_from_epochs(2, 8, 0.3, 1.5)
        true_retract = Sphere.retract_coords

        def drifting(self, x, v):
            return true_retract(self, x, v) * (1.0 + 2e-6)

        monkeypatch.setattr(Sphere, "retract_coords", drifting)
        with pytest.raises(InfeasibleIterateError):
            run(
                problem, sphere, TransportMode.PROJECTION, FirstOrder(),
                schedule, x0, CounterRng(22),
            )

    def test_stiefel_projection_run_works(self):
        st = Stiefel(6, 2)
        rng = CounterRng(23)
        x0 = random_point(st, rng)
        direction = rng.standard_normal((6, 2))
        problem = LinearProblem(direction=direction)
        schedule = schedule_from_epochs(4, 10, 0.5, np.linalg.norm(direction))
        result = run(
            problem, st, TransportMode.PROJECTION, FirstOrder(),
            schedule, x0, CounterRng(24),
        )
        assert result.max_feasibility_residual <= 1e-8
        assert np.all(np.isnan(result.epoch_proxies))  # no transport on Stiefel
        before = float((direction * x0.coords).sum())
        after = float((direction * result.output_point.coords).sum())
        assert after < before
