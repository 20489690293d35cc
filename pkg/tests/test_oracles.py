import math

import numpy as np
import pytest

from rionc.geometry import ManifoldPoint, Sphere, TangentVector, dist, exp_map, random_point
from rionc.oracles import (
    OracleStats,
    QuadraticProblem,
    SparsePcaProblem,
    ZeroProblem,
    draw_sample,
    estimate_grad_bound,
    estimate_lipschitz,
    full_rgrad,
    generate_covariance,
    load_covariance,
    save_covariance,
    stochastic_rgrad,
    stochastic_value,
)
from rionc.rng import CounterRng


def make_problem(n=6, mu=0.1, seed=13):
    return SparsePcaProblem.from_covariance(generate_covariance(n, seed=seed), mu=mu)


class TestProblemConstruction:
    def test_asymmetric_rejected(self):
        a = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            SparsePcaProblem.from_covariance(a)

    def test_indefinite_rejected(self):
        a = np.diag([1.0, -0.5])
        with pytest.raises(ValueError):
            SparsePcaProblem.from_covariance(a)

    def test_factor_reproduces_covariance(self):
        problem = make_problem(n=8)
        assert np.allclose(problem.factor @ problem.factor.T, problem.covariance, atol=1e-12)

    def test_negative_mu_rejected(self):
        with pytest.raises(ValueError):
            SparsePcaProblem.from_covariance(np.eye(2), mu=-0.1)

    def test_generated_spectrum_is_harmonic(self):
        a = generate_covariance(5, seed=1)
        w = np.sort(np.linalg.eigvalsh(a))[::-1]
        assert np.allclose(w, [1, 1 / 2, 1 / 3, 1 / 4, 1 / 5], atol=1e-12)

    def test_unknown_spectrum_rejected(self):
        with pytest.raises(ValueError):
            generate_covariance(4, seed=0, spectrum="cliff")


class TestMatrixFile:
    def test_roundtrip(self, tmp_path):
        a = generate_covariance(7, seed=3)
        path = tmp_path / "a.csv"
        save_covariance(path, a)
        assert np.array_equal(load_covariance(path), a)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("not-a-number\n1.0\n")
        with pytest.raises(ValueError):
            load_covariance(path)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("2\n1.0,0.0\n")
        with pytest.raises(ValueError):
            load_covariance(path)


class TestDrawSample:
    def test_identity_covariance_returns_raw_normals(self):
        problem = SparsePcaProblem.from_covariance(np.eye(2), mu=0.0)
        stats = OracleStats()
        nu = draw_sample(problem, CounterRng(5), stats)
        assert np.allclose(nu.payload, CounterRng(5).standard_normal(2), atol=1e-15)
        assert stats.samples_drawn == 1 and nu.index == 1

    def test_zero_covariance_draws_zero(self):
        problem = SparsePcaProblem.from_covariance(np.zeros((3, 3)), mu=0.0)
        for _ in range(5):
            assert np.all(draw_sample(problem, CounterRng(1)).payload == 0.0)

    def test_draw_counter_strictly_increases(self):
        problem = make_problem()
        stats = OracleStats()
        rng = CounterRng(2)
        indices = [draw_sample(problem, rng, stats).index for _ in range(10)]
        assert indices == list(range(1, 11))

    def test_empirical_covariance(self):
        problem = make_problem(n=5, seed=21)
        rng = CounterRng(3)
        draws = 100_000
        z = rng.standard_normal((draws, 5))
        nus = z @ problem.factor.T
        emp = nus.T @ nus / draws
        rel = np.linalg.norm(emp - problem.covariance) / np.linalg.norm(problem.covariance)
        assert rel < 0.05


class TestStochasticValue:
    def test_hand_value(self):
        problem = SparsePcaProblem.from_covariance(np.eye(3), mu=0.1)
        x = ManifoldPoint(Sphere(3), [1.0, 0, 0])
        nu = draw_sample(problem, CounterRng(0)).__class__(payload=np.array([1.0, 0, 0]), index=0)
        assert stochastic_value(problem, x, nu) == pytest.approx(-0.9, abs=1e-15)

    def test_orthogonal_sample_zero_mu(self):
        problem = SparsePcaProblem.from_covariance(np.eye(3), mu=0.0)
        x = ManifoldPoint(Sphere(3), [1.0, 0, 0])
        nu = draw_sample(problem, CounterRng(0)).__class__(payload=np.array([0.0, 2.0, 0]), index=0)
        assert stochastic_value(problem, x, nu) == 0.0

    def test_monte_carlo_mean(self):
        problem = make_problem(n=6, mu=0.1, seed=9)
        w, q = np.linalg.eigh(problem.covariance)
        x = ManifoldPoint(Sphere(6), q[:, -1])
        rng = CounterRng(4)
        z = rng.standard_normal((100_000, 6))
        nus = z @ problem.factor.T
        dots = nus @ x.coords
        vals = -dots**2 + problem.mu * np.abs(x.coords).sum()
        exact = problem.mean_value(x)
        assert abs(vals.mean() - exact) <= 0.02 * abs(exact)

    def test_value_query_counted(self):
        problem = make_problem()
        stats = OracleStats()
        x = random_point(Sphere(6), CounterRng(5))
        nu = draw_sample(problem, CounterRng(5), stats)
        stochastic_value(problem, x, nu, stats)
        stochastic_value(problem, x, nu, stats)
        assert stats.value_queries == 2 and stats.samples_drawn == 1


class TestStochasticGradient:
    def test_radial_subgradient_projects_to_zero(self):
        problem = SparsePcaProblem.from_covariance(np.eye(3), mu=0.1)
        x = ManifoldPoint(Sphere(3), [1.0, 0, 0])
        nu_cls = draw_sample(problem, CounterRng(0)).__class__
        g = stochastic_rgrad(problem, x, nu_cls(payload=np.array([1.0, 0, 0]), index=0))
        # ambient subgradient is -1.9 e1, purely radial at e1
        assert np.allclose(g.coords, 0.0, atol=1e-15)

    def test_orthogonal_sample_zero_gradient(self):
        problem = SparsePcaProblem.from_covariance(np.eye(3), mu=0.0)
        x = ManifoldPoint(Sphere(3), [1.0, 0, 0])
        nu_cls = draw_sample(problem, CounterRng(0)).__class__
        g = stochastic_rgrad(problem, x, nu_cls(payload=np.array([0.0, 1.0, 0]), index=0))
        assert np.all(g.coords == 0.0)

    def test_gradient_query_counted(self):
        problem = make_problem()
        stats = OracleStats()
        rng = CounterRng(1)
        x = random_point(Sphere(6), rng)
        nu = draw_sample(problem, rng, stats)
        stochastic_rgrad(problem, x, nu, stats)
        assert stats.gradient_queries == 1

    def test_finite_difference_on_smooth_region(self):
        # same fixed sample set for value and gradient kills the MC noise,
        # leaving only the central-difference truncation error
        problem = make_problem(n=8, mu=0.2, seed=31)
        sphere = Sphere(8)
        rng = CounterRng(6)
        raw = rng.standard_normal(8)
        coords = np.sign(raw) * (0.8 + np.abs(raw))
        x = ManifoldPoint(sphere, coords / np.linalg.norm(coords))
        draws = 20_000
        z = rng.standard_normal((draws, 8))
        nus = z @ problem.factor.T

        def mean_value_at(pt):
            dots = nus @ pt.coords
            return float((-dots**2).mean()) + problem.mu * float(np.abs(pt.coords).sum())

        dots = nus @ x.coords
        grads = -2.0 * dots[:, None] * nus + problem.mu * np.sign(x.coords)[None, :]
        mean_grad = grads.mean(axis=0)
        mean_grad_tan = mean_grad - (mean_grad @ x.coords) * x.coords
        h = 1e-4
        for k in range(5):
            u = np.zeros(8)
            u[(k * 2) % 8] = 1.0
            u -= (u @ x.coords) * x.coords
            u /= np.linalg.norm(u)
            plus = exp_map(x, TangentVector(x, h * u))
            minus = exp_map(x, TangentVector(x, -h * u))
            fd = (mean_value_at(plus) - mean_value_at(minus)) / (2 * h)
            assert abs(fd - float(mean_grad_tan @ u)) < 1e-2


class TestFullGradient:
    def test_identity_covariance_gradient_is_radial(self):
        problem = SparsePcaProblem.from_covariance(np.eye(4), mu=0.0)
        x = random_point(Sphere(4), CounterRng(7))
        assert np.allclose(full_rgrad(problem, x).coords, 0.0, atol=1e-14)

    def test_hand_computed_diagonal_case(self):
        problem = SparsePcaProblem.from_covariance(np.diag([2.0, 1.0]), mu=0.0)
        x = ManifoldPoint(Sphere(2), np.array([1.0, 1.0]) / math.sqrt(2))
        g = full_rgrad(problem, x)
        expected = np.array([-1.0, 1.0]) / math.sqrt(2)
        assert np.allclose(g.coords, expected, atol=1e-14)
        e2 = ManifoldPoint(Sphere(2), [0.0, 1.0])
        assert np.allclose(full_rgrad(problem, e2).coords, 0.0, atol=1e-14)

    def test_matches_stochastic_mean(self):
        problem = make_problem(n=5, mu=0.1, seed=17)
        rng = CounterRng(8)
        raw = rng.standard_normal(5)
        coords = np.sign(raw) * (0.8 + np.abs(raw))
        x = ManifoldPoint(Sphere(5), coords / np.linalg.norm(coords))
        draws = 50_000
        z = rng.standard_normal((draws, 5))
        nus = z @ problem.factor.T
        dots = nus @ x.coords
        grads = -2.0 * dots[:, None] * nus + problem.mu * np.sign(x.coords)[None, :]
        grads -= (grads @ x.coords)[:, None] * x.coords[None, :]
        mean, sd = grads.mean(axis=0), grads.std(axis=0, ddof=1)
        target = full_rgrad(problem, x).coords
        assert np.all(np.abs(mean - target) <= 3.5 * sd / math.sqrt(draws))


class TestLipschitz:
    def test_bound_on_random_pairs(self):
        problem = make_problem(n=6, mu=0.3, seed=23)
        sphere = Sphere(6)
        rng = CounterRng(9)
        for _ in range(100):
            x, y = random_point(sphere, rng), random_point(sphere, rng)
            nu = draw_sample(problem, rng)
            gap = abs(stochastic_value(problem, x, nu) - stochastic_value(problem, y, nu))
            assert gap <= problem.lipschitz_factor(nu.payload) * dist(x, y) * (1 + 1e-12)

    def test_estimate_lipschitz_positive(self):
        problem = make_problem()
        est = estimate_lipschitz(problem, CounterRng(10), draws=200)
        assert est > problem.mu * math.sqrt(problem.n)


class TestWarmup:
    def test_grad_bound_scales_rms_norm(self):
        problem = ZeroProblem()
        x = random_point(Sphere(4), CounterRng(11))

        def fn(pt, rng):
            return stochastic_rgrad(problem, pt, draw_sample(problem, rng))

        assert estimate_grad_bound(fn, x, CounterRng(11), draws=50) == 0.0

    def test_grad_bound_on_quadratic(self):
        a = np.diag([1.0, 0.5, 0.25])
        problem = QuadraticProblem(n=3, matrix=a)
        x = ManifoldPoint(Sphere(3), [0.0, 0.0, 1.0])

        def fn(pt, rng):
            return stochastic_rgrad(problem, pt, draw_sample(problem, rng))

        est = estimate_grad_bound(fn, x, CounterRng(12), draws=10)
        exact = np.linalg.norm(full_rgrad(problem, x).coords)
        assert est == pytest.approx(1.1 * exact, rel=1e-12)
