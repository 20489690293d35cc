"""Stochastic objectives with first-order and value-only query surfaces.

The main objective is the sparse principal component problem on the unit
sphere,

    minimize  -x^T A x + mu ||x||_1   over  ||x|| = 1,

realized through the stochastic component F(x, nu) = -(nu^T x)^2 + mu ||x||_1
with nu ~ N(0, A), so that E[F(x, nu)] recovers the objective. Smooth
objectives (quadratic, linear, constant) are included for estimator and
optimizer tests. Query counting lives in :class:`OracleStats`; problem
definitions themselves are immutable and shareable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import ManifoldPoint, TangentVector, project_tangent
from .rng import CounterRng


@dataclass(frozen=True)
class SampleIndex:
    """One random data draw, tagged with its position in the run's draw order."""

    payload: np.ndarray
    index: int


@dataclass
class OracleStats:
    """Monotone counters of oracle usage; totals are exact per run."""

    value_queries: int = 0
    gradient_queries: int = 0
    samples_drawn: int = 0

    def merge(self, other: "OracleStats") -> None:
        self.value_queries += other.value_queries
        self.gradient_queries += other.gradient_queries
        self.samples_drawn += other.samples_drawn


_EMPTY = np.zeros(0)


@dataclass(frozen=True)
class SparsePcaProblem:
    """Sparse PCA objective data: covariance A (PSD), factor B with A = B B^T,
    and l1 weight mu >= 0."""

    n: int
    covariance: np.ndarray
    factor: np.ndarray = field(repr=False)
    mu: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.covariance, dtype=np.float64)
        if a.shape != (self.n, self.n):
            raise ValueError(f"covariance shape {a.shape} != ({self.n}, {self.n})")
        if float(np.linalg.norm(a - a.T)) > 1e-12 * max(1.0, float(np.linalg.norm(a))):
            raise ValueError("covariance must be symmetric")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")

    @classmethod
    def from_covariance(cls, a: np.ndarray, mu: float = 0.0) -> "SparsePcaProblem":
        a = np.asarray(a, dtype=np.float64)
        n = a.shape[0]
        w, q = np.linalg.eigh((a + a.T) / 2.0)
        if w.min() < -1e-10:
            raise ValueError(f"covariance has eigenvalue {w.min():.3e} < -1e-10")
        factor = q @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
        return cls(n=n, covariance=a, factor=factor, mu=float(mu))

    # internal query surface used by the module-level operations
    def _draw(self, rng: CounterRng) -> np.ndarray:
        return self.factor @ rng.standard_normal(self.n)

    def _value(self, x: np.ndarray, payload: np.ndarray) -> float:
        dot = float(payload @ x)
        return -dot * dot + self.mu * float(np.abs(x).sum())

    def _grad_ambient(self, x: np.ndarray, payload: np.ndarray) -> np.ndarray:
        # subgradient selection at kinks: sign(0) = 0, the minimal-norm element
        return -2.0 * float(payload @ x) * payload + self.mu * np.sign(x)

    def _mean_grad_ambient(self, x: np.ndarray) -> np.ndarray:
        return -2.0 * (self.covariance @ x) + self.mu * np.sign(x)

    def mean_value(self, x: ManifoldPoint) -> float:
        """Deterministic objective -x^T A x + mu ||x||_1."""
        c = x.coords
        return -float(c @ self.covariance @ c) + self.mu * float(np.abs(c).sum())

    def lipschitz_factor(self, payload: np.ndarray) -> float:
        """Per-sample Lipschitz constant 2 ||nu||^2 + mu sqrt(n)."""
        return 2.0 * float(payload @ payload) + self.mu * float(np.sqrt(self.n))


@dataclass(frozen=True)
class QuadraticProblem:
    """Deterministic smooth objective x^T A x (no randomness in the draw)."""

    n: int
    matrix: np.ndarray

    def _draw(self, rng: CounterRng) -> np.ndarray:
        return _EMPTY

    def _value(self, x: np.ndarray, payload: np.ndarray) -> float:
        return float(x @ self.matrix @ x)

    def _grad_ambient(self, x: np.ndarray, payload: np.ndarray) -> np.ndarray:
        return (self.matrix + self.matrix.T) @ x

    def _mean_grad_ambient(self, x: np.ndarray) -> np.ndarray:
        return (self.matrix + self.matrix.T) @ x

    def mean_value(self, x: ManifoldPoint) -> float:
        return self._value(x.coords, _EMPTY)


@dataclass(frozen=True)
class LinearProblem:
    """Deterministic objective <c, x> in ambient coordinates (vector or matrix)."""

    direction: np.ndarray

    def _draw(self, rng: CounterRng) -> np.ndarray:
        return _EMPTY

    def _value(self, x: np.ndarray, payload: np.ndarray) -> float:
        return float((self.direction * x).sum())

    def _grad_ambient(self, x: np.ndarray, payload: np.ndarray) -> np.ndarray:
        return np.asarray(self.direction, dtype=np.float64)

    def _mean_grad_ambient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.direction, dtype=np.float64)


@dataclass(frozen=True)
class ZeroProblem:
    """Constant objective; every gradient is the zero vector."""

    def _draw(self, rng: CounterRng) -> np.ndarray:
        return _EMPTY

    def _value(self, x: np.ndarray, payload: np.ndarray) -> float:
        return 0.0

    def _grad_ambient(self, x: np.ndarray, payload: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)

    def _mean_grad_ambient(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(x)


def draw_sample(problem, rng: CounterRng, stats: OracleStats | None = None) -> SampleIndex:
    """Draw one random data sample; increments the sample counter."""
    payload = problem._draw(rng)
    if stats is not None:
        stats.samples_drawn += 1
        return SampleIndex(payload=payload, index=stats.samples_drawn)
    return SampleIndex(payload=payload, index=0)


def stochastic_value(
    problem, x: ManifoldPoint, nu: SampleIndex, stats: OracleStats | None = None
) -> float:
    """Single-sample objective value F(x, nu)."""
    if stats is not None:
        stats.value_queries += 1
    return problem._value(x.coords, nu.payload)


def stochastic_rgrad(
    problem, x: ManifoldPoint, nu: SampleIndex, stats: OracleStats | None = None
) -> TangentVector:
    """Single-sample Riemannian subgradient: the ambient subgradient selection
    projected onto the tangent space at x."""
    if stats is not None:
        stats.gradient_queries += 1
    return project_tangent(x, problem._grad_ambient(x.coords, nu.payload))


def full_rgrad(problem, x: ManifoldPoint) -> TangentVector:
    """Deterministic Riemannian subgradient of the mean objective.

    Used by the stationarity proxy only; the optimizer never sees it.
    """
    return project_tangent(x, problem._mean_grad_ambient(x.coords))


def generate_covariance(n: int, seed: int, spectrum: str = "harmonic") -> np.ndarray:
    """Random covariance A = Q diag(lambda) Q^T with Q from a seeded QR.

    Spectra: "harmonic" (lambda_i = 1/i, so lambda_max = 1 and the leading
    component is identifiable), "flat" (identity spectrum), or "planted"
    (harmonic spectrum with a dense sign-pattern leading component; see
    :func:`planted_covariance`).
    """
    if spectrum == "planted":
        return planted_covariance(n, seed)
    if spectrum == "harmonic":
        lam = 1.0 / np.arange(1, n + 1)
    elif spectrum == "flat":
        lam = np.ones(n)
    else:
        raise ValueError(f"unknown spectrum kind: {spectrum!r}")
    rng = CounterRng(seed, stream=77)
    z = rng.standard_normal((n, n))
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    a = (q * lam) @ q.T
    return (a + a.T) / 2.0


def planted_covariance(n: int, seed: int) -> np.ndarray:
    """Harmonic-spectrum covariance whose leading eigenvector is a dense
    random sign pattern (every entry has magnitude 1/sqrt(n)).

    With a QR-random leading component some coordinates of the maximizer sit
    on the l1 kink and the deterministic subgradient stays noisy there; the
    dense component keeps the optimum away from every kink, which makes
    convergence of the stationarity proxy cleanly visible. Used by the
    reproduction experiments.
    """
    rng = CounterRng(seed, stream=78)
    leading = np.sign(rng.standard_normal(n)) / np.sqrt(n)
    z = rng.standard_normal((n, n))
    z[:, 0] = leading
    q, r = np.linalg.qr(z)
    q = q * np.sign(np.diag(r))
    lam = 1.0 / np.arange(1, n + 1)
    a = (q * lam) @ q.T
    return (a + a.T) / 2.0


def save_covariance(path, a: np.ndarray) -> None:
    """Write A as flat text: a header line with n, then n comma-separated rows."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{n}\n")
        for row in a:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_covariance(path) -> np.ndarray:
    """Read the matrix format written by :func:`save_covariance`."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        try:
            n = int(header)
        except ValueError:
            raise ValueError(f"matrix file header must be the dimension, got {header!r}")
        rows = []
        for i in range(n):
            line = fh.readline()
            if not line:
                raise ValueError(f"matrix file ended after {i} of {n} rows")
            vals = [float(v) for v in line.strip().split(",")]
            if len(vals) != n:
                raise ValueError(f"row {i} has {len(vals)} entries, expected {n}")
            rows.append(vals)
    return np.asarray(rows, dtype=np.float64)


def estimate_grad_bound(
    grad_fn, x0: ManifoldPoint, rng: CounterRng, draws: int = 1000
) -> float:
    """Warm-up estimate of the gradient second-moment bound at x0.

    Returns 1.1 * sqrt(mean ||g||^2) over the given number of draws, where
    ``grad_fn(x, rng)`` produces one stochastic (or estimated) gradient.
    """
    total = 0.0
    for _ in range(draws):
        g = grad_fn(x0, rng)
        total += float(g.coords.ravel() @ g.coords.ravel())
    return 1.1 * float(np.sqrt(total / draws))


def estimate_lipschitz(problem, rng: CounterRng, draws: int = 1000) -> float:
    """Warm-up estimate of the root mean square per-sample Lipschitz constant."""
    total = 0.0
    for _ in range(draws):
        payload = problem._draw(rng)
        total += problem.lipschitz_factor(payload) ** 2
    return float(np.sqrt(total / draws))
