"""Nonsmooth stochastic optimization on embedded manifolds.

Library surface: manifold kernels (:mod:`rionc.geometry`), stochastic
objectives (:mod:`rionc.oracles`), the two-point zeroth-order estimator
(:mod:`rionc.estimator`), the clipped online-to-nonconvex optimizer
(:mod:`rionc.optimizer`), stationarity metrics (:mod:`rionc.metrics`), and
the experiment harness (:mod:`rionc.harness`, CLI entry point ``rionc``).
"""

from .errors import (
    AntipodalError,
    CapabilityError,
    ConfigError,
    InfeasibleIterateError,
    ResourceError,
)
from .estimator import ZoConfig, zo_gradient
from .geometry import (
    ManifoldPoint,
    Sphere,
    Stiefel,
    TangentVector,
    clip_to_ball,
    dist,
    exp_map,
    log_map,
    parallel_transport,
    project_tangent,
    random_point,
    retract,
    sample_unit_tangent,
)
from .metrics import (
    ProxyReport,
    TransportChain,
    chain_transport,
    goldstein_proxy,
    holonomy_defect,
    rate_slope,
)
from .optimizer import (
    FirstOrder,
    RunResult,
    Schedule,
    TracePolicy,
    TransportMode,
    ZerothOrder,
    plan_schedule,
    run,
    schedule_from_epochs,
    step_parallel_transport,
    step_projection,
)
from .oracles import (
    OracleStats,
    QuadraticProblem,
    SampleIndex,
    SparsePcaProblem,
    ZeroProblem,
    draw_sample,
    full_rgrad,
    generate_covariance,
    load_covariance,
    planted_covariance,
    save_covariance,
    stochastic_rgrad,
    stochastic_value,
)
from .rng import CounterRng

__version__ = "0.1.0"
