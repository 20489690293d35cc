"""Seeded experiment execution and record emission.

Record layout per run: ``<stem>.csv`` with one row per epoch
(``epoch,proxy,value_queries,grad_queries,wallclock_ms``, query counts
cumulative, floats at 17 significant digits) plus ``<stem>.meta.json``
carrying the config hash, schedule echo, final point, and query totals.
Files are written atomically (temp file + rename), so an interrupted run
never leaves a partial record at the final path.

With ``deterministic_output = true`` (the default) the wallclock column is
suppressed to 0 so that a (config, seed) pair fully determines every emitted
byte; measured timings still go to the process log and the in-memory result.
"""

from __future__ import annotations

import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ResourceError
from ..estimator import ZoConfig, zo_gradient
from ..geometry import ManifoldPoint, Sphere, random_point
from ..metrics import rate_slope
from ..optimizer import (
    FirstOrder,
    RunResult,
    Schedule,
    TracePolicy,
    TransportMode,
    ZerothOrder,
    plan_schedule,
    run,
    schedule_from_epochs,
)
from ..oracles import (
    SparsePcaProblem,
    draw_sample,
    estimate_grad_bound,
    estimate_lipschitz,
    generate_covariance,
    load_covariance,
    stochastic_rgrad,
)
from ..rng import CounterRng
from .config import RunConfig, parse_config

FULL_TRACE_LIMIT = 10**6
WARMUP_DRAWS = 1000

# rng stream labels hung off the run seed
_STREAM_RUN = 0
_STREAM_WARMUP_G = 1
_STREAM_WARMUP_L = 2
_STREAM_X0 = 3


def build_problem(cfg: RunConfig) -> SparsePcaProblem:
    if cfg.problem_source == "file":
        a = load_covariance(cfg.matrix_file)
        if a.shape[0] != cfg.n:
            raise ConfigError(
                f"matrix file dimension {a.shape[0]} != manifold dimension {cfg.n}"
            )
    else:
        a = generate_covariance(cfg.n, seed=cfg.spectrum_seed, spectrum=cfg.spectrum)
    return SparsePcaProblem.from_covariance(a, mu=cfg.mu)


def _grad_fn(problem, grad_source):
    if isinstance(grad_source, FirstOrder):
        def fn(x, rng):
            return stochastic_rgrad(problem, x, draw_sample(problem, rng))
    else:
        def fn(x, rng):
            return zo_gradient(problem, x, grad_source.config, rng)
    return fn


def execute_run(cfg: RunConfig, seed: int | None = None) -> RunResult:
    """Build problem, schedule, and initial point from a config and run."""
    if seed is None:
        seed = cfg.seed
    if cfg.trace_policy == "full":
        budget = cfg.n_rounds if cfg.n_rounds else cfg.epochs * cfg.epoch_len
        if budget > FULL_TRACE_LIMIT:
            raise ResourceError(
                f"full traces refused for {budget} > {FULL_TRACE_LIMIT} iterations"
            )

    manifold = Sphere(cfg.n)
    problem = build_problem(cfg)
    root = CounterRng(seed)
    x0 = random_point(manifold, root.spawn(_STREAM_X0))

    if cfg.grad_source == "zeroth_order":
        grad_source = ZerothOrder(ZoConfig.for_manifold(manifold, cfg.zo_radius))
    else:
        grad_source = FirstOrder()

    delta = cfg.delta
    if cfg.target_epsilon is not None:
        lipschitz = cfg.lipschitz
        if lipschitz is None:
            lipschitz = estimate_lipschitz(problem, root.spawn(_STREAM_WARMUP_L), WARMUP_DRAWS)
        # curvature constant 1 on the unit sphere
        delta = min(delta, cfg.target_epsilon / (6.0 * lipschitz))

    warmup_bound = None
    grad_bound = cfg.grad_bound
    if grad_bound is None:
        warmup_bound = estimate_grad_bound(
            _grad_fn(problem, grad_source), x0, root.spawn(_STREAM_WARMUP_G), WARMUP_DRAWS
        )
        grad_bound = warmup_bound

    if cfg.n_rounds is not None:
        schedule = plan_schedule(cfg.n_rounds, delta, grad_bound)
    else:
        schedule = schedule_from_epochs(cfg.epochs, cfg.epoch_len, delta, grad_bound)

    result = run(
        problem,
        manifold,
        TransportMode(cfg.mode),
        grad_source,
        schedule,
        x0,
        root.spawn(_STREAM_RUN),
        TracePolicy(cfg.trace_policy),
        seed=seed,
    )
    result.warmup_grad_bound = warmup_bound
    return result


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_record_csv(result: RunResult, deterministic: bool) -> str:
    lines = ["epoch,proxy,value_queries,grad_queries,wallclock_ms"]
    for k in range(result.schedule.epochs):
        ms = 0.0 if deterministic else result.epoch_wallclock_s[k] * 1000.0
        lines.append(
            f"{k + 1},{_fmt(result.epoch_proxies[k])},{int(result.epoch_value_queries[k])},"
            f"{int(result.epoch_grad_queries[k])},{_fmt(ms)}"
        )
    return "\n".join(lines) + "\n"


def run_record_meta(cfg: RunConfig, result: RunResult, deterministic: bool) -> str:
    sched = result.schedule
    meta = {
        "config_hash": cfg.config_hash(),
        "seed": result.seed,
        "mode": result.mode.value,
        "grad_source": cfg.grad_source,
        "manifold": {"kind": cfg.manifold_kind, "n": cfg.n},
        "schedule": {
            "total_rounds": sched.total_rounds,
            "delta": sched.delta,
            "epoch_len": sched.epoch_len,
            "epochs": sched.epochs,
            "clip_radius": sched.clip_radius,
            "step_size": sched.step_size,
            "grad_bound": sched.grad_bound,
        },
        "warmup_grad_bound": result.warmup_grad_bound,
        "output_epoch": result.output_epoch,
        "output_point": [_fmt(v) for v in np.ravel(result.output_point.coords)],
        "stats": {
            "value_queries": result.stats.value_queries,
            "gradient_queries": result.stats.gradient_queries,
            "samples_drawn": result.stats.samples_drawn,
        },
        "max_action_norm": result.max_action_norm,
        "max_feasibility_residual": result.max_feasibility_residual,
        "wallclock_ms": 0.0 if deterministic else result.wallclock_s * 1000.0,
        "deterministic_output": deterministic,
    }
    return json.dumps(meta, sort_keys=True, indent=2) + "\n"


def record_stem(cfg: RunConfig, seed: int) -> str:
    return f"run_{cfg.mode}_{cfg.grad_source}_seed{seed}"


def write_run_record(cfg: RunConfig, result: RunResult, out_dir: Path) -> Path:
    stem = record_stem(cfg, result.seed)
    csv_path = out_dir / f"{stem}.csv"
    _atomic_write(csv_path, run_record_csv(result, cfg.deterministic_output))
    _atomic_write(
        out_dir / f"{stem}.meta.json", run_record_meta(cfg, result, cfg.deterministic_output)
    )
    return csv_path


def cmd_run(config_path, seed: int | None = None) -> int:
    """CLI run driver: execute one configured run and write its record."""
    cfg = parse_config(config_path)
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    result = execute_run(cfg)
    csv_path = write_run_record(cfg, result, Path(cfg.output_dir))
    proxies = result.epoch_proxies
    final = proxies[-1] if len(proxies) else float("nan")
    print(f"wrote {csv_path}")
    print(
        f"epochs={result.schedule.epochs} epoch_len={result.schedule.epoch_len} "
        f"final_proxy={final:.6g} wallclock={result.wallclock_s:.2f}s",
        file=sys.stderr,
    )
    return 0


def final_quartile_mean(proxies: np.ndarray) -> float:
    """Mean proxy over the final quarter of epochs (at least one epoch)."""
    k = len(proxies)
    q = max(1, k // 4)
    return float(np.mean(proxies[-q:]))


def _sweep_worker(args):
    cfg, n_rounds, seed = args
    run_cfg = cfg.with_overrides(
        n_rounds=n_rounds, epochs=None, epoch_len=None, seed=seed, trace_policy="per_epoch"
    )
    result = execute_run(run_cfg)
    return n_rounds, seed, final_quartile_mean(result.epoch_proxies)


def _max_workers(n_tasks: int) -> int:
    cap = os.environ.get("RIONC_THREADS")
    workers = min(n_tasks, os.cpu_count() or 1)
    if cap:
        workers = max(1, min(workers, int(cap)))
    return workers


def cmd_sweep(config_path, n_list: list[int], seeds: int = 3) -> int:
    """Budget sweep: final-quartile mean proxy per (N, seed), the per-N means,
    and the fitted log-log slope appended to the summary."""
    cfg = parse_config(config_path)
    if len(set(n_list)) < 3:
        raise ConfigError("sweep needs at least 3 distinct budget values")
    if seeds < 1:
        raise ConfigError("sweep needs at least 1 seed per budget")
    tasks = [(cfg, n, cfg.seed + i) for n in sorted(set(n_list)) for i in range(seeds)]
    workers = _max_workers(len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = sorted(pool.map(_sweep_worker, tasks))
    else:
        rows = sorted(_sweep_worker(t) for t in tasks)

    out_dir = Path(cfg.output_dir)
    lines = ["n_rounds,seed,proxy"]
    for n_rounds, seed, proxy in rows:
        lines.append(f"{n_rounds},{seed},{_fmt(proxy)}")
    _atomic_write(out_dir / "sweep.csv", "\n".join(lines) + "\n")

    means = []
    for n_rounds in sorted(set(r[0] for r in rows)):
        vals = [proxy for n, _, proxy in rows if n == n_rounds]
        means.append((n_rounds, float(np.mean(vals))))
    slope = rate_slope(means)
    summary = ["n_rounds,mean_proxy"]
    summary += [f"{n},{_fmt(m)}" for n, m in means]
    summary.append(f"slope,{_fmt(slope)}")
    _atomic_write(out_dir / "sweep_summary.csv", "\n".join(summary) + "\n")
    print(f"wrote {out_dir / 'sweep.csv'}")
    print(f"slope={slope:.4f}")
    return 0
