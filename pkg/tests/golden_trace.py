"""Canonical tiny run used for the bit-for-bit trace regression.

Run ``python tests/golden_trace.py`` to (re)write the frozen reference after
an intentional algorithm change; the test compares serialized output against
``tests/golden/trace_k1_t8.json`` character by character.
"""

import json
from pathlib import Path

import numpy as np

from rionc.geometry import ManifoldPoint, Sphere
from rionc.optimizer import FirstOrder, TracePolicy, TransportMode, run, schedule_from_epochs
from rionc.oracles import SparsePcaProblem, generate_covariance
from rionc.rng import CounterRng

GOLDEN_PATH = Path(__file__).parent / "golden" / "trace_k1_t8.json"


def golden_run():
    manifold = Sphere(5)
    problem = SparsePcaProblem.from_covariance(generate_covariance(5, seed=2), mu=0.2)
    schedule = schedule_from_epochs(epochs=1, epoch_len=8, delta=0.5, grad_bound=1.0)
    # deterministic start: normalized draw from a pinned stream
    raw = CounterRng(1234).spawn(3).standard_normal(5)
    x0 = ManifoldPoint(manifold, raw / np.linalg.norm(raw))
    return run(
        problem,
        manifold,
        TransportMode.PARALLEL_TRANSPORT,
        FirstOrder(),
        schedule,
        x0,
        CounterRng(1234).spawn(0),
        TracePolicy.FULL,
        seed=1234,
    )


def _grid(array):
    return [[format(v, ".17g") for v in np.ravel(row)] for row in array]


def serialize(result) -> str:
    epoch = result.trace[0]
    doc = {
        "schedule": {
            "epochs": result.schedule.epochs,
            "epoch_len": result.schedule.epoch_len,
            "delta": format(result.schedule.delta, ".17g"),
            "clip_radius": format(result.schedule.clip_radius, ".17g"),
            "step_size": format(result.schedule.step_size, ".17g"),
            "grad_bound": format(result.schedule.grad_bound, ".17g"),
        },
        "points": _grid(epoch.points),
        "probes": _grid(epoch.probes),
        "actions": _grid(epoch.actions),
        "probe_fractions": [format(v, ".17g") for v in epoch.probe_fractions],
        "gradients": _grid(epoch.gradients),
        "representative_index": epoch.representative_index,
        "output_epoch": result.output_epoch,
        "output_point": [format(v, ".17g") for v in result.output_point.coords],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


if __name__ == "__main__":
    GOLDEN_PATH.parent.mkdir(parents=True, exist_ok=True)
    GOLDEN_PATH.write_text(serialize(golden_run()), encoding="ascii")
    print(f"wrote {GOLDEN_PATH}")
