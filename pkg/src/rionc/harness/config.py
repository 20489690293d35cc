"""Run configuration files: flat key = value text with section headers.

The format is INI-style on purpose: every implementation language can parse
it without pulling in a structured-format dependency. Unknown sections or
keys are hard errors so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError

_SCHEMA = {
    "manifold": {"kind", "n", "p"},
    "problem": {"source", "mu", "spectrum", "spectrum_seed", "matrix_file"},
    "algorithm": {
        "mode",
        "grad_source",
        "delta",
        "n_rounds",
        "epochs",
        "epoch_len",
        "grad_bound",
        "zo_radius",
        "target_epsilon",
        "lipschitz",
    },
    "run": {"seed", "output_dir", "trace_policy", "deterministic_output"},
}

_MODES = {"parallel_transport", "projection"}
_GRAD_SOURCES = {"first_order", "zeroth_order"}
_TRACE_POLICIES = {"full", "per_epoch", "final"}
_SPECTRA = {"harmonic", "flat", "planted"}


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully defaulted run configuration."""

    manifold_kind: str
    n: int
    p: int | None
    problem_source: str
    mu: float
    spectrum: str
    spectrum_seed: int
    matrix_file: str | None
    mode: str
    grad_source: str
    delta: float
    n_rounds: int | None
    epochs: int | None
    epoch_len: int | None
    grad_bound: float | None  # None means warm-up estimation
    zo_radius: float
    target_epsilon: float | None
    lipschitz: float | None  # None means warm-up estimation when needed
    seed: int
    output_dir: str
    trace_policy: str
    deterministic_output: bool

    def canonical(self) -> str:
        """Stable one-line-per-field rendering used for hashing."""
        parts = []
        for name in sorted(self.__dataclass_fields__):
            parts.append(f"{name}={getattr(self, name)!r}")
        return "\n".join(parts)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("ascii")).hexdigest()[:16]

    def with_overrides(self, **changes) -> "RunConfig":
        fields = {name: getattr(self, name) for name in self.__dataclass_fields__}
        fields.update(changes)
        return RunConfig(**fields)


def _get(section, key, default=None):
    if key in section:
        return section[key].strip()
    return default


def _parse_float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}")


def _parse_int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}")


def parse_config(path) -> RunConfig:
    """Parse and validate a config file; returns a fully defaulted RunConfig."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}")

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")

    man = parser["manifold"] if parser.has_section("manifold") else {}
    prob = parser["problem"] if parser.has_section("problem") else {}
    alg = parser["algorithm"] if parser.has_section("algorithm") else {}
    run_sec = parser["run"] if parser.has_section("run") else {}

    # manifold
    kind = _get(man, "kind", "sphere").lower()
    if kind not in {"sphere", "stiefel"}:
        raise ConfigError(f"manifold.kind must be sphere or stiefel, got {kind!r}")
    n = _parse_int(_get(man, "n", "50"), "manifold.n")
    if n < 2:
        raise ConfigError("manifold.n must be >= 2")
    p = None
    if kind == "stiefel":
        p = _parse_int(_get(man, "p", "1"), "manifold.p")
        if not (1 <= p <= n):
            raise ConfigError("manifold.p must satisfy 1 <= p <= n")
    elif "p" in man:
        raise ConfigError("manifold.p is only valid for the Stiefel manifold")

    # problem
    source = _get(prob, "source", "generate").lower()
    if source not in {"generate", "file"}:
        raise ConfigError(f"problem.source must be generate or file, got {source!r}")
    mu = _parse_float(_get(prob, "mu", "0.1"), "problem.mu")
    if mu < 0:
        raise ConfigError("problem.mu must be nonnegative")
    spectrum = _get(prob, "spectrum", "harmonic").lower()
    if spectrum not in _SPECTRA:
        raise ConfigError(f"problem.spectrum must be one of {sorted(_SPECTRA)}")
    spectrum_seed = _parse_int(_get(prob, "spectrum_seed", "7"), "problem.spectrum_seed")
    matrix_file = _get(prob, "matrix_file")
    if source == "file" and not matrix_file:
        raise ConfigError("problem.matrix_file is required when problem.source = file")

    # algorithm
    mode = _get(alg, "mode", "parallel_transport").lower()
    if mode not in _MODES:
        raise ConfigError(f"algorithm.mode must be one of {sorted(_MODES)}")
    grad_source = _get(alg, "grad_source", "first_order").lower()
    if grad_source not in _GRAD_SOURCES:
        raise ConfigError(f"algorithm.grad_source must be one of {sorted(_GRAD_SOURCES)}")
    delta = _parse_float(_get(alg, "delta", "0.1"), "algorithm.delta")
    if not (0.0 < delta <= 1.0):
        raise ConfigError(f"algorithm.delta must lie in (0, 1], got {delta}")

    n_rounds = epochs = epoch_len = None
    if "n_rounds" in alg:
        n_rounds = _parse_int(alg["n_rounds"], "algorithm.n_rounds")
        if "epochs" in alg or "epoch_len" in alg:
            raise ConfigError("give either algorithm.n_rounds or epochs/epoch_len, not both")
    else:
        if "epochs" not in alg or "epoch_len" not in alg:
            raise ConfigError("algorithm needs n_rounds, or both epochs and epoch_len")
        epochs = _parse_int(alg["epochs"], "algorithm.epochs")
        epoch_len = _parse_int(alg["epoch_len"], "algorithm.epoch_len")

    grad_bound_raw = _get(alg, "grad_bound", "warmup").lower()
    grad_bound = None
    if grad_bound_raw != "warmup":
        grad_bound = _parse_float(grad_bound_raw, "algorithm.grad_bound")
        if grad_bound <= 0:
            raise ConfigError("algorithm.grad_bound must be positive")

    zo_radius = delta
    if "zo_radius" in alg:
        zo_radius = _parse_float(alg["zo_radius"], "algorithm.zo_radius")
        if not (0.0 < zo_radius <= 1.0):
            raise ConfigError("algorithm.zo_radius must lie in (0, 1]")

    target_epsilon = None
    if "target_epsilon" in alg and alg["target_epsilon"].strip():
        target_epsilon = _parse_float(alg["target_epsilon"], "algorithm.target_epsilon")
        if target_epsilon <= 0:
            raise ConfigError("algorithm.target_epsilon must be positive")
    lipschitz = None
    if "lipschitz" in alg and alg["lipschitz"].strip().lower() != "warmup":
        lipschitz = _parse_float(alg["lipschitz"], "algorithm.lipschitz")
        if lipschitz <= 0:
            raise ConfigError("algorithm.lipschitz must be positive")

    # run
    seed = _parse_int(_get(run_sec, "seed", "0"), "run.seed")
    output_dir = _get(run_sec, "output_dir", "out")
    trace_policy = _get(run_sec, "trace_policy", "per_epoch").lower()
    if trace_policy not in _TRACE_POLICIES:
        raise ConfigError(f"run.trace_policy must be one of {sorted(_TRACE_POLICIES)}")
    det_raw = _get(run_sec, "deterministic_output", "true").lower()
    if det_raw not in {"true", "false"}:
        raise ConfigError("run.deterministic_output must be true or false")

    # capability cross-checks
    if kind == "stiefel" and mode == "parallel_transport":
        raise ConfigError("parallel transport is not available on the Stiefel manifold")
    if kind == "stiefel" and grad_source == "zeroth_order":
        raise ConfigError("the zeroth-order estimator needs the exponential map (sphere only)")
    if kind == "stiefel":
        raise ConfigError(
            "the sparse PCA objective is defined on the sphere; "
            "Stiefel runs are available through the library API"
        )

    return RunConfig(
        manifold_kind=kind,
        n=n,
        p=p,
        problem_source=source,
        mu=mu,
        spectrum=spectrum,
        spectrum_seed=spectrum_seed,
        matrix_file=matrix_file,
        mode=mode,
        grad_source=grad_source,
        delta=delta,
        n_rounds=n_rounds,
        epochs=epochs,
        epoch_len=epoch_len,
        grad_bound=grad_bound,
        zo_radius=zo_radius,
        target_epsilon=target_epsilon,
        lipschitz=lipschitz,
        seed=seed,
        output_dir=output_dir,
        trace_policy=trace_policy,
        deterministic_output=det_raw == "true",
    )
